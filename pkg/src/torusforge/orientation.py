"""Globally consistent triangle winding by parity propagation.

Sidedness is fixed by choosing a vertex order on one seed triangle and
walking the triangle adjacency: two triangles sharing an edge must
traverse it in opposite directions. The rule never consults embedding
coordinates, so it works identically in any dimension. A contradiction
during propagation means the assembled surface is non-orientable, which
for a torus pipeline always indicates an upstream meshing defect.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import OrientationConflictError
from .mesher import SurfaceMesh

log = logging.getLogger("torusforge.orientation")


@dataclass
class OrientedMesh:
    mesh: SurfaceMesh
    seed_triangle: int
    orientation_parity: np.ndarray   # 1 where input winding was flipped


def _directed_edges(tri):
    a, b, c = tri
    return ((a, b), (b, c), (c, a))


def orient_mesh(mesh, seed_triangle=0):
    """Propagate the seed triangle's winding across the whole mesh.

    Returns an OrientedMesh whose triangles traverse every shared edge
    in opposite directions. Raises OrientationConflictError carrying the
    offending triangle cycle when the surface is non-orientable.
    """
    tris = [tuple(int(v) for v in t) for t in mesh.triangles]
    T = len(tris)
    if T == 0:
        raise OrientationConflictError("cannot orient an empty mesh", [])
    seed_triangle = int(seed_triangle)
    if not 0 <= seed_triangle < T:
        raise OrientationConflictError(
            f"seed triangle {seed_triangle} out of range", [])
    by_edge = {}
    for t, tri in enumerate(tris):
        for a, b in _directed_edges(tri):
            key = (a, b) if a < b else (b, a)
            by_edge.setdefault(key, []).append(t)
    parity = np.full(T, -1, dtype=np.int64)
    parent = np.full(T, -1, dtype=np.int64)
    parity[seed_triangle] = 0
    queue = [seed_triangle]
    visited = 1
    for t in queue:
        dirs = set(_directed_edges(tris[t]))
        if parity[t]:
            dirs = {(b, a) for a, b in dirs}
        for a, b in dirs:
            key = (a, b) if a < b else (b, a)
            for other in by_edge[key]:
                if other == t:
                    continue
                other_dirs = _directed_edges(tris[other])
                # consistent iff the neighbor walks this edge reversed
                want = 1 if (a, b) in other_dirs else 0
                if parity[other] == -1:
                    parity[other] = want
                    parent[other] = t
                    queue.append(other)
                    visited += 1
                elif parity[other] != want:
                    cycle = [other]
                    for end in (t, other):
                        node, chain = end, []
                        while node != -1:
                            chain.append(int(node))
                            node = parent[node]
                        cycle.extend(chain)
                    raise OrientationConflictError(
                        "contradictory winding parity: mesh is "
                        "non-orientable along the reported triangle cycle",
                        cycle)
    if visited != T:
        raise OrientationConflictError(
            f"triangle adjacency is disconnected: reached {visited} of {T}",
            [])
    out = np.array(tris, dtype=np.int64)
    flip = parity == 1
    out[flip] = out[flip][:, [0, 2, 1]]
    log.info("oriented %d triangles from seed %d (%d flips)",
             T, seed_triangle, int(np.sum(flip)))
    oriented = SurfaceMesh(mesh.cloud, out, dict(mesh.report))
    return OrientedMesh(oriented, seed_triangle, parity.astype(np.int64))
