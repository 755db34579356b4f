"""Patch-based torus meshing driven by the solved one-forms.

Patches are breadth-first balls in the neighbor graph. Integrating the
one-forms along the BFS tree gives each patch a local (u, v) chart;
inside a disk-topology patch every graph edge reproduces its one-form
increment, while a patch that wraps a homology generator shows a
mismatch of about one period on some edge, which triggers shrinking.
Each chart is Delaunay-triangulated, only triangles fully inside the
patch core are kept, and overlapping patch triangulations are merged
with a deterministic most-interior-wins rule until the surface closes.
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Delaunay, QhullError
from scipy.sparse.csgraph import dijkstra

from .errors import ConfigError, MeshValidationError, PatchCollapseError

log = logging.getLogger("torusforge.mesher")

_DEGENERATE_AREA = 1e-12
_WRAP_THRESHOLD = 0.5
_MIN_RIM = 2


@dataclass
class Patch:
    seed: int
    vertices: np.ndarray       # global indices, BFS order
    depth: np.ndarray          # BFS depth per patch vertex
    uv: np.ndarray             # (P, 2) chart coordinates, seed at origin
    core_depth: int
    rim_depth: int
    local: dict = field(default_factory=dict)  # global -> patch index
    metric: tuple = (1.0, 1.0)
    inner_radius: float = np.inf

    def core_mask(self):
        return self.depth <= self.core_depth

    def chart_points(self):
        """Chart coordinates rescaled to the shared arclength metric, so
        Delaunay predicates agree across patches."""
        return self.uv * np.asarray(self.metric)


@dataclass
class SurfaceMesh:
    cloud: object
    triangles: np.ndarray      # (T, 3) vertex indices with winding
    report: dict


def _edge_increment(forms_component, graph, a, b):
    e = graph.edge_index[(a, b) if a < b else (b, a)]
    val = forms_component[e]
    return val if a < b else -val, e


def _bfs_chart(graph, forms, seed, rim_depth):
    """BFS ball with uv integrated along tree edges from the seed."""
    order = [seed]
    depth = {seed: 0}
    uv = {seed: (0.0, 0.0)}
    for u in order:
        if depth[u] == rim_depth:
            continue
        for nb in graph.adjacency[u]:
            nb = int(nb)
            if nb in depth:
                continue
            depth[nb] = depth[u] + 1
            du, _ = _edge_increment(forms.du, graph, u, nb)
            dv, _ = _edge_increment(forms.dv, graph, u, nb)
            uv[nb] = (uv[u][0] + du, uv[u][1] + dv)
            order.append(nb)
    verts = np.array(order, dtype=np.int64)
    dep = np.array([depth[v] for v in order], dtype=np.int64)
    chart = np.array([uv[v] for v in order], dtype=np.float64)
    return verts, dep, chart


def _wraparound(graph, forms, verts, chart):
    """True if any intra-patch edge disagrees with its one-form value by
    half a period or more (the chart is not single-valued)."""
    n = graph.vertex_count
    upos = np.full(n, np.nan)
    vpos = np.full(n, np.nan)
    upos[verts] = chart[:, 0]
    vpos[verts] = chart[:, 1]
    ei, ej = graph.edges[:, 0], graph.edges[:, 1]
    inside = ~(np.isnan(upos[ei]) | np.isnan(upos[ej]))
    mis_u = upos[ej[inside]] - upos[ei[inside]] - forms.du[inside]
    mis_v = vpos[ej[inside]] - vpos[ei[inside]] - forms.dv[inside]
    bad = (np.abs(mis_u) >= _WRAP_THRESHOLD) | (np.abs(mis_v) >= _WRAP_THRESHOLD)
    return bool(np.any(bad))


def grow_patch(graph, forms, seed, rim_depth, core_margin=2, metric=(1.0, 1.0)):
    """Grow a disk-topology patch around `seed`.

    Shrinks rim_depth until the chart is single-valued; raises
    PatchCollapseError when the minimum depth still wraps a generator,
    which indicates the sampling is too sparse for the requested k.
    """
    seed = int(seed)
    rim = int(rim_depth)
    if rim < _MIN_RIM:
        raise ConfigError(f"rim_depth must be >= {_MIN_RIM}")
    while True:
        verts, dep, chart = _bfs_chart(graph, forms, seed, rim)
        if not _wraparound(graph, forms, verts, chart):
            break
        if rim <= _MIN_RIM:
            raise PatchCollapseError(
                f"patch at seed {seed} wraps a generator even at "
                f"rim_depth {_MIN_RIM}; sampling too sparse")
        rim -= 1
        log.debug("patch %d wraps, shrinking rim to %d", seed, rim)
    core = max(0, rim - core_margin)
    local = {int(v): i for i, v in enumerate(verts)}
    scaled = chart * np.asarray(metric)
    on_rim = dep == rim
    inner = (float(np.min(np.hypot(scaled[on_rim, 0], scaled[on_rim, 1])))
             if np.any(on_rim) else np.inf)
    return Patch(seed, verts, dep, chart, core, rim, local,
                 tuple(metric), inner)


def _circumcircle(pts, a, b, c):
    ax, ay = pts[a]
    bx, by = pts[b]
    cx, cy = pts[c]
    d = 2.0 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    if d == 0.0:
        return np.nan, np.nan, np.inf
    aa, bb, cc = ax * ax + ay * ay, bx * bx + by * by, cx * cx + cy * cy
    ux = (aa * (by - cy) + bb * (cy - ay) + cc * (ay - by)) / d
    uy = (aa * (cx - bx) + bb * (ax - cx) + cc * (bx - ax)) / d
    return ux, uy, float(np.hypot(ux - ax, uy - ay))


def triangulate_patch(patch):
    """Delaunay triangles of the patch chart whose vertices all lie in
    the core, as (global triple with chart winding, badness) pairs.

    A triangle is kept only if its circumdisk fits inside the patch's
    rim-safe inner region: the patch then witnesses every point that
    could invalidate the empty-circumdisk property, so a kept triangle
    is Delaunay for the whole cloud and overlapping patches can never
    disagree. Badness is the triangle's maximum BFS depth: lower means
    more interior, used by the merge step to arbitrate duplicates.
    Returns an empty list when fewer than 3 core vertices exist or the
    chart is degenerate.
    """
    if int(np.sum(patch.core_mask())) < 3 or len(patch.vertices) < 3:
        return []
    pts = patch.chart_points()
    try:
        dela = Delaunay(pts)
    except QhullError:
        return []
    out = []
    uv = patch.uv
    for simplex in dela.simplices:
        a, b, c = (int(s) for s in simplex)
        if max(patch.depth[a], patch.depth[b], patch.depth[c]) > patch.core_depth:
            continue
        area2 = ((uv[b, 0] - uv[a, 0]) * (uv[c, 1] - uv[a, 1])
                 - (uv[c, 0] - uv[a, 0]) * (uv[b, 1] - uv[a, 1]))
        if abs(area2) / 2.0 < _DEGENERATE_AREA:
            continue
        if np.max(np.abs(uv[[a, b, c]].max(axis=0)
                         - uv[[a, b, c]].min(axis=0))) >= _WRAP_THRESHOLD:
            continue
        cx, cy, rad = _circumcircle(pts, a, b, c)
        if not np.hypot(cx, cy) + rad <= patch.inner_radius:
            continue
        if area2 < 0:
            b, c = c, b
        tri = (int(patch.vertices[a]), int(patch.vertices[b]),
               int(patch.vertices[c]))
        badness = int(max(patch.depth[a], patch.depth[b], patch.depth[c]))
        out.append((tri, badness))
    return out


def _edge_incidence(tris):
    """Map undirected edge -> list of triangle list-indexes."""
    inc = {}
    for t, (a, b, c) in enumerate(tris):
        for i, j in ((a, b), (b, c), (c, a)):
            key = (i, j) if i < j else (j, i)
            inc.setdefault(key, []).append(t)
    return inc


def _link_offenders(tris):
    """Vertices whose triangle fan is not a single closed cycle."""
    fans = {}
    for a, b, c in tris:
        fans.setdefault(a, []).append((b, c))
        fans.setdefault(b, []).append((c, a))
        fans.setdefault(c, []).append((a, b))
    bad = []
    for v, link_edges in fans.items():
        deg = {}
        for i, j in link_edges:
            deg[i] = deg.get(i, 0) + 1
            deg[j] = deg.get(j, 0) + 1
        if any(d != 2 for d in deg.values()) or len(link_edges) != len(deg):
            bad.append(v)
            continue
        adj = {}
        for i, j in link_edges:
            adj.setdefault(i, []).append(j)
            adj.setdefault(j, []).append(i)
        start = next(iter(adj))
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for nb in adj[u]:
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        if len(seen) != len(deg):
            bad.append(v)
    return sorted(bad)


def validate_mesh(triangles, rounds_used=0, strict=True, extra=None):
    """Closed-2-manifold + torus-topology report; raises on failure.

    Report keys: vertices, edges, faces, euler_characteristic,
    nonmanifold_edges, boundary_edges, rounds_used.
    """
    tris = [tuple(int(x) for x in t) for t in triangles]
    inc = _edge_incidence(tris)
    counts = np.array([len(v) for v in inc.values()], dtype=np.int64)
    nverts = len({v for t in tris for v in t})
    nedges = len(inc)
    nfaces = len(tris)
    boundary = int(np.sum(counts == 1)) if len(counts) else 0
    nonmanifold = int(np.sum(counts > 2)) if len(counts) else 0
    euler = nverts - nedges + nfaces
    report = {
        "vertices": nverts,
        "edges": nedges,
        "faces": nfaces,
        "euler_characteristic": euler,
        "nonmanifold_edges": nonmanifold,
        "boundary_edges": boundary,
        "rounds_used": int(rounds_used),
    }
    if extra:
        report.update(extra)
    problems = []
    if nfaces == 0:
        problems.append("empty mesh")
    if boundary:
        offenders = sorted(k for k, v in inc.items() if len(v) == 1)[:20]
        problems.append(f"{boundary} boundary edges, e.g. {offenders[:5]}")
        report["boundary_edge_list"] = [list(e) for e in offenders]
    if nonmanifold:
        offenders = sorted(k for k, v in inc.items() if len(v) > 2)[:20]
        problems.append(f"{nonmanifold} non-manifold edges, e.g. {offenders[:5]}")
        report["nonmanifold_edge_list"] = [list(e) for e in offenders]
    if not boundary and not nonmanifold and nfaces:
        bad_links = _link_offenders(tris)
        if bad_links:
            problems.append(f"link condition fails at vertices {bad_links[:10]}")
            report["link_offenders"] = bad_links[:50]
    if euler != 0:
        problems.append(f"Euler characteristic {euler}, expected 0")
    report["problems"] = problems
    if problems and strict:
        raise MeshValidationError("; ".join(problems), report)
    return report


def _hop_distance(graph, source):
    d = dijkstra(graph.adjacency_matrix(), indices=[source], unweighted=True)
    return d[0]


def _chart_metric(graph, forms):
    """Per-axis arclength scale of the chart, least squares over edges:
    len^2 ~ (su du)^2 + (sv dv)^2. Makes chart geometry near-isotropic
    and identical across patches."""
    design = np.stack([forms.du ** 2, forms.dv ** 2], axis=1)
    coef, *_ = np.linalg.lstsq(design, graph.lengths ** 2, rcond=None)
    if not np.all(np.isfinite(coef)) or np.any(coef <= 0):
        return (1.0, 1.0)
    return (float(np.sqrt(coef[0])), float(np.sqrt(coef[1])))


def merge_patches(graph, forms, cloud, seeds=None, core_depth=4,
                  rim_margin=2, max_rounds=None, rng_seed=0):
    """Cover the graph with patch triangulations and merge them into a
    validated torus mesh.

    Seeds come from the given sequence first, then greedy farthest-first
    among vertices that are not yet core-covered, then at endpoints of
    edges still missing a second triangle. When reseeding stops making
    progress the rim depth is escalated so larger patches can certify
    the wide sliver triangles that bridge local sampling gaps. Overlap
    conflicts keep the candidate with the smallest maximum BFS depth in
    its own patch (most-interior wins), tie-broken by discovery order.
    """
    V = graph.vertex_count
    rim_depth = core_depth + rim_margin
    metric = _chart_metric(graph, forms)
    rng = np.random.default_rng(rng_seed)
    seed_list = [int(s) for s in seeds] if seeds is not None else []
    if not seed_list:
        seed_list = [int(rng.integers(V))]
    best = {}            # sorted triple -> (badness, order, winding triple)
    core_cover = np.zeros(V, dtype=bool)
    agree_ref = {}       # edge id -> (u_diff, v_diff) from first covering patch
    agree_max = 0.0
    seed_dist = np.full(V, np.inf)
    used_seeds = []
    rounds = 0
    order_counter = 0
    expected = None
    rim_bump = 0
    prev_state = None
    while True:
        if rounds < len(seed_list):
            seed = seed_list[rounds]
        else:
            uncovered = np.nonzero(~core_cover)[0]
            if len(uncovered):
                cand = uncovered
            else:
                tris_now = [v[2] for v in best.values()]
                inc = _edge_incidence(tris_now)
                open_vs = sorted({v for e, ts in inc.items()
                                  if len(ts) == 1 for v in e})
                if not open_vs:
                    break
                cand = np.array(open_vs, dtype=np.int64)
            state = (len(best), int(core_cover.sum()), len(cand))
            if state == prev_state:
                rim_bump = min(rim_bump + 1, 6)
            else:
                rim_bump = 0
            prev_state = state
            far = seed_dist[cand]
            top = np.nonzero(far == far.max())[0]
            seed = int(cand[top[0]])
        patch = grow_patch(graph, forms, seed, rim_depth + rim_bump,
                           core_margin=rim_margin, metric=metric)
        used_seeds.append(seed)
        d = _hop_distance(graph, seed)
        seed_dist = np.minimum(seed_dist, d)
        for tri, badness in triangulate_patch(patch):
            key = tuple(sorted(tri))
            prev = best.get(key)
            if prev is None or badness < prev[0]:
                best[key] = (badness, order_counter, tri)
            order_counter += 1
        cmask = patch.core_mask()
        core_cover[patch.vertices[cmask]] = True
        # patch agreement over core-core graph edges
        core_set = {int(v): i for v, i, m in
                    zip(patch.vertices, range(len(patch.vertices)), cmask) if m}
        for gv, li in core_set.items():
            for nb in graph.adjacency[gv]:
                nb = int(nb)
                if nb <= gv or nb not in core_set:
                    continue
                e = graph.edge_index[(gv, nb)]
                du = patch.uv[core_set[nb], 0] - patch.uv[li, 0]
                dv = patch.uv[core_set[nb], 1] - patch.uv[li, 1]
                ref = agree_ref.get(e)
                if ref is None:
                    agree_ref[e] = (du, dv)
                else:
                    agree_max = max(agree_max, abs(du - ref[0]),
                                    abs(dv - ref[1]))
        rounds += 1
        if expected is None:
            core_size = max(1, int(np.sum(cmask)))
            expected = max(1, -(-V // core_size))
            if max_rounds is None:
                max_rounds = max(10, 10 * expected)
        if rounds >= len(seed_list):
            tris_now = [v[2] for v in best.values()]
            if np.all(core_cover) and tris_now:
                inc = _edge_incidence(tris_now)
                if all(len(ts) >= 2 for ts in inc.values()):
                    break
        if rounds >= max_rounds:
            log.warning("merge reached max_rounds=%d with open surface",
                        max_rounds)
            break
    # resolve any edge used by more than two triangles: drop worst
    tri_items = sorted(best.values(), key=lambda t: (t[0], t[1]))
    alive = {i: t for i, (b, o, t) in enumerate(tri_items)}
    badness_of = {i: (b, o) for i, (b, o, t) in enumerate(tri_items)}
    while True:
        inc = _edge_incidence([alive[i] for i in sorted(alive)])
        idx_map = dict(enumerate(sorted(alive)))
        over = {e: ts for e, ts in inc.items() if len(ts) > 2}
        if not over:
            break
        drop = set()
        for e, ts in over.items():
            ranked = sorted(ts, key=lambda t: (badness_of[idx_map[t]],
                                               alive[idx_map[t]]))
            for t in ranked[2:]:
                drop.add(idx_map[t])
        if not drop:
            break
        for i in drop:
            del alive[i]
    triangles = np.array([alive[i] for i in sorted(alive)], dtype=np.int64)
    extra = {"patch_agreement_max": float(agree_max)}
    report = validate_mesh(triangles, rounds_used=rounds, strict=True,
                           extra=extra)
    # a mesh edge that is also a graph edge must sit on one period sheet
    mis = []
    for key in _edge_incidence([tuple(t) for t in triangles]):
        e = graph.edge_index.get(key)
        if e is not None and (abs(forms.du[e]) >= _WRAP_THRESHOLD
                              or abs(forms.dv[e]) >= _WRAP_THRESHOLD):
            mis.append(key)
    if mis:
        raise MeshValidationError(
            f"{len(mis)} mesh edges span a period seam", report)
    log.info("mesh: %d faces, %d rounds, agreement %.2e",
             len(triangles), rounds, agree_max)
    return SurfaceMesh(cloud, triangles, report)


def export_mesh_json(path, mesh):
    """Native mesh artifact: D-dimensional points + oriented triangles."""
    payload = {
        "dim": int(mesh.cloud.dim),
        "provenance": mesh.cloud.provenance,
        "points": [[float(x) for x in p] for p in mesh.cloud.points],
        "triangles": [[int(v) for v in t] for t in mesh.triangles],
        "report": mesh.report,
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def load_mesh_json(path):
    from .samplers import PointCloud
    with open(path, "r", encoding="ascii") as fh:
        payload = json.load(fh)
    points = np.array(payload["points"], dtype=np.float64)
    cloud = PointCloud(points=points, dim=int(payload["dim"]),
                       provenance=payload.get("provenance", "external"))
    triangles = np.array(payload["triangles"], dtype=np.int64).reshape(-1, 3)
    return SurfaceMesh(cloud, triangles, payload.get("report", {}))
