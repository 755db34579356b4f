"""Linear down-projection of D-dimensional meshes to 3D and mesh export.

Projection keeps connectivity and winding untouched; only vertex
coordinates are mapped. Exports write OBJ (ASCII, universal) and binary
little-endian PLY (per-face RGB available). The sidedness color of a
face is the sign of its projected normal against a local outward
reference: the face centroid minus the mean of its vertices' one-ring
neighborhoods. On a surface without projection fold-over that sign is
constant; a flip marks self-intersection artifacts introduced by the
projection.
"""

import logging
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ProjectionError

log = logging.getLogger("torusforge.projection")

_RED = (220, 50, 47)
_BLUE = (38, 139, 210)


@dataclass
class Projection:
    kind: str                # coordinate_select | pca | custom_matrix
    spec: object = None      # index triple or (3, D) matrix

    @classmethod
    def coordinates(cls, indices=(0, 1, 2)):
        return cls("coordinate_select", tuple(int(i) for i in indices))

    @classmethod
    def pca(cls):
        return cls("pca")

    @classmethod
    def matrix(cls, mat):
        return cls("custom_matrix", np.asarray(mat, dtype=np.float64))


@dataclass
class ProjectedMesh:
    points: np.ndarray       # (N, 3)
    triangles: np.ndarray    # (T, 3)
    source_dim: int
    captured_variance: float = None


def _as_cloud_and_triangles(mesh):
    inner = getattr(mesh, "mesh", mesh)
    return inner.cloud, inner.triangles


def pca_axes(points):
    """Top-3 principal axes of a centered cloud, rows sign-normalized so
    each axis's largest-magnitude component is positive. Returns
    (3, D) matrix and captured variance fraction."""
    centered = points - points.mean(axis=0)
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    axes = vt[:3].copy()
    for row in axes:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    total = float(np.sum(svals ** 2))
    captured = float(np.sum(svals[:3] ** 2) / total) if total > 0 else 1.0
    return axes, captured


def coordinate_variance_fraction(points, indices):
    """Variance fraction captured by a coordinate triple (for comparing
    against the PCA projection)."""
    centered = points - points.mean(axis=0)
    total = float(np.sum(centered ** 2))
    if total == 0:
        return 1.0
    return float(np.sum(centered[:, list(indices)] ** 2) / total)


def project(mesh, proj):
    """Apply a projection to an oriented (or plain) mesh -> ProjectedMesh."""
    cloud, triangles = _as_cloud_and_triangles(mesh)
    pts = cloud.points
    D = pts.shape[1]
    captured = None
    if proj.kind == "coordinate_select":
        idx = proj.spec
        if len(idx) != 3 or len(set(idx)) != 3:
            raise ProjectionError(f"need 3 distinct coordinate indices, got {idx}")
        if any(not 0 <= i < D for i in idx):
            raise ProjectionError(f"coordinate index out of range for dim {D}: {idx}")
        out = pts[:, list(idx)].copy()
    elif proj.kind == "pca":
        axes, captured = pca_axes(pts)
        out = (pts - pts.mean(axis=0)) @ axes.T
    elif proj.kind == "custom_matrix":
        mat = np.asarray(proj.spec, dtype=np.float64)
        if mat.shape != (3, D):
            raise ProjectionError(f"projection matrix must be 3x{D}, got {mat.shape}")
        svals = np.linalg.svd(mat, compute_uv=False)
        if svals[-1] <= 1e-12 * svals[0]:
            raise ProjectionError("projection matrix is rank deficient")
        out = pts @ mat.T
    else:
        raise ProjectionError(f"unknown projection kind {proj.kind!r}")
    return ProjectedMesh(out, np.array(triangles, dtype=np.int64),
                         D, captured)


def _sidedness_colors(pmesh):
    """Per-face RGB: red/blue by the sign of the projected normal against
    the local outward reference direction."""
    pts = pmesh.points
    tris = pmesh.triangles
    nbrs = {}
    for a, b, c in tris:
        nbrs.setdefault(int(a), set()).update((int(b), int(c)))
        nbrs.setdefault(int(b), set()).update((int(a), int(c)))
        nbrs.setdefault(int(c), set()).update((int(a), int(b)))
    ring = {v: pts[sorted(ns)].mean(axis=0) for v, ns in nbrs.items()}
    colors = np.empty((len(tris), 3), dtype=np.uint8)
    for t, (a, b, c) in enumerate(tris):
        pa, pb, pc = pts[a], pts[b], pts[c]
        normal = np.cross(pb - pa, pc - pa)
        centroid = (pa + pb + pc) / 3.0
        ringmean = (ring[int(a)] + ring[int(b)] + ring[int(c)]) / 3.0
        side = float(np.dot(normal, centroid - ringmean))
        colors[t] = _RED if side >= 0 else _BLUE
    return colors


def export_mesh(pmesh, fmt, path, color_mode="none", layers=None):
    """Write a projected mesh as OBJ or binary PLY.

    color_mode 'sidedness' adds per-face RGB (PLY only; OBJ has no
    standard face colors and is written identically in both modes).
    `layers` is an optional list of (name, kind, vertex-id list) with
    kind 'l' (polyline, closed) or 'p' (points), emitted as OBJ groups.
    """
    if len(pmesh.triangles) == 0:
        raise ProjectionError("refusing to export an empty mesh")
    if color_mode not in ("none", "sidedness"):
        raise ProjectionError(f"unknown color mode {color_mode!r}")
    if fmt == "obj":
        _write_obj(pmesh, path, layers)
    elif fmt == "ply":
        colors = _sidedness_colors(pmesh) if color_mode == "sidedness" else None
        _write_ply(pmesh, path, colors)
    else:
        raise ProjectionError(f"unknown export format {fmt!r}")
    log.info("wrote %s (%s, %d faces)", path, fmt, len(pmesh.triangles))


def _write_obj(pmesh, path, layers=None):
    with open(path, "w", encoding="ascii") as fh:
        for p in pmesh.points:
            fh.write("v %.17g %.17g %.17g\n" % (p[0], p[1], p[2]))
        for a, b, c in pmesh.triangles:
            fh.write("f %d %d %d\n" % (a + 1, b + 1, c + 1))
        for name, kind, ids in layers or ():
            fh.write("g %s\n" % name)
            one_based = [int(i) + 1 for i in ids]
            if kind == "l":
                fh.write("l " + " ".join(str(i) for i in one_based
                                         + one_based[:1]) + "\n")
            elif kind == "p":
                fh.write("p " + " ".join(str(i) for i in one_based) + "\n")
            else:
                raise ProjectionError(f"unknown layer kind {kind!r}")


def read_obj(path):
    """Read back vertices and faces written by _write_obj (subset of OBJ)."""
    pts, tris = [], []
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                pts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) - 1 for tok in parts[1:]]
                if len(idx) != 3:
                    raise ProjectionError("only triangle faces supported")
                tris.append(idx)
    return (np.array(pts, dtype=np.float64),
            np.array(tris, dtype=np.int64).reshape(-1, 3))


def _write_ply(pmesh, path, colors=None):
    n, t = len(pmesh.points), len(pmesh.triangles)
    header = [
        "ply",
        "format binary_little_endian 1.0",
        f"element vertex {n}",
        "property double x",
        "property double y",
        "property double z",
        f"element face {t}",
        "property list uchar int vertex_indices",
    ]
    if colors is not None:
        header += ["property uchar red", "property uchar green",
                   "property uchar blue"]
    header.append("end_header")
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        fh.write(pmesh.points.astype("<f8").tobytes(order="C"))
        for i, (a, b, c) in enumerate(pmesh.triangles):
            fh.write(struct.pack("<B3i", 3, int(a), int(b), int(c)))
            if colors is not None:
                fh.write(struct.pack("<3B", *colors[i]))


def read_ply(path):
    """Read back the binary PLY subset written by _write_ply.

    Returns (points, triangles, colors-or-None).
    """
    with open(path, "rb") as fh:
        data = fh.read()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply") or end < 0:
        raise ProjectionError("not a PLY file")
    header = data[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in header:
        raise ProjectionError("only binary little-endian PLY supported")
    nverts = ntris = 0
    has_color = False
    for line in header:
        parts = line.split()
        if parts[:2] == ["element", "vertex"]:
            nverts = int(parts[2])
        elif parts[:2] == ["element", "face"]:
            ntris = int(parts[2])
        elif parts == ["property", "uchar", "red"]:
            has_color = True
    body = data[end + len(b"end_header\n"):]
    pts = np.frombuffer(body, dtype="<f8", count=3 * nverts).reshape(-1, 3)
    off = nverts * 24
    tris = np.empty((ntris, 3), dtype=np.int64)
    colors = np.empty((ntris, 3), dtype=np.uint8) if has_color else None
    stride = 13 + (3 if has_color else 0)
    for i in range(ntris):
        rec = body[off + i * stride: off + (i + 1) * stride]
        cnt = rec[0]
        if cnt != 3:
            raise ProjectionError("only triangle faces supported")
        tris[i] = struct.unpack("<3i", rec[1:13])
        if has_color:
            colors[i] = struct.unpack("<3B", rec[13:16])
    return pts.copy(), tris, colors
