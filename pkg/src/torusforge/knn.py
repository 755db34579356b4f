"""Exact k-nearest-neighbor graph construction with union symmetrization."""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import ConfigError, DisconnectedGraphError

log = logging.getLogger("torusforge.knn")


@dataclass
class NeighborGraph:
    """Undirected weighted graph: edges (i, j) with i < j and Euclidean
    lengths measured in the native embedding space."""

    vertex_count: int
    edges: np.ndarray          # (E, 2) int64, i < j, lexicographically sorted
    lengths: np.ndarray        # (E,) float64
    k: int = 0
    adjacency: list = field(default_factory=list)   # per-vertex sorted arrays
    edge_index: dict = field(default_factory=dict)  # (i, j) -> edge id

    @classmethod
    def from_edges(cls, vertex_count, edges, lengths, k=0):
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        lengths = np.asarray(lengths, dtype=np.float64)
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ConfigError("self-loop edge")
        edges = np.sort(edges, axis=1)
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        edges = edges[order]
        lengths = lengths[order]
        if len(np.unique(edges, axis=0)) != len(edges):
            raise ConfigError("parallel edges")
        if np.any(lengths <= 0):
            raise ConfigError("non-positive edge length")
        adjacency = [[] for _ in range(vertex_count)]
        for i, j in edges:
            adjacency[i].append(j)
            adjacency[j].append(i)
        adjacency = [np.array(sorted(a), dtype=np.int64) for a in adjacency]
        edge_index = {(int(i), int(j)): e for e, (i, j) in enumerate(edges)}
        return cls(vertex_count, edges, lengths, k, adjacency, edge_index)

    @property
    def edge_count(self):
        return len(self.edges)

    def adjacency_matrix(self):
        i, j = self.edges[:, 0], self.edges[:, 1]
        n = self.vertex_count
        return coo_matrix(
            (np.concatenate([self.lengths, self.lengths]),
             (np.concatenate([i, j]), np.concatenate([j, i]))),
            shape=(n, n)).tocsr()

    def degree(self):
        return np.array([len(a) for a in self.adjacency], dtype=np.int64)


def _knn_pairs(points, k):
    """Directed neighbor lists, equal to brute force under the
    (distance, index) tie-break; kd-tree accelerated with a safety margin
    that re-queries when a distance tie straddles the candidate window."""
    n = len(points)
    tree = cKDTree(points)
    pad = min(n, k + 9)
    while True:
        _, idx = tree.query(points, k=pad)
        idx = idx.reshape(n, pad)
        sel = idx != np.arange(n)[:, None]
        cand = idx[sel].reshape(n, pad - 1)
        diff = points[:, None, :] - points[cand]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        # lexicographic (distance, index): stable sort by index, then distance
        order = np.argsort(cand, axis=1, kind="stable")
        cand = np.take_along_axis(cand, order, axis=1)
        dist = np.take_along_axis(dist, order, axis=1)
        order = np.argsort(dist, axis=1, kind="stable")
        cand = np.take_along_axis(cand, order, axis=1)
        dist = np.take_along_axis(dist, order, axis=1)
        if pad < n and cand.shape[1] > k and np.any(dist[:, k - 1] >= dist[:, -1]):
            pad = min(n, pad * 2)
            continue
        return cand[:, :k]


def build_knn_graph(cloud, k):
    """Union-symmetrized exact KNN graph of a point cloud.

    Edge (i, j) is present iff j is among the k nearest neighbors of i or
    vice versa, nearest under (Euclidean distance, index) ordering. Raises
    DisconnectedGraphError (naming the component sizes) if the result is
    not connected.
    """
    pts = cloud.points
    n = len(pts)
    k = int(k)
    if not (2 <= k < n):
        raise ConfigError(f"need 2 <= k < N, got k={k}, N={n}")
    neigh = _knn_pairs(pts, k)
    i = np.repeat(np.arange(n), k)
    j = neigh.ravel()
    lo = np.minimum(i, j)
    hi = np.maximum(i, j)
    pairs = np.unique(np.column_stack([lo, hi]), axis=0)
    diff = pts[pairs[:, 0]] - pts[pairs[:, 1]]
    lengths = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    graph = NeighborGraph.from_edges(n, pairs, lengths, k=k)
    ncomp, labels = connected_components(graph.adjacency_matrix(),
                                         directed=False)
    if ncomp != 1:
        sizes = np.bincount(labels).tolist()
        raise DisconnectedGraphError(sizes)
    log.info("knn graph: %d vertices, %d edges, k=%d", n, len(pairs), k)
    return graph


def export_edge_csv(path, graph):
    """Debug dump: edge list as CSV rows i,j,length."""
    with open(path, "w", encoding="ascii") as fh:
        fh.write("i,j,length\n")
        for (i, j), w in zip(graph.edges, graph.lengths):
            fh.write("%d,%d,%.17g\n" % (i, j, w))
