"""Shared fixtures: flat-torus grid graphs and the three embedding
pipelines, built once per session because the larger ones take tens of
seconds."""

from types import SimpleNamespace

import numpy as np
import pytest

from torusforge import cr3bp
from torusforge.samplers import (StandardMapConfig, sample_center_manifold_torus,
                                 sample_standard_map_torus,
                                 sample_torus_revolution)
from torusforge.knn import NeighborGraph, build_knn_graph
from torusforge.cycles import Cycle, Classification, classify_cycles, \
    minimum_cycle_basis
from torusforge.oneforms import assemble_system, solve_oneforms
from torusforge.mesher import merge_patches
from torusforge.orientation import orient_mesh

# rotation numbers rationally independent of each other and of 1
GOLDEN = 0.6180339887498949
SILVER = 0.41421356237309515

EARTH_MOON_MU = 0.01215


def periodic_grid(rows, cols=None):
    """Unit-weight neighbor graph of the rows x cols flat-torus grid.

    Vertex (i, j) is i * cols + j; edges wrap in both directions, so the
    graph is 4-regular with 2 * rows * cols edges.
    """
    if cols is None:
        cols = rows
    edges = set()
    for i in range(rows):
        for j in range(cols):
            a = i * cols + j
            for b in (i * cols + (j + 1) % cols,
                      ((i + 1) % rows) * cols + j):
                edges.add((min(a, b), max(a, b)))
    edges = np.array(sorted(edges), dtype=np.int64)
    return NeighborGraph.from_edges(rows * cols, edges,
                                    np.ones(len(edges)))


def cycle_from_vertices(graph, loop):
    """Cycle dataclass from an explicit vertex loop."""
    ids = []
    for t in range(len(loop)):
        a, b = loop[t], loop[(t + 1) % len(loop)]
        ids.append(graph.edge_index[(a, b) if a < b else (b, a)])
    ids = np.array(sorted(ids), dtype=np.int64)
    return Cycle(np.array(loop, dtype=np.int64), ids,
                 float(np.sum(graph.lengths[ids])))


def manual_grid_classification(graph, rows, cols):
    """Hand-built homology split for a grid: all unit squares but one as
    trivial cycles, row 0 as toroidal, column 0 as poloidal."""
    squares = []
    for i in range(rows):
        for j in range(cols):
            if i == rows - 1 and j == cols - 1:
                continue
            a = i * cols + j
            b = i * cols + (j + 1) % cols
            c = ((i + 1) % rows) * cols + (j + 1) % cols
            d = ((i + 1) % rows) * cols + j
            squares.append(cycle_from_vertices(graph, [a, b, c, d]))
    row0 = cycle_from_vertices(graph, list(range(cols)))
    col0 = cycle_from_vertices(graph, [i * cols for i in range(rows)])
    return Classification(squares, col0, row0)


def build_pipeline(cloud, k=8, rng_seed=0):
    """Full library chain cloud -> oriented mesh, bundled for tests."""
    graph = build_knn_graph(cloud, k=k)
    basis = minimum_cycle_basis(graph)
    classification = classify_cycles(basis)
    system = assemble_system(graph, basis, classification,
                             weights="inverse_length")
    forms = solve_oneforms(system)
    mesh = merge_patches(graph, forms, cloud, rng_seed=rng_seed)
    oriented = orient_mesh(mesh)
    return SimpleNamespace(cloud=cloud, graph=graph, basis=basis,
                           classification=classification, forms=forms,
                           mesh=mesh, oriented=oriented)


@pytest.fixture(scope="session")
def torus_bundle():
    return build_pipeline(sample_torus_revolution(2.0, 0.5, 2000, 0))


@pytest.fixture(scope="session")
def stdmap_bundle():
    cfg = StandardMapConfig(K1=0.3, K2=0.3, p1=GOLDEN, p2=SILVER, N=4000)
    return build_pipeline(sample_standard_map_torus(cfg))


@pytest.fixture(scope="session")
def cm_bundle():
    l2 = next(p for p in cr3bp.libration_points(EARTH_MOON_MU)
              if p.label == "L2")
    cloud = sample_center_manifold_torus(EARTH_MOON_MU, l2, 5e-3, 5e-3, 6000)
    return build_pipeline(cloud)


@pytest.fixture(scope="session")
def grid5_forms():
    """5x5 grid with its automatic cycle basis and solved one-forms."""
    graph = periodic_grid(5)
    basis = minimum_cycle_basis(graph)
    classification = classify_cycles(basis)
    forms = solve_oneforms(assemble_system(graph, basis, classification))
    return SimpleNamespace(graph=graph, basis=basis,
                           classification=classification, forms=forms)


@pytest.fixture(scope="session")
def grid3_manual_forms():
    """3x3 grid with a hand-built classification (the automatic one
    refuses this graph: the homology generators are lighter than the
    squares)."""
    graph = periodic_grid(3)
    classification = manual_grid_classification(graph, 3, 3)
    forms = solve_oneforms(assemble_system(graph, None, classification))
    return SimpleNamespace(graph=graph, classification=classification,
                           forms=forms)
