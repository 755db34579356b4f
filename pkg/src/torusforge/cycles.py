"""Minimum cycle basis of a weighted undirected graph.

Exact greedy over the Horton candidate family (cycles formed by two
shortest paths plus a closing edge), run in two phases. A banded phase
harvests short cycles from distance-limited shortest-path trees in
global weight order. Once few basis slots remain, a support-vector
phase computes the GF(2) orthogonal complement of the selected span
and scans all candidates for the minimum-weight ones with odd pairing,
which are exactly the remaining greedy picks.

Cycle vectors live in GF(2) coordinates indexed by non-tree edges of a
fixed spanning tree and are stored as Python integers.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra, minimum_spanning_tree

from .errors import CycleBasisError, GeneratorClassificationError

log = logging.getLogger("torusforge.cycles")

_INTERNAL_SEED = 0x5EED
_PERTURB_EPS = 1e-10
_CORANK_SWITCH = 8
_POOL_DEPTH = 64
_GROUP_BITS = 60


@dataclass
class Cycle:
    """Simple cycle: vertex loop, sorted edge ids, true weight."""

    vertices: np.ndarray
    edges: np.ndarray
    weight: float

    @property
    def hops(self):
        return int(len(self.edges))

    def oriented_pairs(self):
        """Consecutive (a, b) vertex pairs walking the loop once."""
        v = self.vertices
        for t in range(len(v)):
            yield int(v[t]), int(v[(t + 1) % len(v)])


@dataclass
class CycleBasis:
    vertex_count: int
    cycles: list

    @property
    def size(self):
        return len(self.cycles)

    def total_weight(self):
        return float(sum(c.weight for c in self.cycles))

    def hop_histogram(self):
        hist = {}
        for c in self.cycles:
            hist[c.hops] = hist.get(c.hops, 0) + 1
        return hist


@dataclass
class Classification:
    trivial: list
    poloidal: Cycle
    toroidal: Cycle


def _cycle_from_edges(graph, edge_ids):
    """Canonical Cycle from a set of edge ids forming one simple cycle."""
    ids = np.array(sorted(int(i) for i in edge_ids), dtype=np.int64)
    adj = {}
    for e in ids:
        i, j = (int(x) for x in graph.edges[e])
        adj.setdefault(i, []).append(j)
        adj.setdefault(j, []).append(i)
    for v, nb in adj.items():
        if len(nb) != 2:
            raise CycleBasisError(f"edge set is not a simple cycle at vertex {v}")
    start = min(adj)
    loop = [start]
    cur, prev = min(adj[start]), start
    while cur != start:
        loop.append(cur)
        a, b = adj[cur]
        cur, prev = (b if a == prev else a), cur
    if len(loop) != len(ids):
        raise CycleBasisError("edge set is not a single simple cycle")
    weight = float(np.sum(graph.lengths[ids]))
    return Cycle(np.array(loop, dtype=np.int64), ids, weight)


class _Workspace:
    """Shared state: perturbed weights, spanning tree, GF(2) coordinates."""

    def __init__(self, graph):
        self.graph = graph
        self.n = graph.vertex_count
        self.E = len(graph.edges)
        self.m = self.E - self.n + 1
        self.ex = graph.edges[:, 0].astype(np.int64)
        self.ey = graph.edges[:, 1].astype(np.int64)
        self.keys = self.ex * self.n + self.ey
        if np.any(np.diff(self.keys) <= 0):
            raise CycleBasisError("edge list must be sorted and duplicate free")
        rng = np.random.default_rng(_INTERNAL_SEED)
        # deterministic tie-breaking perturbation, far above float noise
        # and far below any honest weight difference
        self.w_pert = graph.lengths * (1.0 + _PERTURB_EPS * (1.0 + rng.random(self.E)))
        self.zob = rng.integers(0, 2**63, size=self.E, dtype=np.uint64)
        i, j = self.ex, self.ey
        self.csgraph = coo_matrix(
            (np.concatenate([self.w_pert, self.w_pert]),
             (np.concatenate([i, j]), np.concatenate([j, i]))),
            shape=(self.n, self.n)).tocsr()
        tree = minimum_spanning_tree(self.csgraph).tocoo()
        tid = self._edge_ids_bulk(tree.row.astype(np.int64),
                                  tree.col.astype(np.int64))
        self.coord = np.full(self.E, -1, dtype=np.int64)
        nontree = np.setdiff1d(np.arange(self.E), tid)
        if len(nontree) != self.m:
            raise CycleBasisError("spanning tree construction failed")
        self.coord[nontree] = np.arange(self.m)
        self.nontree = nontree
        self.chunk = max(1, min(512, int(6_000_000 // max(self.E, 1))))

    def _edge_ids_bulk(self, a, b):
        lo = np.minimum(a, b).astype(np.int64)
        hi = np.maximum(a, b).astype(np.int64)
        pos = np.searchsorted(self.keys, lo * self.n + hi)
        if np.any(pos >= self.E) or np.any(self.keys[pos] != lo * self.n + hi):
            raise CycleBasisError("edge lookup miss")
        return pos

    def path_xor(self, preds, values):
        """XOR of per-edge values along tree paths to each source, for a
        block of predecessor rows, via pointer doubling."""
        c, n = preds.shape
        anc = np.where(preds < 0, np.arange(n)[None, :], preds).astype(np.int64)
        g = np.zeros((c, n), dtype=values.dtype)
        reached = preds >= 0
        if np.any(reached):
            uu = np.broadcast_to(np.arange(n), (c, n))[reached]
            g[reached] = values[self._edge_ids_bulk(anc[reached], uu)]
        rounds = max(1, int(np.ceil(np.log2(max(n, 2)))) + 1)
        for _ in range(rounds):
            g ^= np.take_along_axis(g, anc, axis=1)
            anc = np.take_along_axis(anc, anc, axis=1)
        return g

    def vector_from_edges(self, edge_ids):
        vec = 0
        for e in edge_ids:
            cidx = self.coord[e]
            if cidx >= 0:
                vec |= 1 << int(cidx)
        return vec


def _reduce_vector(vec, pivots):
    """Eliminate vec against pivot rows; returns (residual, new pivot bit)
    with bit None when vec lies in the current span."""
    while vec:
        low = (vec & -vec).bit_length() - 1
        row = pivots.get(low)
        if row is None:
            return vec, low
        vec ^= row
    return 0, None


def _walk_to_source(ws, prow, v, x):
    """Tree path x -> v in a predecessor row: vertex list and edge ids."""
    verts = [x]
    eids = []
    u = x
    idx = ws.graph.edge_index
    while u != v:
        p = int(prow[u])
        if p < 0:
            raise CycleBasisError("broken predecessor chain")
        eids.append(idx[(p, u) if p < u else (u, p)])
        u = p
        verts.append(u)
    return verts, eids


def _candidate_cycle(ws, prow, v, e):
    """Edge set of the Horton candidate (v, e), or None when the two
    shortest paths share a vertex besides v (non-simple candidate)."""
    x, y = int(ws.ex[e]), int(ws.ey[e])
    vx, ex_ids = _walk_to_source(ws, prow, v, x)
    vy, ey_ids = _walk_to_source(ws, prow, v, y)
    if len(set(vx) & set(vy)) != 1:
        return None
    eset = set(ex_ids) ^ set(ey_ids)
    if e in eset:
        return None
    eset.add(int(e))
    return eset


class _PredCache:
    """Lazy banded shortest-path rows per source vertex."""

    def __init__(self, ws):
        self.ws = ws
        self.rows = {}
        self.theta = None

    def set_theta(self, theta):
        if self.theta != theta:
            self.rows.clear()
            self.theta = theta

    def get(self, v):
        hit = self.rows.get(v)
        if hit is None:
            d, p = dijkstra(self.ws.csgraph, indices=[v], limit=self.theta,
                            return_predecessors=True)
            hit = (d[0], p[0])
            self.rows[v] = hit
        return hit


def _banded_chunks(ws, theta):
    """Yield candidate arrays (weight, source, edge, signature) for all
    sources, with shortest paths truncated at distance theta."""
    for lo in range(0, ws.n, ws.chunk):
        src = np.arange(lo, min(lo + ws.chunk, ws.n))
        dist, preds = dijkstra(ws.csgraph, indices=src, limit=theta,
                               return_predecessors=True)
        zpath = ws.path_xor(preds, ws.zob)
        wc = dist[:, ws.ex] + ws.w_pert[None, :] + dist[:, ws.ey]
        ok = np.isfinite(wc)
        ok &= preds[:, ws.ex] != ws.ey[None, :]
        ok &= preds[:, ws.ey] != ws.ex[None, :]
        rows, es = np.nonzero(ok)
        sig = zpath[rows, ws.ex[es]] ^ zpath[rows, ws.ey[es]] ^ ws.zob[es]
        yield wc[rows, es], src[rows], es, sig


def _phase_a(ws, pivots, chosen, seen, theta0):
    """Greedy over banded Horton candidates in nondecreasing weight order.

    Returns the tested weight horizon. Doubles the band until the basis
    is complete, few slots remain, or the band covers the whole graph.
    """
    cache = _PredCache(ws)
    horizon = 0.0
    theta = theta0
    wsum = float(ws.w_pert.sum()) + 1.0
    while len(chosen) < ws.m:
        cache.set_theta(theta)
        parts = list(_banded_chunks(ws, theta))
        if parts:
            wc = np.concatenate([p[0] for p in parts])
            vs = np.concatenate([p[1] for p in parts])
            es = np.concatenate([p[2] for p in parts])
            sg = np.concatenate([p[3] for p in parts])
            band = (wc > horizon) & (wc <= theta)
            order = np.lexsort((es[band], vs[band], wc[band]))
            wc, vs, es, sg = (a[band][order] for a in (wc, vs, es, sg))
            for t in range(len(wc)):
                s = int(sg[t])
                if s in seen:
                    continue
                seen.add(s)
                v, e = int(vs[t]), int(es[t])
                _, prow = cache.get(v)
                eset = _candidate_cycle(ws, prow, v, e)
                if eset is None:
                    continue
                resid, bit = _reduce_vector(ws.vector_from_edges(eset), pivots)
                if bit is None:
                    continue
                pivots[bit] = resid
                chosen.append(eset)
                if len(chosen) == ws.m:
                    break
        horizon = theta
        corank = ws.m - len(chosen)
        log.info("cycle band theta=%.6g rank=%d/%d", theta, len(chosen), ws.m)
        if corank == 0 or corank <= _CORANK_SWITCH or theta > wsum:
            break
        theta *= 2.0
    return horizon


def _complement_basis(ws, pivots):
    """Basis of the GF(2) orthogonal complement of the selected span."""
    piv_bits = sorted(pivots)
    in_piv = set(piv_bits)
    out = []
    for f in range(ws.m):
        if f in in_piv:
            continue
        s = 1 << f
        for p in reversed(piv_bits):
            if (pivots[p] & s).bit_count() & 1:
                s |= 1 << p
        out.append(s)
    return out


def _edge_parity_bits(ws, group):
    """Per-edge uint64 bitfield: bit i = coordinate of edge in group[i]."""
    sbits = np.zeros(ws.E, dtype=np.uint64)
    nbytes = (ws.m + 7) // 8
    for i, s in enumerate(group):
        raw = np.frombuffer(s.to_bytes(nbytes, "little"), dtype=np.uint8)
        coords = np.unpackbits(raw, bitorder="little")[:ws.m].astype(bool)
        onbit = np.zeros(ws.E, dtype=np.uint64)
        onbit[ws.nontree] = coords.astype(np.uint64) << np.uint64(i)
        sbits |= onbit
    return sbits


def _scan_candidates(ws, group, banned, depth):
    """Full scan of Horton candidates: per parity pattern, the `depth`
    lightest (weight, source, edge) entries with odd pairing bits."""
    sbits = _edge_parity_bits(ws, group)
    pool = {}
    for lo in range(0, ws.n, ws.chunk):
        src = np.arange(lo, min(lo + ws.chunk, ws.n))
        dist, preds = dijkstra(ws.csgraph, indices=src,
                               return_predecessors=True)
        gpar = ws.path_xor(preds, sbits)
        wc = dist[:, ws.ex] + ws.w_pert[None, :] + dist[:, ws.ey]
        psi = gpar[:, ws.ex] ^ gpar[:, ws.ey] ^ sbits[None, :]
        ok = np.isfinite(wc) & (psi != 0)
        ok &= preds[:, ws.ex] != ws.ey[None, :]
        ok &= preds[:, ws.ey] != ws.ex[None, :]
        for v, e in banned:
            if lo <= v < lo + len(src):
                ok[v - lo, e] = False
        rows, es = np.nonzero(ok)
        if len(rows) == 0:
            continue
        pats = psi[rows, es]
        wsel = wc[rows, es]
        vsel = src[rows]
        for pat in np.unique(pats):
            mask = pats == pat
            wp, vp, ep = wsel[mask], vsel[mask], es[mask]
            if len(wp) > depth:
                keep = np.argpartition(wp, depth)[:depth]
                wp, vp, ep = wp[keep], vp[keep], ep[keep]
            cur = pool.setdefault(int(pat), [])
            cur.extend(zip(wp.tolist(), vp.tolist(), ep.tolist()))
            cur.sort()
            del cur[depth:]
    entries = []
    for pat, items in pool.items():
        entries.extend((w, v, e, pat) for w, v, e in items)
    entries.sort()
    return entries


def _phase_b(ws, pivots, chosen):
    """Finish the basis: repeatedly take the lightest candidate with odd
    pairing against the orthogonal complement of the current span."""
    banned = set()
    depth = _POOL_DEPTH
    attempts = 0
    while len(chosen) < ws.m:
        comp = _complement_basis(ws, pivots)
        group = comp[:_GROUP_BITS]
        entries = _scan_candidates(ws, group, banned, depth)
        alphas = [1 << i for i in range(len(group))]
        progressed = False
        for w, v, e, pat in entries:
            if not alphas:
                break
            if (v, e) in banned:
                continue
            if not any((pat & a).bit_count() & 1 for a in alphas):
                continue
            _, preds = dijkstra(ws.csgraph, indices=[v],
                                return_predecessors=True)
            eset = _candidate_cycle(ws, preds[0], v, e)
            if eset is None:
                banned.add((v, e))
                continue
            vec = ws.vector_from_edges(eset)
            true_pat = 0
            for i, s in enumerate(group):
                true_pat |= ((vec & s).bit_count() & 1) << i
            odd = [a for a in alphas if (true_pat & a).bit_count() & 1]
            if not odd:
                banned.add((v, e))
                continue
            resid, bit = _reduce_vector(vec, pivots)
            if bit is None:
                raise CycleBasisError("odd pairing on a dependent cycle")
            pivots[bit] = resid
            chosen.append(eset)
            progressed = True
            star = odd[0]
            alphas = [a ^ star if a in odd else a
                      for a in alphas if a != star]
        if len(chosen) >= ws.m:
            break
        if not progressed:
            attempts += 1
            depth *= 4
            if attempts > 3:
                _fallback_fundamental(ws, pivots, chosen)
                break


def _fallback_fundamental(ws, pivots, chosen):
    """Complete the basis from fundamental cycles of the spanning tree.

    Keeps the result a valid (possibly non-minimum) basis; only reachable
    when candidate scanning cannot certify the remaining slots.
    """
    log.warning("cycle basis completed from fundamental cycles; "
                "minimality not certified")
    tree_adj = {}
    for e in np.nonzero(ws.coord < 0)[0]:
        i, j = int(ws.ex[e]), int(ws.ey[e])
        tree_adj.setdefault(i, []).append((j, int(e)))
        tree_adj.setdefault(j, []).append((i, int(e)))
    parent = {0: (-1, -1)}
    order = [0]
    for u in order:
        for nb, e in tree_adj.get(u, ()):
            if nb not in parent:
                parent[nb] = (u, e)
                order.append(nb)
    depth = {u: 0 for u in parent}
    for u in order[1:]:
        depth[u] = depth[parent[u][0]] + 1
    fund = []
    for e in ws.nontree:
        x, y = int(ws.ex[e]), int(ws.ey[e])
        a, b, ids = x, y, [int(e)]
        while depth[a] > depth[b]:
            a, pe = parent[a][0], parent[a][1]
            ids.append(pe)
        while depth[b] > depth[a]:
            b, pe = parent[b][0], parent[b][1]
            ids.append(pe)
        while a != b:
            ids.append(parent[a][1])
            ids.append(parent[b][1])
            a, b = parent[a][0], parent[b][0]
        fund.append((float(np.sum(ws.w_pert[ids])), ids))
    fund.sort(key=lambda t: (t[0], t[1]))
    for _, ids in fund:
        if len(chosen) == ws.m:
            break
        resid, bit = _reduce_vector(ws.vector_from_edges(ids), pivots)
        if bit is None:
            continue
        pivots[bit] = resid
        chosen.append(set(ids))


def minimum_cycle_basis(graph, theta0=None):
    """Exact minimum-weight cycle basis, sorted by nondecreasing weight.

    Ties anywhere in the weight ordering are broken by a fixed internal
    perturbation so results are deterministic for identical input.
    """
    ws = _Workspace(graph)
    if ws.m == 0:
        return CycleBasis(ws.n, [])
    if theta0 is None:
        theta0 = 5.0 * float(np.median(ws.w_pert))
    pivots = {}
    chosen = []
    seen = set()
    _phase_a(ws, pivots, chosen, seen, theta0)
    if len(chosen) < ws.m:
        log.info("support-vector phase for %d remaining cycles",
                 ws.m - len(chosen))
        _phase_b(ws, pivots, chosen)
    if len(chosen) != ws.m:
        raise CycleBasisError(
            f"basis incomplete: {len(chosen)} of {ws.m} cycles")
    cycles = [_cycle_from_edges(graph, eset) for eset in chosen]
    cycles.sort(key=lambda c: (c.weight, c.hops, tuple(c.edges.tolist())))
    log.info("cycle basis: %d cycles, total weight %.6g",
             len(cycles), sum(c.weight for c in cycles))
    return CycleBasis(ws.n, cycles)


def exhaustive_minimum_cycle_basis(graph, max_edges=20):
    """Brute-force oracle: greedy over every simple cycle, enumerated from
    all edge subsets. Only for small graphs; exact including ties."""
    E = len(graph.edges)
    if E > max_edges:
        raise CycleBasisError(f"exhaustive search limited to {max_edges} edges")
    n = graph.vertex_count
    m = E - n + 1 if n else 0
    simple = []
    for mask in range(1, 1 << E):
        ids = [e for e in range(E) if mask >> e & 1]
        deg = {}
        for e in ids:
            for v in graph.edges[e]:
                deg[int(v)] = deg.get(int(v), 0) + 1
        if any(d != 2 for d in deg.values()):
            continue
        # connectivity: walk from one vertex, must visit every edge
        adj = {}
        for e in ids:
            i, j = (int(x) for x in graph.edges[e])
            adj.setdefault(i, []).append(j)
            adj.setdefault(j, []).append(i)
        start = min(deg)
        seen_v = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for nb in adj[u]:
                if nb not in seen_v:
                    seen_v.add(nb)
                    stack.append(nb)
        if len(seen_v) != len(deg):
            continue
        simple.append((float(np.sum(graph.lengths[ids])), tuple(ids)))
    simple.sort()
    ws = _Workspace(graph)
    pivots = {}
    chosen = []
    for _, ids in simple:
        if len(chosen) == m:
            break
        resid, bit = _reduce_vector(ws.vector_from_edges(ids), pivots)
        if bit is None:
            continue
        pivots[bit] = resid
        chosen.append(ids)
    if len(chosen) != m:
        raise CycleBasisError("exhaustive enumeration missed the cycle space")
    cycles = [_cycle_from_edges(graph, ids) for ids in chosen]
    cycles.sort(key=lambda c: (c.weight, c.hops, tuple(c.edges.tolist())))
    return CycleBasis(n, cycles)


def classify_cycles(basis, ratio=1.25):
    """Split a torus-graph basis into trivial cycles and the two homology
    generators (heaviest two; the heavier is the toroidal direction).

    Requires the lighter generator to outweigh the heaviest trivial cycle
    by `ratio`; anything closer means the split is not trustworthy.
    """
    if basis.size < 2:
        raise GeneratorClassificationError(
            f"need at least 2 cycles to classify, have {basis.size}")
    cyc = basis.cycles
    poloidal, toroidal = cyc[-2], cyc[-1]
    trivial = list(cyc[:-2])
    if trivial and poloidal.weight < ratio * trivial[-1].weight:
        raise GeneratorClassificationError(
            "generator weights not separated from trivial cycles: "
            f"{poloidal.weight:.6g} vs {trivial[-1].weight:.6g} "
            f"(need factor {ratio})")
    return Classification(trivial, poloidal, toroidal)


def export_cycles_json(path, basis, classification=None):
    """Dump a cycle basis (optionally with roles) as deterministic JSON."""
    roles = {}
    if classification is not None:
        roles[id(classification.poloidal)] = "poloidal"
        roles[id(classification.toroidal)] = "toroidal"
        for c in classification.trivial:
            roles[id(c)] = "trivial"
    payload = {
        "cycle_count": basis.size,
        "vertex_count": basis.vertex_count,
        "total_weight": basis.total_weight(),
        "cycles": [
            {
                "vertices": c.vertices.tolist(),
                "edges": c.edges.tolist(),
                "weight": c.weight,
                "hops": c.hops,
                "role": roles.get(id(c)),
            }
            for c in basis.cycles
        ],
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
