"""The m closest pairs of a node set under a non-metric distance.

The search maps the problem to a sequence of k-NN problems on shrinking node
sets: with ``k = ceil(4m/|S|)`` the best ``2m`` directed k-NN edges are kept,
and only nodes whose every out-edge made that cut (the saturated nodes) can
still hide an undiscovered best pair, so the search recurses on them. Small
sets are scanned exhaustively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import CandidateEdge, DistanceCache, RecursionTrace, make_rng
from .nndescent import find_knn

__all__ = ["BestPairsResult", "find_best", "find_best_exhaustive", "recall_curve"]


@dataclass
class BestPairsResult:
    """Pairs ``i < j`` sorted by ``(dist, i, j)``."""

    i: np.ndarray
    j: np.ndarray
    dist: np.ndarray
    trace: RecursionTrace = field(default_factory=RecursionTrace)
    short: bool = False
    evaluations: int = 0

    @property
    def pairs(self) -> list[CandidateEdge]:
        return [CandidateEdge(a, b, c) for a, b, c in zip(self.i.tolist(), self.j.tolist(), self.dist.tolist())]

    def keys(self) -> list[tuple[int, int]]:
        return list(zip(self.i.tolist(), self.j.tolist()))

    def __len__(self):
        return self.i.shape[0]


def _rank(i, j, dist):
    """Order by (dist, i, j); i < j assumed."""
    return np.lexsort((j, i, dist))


def _smallest_pairs(i, j, dist, m):
    """Deduplicate unordered pairs and keep the m smallest by (dist, i, j)."""
    lo = np.minimum(i, j)
    hi = np.maximum(i, j)
    order = _rank(lo, hi, dist)
    lo, hi, dist = lo[order], hi[order], dist[order]
    if lo.shape[0]:
        keep = np.ones(lo.shape[0], dtype=bool)
        # equal pairs carry equal distances, so duplicates end up adjacent
        keep[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
        lo, hi, dist = lo[keep], hi[keep], dist[keep]
    return lo[:m], hi[:m], dist[:m]


def _select_directed(src, dst, dist, count):
    """Indices of the ``count`` smallest directed edges.

    Ranked by ``(dist, min, max, src)`` so reciprocal edges sit next to each
    other; partial selection first, full ordering only on the boundary ties.
    """
    if count >= dist.shape[0]:
        return np.arange(dist.shape[0])
    part = np.argpartition(dist, count - 1)[:count]
    cut = dist[part].max()
    below = np.flatnonzero(dist < cut)
    at = np.flatnonzero(dist == cut)
    need = count - below.shape[0]
    lo = np.minimum(src[at], dst[at])
    hi = np.maximum(src[at], dst[at])
    at = at[np.lexsort((src[at], hi, lo))][:need]
    return np.concatenate([below, at])


def _reverse(loc, pos):
    """Up to k in-neighbors per node from the out-neighbor rows ``loc``,
    as next-level positions (-1 for dropped or missing)."""
    n, k = loc.shape
    src = np.repeat(np.arange(n), k)
    dst = loc.ravel()
    order = np.argsort(dst, kind="stable")
    src, dst = src[order], dst[order]
    first = np.searchsorted(dst, np.arange(n))
    rank = np.arange(dst.shape[0]) - first[dst]
    ok = rank < k
    out = np.full((n, k), -1, dtype=np.int64)
    out[dst[ok], rank[ok]] = pos[src[ok]]
    return out


def _exhaustive(m, nodes, d):
    iu, ju = np.triu_indices(nodes.shape[0], 1)
    ii = nodes[iu]
    jj = nodes[ju]
    vals = np.asarray(d(ii, jj), dtype=np.float64)
    return _smallest_pairs(ii, jj, vals, m), vals.shape[0]


def _prepare(m, nodes):
    if m < 1:
        raise ValueError("m must be at least 1")
    nodes = np.unique(np.asarray(nodes, dtype=np.int64))
    if nodes.shape[0] < 2:
        raise ValueError("need at least two nodes")
    return nodes


def find_best_exhaustive(m: int, nodes, d) -> BestPairsResult:
    """Exact m smallest pairs by a full scan over all pairs of ``nodes``."""
    nodes = _prepare(m, nodes)
    n = nodes.shape[0]
    (lo, hi, dist), evals = _exhaustive(m, nodes, d)
    trace = RecursionTrace()
    trace.add(0, n, 0, True)
    return BestPairsResult(lo, hi, dist, trace, short=m > n * (n - 1) // 2, evaluations=evals)


def find_best(
    m: int,
    nodes,
    d,
    rng=None,
    *,
    eps: float = 1e-3,
    cache: DistanceCache | None = None,
    knn_cap: int | None = None,
) -> BestPairsResult:
    """Approximate m smallest pairs of ``nodes`` under the batched oracle ``d``.

    Parameters
    ----------
    m : int
        Number of pairs wanted. If it exceeds the number of pairs, all pairs
        are returned and ``short`` is set.
    nodes : array_like of int
    d : callable
        ``d(ii, jj) -> ndarray``, symmetric.
    rng : Generator or seed
    eps : float
        Convergence criterion handed to the k-NN search.
    cache : DistanceCache, optional
        Cleared on entry and shared by every recursion level. A private
        cache is used when omitted.
    knn_cap : int, optional
        Neighbor cap of the k-NN sweeps (defaults to k).
    """
    nodes = _prepare(m, nodes)
    rng = make_rng(0 if rng is None else rng)
    cache = DistanceCache() if cache is None else cache
    cache.clear()
    misses0 = cache.misses
    n_all = int(nodes.max()) + 1
    dist_fn = cache.wrap(d, n_all)

    trace = RecursionTrace()
    parts_i, parts_j, parts_d = [], [], []
    S = nodes
    t = 0
    short = m > nodes.shape[0] * (nodes.shape[0] - 1) // 2
    init = None
    while S.shape[0] >= 2:
        ns = S.shape[0]
        k = -(-4 * m // ns)
        if ns * ns <= 4 * m or k >= ns - 1:
            # a k-NN graph with k >= |S|-1 is the complete graph anyway
            (lo, hi, dist), _ = _exhaustive(m, S, dist_fn)
            trace.add(t, ns, 0, True)
            parts_i.append(lo)
            parts_j.append(hi)
            parts_d.append(dist)
            break
        G = find_knn(k, S, dist_fn, eps, rng, cap=knn_cap, init=init)
        src, dst, dist = G.edges()
        sel = _select_directed(src, dst, dist, 2 * m)
        trace.add(t, ns, k, False)
        parts_i.append(src[sel])
        parts_j.append(dst[sel])
        parts_d.append(dist[sel])
        # saturated: all k out-edges of the node made the 2m cut
        covered = np.bincount(np.searchsorted(S, src[sel]), minlength=ns)
        keep = covered == k
        # start the next level from the surviving neighbors and reverse
        # neighbors, whose distances are already cached
        pos = np.full(ns, -1, dtype=np.int64)
        pos[keep] = np.arange(int(keep.sum()))
        loc = np.searchsorted(S, G.indices)
        both = np.concatenate([pos[loc], _reverse(loc, pos)], axis=1)
        init = both[keep]
        S = S[keep]
        t += 1

    lo, hi, dist = _smallest_pairs(
        np.concatenate(parts_i), np.concatenate(parts_j), np.concatenate(parts_d), m
    )
    if not trace.halving_holds():
        raise AssertionError(f"recursion failed to halve: {trace.levels}")
    if len(trace.levels) > max(1, math.ceil(math.log2(nodes.shape[0]))) + 1:
        raise AssertionError(f"recursion too deep: {trace.levels}")
    # unique pairs sent to the oracle across all levels
    return BestPairsResult(lo, hi, dist, trace, short=short, evaluations=cache.misses - misses0)


def recall_curve(exact: BestPairsResult, approx: BestPairsResult) -> np.ndarray:
    """Entry r-1 is the overlap of the two top-r pair sets divided by r."""
    if len(exact) != len(approx):
        raise ValueError("results must have the same length")
    seen_a: set = set()
    seen_b: set = set()
    common = 0
    out = np.empty(len(exact))
    for r, (a, b) in enumerate(zip(exact.keys(), approx.keys())):
        if a == b:
            common += 1
        else:
            if a in seen_b:
                common += 1
            if b in seen_a:
                common += 1
        seen_a.add(a)
        seen_b.add(b)
        out[r] = common / (r + 1)
    return out
