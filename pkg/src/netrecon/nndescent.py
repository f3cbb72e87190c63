"""Approximate k-nearest-neighbor digraphs by neighbor-of-neighbor descent.

The distance oracle is any callable ``d(ii, jj) -> ndarray`` evaluating a
batch of pairs; it need not be a metric. Each sweep runs in three phases:

1. candidate generation from the sweep-start graph and its undirected view,
   joining only through edges where at least one side is new since the
   previous sweep (older joins were already tried and cannot win now),
2. one batched oracle call for all candidates,
3. per-node replacement of the current worst out-neighbor.

Phases 1 and 3 only read the sweep-start graph and write node ``i``'s own
row, so the working copy never leaks into the scan of the same sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .core import make_rng

__all__ = ["KnnGraph", "find_knn", "exhaustive_knn", "sweep_count", "knn_recall"]


# ---------------------------------------------------------------------------
# counter-based hashing RNG for use inside kernels


@njit(cache=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def _randint(seed, stream, counter, bound):
    z = _mix64(seed + np.uint64(stream) * np.uint64(0x9E3779B97F4A7C15) + np.uint64(counter))
    return np.int64(z % np.uint64(bound))


# ---------------------------------------------------------------------------
# binary max-heap keyed by (dist, id); the root is the worst neighbor


@njit(cache=True, inline="always")
def _worse(d1, i1, d2, i2):
    return d1 > d2 or (d1 == d2 and i1 > i2)


@njit(cache=True)
def _sift_down(dist, idx, born, pos):
    k = dist.shape[0]
    while True:
        left = 2 * pos + 1
        if left >= k:
            break
        big = left
        right = left + 1
        if right < k and _worse(dist[right], idx[right], dist[left], idx[left]):
            big = right
        if _worse(dist[big], idx[big], dist[pos], idx[pos]):
            dist[pos], dist[big] = dist[big], dist[pos]
            idx[pos], idx[big] = idx[big], idx[pos]
            born[pos], born[big] = born[big], born[pos]
            pos = big
        else:
            break


@njit(cache=True)
def _heapify(dist, idx, born):
    for r in range(dist.shape[0]):
        for p in range(dist.shape[1] // 2 - 1, -1, -1):
            _sift_down(dist[r], idx[r], born[r], p)


@njit(cache=True)
def _random_init(n, k, seed):
    """k distinct out-neighbors per node, self excluded (Floyd sampling)."""
    idx = np.empty((n, k), dtype=np.int64)
    mark = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        c = 0
        # sample k of n-1 values; value v maps to node v + (v >= i)
        for top in range(n - 1 - k, n - 1):
            v = _randint(seed, i, top, top + 1)
            if mark[v] == i:
                v = top
            mark[v] = i
            idx[i, c] = v + 1 if v >= i else v
            c += 1
    return idx


@njit(cache=True)
def _seeded_init(init, k, seed):
    """Rows of ``init`` (local ids, -1 padded) completed to k distinct
    out-neighbors by rejection sampling."""
    n = init.shape[0]
    idx = np.empty((n, k), dtype=np.int64)
    mark = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        mark[i] = i
        c = 0
        for a in range(init.shape[1]):
            v = init[i, a]
            if c < k and v >= 0 and mark[v] != i:
                mark[v] = i
                idx[i, c] = v
                c += 1
        draw = 0
        while c < k:
            v = _randint(seed, i, draw, n)
            draw += 1
            if mark[v] != i:
                mark[v] = i
                idx[i, c] = v
                c += 1
    return idx


@njit(cache=True)
def _undirected(idx, born, seed, sweep, shuffle):
    """Adjacency of the undirected view as CSR arrays: each node's
    out-neighbors first, then its in-neighbors not already listed. With
    ``shuffle`` the in-neighbors come in a fresh random order each sweep,
    so a capped read samples them. Entries are flagged new when the edge
    (either direction) was inserted by the previous sweep."""
    n, k = idx.shape
    deg = np.full(n, k, dtype=np.int64)
    for i in range(n):
        for a in range(k):
            deg[idx[i, a]] += 1
    start = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        start[i + 1] = start[i] + deg[i]
    fill = start[:-1].copy()
    adj = np.empty(start[n], dtype=np.int64)
    fresh = np.empty(start[n], dtype=np.bool_)
    for i in range(n):
        for a in range(k):
            adj[fill[i]] = idx[i, a]
            fresh[fill[i]] = born[i, a] == sweep - 1
            fill[i] += 1
    for i in range(n):
        for a in range(k):
            j = idx[i, a]
            adj[fill[j]] = i
            fresh[fill[j]] = born[i, a] == sweep - 1
            fill[j] += 1
    mark = np.full(n, -1, dtype=np.int64)
    at = np.empty(n, dtype=np.int64)
    out_start = np.zeros(n + 1, dtype=np.int64)
    out = np.empty(start[n], dtype=np.int64)
    flag = np.empty(start[n], dtype=np.bool_)
    pos = 0
    stream = np.uint64(sweep) * np.uint64(n)
    for i in range(n):
        lo = pos + k
        for p in range(start[i], start[i + 1]):
            j = adj[p]
            if mark[j] != i:
                mark[j] = i
                at[j] = pos
                out[pos] = j
                flag[pos] = fresh[p]
                pos += 1
            elif fresh[p]:
                flag[at[j]] = True
        for a in range(pos - lo - 1 if shuffle else 0, 0, -1):
            b = _randint(seed, stream + np.uint64(i), a, a + 1)
            out[lo + a], out[lo + b] = out[lo + b], out[lo + a]
            flag[lo + a], flag[lo + b] = flag[lo + b], flag[lo + a]
        out_start[i + 1] = pos
    return out_start, out[:pos].copy(), flag[:pos].copy()


@njit(cache=True)
def _candidates(idx, ustart, uadj, uflag, inner_cap, limit):
    """Neighbors of neighbors of each node that are not already out-neighbors.

    The outer loop runs over the whole undirected neighborhood of ``i``;
    the inner one over the first ``inner_cap`` entries of each neighbor's
    list, which are its out-neighbors when ``inner_cap == k``. A pair is
    skipped when both edges of its path are old.
    """
    n, k = idx.shape
    mark = np.full(n, -1, dtype=np.int64)
    src = np.empty(limit, dtype=np.int64)
    dst = np.empty(limit, dtype=np.int64)
    offs = np.zeros(n + 1, dtype=np.int64)
    c = 0
    for i in range(n):
        mark[i] = i
        for a in range(k):
            mark[idx[i, a]] = i
        for p in range(ustart[i], ustart[i + 1]):
            j = uadj[p]
            new_ij = uflag[p]
            for q in range(ustart[j], min(ustart[j + 1], ustart[j] + inner_cap)):
                v = uadj[q]
                if (new_ij or uflag[q]) and mark[v] != i:
                    mark[v] = i
                    src[c] = i
                    dst[c] = v
                    c += 1
        offs[i + 1] = c
    return src[:c], dst[:c], offs


@njit(cache=True)
def _apply(dist, idx, born, dst, cand_d, offs, order, sweep):
    """Replace each node's worst neighbor whenever a candidate beats it."""
    changes = 0
    for o in range(order.shape[0]):
        i = order[o]
        row_d = dist[i]
        row_i = idx[i]
        for c in range(offs[i], offs[i + 1]):
            d = cand_d[c]
            v = dst[c]
            if _worse(row_d[0], row_i[0], d, v):
                row_d[0] = d
                row_i[0] = v
                born[i, 0] = sweep
                _sift_down(row_d, row_i, born[i], 0)
                changes += 1
    return changes


@njit(cache=True)
def _sort_rows(dist, idx):
    n, k = dist.shape
    for i in range(n):
        # insertion sort by (dist, id); k is small
        for a in range(1, k):
            d = dist[i, a]
            v = idx[i, a]
            b = a - 1
            while b >= 0 and _worse(dist[i, b], idx[i, b], d, v):
                dist[i, b + 1] = dist[i, b]
                idx[i, b + 1] = idx[i, b]
                b -= 1
            dist[i, b + 1] = d
            idx[i, b + 1] = v


# ---------------------------------------------------------------------------


@dataclass
class KnnGraph:
    """k out-neighbors per node, rows sorted ascending by ``(dist, id)``.

    ``nodes`` maps local row index to the caller's node ids; ``indices``
    holds caller ids as well.
    """

    nodes: np.ndarray
    indices: np.ndarray
    dists: np.ndarray
    sweeps: int = 0
    evaluations: int = 0
    changes: tuple = ()

    @property
    def k(self) -> int:
        return self.indices.shape[1]

    def worst(self, row: int) -> float:
        return float(self.dists[row, -1])

    def edges(self):
        """Directed edges as flat arrays ``(src, dst, dist)`` in caller ids."""
        src = np.repeat(self.nodes, self.k)
        return src, self.indices.ravel(), self.dists.ravel()


def _check(k, n):
    if k < 1:
        raise ValueError("k must be at least 1")
    if n < 2:
        raise ValueError("need at least two nodes")


def exhaustive_knn(k: int, nodes, d) -> KnnGraph:
    """Exact k-NN digraph by evaluating every pair."""
    nodes = np.asarray(nodes, dtype=np.int64)
    n = nodes.shape[0]
    _check(k, n)
    k = min(k, n - 1)
    iu, ju = np.triu_indices(n, 1)
    vals = np.asarray(d(nodes[iu], nodes[ju]), dtype=np.float64)
    D = np.full((n, n), np.inf)
    D[iu, ju] = vals
    D[ju, iu] = vals
    # stable sort on distance after id order gives the (dist, id) ranking
    order = np.argsort(D, axis=1, kind="stable")[:, :k]
    dists = np.take_along_axis(D, order, axis=1)
    return KnnGraph(nodes, nodes[order], dists, sweeps=0, evaluations=len(vals))


def find_knn(
    k: int,
    nodes,
    d,
    eps: float = 1e-3,
    rng=None,
    *,
    max_sweeps: int = 100,
    cap: int | None = None,
    shuffle_visits: bool = False,
    init=None,
) -> KnnGraph:
    """Approximate k-nearest-neighbor digraph of ``nodes`` under ``d``.

    Parameters
    ----------
    k : int
        Out-degree. ``k >= len(nodes) - 1`` falls back to the exhaustive
        search (zero sweeps).
    nodes : array_like of int
        Node ids passed to the oracle.
    d : callable
        Batched oracle ``d(ii, jj) -> distances``; must be symmetric.
    eps : float
        Stop once a sweep replaces fewer than ``eps * k * len(nodes)``
        neighbors.
    rng : numpy Generator or seed
    cap : int, optional
        How far into a neighbor's undirected adjacency list the inner
        candidate loop reads. The default ``k`` reads exactly its
        out-neighbors, which keeps a sweep at O(k^2 N) even when a few
        nodes collect many in-edges. Larger values trade cost for recall.
    shuffle_visits : bool
        Visit nodes in random order when applying replacements. The result
        does not depend on the order; exposed for testing that.
    init : ndarray, optional
        Starting out-neighbors as row positions into ``nodes``, one row per
        node, padded with -1. Rows are completed at random.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    nodes = np.asarray(nodes, dtype=np.int64)
    n = nodes.shape[0]
    _check(k, n)
    if k >= n - 1:
        return exhaustive_knn(k, nodes, d)
    rng = make_rng(0 if rng is None else rng)
    seed = np.uint64(rng.integers(0, 2**63))
    cap = k if cap is None else int(cap)
    if cap < 1:
        raise ValueError("cap must be at least 1")

    if init is None:
        idx = _random_init(n, k, seed)
    else:
        init = np.asarray(init, dtype=np.int64)
        if init.ndim != 2 or init.shape[0] != n or init.max(initial=-1) >= n:
            raise ValueError("init must hold one row of positions per node")
        idx = _seeded_init(init, k, seed)
    dist = np.asarray(d(nodes[np.repeat(np.arange(n), k)], nodes[idx.ravel()]), dtype=np.float64).reshape(n, k)
    evals = n * k
    born = np.zeros((n, k), dtype=np.int64)
    _heapify(dist, idx, born)

    changes = []
    sweeps = 0
    while sweeps < max_sweeps:
        ustart, uadj, uflag = _undirected(idx, born, seed, sweeps + 1, cap > k)
        limit = int(min(ustart[n] * min(cap, n), n * (n - 1)))
        src, dst, offs = _candidates(idx, ustart, uadj, uflag, cap, limit)
        cand_d = np.asarray(d(nodes[src], nodes[dst]), dtype=np.float64)
        evals += src.shape[0]
        order = rng.permutation(n) if shuffle_visits else np.arange(n)
        delta = _apply(dist, idx, born, dst, cand_d, offs, order, sweeps + 1)
        sweeps += 1
        changes.append(int(delta))
        if delta < eps * k * n:
            break

    _sort_rows(dist, idx)
    return KnnGraph(nodes, nodes[idx], dist, sweeps=sweeps, evaluations=evals, changes=tuple(changes))


def sweep_count(graph: KnnGraph) -> int:
    """Number of full sweeps the search executed (0 on the exhaustive path)."""
    return graph.sweeps


def knn_recall(approx: KnnGraph, exact: KnnGraph) -> float:
    """Fraction of exact out-neighbors recovered, averaged over nodes."""
    hits = 0
    for a, b in zip(approx.indices, exact.indices):
        hits += len(np.intersect1d(a, b, assume_unique=True))
    return hits / exact.indices.size
