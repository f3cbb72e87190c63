"""Shared data structures: the sparse reconstruction state, samples, candidate
pairs, distance cache and instrumentation records.

The weight map is a numba typed dict keyed by the canonical pair code
``i * n + j`` with ``i < j`` so that the same object can be read and written
from jitted kernels without conversion.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numba
import numpy as np
from numba import njit, types
from numba.typed import Dict

__all__ = [
    "SparseWeights",
    "SampleMatrix",
    "CandidateEdge",
    "RecursionTrace",
    "ConvergenceTrace",
    "DistanceCache",
    "ShapeError",
    "DiagonalWriteError",
    "set_edge",
    "pair_code",
    "make_rng",
]


class ShapeError(ValueError):
    pass


class DiagonalWriteError(ValueError):
    """Raised on attempts to write W_ii; the diagonal lives in ``theta``."""


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator (Philox) seeded from a 64-bit integer or
    a ``SeedSequence``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(seed))


def pair_code(i: int, j: int, n: int) -> int:
    if i > j:
        i, j = j, i
    return i * n + j


def _empty_table():
    return Dict.empty(key_type=types.int64, value_type=types.float64)


# ---------------------------------------------------------------------------
# jitted primitives on the weight table


@njit(cache=True, nogil=True)
def _set_edge(X, sums, table, n, i, j, w):
    if i > j:
        i, j = j, i
    key = i * n + j
    w_old = table.get(key, 0.0)
    dw = w - w_old
    if dw != 0.0:
        xi = X[i]
        xj = X[j]
        si = sums[i]
        sj = sums[j]
        for s in range(X.shape[1]):
            si[s] += dw * xj[s]
            sj[s] += dw * xi[s]
    if w == 0.0:
        if key in table:
            table.pop(key)
    else:
        table[key] = w
    return w_old


@njit(cache=True)
def _recompute_sums(X, table, n):
    sums = np.zeros(X.shape, dtype=np.float64)
    for key, w in table.items():
        i = key // n
        j = key % n
        for s in range(X.shape[1]):
            sums[i, s] += w * X[j, s]
            sums[j, s] += w * X[i, s]
    return sums


@njit(cache=True)
def _table_arrays(table, n):
    size = len(table)
    ii = np.empty(size, dtype=np.int64)
    jj = np.empty(size, dtype=np.int64)
    ww = np.empty(size, dtype=np.float64)
    keys = np.empty(size, dtype=np.int64)
    c = 0
    for key in table.keys():
        keys[c] = key
        c += 1
    keys.sort()
    for c in range(size):
        key = keys[c]
        ii[c] = key // n
        jj[c] = key % n
        ww[c] = table[key]
    return ii, jj, ww


@njit(cache=True)
def _table_fill(table, n, ii, jj, ww):
    for c in range(ii.shape[0]):
        i = ii[c]
        j = jj[c]
        if i > j:
            i, j = j, i
        if ww[c] != 0.0:
            table[i * n + j] = ww[c]


@njit(cache=True)
def _table_lookup(table, codes):
    out = np.empty(codes.shape[0], dtype=np.float64)
    for c in range(codes.shape[0]):
        out[c] = table.get(codes[c], 0.0)
    return out


# ---------------------------------------------------------------------------


class SampleMatrix:
    """N x M data matrix; column ``m`` is one observation of all N nodes.

    Parameters
    ----------
    values : array_like, shape (n, m)
    ising : bool
        If true, every entry must be -1 or +1.
    """

    def __init__(self, values, ising: bool = False):
        values = np.ascontiguousarray(values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1:
            raise ShapeError(f"expected a non-empty 2-d array, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("sample matrix contains non-finite values")
        if ising and not np.all(np.abs(values) == 1.0):
            raise ValueError("Ising samples must be -1 or +1")
        self.values = values
        self.ising = ising

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def __repr__(self):
        return f"SampleMatrix(n={self.n}, m={self.m}, ising={self.ising})"


class SparseWeights:
    """Symmetric sparse weight matrix W with node parameters theta.

    Only the upper triangle is stored and zero weights are never stored.
    ``sums[i, m]`` caches ``sum_j W_ij X_jm`` for the sample matrix the state
    is bound to; it has zero columns for an unbound state (e.g. a ground
    truth from the generator).
    """

    def __init__(self, n: int, m: int = 0, theta=None):
        if n < 1:
            raise ShapeError("node count must be positive")
        self.n = int(n)
        self.theta = np.zeros(n) if theta is None else np.array(theta, dtype=np.float64)
        if self.theta.shape != (n,):
            raise ShapeError("theta must have length n")
        self.sums = np.zeros((n, m))
        self.table = _empty_table()

    @classmethod
    def from_edges(cls, n, ii, jj, ww, theta=None, X: SampleMatrix | None = None):
        state = cls(n, 0 if X is None else X.m, theta)
        ii = np.asarray(ii, dtype=np.int64)
        jj = np.asarray(jj, dtype=np.int64)
        if np.any(ii == jj):
            raise DiagonalWriteError("diagonal entries belong in theta")
        if len(ii) and (min(ii.min(), jj.min()) < 0 or max(ii.max(), jj.max()) >= n):
            raise IndexError("node id out of range")
        _table_fill(state.table, state.n, ii, jj, np.asarray(ww, dtype=np.float64))
        if X is not None:
            state.bind(X)
        return state

    def bind(self, X: SampleMatrix) -> "SparseWeights":
        """Attach to a sample matrix, recomputing the cached sums."""
        if X.n != self.n:
            raise ShapeError(f"samples have {X.n} nodes, state has {self.n}")
        self.sums = _recompute_sums(X.values, self.table, self.n)
        return self

    def copy(self) -> "SparseWeights":
        out = SparseWeights(self.n, 0, self.theta.copy())
        out.sums = self.sums.copy()
        for key, w in self.table.items():
            out.table[key] = w
        return out

    def get(self, i: int, j: int) -> float:
        if i == j:
            raise DiagonalWriteError("diagonal entries belong in theta")
        return self.table.get(pair_code(i, j, self.n), 0.0)

    def arrays(self):
        """Edges as sorted arrays ``(i, j, w)`` with ``i < j``."""
        return _table_arrays(self.table, self.n)

    def edges(self) -> Iterator[tuple[int, int, float]]:
        ii, jj, ww = self.arrays()
        for i, j, w in zip(ii.tolist(), jj.tolist(), ww.tolist()):
            yield i, j, w

    def support(self) -> set[tuple[int, int]]:
        ii, jj, _ = self.arrays()
        return set(zip(ii.tolist(), jj.tolist()))

    def dense(self, diagonal=None) -> np.ndarray:
        W = np.zeros((self.n, self.n))
        ii, jj, ww = self.arrays()
        W[ii, jj] = ww
        W[jj, ii] = ww
        if diagonal is not None:
            W[np.diag_indices(self.n)] = diagonal
        return W

    def __len__(self):
        return len(self.table)

    def __repr__(self):
        return f"SparseWeights(n={self.n}, edges={len(self)})"


def set_edge(state: SparseWeights, i: int, j: int, w: float, X: SampleMatrix) -> SparseWeights:
    """Set ``W_ij = w`` and adjust the cached sums of rows i and j in O(M).

    Writing exactly zero removes the entry.
    """
    if i == j:
        raise DiagonalWriteError("diagonal entries belong in theta")
    if X.n != state.n or state.sums.shape != X.values.shape:
        raise ShapeError("sample matrix does not match the state")
    if not (0 <= i < state.n and 0 <= j < state.n):
        raise IndexError("node id out of range")
    _set_edge(X.values, state.sums, state.table, state.n, int(i), int(j), float(w))
    return state


class CandidateEdge(NamedTuple):
    i: int
    j: int
    dist: float


@dataclass
class RecursionTrace:
    """One row ``(t, N_t, k_t, exhaustive)`` per recursion level."""

    levels: list = field(default_factory=list)

    def add(self, t, n_t, k_t, exhaustive):
        self.levels.append((int(t), int(n_t), int(k_t), bool(exhaustive)))

    def halving_holds(self) -> bool:
        sizes = [lv[1] for lv in self.levels]
        return all(2 * b <= a for a, b in zip(sizes, sizes[1:]))

    def to_tsv(self) -> str:
        return "".join(f"{t}\t{n}\t{k}\t{int(e)}\n" for t, n, k, e in self.levels)


@dataclass
class ConvergenceTrace:
    """Per-iteration rows ``(iteration, delta, seconds, candidates)``.

    ``seconds`` is cumulative wall-clock of the driver, excluding the time
    spent on optional objective evaluation (kept in ``objective``).
    """

    iterations: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    converged: bool = False

    def add(self, it, delta, seconds, candidates, objective=None):
        if delta < 0:
            raise ValueError("delta must be non-negative")
        self.iterations.append((int(it), float(delta), float(seconds), int(candidates)))
        if objective is not None:
            self.objective.append(float(objective))

    @property
    def n_iter(self) -> int:
        return len(self.iterations)

    def to_tsv(self) -> str:
        return "".join(f"{it}\t{d!r}\t{s:.6f}\t{c}\n" for it, d, s, c in self.iterations)


# ---------------------------------------------------------------------------


_EMPTY = -1


@njit(cache=True, inline="always")
def _slot(code, mask):
    z = np.uint64(code) * np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(29))) * np.uint64(0xBF58476D1CE4E5B9)
    return np.int64((z ^ (z >> np.uint64(32))) & np.uint64(mask))


def _new_table(cap):
    # slot p holds its key at 2p and the float bits of its value at 2p + 1;
    # allocated by numpy, which asks for huge pages on large buffers
    tab = np.empty(2 * cap, dtype=np.int64)
    tab[0::2] = _EMPTY
    return tab


@njit(cache=True)
def _rehash(tab, nt):
    mask = nt.shape[0] // 2 - 1
    for h in range(tab.shape[0] // 2):
        key = tab[2 * h]
        if key != _EMPTY:
            p = _slot(key, mask)
            while nt[2 * p] != _EMPTY:
                p = (p + 1) & mask
            nt[2 * p] = key
            nt[2 * p + 1] = tab[2 * h + 1]
    return nt


@njit(cache=True)
def _probe(tab, ii, jj, n, out, where, mi, mj):
    """Look up every pair; absent pairs are inserted once as pending.

    ``where[c]`` is the slot of pair c. Returns the number of distinct
    absent pairs, whose endpoints go to ``mi``/``mj`` and whose slots
    replace ``where`` entries of their first occurrence.
    """
    vals = tab.view(np.float64)
    mask = tab.shape[0] // 2 - 1
    count = 0
    for c in range(ii.shape[0]):
        a = ii[c]
        b = jj[c]
        if a > b:
            a, b = b, a
        code = a * n + b
        p = _slot(code, mask)
        while tab[2 * p] != _EMPTY and tab[2 * p] != code:
            p = (p + 1) & mask
        if tab[2 * p] == _EMPTY:
            tab[2 * p] = code
            vals[2 * p + 1] = np.nan
            mi[count] = a
            mj[count] = b
            count += 1
        where[c] = p
        out[c] = vals[2 * p + 1]
    return count


@njit(cache=True)
def _fill(tab, values, out, where):
    vals = tab.view(np.float64)
    filled = 0
    for c in range(where.shape[0]):
        p = where[c]
        if out[c] != out[c]:
            if vals[2 * p + 1] != vals[2 * p + 1]:
                vals[2 * p + 1] = values[filled]
                filled += 1
            out[c] = vals[2 * p + 1]


class DistanceCache:
    """Memo of ``d(i, j)`` keyed by unordered pair, valid for one generation.

    A generation spans one candidate search, during which W is frozen.
    Storage is an open-addressing hash table (linear probing, load factor
    at most 0.7) with keys and values interleaved. Batches are processed
    serially so the get-or-compute sequence is linearizable.
    """

    _LOAD = 0.7

    def __init__(self, capacity: int = 1024):
        self._cap0 = 1 << max(4, int(capacity - 1).bit_length())
        self.generation = 0
        self.hits = 0
        self.misses = 0
        self._reset()

    def _reset(self):
        self._tab = _new_table(self._cap0)
        self._count = 0

    def clear(self):
        """Start a new generation; the grown table is kept for reuse."""
        self._tab[0::2] = _EMPTY
        self._count = 0
        self.generation += 1

    def __len__(self):
        return self._count

    def _reserve(self, extra):
        cap = self._tab.shape[0] // 2
        if self._count + extra > self._LOAD * cap:
            while self._count + extra > self._LOAD * cap:
                cap *= 2
            self._tab = _rehash(self._tab, _new_table(cap))

    def wrap(self, oracle, n):
        """Return a batched oracle that consults this cache first."""

        def cached(ii, jj):
            ii = np.ascontiguousarray(ii, dtype=np.int64)
            jj = np.ascontiguousarray(jj, dtype=np.int64)
            size = ii.shape[0]
            self._reserve(size)
            out = np.empty(size)
            where = np.empty(size, dtype=np.int64)
            mi = np.empty(size, dtype=np.int64)
            mj = np.empty(size, dtype=np.int64)
            count = _probe(self._tab, ii, jj, n, out, where, mi, mj)
            if count:
                try:
                    vals = np.asarray(oracle(mi[:count], mj[:count]), dtype=np.float64)
                    if not np.all(np.isfinite(vals)):
                        raise FloatingPointError("distance oracle returned non-finite values")
                except BaseException:
                    # pending slots would break the probe chains; start over
                    self._reset()
                    raise
                _fill(self._tab, vals, out, where)
                self._count += count
            self.misses += count
            self.hits += size - count
            return out

        return cached


def numba_threads(threads: int) -> int:
    """Clamp a requested thread count to what numba was started with."""
    return max(1, min(int(threads), numba.config.NUMBA_NUM_THREADS))
