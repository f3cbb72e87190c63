"""Reconstruction drivers: greedy coordinate descent and the exhaustive
coordinate-descent baseline."""

from __future__ import annotations

import threading
import warnings
from collections import deque
from dataclasses import dataclass
from time import perf_counter

import numpy as np
from numba import njit

from .core import ConvergenceTrace, DistanceCache, _set_edge, make_rng
from .findbest import find_best
from .models import (
    MODES,
    ModelObjective,
    OptimizationWarning,
    _optimize_edge,
    log_posterior,
    update_theta,
)

__all__ = ["ReconstructionConfig", "reconstruct_gcd", "reconstruct_cd", "candidate_budget"]


@dataclass
class ReconstructionConfig:
    """Driver settings.

    ``eps=None`` means ``1e-6 * N``. ``theta_policy`` is ``'pass'`` (one
    full theta pass after each iteration's edge updates) or ``'fixed'``.
    """

    kappa: float = 1.0
    eps: float | None = None
    max_iters: int = 1000
    distance: str = "exact"
    theta_policy: str = "pass"
    seed: int = 0
    threads: int = 1
    record_objective: bool = False

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if self.eps is not None and not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.distance not in MODES:
            raise ValueError(f"unknown distance mode {self.distance!r}")
        if self.theta_policy not in ("pass", "fixed"):
            raise ValueError(f"unknown theta policy {self.theta_policy!r}")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")

    def tolerance(self, n: int) -> float:
        return 1e-6 * n if self.eps is None else self.eps


def candidate_budget(kappa: float, n: int) -> int:
    """``kappa * N`` rounded half-to-even, at least one."""
    return max(1, round(kappa * n))


# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _move(X, sums, i, j, dw):
    xi = X[i]
    xj = X[j]
    si = sums[i]
    sj = sums[j]
    for s in range(X.shape[1]):
        si[s] += dw * xj[s]
        sj[s] += dw * xi[s]


@njit(cache=True)
def _update_pairs(kind, X, sums, theta, lam, table, n, ii, jj):
    delta = 0.0
    failed = 0
    for c in range(ii.shape[0]):
        i = min(ii[c], jj[c])
        j = max(ii[c], jj[c])
        w_old = table.get(i * n + j, 0.0)
        w, _, status = _optimize_edge(kind, X, sums, theta, lam, i, j, w_old)
        failed += status
        if w != w_old:
            delta += abs(w - w_old)
            _set_edge(X, sums, table, n, i, j, w)
    return delta, failed


@njit(cache=True)
def _cd_sweep(kind, X, sums, theta, lam, table, n):
    delta = 0.0
    failed = 0
    for i in range(n):
        for j in range(i + 1, n):
            w_old = table.get(i * n + j, 0.0)
            w, _, status = _optimize_edge(kind, X, sums, theta, lam, i, j, w_old)
            failed += status
            if w != w_old:
                delta += abs(w - w_old)
                _set_edge(X, sums, table, n, i, j, w)
    return delta, failed


@njit(cache=True, nogil=True)
def _update_locked(kind, X, sums, theta, lam, i, j, w_old):
    w, _, status = _optimize_edge(kind, X, sums, theta, lam, i, j, w_old)
    if w != w_old:
        _move(X, sums, i, j, w - w_old)
    return w, status


def _update_parallel(model: ModelObjective, ii, jj, threads: int):
    """Edge updates from a worker pool.

    A worker must hold both endpoint locks, acquired without blocking; on
    contention the pair goes to the back of the queue to be revisited.
    """
    st = model.state
    n = st.n
    X = model.X.values
    locks = [threading.Lock() for _ in range(n)]
    table_lock = threading.Lock()
    queue_lock = threading.Lock()
    pending = deque(zip(ii.tolist(), jj.tolist()))
    totals = []
    errors = []

    def work():
        delta = 0.0
        failed = 0
        try:
            while True:
                with queue_lock:
                    if not pending:
                        break
                    i, j = pending.popleft()
                if i > j:
                    i, j = j, i
                li, lj = locks[i], locks[j]
                if li.acquire(blocking=False):
                    if lj.acquire(blocking=False):
                        try:
                            key = i * n + j
                            with table_lock:
                                w_old = st.table.get(key, 0.0)
                            w, status = _update_locked(model.code, X, st.sums, st.theta, model.lam, i, j, w_old)
                            failed += status
                            if w != w_old:
                                delta += abs(w - w_old)
                                with table_lock:
                                    if w == 0.0:
                                        st.table.pop(key)
                                    else:
                                        st.table[key] = w
                        finally:
                            lj.release()
                            li.release()
                        continue
                    li.release()
                with queue_lock:
                    pending.append((i, j))
        except BaseException as exc:  # surfaced in the caller
            errors.append(exc)
        totals.append((delta, failed))

    workers = [threading.Thread(target=work) for _ in range(threads)]
    for t in workers:
        t.start()
    for t in workers:
        t.join()
    if errors:
        raise errors[0]
    return sum(t[0] for t in totals), sum(t[1] for t in totals)


def _apply_updates(model, ii, jj, threads):
    st = model.state
    ii = np.ascontiguousarray(ii, dtype=np.int64)
    jj = np.ascontiguousarray(jj, dtype=np.int64)
    if threads > 1:
        delta, failed = _update_parallel(model, ii, jj, threads)
    else:
        delta, failed = _update_pairs(model.code, model.X.values, st.sums, st.theta, model.lam, st.table, st.n, ii, jj)
    if failed:
        warnings.warn(f"{failed} edge optimizations returned an unbracketed point", OptimizationWarning, stacklevel=3)
    return delta


def _theta_step(model, policy):
    if policy == "pass":
        with warnings.catch_warnings():
            # clamping of degenerate columns is expected and repeats every pass
            warnings.simplefilter("ignore", OptimizationWarning)
            update_theta(model)


def reconstruct_gcd(model: ModelObjective, cfg: ReconstructionConfig | None = None, search=None):
    """Greedy coordinate descent.

    Each iteration asks the candidate search for the ``round(kappa N)`` pairs
    with the smallest distance under the current state, applies the exact
    1-D update to each in ascending distance order, then refreshes theta.
    Stops once the summed absolute weight change of an iteration drops below
    ``eps`` or after ``max_iters`` iterations (``trace.converged`` False).

    Parameters
    ----------
    model : ModelObjective
        Mutated in place; ``model.state`` is also returned.
    cfg : ReconstructionConfig
    search : callable, optional
        Replacement for :func:`find_best` with the same signature.

    Returns
    -------
    state : SparseWeights
    trace : ConvergenceTrace
    """
    cfg = ReconstructionConfig() if cfg is None else cfg
    search = find_best if search is None else search
    n = model.n
    eps = cfg.tolerance(n)
    m = candidate_budget(cfg.kappa, n)
    nodes = np.arange(n)
    seeds = np.random.SeedSequence(cfg.seed)
    cache = DistanceCache()
    oracle = model.oracle(cfg.distance, cfg.threads)
    trace = ConvergenceTrace()
    clock = 0.0
    for it in range(1, cfg.max_iters + 1):
        t0 = perf_counter()
        best = search(m, nodes, oracle, make_rng(seeds.spawn(1)[0]), cache=cache)
        delta = _apply_updates(model, best.i, best.j, cfg.threads)
        _theta_step(model, cfg.theta_policy)
        clock += perf_counter() - t0
        obj = log_posterior(model) if cfg.record_objective else None
        trace.add(it, delta, clock, len(best), obj)
        if delta < eps:
            trace.converged = True
            break
    return model.state, trace


def reconstruct_cd(model: ModelObjective, eps: float | None = None, max_iters: int = 1000,
                   theta_policy: str = "pass", record_objective: bool = False):
    """Cyclic coordinate descent over every pair ``i < j``.

    The quadratic baseline; same stopping rule and theta policy as
    :func:`reconstruct_gcd`.
    """
    n = model.n
    eps = 1e-6 * n if eps is None else eps
    st = model.state
    trace = ConvergenceTrace()
    clock = 0.0
    for it in range(1, max_iters + 1):
        t0 = perf_counter()
        delta, failed = _cd_sweep(model.code, model.X.values, st.sums, st.theta, model.lam, st.table, n)
        if failed:
            warnings.warn(f"{failed} edge optimizations returned an unbracketed point", OptimizationWarning, stacklevel=2)
        _theta_step(model, theta_policy)
        clock += perf_counter() - t0
        obj = log_posterior(model) if record_objective else None
        trace.add(it, delta, clock, n * (n - 1) // 2, obj)
        if delta < eps:
            trace.converged = True
            break
    return st, trace
