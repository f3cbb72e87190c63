"""Pseudolikelihood objectives with a Laplace prior.

Two node-conditional models are supported:

* ``ising``: ``x_i = +-1`` with ``P(x_i | rest) = exp(x_i h_i) / 2cosh(h_i)``,
  ``h_i = m_i + theta_i``.
* ``gaussian``: ``x_i | rest ~ Normal(-theta_i^2 m_i, theta_i^2)`` where
  ``theta_i = 1/sqrt(W_ii)``.

Here ``m_i = sum_j W_ij x_j`` is kept in ``SparseWeights.sums``. The log
posterior drops the additive constants ``N M log(2 pi)/2`` (Gaussian) and the
``log(lambda/2)`` per pair of the prior, so only differences are meaningful.

Every function restricted to a single ``W_ij`` touches rows i and j only and
costs O(M).
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from numba import njit, prange

from .core import (
    DistanceCache,
    SampleMatrix,
    ShapeError,
    SparseWeights,
    _recompute_sums,
    numba_threads,
)

__all__ = [
    "ModelObjective",
    "OptimizationWarning",
    "log_posterior",
    "naive_log_posterior",
    "optimize_edge",
    "optimize_theta",
    "update_theta",
    "edge_gradient",
    "distance",
    "ising_conditional",
    "THETA_MAX",
    "THETA_MIN",
]

ISING = 0
GAUSSIAN = 1
KINDS = {"ising": ISING, "gaussian": GAUSSIAN}

EXACT = 0
GRADIENT = 1
MODES = {"exact": EXACT, "gradient": GRADIENT}

THETA_MAX = 20.0
THETA_MIN = 1e-8
# largest |W_ij| the edge search will expand to
W_MAX = 1e12
_MAXIT = 200
_XTOL = 1e-12


class OptimizationWarning(RuntimeWarning):
    pass


# ---------------------------------------------------------------------------
# jitted kernels


@njit(cache=True, nogil=True, inline="always")
def _log2cosh(z):
    a = abs(z)
    return a + math.log1p(math.exp(-2.0 * a))


@njit(cache=True, nogil=True)
def _node_loglik(kind, x, s, theta):
    tot = 0.0
    if kind == ISING:
        for k in range(x.shape[0]):
            h = s[k] + theta
            tot += x[k] * h - _log2cosh(h)
    else:
        t2 = theta * theta
        for k in range(x.shape[0]):
            r = x[k] + t2 * s[k]
            tot -= r * r / (2.0 * t2)
        tot -= x.shape[0] * math.log(theta)
    return tot


@njit(cache=True)
def _log_posterior(kind, X, sums, theta, lam, table):
    tot = 0.0
    for i in range(X.shape[0]):
        tot += _node_loglik(kind, X[i], sums[i], theta[i])
    pen = 0.0
    for w in table.values():
        pen += abs(w)
    return tot - lam * pen


@njit(cache=True, nogil=True, inline="always")
def _gauss_slope(X, sums, theta, i, j, dw):
    ti2 = theta[i] * theta[i]
    tj2 = theta[j] * theta[j]
    g = 0.0
    c = 0.0
    for k in range(X.shape[1]):
        xi = X[i, k]
        xj = X[j, k]
        ri = xi + ti2 * (sums[i, k] + dw * xj)
        rj = xj + tj2 * (sums[j, k] + dw * xi)
        g -= ri * xj + rj * xi
        c -= ti2 * xj * xj + tj2 * xi * xi
    return g, c


@njit(cache=True, nogil=True, inline="always")
def _gauss_edge(X, sums, theta, lam, i, j, w_old):
    # the slice is an exact quadratic: a soft-thresholded Newton step,
    # and the gain follows from the same two coefficients
    g0, c0 = _gauss_slope(X, sums, theta, i, j, -w_old)
    w = 0.0
    if abs(g0) > lam:
        s = 1.0 if g0 > 0.0 else -1.0
        w = s * (s * g0 - lam) / -c0
    dw = w - w_old
    gain = (g0 + c0 * w_old) * dw + 0.5 * c0 * dw * dw - lam * (abs(w) - abs(w_old))
    return w, gain


@njit(cache=True, nogil=True)
def _pair_slope(kind, X, sums, theta, i, j, dw):
    """First and second derivative of the data term in W_ij, at W_ij + dw."""
    g = 0.0
    c = 0.0
    if kind == ISING:
        ti = theta[i]
        tj = theta[j]
        for k in range(X.shape[1]):
            xi = X[i, k]
            xj = X[j, k]
            a = math.tanh(sums[i, k] + dw * xj + ti)
            b = math.tanh(sums[j, k] + dw * xi + tj)
            g += xj * (xi - a) + xi * (xj - b)
            c -= xj * xj * (1.0 - a * a) + xi * xi * (1.0 - b * b)
    else:
        g, c = _gauss_slope(X, sums, theta, i, j, dw)
    return g, c


@njit(cache=True, nogil=True)
def _pair_change(kind, X, sums, theta, i, j, dw):
    """Change of the data term when W_ij moves by dw."""
    if dw == 0.0:
        return 0.0
    if kind == GAUSSIAN:
        # exactly quadratic in dw
        g, c = _pair_slope(kind, X, sums, theta, i, j, 0.0)
        return g * dw + 0.5 * c * dw * dw
    xi = X[i]
    xj = X[j]
    si = sums[i]
    sj = sums[j]
    ti = theta[i]
    tj = theta[j]
    tot = 0.0
    for k in range(X.shape[1]):
        hi = si[k] + ti
        hj = sj[k] + tj
        tot += 2.0 * dw * xi[k] * xj[k]
        tot -= _log2cosh(hi + dw * xj[k]) - _log2cosh(hi)
        tot -= _log2cosh(hj + dw * xi[k]) - _log2cosh(hj)
    return tot


@njit(cache=True, nogil=True)
def _optimize_edge(kind, X, sums, theta, lam, i, j, w_old):
    """Exact maximizer of the 1-D slice in W_ij.

    Returns ``(w_star, gain, status)``; status 1 flags a bracket that could
    not be closed before ``W_MAX``/``_MAXIT`` (best point returned).
    """
    if kind == GAUSSIAN:
        w, gain = _gauss_edge(X, sums, theta, lam, i, j, w_old)
        return w, gain, 0
    g0, c0 = _pair_slope(kind, X, sums, theta, i, j, -w_old)
    status = 0
    if abs(g0) <= lam:
        w = 0.0
    else:
        # on the side s*w > 0 the objective is smooth; phi(u) is the slope
        # along u = s*w, decreasing, with phi(0) > 0
        s = 1.0 if g0 > 0.0 else -1.0
        ulo = 0.0
        uhi = np.inf
        u = 0.0
        f = s * g0 - lam
        c = c0
        done = False
        for _ in range(_MAXIT):
            cand = np.nan
            if c < 0.0:
                cand = u - f / c
            if not (cand > ulo and cand < uhi):
                if uhi == np.inf:
                    cand = max(2.0 * ulo, 1.0)
                else:
                    cand = 0.5 * (ulo + uhi)
            if cand > W_MAX:
                status = 1
                break
            step = abs(cand - u)
            u = cand
            g, c = _pair_slope(kind, X, sums, theta, i, j, s * u - w_old)
            f = s * g - lam
            if f > 0.0:
                ulo = u
            elif f < 0.0:
                uhi = u
            else:
                done = True
                break
            scale = max(1.0, u)
            if step <= _XTOL * scale or (uhi - ulo) <= _XTOL * scale:
                done = True
                break
        if not done and status == 0:
            status = 1
        w = s * u
    gain = _pair_change(kind, X, sums, theta, i, j, w - w_old) - lam * (abs(w) - abs(w_old))
    return w, gain, status


@njit(cache=True, nogil=True)
def _edge_distance(kind, mode, X, sums, theta, lam, i, j, w):
    if mode == EXACT:
        _, gain, _ = _optimize_edge(kind, X, sums, theta, lam, i, j, w)
        return -gain
    g, _ = _pair_slope(kind, X, sums, theta, i, j, 0.0)
    if w > 0.0:
        g -= lam
    elif w < 0.0:
        g += lam
    else:
        # minimum-norm subgradient at the kink
        g = max(abs(g) - lam, 0.0)
    return -abs(g)


@njit(cache=True, parallel=True)
def _pair_distances(kind, mode, X, sums, theta, lam, table, n, ii, jj):
    out = np.empty(ii.shape[0])
    empty = len(table) == 0
    for c in prange(ii.shape[0]):
        i = ii[c]
        j = jj[c]
        if i > j:
            i, j = j, i
        w = 0.0 if empty else table.get(i * n + j, 0.0)
        if kind == GAUSSIAN and mode == EXACT:
            out[c] = -_gauss_edge(X, sums, theta, lam, i, j, w)[1]
        else:
            out[c] = _edge_distance(kind, mode, X, sums, theta, lam, i, j, w)
    return out


@njit(cache=True, nogil=True)
def _optimize_theta(kind, x, s, theta):
    """Returns ``(theta_star, status)``; status 1 means clamped."""
    M = x.shape[0]
    if M == 0:
        return theta, 0
    if kind == GAUSSIAN:
        A = 0.0
        C = 0.0
        for k in range(M):
            A += x[k] * x[k]
            C += s[k] * s[k]
        # root of C t^2 + M t - A = 0 in t = theta^2, written stably
        t = 2.0 * A / (M + math.sqrt(M * M + 4.0 * A * C))
        th = math.sqrt(t)
        if th < THETA_MIN:
            return THETA_MIN, 1
        return th, 0
    # Ising: phi(theta) = sum x - tanh(m + theta) is decreasing
    lo = -THETA_MAX
    hi = THETA_MAX
    f_hi = 0.0
    f_lo = 0.0
    for k in range(M):
        f_hi += x[k] - math.tanh(s[k] + hi)
        f_lo += x[k] - math.tanh(s[k] + lo)
    if f_hi >= 0.0:
        return THETA_MAX, 1
    if f_lo <= 0.0:
        return -THETA_MAX, 1
    th = min(max(theta, lo), hi)
    for _ in range(_MAXIT):
        f = 0.0
        c = 0.0
        for k in range(M):
            a = math.tanh(s[k] + th)
            f += x[k] - a
            c -= 1.0 - a * a
        if f > 0.0:
            lo = th
        elif f < 0.0:
            hi = th
        else:
            break
        cand = th - f / c if c < 0.0 else np.nan
        if not (cand > lo and cand < hi):
            cand = 0.5 * (lo + hi)
        step = abs(cand - th)
        th = cand
        if step <= _XTOL * max(1.0, abs(th)) or hi - lo <= _XTOL:
            break
    return th, 0


@njit(cache=True)
def _theta_pass(kind, X, sums, theta):
    clamped = 0
    for i in range(X.shape[0]):
        th, st = _optimize_theta(kind, X[i], sums[i], theta[i])
        theta[i] = th
        clamped += st
    return clamped


# ---------------------------------------------------------------------------


class ModelObjective:
    """A pseudolikelihood objective bound to data and a reconstruction state.

    Parameters
    ----------
    kind : {'ising', 'gaussian'}
    X : SampleMatrix
    lam : float
        L1 penalty of the Laplace prior.
    state : SparseWeights, optional
        Warm start. By default the empty network, with every ``theta_i`` set
        to its optimum given empty W.
    """

    def __init__(self, kind: str, X: SampleMatrix, lam: float = 0.0, state: SparseWeights | None = None):
        if kind not in KINDS:
            raise ValueError(f"unknown model kind {kind!r}")
        if lam < 0 or not np.isfinite(lam):
            raise ValueError("lambda must be finite and non-negative")
        if kind == "ising" and not np.all(np.abs(X.values) == 1.0):
            raise ValueError("Ising model requires +-1 data")
        self.kind = kind
        self.code = KINDS[kind]
        self.X = X
        self.lam = float(lam)
        self.n_evals = 0
        if state is None:
            state = SparseWeights(X.n, X.m, np.ones(X.n) if kind == "gaussian" else None)
            self.state = state
            update_theta(self)
        else:
            if state.n != X.n:
                raise ShapeError("state and samples disagree on N")
            if state.sums.shape != X.values.shape:
                state.bind(X)
            self.state = state
        if kind == "gaussian" and not np.all(self.state.theta > 0):
            raise ValueError("Gaussian model requires theta > 0")

    @property
    def n(self) -> int:
        return self.X.n

    def distances(self, ii, jj, mode: str = "exact", threads: int = 1) -> np.ndarray:
        """Vectorized ``d(i, j)`` for the current (frozen) state."""
        ii = np.asarray(ii, dtype=np.int64)
        jj = np.asarray(jj, dtype=np.int64)
        if np.any(ii == jj):
            raise ValueError("distance is undefined for i == j")
        self.n_evals += ii.shape[0]
        import numba

        prev = numba.get_num_threads()
        numba.set_num_threads(numba_threads(threads))
        try:
            st = self.state
            out = _pair_distances(
                self.code, MODES[mode], self.X.values, st.sums, st.theta, self.lam, st.table, st.n, ii, jj
            )
        finally:
            numba.set_num_threads(prev)
        if not np.all(np.isfinite(out)):
            raise FloatingPointError("non-finite distance")
        return out

    def oracle(self, mode: str = "exact", threads: int = 1):
        """A batched distance callable ``d(ii, jj)`` suitable for the searches."""
        if mode not in MODES:
            raise ValueError(f"unknown distance mode {mode!r}")
        return lambda ii, jj: self.distances(ii, jj, mode, threads)

    def __repr__(self):
        return f"ModelObjective({self.kind!r}, n={self.n}, m={self.X.m}, lam={self.lam})"


def log_posterior(model: ModelObjective) -> float:
    st = model.state
    val = _log_posterior(model.code, model.X.values, st.sums, st.theta, model.lam, st.table)
    if not math.isfinite(val):
        raise FloatingPointError("log posterior overflowed")
    return val


def naive_log_posterior(model: ModelObjective, state: SparseWeights | None = None) -> float:
    """Reference evaluator: recomputes every neighbor sum from a dense W."""
    st = model.state if state is None else state
    X = model.X.values
    W = st.dense()
    S = W @ X
    th = st.theta[:, None]
    if model.kind == "ising":
        H = S + th
        ll = np.sum(X * H - np.logaddexp(H, -H))
    else:
        ll = np.sum(-((X + th**2 * S) ** 2) / (2 * th**2)) - X.shape[1] * np.sum(np.log(st.theta))
    _, _, ww = st.arrays()
    return float(ll - model.lam * np.abs(ww).sum())


def _check_pair(model, i, j):
    if i == j:
        raise ValueError("i == j: the diagonal is optimized through theta")
    if not (0 <= i < model.n and 0 <= j < model.n):
        raise IndexError("node id out of range")


def optimize_edge(model: ModelObjective, i: int, j: int) -> tuple[float, float]:
    """Maximize the log posterior over ``W_ij`` alone.

    Returns ``(w_star, new_dist)`` where ``new_dist`` is minus the achieved
    improvement of the log posterior. The state is not modified.
    """
    _check_pair(model, i, j)
    st = model.state
    w_old = st.get(i, j)
    w, gain, status = _optimize_edge(
        model.code, model.X.values, st.sums, st.theta, model.lam, min(i, j), max(i, j), w_old
    )
    if status:
        warnings.warn(
            f"edge ({i}, {j}): maximum not bracketed, returning best point {w:.6g}",
            OptimizationWarning,
            stacklevel=2,
        )
    return w, -gain


def optimize_theta(model: ModelObjective, i: int) -> float:
    """Maximizer of the log posterior over ``theta_i`` (state unchanged).

    Clamped to ``|theta| <= THETA_MAX`` (Ising) or ``theta >= THETA_MIN``
    (Gaussian), with a warning.
    """
    st = model.state
    th, status = _optimize_theta(model.code, model.X.values[i], st.sums[i], st.theta[i])
    if status:
        warnings.warn(f"theta[{i}] clamped to {th:g}", OptimizationWarning, stacklevel=2)
    return th


def update_theta(model: ModelObjective) -> int:
    """One pass of ``optimize_theta`` over all nodes, applied in place.

    Returns the number of clamped nodes.
    """
    st = model.state
    clamped = _theta_pass(model.code, model.X.values, st.sums, st.theta)
    if clamped:
        warnings.warn(f"{clamped} theta values clamped to their bounds", OptimizationWarning, stacklevel=2)
    return clamped


def edge_gradient(model: ModelObjective, i: int, j: int) -> float:
    """Analytic ``d log pi / d W_ij`` at the current state.

    At ``W_ij = 0`` the prior term is taken as zero (the symmetric limit,
    matching a central difference).
    """
    _check_pair(model, i, j)
    st = model.state
    g, _ = _pair_slope(model.code, model.X.values, st.sums, st.theta, min(i, j), max(i, j), 0.0)
    return g - model.lam * np.sign(st.get(i, j))


def distance(model: ModelObjective, i: int, j: int, mode: str = "exact", cache: DistanceCache | None = None) -> float:
    """``d(i, j)`` for the frozen state.

    ``exact`` is minus the best achievable change of the log posterior over
    ``W_ij``; ``gradient`` is minus the norm of the minimum-norm
    (sub)gradient. Results are memoized in ``cache`` if given.
    """
    _check_pair(model, i, j)
    fn = model.oracle(mode)
    if cache is not None:
        fn = cache.wrap(fn, model.n)
    return float(fn(np.array([i]), np.array([j]))[0])


def ising_conditional(model: ModelObjective, i: int, sample: int, value: int) -> float:
    """``P(x_i = value | rest)`` for one sample under the Ising model."""
    h = model.state.sums[i, sample] + model.state.theta[i]
    return float(np.exp(value * h - np.logaddexp(h, -h)))


def recompute_sums(model: ModelObjective) -> np.ndarray:
    return _recompute_sums(model.X.values, model.state.table, model.n)
