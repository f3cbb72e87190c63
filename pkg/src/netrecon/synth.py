"""Synthetic ground truths and samplers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from numba import njit

from .core import SampleMatrix, SparseWeights, make_rng
from .nndescent import _randint

__all__ = [
    "GeneratorSpec",
    "NotPositiveDefiniteError",
    "gen_er_precision",
    "precision_matrix",
    "sample_gaussian",
    "sample_ising",
]


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class GeneratorSpec:
    """Erdos-Renyi precision matrix with normal weights.

    The diagonal is ``W_ii = sum_j |W_ij| / (1 - epsilon)^2``.
    """

    n: int
    mean_deg: float = 5.0
    weight_mu: float = -1e3
    weight_sigma: float = 10.0
    epsilon: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not 0 <= self.mean_deg < self.n - 1:
            raise ValueError("mean degree must lie in [0, n-1)")
        if not 0 < self.epsilon < 1:
            raise ValueError("epsilon must lie in (0, 1)")


def _er_pairs(n, p, rng):
    """Edge set of G(n, p) without enumerating all pairs."""
    total = n * (n - 1) // 2
    count = rng.binomial(total, p)
    codes = np.empty(0, dtype=np.int64)
    while codes.shape[0] < count:
        need = count - codes.shape[0]
        a = rng.integers(0, n, size=2 * need + 16)
        b = rng.integers(0, n, size=2 * need + 16)
        ok = a != b
        lo = np.minimum(a, b)[ok]
        hi = np.maximum(a, b)[ok]
        new = lo * n + hi
        # keep first occurrences in draw order so the result is uniform
        merged = np.concatenate([codes, new])
        _, first = np.unique(merged, return_index=True)
        codes = merged[np.sort(first)][:count]
    codes = np.sort(codes)
    return codes // n, codes % n


def gen_er_precision(spec: GeneratorSpec) -> SparseWeights:
    """Ground truth precision: off-diagonal in the weight map, diagonal
    stored as ``theta_i = 1/sqrt(W_ii)``.

    Nodes without edges get ``W_ii = 1``.
    """
    rng = make_rng(spec.seed)
    ii, jj = _er_pairs(spec.n, spec.mean_deg / (spec.n - 1), rng)
    ww = rng.normal(spec.weight_mu, spec.weight_sigma, size=ii.shape[0])
    ww[ww == 0.0] = spec.weight_mu or 1.0
    rowsum = np.bincount(ii, np.abs(ww), spec.n) + np.bincount(jj, np.abs(ww), spec.n)
    diag = rowsum / (1.0 - spec.epsilon) ** 2
    diag[rowsum == 0] = 1.0
    return SparseWeights.from_edges(spec.n, ii, jj, ww, theta=1.0 / np.sqrt(diag))


def precision_matrix(truth: SparseWeights, sparse: bool = False):
    """Full precision matrix with diagonal ``1/theta^2``."""
    ii, jj, ww = truth.arrays()
    diag = 1.0 / truth.theta**2
    if sparse:
        n = truth.n
        rows = np.concatenate([ii, jj, np.arange(n)])
        cols = np.concatenate([jj, ii, np.arange(n)])
        vals = np.concatenate([ww, ww, diag])
        return scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return truth.dense(diagonal=diag)


def sample_gaussian(truth: SparseWeights, M: int, seed=0, method: str = "auto") -> SampleMatrix:
    """M i.i.d. draws of ``Normal(0, W^-1)`` as an N x M matrix.

    ``dense`` factors ``W = L L^T`` and solves ``L^T x = z``. ``sparse``
    is meant for large diagonally dominant W: it draws ``y ~ Normal(0, W)``
    from the edge decomposition ``W = sum_e |w_e| b_e b_e^T + diag(r)`` and
    solves ``W x = y`` by conjugate gradients. ``auto`` picks dense up to
    N = 5000.
    """
    rng = make_rng(seed)
    n = truth.n
    if method == "auto":
        method = "dense" if n <= 5000 else "sparse"
    if method == "dense":
        W = precision_matrix(truth)
        try:
            L = np.linalg.cholesky(W)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError("precision matrix is not positive definite") from exc
        z = rng.standard_normal((n, M))
        x = scipy.linalg.solve_triangular(L, z, lower=True, trans="T")
        return SampleMatrix(x)
    if method != "sparse":
        raise ValueError(f"unknown method {method!r}")
    ii, jj, ww = truth.arrays()
    diag = 1.0 / truth.theta**2
    resid = diag - np.bincount(ii, np.abs(ww), n) - np.bincount(jj, np.abs(ww), n)
    if np.any(resid < -1e-9 * diag):
        raise NotPositiveDefiniteError("sparse sampling needs a diagonally dominant precision")
    resid = np.maximum(resid, 0.0)
    W = precision_matrix(truth, sparse=True)
    ze = rng.standard_normal((ii.shape[0], M)) * np.sqrt(np.abs(ww))[:, None]
    y = np.sqrt(resid)[:, None] * rng.standard_normal((n, M))
    np.add.at(y, ii, ze)
    np.add.at(y, jj, np.sign(ww)[:, None] * ze)
    precond = scipy.sparse.diags(1.0 / diag)
    x = np.empty((n, M))
    for c in range(M):
        sol, info = scipy.sparse.linalg.cg(W, y[:, c], rtol=1e-12, atol=0.0, maxiter=20 * n, M=precond)
        if info != 0:
            raise NotPositiveDefiniteError(f"conjugate gradients did not converge (info={info})")
        x[:, c] = sol
    return SampleMatrix(x)


@njit(cache=True)
def _gibbs(start, adj, wts, theta, M, burn_in, thin, seed):
    n = theta.shape[0]
    x = np.empty(n)
    ctr = 0
    for i in range(n):
        x[i] = 1.0 if _randint(seed, 0, ctr, 2) == 1 else -1.0
        ctr += 1
    out = np.empty((n, M))
    total = burn_in + M * thin
    two53 = 9007199254740992.0
    rec = 0
    for sweep in range(1, total + 1):
        for i in range(n):
            h = theta[i]
            for p in range(start[i], start[i + 1]):
                h += wts[p] * x[adj[p]]
            # P(x_i = +1 | rest) = 1 / (1 + exp(-2h))
            u = _randint(seed, 1, ctr, 9007199254740992) / two53
            ctr += 1
            x[i] = 1.0 if u * (1.0 + np.exp(-2.0 * h)) < 1.0 else -1.0
        if sweep > burn_in and (sweep - burn_in) % thin == 0:
            out[:, rec] = x
            rec += 1
    return out


def sample_ising(truth: SparseWeights, M: int, burn_in: int = 1000, thin: int = 10, seed=0) -> SampleMatrix:
    """Gibbs sampler with sequential single-site updates.

    One sample is kept every ``thin`` sweeps after ``burn_in`` sweeps.
    """
    if thin < 1 or burn_in < 0:
        raise ValueError("thin must be >= 1 and burn_in >= 0")
    ii, jj, ww = truth.arrays()
    if not np.all(np.isfinite(ww)) or not np.all(np.isfinite(truth.theta)):
        raise ValueError("weights must be finite")
    A = scipy.sparse.csr_matrix(
        (np.concatenate([ww, ww]), (np.concatenate([ii, jj]), np.concatenate([jj, ii]))), shape=(truth.n, truth.n)
    )
    rng = make_rng(seed)
    s = np.uint64(rng.integers(0, 2**63))
    out = _gibbs(
        A.indptr.astype(np.int64), A.indices.astype(np.int64), A.data, truth.theta.astype(np.float64),
        M, burn_in, thin, s,
    )
    return SampleMatrix(out, ising=True)
