"""Desk-scale experiment harness: FindBest runtime scaling, recall curves,
convergence traces and support metrics against a ground truth."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from time import perf_counter

import numpy as np

from .core import DistanceCache, SampleMatrix, SparseWeights
from .findbest import find_best, find_best_exhaustive, recall_curve
from .gcd import ReconstructionConfig, candidate_budget, reconstruct_cd, reconstruct_gcd
from .models import ModelObjective, OptimizationWarning
from .synth import GeneratorSpec, gen_er_precision, sample_gaussian

__all__ = [
    "ScalingReport",
    "gaussian_instance",
    "bench_findbest_scaling",
    "bench_recall",
    "bench_convergence",
    "time_to_objective",
    "eval_reconstruction",
    "tune_lambda",
]


def gaussian_instance(n: int, M: int, seed: int = 0, lam: float = 0.0, **spec) -> tuple[ModelObjective, SparseWeights]:
    """Erdos-Renyi Gaussian ground truth (mean degree 5, weights around
    -1000) with ``M`` samples, wrapped in an empty-state model."""
    truth = gen_er_precision(GeneratorSpec(n, seed=seed, **spec))
    X = sample_gaussian(truth, M, seed=seed + 1_000_003)
    return ModelObjective("gaussian", X, lam), truth


# ---------------------------------------------------------------------------
# runtime scaling


@dataclass
class ScalingReport:
    """Rows ``(N, kappa, seed, seconds, evaluations, levels)``; ``levels``
    is the recursion trace as ``N_t/k_t`` tokens (``k_t = 0`` marks the
    exhaustive base)."""

    rows: list = field(default_factory=list)
    traces: list = field(default_factory=list)

    def seconds(self, kappa: float) -> tuple[np.ndarray, np.ndarray]:
        """Distinct N values and mean seconds over seeds."""
        ns = sorted({r[0] for r in self.rows if r[1] == kappa})
        secs = [np.mean([r[3] for r in self.rows if r[0] == n and r[1] == kappa]) for n in ns]
        return np.asarray(ns), np.asarray(secs)

    def exponent(self, kappa: float = 1.0, span: str = "decade") -> float:
        """Least-squares slope of log seconds against log N.

        ``span='decade'`` fits the sizes within a factor 10 of the largest
        (at least three of them); ``'all'`` fits every size.
        """
        ns, secs = self.seconds(kappa)
        if ns.shape[0] < 3:
            raise ValueError("need at least 3 N values for a scaling fit")
        if span == "all":
            use = np.ones(ns.shape[0], dtype=bool)
        elif span == "decade":
            use = ns * 10 >= ns[-1]
            use[-3:] = True
        else:
            raise ValueError(f"unknown span {span!r}")
        return float(np.polyfit(np.log(ns[use]), np.log(secs[use]), 1)[0])

    def ratios(self, kappa: float = 1.0) -> np.ndarray:
        """Runtime ratios between consecutive N values."""
        _, secs = self.seconds(kappa)
        return secs[1:] / secs[:-1]

    def halving_holds(self) -> bool:
        return all(t.halving_holds() for t in self.traces)

    def table(self):
        header = ("N", "kappa", "seed", "seconds", "evaluations", "levels")
        return header, self.rows


def bench_findbest_scaling(ns, kappas=(1.0,), seeds=(0,), M: int = 10, distance: str = "exact",
                           threads: int = 1, repeats: int = 2) -> ScalingReport:
    """Time :func:`find_best` on the empty initial state of Gaussian
    instances. Only the search itself is timed; the best of ``repeats``
    runs is kept."""
    ns = [int(n) for n in ns]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ValueError("N values must be strictly increasing")
    # compile every kernel before the first timed run
    warm, _ = gaussian_instance(64, M, seed=0)
    find_best(64, np.arange(64), warm.oracle(distance, threads), 0)

    report = ScalingReport()
    for n in ns:
        # one cache per size, as in the GCD loop: each search clears it but
        # keeps the grown table, so timings exclude first-touch paging
        cache = DistanceCache()
        for seed in seeds:
            model, _ = gaussian_instance(n, M, seed=seed)
            oracle = model.oracle(distance, threads)
            for kappa in kappas:
                m = candidate_budget(kappa, n)
                best_t = math.inf
                for _ in range(repeats):
                    t0 = perf_counter()
                    res = find_best(m, np.arange(n), oracle, seed, cache=cache)
                    best_t = min(best_t, perf_counter() - t0)
                levels = ",".join(f"{lv[1]}/{lv[2]}" for lv in res.trace.levels)
                report.rows.append((n, kappa, seed, best_t, res.evaluations, levels))
                report.traces.append(res.trace)
    if not report.halving_holds():
        raise AssertionError("recursion halving invariant violated")
    return report


# ---------------------------------------------------------------------------
# recall


def bench_recall(model: ModelObjective, kappas=(1.0, 5.0), seeds=range(10), distance: str = "exact",
                 traces: list | None = None):
    """Cumulative recall of :func:`find_best` against the exhaustive scan.

    Recursion traces of every run are appended to ``traces`` if given.

    Returns
    -------
    dict
        ``kappa -> (curves, mean)`` where ``curves`` has one row per seed.
    """
    n = model.n
    if n > 2000:
        raise ValueError("recall benchmark needs an exhaustive oracle; keep N <= 2000")
    oracle = model.oracle(distance)
    nodes = np.arange(n)
    m_max = max(candidate_budget(k, n) for k in kappas)
    exact = find_best_exhaustive(m_max, nodes, oracle)
    out = {}
    for kappa in kappas:
        m = candidate_budget(kappa, n)
        ref = type(exact)(exact.i[:m], exact.j[:m], exact.dist[:m])
        curves = []
        for seed in seeds:
            res = find_best(m, nodes, oracle, seed)
            curves.append(recall_curve(ref, res))
            if traces is not None:
                traces.append(res.trace)
        curves = np.array(curves)
        out[kappa] = (curves, curves.mean(axis=0))
    return out


# ---------------------------------------------------------------------------
# convergence


def bench_convergence(make_model, kappas=(1.0,), include_cd: bool = True, distance: str = "exact",
                      eps: float | None = None, max_iters: int = 1000, seed: int = 0, threads: int = 1):
    """Run GCD for each kappa (and optionally CD) on fresh copies of a model.

    ``make_model`` returns a new :class:`ModelObjective` on every call.
    Returns a dict ``label -> ConvergenceTrace`` with objectives recorded.
    """
    out = {}
    if include_cd:
        _, out["cd"] = reconstruct_cd(make_model(), eps=eps, max_iters=max_iters, record_objective=True)
    for kappa in kappas:
        cfg = ReconstructionConfig(kappa=kappa, eps=eps, max_iters=max_iters, distance=distance,
                                   seed=seed, threads=threads, record_objective=True)
        _, out[f"gcd_kappa={kappa:g}"] = reconstruct_gcd(make_model(), cfg)
    return out


def time_to_objective(trace, target: float, rtol: float = 1e-4) -> float:
    """Wall-clock seconds until the recorded objective first comes within
    ``rtol`` (relative) of ``target``; ``inf`` if it never does."""
    band = target - rtol * abs(target)
    for (_, _, secs, _), obj in zip(trace.iterations, trace.objective):
        if obj >= band:
            return secs
    return math.inf


def convergence_rows(traces: dict):
    header = ("config", "iter", "delta", "cum_delta", "seconds", "candidates", "objective")
    rows = []
    for label, tr in traces.items():
        cum = 0.0
        for (it, delta, secs, cand), obj in zip(tr.iterations, tr.objective):
            cum += delta
            rows.append((label, it, delta, cum, secs, cand, obj))
    return header, rows


# ---------------------------------------------------------------------------
# reconstruction quality


def eval_reconstruction(estimate: SparseWeights, truth: SparseWeights) -> dict:
    """Support precision, recall and F1 plus the weight RMSE over the union
    of both supports. Empty supports count as perfect precision/recall."""
    if estimate.n != truth.n:
        raise ValueError(f"size mismatch: {estimate.n} vs {truth.n}")
    est = {(i, j): w for i, j, w in estimate.edges()}
    tru = {(i, j): w for i, j, w in truth.edges()}
    tp = len(est.keys() & tru.keys())
    precision = tp / len(est) if est else 1.0
    recall = tp / len(tru) if tru else 1.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    union = est.keys() | tru.keys()
    rmse = math.sqrt(sum((est.get(p, 0.0) - tru.get(p, 0.0)) ** 2 for p in union) / len(union)) if union else 0.0
    return {"precision": precision, "recall": recall, "f1": f1, "rmse": rmse,
            "edges_est": len(est), "edges_true": len(tru)}


def tune_lambda(X: SampleMatrix, target_edges: int, kind: str = "gaussian", lo: float = 1e-4, hi: float = 1e4,
                steps: int = 20, driver: str = "cd", **gcd_kw) -> float:
    """Bisection on log lambda until the reconstruction has about
    ``target_edges`` edges. The count is monotone in lambda only
    approximately, so the result is the best bracket midpoint found."""
    def count(lam):
        model = ModelObjective(kind, X, lam)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizationWarning)
            if driver == "cd":
                st, _ = reconstruct_cd(model)
            else:
                st, _ = reconstruct_gcd(model, ReconstructionConfig(**gcd_kw))
        return len(st)

    a, b = math.log(lo), math.log(hi)
    best, best_gap = math.exp(0.5 * (a + b)), math.inf
    for _ in range(steps):
        mid = 0.5 * (a + b)
        c = count(math.exp(mid))
        if abs(c - target_edges) < best_gap:
            best, best_gap = math.exp(mid), abs(c - target_edges)
        if c == target_edges:
            break
        if c > target_edges:
            a = mid
        else:
            b = mid
    return best
