"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 reconstruction hit
``--max-iters`` without converging (outputs are still written).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .bench import (
    bench_convergence,
    bench_findbest_scaling,
    bench_recall,
    convergence_rows,
    eval_reconstruction,
    gaussian_instance,
)
from .core import ShapeError
from .gcd import ReconstructionConfig, reconstruct_cd, reconstruct_gcd
from .models import ModelObjective
from .synth import GeneratorSpec, NotPositiveDefiniteError, gen_er_precision, sample_gaussian, sample_ising

log = logging.getLogger("netrecon")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NOCONV = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _positive(kind):
    def parse(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
        return v
    return parse


def _nonneg(text):
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"must be non-negative: {text!r}")
    return v


def _count(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative: {text!r}")
    return v


def _existing(path):
    p = Path(path)
    if not p.is_file():
        raise DataError(f"input file not found: {path}")
    return p


def _writable(path):
    if path is None:
        return None
    p = Path(path)
    if not p.parent.exists():
        raise DataError(f"output directory does not exist: {p.parent}")
    return p


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(a):
    out = _writable(a.out)
    spec = GeneratorSpec(a.n, mean_deg=a.mean_deg, weight_mu=a.weight_mu, weight_sigma=a.weight_sigma,
                         epsilon=a.epsilon, seed=a.seed)
    truth = gen_er_precision(spec)
    io.write_edges(out, truth)
    log.info("wrote %d edges on %d nodes to %s", len(truth), truth.n, out)
    return EXIT_OK


def cmd_sample(a):
    src = _existing(a.truth)
    out = _writable(a.out)
    truth = io.read_edges(src)
    if a.model == "gaussian":
        X = sample_gaussian(truth, a.m, seed=a.seed)
    else:
        X = sample_ising(truth, a.m, burn_in=a.burn_in, thin=a.thin, seed=a.seed)
    io.write_samples(out, X)
    log.info("wrote %d x %d samples to %s", X.n, X.m, out)
    return EXIT_OK


def cmd_reconstruct(a):
    src = _existing(a.inp)
    out = _writable(a.out)
    trace_path = _writable(a.trace)
    X = io.read_samples(src, ising=a.model == "ising")
    model = ModelObjective(a.model, X, a.l1)
    if a.driver == "cd":
        state, trace = reconstruct_cd(model, eps=a.eps, max_iters=a.max_iters)
    else:
        cfg = ReconstructionConfig(kappa=a.kappa, eps=a.eps, max_iters=a.max_iters, distance=a.distance,
                                   seed=a.seed, threads=a.threads)
        state, trace = reconstruct_gcd(model, cfg)
    io.write_edges(out, state)
    if trace_path is not None:
        io.write_table(trace_path, ("iter", "delta", "seconds", "candidates"), trace.iterations,
                       config=_config(a, "inp", "out", "trace"))
    log.info("%s: %d iterations, %d edges, converged=%s", a.driver, trace.n_iter, len(state), trace.converged)
    return EXIT_OK if trace.converged else EXIT_NOCONV


def cmd_scaling(a):
    out = _writable(a.out)
    report = bench_findbest_scaling(a.n, kappas=a.kappa, seeds=range(a.seeds), M=a.m, distance=a.distance,
                                    threads=a.threads)
    header, rows = report.table()
    cfg = _config(a, "out")
    if len(set(a.n)) >= 3:
        cfg["exponent"] = ",".join(f"{report.exponent(k):.4f}" for k in a.kappa)
    io.write_table(out, header, rows, config=cfg)
    if "exponent" in cfg:
        log.info("fitted exponent(s): %s", cfg["exponent"])
    return EXIT_OK


def cmd_recall(a):
    out = _writable(a.out)
    model, _ = gaussian_instance(a.n, a.m, seed=a.instance_seed)
    res = bench_recall(model, kappas=a.kappa, seeds=range(a.seeds), distance=a.distance)
    rows = []
    for kappa, (curves, mean) in res.items():
        for r, v in enumerate(mean, 1):
            rows.append((kappa, r, float(v), float(curves[:, r - 1].min())))
    io.write_table(out, ("kappa", "rank", "mean_recall", "min_recall"), rows, config=_config(a, "out"))
    return EXIT_OK


def cmd_convergence(a):
    out = _writable(a.out)

    def make():
        model, _ = gaussian_instance(a.n, a.m, seed=a.instance_seed, lam=a.l1)
        return model

    traces = bench_convergence(make, kappas=a.kappa, include_cd=not a.no_cd, distance=a.distance, eps=a.eps,
                               max_iters=a.max_iters, seed=a.seed, threads=a.threads)
    header, rows = convergence_rows(traces)
    io.write_table(out, header, rows, config=_config(a, "out"))
    return EXIT_OK if all(t.converged for t in traces.values()) else EXIT_NOCONV


def cmd_eval(a):
    est = io.read_edges(_existing(a.estimate))
    truth = io.read_edges(_existing(a.truth))
    out = _writable(a.out)
    try:
        metrics = eval_reconstruction(est, truth)
    except ValueError as exc:
        raise DataError(str(exc)) from exc
    header = tuple(metrics)
    row = tuple(metrics.values())
    if out is None:
        print("\t".join(header))
        print("\t".join(io._cell(v) for v in row))
    else:
        io.write_table(out, header, [row])
    return EXIT_OK


def _config(a, *skip):
    return {k: (",".join(map(str, v)) if isinstance(v, list) else v) for k, v in vars(a).items()
            if k not in skip and k not in ("func", "command", "verbose")}


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="netrecon", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="Erdos-Renyi Gaussian ground truth")
    g.add_argument("--n", type=_positive(int), required=True)
    g.add_argument("--mean-deg", type=_nonneg, default=5.0)
    g.add_argument("--weight-mu", type=float, default=-1e3)
    g.add_argument("--weight-sigma", type=_nonneg, default=10.0)
    g.add_argument("--epsilon", type=_positive(float), default=1e-3)
    g.add_argument("--seed", type=_count, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("sample", help="draw samples from a ground truth")
    s.add_argument("--truth", required=True)
    s.add_argument("--model", choices=("gaussian", "ising"), default="gaussian")
    s.add_argument("--m", type=_positive(int), required=True, help="number of samples")
    s.add_argument("--burn-in", type=_count, default=1000)
    s.add_argument("--thin", type=_positive(int), default=10)
    s.add_argument("--seed", type=_count, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    r = sub.add_parser("reconstruct", help="infer the network from samples")
    r.add_argument("--in", dest="inp", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--trace")
    r.add_argument("--model", choices=("gaussian", "ising"), default="gaussian")
    r.add_argument("--l1", type=_nonneg, default=0.0)
    r.add_argument("--kappa", type=_positive(float), default=1.0)
    r.add_argument("--eps", type=_positive(float), default=None)
    r.add_argument("--max-iters", type=_positive(int), default=1000)
    r.add_argument("--distance", choices=("exact", "gradient"), default="exact")
    r.add_argument("--driver", choices=("gcd", "cd"), default="gcd")
    r.add_argument("--seed", type=_count, default=0)
    r.add_argument("--threads", type=_positive(int), default=1)
    r.set_defaults(func=cmd_reconstruct)

    b = sub.add_parser("scaling-bench", help="FindBest runtime against N")
    b.add_argument("--n", type=_positive(int), nargs="+", default=[2**e for e in range(10, 16)])
    b.add_argument("--kappa", type=_positive(float), nargs="+", default=[1.0])
    b.add_argument("--seeds", type=_positive(int), default=1)
    b.add_argument("--m", type=_positive(int), default=10)
    b.add_argument("--distance", choices=("exact", "gradient"), default="exact")
    b.add_argument("--threads", type=_positive(int), default=1)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_scaling)

    c = sub.add_parser("recall-bench", help="FindBest recall against the exhaustive scan")
    c.add_argument("--n", type=_positive(int), default=500)
    c.add_argument("--m", type=_positive(int), default=100)
    c.add_argument("--kappa", type=_positive(float), nargs="+", default=[1.0, 5.0])
    c.add_argument("--seeds", type=_positive(int), default=10)
    c.add_argument("--instance-seed", type=_count, default=0)
    c.add_argument("--distance", choices=("exact", "gradient"), default="exact")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_recall)

    v = sub.add_parser("convergence-bench", help="GCD and CD objective traces")
    v.add_argument("--n", type=_positive(int), default=200)
    v.add_argument("--m", type=_positive(int), default=100)
    v.add_argument("--l1", type=_nonneg, default=0.05)
    v.add_argument("--kappa", type=_positive(float), nargs="+", default=[1.0])
    v.add_argument("--no-cd", action="store_true")
    v.add_argument("--eps", type=_positive(float), default=None)
    v.add_argument("--max-iters", type=_positive(int), default=1000)
    v.add_argument("--distance", choices=("exact", "gradient"), default="exact")
    v.add_argument("--instance-seed", type=_count, default=0)
    v.add_argument("--seed", type=_count, default=0)
    v.add_argument("--threads", type=_positive(int), default=1)
    v.add_argument("--out", required=True)
    v.set_defaults(func=cmd_convergence)

    e = sub.add_parser("eval", help="support and weight metrics against a ground truth")
    e.add_argument("--estimate", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--out")
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (DataError, io.FormatError, ShapeError, NotPositiveDefiniteError, FloatingPointError, OSError) as exc:
        print(f"netrecon: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        # raised by constructors validating parsed values, e.g. mean degree vs n
        print(f"netrecon: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
