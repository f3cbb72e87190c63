"""Text formats for weight maps, sample matrices and tables.

Every writer goes through :func:`atomic_write`, so a failed run never leaves
a partial file behind.
"""

from __future__ import annotations

import os
import tempfile
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from .core import SampleMatrix, SparseWeights

__all__ = [
    "FormatError",
    "atomic_write",
    "write_edges",
    "read_edges",
    "write_samples",
    "read_samples",
    "write_table",
]


class FormatError(ValueError):
    """Malformed input file."""


@contextmanager
def atomic_write(path):
    """Open a temporary file next to ``path``; rename over it on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def write_edges(path, state: SparseWeights, theta: bool = True) -> None:
    """``# N=<n>`` header, optional ``# theta`` lines, then ``i j w`` rows."""
    ii, jj, ww = state.arrays()
    with atomic_write(path) as fh:
        fh.write(f"# N={state.n}\n")
        if theta:
            for i, t in enumerate(state.theta.tolist()):
                fh.write(f"# theta\t{i}\t{t:.17g}\n")
        for i, j, w in zip(ii.tolist(), jj.tolist(), ww.tolist()):
            fh.write(f"{i}\t{j}\t{w:.17g}\n")


def read_edges(path) -> SparseWeights:
    n = None
    theta = {}
    ii, jj, ww = [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                if line.startswith("#"):
                    body = line[1:].strip()
                    if body.startswith("N="):
                        n = int(body[2:])
                    elif body.startswith("theta"):
                        _, i, v = body.split()
                        theta[int(i)] = float(v)
                    continue
                a, b, w = line.split()
                ii.append(int(a))
                jj.append(int(b))
                ww.append(float(w))
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: cannot parse {line!r}") from exc
    if n is None:
        raise FormatError(f"{path}: missing '# N=<n>' header")
    ii = np.asarray(ii, dtype=np.int64)
    jj = np.asarray(jj, dtype=np.int64)
    ww = np.asarray(ww, dtype=np.float64)
    if ii.size and (min(ii.min(), jj.min()) < 0 or max(ii.max(), jj.max()) >= n):
        raise FormatError(f"{path}: node id out of range for N={n}")
    if np.any(ii == jj):
        raise FormatError(f"{path}: diagonal entries belong in theta lines")
    th = None
    if theta:
        if set(theta) != set(range(n)):
            raise FormatError(f"{path}: theta lines must cover every node")
        th = np.array([theta[i] for i in range(n)])
    return SparseWeights.from_edges(n, ii, jj, ww, theta=th)


def write_samples(path, X: SampleMatrix) -> None:
    with atomic_write(path) as fh:
        fh.write(f"{X.n} {X.m}\n")
        fmt = "%d" if X.ising else "%.17g"
        if X.m:
            np.savetxt(fh, X.values, fmt=fmt, delimiter=" ")
        else:
            fh.write("\n" * X.n)


def read_samples(path, ising: bool = False) -> SampleMatrix:
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().split()
        try:
            n, m = int(head[0]), int(head[1])
        except (IndexError, ValueError) as exc:
            raise FormatError(f"{path}: first line must be 'N M'") from exc
        rows = [line.split() for line in fh if line.strip() or m == 0]
    if m == 0:
        return SampleMatrix(np.zeros((n, 0)), ising=ising)
    if len(rows) != n or any(len(r) != m for r in rows):
        raise FormatError(f"{path}: expected {n} rows of {m} values")
    try:
        values = np.array(rows, dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric value") from exc
    return SampleMatrix(values, ising=ising)


def write_table(path, header, rows, config: dict | None = None) -> None:
    """Tab-separated table with an optional ``# config:`` first line."""
    with atomic_write(path) as fh:
        if config is not None:
            fh.write("# config: " + " ".join(f"{k}={v}" for k, v in config.items()) + "\n")
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_cell(v) for v in row) + "\n")


def _cell(v):
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)
