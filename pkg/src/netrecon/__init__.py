"""Sparse network reconstruction from samples of a graphical model by
greedy coordinate descent with a subquadratic candidate search."""

import numba

# the bundled TBB is often too old for numba, which then warns on every
# parallel launch before falling back; skip the probe
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from .core import (  # noqa: E402
    CandidateEdge,
    ConvergenceTrace,
    DiagonalWriteError,
    DistanceCache,
    RecursionTrace,
    SampleMatrix,
    ShapeError,
    SparseWeights,
    make_rng,
    set_edge,
)
from .findbest import BestPairsResult, find_best, find_best_exhaustive, recall_curve  # noqa: E402
from .gcd import ReconstructionConfig, reconstruct_cd, reconstruct_gcd  # noqa: E402
from .models import (  # noqa: E402
    ModelObjective,
    OptimizationWarning,
    distance,
    log_posterior,
    optimize_edge,
    optimize_theta,
    update_theta,
)
from .nndescent import KnnGraph, exhaustive_knn, find_knn  # noqa: E402

__version__ = "0.1.0"
