"""Parameter estimation from continuous (un-binned) volume samples.

Two estimation routes share a common tail-selection step:

* the tail route fits a continuous power law to the observed volume
  distribution by maximum likelihood, scanning candidate lower cutoffs and
  keeping the one whose tail minimizes the Kolmogorov-Smirnov distance;
  the rank-law exponent follows as ``beta = 1 / (alpha - 1)`` and the
  intercept is taken as the largest observed volume;
* the regression route solves nonlinear least squares of
  ``v_i - c / i**beta`` over the top ranks, the cutoff again supplied by
  the tail scan, with standard errors from the usual linearization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DegenerateDataError,
    InvalidInputError,
    NonConvergenceError,
    SingularMatrixError,
)
from .model import ZipfParams
from .numerics import (
    SolverOptions,
    _fd_jacobian,
    ks_statistic_precomputed,
    linearized_stderr,
    nls_solve,
)
from .sampling import ContinuousSample
from .uncertainty import ParamErrors

__all__ = [
    "FitResult",
    "csn_fit",
    "beta_from_alpha",
    "ols_loglog_init",
    "max_estimator_c",
    "nls_zipf_fit",
    "fit_continuous_pipeline",
]

CONTINUOUS_METHODS = ("NLS", "CSN_MAX")
BINNED_METHODS = ("CHI2", "CSN_CONSTRAINED_CHI2")

# Minimum number of points a candidate cutoff must leave in the tail.
_MIN_TAIL = 10

# Above this many distinct values the cutoff scan switches from all
# distinct values to an index-spaced subset of them, keeping the scan
# near-linear on very large samples (the exhaustive scan is quadratic).
_MAX_CUTOFF_CANDIDATES = 4096


@dataclass(frozen=True)
class FitResult:
    """A fitted rank-volume law plus the context of the fit."""

    params: ZipfParams
    errors: ParamErrors
    cutoff_rank: int
    cutoff_volume: float
    method: str
    ks_distance: float
    alpha: float | None = None
    flags: tuple = ()

    def __post_init__(self):
        if self.method not in CONTINUOUS_METHODS + BINNED_METHODS:
            raise InvalidInputError(f"unknown method tag {self.method!r}")
        if self.cutoff_rank < 1:
            raise InvalidInputError("cutoff_rank must be >= 1")
        if not (0.0 <= self.ks_distance <= 1.0):
            raise InvalidInputError("ks_distance must lie in [0, 1]")


def _power_tail_ks(tail_ascending: np.ndarray, x_min: float, alpha: float) -> float:
    """KS distance of an ascending tail against the fitted power-law CDF."""
    cdf = 1.0 - (tail_ascending / x_min) ** (1.0 - alpha)
    return ks_statistic_precomputed(np.clip(cdf, 0.0, 1.0))


def csn_fit(sample: ContinuousSample):
    """Maximum-likelihood power-law tail fit with KS-selected cutoff.

    Every distinct observed value that leaves at least ten tail points is
    a candidate cutoff; for each, the closed-form continuous MLE

        alpha = 1 + m / sum_{v >= x_min} ln(v / x_min)

    is evaluated and the candidate with the smallest KS distance between
    the tail and its fitted distribution wins, ties broken toward the
    larger tail.  Returns ``(alpha, cutoff_volume, cutoff_rank,
    alpha_stderr)`` with ``alpha_stderr = (alpha - 1) / sqrt(m)``.

    On samples with more than a few thousand distinct values the scan
    uses an evenly index-spaced subset of the candidates.
    """
    v_desc = sample.volumes
    n = v_desc.size
    if n < _MIN_TAIL:
        raise InvalidInputError(
            f"tail fitting needs at least {_MIN_TAIL} points, got {n}"
        )
    a = v_desc[::-1]  # ascending
    log_a = np.log(a)
    suffix_log = np.cumsum(log_a[::-1])[::-1]

    distinct_first = np.empty(n, dtype=bool)
    distinct_first[0] = True
    np.not_equal(a[1:], a[:-1], out=distinct_first[1:])
    candidates = np.flatnonzero(distinct_first)
    candidates = candidates[candidates <= n - _MIN_TAIL]
    if candidates.size > _MAX_CUTOFF_CANDIDATES:
        keep = np.unique(
            np.linspace(0, candidates.size - 1, _MAX_CUTOFF_CANDIDATES).astype(int)
        )
        candidates = candidates[keep]

    best = None  # (ks, s, alpha)
    for s in candidates:
        m = n - s
        denom = suffix_log[s] - m * log_a[s]
        # A constant tail gives denom = 0 only up to cumsum round-off, so
        # the guard must sit at the rounding scale, not at exact zero.
        if denom <= m * 1e-12 * max(1.0, abs(log_a[s])):
            continue
        alpha = 1.0 + m / denom
        ks = _power_tail_ks(a[s:], a[s], alpha)
        if best is None or ks < best[0]:
            best = (ks, s, alpha)
    if best is None:
        raise DegenerateDataError(
            "no usable cutoff: the sample has no varying tail to fit"
        )
    ks, s, alpha = best
    m = n - s
    return alpha, float(a[s]), int(m), (alpha - 1.0) / math.sqrt(m)


def beta_from_alpha(alpha: float) -> float:
    """Convert a volume-distribution exponent to the rank-law exponent."""
    if not (alpha > 1.0):
        raise InvalidInputError(f"requires alpha > 1, got {alpha}")
    return 1.0 / (alpha - 1.0)


def ols_loglog_init(sample: ContinuousSample, max_rank: int):
    """Log-log least squares over the top ranks; returns a raw
    ``(c, beta)`` pair suitable as a solver starting point.

    Returned values are not validated as law parameters on purpose:
    degenerate data (e.g. constant volumes) legitimately produces
    ``beta = 0`` here, which the solvers can then move away from.
    """
    if max_rank < 3:
        raise InvalidInputError("max_rank must be >= 3")
    m = int(min(max_rank, sample.size))
    v = sample.volumes[:m]
    if np.any(v <= 0.0):
        raise InvalidInputError("volumes must be > 0")
    x = np.log(np.arange(1.0, m + 1.0))
    y = np.log(v)
    x_bar = x.mean()
    y_bar = y.mean()
    sxx = float(np.sum((x - x_bar) ** 2))
    slope = float(np.sum((x - x_bar) * (y - y_bar))) / sxx
    intercept = y_bar - slope * x_bar
    return (math.exp(intercept), -slope + 0.0)


def max_estimator_c(sample: ContinuousSample) -> float:
    """The largest observed volume, used as a direct intercept estimate."""
    if sample.size == 0:
        raise InvalidInputError("empty sample")
    return float(sample.volumes[0])


def nls_zipf_fit(
    sample: ContinuousSample,
    max_rank: int,
    opts: SolverOptions | None = None,
) -> FitResult:
    """Nonlinear least squares of ``v_i - c / i**beta`` over ranks
    ``1..max_rank``, started from the log-log regression.

    Residuals are plain (unweighted) differences.  If the solver fails
    even after its jittered restarts, the log-log starting point is kept
    and the result flagged ``nls_fallback_ols`` instead of aborting, so
    batch drivers can keep going.
    """
    if max_rank < 3:
        raise InvalidInputError("max_rank must be >= 3")
    m = int(min(max_rank, sample.size))
    v = sample.volumes[:m]
    ranks = np.arange(1.0, m + 1.0)

    def residual(p):
        c, b = p
        return v - c * ranks**-b

    init = ols_loglog_init(sample, m)
    flags: tuple = ()
    try:
        solution, jac = nls_solve(residual, init, opts)
        if not (solution[0] > 0.0 and solution[1] > 0.0):
            raise NonConvergenceError(
                f"solver left the admissible region: {solution}",
                best_params=solution,
            )
    except NonConvergenceError:
        solution = (init[0], init[1] if init[1] > 0.0 else 0.5)
        jac = _fd_jacobian(residual, solution, 1.0)
        flags = ("nls_fallback_ols",)

    res = residual(solution)
    try:
        d_c, d_beta = linearized_stderr(jac, res)
    except SingularMatrixError:
        d_c, d_beta = 0.0, 0.0
        flags = flags + ("stderr_singular",)

    c_hat, b_hat = solution
    # Diagnostic: KS of the fitted slice against the tail law implied by
    # the fitted exponent.
    implied_alpha = 1.0 + 1.0 / b_hat if b_hat > 0.0 else math.inf
    tail = v[::-1]
    ks = _power_tail_ks(tail, float(tail[0]), implied_alpha)
    return FitResult(
        params=ZipfParams(c_hat, b_hat),
        errors=ParamErrors(d_c, d_beta),
        cutoff_rank=m,
        cutoff_volume=float(v[m - 1]),
        method="NLS",
        ks_distance=ks,
        flags=flags,
    )


def fit_continuous_pipeline(sample: ContinuousSample, method: str) -> FitResult:
    """Full continuous fit: tail scan for the cutoff, then the chosen
    estimator.

    ``method`` is ``"NLS"`` (regression over the top ranks) or
    ``"CSN_MAX"`` (tail MLE exponent plus max-volume intercept).  Both
    results carry the tail scan's alpha and KS distance as diagnostics.
    """
    tag = method.upper().replace("-", "_")
    if tag not in CONTINUOUS_METHODS:
        raise InvalidInputError(
            f"unknown continuous method {method!r}; expected nls or csn-max"
        )
    alpha, x_min, m, alpha_stderr = csn_fit(sample)
    ks = _power_tail_ks(sample.volumes[: m][::-1], x_min, alpha)
    if tag == "CSN_MAX":
        beta = beta_from_alpha(alpha)
        # Delta method through beta = 1/(alpha-1); the max estimator itself
        # carries no linearization, so its error is reported as zero.
        delta_beta = beta**2 * alpha_stderr
        return FitResult(
            params=ZipfParams(max_estimator_c(sample), beta),
            errors=ParamErrors(0.0, delta_beta),
            cutoff_rank=m,
            cutoff_volume=x_min,
            method="CSN_MAX",
            ks_distance=ks,
            alpha=alpha,
        )
    result = nls_zipf_fit(sample, m)
    return replace(result, alpha=alpha, ks_distance=ks)
