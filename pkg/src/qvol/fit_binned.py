"""Parameter estimation from binned volume samples.

The binned analogue of the continuous pipeline: a binned power-law MLE
with KS-selected starting bin supplies the lower cutoff (and, for the
constrained variant, the exponent), then the law parameters are fitted by
minimizing the chi-square between observed and expected bin counts

    n_j^e = (c / l_{j-1})**(1/beta) - (c / l_j)**(1/beta),

optionally over c alone with the exponent frozen.  When the sketch
overcount fraction gamma is known, bins whose lower edge falls below
``10 * gamma * v_1`` can be dropped first: below that level additive
sketch noise dominates the signal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import (
    DegenerateDataError,
    InvalidInputError,
    NumericalError,
    SingularMatrixError,
)
from .fit_continuous import BINNED_METHODS, FitResult, beta_from_alpha
from .model import ZipfParams
from .numerics import SolverOptions, _fd_jacobian, linearized_stderr, simplex_minimize
from .sampling import BinnedSample, BinningScheme
from .uncertainty import ParamErrors

__all__ = [
    "BinnedFitInputs",
    "binned_csn_fit",
    "expected_bin_counts",
    "chisq_objective",
    "chisq_fit",
    "constrained_chisq_fit",
    "sketchy_filter",
    "fit_binned_pipeline",
]

# Expected counts are floored here so the optimizer can probe extreme
# parameters without dividing by zero; the objective stays finite and the
# simplex retreats on its own.
_COUNT_FLOOR = 1e-9
_HUGE = 1e300

_ALPHA_BOUNDS = (1.0 + 1e-8, 64.0)


@dataclass(frozen=True)
class BinnedFitInputs:
    """A binned sample plus the first bin included in the fit."""

    sample: BinnedSample
    from_bin: int
    gamma_hint: float | None = None

    def __post_init__(self):
        m = self.sample.scheme.bin_count
        if not (1 <= self.from_bin <= m):
            raise InvalidInputError(f"from_bin must lie in [1, {m}]")

    @property
    def included_counts(self) -> np.ndarray:
        return self.sample.counts[self.from_bin - 1 :]


def _as_c_beta(params) -> tuple[float, float]:
    if isinstance(params, ZipfParams):
        return params.c, params.beta
    c, beta = params
    return float(c), float(beta)


def _edge_logs(scheme: BinningScheme):
    uppers = scheme.edges()
    lowers = np.concatenate(([scheme.floor], uppers[:-1]))
    return np.log(lowers), np.log(uppers)


def _binned_ks(counts, scheme, from_bin, alpha) -> float:
    """KS distance between empirical and model CCDF at the bin edges,
    conditioned on the tail from ``from_bin``."""
    ln_low, ln_up = _edge_logs(scheme)
    tail = np.asarray(counts, dtype=float)[from_bin - 1 :]
    m = tail.sum()
    if m <= 0:
        raise DegenerateDataError("empty tail")
    # Empirical P(X >= l_j) for j = from_bin..M.
    above = np.cumsum(tail[::-1])[::-1] - tail
    emp = above / m
    model = np.exp((1.0 - alpha) * (ln_up[from_bin - 1 :] - ln_low[from_bin - 1]))
    return float(np.max(np.abs(emp - model)))


def binned_csn_fit(sample: BinnedSample):
    """Binned power-law MLE with KS-selected starting bin.

    For every non-empty candidate bin b whose tail spans at least two
    non-empty bins, the binned log-likelihood

        L(alpha) = sum_{j>=b} n_j ln(l_{j-1}^(1-alpha) - l_j^(1-alpha))
                   + (sum_{j>=b} n_j) (alpha-1) ln l_{b-1}

    is maximized over alpha by bounded scalar search; the candidate whose
    tail minimizes the edge-evaluated KS distance wins (ties toward the
    larger tail).  Returns ``(alpha, from_bin, beta)``.
    """
    counts = sample.counts.astype(float)
    scheme = sample.scheme
    m_bins = scheme.bin_count
    nonempty = np.flatnonzero(counts > 0)
    if nonempty.size < 3:
        raise DegenerateDataError(
            f"binned tail fit needs >= 3 non-empty bins, got {nonempty.size}"
        )
    ln_low, ln_up = _edge_logs(scheme)
    ln_width = ln_up - ln_low  # log of each bin's edge ratio

    best = None  # (ks, b0, alpha)
    for b0 in nonempty:
        tail = counts[b0:]
        if np.count_nonzero(tail) < 2:
            continue  # a single populated bin pins no exponent
        m = tail.sum()
        lows = ln_low[b0:]
        widths = ln_width[b0:]
        ref = ln_low[b0]

        def neg_loglik(alpha):
            one_minus = 1.0 - alpha
            terms = one_minus * lows + np.log1p(-np.exp(one_minus * widths))
            return -(float(np.dot(tail, terms)) + m * (alpha - 1.0) * ref)

        res = minimize_scalar(
            neg_loglik,
            bounds=_ALPHA_BOUNDS,
            method="bounded",
            options={"xatol": 1e-10},
        )
        alpha = float(res.x)
        ks = _binned_ks(counts, scheme, b0 + 1, alpha)
        if best is None or ks < best[0]:
            best = (ks, b0, alpha)
    if best is None:
        raise DegenerateDataError("every candidate tail collapses to one bin")
    _, b0, alpha = best
    return alpha, int(b0 + 1), beta_from_alpha(alpha)


def expected_bin_counts(params, scheme: BinningScheme, from_bin: int) -> np.ndarray:
    """Expected counts for bins ``from_bin..M`` under the rank-volume law.

    Telescope of the count estimator across the edges.  Callers are
    responsible for ``l_{from_bin-1} <= c``; outside that region the
    formula still evaluates (the chi-square objective relies on it while
    the optimizer roams) but loses its interpretation.
    """
    c, beta = _as_c_beta(params)
    if not (1 <= from_bin <= scheme.bin_count):
        raise InvalidInputError(
            f"from_bin must lie in [1, {scheme.bin_count}], got {from_bin}"
        )
    ln_low, ln_up = _edge_logs(scheme)
    ln_c = math.log(c)
    with np.errstate(over="ignore", invalid="ignore"):
        at_lower = np.exp((ln_c - ln_low[from_bin - 1 :]) / beta)
        at_upper = np.exp((ln_c - ln_up[from_bin - 1 :]) / beta)
        return at_lower - at_upper


def chisq_objective(params, inputs: BinnedFitInputs) -> float:
    """Pearson chi-square between observed and expected included counts.

    Zero exactly when observed equals expected on every included bin.
    Extreme parameter probes (overflowing expected counts) return a huge
    finite penalty instead of NaN so derivative-free search can retreat.
    """
    observed = inputs.included_counts.astype(float)
    ne = expected_bin_counts(params, inputs.sample.scheme, inputs.from_bin)
    if not np.all(np.isfinite(ne)):
        return _HUGE
    ne = np.maximum(ne, _COUNT_FLOOR)
    chi = float(np.sum((observed - ne) ** 2 / ne))
    if math.isnan(chi):
        c, beta = _as_c_beta(params)
        raise NumericalError(f"chi-square objective NaN at c={c}, beta={beta}")
    return min(chi, _HUGE)


def _survivor_init(inputs: BinnedFitInputs, beta_fixed: float | None = None):
    """Log-log regression of the empirical survivor counts at the lower
    edges; a cheap, robust starting point for the chi-square search."""
    observed = inputs.included_counts.astype(float)
    ln_low, _ = _edge_logs(inputs.sample.scheme)
    x = ln_low[inputs.from_bin - 1 :]
    survivors = np.cumsum(observed[::-1])[::-1]
    keep = survivors > 0
    x, y = x[keep], np.log(survivors[keep])
    top_edge = float(inputs.sample.scheme.edges()[-1])
    if beta_fixed is not None:
        c0 = float(np.exp(np.mean(beta_fixed * y + x)))
        return max(c0, 1e-12), beta_fixed
    if x.size >= 2 and np.ptp(x) > 0:
        slope, intercept = np.polyfit(x, y, 1)
        if slope < -1e-9:
            beta0 = min(max(-1.0 / slope, 0.02), 50.0)
            return float(np.exp(intercept * beta0)), beta0
    return 2.0 * top_edge, 1.0


def _pearson_residuals(params, inputs: BinnedFitInputs) -> np.ndarray:
    observed = inputs.included_counts.astype(float)
    ne = expected_bin_counts(params, inputs.sample.scheme, inputs.from_bin)
    ne = np.maximum(np.nan_to_num(ne, nan=_COUNT_FLOOR, posinf=_HUGE), _COUNT_FLOOR)
    return (observed - ne) / np.sqrt(ne)


def _check_fittable(inputs: BinnedFitInputs) -> None:
    included = inputs.sample.scheme.bin_count - inputs.from_bin + 1
    if included < 3:
        raise InvalidInputError(
            f"chi-square fit needs >= 3 included bins, got {included}"
        )
    if inputs.included_counts.sum() <= 0:
        raise DegenerateDataError("included bins hold no observations")


def chisq_fit(inputs: BinnedFitInputs, opts: SolverOptions | None = None) -> FitResult:
    """Joint chi-square fit of (c, beta), searched over (ln c, ln beta).

    The log transform keeps both parameters positive without constrained
    optimization.  Standard errors linearize the Pearson residuals
    ``(n^o - n^e) / sqrt(n^e)`` at the optimum.
    """
    _check_fittable(inputs)
    opts = opts or SolverOptions(max_iterations=2000)
    c0, beta0 = _survivor_init(inputs)

    def objective(u):
        return chisq_objective((math.exp(u[0]), math.exp(u[1])), inputs)

    u_hat = simplex_minimize(objective, (math.log(c0), math.log(beta0)), opts)
    c_hat, b_hat = math.exp(u_hat[0]), math.exp(u_hat[1])

    flags: tuple = ()
    residuals = _pearson_residuals((c_hat, b_hat), inputs)
    jac = _fd_jacobian(lambda p: _pearson_residuals(p, inputs), (c_hat, b_hat), 1.0)
    try:
        d_c, d_beta = linearized_stderr(jac, residuals)
    except (SingularMatrixError, InvalidInputError):
        d_c, d_beta = 0.0, 0.0
        flags = ("stderr_singular",)

    return FitResult(
        params=ZipfParams(c_hat, b_hat),
        errors=ParamErrors(d_c, d_beta),
        cutoff_rank=inputs.from_bin,
        cutoff_volume=inputs.sample.scheme.lower_edge(inputs.from_bin),
        method="CHI2",
        ks_distance=min(
            _binned_ks(inputs.sample.counts, inputs.sample.scheme, inputs.from_bin,
                       1.0 + 1.0 / b_hat),
            1.0,
        ),
        flags=flags,
    )


def constrained_chisq_fit(
    inputs: BinnedFitInputs,
    beta_fixed: float,
    opts: SolverOptions | None = None,
) -> FitResult:
    """Chi-square fit of the intercept alone, with the exponent frozen.

    Reported ``delta_beta`` is zero here (the exponent was not estimated
    by this fit); the pipeline overrides it with the tail MLE's own
    uncertainty when it supplies ``beta_fixed``.
    """
    if not (beta_fixed > 0.0):
        raise InvalidInputError(f"beta_fixed must be > 0, got {beta_fixed}")
    _check_fittable(inputs)
    opts = opts or SolverOptions(max_iterations=2000)
    c0, _ = _survivor_init(inputs, beta_fixed=beta_fixed)

    def objective(u):
        return chisq_objective((math.exp(u[0]), beta_fixed), inputs)

    (u_hat,) = simplex_minimize(objective, (math.log(c0),), opts)
    c_hat = math.exp(u_hat)

    # One-parameter linearization: s^2 = SSR / (n - 1), variance of c is
    # s^2 / sum((dr/dc)^2).
    residuals = _pearson_residuals((c_hat, beta_fixed), inputs)
    n = residuals.size
    h = 1e-6 * max(abs(c_hat), 1e-12)
    dr_dc = (
        _pearson_residuals((c_hat + h, beta_fixed), inputs)
        - _pearson_residuals((c_hat - h, beta_fixed), inputs)
    ) / (2.0 * h)
    denom = float(dr_dc @ dr_dc)
    flags: tuple = ()
    if denom <= 0.0 or not math.isfinite(denom):
        d_c = 0.0
        flags = ("stderr_singular",)
    else:
        s2 = float(residuals @ residuals) / max(n - 1, 1)
        d_c = math.sqrt(s2 / denom)

    return FitResult(
        params=ZipfParams(c_hat, beta_fixed),
        errors=ParamErrors(d_c, 0.0),
        cutoff_rank=inputs.from_bin,
        cutoff_volume=inputs.sample.scheme.lower_edge(inputs.from_bin),
        method="CSN_CONSTRAINED_CHI2",
        ks_distance=min(
            _binned_ks(inputs.sample.counts, inputs.sample.scheme, inputs.from_bin,
                       1.0 + 1.0 / beta_fixed),
            1.0,
        ),
        flags=flags,
    )


def sketchy_filter(inputs: BinnedFitInputs, gamma: float) -> BinnedFitInputs:
    """Raise the fit cutoff above the sketch-noise floor ``10*gamma*v_1``.

    ``v_1`` is the largest reported value (top non-empty bin edge).  The
    original cutoff is kept when it is already higher.  Raising the cutoff
    must leave at least three bins to fit.
    """
    if gamma < 0.0:
        raise InvalidInputError("gamma must be >= 0")
    counts = inputs.sample.counts
    scheme = inputs.sample.scheme
    nonempty = np.flatnonzero(counts > 0)
    if nonempty.size == 0:
        raise DegenerateDataError("sample holds no observations")
    v1 = scheme.upper_edge(int(nonempty[-1]) + 1)
    threshold = 10.0 * gamma * v1
    qualifying = [
        j
        for j in range(1, scheme.bin_count + 1)
        if scheme.lower_edge(j) >= threshold
    ]
    if not qualifying:
        raise InvalidInputError(
            f"sketch filter threshold {threshold} is above every bin"
        )
    new_from = max(inputs.from_bin, qualifying[0])
    if new_from > inputs.from_bin and scheme.bin_count - new_from + 1 < 3:
        raise InvalidInputError(
            "sketch filter leaves fewer than 3 bins to fit"
        )
    return BinnedFitInputs(
        sample=inputs.sample, from_bin=new_from, gamma_hint=gamma
    )


def fit_binned_pipeline(
    sample: BinnedSample,
    method: str,
    gamma_hint: float | None = None,
) -> FitResult:
    """Full binned fit: tail MLE for the cutoff (and, when constrained,
    the exponent), optional sketch filtering, then chi-square estimation.

    ``method`` is ``"CHI2"`` or ``"CSN_CONSTRAINED_CHI2"`` (the CLI also
    spells them ``chi2`` / ``constrained``).
    """
    tag = method.upper().replace("-", "_")
    if tag == "CONSTRAINED":
        tag = "CSN_CONSTRAINED_CHI2"
    if tag not in BINNED_METHODS:
        raise InvalidInputError(
            f"unknown binned method {method!r}; expected chi2 or constrained"
        )
    alpha, from_bin, beta_csn = binned_csn_fit(sample)
    tail_count = int(sample.counts[from_bin - 1 :].sum())
    inputs = BinnedFitInputs(sample=sample, from_bin=from_bin, gamma_hint=gamma_hint)
    if gamma_hint is not None and gamma_hint > 0.0:
        inputs = sketchy_filter(inputs, gamma_hint)
    if tag == "CHI2":
        result = chisq_fit(inputs)
        return replace(result, alpha=alpha)
    result = constrained_chisq_fit(inputs, beta_csn)
    # Delta method through beta = 1/(alpha-1) with the tail MLE's
    # alpha_stderr = (alpha-1)/sqrt(m): delta_beta = beta/sqrt(m).
    delta_beta = beta_csn / math.sqrt(tail_count)
    return replace(
        result,
        alpha=alpha,
        errors=ParamErrors(result.errors.delta_c, delta_beta),
    )
