"""The Zipf rank-volume law and closed-form population estimators.

A population of N queries has expected volumes ``V_i = c / i**beta`` at
rank i.  Everything that can be answered in closed form from fitted
``(c, beta)`` lives here: the per-rank observation probability, the total
expected volume, and the pair of threshold estimators

    N_v = (c / v)**(1/beta)          queries searched at least v times,
    V_v = c * H(beta, N_v)           their total volume,

where H is the fused partial-sum kernel from :mod:`qvol.numerics`.
Population sizes stay real-valued inside every formula; rounding to whole
queries happens only at presentation time.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import digamma

from .errors import InvalidInputError, ThresholdAboveTopVolumeWarning
from .numerics import _fused_mass

__all__ = [
    "ZipfParams",
    "PopulationSpec",
    "PopulationEstimate",
    "zipf_pmf",
    "expected_volume",
    "total_volume",
    "estimate_Nv",
    "estimate_Vv",
    "self_inversion_check",
]

# Exponents this close to 1 are routed through the harmonic-number path
# (the fused continuation has a pole at exactly 1).
_HARMONIC_TOL = 1e-9


def _harmonic(x: float) -> float:
    """Generalized harmonic number H_x = sum_{i<=x} 1/i for real x > 0."""
    return float(digamma(x + 1.0) + np.euler_gamma)


def _mass(beta: float, x: float) -> float:
    """H(beta, x) for real x > 0, with the exponent-1 pole handled."""
    if abs(beta - 1.0) <= _HARMONIC_TOL:
        return _harmonic(x)
    return _fused_mass(beta, x)


@dataclass(frozen=True)
class ZipfParams:
    """Intercept and decay exponent of the rank-volume law.

    ``c`` is the expected volume of the top-ranked query; ``beta`` the decay
    exponent.  Exponent values equal to 1 are legal here (the harmonic
    case); only the raw continuation kernels reject them.
    """

    c: float
    beta: float

    def __post_init__(self):
        if not (self.c > 0.0) or not math.isfinite(self.c):
            raise InvalidInputError(f"intercept must be finite and > 0, got {self.c}")
        if not (self.beta > 0.0) or not math.isfinite(self.beta):
            raise InvalidInputError(f"exponent must be finite and > 0, got {self.beta}")


@dataclass(frozen=True)
class PopulationSpec:
    """A concrete query population: law parameters plus its size.

    ``min_volume`` is the expected volume of the last-ranked query and
    defaults to ``c / N**beta``; it can be overridden when the population
    is known to be truncated elsewhere.
    """

    params: ZipfParams
    n_queries: int
    min_volume: float | None = None

    def __post_init__(self):
        if int(self.n_queries) != self.n_queries or self.n_queries < 1:
            raise InvalidInputError("n_queries must be a positive integer")
        object.__setattr__(self, "n_queries", int(self.n_queries))
        if self.min_volume is None:
            object.__setattr__(
                self,
                "min_volume",
                expected_volume(self.params, self.n_queries),
            )
        if not (0.0 < self.min_volume <= self.params.c):
            raise InvalidInputError(
                "min_volume must lie in (0, c]; "
                f"got {self.min_volume} with c = {self.params.c}"
            )

    @property
    def normalizer(self) -> float:
        """Normalizing constant of the per-rank observation probability."""
        return 1.0 / _mass(self.params.beta, self.n_queries)


@dataclass(frozen=True)
class PopulationEstimate:
    """Point estimates (with propagated errors) above one threshold."""

    threshold_v: float
    n_hat: float
    delta_n: float
    v_hat: float
    delta_v: float

    def __post_init__(self):
        if not (self.threshold_v > 0.0):
            raise InvalidInputError("threshold must be > 0")
        for name in ("n_hat", "delta_n", "v_hat", "delta_v"):
            if getattr(self, name) < 0.0:
                raise InvalidInputError(f"{name} must be non-negative")


def zipf_pmf(params_beta: float, n_queries: int, rank: int) -> float:
    """Probability that one observed search hits the query at ``rank``.

    The law assigns rank i probability ``A / i**beta`` with A normalizing
    over ranks 1..N.  Works for any positive exponent, including 1.
    """
    if not (params_beta > 0.0):
        raise InvalidInputError(f"exponent must be > 0, got {params_beta}")
    if int(n_queries) != n_queries or n_queries < 1:
        raise InvalidInputError("n_queries must be a positive integer")
    if int(rank) != rank or not (1 <= rank <= n_queries):
        raise InvalidInputError(
            f"rank must be an integer in [1, {n_queries}], got {rank}"
        )
    norm = _mass(params_beta, float(n_queries))
    return float(rank) ** (-params_beta) / norm


def expected_volume(params: ZipfParams, rank: int) -> float:
    """Expected volume of the query at ``rank``: c / rank**beta."""
    if rank < 1 or int(rank) != rank:
        raise InvalidInputError(f"rank must be an integer >= 1, got {rank}")
    return params.c * float(rank) ** (-params.beta)


def total_volume(spec: PopulationSpec) -> float:
    """Expected total volume of the whole population: c * H(beta, N)."""
    return spec.params.c * _mass(spec.params.beta, float(spec.n_queries))


def estimate_Nv(params: ZipfParams, v: float) -> float:
    """Estimated number of queries searched at least ``v`` times.

    Inverts the rank-volume law: ``(c / v)**(1/beta)``.  Thresholds above
    the intercept give a value below one query; that is flagged with
    :class:`ThresholdAboveTopVolumeWarning` rather than an error because
    sensitivity sweeps probe that region on purpose.
    """
    if not (v > 0.0) or not math.isfinite(v):
        raise InvalidInputError(f"threshold must be finite and > 0, got {v}")
    if v > params.c:
        warnings.warn(
            f"threshold {v} exceeds the intercept {params.c}; "
            "estimate falls below one query",
            ThresholdAboveTopVolumeWarning,
            stacklevel=2,
        )
    return math.exp(math.log(params.c / v) / params.beta)


def estimate_Vv(params: ZipfParams, v: float) -> float:
    """Estimated total volume of queries searched at least ``v`` times.

    Composes :func:`estimate_Nv` with the fused partial-sum kernel:
    ``c * H(beta, N_v)`` with N_v kept real-valued.
    """
    n_v = estimate_Nv(params, v)
    return params.c * _mass(params.beta, n_v)


def self_inversion_check(spec: PopulationSpec, tolerance: float = 1e-9) -> bool:
    """True when thresholding at the population's own ``min_volume``
    recovers its size: the two closed forms are mutual inverses."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ThresholdAboveTopVolumeWarning)
        recovered = estimate_Nv(spec.params, spec.min_volume)
    return abs(recovered - spec.n_queries) / spec.n_queries <= tolerance
