"""Synthetic populations, the three sampling-bias models, and binning.

Population volumes are the deterministic expected values ``c / i**beta``
(no multinomial resampling); all randomness lives in which ranks a sample
selects and in the observation noise applied afterwards:

* non-uniform sampling draws a fixed number of distinct ranks with
  inclusion weight decaying geometrically in rank,
* noisy sampling multiplies each selected volume by truncated-normal
  observation noise,
* sketchy sampling adds uniform overcount noise proportional to the top
  volume, the signature of counting-sketch frequency estimators.

After noise the sample is re-sorted by observed volume: downstream fits
only ever see observed ranks, which is exactly the bias being studied.

Binned reporting maps a volume to the geometric ladder
``l_j = l_1 * delta**(j-1)`` and reports the upper bin edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, InvalidInputError
from .model import PopulationSpec

__all__ = [
    "SamplingConfig",
    "BinningScheme",
    "ContinuousSample",
    "BinnedSample",
    "build_population",
    "sample_nonuniform",
    "sample_uniform",
    "apply_noise",
    "apply_sketch",
    "draw_sample",
    "bin_of",
    "bin_volumes",
    "infer_binning",
]

SCHEMES = ("uniform", "nonuniform", "noisy", "sketchy")

# Default memory cap for materialized populations (number of queries).
DEFAULT_POPULATION_CAP = 10**8


@dataclass(frozen=True)
class SamplingConfig:
    """One sampling scenario: scheme, size, bias knobs, and the seed.

    Defaults mirror the simulation setup the estimators are validated
    against: geometric inclusion decay 0.001 per rank, multiplicative
    noise with mean 1 and variance 0.01/9 (so virtually all factors fall
    within +-10%), and a sketch overcount fraction of 0.001.
    """

    scheme: str
    sample_size: int
    geometric_p: float = 0.001
    noise_mean: float = 1.0
    noise_sd: float = math.sqrt(0.01 / 9.0)
    sketch_fraction: float = 0.001
    seed: int = 42

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise InvalidInputError(
                f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}"
            )
        if self.sample_size < 1:
            raise InvalidInputError("sample_size must be >= 1")
        if not (0.0 < self.geometric_p < 1.0):
            raise InvalidInputError("geometric_p must lie in (0, 1)")
        if self.noise_sd < 0.0:
            raise InvalidInputError("noise_sd must be >= 0")
        if self.sketch_fraction < 0.0:
            raise InvalidInputError("sketch_fraction must be >= 0")


@dataclass(frozen=True)
class BinningScheme:
    """Geometric volume bins: bin j covers [edge(j-1), edge(j)).

    ``floor`` is the lower bound of the first bin; edges follow
    ``first_edge * ratio**(j-1)`` for j = 1..bin_count.  The top bin is
    closed at the last edge: reported values never exceed it.
    """

    floor: float
    first_edge: float
    ratio: float
    bin_count: int

    def __post_init__(self):
        if not (self.floor > 0.0):
            raise InvalidInputError("floor must be > 0")
        if not (self.first_edge > self.floor):
            raise InvalidInputError("first_edge must exceed the floor")
        if not (self.ratio > 1.0):
            raise InvalidInputError("ratio must be > 1")
        if self.bin_count < 1:
            raise InvalidInputError("bin_count must be >= 1")

    def upper_edge(self, j: int) -> float:
        """Upper edge of bin j (the value reported for that bin)."""
        if not (1 <= j <= self.bin_count):
            raise InvalidInputError(f"bin index {j} outside [1, {self.bin_count}]")
        return self.first_edge * self.ratio ** (j - 1)

    def lower_edge(self, j: int) -> float:
        if not (1 <= j <= self.bin_count):
            raise InvalidInputError(f"bin index {j} outside [1, {self.bin_count}]")
        return self.floor if j == 1 else self.first_edge * self.ratio ** (j - 2)

    def edges(self) -> np.ndarray:
        """All upper edges, ascending."""
        return self.first_edge * self.ratio ** np.arange(self.bin_count)


@dataclass(frozen=True, eq=False)
class ContinuousSample:
    """Observed volumes sorted descending, with optional provenance.

    ``true_ranks[k]`` is the population rank that produced the k-th
    observed volume; simulators fill it in, ingested data leaves it None.
    """

    volumes: np.ndarray
    true_ranks: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.volumes, dtype=float)
        if v.ndim != 1 or v.size == 0:
            raise InvalidInputError("volumes must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(v)) or not np.all(v > 0.0):
            raise InvalidInputError("volumes must be finite and > 0")
        if np.any(np.diff(v) > 0.0):
            raise InvalidInputError("volumes must be sorted descending")
        object.__setattr__(self, "volumes", v)
        if self.true_ranks is not None:
            r = np.asarray(self.true_ranks, dtype=np.int64)
            if r.shape != v.shape:
                raise InvalidInputError("true_ranks must align with volumes")
            object.__setattr__(self, "true_ranks", r)

    @property
    def size(self) -> int:
        return int(self.volumes.size)

    def includes_rank(self, rank: int) -> bool:
        if self.true_ranks is None:
            raise InvalidInputError("sample carries no rank provenance")
        return bool(np.any(self.true_ranks == rank))


@dataclass(frozen=True, eq=False)
class BinnedSample:
    """Per-bin observation counts on a geometric ladder."""

    scheme: BinningScheme
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 1 or c.size != self.scheme.bin_count:
            raise InvalidInputError(
                "counts must be 1-d with one entry per bin "
                f"({self.scheme.bin_count})"
            )
        if np.any(c < 0) or not np.all(np.equal(np.mod(c, 1), 0)):
            raise InvalidInputError("counts must be non-negative integers")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @property
    def size(self) -> int:
        return int(self.counts.sum())

    def reported_values(self) -> np.ndarray:
        """Each bin's upper edge repeated count times, descending."""
        values = np.repeat(self.scheme.edges(), self.counts)
        return values[::-1].copy()


# ---------------------------------------------------------------------------
# Population and samplers
# ---------------------------------------------------------------------------


def build_population(
    spec: PopulationSpec, *, memory_cap: int = DEFAULT_POPULATION_CAP
) -> np.ndarray:
    """Materialize the expected volumes c / i**beta for i = 1..N."""
    if spec.n_queries > memory_cap:
        raise InvalidInputError(
            f"population of {spec.n_queries} queries exceeds the cap {memory_cap}"
        )
    ranks = np.arange(1.0, spec.n_queries + 1.0)
    return spec.params.c * ranks**-spec.params.beta


def _finalize(volumes: np.ndarray, ranks: np.ndarray | None) -> ContinuousSample:
    """Sort descending by observed volume, carrying provenance along."""
    order = np.argsort(-volumes, kind="stable")
    return ContinuousSample(
        volumes=volumes[order],
        true_ranks=None if ranks is None else ranks[order],
    )


def sample_nonuniform(
    population: np.ndarray, n: int, p: float, rng: np.random.Generator
) -> ContinuousSample:
    """Fixed-size weighted sampling without replacement, weight of rank i
    proportional to ``p * (1-p)**(i-1)``.

    Implemented with exponential race keys (draw E_i ~ Exp(1), keep the n
    smallest E_i / w_i), which is equivalent to sequential weighted draws
    without replacement.  Keys are compared in log space so the weights
    never underflow even for ranks far beyond 1/p.
    """
    pop = np.asarray(population, dtype=float)
    size = pop.size
    if not (0.0 < p < 1.0):
        raise InvalidInputError("p must lie in (0, 1)")
    if not (1 <= n <= size):
        raise InvalidInputError(f"need 1 <= n <= {size}, got {n}")
    # log key = log E_i - log w_i; the constant log(p) cancels.
    log_keys = np.log(rng.exponential(size=size)) - np.log1p(-p) * np.arange(size)
    chosen = np.argpartition(log_keys, n - 1)[:n]
    ranks = np.sort(chosen) + 1
    return _finalize(pop[ranks - 1], ranks)


def sample_uniform(
    population: np.ndarray, n: int, rng: np.random.Generator
) -> ContinuousSample:
    """Equal-weight sampling of n distinct ranks."""
    pop = np.asarray(population, dtype=float)
    if not (1 <= n <= pop.size):
        raise InvalidInputError(f"need 1 <= n <= {pop.size}, got {n}")
    ranks = np.sort(rng.choice(pop.size, size=n, replace=False)) + 1
    return _finalize(pop[ranks - 1], ranks)


def apply_noise(
    sample: ContinuousSample, mu: float, sigma: float, rng: np.random.Generator
) -> ContinuousSample:
    """Multiply volumes by normal(mu, sigma) noise truncated at zero.

    Truncation is by rejection; at the default mu = 1, sigma ~ 0.033 the
    zero boundary is thirty standard deviations away, so rejections are
    effectively free.
    """
    if sigma < 0.0:
        raise InvalidInputError("sigma must be >= 0")
    eps = rng.normal(mu, sigma, size=sample.size) if sigma > 0.0 else np.full(
        sample.size, float(mu)
    )
    bad = eps <= 0.0
    while np.any(bad):
        eps[bad] = rng.normal(mu, sigma, size=int(bad.sum()))
        bad = eps <= 0.0
    return _finalize(sample.volumes * eps, sample.true_ranks)


def apply_sketch(
    sample: ContinuousSample,
    gamma: float,
    c_top: float,
    rng: np.random.Generator,
) -> ContinuousSample:
    """Add uniform overcount noise in [0, gamma * c_top] to every volume.

    ``c_top`` is the population intercept (the top expected volume), the
    natural scale of a counting sketch's collision error.
    """
    if gamma < 0.0:
        raise InvalidInputError("gamma must be >= 0")
    if not (c_top > 0.0):
        raise InvalidInputError("c_top must be > 0")
    bump = rng.uniform(0.0, gamma, size=sample.size) * c_top
    return _finalize(sample.volumes + bump, sample.true_ranks)


def draw_sample(
    population: np.ndarray,
    config: SamplingConfig,
    rng: np.random.Generator | None = None,
) -> ContinuousSample:
    """Run one full sampling scenario.

    All four schemes start from the same fixed-size selection step
    (uniform or geometric-weight), then apply the scheme's observation
    noise.  With ``rng`` omitted the config's seed is used, so identical
    configs produce bit-identical samples.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if config.scheme == "uniform":
        return sample_uniform(population, config.sample_size, rng)
    base = sample_nonuniform(
        population, config.sample_size, config.geometric_p, rng
    )
    if config.scheme == "nonuniform":
        return base
    if config.scheme == "noisy":
        return apply_noise(base, config.noise_mean, config.noise_sd, rng)
    # sketchy
    return apply_sketch(
        base, config.sketch_fraction, float(np.max(population)), rng
    )


# ---------------------------------------------------------------------------
# Binning
# ---------------------------------------------------------------------------


def bin_of(scheme: BinningScheme, v: float) -> int:
    """Bin index of a volume: max(1, 2 + floor(log_ratio(v / first_edge))),
    clamped to the top bin.

    Edges belong to the bin above them.  The arithmetic is done by exact
    comparison against the materialized edges so values sitting on an edge
    never leak into the wrong bin through log round-off.
    """
    if not (v >= scheme.floor):
        raise InvalidInputError(
            f"volume {v} below the binning floor {scheme.floor}"
        )
    edges = scheme.edges()
    j = int(np.searchsorted(edges, v, side="right")) + 1
    return min(j, scheme.bin_count)


def bin_volumes(scheme: BinningScheme, sample: ContinuousSample) -> BinnedSample:
    """Histogram a continuous sample onto the ladder."""
    v = sample.volumes
    if np.any(v < scheme.floor):
        raise InvalidInputError("sample contains volumes below the binning floor")
    edges = scheme.edges()
    idx = np.searchsorted(edges, v, side="right")  # 0-based bin index
    idx = np.minimum(idx, scheme.bin_count - 1)
    counts = np.bincount(idx, minlength=scheme.bin_count)
    return BinnedSample(scheme=scheme, counts=counts)


def infer_binning(reported_values) -> BinningScheme:
    """Reconstruct the geometric ladder behind a set of reported values.

    The ratio is recovered as exp(median of per-rung log-ratios), where
    each successive log-ratio is first divided by its rung gap (the
    nearest integer multiple of the smallest observed log-ratio) so that
    missing rungs do not inflate the estimate.  The floor is placed one
    rung below the smallest reported value.
    """
    values = np.unique(np.asarray(reported_values, dtype=float))
    if values.size < 3:
        raise DegenerateDataError(
            "need at least 3 distinct reported values to infer a ladder"
        )
    if values[0] <= 0.0:
        raise InvalidInputError("reported values must be > 0")
    log_ratios = np.diff(np.log(values))
    unit = float(np.min(log_ratios))
    gaps = np.maximum(1, np.round(log_ratios / unit))
    ratio = float(np.exp(np.median(log_ratios / gaps)))
    first = float(values[0])
    span = math.log(values[-1] / first) / math.log(ratio)
    bin_count = 1 + int(round(span))
    return BinningScheme(
        floor=first / ratio,
        first_edge=first,
        ratio=ratio,
        bin_count=max(bin_count, 1),
    )
