"""Monte Carlo validation harness.

Repeatedly samples a synthetic query population under the four bias
schemes, runs the configured fitting pipelines, and aggregates the
recovered parameters and population estimates into per-cell means and
standard deviations.  A cell is one (scheme, sample size, method)
combination; all replicates of a cell draw from independent, replicate-
indexed random streams so results are reproducible bit-for-bit and do
not depend on execution order or worker count.
"""

from __future__ import annotations

import csv
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from statistics import median

import numpy as np

from .errors import InvalidInputError, QvolError, ThresholdAboveTopVolumeWarning
from .fit_binned import fit_binned_pipeline
from .fit_continuous import (
    BINNED_METHODS,
    CONTINUOUS_METHODS,
    fit_continuous_pipeline,
)
from .model import PopulationSpec, ZipfParams, estimate_Nv, estimate_Vv
from .sampling import (
    SCHEMES,
    BinnedSample,
    BinningScheme,
    ContinuousSample,
    SamplingConfig,
    bin_volumes,
    build_population,
    draw_sample,
)

__all__ = [
    "DEFAULT_SAMPLE_SIZES",
    "DEFAULT_BIN_RATIO",
    "ExperimentConfig",
    "CellStats",
    "AggregateStats",
    "ScatterRecord",
    "default_binning",
    "run_monte_carlo",
    "scatter_empirical_vs_estimated",
    "volume_sensitivity_sweep",
    "rank_distribution_export",
    "split_bias_by_top_rank",
]

DEFAULT_SAMPLE_SIZES = (500, 1000, 2000, 4000, 6000, 8000, 10000)
DEFAULT_BIN_RATIO = 1.2324


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulation campaign.

    ``schemes`` and ``methods`` are normalized to canonical order at
    construction so that two configs naming the same cells compare (and
    hash into seeds) identically regardless of how they were spelled.
    """

    population: PopulationSpec
    schemes: tuple = ("nonuniform",)
    sample_sizes: tuple = DEFAULT_SAMPLE_SIZES
    methods: tuple = ("NLS",)
    replicates: int = 100
    base_seed: int = 42
    binned: bool = False
    scheme_binning: BinningScheme | None = None
    geometric_p: float = 0.001
    noise_mean: float = 1.0
    noise_sd: float = math.sqrt(0.01 / 9.0)
    sketch_fraction: float = 0.001
    gamma_hint: float | None = None

    def __post_init__(self):
        if self.replicates < 1:
            raise InvalidInputError("replicates must be >= 1")
        wanted = set(self.schemes)
        unknown = wanted - set(SCHEMES)
        if unknown:
            raise InvalidInputError(
                f"unknown schemes {sorted(unknown)}; expected subset of {SCHEMES}"
            )
        if not wanted:
            raise InvalidInputError("at least one scheme is required")
        object.__setattr__(
            self, "schemes", tuple(s for s in SCHEMES if s in wanted)
        )
        sizes = sorted({int(n) for n in self.sample_sizes})
        if not sizes:
            raise InvalidInputError("at least one sample size is required")
        if sizes[0] < 1 or sizes[-1] > self.population.n_queries:
            raise InvalidInputError(
                "sample sizes must lie in [1, N] "
                f"(N = {self.population.n_queries})"
            )
        object.__setattr__(self, "sample_sizes", tuple(sizes))
        allowed = BINNED_METHODS if self.binned else CONTINUOUS_METHODS
        tags = []
        for m in self.methods:
            tag = str(m).upper().replace("-", "_")
            if tag == "CONSTRAINED":
                tag = "CSN_CONSTRAINED_CHI2"
            if tag not in allowed:
                kind = "binned" if self.binned else "continuous"
                raise InvalidInputError(
                    f"method {m!r} is not a {kind} method; expected one of {allowed}"
                )
            tags.append(tag)
        if not tags:
            raise InvalidInputError("at least one method is required")
        object.__setattr__(
            self, "methods", tuple(t for t in allowed if t in set(tags))
        )


@dataclass(frozen=True)
class CellStats:
    """Aggregates of one (scheme, sample size, method) cell.

    Standard deviations use the n-1 normalization and are reported as 0
    when fewer than two replicates survived.  ``failures`` counts the
    replicates excluded because the fit raised (non-convergence,
    degenerate tails); they do not enter the means.
    """

    scheme: str
    sample_size: int
    method: str
    replicates_used: int
    failures: int
    mean_c: float
    sd_c: float
    mean_beta: float
    sd_beta: float
    mean_n_hat: float
    sd_n_hat: float
    mean_v_hat: float
    sd_v_hat: float
    include_v1_fraction: float

    def to_json(self) -> dict:
        return {
            "scheme": self.scheme,
            "sample_size": self.sample_size,
            "method": self.method,
            "replicates_used": self.replicates_used,
            "failures": self.failures,
            "mean_c": self.mean_c,
            "sd_c": self.sd_c,
            "mean_beta": self.mean_beta,
            "sd_beta": self.sd_beta,
            "mean_n_hat": self.mean_n_hat,
            "sd_n_hat": self.sd_n_hat,
            "mean_v_hat": self.mean_v_hat,
            "sd_v_hat": self.sd_v_hat,
            "include_v1_fraction": self.include_v1_fraction,
        }


@dataclass(frozen=True)
class AggregateStats:
    """All cells of a campaign, in canonical (scheme, size, method) order."""

    base_seed: int
    replicates: int
    cells: tuple

    def lookup(self, scheme: str, sample_size: int, method: str) -> CellStats:
        for cell in self.cells:
            if (
                cell.scheme == scheme
                and cell.sample_size == sample_size
                and cell.method == method
            ):
                return cell
        raise InvalidInputError(
            f"no cell ({scheme}, {sample_size}, {method}) in these results"
        )

    def to_json(self) -> dict:
        return {
            "base_seed": self.base_seed,
            "replicates": self.replicates,
            "cells": [cell.to_json() for cell in self.cells],
        }


@dataclass(frozen=True)
class ScatterRecord:
    replicate: int
    empirical_volume: float
    estimated_volume: float
    includes_rank1: bool


def default_binning(
    spec: PopulationSpec, ratio: float = DEFAULT_BIN_RATIO
) -> BinningScheme:
    """Geometric ladder used when a binned campaign gives no scheme.

    Floored at the population's smallest expected volume and extended
    half an order of magnitude past c so noisy or sketch-inflated top
    volumes still land inside the ladder.
    """
    floor = spec.min_volume
    first = floor * ratio
    span = 1.5 * spec.params.c / first
    count = max(3, 2 + math.ceil(math.log(span) / math.log(ratio)))
    return BinningScheme(floor=floor, first_edge=first, ratio=ratio, bin_count=count)


def _replicate_rng(base_seed: int, scheme: str, n: int, rep: int):
    key = (SCHEMES.index(scheme), n, rep)
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=key))


def _point_estimates(params: ZipfParams, v_threshold: float):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ThresholdAboveTopVolumeWarning)
        n_hat = estimate_Nv(params, v_threshold)
        v_hat = estimate_Vv(params, v_threshold)
    return n_hat, v_hat


def _sampling_config(config: ExperimentConfig, scheme: str, n: int) -> SamplingConfig:
    return SamplingConfig(
        scheme=scheme,
        sample_size=n,
        geometric_p=config.geometric_p,
        noise_mean=config.noise_mean,
        noise_sd=config.noise_sd,
        sketch_fraction=config.sketch_fraction,
        seed=config.base_seed,
    )


def _bin_sample(sample: ContinuousSample, scheme: BinningScheme) -> BinnedSample:
    # Observation noise can push a volume below the ladder floor; such
    # values are reported in the first bin, like any real tool would.
    clamped = ContinuousSample(
        volumes=np.maximum(sample.volumes, scheme.floor),
        true_ranks=sample.true_ranks,
    )
    return bin_volumes(scheme, clamped)


def _fit_one(config: ExperimentConfig, data, method: str):
    if config.binned:
        return fit_binned_pipeline(data, method, gamma_hint=config.gamma_hint)
    return fit_continuous_pipeline(data, method)


def _run_cell(config: ExperimentConfig, scheme: str, n: int):
    """All replicates of one (scheme, n) cell, every configured method."""
    population = build_population(config.population)
    v_threshold = config.population.min_volume
    binning = None
    if config.binned:
        binning = config.scheme_binning or default_binning(config.population)
    sampling = _sampling_config(config, scheme, n)

    values = {m: [] for m in config.methods}
    failures = {m: 0 for m in config.methods}
    include_v1 = 0
    for rep in range(config.replicates):
        rng = _replicate_rng(config.base_seed, scheme, n, rep)
        sample = draw_sample(population, sampling, rng)
        include_v1 += int(sample.includes_rank(1))
        data = _bin_sample(sample, binning) if config.binned else sample
        for method in config.methods:
            try:
                fit = _fit_one(config, data, method)
                n_hat, v_hat = _point_estimates(fit.params, v_threshold)
            except (QvolError, OverflowError):
                failures[method] += 1
                continue
            values[method].append(
                (fit.params.c, fit.params.beta, n_hat, v_hat)
            )

    cells = []
    for method in config.methods:
        block = np.asarray(values[method], dtype=float).reshape(-1, 4)
        used = block.shape[0]
        if used >= 1:
            means = block.mean(axis=0)
        else:
            means = np.zeros(4)
        if used >= 2:
            sds = block.std(axis=0, ddof=1)
        else:
            sds = np.zeros(4)
        cells.append(
            CellStats(
                scheme=scheme,
                sample_size=n,
                method=method,
                replicates_used=used,
                failures=failures[method],
                mean_c=float(means[0]),
                sd_c=float(sds[0]),
                mean_beta=float(means[1]),
                sd_beta=float(sds[1]),
                mean_n_hat=float(means[2]),
                sd_n_hat=float(sds[2]),
                mean_v_hat=float(means[3]),
                sd_v_hat=float(sds[3]),
                include_v1_fraction=include_v1 / config.replicates,
            )
        )
    return cells


def _run_cell_star(args):
    return _run_cell(*args)


def run_monte_carlo(config: ExperimentConfig, jobs: int = 1) -> AggregateStats:
    """Execute the campaign; deterministic for a given config.

    With ``jobs > 1`` the (scheme, sample size) cells run in separate
    processes; every replicate's random stream is keyed by its indices,
    so parallel and serial runs produce identical aggregates.
    """
    if jobs < 1:
        raise InvalidInputError("jobs must be >= 1")
    grid = [(scheme, n) for scheme in config.schemes for n in config.sample_sizes]
    if jobs == 1 or len(grid) == 1:
        blocks = [_run_cell(config, scheme, n) for scheme, n in grid]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(grid))) as pool:
            blocks = list(
                pool.map(_run_cell_star, [(config, s, n) for s, n in grid])
            )
    cells = tuple(cell for block in blocks for cell in block)
    return AggregateStats(
        base_seed=config.base_seed, replicates=config.replicates, cells=cells
    )


def scatter_empirical_vs_estimated(config: ExperimentConfig):
    """Per-replicate (observed total, estimated total) pairs.

    Runs the first scheme / sample size / method of the config, tagging
    each replicate with whether the top-ranked query entered the sample.
    Replicates whose fit fails are omitted.
    """
    scheme = config.schemes[0]
    n = config.sample_sizes[0]
    method = config.methods[0]
    population = build_population(config.population)
    v_threshold = config.population.min_volume
    binning = None
    if config.binned:
        binning = config.scheme_binning or default_binning(config.population)
    sampling = _sampling_config(config, scheme, n)

    records = []
    for rep in range(config.replicates):
        rng = _replicate_rng(config.base_seed, scheme, n, rep)
        sample = draw_sample(population, sampling, rng)
        includes = bool(sample.includes_rank(1))
        if config.binned:
            data = _bin_sample(sample, binning)
            empirical = float(data.reported_values().sum())
        else:
            data = sample
            empirical = float(sample.volumes.sum())
        try:
            fit = _fit_one(config, data, method)
            _, v_hat = _point_estimates(fit.params, v_threshold)
        except (QvolError, OverflowError):
            continue
        records.append(
            ScatterRecord(
                replicate=rep,
                empirical_volume=empirical,
                estimated_volume=v_hat,
                includes_rank1=includes,
            )
        )
    return tuple(records)


def volume_sensitivity_sweep(
    c: float, n_queries: int, beta_true: float, beta_grid
):
    """Total-volume estimate as a function of the exponent alone.

    The threshold is pinned at the true smallest volume c / N**beta_true
    and the intercept at c, isolating how exponent bias propagates into
    the volume estimate.
    """
    if n_queries < 1:
        raise InvalidInputError("n_queries must be >= 1")
    v_floor = c / n_queries**beta_true
    pairs = []
    for beta in beta_grid:
        params = ZipfParams(c=c, beta=float(beta))
        pairs.append((float(beta), estimate_Vv(params, v_floor)))
    return tuple(pairs)


def rank_distribution_export(source, path_or_file) -> None:
    """Write a rank,volume CSV (ascending rank) for external plotting.

    ``source`` is either a rank-indexed volume array (a population) or a
    sample; samples with provenance use their true population ranks.
    The destination may be a path or an open text file.
    """
    if isinstance(source, ContinuousSample):
        volumes = source.volumes
        if source.true_ranks is not None:
            order = np.argsort(source.true_ranks, kind="stable")
            ranks = source.true_ranks[order]
            volumes = volumes[order]
        else:
            ranks = np.arange(1, volumes.size + 1)
    else:
        volumes = np.asarray(source, dtype=float)
        if volumes.ndim != 1 or volumes.size == 0:
            raise InvalidInputError("population export needs a 1-d volume array")
        ranks = np.arange(1, volumes.size + 1)
    if hasattr(path_or_file, "write"):
        _write_rank_csv(path_or_file, ranks, volumes)
    else:
        with open(path_or_file, "w", newline="") as fh:
            _write_rank_csv(fh, ranks, volumes)


def _write_rank_csv(fh, ranks, volumes) -> None:
    writer = csv.writer(fh)
    writer.writerow(["rank", "volume"])
    for r, v in zip(ranks, volumes):
        writer.writerow([int(r), repr(float(v))])


def split_bias_by_top_rank(records, true_volume: float) -> tuple[float, float]:
    """Median |estimate - truth| for replicates with and without the top
    query; a quick check of how much missing rank 1 biases the estimate."""
    with_top = [
        abs(r.estimated_volume - true_volume) for r in records if r.includes_rank1
    ]
    without = [
        abs(r.estimated_volume - true_volume)
        for r in records
        if not r.includes_rank1
    ]
    if not with_top or not without:
        raise InvalidInputError("need records on both sides of the split")
    return float(median(with_top)), float(median(without))
