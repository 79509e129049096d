"""FastAPI application wrapping the fitting and simulation pipelines.

Domain errors map onto two HTTP families: invalid input (including
degenerate data) is 400, numerical breakdown is 500.  Both return
``{"error": <message>, "kind": <exception class>}`` so clients can
branch without parsing prose.
"""

from __future__ import annotations

import io

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse

from .. import __version__
from ..errors import InvalidInputError, NumericalError
from ..experiments import (
    ExperimentConfig,
    rank_distribution_export,
    run_monte_carlo,
)
from ..fit_binned import fit_binned_pipeline
from ..fit_continuous import FitResult, fit_continuous_pipeline
from ..model import PopulationSpec, ZipfParams
from ..reports import binned_sample_from_values, report_table
from ..sampling import (
    BinningScheme,
    ContinuousSample,
    SamplingConfig,
    build_population,
    draw_sample,
)
from ..uncertainty import ParamErrors
from .schemas import (
    BinnedFitRequest,
    CellStatsModel,
    ContinuousFitRequest,
    EstimateRequest,
    EstimateResponse,
    FitResponse,
    HealthResponse,
    RankExportRequest,
    ReportRowModel,
    SimulateRequest,
    SimulateResponse,
)

app = FastAPI(title="qvol", version=__version__)


@app.exception_handler(InvalidInputError)
async def _invalid_input(request: Request, exc: InvalidInputError):
    return JSONResponse(
        status_code=400,
        content={"error": str(exc), "kind": type(exc).__name__},
    )


@app.exception_handler(NumericalError)
async def _numerical_failure(request: Request, exc: NumericalError):
    return JSONResponse(
        status_code=500,
        content={"error": str(exc), "kind": type(exc).__name__},
    )


def _fit_response(fit: FitResult) -> FitResponse:
    return FitResponse(
        method=fit.method,
        c=fit.params.c,
        beta=fit.params.beta,
        delta_c=fit.errors.delta_c,
        delta_beta=fit.errors.delta_beta,
        cutoff_rank=fit.cutoff_rank,
        cutoff_volume=fit.cutoff_volume,
        ks=fit.ks_distance,
        alpha=fit.alpha,
        flags=list(fit.flags),
    )


@app.get("/health", response_model=HealthResponse)
async def health() -> HealthResponse:
    return HealthResponse(status="ok", version=__version__)


@app.post("/fit/continuous", response_model=FitResponse)
async def fit_continuous(req: ContinuousFitRequest) -> FitResponse:
    volumes = np.sort(np.asarray(req.volumes, dtype=float))[::-1]
    sample = ContinuousSample(volumes=volumes.copy())
    return _fit_response(fit_continuous_pipeline(sample, req.method))


@app.post("/fit/binned", response_model=FitResponse)
async def fit_binned(req: BinnedFitRequest) -> FitResponse:
    sample = binned_sample_from_values(req.reported_values)
    fit = fit_binned_pipeline(sample, req.method, gamma_hint=req.gamma)
    return _fit_response(fit)


@app.post("/estimate", response_model=EstimateResponse)
async def estimate(req: EstimateRequest) -> EstimateResponse:
    params = ZipfParams(c=req.c, beta=req.beta)
    errs = ParamErrors(delta_c=req.delta_c, delta_beta=req.delta_beta)
    rows = report_table(params, errs, req.thresholds)
    return EstimateResponse(
        c=req.c,
        beta=req.beta,
        delta_c=req.delta_c,
        delta_beta=req.delta_beta,
        rows=[ReportRowModel(**row.to_json()) for row in rows],
    )


@app.post("/simulate", response_model=SimulateResponse)
async def simulate(req: SimulateRequest) -> SimulateResponse:
    spec = PopulationSpec(
        params=ZipfParams(c=req.c, beta=req.beta), n_queries=req.n_queries
    )
    binning = None
    if req.binning is not None:
        binning = BinningScheme(
            floor=req.binning.floor,
            first_edge=req.binning.first_edge,
            ratio=req.binning.ratio,
            bin_count=req.binning.bin_count,
        )
    config = ExperimentConfig(
        population=spec,
        schemes=tuple(req.schemes),
        sample_sizes=tuple(req.sample_sizes),
        methods=tuple(req.methods),
        replicates=req.replicates,
        base_seed=req.base_seed,
        binned=req.binned,
        scheme_binning=binning,
        geometric_p=req.geometric_p,
        noise_mean=req.noise_mean,
        noise_sd=req.noise_sd,
        sketch_fraction=req.sketch_fraction,
        gamma_hint=req.gamma_hint,
    )
    stats = run_monte_carlo(config, jobs=req.jobs)
    return SimulateResponse(
        base_seed=stats.base_seed,
        replicates=stats.replicates,
        cells=[CellStatsModel(**cell.to_json()) for cell in stats.cells],
    )


@app.post("/export/rank-distribution")
async def export_rank_distribution(req: RankExportRequest) -> PlainTextResponse:
    spec = PopulationSpec(
        params=ZipfParams(c=req.c, beta=req.beta), n_queries=req.n_queries
    )
    population = build_population(spec)
    if req.scheme is None:
        source = population
    else:
        if req.sample_size is None:
            raise InvalidInputError("sample_size is required when scheme is set")
        config = SamplingConfig(
            scheme=req.scheme,
            sample_size=req.sample_size,
            geometric_p=req.geometric_p,
            noise_mean=req.noise_mean,
            noise_sd=req.noise_sd,
            sketch_fraction=req.sketch_fraction,
            seed=req.seed,
        )
        source = draw_sample(population, config)
    buffer = io.StringIO()
    rank_distribution_export(source, buffer)
    return PlainTextResponse(buffer.getvalue(), media_type="text/csv")
