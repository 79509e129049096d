"""Estimate the total number and volume of queries behind biased samples.

Observed search-query volumes follow a rank-volume power law; fitting its
intercept and exponent from a (possibly non-uniform, noisy, or sketch-
inflated, possibly binned) sample lets one extrapolate how many queries
exceed any volume threshold and how much volume they carry, with
propagated standard errors.  The package bundles the fitting pipelines,
the closed-form estimators, bias-model simulators, and a Monte Carlo
harness that validates the whole chain.
"""

__version__ = "0.1.0"

from .errors import (
    DegenerateDataError,
    InvalidInputError,
    NonConvergenceError,
    NumericalError,
    QvolError,
    SingularMatrixError,
    ThresholdAboveTopVolumeWarning,
)
from .experiments import (
    AggregateStats,
    CellStats,
    ExperimentConfig,
    run_monte_carlo,
    scatter_empirical_vs_estimated,
    volume_sensitivity_sweep,
)
from .fit_binned import fit_binned_pipeline
from .fit_continuous import FitResult, fit_continuous_pipeline
from .model import (
    PopulationEstimate,
    PopulationSpec,
    ZipfParams,
    estimate_Nv,
    estimate_Vv,
    expected_volume,
    total_volume,
    zipf_pmf,
)
from .reports import ReportRow, ingest_binned, ingest_continuous, report_table
from .sampling import (
    BinnedSample,
    BinningScheme,
    ContinuousSample,
    SamplingConfig,
    build_population,
    draw_sample,
    infer_binning,
)
from .uncertainty import ParamErrors, delta_N, delta_V, partials_N, partials_V

__all__ = [
    "__version__",
    "QvolError",
    "InvalidInputError",
    "DegenerateDataError",
    "NumericalError",
    "NonConvergenceError",
    "SingularMatrixError",
    "ThresholdAboveTopVolumeWarning",
    "ZipfParams",
    "PopulationSpec",
    "PopulationEstimate",
    "zipf_pmf",
    "expected_volume",
    "total_volume",
    "estimate_Nv",
    "estimate_Vv",
    "ParamErrors",
    "partials_N",
    "partials_V",
    "delta_N",
    "delta_V",
    "SamplingConfig",
    "BinningScheme",
    "ContinuousSample",
    "BinnedSample",
    "build_population",
    "draw_sample",
    "infer_binning",
    "FitResult",
    "fit_continuous_pipeline",
    "fit_binned_pipeline",
    "ExperimentConfig",
    "CellStats",
    "AggregateStats",
    "run_monte_carlo",
    "scatter_empirical_vs_estimated",
    "volume_sensitivity_sweep",
    "ReportRow",
    "ingest_continuous",
    "ingest_binned",
    "report_table",
]
