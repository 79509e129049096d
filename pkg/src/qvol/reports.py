"""CSV ingestion and threshold-report construction.

Input files are two-column CSVs: ``query,volume`` for continuous data,
``query,reported_volume`` for binned data whose values are the upper
edges of a geometric ladder.  Reports evaluate, for each volume
threshold v, the estimated number of queries searched at least v times
and their total volume, with propagated errors.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, InvalidInputError
from .model import PopulationEstimate, ZipfParams, estimate_Nv, estimate_Vv
from .sampling import BinnedSample, ContinuousSample, infer_binning
from .uncertainty import ParamErrors, delta_N, delta_V

__all__ = [
    "ReportRow",
    "ingest_continuous",
    "ingest_binned",
    "binned_sample_from_values",
    "report_table",
    "export_continuous",
    "export_binned",
    "format_count",
    "format_volume_millions",
    "render_report",
]

MONTHS_PER_PERIOD = 12  # thresholds are yearly volumes; reports add v/12


@dataclass(frozen=True)
class ReportRow:
    """One line of a threshold report, raw (unrounded) values."""

    threshold_v: float
    threshold_v_monthly: float
    n_hat: float
    delta_n: float
    v_hat: float
    delta_v: float

    def to_json(self) -> dict:
        return {
            "threshold_v": self.threshold_v,
            "threshold_v_monthly": self.threshold_v_monthly,
            "n_hat": self.n_hat,
            "delta_n": self.delta_n,
            "v_hat": self.v_hat,
            "delta_v": self.delta_v,
        }


def _read_rows(path, expected_header):
    """Yield (line_num, name, value) triples from a two-column CSV."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InvalidInputError(f"{path}: empty file") from None
        normalized = [col.strip().lower() for col in header]
        if normalized != list(expected_header):
            raise InvalidInputError(
                f"{path}: expected header {','.join(expected_header)}, "
                f"got {','.join(header)}"
            )
        for row in reader:
            if not row:
                continue
            line = reader.line_num
            if len(row) != 2:
                raise InvalidInputError(
                    f"{path}: line {line}: expected 2 columns, got {len(row)}"
                )
            name = row[0].strip()
            if not name:
                raise InvalidInputError(f"{path}: line {line}: empty query name")
            try:
                value = float(row[1])
            except ValueError:
                raise InvalidInputError(
                    f"{path}: line {line}: volume {row[1]!r} is not a number"
                ) from None
            if not math.isfinite(value) or value <= 0.0:
                raise InvalidInputError(
                    f"{path}: line {line}: volume must be a positive number, "
                    f"got {row[1]}"
                )
            yield line, name, value


def _collect(path, expected_header):
    seen: dict = {}
    values = []
    for line, name, value in _read_rows(path, expected_header):
        if name in seen:
            raise InvalidInputError(
                f"{path}: line {line}: duplicate query {name!r} "
                f"(first at line {seen[name]})"
            )
        seen[name] = line
        values.append(value)
    if not values:
        raise DegenerateDataError(f"{path}: no data rows")
    return np.asarray(values, dtype=float)


def ingest_continuous(path) -> ContinuousSample:
    """Load a query,volume CSV as a descending-sorted sample."""
    values = _collect(path, ("query", "volume"))
    return ContinuousSample(volumes=np.sort(values)[::-1].copy())


def binned_sample_from_values(values) -> BinnedSample:
    """Build a binned sample from raw reported values.

    The ladder is inferred from the distinct values; each value is then
    snapped to the nearest rung, so float round-off never shifts a count
    into a neighboring bin.
    """
    values = np.asarray(values, dtype=float)
    scheme = infer_binning(values)
    log_ratio = math.log(scheme.ratio)
    rungs = np.rint(np.log(values / scheme.first_edge) / log_ratio).astype(int)
    rungs = np.clip(rungs, 0, scheme.bin_count - 1)
    counts = np.bincount(rungs, minlength=scheme.bin_count)
    return BinnedSample(scheme=scheme, counts=counts)


def ingest_binned(path) -> BinnedSample:
    """Load a query,reported_volume CSV, reconstructing the bin ladder."""
    return binned_sample_from_values(_collect(path, ("query", "reported_volume")))


def report_table(params: ZipfParams, errs: ParamErrors, thresholds):
    """Population estimates above each threshold, with propagated errors.

    Rows keep the caller's threshold order.  Thresholds above the fitted
    intercept c are rejected: the law predicts nothing there.
    """
    rows = []
    for v in thresholds:
        v = float(v)
        estimate = PopulationEstimate(
            threshold_v=v,
            n_hat=estimate_Nv(params, v),
            delta_n=delta_N(params, errs, v),
            v_hat=estimate_Vv(params, v),
            delta_v=delta_V(params, errs, v),
        )
        rows.append(
            ReportRow(
                threshold_v=v,
                threshold_v_monthly=v / MONTHS_PER_PERIOD,
                n_hat=estimate.n_hat,
                delta_n=estimate.delta_n,
                v_hat=estimate.v_hat,
                delta_v=estimate.delta_v,
            )
        )
    return tuple(rows)


def format_count(x: float) -> str:
    return f"{round(x):,}"


def format_volume_millions(x: float) -> str:
    return f"{x / 1e6:,.2f}M"


def render_report(rows) -> str:
    """Human-readable report: counts as integers, volumes in millions."""
    lines = ["threshold_v,threshold_v_monthly,n_hat,delta_n,v_hat,delta_v"]
    for row in rows:
        lines.append(
            ",".join(
                (
                    format_count(row.threshold_v),
                    format_count(row.threshold_v_monthly),
                    format_count(row.n_hat),
                    format_count(row.delta_n),
                    format_volume_millions(row.v_hat),
                    format_volume_millions(row.delta_v),
                )
            )
        )
    return "\n".join(lines)


def export_continuous(sample: ContinuousSample, path) -> None:
    """Write a sample back to query,volume CSV (synthetic query names).

    Volumes are serialized with full precision, so ingesting the file
    again reproduces the sample exactly.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query", "volume"])
        for k, v in enumerate(sample.volumes, start=1):
            writer.writerow([f"q{k}", repr(float(v))])


def export_binned(sample: BinnedSample, path) -> None:
    """Write a binned sample as query,reported_volume rows (ladder values)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["query", "reported_volume"])
        for k, v in enumerate(sample.reported_values(), start=1):
            writer.writerow([f"q{k}", repr(float(v))])
