"""Command-line client for the fitting and estimation service.

Every command is a thin HTTP client over the FastAPI app: by default the
app is called in-process (no socket involved), ``--server`` points the
same calls at a running instance instead.  Output is JSON on stdout with
floats at 17 significant digits (bit-stable for golden diffs); ``--csv``
switches to flat tables.  Exit codes: 0 success, 1 bad input, 2
numerical or transport failure.
"""

from __future__ import annotations

import argparse
import asyncio
import math
import json
import os
import sys

import httpx

from . import __version__
from .errors import InvalidInputError, NumericalError, QvolError
from .reports import ingest_binned, ingest_continuous
from .sampling import SCHEMES
from .service import app as service_app

DEFAULT_SEED = 42

_FIT_KEYS = ("method", "c", "beta", "delta_c", "delta_beta", "cutoff_rank", "ks")
_ROW_KEYS = (
    "threshold_v",
    "threshold_v_monthly",
    "n_hat",
    "delta_n",
    "v_hat",
    "delta_v",
)
_CELL_KEYS = (
    "scheme",
    "sample_size",
    "method",
    "replicates_used",
    "failures",
    "mean_c",
    "sd_c",
    "mean_beta",
    "sd_beta",
    "mean_n_hat",
    "sd_n_hat",
    "mean_v_hat",
    "sd_v_hat",
    "include_v1_fraction",
)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _format_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def _to_json_text(obj) -> str:
    """JSON with floats at 17 significant digits, non-finite as null."""
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        items = (f"{json.dumps(str(k))}:{_to_json_text(v)}" for k, v in obj.items())
        return "{" + ",".join(items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_to_json_text(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _scalar_csv(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return _format_float(value)
    return str(value)


def _print_table(keys, records) -> None:
    print(",".join(keys))
    for record in records:
        print(",".join(_scalar_csv(record.get(k)) for k in keys))


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on usage errors; this tool reserves 2
    for numerical failures, so usage errors are remapped to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: input: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> _Parser:
    # Global options live on a shared parent so they are accepted both
    # before and after the subcommand; SUPPRESS keeps the subparser from
    # clobbering a value already parsed at the front.
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--server",
        default=argparse.SUPPRESS,
        metavar="URL",
        help="base URL of a running service (default: run in-process)",
    )
    common.add_argument(
        "--seed",
        type=int,
        default=argparse.SUPPRESS,
        help="seed for randomized commands",
    )
    common.add_argument(
        "--csv",
        action="store_true",
        default=argparse.SUPPRESS,
        help="tabular output instead of JSON",
    )

    parser = _Parser(
        prog="qvol",
        description="Fit rank-volume laws to query samples and estimate "
        "population totals above volume thresholds.",
        parents=[common],
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser(
        "fit-continuous", help="fit a query,volume CSV", parents=[common]
    )
    p.add_argument("csv_path")
    p.add_argument("--method", default="nls", choices=["nls", "csn-max"])
    p.add_argument(
        "--thresholds",
        default=None,
        metavar="V1,V2,...",
        help="also report estimates above these volumes",
    )

    p = sub.add_parser(
        "fit-binned", help="fit a query,reported_volume CSV", parents=[common]
    )
    p.add_argument("csv_path")
    p.add_argument("--method", default="chi2", choices=["chi2", "constrained"])
    p.add_argument(
        "--gamma",
        type=float,
        default=None,
        help="known sketch overcount fraction; filters low bins",
    )
    p.add_argument("--thresholds", default=None, metavar="V1,V2,...")

    p = sub.add_parser(
        "estimate", help="report totals for given parameters", parents=[common]
    )
    p.add_argument("--c", type=float, required=True, help="fitted intercept")
    p.add_argument("--beta", type=float, required=True, help="fitted exponent")
    p.add_argument("--dc", type=float, default=0.0, help="error on c")
    p.add_argument("--dbeta", type=float, default=0.0, help="error on beta")
    p.add_argument("--thresholds", required=True, metavar="V1,V2,...")

    p = sub.add_parser("simulate", help="run a Monte Carlo campaign", parents=[common])
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument("--jobs", type=int, default=None, help="parallel worker count")

    p = sub.add_parser(
        "export-plot", help="rank,volume CSV for plotting", parents=[common]
    )
    p.add_argument("--out", required=True, help="output path, or - for stdout")
    p.add_argument("--n-queries", type=int, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument(
        "--scheme",
        default=None,
        choices=list(SCHEMES),
        help="export a sample under this scheme instead of the population",
    )
    p.add_argument("--sample-size", type=int, default=None)

    p = sub.add_parser("serve", help="run the HTTP service", parents=[common])
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)

    return parser


def _parse_thresholds(text: str):
    values = []
    for piece in text.split(","):
        piece = piece.strip()
        if not piece:
            continue
        try:
            values.append(float(piece))
        except ValueError:
            raise InvalidInputError(
                f"threshold {piece!r} is not a number"
            ) from None
    if not values:
        raise InvalidInputError("no thresholds given")
    return values


def _parse_bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise InvalidInputError(f"expected a boolean, got {text!r}")


def _parse_config_file(path) -> dict:
    entries = {}
    with open(path) as fh:
        for line_num, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise InvalidInputError(
                    f"{path}: line {line_num}: expected key = value"
                )
            entries[key.strip()] = value.strip()
    return entries


_CONFIG_SCALARS = {
    "n_queries": int,
    "c": float,
    "beta": float,
    "replicates": int,
    "base_seed": int,
    "binned": _parse_bool,
    "geometric_p": float,
    "noise_mean": float,
    "noise_sd": float,
    "sketch_fraction": float,
    "gamma_hint": float,
    "jobs": int,
    "binning_floor": float,
    "binning_first_edge": float,
    "binning_ratio": float,
    "binning_bin_count": int,
}
_CONFIG_LISTS = {"schemes": str, "sample_sizes": int, "methods": str}


def _simulate_payload(entries: dict) -> dict:
    payload: dict = {}
    binning: dict = {}
    for key, raw in entries.items():
        if key in _CONFIG_LISTS:
            convert = _CONFIG_LISTS[key]
            try:
                payload[key] = [
                    convert(piece.strip())
                    for piece in raw.split(",")
                    if piece.strip()
                ]
            except ValueError:
                raise InvalidInputError(
                    f"config key {key}: cannot parse {raw!r}"
                ) from None
        elif key in _CONFIG_SCALARS:
            try:
                value = _CONFIG_SCALARS[key](raw)
            except ValueError:
                raise InvalidInputError(
                    f"config key {key}: cannot parse {raw!r}"
                ) from None
            if key.startswith("binning_"):
                binning[key[len("binning_") :]] = value
            else:
                payload[key] = value
        else:
            raise InvalidInputError(f"unknown config key {key!r}")
    if binning:
        missing = {"floor", "first_edge", "ratio", "bin_count"} - set(binning)
        if missing:
            raise InvalidInputError(
                f"incomplete binning spec; missing {sorted(missing)}"
            )
        payload["binning"] = binning
    return payload


def _resolve_seed(cli_seed, config_seed=None) -> int:
    """--seed beats the config file, which beats QVOL_SEED, which beats
    the fixed default (announced on stderr so silent runs stay honest)."""
    if cli_seed is not None:
        return int(cli_seed)
    if config_seed is not None:
        return int(config_seed)
    env = os.environ.get("QVOL_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InvalidInputError(
                f"QVOL_SEED must be an integer, got {env!r}"
            ) from None
    print(
        f"qvol: no seed given; using default {DEFAULT_SEED} "
        "(set --seed or QVOL_SEED)",
        file=sys.stderr,
    )
    return DEFAULT_SEED


# ---------------------------------------------------------------------------
# HTTP plumbing
# ---------------------------------------------------------------------------


async def _call(server, method: str, path: str, payload=None):
    if server is None:
        transport = httpx.ASGITransport(app=service_app)
        async with httpx.AsyncClient(
            transport=transport, base_url="http://qvol.internal", timeout=None
        ) as client:
            return await _request(client, method, path, payload)
    async with httpx.AsyncClient(base_url=server, timeout=600.0) as client:
        return await _request(client, method, path, payload)


async def _request(client, method, path, payload):
    response = await client.request(method, path, json=payload)
    content_type = response.headers.get("content-type", "")
    if content_type.startswith("application/json"):
        try:
            return response.status_code, response.json()
        except ValueError:
            pass
    return response.status_code, response.text


def _error_message(body) -> str:
    if isinstance(body, dict):
        if "error" in body:
            return str(body["error"])
        if "detail" in body:
            detail = body["detail"]
            return detail if isinstance(detail, str) else json.dumps(detail)
    return str(body)


class _RemoteFailure(Exception):
    def __init__(self, exit_code: int, message: str):
        super().__init__(message)
        self.exit_code = exit_code


def _post(server, path, payload) -> dict:
    status, body = asyncio.run(_call(server, "POST", path, payload))
    if status == 200:
        return body
    if status in (400, 422):
        raise _RemoteFailure(1, f"input: {_error_message(body)}")
    raise _RemoteFailure(2, f"numerical: {_error_message(body)}")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _report_from_fit(args, fit: dict) -> dict:
    rows = []
    if args.thresholds:
        estimate = _post(
            args.server,
            "/estimate",
            {
                "c": fit["c"],
                "beta": fit["beta"],
                "delta_c": fit["delta_c"],
                "delta_beta": fit["delta_beta"],
                "thresholds": _parse_thresholds(args.thresholds),
            },
        )
        rows = estimate["rows"]
    report = {key: fit.get(key) for key in _FIT_KEYS}
    report["rows"] = rows
    return report


def _emit_report(args, report: dict) -> None:
    if not args.csv:
        print(_to_json_text(report))
        return
    _print_table(_FIT_KEYS, [report])
    if report["rows"]:
        print()
        _print_table(_ROW_KEYS, report["rows"])


def _cmd_fit_continuous(args) -> int:
    sample = ingest_continuous(args.csv_path)
    fit = _post(
        args.server,
        "/fit/continuous",
        {"volumes": [float(v) for v in sample.volumes], "method": args.method},
    )
    _emit_report(args, _report_from_fit(args, fit))
    return 0


def _cmd_fit_binned(args) -> int:
    sample = ingest_binned(args.csv_path)
    payload = {
        "reported_values": [float(v) for v in sample.reported_values()],
        "method": args.method,
    }
    if args.gamma is not None:
        payload["gamma"] = args.gamma
    fit = _post(args.server, "/fit/binned", payload)
    _emit_report(args, _report_from_fit(args, fit))
    return 0


def _cmd_estimate(args) -> int:
    body = _post(
        args.server,
        "/estimate",
        {
            "c": args.c,
            "beta": args.beta,
            "delta_c": args.dc,
            "delta_beta": args.dbeta,
            "thresholds": _parse_thresholds(args.thresholds),
        },
    )
    report = {
        "method": None,
        "c": body["c"],
        "beta": body["beta"],
        "delta_c": body["delta_c"],
        "delta_beta": body["delta_beta"],
        "cutoff_rank": None,
        "ks": None,
        "rows": body["rows"],
    }
    if args.csv:
        _print_table(_ROW_KEYS, report["rows"])
    else:
        print(_to_json_text(report))
    return 0


def _cmd_simulate(args) -> int:
    entries = _parse_config_file(args.config)
    payload = _simulate_payload(entries)
    payload["base_seed"] = _resolve_seed(args.seed, payload.get("base_seed"))
    if args.jobs is not None:
        payload["jobs"] = args.jobs
    body = _post(args.server, "/simulate", payload)
    if args.csv:
        _print_table(_CELL_KEYS, body["cells"])
    else:
        print(_to_json_text(body))
    return 0


def _cmd_export_plot(args) -> int:
    payload = {
        "n_queries": args.n_queries,
        "c": args.c,
        "beta": args.beta,
    }
    if args.scheme is not None:
        payload["scheme"] = args.scheme
        if args.sample_size is None:
            raise InvalidInputError("--sample-size is required with --scheme")
        payload["sample_size"] = args.sample_size
        payload["seed"] = _resolve_seed(args.seed)
    status, body = asyncio.run(
        _call(args.server, "POST", "/export/rank-distribution", payload)
    )
    if status != 200:
        if status in (400, 422):
            raise _RemoteFailure(1, f"input: {_error_message(body)}")
        raise _RemoteFailure(2, f"numerical: {_error_message(body)}")
    if args.out == "-":
        sys.stdout.write(body)
    else:
        with open(args.out, "w", newline="") as fh:
            fh.write(body)
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run(service_app, host=args.host, port=args.port)
    return 0


_COMMANDS = {
    "fit-continuous": _cmd_fit_continuous,
    "fit-binned": _cmd_fit_binned,
    "estimate": _cmd_estimate,
    "simulate": _cmd_simulate,
    "export-plot": _cmd_export_plot,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    # Global flags use SUPPRESS so front and rear placement cooperate;
    # fill the defaults for whichever were never given.
    for name, default in (("server", None), ("seed", None), ("csv", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    try:
        return _COMMANDS[args.command](args)
    except _RemoteFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except InvalidInputError as exc:
        print(f"error: input: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 2
    except QvolError as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: input: {exc}", file=sys.stderr)
        return 1
    except httpx.HTTPError as exc:
        print(f"error: transport: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
