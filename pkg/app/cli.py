"""
Command-line front-end: ber, complexity, audit, selftest and serve.

A dotenv-style ``key=value`` file may be passed with --config; its keys are
the request-model field names (m, n, scheme, snr_db, ...) and any flag given
on the command line overrides the file.
"""
import argparse
import sys
from typing import Any, Dict, List, Optional, Sequence, Type

import pandas as pd
import uvicorn
from dotenv import dotenv_values
from pydantic import BaseModel, ValidationError

from .core.config import get_settings
from .core.exceptions import OtfsSimException
from .core.logging import get_logger, setup_logging
from .models.requests import AuditRequest, ComplexityRequest, SimConfig
from .services.complexity import format_audit
from .services.selftest import run_selftest
from .services.simulation_service import SimulationService

logger = get_logger(__name__)


def _float_list(text: str) -> List[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _int_list(text: str) -> List[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def _load_config_file(path: Optional[str], model: Type[BaseModel]) -> Dict[str, Any]:
    if not path:
        return {}
    values = {k.lower(): v for k, v in dotenv_values(path).items() if v is not None}
    unknown = sorted(set(values) - set(model.model_fields))
    if unknown:
        logger.warning(f"Ignoring unknown config keys: {', '.join(unknown)}")
    params: Dict[str, Any] = {}
    for key, value in values.items():
        if key not in model.model_fields:
            continue
        if key == "snr_db":
            params[key] = _float_list(value)
        elif key == "n_values":
            params[key] = _int_list(value)
        else:
            params[key] = value
    return params


def _merge(file_values: Dict[str, Any], flags: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(file_values)
    merged.update({k: v for k, v in flags.items() if v is not None})
    return merged


def _report_validation(exc: ValidationError) -> None:
    for err in exc.errors():
        field = ".".join(str(p) for p in err["loc"]) or "config"
        print(f"invalid {field}: {err['msg']}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otfs-sim", description="OTFS/OFDM LMMSE receiver simulator")
    parser.add_argument(
        "--log-level", type=str.upper, choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"],
        help="Override the configured log level"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ber = sub.add_parser("ber", help="Monte-Carlo BER sweep")
    ber.add_argument("--config", help="key=value configuration file")
    ber.add_argument("--m", type=int)
    ber.add_argument("--n", type=int)
    ber.add_argument("--delta-f", type=float, help="Subcarrier spacing (Hz)")
    ber.add_argument("--scheme", choices=["otfs", "ofdm"])
    ber.add_argument("--receiver", choices=["fast", "dense"])
    ber.add_argument("--qam", type=int, dest="qam_order", help="QAM order (4, 16, 64)")
    ber.add_argument("--profile", help="Profile name or .pdp file")
    ber.add_argument("--speed-kmh", type=float)
    ber.add_argument("--fc-ghz", type=float, help="Carrier frequency (GHz)")
    ber.add_argument("--snr-db", type=_float_list, help="Comma-separated SNR points (dB)")
    ber.add_argument("--frames", type=int, help="Frames per SNR point")
    ber.add_argument("--seed", type=int)
    ber.add_argument("--out", dest="output", help="CSV output path")
    ber.add_argument("--use-cp", action="store_true", default=None, help="Simulate an explicit cyclic prefix")
    ber.add_argument("--snr-includes-cp", action="store_true", default=None, help="Count CP energy against the SNR")
    ber.add_argument("--workers", type=int, help="Worker processes")
    ber.add_argument("--full-scale", action="store_true", help="512 x 128 grid, EVA, 500 km/h, 4 GHz")

    cx = sub.add_parser("complexity", help="Direct vs proposed CM sweep over M")
    cx.add_argument("--config", help="key=value configuration file")
    cx.add_argument("--profile")
    cx.add_argument("--n", type=_int_list, dest="n_values", help="Comma-separated block sizes N")
    cx.add_argument("--m-max", type=int)
    cx.add_argument("--speed-kmh", type=float)
    cx.add_argument("--fc-ghz", type=float)
    cx.add_argument("--out", dest="output", help="CSV output path")

    audit = sub.add_parser("audit", help="Measured vs closed-form CMs for one frame")
    audit.add_argument("--config", help="key=value configuration file")
    audit.add_argument("--m", type=int)
    audit.add_argument("--n", type=int)
    audit.add_argument("--scheme", choices=["otfs", "ofdm"])
    audit.add_argument("--profile")
    audit.add_argument("--speed-kmh", type=float)
    audit.add_argument("--fc-ghz", type=float)
    audit.add_argument("--snr-db", type=float)
    audit.add_argument("--seed", type=int)
    audit.add_argument("--out", dest="output", help="CSV output path")

    st = sub.add_parser("selftest", help="Fast receiver vs dense reference")
    st.add_argument("--instances", type=int, default=200)
    st.add_argument("--seed", type=int, default=0)

    sub.add_parser("serve", help="Start the HTTP API")
    return parser


def _flags(args: argparse.Namespace, model: Type[BaseModel]) -> Dict[str, Any]:
    values = {k: v for k, v in vars(args).items() if k in model.model_fields}
    if getattr(args, "fc_ghz", None) is not None:
        values["fc_hz"] = args.fc_ghz * 1e9
    return values


def _cmd_ber(args: argparse.Namespace) -> int:
    params = _merge(_load_config_file(args.config, SimConfig), _flags(args, SimConfig))
    cfg = SimConfig.full_scale(**params) if args.full_scale else SimConfig(**params)
    result = SimulationService(workers=args.workers).run_ber_sweep(cfg)
    df = pd.DataFrame([p.model_dump() for p in result.points])
    print(f"{cfg.scheme.value.upper()} / {cfg.receiver.value} receiver, {cfg.m}x{cfg.n}, {result.metadata['profile']}")
    print(df.to_string(index=False))
    if result.csv_filename:
        print(f"wrote {result.csv_filename}")
    return 0


def _cmd_complexity(args: argparse.Namespace) -> int:
    params = _merge(_load_config_file(args.config, ComplexityRequest), _flags(args, ComplexityRequest))
    report = SimulationService().run_complexity_report(ComplexityRequest(**params))
    for key, ratio in report.max_ratio.items():
        print(f"{key}: max direct/proposed = {ratio:.3e}")
    if report.csv_filename:
        print(f"wrote {report.csv_filename}")
    return 0


def _cmd_audit(args: argparse.Namespace) -> int:
    params = _merge(_load_config_file(args.config, AuditRequest), _flags(args, AuditRequest))
    report = SimulationService().run_audit(AuditRequest(**params))
    print(format_audit(report))
    if report.csv_filename:
        print(f"wrote {report.csv_filename}")
    return 0


def _cmd_selftest(args: argparse.Namespace) -> int:
    report = run_selftest(instances=args.instances, seed=args.seed)
    for case in report.cases:
        status = "PASS" if case.passed else "FAIL"
        print(f"{status}  {case.name:<22} max error {case.max_error:.2e}")
        if not case.passed and case.detail:
            print(f"      worst at {case.detail}")
    return 0 if report.passed else 1


def _cmd_serve(args: argparse.Namespace) -> int:
    settings = get_settings()
    uvicorn.run(
        "app.main:app",
        host=settings.host,
        port=settings.port,
        reload=settings.reload,
        log_level=settings.log_level.lower(),
        access_log=True
    )
    return 0


COMMANDS = {
    "ber": _cmd_ber,
    "complexity": _cmd_complexity,
    "audit": _cmd_audit,
    "selftest": _cmd_selftest,
    "serve": _cmd_serve,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except ValidationError as e:
        _report_validation(e)
        return 2
    except OtfsSimException as e:
        print(f"error [{e.error_code}]: {e.message}", file=sys.stderr)
        if e.details:
            print(f"  details: {e.details}", file=sys.stderr)
        return 1
