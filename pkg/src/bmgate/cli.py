"""Command-line front end.

    bmgate simulate --config run.json --out results/
    bmgate optimize --config run.json --E 0.0568
    bmgate figures  --config run.json

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 analysis error.
Set ``BMGATE_LOG=INFO`` (or DEBUG) for progress logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import COMMANDS, RunConfig, load_config
from .engine import run_simulation
from .errors import AnalysisError, ConfigError, CurveError, DegenerateInputError, DomainError
from .measure import qber_min
from .monitor import run_monitor
from .security import analyze, optimize_threshold, scan_csv, threshold_scan

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_ANALYSIS = 4

log = logging.getLogger("bmgate")


def _dump(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)
    return path


# Where results go and how many threads compute them do not change the results.
_NOT_ECHOED = ("out", "workers")


def _envelope(cfg: RunConfig, **body) -> dict:
    config = {k: v for k, v in cfg.to_dict().items() if k not in _NOT_ECHOED}
    return {"command": cfg.command, "seed": cfg.seed, "config": config, **body}


def _error_rate(cfg: RunConfig, resp) -> tuple[float, str, float | None]:
    """E from the config, or from a simulation run when absent."""
    if cfg.E is not None:
        return cfg.E, "input", None
    result = run_simulation(
        resp, cfg.strategy_obj(), cfg.n_gates, cfg.seed, cfg.channel(), workers=cfg.workers
    )
    if not result.n_sifted:
        raise AnalysisError("simulation produced no sifted detections; cannot estimate E")
    return result.empirical_qber, "simulation", result.qber_stderr


def cmd_simulate(cfg: RunConfig) -> list[Path]:
    resp = cfg.response()
    result = run_simulation(
        resp, cfg.strategy_obj(), cfg.n_gates, cfg.seed, cfg.channel(), workers=cfg.workers
    )
    out = Path(cfg.out)
    return [
        _write(out, "sim_result.json", _dump(_envelope(cfg, result=result.to_dict()))),
        _write(out, "histogram.csv", result.histogram_csv()),
    ]


def cmd_analyze(cfg: RunConfig) -> list[Path]:
    resp = cfg.response()
    E, source, stderr = _error_rate(cfg, resp)
    report = analyze(resp, E, cfg.E_prime, cfg.delta, E_source=source, E_stderr=stderr)
    return [_write(Path(cfg.out), "security_report.json", _dump(_envelope(cfg, report=report.to_dict())))]


def cmd_optimize(cfg: RunConfig) -> list[Path]:
    resp = cfg.response()
    grid = cfg.grid()
    if not grid:
        raise AnalysisError("threshold grid is empty")
    E, source, stderr = _error_rate(cfg, resp)
    best, report = optimize_threshold(resp, E, grid, cfg.delta, E_source=source, E_stderr=stderr)
    out = Path(cfg.out)
    return [
        _write(out, "security_report.json", _dump(_envelope(cfg, best_E_prime=best, report=report.to_dict()))),
        _write(out, "threshold_scan.csv", scan_csv(threshold_scan(resp, E, grid, cfg.delta))),
    ]


def cmd_monitor(cfg: RunConfig) -> list[Path]:
    resp = cfg.response()
    report = run_monitor(
        resp,
        cfg.strategy_obj(),
        cfg.monitor_config(),
        cfg.n_gates,
        cfg.seed,
        cfg.channel(),
        simulate_key=cfg.simulate_key,
        workers=cfg.workers,
    )
    return [_write(Path(cfg.out), "monitor.json", _dump(_envelope(cfg, report=report.to_dict())))]


def qber_min_csv(resp) -> str:
    lines = ["t_ns,qber_min"]
    for t, q in zip(resp.t_grid, qber_min(resp.theta)):
        lines.append(f"{float(t)!r},{float(q)!r}")
    return "\n".join(lines) + "\n"


def cmd_figures(cfg: RunConfig) -> list[Path]:
    resp = cfg.response()
    E, _, _ = _error_rate(cfg, resp)
    out = Path(cfg.out)
    return [
        _write(out, "qber_min_vs_t.csv", qber_min_csv(resp)),
        _write(out, "threshold_scan.csv", scan_csv(threshold_scan(resp, E, cfg.grid(), cfg.delta))),
    ]


HANDLERS = {
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "optimize": cmd_optimize,
    "monitor": cmd_monitor,
    "figures": cmd_figures,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bmgate", description="Bit-mapped gating: simulation and security analysis"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "run the gate-by-gate Monte Carlo",
        "analyze": "security report for a fixed threshold E'",
        "optimize": "choose E' maximizing f*eta' and report rates",
        "monitor": "simulate the calibrated-light-source blindness test",
        "figures": "write QBER_min(t) and threshold-scan CSV files",
    }
    for name in COMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="unsigned 64-bit seed")
        p.add_argument("--out", help="output directory (default: current directory)")
        p.add_argument("--curve", dest="curve_file", help="curve CSV, or fixture:<name>")
        p.add_argument("--window", nargs=2, type=float, metavar=("START", "END"),
                       dest="bitmapped_window", help="bit-mapped window in ns")
        p.add_argument("--strategy", type=json.loads, help='strategy as JSON, e.g. \'{"tag": "honest"}\'')
        p.add_argument("--n-gates", type=int, dest="n_gates")
        p.add_argument("--workers", type=int)
        p.add_argument("--E", type=float, help="measured (single-photon) QBER; skips simulation")
        p.add_argument("--E-prime", type=float, dest="E_prime")
        p.add_argument("--delta", type=float)
        p.add_argument("--grid-step", type=float, help="E' grid step over (0, 1/2]")
    return parser


def main(argv=None) -> int:
    level = os.environ.get("BMGATE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK

    overrides = {
        k: getattr(args, k)
        for k in ("seed", "out", "curve_file", "bitmapped_window", "strategy",
                  "n_gates", "workers", "E", "E_prime", "delta")
    }
    if args.grid_step is not None:
        overrides["E_prime_grid"] = {"step": args.grid_step}
    try:
        cfg = load_config(args.config, args.command, overrides)
        paths = HANDLERS[args.command](cfg)
    except (ConfigError, CurveError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        where = f" ({exc.filename})" if getattr(exc, "filename", None) else ""
        print(f"I/O error{where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except (AnalysisError, DomainError, DegenerateInputError) as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    for path in paths:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
