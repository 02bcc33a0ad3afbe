"""``otcnet`` command line.

Exit codes: 0 success, 1 input error, 2 internal error.  Errors are printed
to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import report
from .config import ConfigError, RunConfig
from .correlate import FIELDS
from .ingest import IngestError

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2


def _range(text: str) -> list[str]:
    parts = text.split(":")
    if len(parts) != 2 or not all(parts):
        raise argparse.ArgumentTypeError("expected START:END, e.g. 1998-Q4:2012-Q4")
    return parts


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--tolerant", action="store_true", default=None,
                        help="skip structurally broken input rows and log them")
    common.add_argument("--panel", help="panel CSV (17-column layout)")
    common.add_argument("--aliases", help="alias TSV (default: bundled table)")
    common.add_argument("--quarters", type=_range, help="declared quarter range START:END")
    common.add_argument("--allow-unsafe-merge", action="store_true", default=None)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="otcnet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("ingest", parents=[common], help="normalize a raw panel CSV")

    p = sub.add_parser("stats", parents=[common], help="concentration statistics and fits")
    p.add_argument("--ks-trials", type=int)
    p.add_argument("--p-threshold", type=float)
    p.add_argument("--market-totals", help="CSV quarter,market_total")

    sub.add_parser("network", parents=[common], help="aggregated network exports")

    for name in ("kcore", "correlate", "frames", "report"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--alpha", type=float)
        p.add_argument("--beta", type=float)
        p.add_argument("--schedule", choices=("distinct", "integer"))
        if name == "correlate":
            p.add_argument("--field", choices=FIELDS, action="append", dest="fields")
            p.add_argument("--period", type=_range)
            p.add_argument("--scaled", action=argparse.BooleanOptionalAction, default=None)
            p.add_argument("--split", help="boundary quarter for before/after matrices, e.g. 2008-Q4")
        if name == "frames":
            p.add_argument("--mode", choices=("rank", "binary"), dest="frames_mode")
        if name == "report":
            p.add_argument("--ks-trials", type=int)
            p.add_argument("--p-threshold", type=float)
            p.add_argument("--market-totals")
            p.add_argument("--split", help="boundary quarter for before/after matrices, e.g. 2008-Q4")
    return parser


_OVERRIDES = ("out", "seed", "tolerant", "panel", "aliases", "quarters", "allow_unsafe_merge",
              "ks_trials", "p_threshold", "market_totals", "alpha", "beta", "schedule", "fields",
              "period", "scaled", "split", "frames_mode")


def effective_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for name in _OVERRIDES:
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if isinstance(cfg.split, str) and cfg.split.lower() == "none":
        cfg.split = None
    return cfg


def run(args: argparse.Namespace) -> None:
    cfg = effective_config(args)
    cfg.validate()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    panel = report.panel_for(cfg)
    cmd = args.command
    if cmd == "ingest":
        arts = report.write_ingest(panel, out)
    elif cmd == "stats":
        arts = report.write_stats(panel, cfg, out)
    elif cmd == "network":
        arts = report.write_network(panel, out)
    elif cmd == "kcore":
        arts = report.write_kcore(panel, cfg, out)
    elif cmd == "correlate":
        arts = report.write_correlations(panel, cfg, out)
    elif cmd == "frames":
        arts = report.write_frames(panel, cfg, out)
    else:
        arts = report.run_report(cfg)
    for a in arts:
        print(a.path)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except (IngestError, ConfigError, FileNotFoundError, KeyError, ValueError) as exc:
        _fail(exc, EXIT_INPUT)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        _fail(exc, EXIT_INTERNAL)
        return EXIT_INTERNAL
    return EXIT_OK


def _fail(exc: BaseException, code: int) -> None:
    msg = str(exc)
    if isinstance(exc, FileNotFoundError) and exc.filename:
        msg = f"file not found: {exc.filename}"
    print(json.dumps({"error": type(exc).__name__, "message": msg, "exit_code": code}),
          file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
