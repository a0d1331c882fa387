"""Command-line entry point.

Exit codes: 0 success, 1 unexpected error, 2 invalid config, 3 missing
input, 4 training divergence or numeric failure, 5 malformed or
inconsistent data files.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

from lcsbench import __version__
from lcsbench.errors import ConfigError, LcsBenchError, MissingInputError
from lcsbench.pipeline import STAGES, _range, load_config, run_all

LOG_ENV = "LCSBENCH_LOG_LEVEL"

log = logging.getLogger("lcsbench")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML or JSON pipeline config")
    common.add_argument("--seed", type=int, metavar="N", help="override the config seed")
    common.add_argument("--out", metavar="DIR", help="run directory (default from config, else ./run)")

    p = argparse.ArgumentParser(prog="lcsbench", description="Synthetic telemetry anomaly-detection pipeline.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    helps = {
        "generate": "write synthetic records and ground truth",
        "aggregate": "aggregate records into unpivoted and pivoted tables",
        "train": "fit the scaler and autoencoder on the training split",
        "detect": "reconstruction error, likelihood and flags on the test split",
        "score": "score flags against the anomaly windows",
        "sweep": "score every likelihood parameter set in the grid",
        "run-all": "run every stage and write a manifest",
    }
    for name, text in helps.items():
        sp = sub.add_parser(name, parents=[common], help=text)
        if name in ("aggregate", "run-all"):
            sp.add_argument("--interval-seconds", type=int, help="aggregation interval (default 300)")
            sp.add_argument("--range", dest="time_range", metavar="START..END", help="half-open time range")
            sp.add_argument("--on-malformed", choices=("skip", "fail"), help="malformed record policy")
    return p


def _configure_logging() -> None:
    level = os.environ.get(LOG_ENV, "INFO").upper()
    if not isinstance(logging.getLevelName(level), int):
        level = "INFO"
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _apply_overrides(cfg, args):
    agg = {}
    if getattr(args, "interval_seconds", None) is not None:
        agg["interval_seconds"] = args.interval_seconds
    if getattr(args, "time_range", None) is not None:
        agg["range"] = _range(args.time_range)
    if getattr(args, "on_malformed", None) is not None:
        agg["on_malformed"] = args.on_malformed
    if agg:
        cfg = replace(cfg, aggregation=replace(cfg.aggregation, **agg))
    return cfg


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging()
    try:
        cfg = _apply_overrides(load_config(args.config, seed=args.seed, out=args.out), args)
        if args.command == "run-all":
            manifest = run_all(cfg)
            print(json.dumps({"out": str(cfg.root), "config_hash": manifest.config_hash, "timings": manifest.timings}))
        else:
            for path in STAGES[args.command](cfg):
                print(path)
    except LcsBenchError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except FileNotFoundError as exc:
        log.error("%s", exc)
        return MissingInputError.exit_code
    except (TypeError, KeyError) as exc:
        # malformed config values surface here
        log.error("invalid configuration: %s", exc)
        return ConfigError.exit_code
    except Exception:
        log.exception("unexpected failure")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
