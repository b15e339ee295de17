"""Command-line front end: ``rarepop <mode> --config FILE [--seed N] [--out DIR] [--full-scale]``.

Exit status is 0 on success, 2 on a configuration error and 3 on a runtime
error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import MODES, load_config
from .errors import ConfigError, RarepopError
from .harness import run

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("rarepop")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rarepop", description="Bayesian estimation of rare clustered population totals.")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    p.add_argument("--full-scale", action="store_true",
                   help="use full-length chains and replication counts")
    p.add_argument("--workers", type=int, default=None, help="parallel replication workers")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.mode, args.seed, args.full_scale)
        if args.workers is not None:
            cfg = replace(cfg, workers=args.workers)
    except ConfigError as exc:
        print(f"rarepop: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = run(cfg, args.out)
    except ConfigError as exc:
        print(f"rarepop: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RarepopError, OSError) as exc:
        print(f"rarepop: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for f in result.get("failures", []) or []:
        log.warning("replication %s excluded: %s", f["replication"], f["error"])
    for key, val in result.items():
        if hasattr(val, "name"):
            log.info("wrote %s", val)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
