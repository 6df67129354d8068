"""Command-line entry point: ``drgr <verb> [--config PATH] [--key value ...]``.

Exit codes: 0 success, 1 internal error, 2 usage/config/dependency error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config
from .dataprep import DataError
from .pipeline import COMMANDS, STAGES, StageError, run_all

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drgr",
        description="Group recommendation with a DDPG agent in a matrix-factorization simulator.",
        epilog="Any config key can be overridden as --key value (e.g. --episodes 1).",
    )
    parser.add_argument("verb", choices=[*STAGES, "all"])
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--seed", help="master seed")
    parser.add_argument("--workspace", help="workspace directory")
    parser.add_argument("--threads", help="worker threads for data preparation")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _overrides(extra: list[str]) -> dict[str, str]:
    out = {}
    it = iter(extra)
    for tok in it:
        if not tok.startswith("--"):
            raise ConfigError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            value = next(it, None)
            if value is None:
                raise ConfigError(f"option {tok} needs a value")
        out[key] = value
    return out


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        overrides = _overrides(extra)
        for key in ("seed", "workspace", "threads"):
            if getattr(args, key) is not None:
                overrides[key] = getattr(args, key)
        cfg = load_config(args.config, overrides)
        if args.verb == "all":
            run_all(cfg)
        else:
            for path in COMMANDS[args.verb](cfg):
                print(path)
    except (ConfigError, StageError, FileNotFoundError, DataError) as exc:
        print(f"drgr {args.verb}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - top-level guard maps to exit code 1
        logging.getLogger("drgr").exception("internal error")
        print(f"drgr {args.verb}: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
