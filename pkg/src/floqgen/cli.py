"""Command-line entry point: ``floqgen run | compare | validate | list-configs``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from . import __version__
from .config import load_tolerances
from .errors import ConfigError, FloqgenError, PairingViolation, ShapeMismatch

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("floqgen")


def bundled_config(name: str) -> Path:
    """Path of a shipped figure config (``fig1a`` ... ``fig4d``)."""
    return Path(str(resources.files("floqgen") / "configs" / f"{name}.json"))


def _resolve(path: str) -> Path:
    p = Path(path)
    if p.exists():
        return p
    cand = bundled_config(p.stem)
    if cand.exists():
        return cand
    raise ConfigError(f"config {path} not found")


def _cmd_run(args) -> int:
    from .experiment import load_config, run_experiment

    cfg = load_config(_resolve(args.config))
    out = Path(args.out) if args.out else Path("out") / cfg.name
    manifest = run_experiment(cfg, out, __version__)
    for m in manifest["methods"]:
        diag = ", ".join(f"{k}={v:.2e}" for k, v in m["diagnostics"].items())
        print(f"{m['csv']}: {m['wall_clock_seconds']:.1f}s {diag}")
    print(f"manifest: {out / manifest['manifest']}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    from .experiment import compare

    summary = compare(args.a, args.b, args.mode, period=args.period)
    for kind in ("pointwise", "envelope"):
        for name, val in summary[kind].items():
            print(f"{kind:<9s} {name}: max|delta| = {val:.6e}")
    if args.json:
        print(json.dumps(summary))
    return EXIT_OK


def _cmd_validate(args) -> int:
    from .validation import run_validation

    results = run_validation(load_tolerances())
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_NUMERICAL if failed else EXIT_OK


def _cmd_list(args) -> int:
    root = Path(str(resources.files("floqgen") / "configs"))
    for p in sorted(root.glob("*.json")):
        desc = json.loads(p.read_text()).get("description", "")
        print(f"{p.stem:<8s} {desc}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="floqgen", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"floqgen {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment config (path or bundled name)")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (default out/<name>)")
    run.set_defaults(func=_cmd_run)

    cmp_ = sub.add_parser("compare", help="compare two trajectory CSVs")
    cmp_.add_argument("a")
    cmp_.add_argument("b")
    cmp_.add_argument("--mode", choices=("pointwise", "envelope"), default="pointwise")
    cmp_.add_argument("--period", type=float, help="fast period for envelope mode (default: from manifest)")
    cmp_.add_argument("--json", action="store_true", help="also print the summary as JSON")
    cmp_.set_defaults(func=_cmd_compare)

    val = sub.add_parser("validate", help="run the invariant and oracle suite")
    val.set_defaults(func=_cmd_validate)

    lst = sub.add_parser("list-configs", help="list bundled figure configs")
    lst.set_defaults(func=_cmd_list)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ConfigError, ShapeMismatch, PairingViolation, json.JSONDecodeError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloqgenError, ArithmeticError, ValueError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
