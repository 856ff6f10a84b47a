"""``quanputer`` command line.

    quanputer <kind> [--config FILE] [--set section.key=value ...] [--out DIR] [--seed N]
    quanputer run NAME [--set ...] [--out DIR] [--seed N]
    quanputer list
    quanputer verify bch|kernel [--eps-points N] [--out DIR] [--seed N]

Exit codes: 0 success, 2 configuration error, 3 numeric or oracle failure,
4 a computed order or tolerance check failed.
"""
import argparse
import json
import os
import platform
import sys
import time

import numpy as np
import scipy

from . import __version__
from .config import KINDS, load
from .errors import ConfigError, QuanputerError
from .scenarios import DEFAULT_FOR_KIND, REGISTRY, RUNNERS, list_scenarios, summary_json

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_ORDER = 0, 2, 3, 4


def _write_outputs(out_dir, files):
    os.makedirs(out_dir, exist_ok=True)
    for name, content in files.items():
        mode = "wb" if isinstance(content, bytes) else "w"
        kwargs = {} if mode == "wb" else {"newline": "", "encoding": "utf-8"}
        with open(os.path.join(out_dir, name), mode, **kwargs) as fh:
            fh.write(content)


def execute(kind, text=None, overrides=None, out_dir=None, seed=0, scenario=None, stream=None):
    """Validate, run and write one scenario; returns the exit status."""
    stream = stream or sys.stdout
    base = REGISTRY[scenario].raw if scenario else None
    if text is None and base is None:
        base = REGISTRY[DEFAULT_FOR_KIND[kind]].raw
    try:
        cfg, raw = load(kind, text, overrides, base)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = out_dir or os.path.join("quanputer-out", scenario or kind)
    rng = np.random.default_rng(seed)
    start = time.perf_counter()
    try:
        result = RUNNERS[kind](cfg, rng)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (QuanputerError, ArithmeticError, np.linalg.LinAlgError) as err:
        print(f"numeric failure [{type(err).__name__}]: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    elapsed = time.perf_counter() - start

    files = dict(result.outputs)
    files["summary.json"] = summary_json(result.summary) + "\n"
    manifest = {
        "kind": kind,
        "scenario": scenario,
        "seed": seed,
        "config": raw,
        "versions": {
            "quanputer": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "wall_time_s": elapsed,
        "checks": {name: ok for name, ok in result.checks},
        "outputs": sorted(files),
    }
    files["manifest.json"] = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    _write_outputs(out_dir, files)

    for name, ok in result.checks:
        print(f"{name}: {'PASS' if ok else 'FAIL'}", file=stream)
    for key, value in sorted(result.summary.items()):
        print(f"{key} = {value}", file=stream)
    print(f"outputs written to {out_dir}", file=stream)
    return EXIT_OK if result.passed else EXIT_ORDER


def _add_common(p):
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="SECTION.KEY=VALUE", help="override a config value")
    p.add_argument("--out", dest="out_dir", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness")


def build_parser():
    parser = argparse.ArgumentParser(prog="quanputer", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=f"run a {kind} scenario")
        p.add_argument("--config", default=None, help="sectioned key=value config file")
        _add_common(p)
    p = sub.add_parser("run", help="run a built-in named scenario")
    p.add_argument("name")
    _add_common(p)
    sub.add_parser("list", help="list built-in scenarios")
    p = sub.add_parser("verify", help="commutator and kernel identity checks")
    p.add_argument("what", choices=["bch", "kernel"])
    p.add_argument("--eps-points", type=int, default=None, help="points in the eps sweep")
    _add_common(p)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "list":
        print(list_scenarios())
        return EXIT_OK
    if args.command == "run":
        if args.name not in REGISTRY:
            print(f"config error: unknown scenario {args.name!r}", file=sys.stderr)
            return EXIT_CONFIG
        scen = REGISTRY[args.name]
        return execute(scen.kind, None, args.overrides, args.out_dir, args.seed, scenario=args.name)
    if args.command == "verify":
        kind = "verify-bch" if args.what == "bch" else "verify-kernel"
        overrides = list(args.overrides)
        if args.eps_points is not None:
            if kind != "verify-bch":
                print("config error: --eps-points applies to 'verify bch' only", file=sys.stderr)
                return EXIT_CONFIG
            overrides.append(f"sweep.eps_points={args.eps_points}")
        return execute(kind, None, overrides, args.out_dir, args.seed)

    text = None
    if args.config is not None:
        try:
            with open(args.config, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as err:
            print(f"config error: cannot read {args.config}: {err}", file=sys.stderr)
            return EXIT_CONFIG
    return execute(args.command, text, args.overrides, args.out_dir, args.seed)


if __name__ == "__main__":
    sys.exit(main())
