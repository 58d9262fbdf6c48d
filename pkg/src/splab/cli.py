"""Command line entry point ``splab``.

    splab <experiment> --config FILE [--out DIR] [--seed N] [--exact|--float]
          [--lmax L] [--tmax T] [--cache-dir DIR] [--plot] [--golden DIR]
    splab compare MANIFEST GOLDEN_DIR [--tol X]

Exit codes: 0 success, 2 invariant violation or golden mismatch, 3 config
error, 4 resource error.
"""

from __future__ import annotations

import argparse
import sys

from splab.config import EXPERIMENTS, load_config
from splab.errors import ConfigError, ResourceError, SplabError
from splab.experiments import EXIT_CONFIG, EXIT_OK, EXIT_RESOURCE, EXIT_VIOLATION, run_experiment
from splab.golden import DEFAULT_TOLERANCE, compare_golden


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splab", description="Sequence prediction laboratory.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="configuration file")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="random seed (overrides the config)")
        mode = p.add_mutually_exclusive_group()
        mode.add_argument("--exact", dest="mode", action="store_const", const="exact")
        mode.add_argument("--float", dest="mode", action="store_const", const="float")
        p.add_argument("--lmax", type=int, help="enumeration program length in opcodes")
        p.add_argument("--tmax", type=int, help="enumeration step budget")
        p.add_argument("--cache-dir", help="enumeration cache directory (default $SPLAB_CACHE)")
        p.add_argument("--plot", action="store_true", help="render PNG figures from the CSVs")
        p.add_argument("--golden", help="compare the CSVs with this golden directory")
    c = sub.add_parser("compare", help="compare a run with golden files")
    c.add_argument("manifest", help="path to manifest.json")
    c.add_argument("golden", help="golden directory")
    c.add_argument("--tol", type=float, default=DEFAULT_TOLERANCE, help="float-mode tolerance")
    return parser


def _report_diff(report) -> int:
    if report.ok:
        print(f"golden: {len(report.compared)} file(s) match")
        return EXIT_OK
    print(f"golden mismatch: {report.first}", file=sys.stderr)
    return EXIT_VIOLATION


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "compare":
        try:
            report = compare_golden(args.manifest, args.golden, default_tol=args.tol)
        except (SplabError, OSError, ValueError, KeyError) as exc:
            print(f"input error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return _report_diff(report)
    try:
        overrides = {"mode": args.mode, "seed": args.seed, "out": args.out}
        cfg = load_config(args.config, overrides)
        if cfg.name != args.command:
            raise ConfigError(f"config describes experiment {cfg.name!r}, not {args.command!r}")
        if args.lmax is not None:
            if cfg.name != "universal":
                raise ConfigError("--lmax applies to the universal experiment only")
            cfg.params["lmax"] = args.lmax
        if args.tmax is not None:
            if cfg.name != "universal":
                raise ConfigError("--tmax applies to the universal experiment only")
            cfg.params["tmax"] = args.tmax
        manifest = run_experiment(cfg, cache_dir=args.cache_dir, plot=args.plot)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except SplabError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for check in manifest.checks:
        status = "ok  " if check.ok else "FAIL"
        line = f"[{status}] {check.name}"
        if not check.ok and check.detail:
            line += f": {check.detail}"
        print(line)
    print(f"wrote {len(manifest.files)} file(s) to {manifest.out_dir}")
    code = EXIT_OK if manifest.ok else EXIT_VIOLATION
    if args.golden:
        diff_code = _report_diff(compare_golden(manifest, args.golden))
        code = code or diff_code
    return code


if __name__ == "__main__":
    sys.exit(main())
