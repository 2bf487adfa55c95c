"""Command-line entry point: acouz run | validate | emit-plot."""

from __future__ import annotations

import argparse
import json
import os
import sys

from .harness import (
    ConfigError, ExperimentConfig, RunManifest, apply_overrides,
    emit_plotdata, run, validate_config,
)


def _load_config(args):
    with open(args.config) as f:
        raw = json.load(f)
    if args.override:
        raw = apply_overrides(raw, args.override)
    cfg = ExperimentConfig.from_dict(raw)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.out_dir = args.out
    if args.workers is not None:
        cfg.workers = args.workers
    elif os.environ.get("ACOUZ_WORKERS"):
        cfg.workers = int(os.environ["ACOUZ_WORKERS"])
    return cfg


def main(argv=None):
    parser = argparse.ArgumentParser(prog="acouz",
                                     description="boundary-spectrum / impedance "
                                                 "/ acoustic experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE", help="dotted-path config override")

    p_val = sub.add_parser("validate", help="validate a config, list all errors")
    p_val.add_argument("config")
    p_val.add_argument("--out", default=None)
    p_val.add_argument("--workers", type=int, default=None)
    p_val.add_argument("--seed", type=int, default=None)
    p_val.add_argument("--override", action="append", default=[])

    p_plot = sub.add_parser("emit-plot", help="emit long-format plot data")
    p_plot.add_argument("manifest")
    p_plot.add_argument("artifact")
    p_plot.add_argument("--out", default=None)

    args = parser.parse_args(argv)

    if args.command == "emit-plot":
        manifest = RunManifest.load(args.manifest)
        try:
            path = emit_plotdata(manifest, args.artifact, out_path=args.out)
        except ConfigError as err:
            print("error:", err, file=sys.stderr)
            return 1
        print(path)
        return 0

    try:
        cfg = _load_config(args)
    except ConfigError as err:
        for e in err.errors:
            print("config error:", e, file=sys.stderr)
        return 1

    errors = validate_config(cfg)
    if args.command == "validate":
        for e in errors:
            print("config error:", e, file=sys.stderr)
        if not errors:
            print("ok")
        return 1 if errors else 0

    if errors:
        for e in errors:
            print("config error:", e, file=sys.stderr)
        return 1
    manifest = run(cfg, out_dir=args.out)
    for a in manifest.assertions:
        status = "pass" if a["passed"] else "FAIL"
        print(f"[{status}] {a['name']}: {a['detail']}")
    print("manifest:", os.path.join(
        args.out or os.path.join(cfg.out_dir,
                                 f"{cfg.experiment}_{cfg.content_hash()[:10]}"),
        "manifest.json"))
    return 0 if manifest.passed else 2


if __name__ == "__main__":
    sys.exit(main())
