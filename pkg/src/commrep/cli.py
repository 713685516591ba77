"""Command-line entry point.

Verbs: run, scan, report-filters, verify, generate-data. Exit codes: 0 on
success, 2 for configuration problems, 3 for training divergence, 1 for
failed verification or unexpected errors. Heavy imports happen after
argument parsing so --threads can cap BLAS pools before numpy loads.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

OUT_DIR_ENV = "COMMREP_OUT_DIR"
_SUITE_FILES = {
    "classical-single": "classical_single.json",
    "classical-dual": "classical_dual.json",
    "quantum": "quantum.json",
    "rl": "rl.json",
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="commrep",
        description="Communication-minimal representation learning experiments")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap BLAS thread pools (set before numpy loads)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a full experiment")
    p_run.add_argument("config", help="config file path or a built-in suite name")
    p_run.add_argument("--seed", type=int, default=None, help="override master seed")
    p_run.add_argument("--out-dir", default=None)
    p_run.add_argument("--steps", type=int, default=None,
                       help="override the training step count")

    p_scan = sub.add_parser("scan", help="latent scan over hidden parameters")
    p_scan.add_argument("checkpoint")
    p_scan.add_argument("scan_spec", help="JSON file with sweep/fixed parameters")
    p_scan.add_argument("--out-dir", default=None)

    p_rf = sub.add_parser("report-filters", help="transmittance history and sets")
    p_rf.add_argument("source", help="run directory or model checkpoint")
    p_rf.add_argument("--out-dir", default=None)

    p_ver = sub.add_parser("verify", help="run training-free oracle checks")
    p_ver.add_argument("suite", choices=["classical", "quantum", "rl"])
    p_ver.add_argument("--out-dir", default=None)

    p_gen = sub.add_parser("generate-data", help="write a dataset without training")
    p_gen.add_argument("config")
    p_gen.add_argument("--seed", type=int, default=None)
    p_gen.add_argument("--out-dir", default=None)
    return parser


def _default_out_dir(args, leaf):
    if args.out_dir:
        return args.out_dir
    root = os.environ.get(OUT_DIR_ENV, "runs")
    return os.path.join(root, leaf)


def _load_config(path_or_suite, seed_override):
    from importlib import resources

    from .config import load_config, parse_config

    if os.path.exists(path_or_suite):
        config = load_config(path_or_suite)
    elif path_or_suite in _SUITE_FILES:
        text = resources.files("commrep.configs").joinpath(
            _SUITE_FILES[path_or_suite]).read_text()
        config = parse_config(text, source=f"<builtin:{path_or_suite}>")
    else:
        from .errors import ConfigurationError
        raise ConfigurationError(
            f"config {path_or_suite!r} is neither a file nor one of "
            f"{sorted(_SUITE_FILES)}")
    if seed_override is not None:
        config.seed = seed_override
    return config


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)

    from .errors import ConfigurationError, TrainingError

    try:
        return _dispatch(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 3


def _dispatch(args):
    from . import runner

    if args.command == "run":
        config = _load_config(args.config, args.seed)
        out_dir = _default_out_dir(args, f"{config.suite}-seed{config.seed}")
        artifacts = runner.run(config, out_dir, steps_override=args.steps)
        print(f"run complete: {out_dir}")
        for name, path in sorted(artifacts.files.items()):
            print(f"  {name}: {path}")
        return 0

    if args.command == "scan":
        from .errors import ConfigurationError

        if not os.path.exists(args.scan_spec):
            raise ConfigurationError(f"scan spec {args.scan_spec!r} not found")
        with open(args.scan_spec) as fh:
            try:
                spec = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(
                    f"{args.scan_spec}:{exc.lineno}: invalid JSON: {exc.msg}")
        out_dir = _default_out_dir(args, "scans")
        os.makedirs(out_dir, exist_ok=True)
        out_path = os.path.join(out_dir, "scan.csv")
        runner.scan(args.checkpoint, spec, out_path)
        print(out_path)
        return 0

    if args.command == "report-filters":
        out_dir = _default_out_dir(args, "filter-report")
        summary, files = runner.report_filters(args.source, out_dir)
        print(json.dumps({"transmitted_sets": summary["transmitted_sets"],
                          "set_sizes": summary["set_sizes"]}, indent=2))
        for name, path in sorted(files.items()):
            print(f"  {name}: {path}")
        return 0

    if args.command == "verify":
        report = runner.verify(args.suite)
        for check in report["checks"]:
            status = "PASS" if check["passed"] else "FAIL"
            print(f"[{status}] {check['name']}")
        if args.out_dir:
            os.makedirs(args.out_dir, exist_ok=True)
            runner.write_json(os.path.join(args.out_dir, f"verify_{args.suite}.json"),
                              report)
        return 0 if report["passed"] else 1

    if args.command == "generate-data":
        config = _load_config(args.config, args.seed)
        out_dir = _default_out_dir(args, f"data-{config.suite}-seed{config.seed}")
        path = runner.generate_data(config, out_dir)
        print(path)
        return 0

    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
