"""Command line: ``sle-lab run|validate|report|accept``.

Exit codes: 0 success, 1 acceptance criterion failed, 2 configuration
error, 3 batch failure (more than 1% failed trials in a batch).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import ConfigError, validate_config

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BATCH = 0, 1, 2, 3

log = logging.getLogger("sle_lab")


def _read(path):
    with open(path) as fh:
        return fh.read()


def _load(path, overrides=()):
    extra = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError([f"--set {item}: expected key=value"])
        k, v = item.split("=", 1)
        extra[k.strip()] = v.strip()
    return validate_config(_read(path), extra)


def cmd_validate(args) -> int:
    try:
        cfg = _load(args.config, args.set)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(cfg.to_text(), end="")
    for w in cfg.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_run(args) -> int:
    from .experiments import BatchFailure, run_experiment

    try:
        cfg = _load(args.config, args.set)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for w in cfg.warnings:
        log.warning(w)
    try:
        bundle = run_experiment(cfg)
    except BatchFailure as exc:
        print(f"batch failure: {exc}", file=sys.stderr)
        return EXIT_BATCH
    except ValueError as exc:  # e.g. a bad SLE_LAB_WORKERS value
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    fit = bundle.fit
    print(json.dumps({k: fit[k] for k in ("slope", "stderr", "r2", "mode", "n_scales")}
                     | {"derived": fit["derived"]}, sort_keys=True))
    return EXIT_OK


def cmd_report(args) -> int:
    from .experiments import report_bundle

    try:
        fit = report_bundle(args.bundle)
    except (OSError, KeyError, ConfigError) as exc:
        print(f"error: cannot read bundle: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{fit['kind']}: slope {fit['slope']:.4f} ± {fit['stderr']:.4f} "
          f"(r2 {fit['r2']:.4f}, {fit['n_scales']} scales, {fit['mode']})")
    for k, v in sorted(fit["derived"].items()):
        print(f"  {k}: {v}")
    return EXIT_OK


def cmd_accept(args) -> int:
    from .acceptance import CRITERIA, run_criterion

    ids = sorted(CRITERIA) if args.criterion == "all" else [int(args.criterion)]
    ok = True
    for i in ids:
        if i not in CRITERIA:
            print(f"error: no criterion {i}", file=sys.stderr)
            return EXIT_CONFIG
        res = run_criterion(i, quick=args.quick)
        print(res.line())
        for c in res.checks:
            print(f"    {'ok  ' if c.passed else 'FAIL'} {c.name}: {c.detail}")
        ok &= res.passed
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sle-lab", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, helptext in (("run", cmd_run, "run an experiment and write its bundle"),
                               ("validate", cmd_validate, "check a config and print it")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("config")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config field")
        s.set_defaults(func=fn)
    s = sub.add_parser("report", help="re-fit and re-plot an existing bundle")
    s.add_argument("bundle")
    s.set_defaults(func=cmd_report)
    s = sub.add_parser("accept", help="run an acceptance criterion (1-12 or 'all')")
    s.add_argument("criterion")
    s.add_argument("--quick", action="store_true", help="reduced trial counts (smoke test)")
    s.set_defaults(func=cmd_accept)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
