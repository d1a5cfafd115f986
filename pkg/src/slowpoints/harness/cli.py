"""Command-line entry point.

Usage::

    slowpoints [--seed N] [--threads N] [--out DIR] <experiment> [--key value ...]
    slowpoints run <experiment | config.yaml> [--key value ...]
    slowpoints report [DIR]

Every parameter of an experiment can be given as ``--name value`` (values
are parsed as YAML, so lists and mappings work) or as ``--set name=value``.
Exit status: 0 success, 2 invalid input, 3 numerical failure.
"""

import argparse
import logging
import os
import sys
from pathlib import Path

import yaml

from ..errors import DomainError, InsufficientDataError, NumericalError
from . import io
from .config import DEFAULTS, EXPERIMENTS, ConfigError, build_config, load_config, parse_value
from .pipelines import RUNNERS
from .report import build_report

OUT_ENV = "SLOWPOINTS_OUT"
DEFAULT_OUT = "slowpoints-out"

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3

log = logging.getLogger("slowpoints")


def _globals():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (64-bit)")
    g.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads")
    g.add_argument("--out", default=argparse.SUPPRESS,
                   help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    g.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    return p


def _add_experiment(sub, name, common):
    sp = sub.add_parser(name, parents=[common], help=f"run the {name} experiment")
    sp.add_argument("--config", default=argparse.SUPPRESS, help="YAML config file")
    sp.add_argument("--set", action="append", default=argparse.SUPPRESS, metavar="KEY=VALUE",
                    help="override a (dotted) parameter")
    for key in DEFAULTS[name]:
        sp.add_argument("--" + key.replace("_", "-"), dest=f"p_{key}", type=parse_value,
                        default=argparse.SUPPRESS, metavar="VALUE")
    sp.set_defaults(experiment=name)
    return sp


def build_parser():
    common = _globals()
    parser = argparse.ArgumentParser(prog="slowpoints", parents=[common],
                                     description="Slow points of the stochastic heat equation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        if name != "report":
            _add_experiment(sub, name, common)
    rp = sub.add_parser("report", parents=[common], help="assemble a markdown report")
    rp.add_argument("dir", nargs="?", default=None)
    run = sub.add_parser("run", parents=[common], help="run an experiment by name or config")
    run.add_argument("target", help="experiment name or path to a YAML config")
    run.add_argument("rest", nargs=argparse.REMAINDER)
    return parser


def _overrides(ns):
    out = {}
    for k, v in vars(ns).items():
        if k.startswith("p_"):
            out[k[2:]] = v
    for item in getattr(ns, "set", []) or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"expected KEY=VALUE, got {item!r}", param="--set")
        out[key.strip()] = parse_value(val)
    return out


def _out_dir(ns):
    return Path(getattr(ns, "out", None) or os.environ.get(OUT_ENV) or DEFAULT_OUT)


def _run_experiment(ns):
    seed = getattr(ns, "seed", None)
    threads = getattr(ns, "threads", None)
    overrides = _overrides(ns)
    if getattr(ns, "config", None):
        cfg = load_config(ns.config, overrides, seed, threads, ns.experiment)
    else:
        cfg = build_config(ns.experiment, None, overrides, seed, threads)
    out = _out_dir(ns)
    out.mkdir(parents=True, exist_ok=True)
    manifest = io.new_manifest(cfg)
    text = RUNNERS[cfg.experiment](cfg, out, manifest)
    manifest.finished = io.now()
    manifest.write(out)
    if text:
        print(text)
    return EXIT_OK


def _run_report(ns):
    d = Path(ns.dir) if ns.dir else _out_dir(ns)
    text = build_report(d)
    (d / "report.md").write_text(text)
    print(text, end="")
    return EXIT_OK


def _dispatch(parser, ns):
    if ns.command == "report":
        return _run_report(ns)
    if ns.command == "run":
        target, rest = ns.target, list(ns.rest)
        carry = []
        for k in ("seed", "threads", "out"):
            if hasattr(ns, k):
                carry += [f"--{k}", str(getattr(ns, k))]
        if target == "report":
            return _dispatch(parser, parser.parse_args(["report", *rest, *carry]))
        if target in EXPERIMENTS:
            return _dispatch(parser, parser.parse_args([target, *rest, *carry]))
        path = Path(target)
        if not path.is_file():
            raise ConfigError(f"{target!r} is neither an experiment nor a config file",
                              param="target")
        doc = yaml.safe_load(path.read_text()) or {}
        exp = doc.get("experiment") if isinstance(doc, dict) else None
        if exp not in EXPERIMENTS or exp == "report":
            raise ConfigError(f"config names no runnable experiment ({exp!r})",
                              param="experiment")
        return _dispatch(parser, parser.parse_args([exp, "--config", str(path), *rest, *carry]))
    return _run_experiment(ns)


def main(argv=None):
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if getattr(ns, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _dispatch(parser, ns)
    except NumericalError as exc:
        print(f"numerical failure: {exc} {exc.diagnostics}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DomainError, InsufficientDataError, FileNotFoundError, yaml.YAMLError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
