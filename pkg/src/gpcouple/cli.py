"""Command-line front end: ``run``, ``compare`` and ``list-experiments``.

Every run writes into ``<output_dir>/<name>``:

* ``report.json``, the experiment report (no timing fields, so identical
  configurations and seeds give identical files);
* CSV data files;
* ``config.resolved.json`` and ``config.resolved.ini``, the configuration
  with all defaults expanded;
* ``manifest.json``, with versions, seed, wall time and the file list.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 a
check failed with ``enforce_checks`` set (or ``compare`` found differences
beyond tolerance). Errors are printed to stderr as one JSON object. The
environment variable ``GPCOUPLE_OUTPUT_DIR`` overrides ``output_dir``.
"""
import argparse
import datetime
import json
import math
import os
import platform
import sys
import time

import numpy as np

from . import __version__
from .config import KINDS, ConfigError, load, serialize
from .errors import ConfigurationError, GpCoupleError

OUTPUT_ENV = "GPCOUPLE_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK = 0, 2, 3, 4
IGNORED_FIELDS = ("timestamp", "wall_time_s")


# -- 17-digit JSON -------------------------------------------------------------

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(k)}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return "null"
        text = f"{obj:.17g}"
        return text if any(c in text for c in ".en") else text + ".0"
    return json.dumps(obj)


def dumps(obj, indent=2):
    """JSON text with every float printed to 17 significant digits."""
    return _encode(_plain(obj), indent, 0) + "\n"


def write_json(obj, path):
    with open(path, "w") as fh:
        fh.write(dumps(obj))


# -- runs ------------------------------------------------------------------------

def output_directory(cfg):
    base = os.environ.get(OUTPUT_ENV) or cfg.sections["experiment"]["output_dir"]
    return os.path.join(base, cfg.name)


def _versions():
    import scipy
    return {"gpcouple": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def execute(cfg, outdir, jobs=None):
    """Run the experiment of ``cfg`` into ``outdir``; returns the report dict."""
    from .experiments import RUNNERS
    os.makedirs(outdir, exist_ok=True)
    jobs = cfg.sections["experiment"]["jobs"] if jobs is None else int(jobs)
    t0 = time.perf_counter()
    report, files = RUNNERS[cfg.kind](cfg, outdir, jobs)
    wall = time.perf_counter() - t0
    report = {"kind": cfg.kind, "name": cfg.name, "master_seed": cfg.master_seed, **report}
    write_json(report, os.path.join(outdir, "report.json"))
    cfg.to_json(os.path.join(outdir, "config.resolved.json"))
    with open(os.path.join(outdir, "config.resolved.ini"), "w") as fh:
        fh.write(serialize(cfg))
    manifest = {"kind": cfg.kind, "name": cfg.name, "master_seed": cfg.master_seed, "jobs": jobs,
                "versions": _versions(), "wall_time_s": wall,
                "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
                "files": sorted(["report.json", "config.resolved.json", "config.resolved.ini", *files])}
    write_json(manifest, os.path.join(outdir, "manifest.json"))
    return report


def failed_checks(report):
    return sorted(k for k, v in report.get("checks", {}).items() if not v.get("pass", False))


def _error(exc, code):
    payload = exc.to_dict() if isinstance(exc, ConfigError) else {
        "error": type(exc).__name__, "message": str(exc)}
    payload["exit_code"] = code
    sys.stderr.write(json.dumps(payload) + "\n")
    return code


def cmd_run(args):
    try:
        cfg = load(args.config)
        if args.seed is not None:
            cfg.sections["experiment"]["master_seed"] = int(args.seed)
        if args.jobs is not None and args.jobs < 1:
            raise ConfigError("--jobs must be >= 1", "experiment.jobs")
    except ConfigurationError as exc:
        return _error(exc, EXIT_CONFIG)
    if args.dry_run:
        print(json.dumps({"kind": cfg.kind, "name": cfg.name, "valid": True}))
        return EXIT_OK
    outdir = output_directory(cfg)
    try:
        report = execute(cfg, outdir, args.jobs)
    except ConfigurationError as exc:
        return _error(exc, EXIT_CONFIG)
    except (GpCoupleError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return _error(exc, EXIT_NUMERICAL)
    bad = failed_checks(report)
    print(json.dumps({"kind": cfg.kind, "output": outdir, "failed_checks": bad}))
    if bad and cfg.sections["experiment"]["enforce_checks"]:
        return EXIT_CHECK
    return EXIT_OK


# -- compare ---------------------------------------------------------------------

def compare_reports(a, b, abs_tol=0.0, rel_tol=0.0):
    """Field-wise numeric differences between two reports of the same kind.

    Returns a dict with ``max_abs``, the list of differing fields beyond the
    tolerance and structural mismatches.

    Raises
    ------
    ConfigurationError
        The reports have different kinds.
    """
    if a.get("kind") != b.get("kind"):
        raise ConfigurationError(f"cannot compare a {a.get('kind')!r} report with a {b.get('kind')!r} report")
    diffs, structural = [], []
    worst = 0.0

    def walk(x, y, path):
        nonlocal worst
        if isinstance(x, dict) and isinstance(y, dict):
            for k in sorted(set(x) | set(y)):
                if k in IGNORED_FIELDS:
                    continue
                if k not in x or k not in y:
                    structural.append(f"{path}.{k}")
                else:
                    walk(x[k], y[k], f"{path}.{k}")
        elif isinstance(x, list) and isinstance(y, list):
            if len(x) != len(y):
                structural.append(path)
                return
            for i, (u, v) in enumerate(zip(x, y)):
                walk(u, v, f"{path}[{i}]")
        elif isinstance(x, (int, float)) and isinstance(y, (int, float)) \
                and not isinstance(x, bool) and not isinstance(y, bool):
            d = abs(float(x) - float(y))
            worst = max(worst, d)
            if d > abs_tol + rel_tol * max(abs(float(x)), abs(float(y))):
                diffs.append({"field": path, "a": x, "b": y, "abs_diff": d})
        elif x != y:
            structural.append(path)

    walk(a, b, "")
    return {"kind": a.get("kind"), "max_abs": worst, "differences": diffs, "mismatches": structural,
            "equal": not diffs and not structural}


def cmd_compare(args):
    try:
        with open(args.report_a) as fa, open(args.report_b) as fb:
            a, b = json.load(fa), json.load(fb)
        res = compare_reports(a, b, args.abs_tol, args.rel_tol)
    except (OSError, ValueError) as exc:
        return _error(exc if isinstance(exc, ConfigurationError) else ConfigurationError(str(exc)), EXIT_CONFIG)
    sys.stdout.write(dumps(res))
    return EXIT_OK if res["equal"] else EXIT_CHECK


def cmd_list(args):
    for kind, text in KINDS.items():
        print(f"{kind:10s} {text}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="gpcouple", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config")
    r.add_argument("--seed", type=int, help="override experiment.master_seed")
    r.add_argument("--jobs", type=int, help="worker processes for replications and Sobol rows")
    r.add_argument("--dry-run", action="store_true", help="validate the config and write nothing")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("compare", help="field-wise numeric diff of two reports")
    c.add_argument("report_a")
    c.add_argument("report_b")
    c.add_argument("--abs-tol", type=float, default=0.0)
    c.add_argument("--rel-tol", type=float, default=0.0)
    c.set_defaults(func=cmd_compare)
    sub.add_parser("list-experiments", help="list experiment kinds").set_defaults(func=cmd_list)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
