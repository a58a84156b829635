"""Experiment configuration: typed INI files with defaults and round-trip.

A configuration is a flat ``key = value`` file with section headers::

    [experiment]
    kind = benchmark
    master_seed = 1

    [benchmark]
    doe_sizes = 20, 200
    N = 500

Every key has a type and a default, so the resolved configuration (all
defaults expanded) is always complete. ``parse(serialize(c)) == c``.
"""
import configparser
import json
import math
from dataclasses import dataclass, field

from .errors import ConfigurationError

KINDS = {
    "benchmark": "analytical two-code benchmark: exact solve, contraction, Method 2 and 3 per DOE size",
    "uq": "one Monte Carlo ensemble (Method 2 or 3) on the benchmark",
    "cycle-uq": "Method-3 cycle UQ on the synthetic fuel-assembly analog",
    "sobol": "Sobol first-order and total indices (additive, Ishigami or analog model)",
    "bounds": "deviation radius coverage and bound constants on the benchmark",
    "slopes": "posterior variance decay against fill distance",
    "velocity": "Monte Carlo spread of the parabolic boundary velocity profiles",
    "modal": "modal projection noise and deformation variance field",
}


class ConfigError(ConfigurationError):
    """Invalid configuration; ``field`` names the offending ``section.key``."""

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line

    def to_dict(self):
        return {"error": "ConfigError", "message": str(self), "field": self.field, "line": self.line}


# -- typed values ----------------------------------------------------------------

def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _split(text):
    return [t.strip() for t in text.split(",") if t.strip()]


PARSERS = {
    "int": lambda t: int(t.strip()),
    "float": lambda t: float(t.strip()),
    "str": lambda t: t.strip(),
    "bool": _bool,
    "ints": lambda t: [int(v) for v in _split(t)],
    "floats": lambda t: [float(v) for v in _split(t)],
    "strs": _split,
}


def _fmt_float(x):
    return repr(float(x)) if math.isfinite(x) else str(x)


def format_value(kind, value):
    if kind == "bool":
        return "true" if value else "false"
    if kind == "float":
        return _fmt_float(value)
    if kind == "floats":
        return ", ".join(_fmt_float(v) for v in value)
    if kind in ("ints", "strs"):
        return ", ".join(str(v) for v in value)
    return str(value)


REQUIRED = object()

# section -> key -> (type, default)
COMMON = {
    "experiment": {
        "kind": ("str", REQUIRED),
        "name": ("str", ""),
        "master_seed": ("int", 1),
        "output_dir": ("str", "runs"),
        "jobs": ("int", 1),
        "enforce_checks": ("bool", False),
    },
}

BENCH_GP = {
    "doe_seed": ("int", 12),
    "lengthscale": ("float", 0.25),
    "nugget": ("float", 1e-12),
    "prior_variance": ("float", 1.0),
    "tol": ("float", 1e-8),
    "u0": ("float", 0.5),
}

ANALOG = {
    "assemblies": ("int", 15),
    "grids": ("int", 10),
    "steps": ("int", 5),
    "n_train": ("int", 500),
    "doe_seed": ("int", 0),
    "tol": ("float", 1e-8),
    "sigma_C": ("float", 1.0),
    "sigma_S": ("float", 0.5),
    "sigma_W": ("float", 0.3),
    "clamp_mu": ("float", 1.0),
    "clamp_sigma": ("float", 0.1),
    "F_max": ("float", 0.5),
    "alpha": ("float", 5.0),
    "gamma": ("float", 0.15),
    "kappa": ("floats", [0.35, 0.25, 0.15]),
    "growth_gain": ("floats", [0.05, -0.03, 0.02]),
}

SCHEMA = {
    "benchmark": {
        "benchmark": dict(BENCH_GP, **{
            "doe_sizes": ("ints", [20, 200]),
            "methods": ("strs", ["M3", "M2"]),
            "N": ("int", 500),
            "contraction_grid": ("int", 1001),
            "max_excluded": ("float", 0.01),
        }),
    },
    "uq": {
        "uq": dict(BENCH_GP, **{
            "method": ("str", "M3"),
            "doe_size": ("int", 20),
            "N": ("int", 500),
            "zero_offsets": ("bool", False),
            "max_excluded": ("float", 0.01),
        }),
    },
    "cycle-uq": {
        "analog": ANALOG,
        "cycle": {"N": ("int", 200), "probe_states": ("int", 6)},
    },
    "sobol": {
        "sobol": {
            "model": ("str", "analog"),
            "n_s": ("int", 1000),
            "bootstrap": ("int", 0),
            "analog_steps": ("int", 1),
        },
        "analog": ANALOG,
    },
    "bounds": {
        "bounds": dict(BENCH_GP, **{
            "doe_size": ("int", 20),
            "N": ("int", 500),
            "radius_scale": ("float", 1.0),
            "slack": ("float", 1e-8),
            "beta": ("float", 0.05),
            "probes": ("int", 5),
            "contraction_grid": ("int", 1001),
        }),
    },
    "slopes": {
        "slopes": {
            "family": ("str", "Matern52"),
            "lengthscale": ("float", 0.25),
            "sizes": ("ints", [10, 20, 40, 80]),
            "probe_resolution": ("int", 2000),
            "nugget": ("float", 1e-12),
        },
    },
    "velocity": {
        "velocity": {"N": ("int", 10000), "nodes": ("int", 101)},
    },
    "modal": {
        "modal": {
            "n_levels": ("int", 10),
            "sigma": ("float", 0.3),
            "n_draws": ("int", 100000),
            "nodes": ("int", 101),
            "coefficients": ("floats", [1.0, 0.5, 0.3]),
        },
    },
}

CHOICES = {
    ("benchmark", "methods"): ("M2", "M3"),
    ("uq", "method"): ("M2", "M3"),
    ("sobol", "model"): ("additive", "ishigami", "analog"),
    ("slopes", "family"): ("Matern52", "Matern32", "SquaredExponential"),
}


def schema_for(kind):
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}; expected one of {sorted(KINDS)}", "experiment.kind")
    return dict(COMMON, **SCHEMA[kind])


@dataclass
class ExperimentConfig:
    """Fully resolved experiment configuration.

    ``sections`` maps section name to ``{key: typed value}``.
    """

    sections: dict = field(default_factory=dict)

    @property
    def kind(self):
        return self.sections["experiment"]["kind"]

    @property
    def master_seed(self):
        return self.sections["experiment"]["master_seed"]

    @property
    def name(self):
        return self.sections["experiment"]["name"] or self.kind

    def section(self, name):
        return self.sections[name]

    def to_dict(self):
        return {s: dict(v) for s, v in self.sections.items()}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _line_of(text, section, key):
    current = None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
        elif current == section and "=" in line and line.split("=", 1)[0].strip() == key:
            return i
    return None


def _validate(sections):
    exp = sections["experiment"]
    if exp["jobs"] < 1:
        raise ConfigError("jobs must be >= 1", "experiment.jobs")
    for (sec, key), allowed in CHOICES.items():
        if sec in sections and key in sections[sec]:
            vals = sections[sec][key]
            for v in vals if isinstance(vals, list) else [vals]:
                if v not in allowed:
                    raise ConfigError(f"{sec}.{key} must be one of {list(allowed)}, got {v!r}", f"{sec}.{key}")
    for sec, keys in sections.items():
        for key, val in keys.items():
            if key in ("N", "n_s", "n_train", "n_draws", "nodes", "doe_size") and val < 1:
                raise ConfigError(f"{sec}.{key} must be positive, got {val}", f"{sec}.{key}")


def from_dict(d, text=""):
    """Resolve a ``{section: {key: str-or-value}}`` mapping against the schema."""
    if "experiment" not in d or "kind" not in d["experiment"]:
        raise ConfigError("missing required field experiment.kind", "experiment.kind")
    kind = str(d["experiment"]["kind"]).strip()
    schema = schema_for(kind)
    for sec in d:
        if sec not in schema:
            raise ConfigError(f"unknown section [{sec}] for kind {kind!r}", sec, _line_of(text, sec, ""))
    resolved = {}
    for sec, keys in schema.items():
        given = dict(d.get(sec, {}))
        out = {}
        for key, (typ, default) in keys.items():
            name = f"{sec}.{key}"
            if key in given:
                raw = given.pop(key)
                try:
                    out[key] = PARSERS[typ](raw) if isinstance(raw, str) else _coerce(typ, raw)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"{name}: expected {typ}, got {raw!r} ({exc})", name,
                                      _line_of(text, sec, key)) from None
            elif default is REQUIRED:
                raise ConfigError(f"missing required field {name}", name)
            else:
                out[key] = list(default) if isinstance(default, list) else default
        if given:
            bad = sorted(given)[0]
            raise ConfigError(f"unknown field {sec}.{bad}", f"{sec}.{bad}", _line_of(text, sec, bad))
        resolved[sec] = out
    _validate(resolved)
    return ExperimentConfig(resolved)


def _coerce(typ, value):
    if typ == "int":
        if isinstance(value, bool) or int(value) != value:
            raise ValueError("not an integer")
        return int(value)
    if typ == "float":
        return float(value)
    if typ == "bool":
        if not isinstance(value, bool):
            raise ValueError("not a boolean")
        return value
    if typ == "str":
        return str(value)
    if typ in ("ints", "floats", "strs"):
        return [_coerce(typ[:-1], v) for v in value]
    raise ValueError(f"unknown type {typ}")


def parse(text):
    """Parse INI text into a resolved :class:`ExperimentConfig`.

    Raises
    ------
    ConfigError
        Syntax errors (with line number), unknown or missing fields, bad values.
    """
    cp = configparser.ConfigParser(interpolation=None, strict=True)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"syntax error: {exc}", None, getattr(exc, "lineno", None)) from None
    return from_dict({s: dict(cp[s]) for s in cp.sections()}, text)


def load(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse(text)


def serialize(cfg):
    """INI text of a resolved configuration, all keys written out."""
    schema = schema_for(cfg.kind)
    lines = []
    for sec, keys in schema.items():
        lines.append(f"[{sec}]")
        for key, (typ, _) in keys.items():
            lines.append(f"{key} = {format_value(typ, cfg.sections[sec][key])}")
        lines.append("")
    return "\n".join(lines)


def default_config(kind, **overrides):
    """Resolved defaults of ``kind``; ``overrides`` is ``{section: {key: value}}``."""
    d = {"experiment": {"kind": kind}}
    for sec, keys in overrides.items():
        d.setdefault(sec, {}).update(keys)
    return from_dict(d)
