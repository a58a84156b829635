"""Saltelli sampling plans and Sobol sensitivity indices.

A factor is a named input, scalar or vector valued. Vector factors are swapped
as one block, so ``n_x`` counts named inputs, not scalar components. A plan
holds ``n_s (n_x + 2)`` parameter rows ordered ``A, B, AB_1, ..., AB_nx``.

First-order indices use ``mean(f(B) (f(AB_i) - f(A))) / V`` and total indices
Jansen's ``mean((f(A) - f(AB_i))^2) / (2 V)``, with ``V`` the variance of the
pooled ``A`` and ``B`` outputs.
"""
import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .errors import ConfigurationError, InsufficientDataError


@dataclass(frozen=True)
class Normal:
    mu: float
    sigma: float

    def __post_init__(self):
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ConfigurationError(f"Normal needs sigma > 0, got {self.sigma}")

    def ppf(self, u):
        return sps.norm.ppf(u, loc=self.mu, scale=self.sigma)

    @property
    def mean(self):
        return self.mu

    def to_dict(self):
        return {"dist": "normal", "mu": self.mu, "sigma": self.sigma}


@dataclass(frozen=True)
class Uniform:
    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ConfigurationError(f"Uniform needs a < b, got ({self.a}, {self.b})")

    def ppf(self, u):
        return self.a + (self.b - self.a) * np.asarray(u)

    @property
    def mean(self):
        return 0.5 * (self.a + self.b)

    def to_dict(self):
        return {"dist": "uniform", "a": self.a, "b": self.b}


def distribution_from_dict(d):
    kind = d.get("dist")
    if kind == "normal":
        return Normal(float(d["mu"]), float(d["sigma"]))
    if kind == "uniform":
        return Uniform(float(d["a"]), float(d["b"]))
    raise ConfigurationError(f"unknown distribution {kind!r}")


@dataclass(frozen=True)
class Factor:
    """One named input: a list of independent marginals (length 1 for scalars)."""

    name: str
    marginals: tuple

    @property
    def size(self):
        return len(self.marginals)


class InputSpec:
    """Independent uncertain inputs plus fixed constants.

    Parameters
    ----------
    factors : sequence of (name, marginal or sequence of marginals)
    constants : mapping, optional
        Inputs held at fixed values; they are appended to every parameter
        dictionary but never sampled.
    """

    def __init__(self, factors, constants=None):
        fs, vector = [], set()
        for name, marg in factors:
            if isinstance(marg, (list, tuple)):
                vector.add(str(name))
            margs = tuple(marg) if isinstance(marg, (list, tuple)) else (marg,)
            if not margs:
                raise ConfigurationError(f"factor {name!r} has no components")
            for m in margs:
                if not isinstance(m, (Normal, Uniform)):
                    raise ConfigurationError(f"factor {name!r}: unsupported marginal {m!r}")
            fs.append(Factor(str(name), margs))
        names = [f.name for f in fs]
        if len(set(names)) != len(names):
            raise ConfigurationError("factor names must be unique")
        if not fs:
            raise ConfigurationError("need at least one factor")
        self.factors = tuple(fs)
        self.constants = dict(constants or {})
        self.vector_factors = vector

    @property
    def names(self):
        return [f.name for f in self.factors]

    @property
    def n_x(self):
        return len(self.factors)

    @property
    def width(self):
        return sum(f.size for f in self.factors)

    def slices(self):
        out, start = {}, 0
        for f in self.factors:
            out[f.name] = slice(start, start + f.size)
            start += f.size
        return out

    def columns(self):
        cols = []
        for f in self.factors:
            cols += [f.name] if f.size == 1 and f.name not in self.vector_factors else \
                [f"{f.name}[{k}]" for k in range(f.size)]
        return cols

    def marginals(self):
        return [m for f in self.factors for m in f.marginals]

    def transform(self, u):
        """Map uniforms ``(n, width)`` to parameter values column by column."""
        u = np.asarray(u, dtype=float)
        return np.column_stack([m.ppf(u[:, j]) for j, m in enumerate(self.marginals())])

    def means(self):
        return np.array([m.mean for m in self.marginals()])

    def as_dict(self, row):
        """Parameter dictionary for one row; vector factors become arrays."""
        row = np.asarray(row, dtype=float)
        d = {}
        for name, sl in self.slices().items():
            v = row[sl]
            d[name] = v.copy() if name in self.vector_factors else float(v[0])
        d.update(self.constants)
        return d

    def to_dict(self):
        return {"factors": [{"name": f.name, "vector": f.name in self.vector_factors,
                             "marginals": [m.to_dict() for m in f.marginals]} for f in self.factors],
                "constants": {k: (np.asarray(v).tolist() if np.ndim(v) else v) for k, v in self.constants.items()}}

    @classmethod
    def from_dict(cls, d):
        factors = []
        for f in d["factors"]:
            margs = [distribution_from_dict(m) for m in f["marginals"]]
            factors.append((f["name"], margs if f.get("vector", len(margs) > 1) else margs[0]))
        return cls(factors, d.get("constants"))


@dataclass
class SaltelliPlan:
    """Parameter rows ``[A; B; AB_1; ...; AB_nx]``, each block ``n_s`` rows."""

    spec: InputSpec
    n_s: int
    rows: np.ndarray

    @property
    def n_x(self):
        return self.spec.n_x

    @property
    def size(self):
        return self.rows.shape[0]

    def block(self, k):
        return self.rows[k * self.n_s:(k + 1) * self.n_s]

    @property
    def A(self):
        return self.block(0)

    @property
    def B(self):
        return self.block(1)

    def AB(self, i):
        return self.block(2 + i)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "block"] + self.spec.columns())
            labels = ["A", "B"] + [f"AB_{f}" for f in self.spec.names]
            for r, row in enumerate(self.rows):
                w.writerow([r, labels[r // self.n_s]] + [f"{v:.17g}" for v in row])


def _stratified_uniforms(n, width, rng):
    # one Latin-hypercube column per component: a permuted stratum plus jitter
    u = np.empty((n, width))
    for j in range(width):
        u[:, j] = (rng.permutation(n) + rng.random(n)) / n
    return u


def saltelli_matrices(spec, n_s, rng):
    """Saltelli plan with ``n_s (n_x + 2)`` rows.

    ``A`` and ``B`` are independent stratified samples mapped through the
    inverse CDFs. ``AB_i`` equals ``A`` with factor ``i``'s columns (all of
    them, for a vector factor) taken from ``B``.
    """
    if n_s < 2:
        raise ConfigurationError(f"n_s must be >= 2, got {n_s}")
    w = spec.width
    A = spec.transform(_stratified_uniforms(n_s, w, rng))
    B = spec.transform(_stratified_uniforms(n_s, w, rng))
    blocks = [A, B]
    for sl in spec.slices().values():
        ab = A.copy()
        ab[:, sl] = B[:, sl]
        blocks.append(ab)
    return SaltelliPlan(spec, n_s, np.vstack(blocks))


def evaluate_plan(plan, model, jobs=1):
    """Evaluate ``model(params_dict)`` on every plan row; returns ``(rows, n_out)``."""
    rows = plan.rows
    if jobs == 1:
        out = [model(plan.spec.as_dict(r)) for r in rows]
    else:
        from joblib import Parallel, delayed
        out = Parallel(n_jobs=jobs)(delayed(model)(plan.spec.as_dict(r)) for r in rows)
    Y = np.array([np.atleast_1d(np.asarray(y, dtype=float)) for y in out])
    return Y


@dataclass
class SobolResult:
    """First-order and total indices, ``(n_out, n_x)`` each.

    ``degenerate`` flags outputs with zero variance; their indices are NaN.
    """

    names: list
    first: np.ndarray
    total: np.ndarray
    variance: np.ndarray
    n_s: int
    evaluations: int
    degenerate: np.ndarray = field(default=None)
    first_se: np.ndarray = None
    total_se: np.ndarray = None

    @property
    def first_clipped(self):
        return np.clip(self.first, 0.0, 1.0)

    @property
    def total_clipped(self):
        return np.clip(self.total, 0.0, 1.0)

    def to_dict(self):
        def arr(a):
            return None if a is None else np.where(np.isnan(a), None, a).tolist()
        return {"factors": list(self.names), "n_s": self.n_s, "evaluations": self.evaluations,
                "variance": arr(self.variance), "first": arr(self.first), "total": arr(self.total),
                "first_clipped": arr(self.first_clipped), "total_clipped": arr(self.total_clipped),
                "first_se": arr(self.first_se), "total_se": arr(self.total_se),
                "degenerate": self.degenerate.tolist()}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["output", "factor", "S", "S_clipped", "ST", "ST_clipped"])
            for o in range(self.first.shape[0]):
                for i, name in enumerate(self.names):
                    w.writerow([o, name, f"{self.first[o, i]:.17g}", f"{self.first_clipped[o, i]:.17g}",
                                f"{self.total[o, i]:.17g}", f"{self.total_clipped[o, i]:.17g}"])


def _indices(yA, yB, yAB):
    # yA, yB: (n, p); yAB: (n_x, n, p)
    V = np.var(np.concatenate([yA, yB]), axis=0, ddof=1)
    num1 = np.mean(yB[None] * (yAB - yA[None]), axis=1)
    numT = 0.5 * np.mean((yA[None] - yAB) ** 2, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        S = (num1 / V).T
        ST = (numT / V).T
    deg = ~(V > 0)
    S[deg] = np.nan
    ST[deg] = np.nan
    return S, ST, V, deg


def _split(plan_or_ns, Y, n_x=None):
    n_s = plan_or_ns.n_s if isinstance(plan_or_ns, SaltelliPlan) else int(plan_or_ns)
    n_x = plan_or_ns.n_x if isinstance(plan_or_ns, SaltelliPlan) else n_x
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[0] != n_s * (n_x + 2):
        raise ConfigurationError(f"expected {n_s * (n_x + 2)} output rows, got {Y.shape[0]}")
    if not np.all(np.isfinite(Y)):
        raise ValueError("model outputs must be finite")
    yA, yB = Y[:n_s], Y[n_s:2 * n_s]
    yAB = Y[2 * n_s:].reshape(n_x, n_s, -1)
    return n_s, n_x, yA, yB, yAB


def sobol_indices(plan, Y, bootstrap=0, rng=None, names=None):
    """Sobol first-order and total indices from plan outputs.

    Parameters
    ----------
    plan : SaltelliPlan or int
        The plan, or ``n_s`` (then ``names`` fixes ``n_x``).
    Y : array_like, ``(n_s (n_x + 2),)`` or ``(n_s (n_x + 2), n_out)``
    bootstrap : int
        Number of row resamples for standard errors (0 disables).
    """
    if names is None:
        if not isinstance(plan, SaltelliPlan):
            raise ConfigurationError("names are required when plan is given as n_s")
        names = plan.spec.names
    n_s, n_x, yA, yB, yAB = _split(plan, Y, len(names))
    S, ST, V, deg = _indices(yA, yB, yAB)
    res = SobolResult(list(names), S, ST, V, n_s, n_s * (n_x + 2), deg)
    if bootstrap:
        if bootstrap < 2:
            raise InsufficientDataError("bootstrap needs at least 2 resamples")
        rng = rng if rng is not None else np.random.default_rng(0)
        bs1, bsT = [], []
        for _ in range(bootstrap):
            idx = rng.integers(0, n_s, n_s)
            s1, sT, _, _ = _indices(yA[idx], yB[idx], yAB[:, idx])
            bs1.append(s1)
            bsT.append(sT)
        res.first_se = np.std(bs1, axis=0, ddof=1)
        res.total_se = np.std(bsT, axis=0, ddof=1)
    return res


def aggregated_indices(result, grouping, output=0):
    """Group shares of the first-order indices for one output.

    Parameters
    ----------
    grouping : mapping of group label to list of factor names
        Must partition the factor set.

    Returns
    -------
    dict
        ``raw``: sum of raw member indices per group; ``normalized``: clipped
        member sums scaled to total 1 (the display convention).
    """
    names = list(result.names)
    members = [f for fs in grouping.values() for f in fs]
    if sorted(members) != sorted(names) or len(set(members)) != len(members):
        raise ConfigurationError("grouping must partition the factor set exactly")
    idx = {n: i for i, n in enumerate(names)}
    raw = {g: float(sum(result.first[output, idx[f]] for f in fs)) for g, fs in grouping.items()}
    clipped = {g: float(sum(result.first_clipped[output, idx[f]] for f in fs)) for g, fs in grouping.items()}
    total = sum(clipped.values())
    normalized = {g: (v / total if total > 0 else float("nan")) for g, v in clipped.items()}
    return {"raw": raw, "normalized": normalized, "mode": "clipped-normalized"}


def shares_to_csv(shares, path):
    """Write ``(label, share)`` rows of the normalized group shares."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label", "share"])
        for g, v in shares["normalized"].items():
            w.writerow([g, f"{v:.17g}"])


# -- reference models --------------------------------------------------------

ISHIGAMI_A = 7.0
ISHIGAMI_B = 0.1


def additive_spec():
    """Two inputs uniform on ``[0, 1]`` for :func:`additive_model`."""
    return InputSpec([("x1", Uniform(0.0, 1.0)), ("x2", Uniform(0.0, 1.0))])


def additive_model(theta):
    """``x1 + 2 x2``; first-order indices 0.2 and 0.8."""
    return float(theta["x1"] + 2.0 * theta["x2"])


def ishigami_spec():
    """Three inputs uniform on ``[-pi, pi]`` for :func:`ishigami`."""
    return InputSpec([(f"x{i}", Uniform(-np.pi, np.pi)) for i in (1, 2, 3)])


def ishigami(theta, a=ISHIGAMI_A, b=ISHIGAMI_B):
    """``sin x1 + a sin^2 x2 + b x3^4 sin x1``."""
    x1, x2, x3 = theta["x1"], theta["x2"], theta["x3"]
    return float(np.sin(x1) + a * np.sin(x2) ** 2 + b * x3 ** 4 * np.sin(x1))
