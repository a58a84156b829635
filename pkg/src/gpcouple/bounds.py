"""Variance and deviation bounds for GP-coupled fixed-point problems.

Under a fill-distance bound ``sigma^2(x) <= C h^(2s - d)`` for every latent
kernel, the posterior covariance of an LMC surrogate obeys

.. math::
    \\bar\\kappa(x, x) \\preceq \\Big(\\sum_q C_q h^{2 s_q - d}\\Big) \\sum_q B_q,

and a Gaussian tail argument gives per-solver radii
``t_c = sqrt(2 D_c) sigma_c sqrt(log(2 C D_c / beta))``. These combine into
the deviation radius of the coupled output,

.. math::
    R = \\frac{L_H}{1 - \\rho} \\sum_c L_c t_c .

The constants ``C_q`` and ``h0_q`` are problem specific. They are either
supplied by the user or calibrated as the largest ratio over a ladder of
designs; every report records which.
"""
import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .coupling import apply_T
from .design import Design, fill_distance
from .errors import (ConfigurationError, ContractionViolationError, HypothesisViolationError,
                     InsufficientDataError)
from .gp import fit
from .kernels import LmcKernel, ScalarKernel, as_points
from .uq import run_method3, surrogate_solvers


@dataclass(frozen=True)
class LatentConstants:
    """Smoothness ``s``, bound constant ``C`` and validity radius ``h0`` of one latent kernel."""

    s: float
    C: float
    h0: float = math.inf


@dataclass(frozen=True)
class SolverBoundInputs:
    """Bound ingredients for one surrogate solver.

    Parameters
    ----------
    output_dim, input_dim : int
    latent : sequence of LatentConstants
    lam_max_B : float
        Largest eigenvalue of ``sum_q B_q``.
    h : float
        Fill distance of the solver's training design.
    L : float
        Sensitivity of one coupling sweep to this solver's output offsets.
    """

    output_dim: int
    input_dim: int
    latent: tuple
    lam_max_B: float
    h: float
    L: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "latent", tuple(self.latent))
        if not self.latent:
            raise ConfigurationError("need at least one latent kernel")
        for q in self.latent:
            if q.s <= self.input_dim / 2:
                raise HypothesisViolationError(f"smoothness s={q.s} must exceed d/2={self.input_dim / 2}")
            if q.C < 0:
                raise ConfigurationError(f"bound constant must be non-negative, got {q.C}")
        if self.lam_max_B < 0 or self.h < 0 or self.L < 0:
            raise ConfigurationError("lam_max_B, h and L must be non-negative")


@dataclass(frozen=True)
class BoundInputs:
    solvers: tuple
    rho: float
    L_H: float = 1.0
    beta: float = 0.05
    mode: str = "user"

    def __post_init__(self):
        object.__setattr__(self, "solvers", tuple(self.solvers))

    @property
    def C(self):
        return len(self.solvers)


@dataclass
class BoundReport:
    sigma2: list
    t: list
    R: float
    beta: float
    mode: str
    inputs: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def _check_h(latent, h):
    h0 = min(q.h0 for q in latent)
    if h > h0:
        raise HypothesisViolationError(f"fill distance {h:.6g} exceeds the validity radius h0={h0:.6g}")


def variance_factor(latent, h, d):
    """``sum_q C_q h^(2 s_q - d)``."""
    return float(sum(q.C * h ** (2 * q.s - d) for q in latent))


def lmc_variance_bound(solver, h=None, B_sum=None):
    """Scalar factor and matrix bound on the posterior covariance ``kappa_bar(x, x)``.

    Parameters
    ----------
    solver : SolverBoundInputs
    h : float, optional
        Fill distance; defaults to ``solver.h``.
    B_sum : (D, D) array_like, optional
        ``sum_q B_q``. Without it the matrix bound is ``factor * lam_max * I``.

    Raises
    ------
    HypothesisViolationError
        ``h`` exceeds the smallest ``h0``.
    """
    h = solver.h if h is None else h
    _check_h(solver.latent, h)
    factor = variance_factor(solver.latent, h, solver.input_dim)
    if B_sum is None:
        mat = factor * solver.lam_max_B * np.eye(solver.output_dim)
    else:
        mat = factor * np.asarray(B_sum, dtype=float)
    return factor, mat


def compute_tc(D, lam_max, C, s, h, d, beta, n_solvers):
    """Per-solver radius ``t_c = sqrt(2 D) sigma sqrt(log(2 n_solvers D / beta))``.

    ``sigma^2 = lam_max * sum_q C_q h^(2 s_q - d)``; ``C`` and ``s`` may be
    scalars or matching sequences.
    """
    if not 0 < beta < 1:
        raise ConfigurationError(f"beta must lie in (0, 1), got {beta}")
    C = np.atleast_1d(np.asarray(C, dtype=float))
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if C.shape != s.shape:
        raise ConfigurationError("C and s must have the same length")
    sigma2 = lam_max * float(np.sum(C * h ** (2 * s - d)))
    return math.sqrt(2 * D) * math.sqrt(sigma2) * math.sqrt(math.log(2 * n_solvers * D / beta))


def deviation_radius(L_H, rho, L, t):
    """``R = L_H / (1 - rho) * sum_c L_c t_c``.

    Raises
    ------
    ContractionViolationError
        ``rho >= 1``.
    """
    if not rho < 1:
        raise ContractionViolationError(f"contraction modulus must be < 1, got {rho}")
    if rho < 0 or L_H < 0:
        raise ConfigurationError("rho and L_H must be non-negative")
    L = np.asarray(L, dtype=float)
    t = np.asarray(t, dtype=float)
    if L.shape != t.shape:
        raise ConfigurationError("need one L_c per t_c")
    return float(L_H / (1.0 - rho) * np.sum(L * t))


def evaluate_bounds(inputs):
    """Evaluate ``sigma_c^2``, ``t_c`` and ``R`` for every solver."""
    if not 0 < inputs.beta < 1:
        raise ConfigurationError(f"beta must lie in (0, 1), got {inputs.beta}")
    sig, ts = [], []
    for sv in inputs.solvers:
        _check_h(sv.latent, sv.h)
        sig.append(sv.lam_max_B * variance_factor(sv.latent, sv.h, sv.input_dim))
        ts.append(compute_tc(sv.output_dim, sv.lam_max_B, [q.C for q in sv.latent],
                             [q.s for q in sv.latent], sv.h, sv.input_dim, inputs.beta, inputs.C))
    R = deviation_radius(inputs.L_H, inputs.rho, [sv.L for sv in inputs.solvers], ts)
    echo = {"rho": inputs.rho, "L_H": inputs.L_H, "C": inputs.C,
            "solvers": [asdict(sv) for sv in inputs.solvers]}
    return BoundReport(sig, ts, R, inputs.beta, inputs.mode, echo)


# -- finite-difference constants ---------------------------------------------


def _model_slots(problem):
    """``(solver, model index, offset shape)`` for every surrogate model."""
    slots = []
    for c in surrogate_solvers(problem):
        solver = problem.solvers[c]
        for k, model in enumerate(solver.models):
            slots.append((c, k, (solver.rows, model.output_dim)))
    return slots


def _offset_eval(problem, c0, k0, delta):
    def evaluate(c, m, x, theta):
        solver = problem.solvers[c]
        if c != c0:
            return solver.evaluate(x, theta)
        pts = solver.points(x)
        blocks = [model.mean(pts) + (delta if k == k0 else 0.0) for k, model in enumerate(solver.models)]
        return solver.assemble(blocks)
    return evaluate


def estimate_offset_sensitivity(problem, probes, step=1e-6):
    """Sensitivity ``L_k`` of one coupling sweep to a constant offset on model ``k``.

    For every surrogate model the Jacobian of ``T`` with respect to the
    model's offset block is formed by central differences at each probe
    state; ``L_k`` is the largest spectral norm found.

    Returns
    -------
    list of float
        One constant per surrogate model, enumerated solver by solver.
    """
    probes = [np.atleast_1d(np.asarray(u, dtype=float)) for u in probes]
    if not probes:
        raise InsufficientDataError("need at least one probe state")
    out = []
    for c, k, shape in _model_slots(problem):
        best = 0.0
        n = int(np.prod(shape))
        for u in probes:
            J = np.empty((problem.interface_dim, n))
            for i in range(n):
                e = np.zeros(n)
                e[i] = step
                up, _, _ = apply_T(problem, u, 1, _offset_eval(problem, c, k, e.reshape(shape)))
                dn, _, _ = apply_T(problem, u, 1, _offset_eval(problem, c, k, -e.reshape(shape)))
                J[:, i] = (up - dn) / (2 * step)
            best = max(best, float(np.linalg.norm(J, 2)))
        out.append(best)
    return out


def estimate_post_map_constant(problem, probes, step=1e-6):
    """Largest spectral norm of the post-map Jacobian over the probe states."""
    best = 0.0
    for u in probes:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        y0 = problem.output(u)
        J = np.empty((y0.size, u.size))
        for i in range(u.size):
            e = np.zeros(u.size)
            e[i] = step
            J[:, i] = (problem.output(u + e) - problem.output(u - e)) / (2 * step)
        best = max(best, float(np.linalg.norm(J, 2)))
    return best


# -- empirical coverage --------------------------------------------------------


@dataclass
class CoverageResult:
    fraction: float
    deviations: np.ndarray
    radii: np.ndarray
    covered: np.ndarray
    excluded: int
    slack: float

    def to_dict(self):
        return {"fraction": self.fraction, "excluded": self.excluded, "slack": self.slack,
                "n": int(self.covered.size), "max_ratio": float(np.max(self.deviations / np.maximum(self.radii, 1e-300)))
                if self.covered.size else None}


def empirical_coverage(problem, N, master_seed, L_H, rho, L, radius_scale=1.0, slack=1e-8,
                       zero_offsets=False, jobs=1):
    """Fraction of Method-3 replications inside the offset-level deviation radius.

    Replication ``j`` is covered when
    ``||y_j - y_mean|| <= radius_scale * L_H / (1 - rho) * sum_k L_k max_m ||delta_{k,m}|| + slack``.
    Non-converged replications are excluded and counted.
    """
    if not rho < 1:
        raise ContractionViolationError(f"contraction modulus must be < 1, got {rho}")
    e = run_method3(problem, N, master_seed, zero_offsets=zero_offsets, jobs=jobs)
    L = np.asarray(L, dtype=float)
    if e.offset_norms.shape[1] != L.size:
        raise ConfigurationError(f"need {e.offset_norms.shape[1]} sensitivity constants, got {L.size}")
    ok = e.converged
    dev = np.linalg.norm(e.samples[ok] - e.mean_path_output, axis=1)
    radii = radius_scale * L_H / (1.0 - rho) * (e.offset_norms[ok] @ L)
    covered = dev <= radii + slack
    frac = float(np.mean(covered)) if covered.size else float("nan")
    return CoverageResult(frac, dev, radii, covered, e.excluded, slack)


# -- variance decay ------------------------------------------------------------


@dataclass
class SlopeResult:
    slope: float
    intercept: float
    n: np.ndarray
    h: np.ndarray
    sup_var: np.ndarray
    theory: float = None

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "h", "sup_variance"])
            for n, h, v in zip(self.n, self.h, self.sup_var):
                w.writerow([int(n), f"{h:.17g}", f"{v:.17g}"])

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "theory": self.theory,
                "n": [int(v) for v in self.n], "h": self.h.tolist(), "sup_variance": self.sup_var.tolist()}


def _probe_points(bounds, resolution):
    b = np.asarray(bounds, dtype=float).reshape(-1, 2)
    axes = [np.linspace(lo, hi, resolution + 1) for lo, hi in b]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def sup_posterior_variance(kernel, X, probe, nugget=1e-12):
    """Largest posterior variance (max eigenvalue per point) over ``probe``."""
    if isinstance(kernel, ScalarKernel):
        kernel = LmcKernel.single(kernel)
    X = as_points(X)
    model = fit(kernel, X, np.zeros((X.shape[0], kernel.output_dim)), nugget)
    var = model.var(probe)
    return float(np.max(var))


def variance_decay_slope(kernel, designs, bounds=((0.0, 1.0),), probe_resolution=2000, nugget=1e-12):
    """Log-log slope of the sup posterior variance against the fill distance.

    Parameters
    ----------
    kernel : ScalarKernel or LmcKernel
    designs : sequence of (n, d) arrays or Design
        At least three designs with distinct fill distances.
    probe_resolution : int
        Intervals per dimension of the probe grid used for both the fill
        distance and the sup of the variance.
    """
    if len(designs) < 3:
        raise InsufficientDataError(f"need at least 3 designs, got {len(designs)}")
    probe = _probe_points(bounds, probe_resolution)
    ns, hs, vs = [], [], []
    for X in designs:
        pts = X.points if isinstance(X, Design) else as_points(X)
        ns.append(pts.shape[0])
        hs.append(fill_distance(pts, bounds, probe_resolution))
        vs.append(sup_posterior_variance(kernel, pts, probe, nugget))
    h, v = np.array(hs), np.array(vs)
    if len(np.unique(h)) < 3:
        raise InsufficientDataError("designs need at least 3 distinct fill distances")
    if np.any(v <= 0):
        raise InsufficientDataError("sup variance vanished on a design; refine the probe or raise the nugget")
    slope, intercept = np.polyfit(np.log(h), np.log(v), 1)
    d = np.asarray(bounds).reshape(-1, 2).shape[0]
    ker = kernel.latent_kernels[0] if isinstance(kernel, LmcKernel) else kernel
    theory = 2 * ker.sobolev_order(d) - d
    return SlopeResult(float(slope), float(intercept), np.array(ns), h, v,
                       float(theory) if np.isfinite(theory) else None)


def calibrate_constant(kernel, X, bounds=((0.0, 1.0),), probe_resolution=2000, nugget=1e-12):
    """Constant ``C`` with ``sup var <= C lam_max h^(2s - d)`` on the given designs.

    ``X`` is one design or a ladder of designs (a list of arrays or
    :class:`Design`). The ratio ``sup var / (lam_max h^(2s - d))`` grows
    towards its asymptote as designs are refined, so the constant is the
    largest ratio over the ladder, which is tight on the finest design.

    Returns ``(C, h0)`` with ``h0`` the largest fill distance of the ladder,
    the validity radius of the calibrated bound.
    """
    if isinstance(kernel, ScalarKernel):
        kernel = LmcKernel.single(kernel)
    ladder = list(X) if isinstance(X, (list, tuple)) and all(isinstance(x, (np.ndarray, Design)) for x in X) \
        else [X]
    probe = _probe_points(bounds, probe_resolution)
    lam = float(np.linalg.eigvalsh(kernel.B_sum()).max())
    best, h0 = 0.0, 0.0
    for design in ladder:
        pts = design.points if isinstance(design, Design) else as_points(design)
        d = pts.shape[1]
        h = fill_distance(pts, bounds, probe_resolution)
        v = sup_posterior_variance(kernel, pts, probe, nugget)
        s = kernel.latent_kernels[0].sobolev_order(d)
        best = max(best, v / (lam * h ** (2 * s - d)))
        h0 = max(h0, h)
    return best, h0


def linspace_ladder(sizes, lo=0.0, hi=1.0):
    """Equispaced 1-D designs of the given sizes (endpoints included)."""
    return [np.linspace(lo, hi, n).reshape(-1, 1) for n in sizes]
