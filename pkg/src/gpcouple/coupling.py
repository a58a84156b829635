"""Partitioned coupling of black-box solvers as a fixed-point problem.

One application of the coupling map sends the interface state ``u`` through
``Gamma_1``, solver 1, ``Gamma_12``, solver 2, ..., solver ``C`` and
``Gamma_C`` back to the interface. :func:`fixed_point` runs plain Picard
iterations until ``||u_M - u_{M-1}|| <= tol`` and records every solver input.

Solver evaluation can be overridden with an ``evaluate(c, m, x, theta)``
hook, where ``c`` is the solver index and ``m`` the 1-based iteration. The
Monte Carlo schemes in :mod:`gpcouple.uq` use it to inject sampled surrogate
values without touching the problem definition.
"""
import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, DivergenceError, GpCoupleError, NonConvergenceError
from .gp import batch_mean

KINDS = ("exact-code", "gp-mean", "gp-perturbed")


def _vec(v):
    return np.atleast_1d(np.asarray(v, dtype=float)).reshape(-1)


@dataclass(frozen=True, eq=False)
class SolverBox:
    """Deterministic solver ``x -> S(x, theta)``.

    ``evaluator`` receives a 1-D input of length ``input_dim`` and the frozen
    parameter vector (``None`` when the problem has none).
    """

    evaluator: object
    input_dim: int
    output_dim: int
    kind: str = "exact-code"
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown solver kind {self.kind!r}")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ConfigurationError("solver dimensions must be positive")

    def evaluate(self, x, theta=None):
        y = _vec(self.evaluator(x, theta))
        if y.size != self.output_dim:
            raise ConfigurationError(f"solver {self.name or '?'} returned {y.size} values, expected {self.output_dim}")
        return y


class SurrogateSolver(SolverBox):
    """Solver backed by GP posterior means.

    The input vector holds ``rows`` local query points of dimension
    ``models[k].input_dim``; every model is queried at every row and the
    outputs are concatenated row by row (row-major ``(rows, sum D_k)``).
    """

    def __init__(self, models, rows=1, name=""):
        models = tuple(models)
        if not models:
            raise ConfigurationError("a surrogate solver needs at least one model")
        d = models[0].input_dim
        if any(m.input_dim != d for m in models):
            raise ConfigurationError("all models of a surrogate solver must share the input dimension")
        dims = [m.output_dim for m in models]
        object.__setattr__(self, "models", models)
        object.__setattr__(self, "rows", int(rows))
        object.__setattr__(self, "local_dim", d)
        object.__setattr__(self, "slices", np.cumsum([0] + dims))
        super().__init__(self._mean, d * int(rows), int(rows) * sum(dims), "gp-mean", name)

    def points(self, x):
        return _vec(x).reshape(self.rows, self.local_dim)

    def assemble(self, per_model):
        """Concatenate per-model ``(rows, D_k)`` blocks into the flat output."""
        return np.concatenate(per_model, axis=1).reshape(-1)

    def _mean(self, x, theta=None):
        pts = self.points(x)
        return self.assemble(batch_mean(self.models, pts))


def identity(v, theta=None):
    return v


def affine(A, b=None):
    """Transfer ``v -> A v + b``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    b = np.zeros(A.shape[0]) if b is None else _vec(b)

    def transfer(v, theta=None):
        return A @ _vec(v) + b

    return transfer


@dataclass(frozen=True, eq=False)
class CouplingProblem:
    """Solvers, transfer operators and iteration settings.

    Parameters
    ----------
    solvers : sequence of SolverBox
        ``C >= 2`` solvers, applied in order.
    u0 : array_like
        Initial interface state.
    transfers : sequence of callable or None
        ``C + 1`` maps ``(v, theta) -> v'``: ``Gamma_1``, the ``C - 1``
        inter-solver transfers, then ``Gamma_C``. ``None`` entries (or a
        ``None`` list) mean identity.
    post_map : callable, optional
        ``H(u, theta)``; identity by default.
    theta : array_like, optional
        Parameter vector passed unchanged to every solver and transfer.
    """

    solvers: tuple
    u0: object
    transfers: tuple = None
    post_map: object = None
    tol: float = 1e-8
    max_iter: int = 1000
    theta: object = None
    divergence_threshold: float = 1e9
    name: str = ""

    def __post_init__(self):
        solvers = tuple(self.solvers)
        if len(solvers) < 2:
            raise ConfigurationError("a coupling problem needs at least two solvers")
        transfers = (None,) * (len(solvers) + 1) if self.transfers is None else tuple(self.transfers)
        if len(transfers) != len(solvers) + 1:
            raise ConfigurationError(f"expected {len(solvers) + 1} transfers, got {len(transfers)}")
        if not self.tol > 0:
            raise ConfigurationError("tol must be positive")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be >= 1")
        object.__setattr__(self, "solvers", solvers)
        object.__setattr__(self, "transfers", tuple(t or identity for t in transfers))
        object.__setattr__(self, "u0", _vec(self.u0))
        object.__setattr__(self, "post_map", self.post_map or identity)

    @property
    def C(self):
        return len(self.solvers)

    @property
    def interface_dim(self):
        return self.u0.size

    def with_(self, **changes):
        return replace(self, **changes)

    def output(self, u):
        return _vec(self.post_map(_vec(u), self.theta))


@dataclass
class PathRecord:
    """Inputs and outputs of every solver call during one fixed-point run."""

    inputs: list
    outputs: list
    iterates: list
    converged: bool = False
    residuals: list = field(default_factory=list)

    @property
    def M(self):
        return len(self.inputs[0]) if self.inputs else 0

    def solver_inputs(self, c):
        """Inputs of solver ``c`` stacked as ``(M, d_c)``."""
        return np.array(self.inputs[c])

    def to_csv(self, path):
        width_in = max(len(x) for xs in self.inputs for x in xs) if self.M else 0
        width_out = max(len(y) for ys in self.outputs for y in ys) if self.M else 0
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "solver"] + [f"x{i + 1}" for i in range(width_in)]
                       + [f"y{i + 1}" for i in range(width_out)])
            for m in range(self.M):
                for c in range(len(self.inputs)):
                    x, y = self.inputs[c][m], self.outputs[c][m]
                    w.writerow([m + 1, c + 1] + [repr(float(v)) for v in x] + [""] * (width_in - len(x))
                               + [repr(float(v)) for v in y] + [""] * (width_out - len(y)))


def apply_T(problem, u, m=1, evaluate=None):
    """One sweep of the coupling map.

    Returns
    -------
    u_next : ndarray
    inputs : list of ndarray
        The exact input passed to each solver.
    outputs : list of ndarray
        The value each solver returned.
    """
    theta = problem.theta
    u = _vec(u)
    if u.size != problem.interface_dim:
        raise ConfigurationError(f"interface state has size {u.size}, expected {problem.interface_dim}")
    v = u
    inputs, outputs = [], []
    for c, solver in enumerate(problem.solvers):
        x = _vec(problem.transfers[c](v, theta))
        if x.size != solver.input_dim:
            raise ConfigurationError(f"transfer {c} produced {x.size} values; solver {c} expects {solver.input_dim}")
        try:
            y = solver.evaluate(x, theta) if evaluate is None else _vec(evaluate(c, m, x, theta))
        except GpCoupleError:
            raise
        except Exception as exc:
            raise GpCoupleError(f"solver {c} ({solver.name or solver.kind}) failed: {exc}") from exc
        inputs.append(x)
        outputs.append(y)
        v = y
    u_next = _vec(problem.transfers[-1](v, theta))
    if u_next.size != problem.interface_dim:
        raise ConfigurationError("last transfer does not map back to the interface space")
    return u_next, inputs, outputs


def fixed_point(problem, evaluate=None, u0=None):
    """Picard iteration ``u_{m} = T(u_{m-1})`` from ``u0``.

    Returns ``(u, path)``. When the iteration limit is reached the last
    iterate is returned with ``path.converged == False``.

    Raises
    ------
    DivergenceError
        An iterate is non-finite or its norm exceeds the divergence threshold.
    """
    u = problem.u0 if u0 is None else _vec(u0)
    C = problem.C
    path = PathRecord([[] for _ in range(C)], [[] for _ in range(C)], [u.copy()])
    for m in range(1, problem.max_iter + 1):
        u_next, xs, ys = apply_T(problem, u, m, evaluate)
        for c in range(C):
            path.inputs[c].append(xs[c])
            path.outputs[c].append(ys[c])
        path.iterates.append(u_next)
        if not np.all(np.isfinite(u_next)) or np.linalg.norm(u_next) > problem.divergence_threshold:
            raise DivergenceError(f"iterate {m} diverged (norm {np.linalg.norm(u_next):.3g})")
        res = float(np.linalg.norm(u_next - u))
        path.residuals.append(res)
        u = u_next
        if res <= problem.tol:
            path.converged = True
            break
    return u, path


def replay(problem, path):
    """Rerun the iteration with solver outputs looked up from ``path``.

    Each solver returns the value recorded at the same iteration, after
    checking that it is queried at exactly the recorded input.
    """

    def lookup(c, m, x, theta):
        if not np.array_equal(x, path.inputs[c][m - 1]):
            raise GpCoupleError(f"replay diverged from the recorded path at solver {c}, iteration {m}")
        return path.outputs[c][m - 1]

    limited = problem.with_(max_iter=path.M)
    return fixed_point(limited, lookup)


def iteration_bound(rho, first_step, tol):
    """Iterations needed by a ``rho``-contraction: ``ceil(log(tol / |u1 - u0|) / log(rho)) + 2``."""
    if first_step <= tol:
        return 2
    return math.ceil(math.log(tol / first_step) / math.log(rho)) + 2


def estimate_contraction(problem, grid, step=None, domain=None, evaluate=None):
    """Largest finite-difference derivative norm of the coupling map on ``grid``.

    For a scalar interface this is ``max |T'(u)|`` by central differences.
    For vector interfaces the Jacobian at each grid state is assembled from
    ``2 d`` directional differences and its spectral norm is taken.

    Parameters
    ----------
    grid : array_like, shape (G,) or (G, d)
    step : float, optional
        Difference step; defaults to ``1e-6`` times the domain width.
    domain : sequence of (lo, hi), optional
        Interface domain; grid points outside it are rejected.
    """
    d = problem.interface_dim
    G = np.asarray(grid, dtype=float).reshape(-1, d)
    if domain is not None:
        b = np.asarray(domain, dtype=float).reshape(d, 2)
        if np.any(G < b[:, 0]) or np.any(G > b[:, 1]):
            raise ConfigurationError("contraction grid leaves the interface domain")
        width = float(np.max(b[:, 1] - b[:, 0]))
    else:
        width = float(np.max(G.max(axis=0) - G.min(axis=0))) or 1.0
    h = step if step is not None else 1e-6 * width

    def T(u):
        return apply_T(problem, u, 1, evaluate)[0]

    best = 0.0
    eye = np.eye(d)
    for u in G:
        J = np.empty((d, d))
        for i in range(d):
            J[:, i] = (T(u + h * eye[i]) - T(u - h * eye[i])) / (2.0 * h)
        best = max(best, float(np.linalg.norm(J, 2)) if d > 1 else abs(float(J[0, 0])))
    return best


@dataclass
class CycleRecord:
    """Per-step fixed points and paths of a multi-step cycle."""

    steps: list
    outputs: list
    fixed_points: list

    @property
    def counts(self):
        return [p.M for p in self.steps]

    def path_points(self, c):
        """Concatenated inputs of solver ``c`` over all steps, in (t, m) order."""
        return np.vstack([p.solver_inputs(c) for p in self.steps])


def multi_step_cycle(problems, initial_state, transition=None, evaluate=None):
    """Chain fixed-point solves over ``T`` steps.

    Parameters
    ----------
    problems : sequence of CouplingProblem, or callable
        Either one problem per step, started from the carried state, or a
        factory ``problems(t, state) -> CouplingProblem`` whose ``u0`` is
        used as given. ``len(problems)`` fixes ``T`` in the sequence case;
        a factory needs ``problems.steps``.
    initial_state : object
        Carried state entering step 0 (the initial interface state for a
        sequence of problems).
    transition : callable, optional
        ``transition(t, state, u_star) -> state`` after step ``t``. Defaults
        to carrying the fixed point itself.
    evaluate : callable, optional
        Hook ``evaluate(t, c, m, x, theta)``.

    Raises
    ------
    NonConvergenceError
        A step did not converge; the message names the step.
    """
    factory = callable(problems) and not isinstance(problems, (list, tuple))
    T = problems.steps if factory else len(problems)
    state = initial_state
    steps, outputs, fps = [], [], []
    for t in range(T):
        if factory:
            prob = problems(t, state)
            u0 = None
        else:
            prob = problems[t]
            u0 = state
        hook = None if evaluate is None else (lambda c, m, x, th, _t=t: evaluate(_t, c, m, x, th))
        u, path = fixed_point(prob, hook, u0)
        if not path.converged:
            raise NonConvergenceError(f"cycle step {t} did not converge in {prob.max_iter} iterations")
        steps.append(path)
        fps.append(u)
        outputs.append(prob.output(u))
        state = u if transition is None else transition(t, state, u)
    return outputs, CycleRecord(steps, outputs, fps)
