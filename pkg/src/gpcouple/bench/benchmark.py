"""Two-code analytical benchmark with a known coupled solution.

Two scalar codes on ``[0, 1]`` are coupled through their average,

.. math::
    y = \\tfrac12\\left(g_1(y) + g_2(y)\\right),

which has the unique fixed point ``y* = 0.3574988`` (contraction modulus
about 0.279). Solver 1 returns ``(g_1(y), g_2(y))``, solver 2 averages them,
and all transfers are identities.
"""
from dataclasses import dataclass

import numpy as np

from ..coupling import CouplingProblem, SolverBox, SurrogateSolver
from ..design import lhs
from ..errors import ConfigurationError
from ..gp import fit
from ..kernels import ScalarKernel

Y_STAR = 0.3574988
U0 = 0.5
TOL = 1e-8
LENGTHSCALE = 0.25
NUGGET = 1e-12
PRIOR_VARIANCE = 1.0
DOMAIN = ((0.0, 1.0),)
# Design seed used by default. The ensemble variance at n = 20 depends
# strongly on the design; see the package notes for the spread over seeds.
DEFAULT_DOE_SEED = 12


def g1(x):
    x = np.asarray(x, dtype=float)
    return (0.12 + 0.18 * x + 0.06 * np.sin(2 * np.pi * x)
            + 0.05 * np.exp(-60.0 * (x - 0.70) ** 2) + 0.03 * x * (1 - x))


def g2(x):
    x = np.asarray(x, dtype=float)
    return 0.58 - 0.22 * x + 0.03 * np.tanh(8.0 * (x - 0.40)) + 0.015 * np.sin(4 * np.pi * x)


def eval_g(which, x):
    """Evaluate code 1 or 2."""
    if which == 1:
        return g1(x)
    if which == 2:
        return g2(x)
    raise ConfigurationError(f"benchmark has codes 1 and 2, not {which!r}")


def _codes(x, theta=None):
    return np.array([g1(x[0]), g2(x[0])])


def _average(z, theta=None):
    return np.array([0.5 * (z[0] + z[1])])


@dataclass
class BenchmarkSetup:
    problem: CouplingProblem
    models: list
    design: object = None
    doe_seed: int = None


def benchmark_problem(solver1, tol=TOL, u0=U0, max_iter=1000):
    averager = SolverBox(_average, 2, 1, "exact-code", "average")
    return CouplingProblem((solver1, averager), u0, tol=tol, max_iter=max_iter, name="benchmark")


def fit_surrogates(X, lengthscale=LENGTHSCALE, nugget=NUGGET, prior_variance=PRIOR_VARIANCE, family="Matern52"):
    """Independent scalar GPs for ``g_1`` and ``g_2`` on a shared design."""
    k = ScalarKernel(family, lengthscale, prior_variance)
    X = np.asarray(X, dtype=float).reshape(-1, 1)
    return [fit(k, X, g1(X[:, 0]), nugget), fit(k, X, g2(X[:, 0]), nugget)]


def build_benchmark_problem(doe_size=20, seed=DEFAULT_DOE_SEED, surrogate_mode="gp-mean", tol=TOL, u0=U0,
                            lengthscale=LENGTHSCALE, nugget=NUGGET, prior_variance=PRIOR_VARIANCE):
    """Coupled benchmark with exact codes or GP mean surrogates.

    Parameters
    ----------
    doe_size : int
        Latin hypercube size for the surrogate training data (``>= 3``).
    seed : int
        Seed of the design generator.
    surrogate_mode : {"exact", "gp-mean"}
    """
    if surrogate_mode == "exact":
        return BenchmarkSetup(benchmark_problem(SolverBox(_codes, 1, 2, "exact-code", "codes"), tol, u0), [])
    if surrogate_mode != "gp-mean":
        raise ConfigurationError(f"unknown surrogate mode {surrogate_mode!r}")
    if doe_size < 3:
        raise ConfigurationError(f"doe_size must be >= 3, got {doe_size}")
    design = lhs(doe_size, DOMAIN, np.random.default_rng(seed))
    models = fit_surrogates(design.points, lengthscale, nugget, prior_variance)
    solver = SurrogateSolver(models, rows=1, name="codes-gp")
    return BenchmarkSetup(benchmark_problem(solver, tol, u0), models, design, seed)
