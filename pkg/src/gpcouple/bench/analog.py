"""Synthetic hydraulic-mechanical coupled analog of a row of fuel assemblies.

This is a stand-in with the same structure as a real bow computation; none
of its physics or constants come from a reactor code.

Interface state
    Modal deformation ``u`` of every assembly, ``(A, 3)`` for the C, S, W
    modes, flattened.
Hydraulic code
    Per assembly, input ``(u_a, w_a, h_l)`` with ``w_a`` the cross-flow
    driver (inlet minus outlet velocity profile at the assembly position).
    Output: one lateral force per spacer grid,
    ``F_g = F_max tanh((h_l / h_ref) (alpha w_a phi_g - gamma (M u_a)_g))``.
Transfer
    Grid forces are projected on the modal basis, ``f_a = M^T F_a``.
Mechanical code
    Per assembly, input ``(f_a, creep, clamping, MSI, growth)``. Output: the
    modal increment
    ``kappa_k (1 + 0.3 creep) (1 - 10 MSI) tanh(f_k) / clamping + g_k growth``.
    The last transfer adds the deformation ``c0_a`` carried into the step.
Cycle
    Step ``t`` of ``T`` uses time fraction ``tau = (t + 1) / T`` for creep and
    growth; its fixed point becomes the carried deformation of step
    ``t + 1``.

Both codes can be replaced by GP mean surrogates trained on Latin hypercube
designs over boxes that cover the reachable inputs.
"""
from dataclasses import asdict, dataclass, field

import numpy as np

from ..coupling import CouplingProblem, SolverBox, SurrogateSolver, estimate_contraction, multi_step_cycle
from ..design import lhs
from ..errors import ConfigurationError
from ..gp import fit
from ..kernels import ScalarKernel
from ..sensitivity import InputSpec, Normal, Uniform
from .modal import ModalBasis
from .velocity import evaluate_parabola, parabola_from_inputs

FACTOR_GROUPS = ("C", "S", "W", "BC", "h_l", "MSI", "grid_clamping", "C_creep", "C_growth")


@dataclass(frozen=True)
class AnalogConfig:
    """Analog settings. Every dynamic constant here is a synthetic placeholder."""

    assemblies: int = 15
    grids: int = 10
    steps: int = 5
    n_train: int = 500
    doe_seed: int = 0
    tol: float = 1e-8
    max_iter: int = 300
    # placeholder spreads for the cycle-dependent table entries
    sigma_C: float = 1.0
    sigma_S: float = 0.5
    sigma_W: float = 0.3
    clamp_mu: float = 1.0
    clamp_sigma: float = 0.1
    # dynamics
    F_max: float = 0.5
    alpha: float = 5.0
    gamma: float = 0.15
    h_ref: float = 0.02
    kappa: tuple = (0.35, 0.25, 0.15)
    growth_gain: tuple = (0.05, -0.03, 0.02)
    nugget: float = 1e-8
    non_paper: bool = field(default=True, repr=False)

    def __post_init__(self):
        if self.assemblies < 1 or self.grids < 3 or self.steps < 1:
            raise ConfigurationError("need assemblies >= 1, grids >= 3 and steps >= 1")
        if self.n_train < 10:
            raise ConfigurationError(f"n_train must be >= 10, got {self.n_train}")
        if len(self.kappa) != 3 or len(self.growth_gain) != 3:
            raise ConfigurationError("kappa and growth_gain need one value per mode")


def analog_input_spec(cfg=AnalogConfig()):
    """Nine factors: C, S, W and BC vectors plus five scalars.

    BC holds ``(V, M_in, L_in, M_out, L_out)``. C, S, W spreads and the
    clamping law are placeholders; the other laws follow the input table.
    Inputs held at their means are recorded as constants.
    """
    A = cfg.assemblies
    return InputSpec(
        [("C", [Normal(0.0, cfg.sigma_C)] * A),
         ("S", [Normal(0.0, cfg.sigma_S)] * A),
         ("W", [Normal(0.0, cfg.sigma_W)] * A),
         ("BC", [Normal(5.0, 0.05), Normal(0.05, 0.005), Normal(0.0, 0.2), Normal(0.04, 0.004), Normal(0.0, 0.1)]),
         ("h_l", Uniform(0.01, 0.03)),
         ("MSI", Uniform(0.01, 0.025)),
         ("grid_clamping", Normal(cfg.clamp_mu, cfg.clamp_sigma)),
         ("C_creep", Normal(1.0, 0.3)),
         ("C_growth", Normal(1.0, 0.3))],
        constants={"inlet_temperature": 1.0, "grid_axial_resistance": 1.0, "fast_flux": 1.0},
    )


class Analog:
    """Exact codes, optional GP surrogates and problem factories for the analog."""

    # training boxes (lo, hi) per input coordinate, sized to the inputs reached
    # by cycles at sampled parameters with the default spreads
    HYD_BOX = [(-4.0, 4.0)] * 3 + [(-0.2, 0.2), (0.01, 0.03)]
    MECH_BOX = [(-1.0, 1.0), (-0.3, 0.3), (-0.2, 0.2), (0.0, 2.2), (0.6, 1.4), (0.01, 0.025), (0.0, 2.2)]
    # both codes are smooth over their boxes, so long lengthscales fit best
    LENGTHSCALE_FRACTION = 2.0

    def __init__(self, cfg=AnalogConfig()):
        self.cfg = cfg
        self.basis = ModalBasis.build(cfg.grids, 3)
        self.positions = (np.arange(cfg.assemblies) + 0.5) / cfg.assemblies
        self.phi = np.sin(np.pi * self.basis.levels)
        self.spec = analog_input_spec(cfg)
        self.hyd_models = None
        self.mech_models = None

    # -- exact codes ---------------------------------------------------------

    def hydraulic_exact(self, x, theta=None):
        cfg = self.cfg
        X = np.asarray(x, dtype=float).reshape(cfg.assemblies, 5)
        u, w, hl = X[:, :3], X[:, 3:4], X[:, 4:5]
        drive = cfg.alpha * w * self.phi[None, :] - cfg.gamma * (u @ self.basis.M.T)
        return (cfg.F_max * np.tanh(hl / cfg.h_ref * drive)).reshape(-1)

    def mechanical_exact(self, x, theta=None):
        cfg = self.cfg
        X = np.asarray(x, dtype=float).reshape(cfg.assemblies, 7)
        f = X[:, :3]
        creep, clamp, msi, growth = X[:, 3:4], X[:, 4:5], X[:, 5:6], X[:, 6:7]
        kappa = np.asarray(cfg.kappa)[None, :]
        g = np.asarray(cfg.growth_gain)[None, :]
        out = kappa * (1.0 + 0.3 * creep) * (1.0 - 10.0 * msi) * np.tanh(f) / clamp + g * growth
        return out.reshape(-1)

    # -- surrogates ----------------------------------------------------------

    def _train(self, box, fn, width, rng):
        b = np.asarray(box, dtype=float)
        d = lhs(self.cfg.n_train, b, rng)
        X = d.points
        # evaluate one "row" at a time by padding the other rows
        A = self.cfg.assemblies
        Y = []
        for start in range(0, X.shape[0], A):
            chunk = X[start:start + A]
            pad = np.vstack([chunk, np.repeat(chunk[-1:], A - chunk.shape[0], axis=0)])
            Y.append(fn(pad.reshape(-1)).reshape(A, width)[:chunk.shape[0]])
        Y = np.vstack(Y)
        ls = tuple(self.LENGTHSCALE_FRACTION * (b[:, 1] - b[:, 0]))
        models = []
        for k in range(width):
            z = Y[:, k]
            var = float(np.var(z)) or 1.0
            kern = ScalarKernel("Matern52", ls, var)
            models.append(fit(kern, X, z, self.cfg.nugget * var, prior_mean=float(np.mean(z))))
        return models

    def train_surrogates(self):
        """Fit one scalar GP per hydraulic and mechanical output on LHS designs."""
        rng = np.random.default_rng(self.cfg.doe_seed)
        self.hyd_models = self._train(self.HYD_BOX, self.hydraulic_exact, self.cfg.grids, rng)
        self.mech_models = self._train(self.MECH_BOX, self.mechanical_exact, 3, rng)
        return self

    @property
    def models(self):
        return list(self.hyd_models or []) + list(self.mech_models or [])

    # -- problems ------------------------------------------------------------

    def nominal_theta(self):
        return self.spec.as_dict(self.spec.means())

    def initial_state(self, theta):
        return np.column_stack([np.asarray(theta[k], dtype=float) for k in ("C", "S", "W")]).reshape(-1)

    def cross_flow(self, theta):
        V, M_in, L_in, M_out, L_out = np.asarray(theta["BC"], dtype=float)
        v_in = evaluate_parabola(parabola_from_inputs(V, M_in, L_in), self.positions)
        v_out = evaluate_parabola(parabola_from_inputs(V, M_out, L_out), self.positions)
        return v_in - v_out

    def solvers(self, mode):
        A = self.cfg.assemblies
        if mode == "exact":
            return (SolverBox(self.hydraulic_exact, 5 * A, self.cfg.grids * A, "exact-code", "hydraulic"),
                    SolverBox(self.mechanical_exact, 7 * A, 3 * A, "exact-code", "mechanical"))
        if mode == "gp-mean":
            if self.hyd_models is None:
                raise ConfigurationError("surrogates are not trained; call train_surrogates() first")
            return (SurrogateSolver(self.hyd_models, rows=A, name="hydraulic-gp"),
                    SurrogateSolver(self.mech_models, rows=A, name="mechanical-gp"))
        raise ConfigurationError(f"unknown mode {mode!r}")

    def problem(self, t, carried, theta, mode="gp-mean"):
        """Coupling problem of step ``t`` starting from the carried deformation."""
        cfg = self.cfg
        A = cfg.assemblies
        tau = (t + 1) / cfg.steps
        c0 = np.asarray(carried, dtype=float).reshape(A, 3)
        w = self.cross_flow(theta)
        hl = float(theta["h_l"])
        mech_extra = np.array([float(theta["C_creep"]) * tau, float(theta["grid_clamping"]),
                               float(theta["MSI"]), float(theta["C_growth"]) * tau])
        M = self.basis.M

        def gamma1(u, th=None):
            return np.column_stack([u.reshape(A, 3), w, np.full(A, hl)]).reshape(-1)

        def gamma12(F, th=None):
            f = F.reshape(A, cfg.grids) @ M
            return np.column_stack([f, np.tile(mech_extra, (A, 1))]).reshape(-1)

        def gamma2(delta, th=None):
            return c0.reshape(-1) + delta

        return CouplingProblem(self.solvers(mode), c0.reshape(-1), (gamma1, gamma12, gamma2),
                               tol=cfg.tol, max_iter=cfg.max_iter, theta=theta, name=f"analog-step{t}")

    def estimate_rho(self, theta, n_probe=6, scale=1.0, seed=0, mode="exact"):
        """Contraction estimate of the first step at random states around the initial one."""
        rng = np.random.default_rng(seed)
        u0 = self.initial_state(theta)
        probes = u0 + scale * rng.standard_normal((int(n_probe), u0.size))
        return estimate_contraction(self.problem(0, u0, theta, mode), probes)

    def config_dict(self):
        d = asdict(self.cfg)
        d["kappa"], d["growth_gain"] = list(self.cfg.kappa), list(self.cfg.growth_gain)
        return d

    def cycle_factory(self, theta, mode="gp-mean", steps=None):
        """Factory ``(t, carried) -> CouplingProblem`` with a ``steps`` attribute."""
        def factory(t, carried):
            return self.problem(t, carried, theta, mode)

        factory.steps = self.cfg.steps if steps is None else int(steps)
        return factory

    def solve_cycle(self, theta, mode="gp-mean", steps=None):
        """Per-step coupled outputs and the cycle record."""
        return multi_step_cycle(self.cycle_factory(theta, mode, steps), self.initial_state(theta))

    def final_deformation(self, theta, mode="gp-mean", steps=None):
        outs, _ = self.solve_cycle(theta, mode, steps)
        return outs[-1]

    def sobol_model(self, mode="gp-mean", steps=1):
        """``theta -> final modal coefficients`` for sensitivity runs."""
        def model(theta):
            return self.final_deformation(theta, mode, steps)
        return model


def build_synthetic_analog(cfg=None, train=True):
    """Analog with trained surrogates (unless ``train`` is False)."""
    a = Analog(cfg or AnalogConfig())
    return a.train_surrogates() if train else a
