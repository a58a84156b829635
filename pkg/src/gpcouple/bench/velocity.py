"""Parabolic boundary velocity profiles and their Monte Carlo spread.

A profile ``v(x) = a x^2 + b x + c`` on ``[0, L]`` is fixed by three inputs:

* its average over ``[0, L]`` equals ``v_bar``;
* its extremum sits at ``x_v = L/2 + L_off``;
* ``v(x_v) - v_bar = M_dev``.

Writing ``v = a (x - x_v)^2 + v_bar + M_dev`` and averaging gives
``a = -M_dev / mean((x - x_v)^2)`` with
``mean((x - x_v)^2) = ((L - x_v)^3 + x_v^3) / (3 L)``.
"""
import csv
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, InsufficientDataError


@dataclass(frozen=True)
class Gaussian:
    mu: float
    sigma: float

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigurationError(f"sigma must be non-negative, got {self.sigma}")

    def sample(self, rng, n):
        return self.mu + self.sigma * rng.standard_normal(n)


@dataclass(frozen=True)
class ParabolaInputs:
    """Distributions of the mean velocity, extremum deviation and lateral offset."""

    v_bar: Gaussian
    M_dev: Gaussian
    L_off: Gaussian
    L: float = 1.0

    def __post_init__(self):
        if not self.L > 0:
            raise ConfigurationError(f"domain length must be positive, got {self.L}")


# Inlet and outlet rows of the boundary-condition table. The domain is the
# normalized row width (L = 1), a choice of this package.
INLET = ParabolaInputs(Gaussian(5.0, 0.05), Gaussian(0.05, 0.005), Gaussian(0.0, 0.2))
OUTLET = ParabolaInputs(Gaussian(5.0, 0.05), Gaussian(0.04, 0.004), Gaussian(0.0, 0.1))


def parabola_from_inputs(v_bar, M_dev, L_off, L=1.0):
    """Coefficients ``(a, b, c)`` of the profile; inputs may be arrays.

    ``M_dev = 0`` gives the flat profile ``a = b = 0, c = v_bar`` whatever
    the offset.
    """
    if not np.all(np.asarray(L) > 0):
        raise ConfigurationError(f"domain length must be positive, got {L}")
    v_bar, M_dev, L_off = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (v_bar, M_dev, L_off)))
    xv = 0.5 * L + L_off
    m2 = ((L - xv) ** 3 + xv ** 3) / (3.0 * L)
    a = np.where(M_dev == 0, 0.0, -M_dev / m2)
    b = -2.0 * a * xv + 0.0
    c = a * xv * xv + v_bar + M_dev
    if a.ndim == 0:
        return float(a), float(b), float(c)
    return a, b, c


def evaluate_parabola(coeffs, x):
    a, b, c = (np.asarray(v, dtype=float) for v in coeffs)
    x = np.asarray(x, dtype=float)
    return a[..., None] * x ** 2 + b[..., None] * x + c[..., None] if a.ndim else a * x ** 2 + b * x + c


@dataclass
class VelocityField:
    x: np.ndarray
    mean: np.ndarray
    variance: np.ndarray
    N: int

    @property
    def se_mean(self):
        return np.sqrt(self.variance / self.N)

    def to_csv(self, path):
        sd = np.sqrt(self.variance)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["z", "mean", "variance", "lo95", "hi95"])
            for row in zip(self.x, self.mean, self.variance, self.mean - 1.959963984540054 * sd,
                           self.mean + 1.959963984540054 * sd):
                w.writerow([f"{v:.17g}" for v in row])


def propagate_velocity_uncertainty(inputs, N, x, rng):
    """Sample mean and unbiased variance of ``v(x)`` over ``N`` input draws."""
    if N < 2:
        raise InsufficientDataError(f"need N >= 2, got {N}")
    x = np.asarray(x, dtype=float).ravel()
    coeffs = parabola_from_inputs(inputs.v_bar.sample(rng, N), inputs.M_dev.sample(rng, N),
                                  inputs.L_off.sample(rng, N), inputs.L)
    v = evaluate_parabola(coeffs, x)
    return VelocityField(x, v.mean(axis=0), v.var(axis=0, ddof=1), N)
