"""Modal representation of axial deformation and measurement-noise propagation.

A deformation measured at ``n_levels`` axial levels is written ``U = M C``,
where the columns of ``M`` are orthonormal C, S and W shapes. Least squares
then reduces to the projection ``C_hat = M^T U``, and white measurement
noise of variance ``sigma^2`` passes unchanged to every coefficient.

The shapes are one, two and three sine half-waves over the normalized height
``[0, 1]``, sampled at the mid-points of ``n_levels`` equal cells and
orthonormalized. This is a modelling choice of this package.
"""
import csv
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, DomainError

MODE_NAMES = ("C", "S", "W")
MEASUREMENT_SIGMA_MM = 0.3
Z95 = 1.959963984540054


def _raw_shapes(z, n_modes):
    z = np.asarray(z, dtype=float).reshape(-1, 1)
    return np.sin(np.pi * np.arange(1, n_modes + 1) * z)


@dataclass(frozen=True, eq=False)
class ModalBasis:
    """Orthonormal axial mode shapes.

    Attributes
    ----------
    levels : (n_levels,) ndarray
        Normalized axial positions of the measurement levels.
    M : (n_levels, n_modes) ndarray
        Orthonormal mode columns.
    sigma : float
        Measurement noise standard deviation, mm.
    """

    levels: np.ndarray
    M: np.ndarray
    R: np.ndarray
    sigma: float = MEASUREMENT_SIGMA_MM

    @classmethod
    def build(cls, n_levels=10, n_modes=3, sigma=MEASUREMENT_SIGMA_MM):
        if n_modes < 1 or n_levels < n_modes:
            raise ConfigurationError(f"need 1 <= n_modes <= n_levels, got {n_modes}, {n_levels}")
        if sigma < 0:
            raise ConfigurationError(f"sigma must be non-negative, got {sigma}")
        levels = (np.arange(n_levels) + 0.5) / n_levels
        Q, R = np.linalg.qr(_raw_shapes(levels, n_modes))
        # fix signs so each mode keeps the orientation of its sine shape
        s = np.sign(np.diag(R))
        s[s == 0] = 1.0
        return cls(levels, Q * s, (R.T * s).T, float(sigma))

    @property
    def n_modes(self):
        return self.M.shape[1]

    def shapes(self, z):
        """Mode values ``u_i(z)`` at arbitrary heights, ``(len(z), n_modes)``.

        Equal to the rows of ``M`` at the measurement levels.
        """
        raw = _raw_shapes(z, self.n_modes)
        return np.linalg.solve(self.R.T, raw.T).T

    def displacement(self, C, z=None):
        C = np.asarray(C, dtype=float)
        return (self.M if z is None else self.shapes(z)) @ C.T


def project_modal(U, basis):
    """Least-squares modal coefficients ``M^T U`` (rows of ``U`` are measurements)."""
    U = np.asarray(U, dtype=float)
    if U.shape[-1] != basis.M.shape[0]:
        raise ConfigurationError(f"expected {basis.M.shape[0]} axial values, got {U.shape[-1]}")
    return U @ basis.M


def noisy_projection_variance(basis, C, n, rng, sigma=None):
    """Sample variance of projected coefficients under white measurement noise."""
    sigma = basis.sigma if sigma is None else sigma
    U = basis.M @ np.asarray(C, dtype=float)
    noisy = U + sigma * rng.standard_normal((int(n), U.size))
    return np.var(project_modal(noisy, basis), axis=0, ddof=1)


@dataclass
class DeformationField:
    z: np.ndarray
    mean: np.ndarray
    variance: np.ndarray

    @property
    def sd(self):
        return np.sqrt(self.variance)

    @property
    def lo95(self):
        return self.mean - Z95 * self.sd

    @property
    def hi95(self):
        return self.mean + Z95 * self.sd

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["z", "mean", "variance", "lo95", "hi95"])
            for row in zip(self.z, self.mean, self.variance, self.lo95, self.hi95):
                w.writerow([f"{v:.17g}" for v in row])


def deformation_variance_field(cov_C, basis, z, mean_C=None):
    """Pointwise variance ``sum_ij u_i(z) u_j(z) Cov(C_i, C_j)`` and Gaussian 95% band.

    Raises
    ------
    DomainError
        ``cov_C`` is not symmetric positive semidefinite.
    """
    cov = np.asarray(cov_C, dtype=float)
    k = basis.n_modes
    if cov.shape != (k, k):
        raise ConfigurationError(f"cov_C must be {k}x{k}, got {cov.shape}")
    scale = max(1.0, float(np.abs(cov).max()))
    if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * scale):
        raise DomainError("cov_C is not symmetric")
    if np.linalg.eigvalsh(0.5 * (cov + cov.T)).min() < -1e-12 * scale:
        raise DomainError("cov_C is not positive semidefinite")
    z = np.asarray(z, dtype=float).ravel()
    u = basis.shapes(z)
    var = np.einsum("zi,ij,zj->z", u, cov, u)
    mean = np.zeros_like(z) if mean_C is None else u @ np.asarray(mean_C, dtype=float)
    return DeformationField(z, mean, np.maximum(var, 0.0))
