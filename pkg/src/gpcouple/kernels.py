"""Scalar covariance functions and matrix-valued LMC kernels.

Points are handled as ``(n, d)`` arrays. A 1-D array of length ``n`` is read
as ``n`` scalar points, and a Python scalar as a single scalar point.

The matrix-valued kernel is a linear model of coregionalization,

.. math::
    \\kappa(x, x') = \\sum_q B_q\\, k_q(x, x'),

and block Gram matrices use the point-major ordering: row ``i * D + l``
holds output ``l`` at point ``x_i``.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigurationError, DomainError

FAMILIES = ("Matern52", "Matern32", "SquaredExponential")

# Sobolev smoothness s = nu + d/2 of the RKHS attached to each family.
_NU = {"Matern52": 2.5, "Matern32": 1.5}


def as_points(x, dim=None):
    """Return ``x`` as a float ``(n, d)`` array, checking finiteness."""
    a = np.asarray(x, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        if dim is not None and dim > 1:
            if a.size != dim:
                raise ConfigurationError(f"expected a point of dimension {dim}, got {a.size}")
            a = a.reshape(1, dim)
        else:
            a = a.reshape(-1, 1)
    elif a.ndim != 2:
        raise ConfigurationError(f"points must be at most 2-D, got shape {a.shape}")
    if dim is not None and a.shape[1] != dim:
        raise ConfigurationError(f"expected points of dimension {dim}, got {a.shape[1]}")
    if not np.all(np.isfinite(a)):
        raise DomainError("non-finite input coordinates")
    return a


@dataclass(frozen=True)
class ScalarKernel:
    """Stationary scalar covariance function.

    Parameters
    ----------
    family : str
        One of ``"Matern52"``, ``"Matern32"``, ``"SquaredExponential"``.
    lengthscale : float or sequence of float
        Positive lengthscale, or one lengthscale per input dimension.
    variance : float
        Positive marginal variance, ``k(x, x) = variance``.
    """

    family: str = "Matern52"
    lengthscale: object = 0.25
    variance: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        ls = np.atleast_1d(np.asarray(self.lengthscale, dtype=float))
        if ls.ndim != 1 or ls.size == 0 or not np.all(np.isfinite(ls)) or np.any(ls <= 0):
            raise ConfigurationError(f"lengthscale must be positive, got {self.lengthscale!r}")
        if not np.isfinite(self.variance) or self.variance <= 0:
            raise ConfigurationError(f"variance must be positive, got {self.variance!r}")
        ls_value = float(ls[0]) if ls.size == 1 and np.ndim(self.lengthscale) == 0 else tuple(float(v) for v in ls)
        object.__setattr__(self, "lengthscale", ls_value)
        object.__setattr__(self, "variance", float(self.variance))

    @property
    def smoothness(self):
        """Matérn smoothness ``nu`` (``inf`` for the squared exponential)."""
        return _NU.get(self.family, np.inf)

    def sobolev_order(self, dim):
        """Sobolev order ``s = nu + d/2`` of the RKHS in dimension ``dim``."""
        return self.smoothness + dim / 2.0

    def _scaled_distance(self, x, x2):
        ls = np.atleast_1d(np.asarray(self.lengthscale, dtype=float))
        if ls.size not in (1, x.shape[1]):
            raise ConfigurationError(
                f"kernel has {ls.size} lengthscales but points have dimension {x.shape[1]}")
        return cdist(x / ls, x2 / ls)

    def profile(self, r):
        """Correlation as a function of the scaled distance ``r = |x - x'| / l``."""
        r = np.asarray(r, dtype=float)
        if self.family == "Matern52":
            a = np.sqrt(5.0) * r
            return (1.0 + a + a * a / 3.0) * np.exp(-a)
        if self.family == "Matern32":
            a = np.sqrt(3.0) * r
            return (1.0 + a) * np.exp(-a)
        return np.exp(-0.5 * r * r)

    def __call__(self, x, x2=None):
        """Cross-covariance matrix between two point sets."""
        x = as_points(x)
        x2 = x if x2 is None else as_points(x2, x.shape[1])
        return self.variance * self.profile(self._scaled_distance(x, x2))

    def diag(self, x):
        return np.full(as_points(x).shape[0], self.variance)

    def to_dict(self):
        ls = self.lengthscale
        return {"family": self.family, "lengthscale": list(ls) if isinstance(ls, tuple) else ls,
                "variance": self.variance}

    @classmethod
    def from_dict(cls, d):
        return cls(d["family"], d["lengthscale"], d["variance"])


def _single(x):
    return as_points(np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1))


def eval_scalar(k, x, x2):
    """Evaluate the scalar kernel ``k`` at one pair of points."""
    return float(k(_single(x), _single(x2))[0, 0])


@dataclass(frozen=True)
class LmcKernel:
    """Linear model of coregionalization ``sum_q B_q k_q``.

    Parameters
    ----------
    latent_kernels : sequence of ScalarKernel
    coregionalization : sequence of (D, D) array_like
        Symmetric positive semidefinite mixing matrices, one per latent kernel.
    """

    latent_kernels: tuple
    coregionalization: tuple
    _B: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        kernels = tuple(self.latent_kernels)
        mats = [np.atleast_2d(np.asarray(b, dtype=float)) for b in self.coregionalization]
        if len(kernels) == 0 or len(kernels) != len(mats):
            raise ConfigurationError("need one coregionalization matrix per latent kernel (Q >= 1)")
        D = mats[0].shape[0]
        for q, b in enumerate(mats):
            if b.shape != (D, D):
                raise ConfigurationError(f"B_{q} has shape {b.shape}, expected ({D}, {D})")
            if not np.allclose(b, b.T, rtol=0, atol=1e-12 * max(1.0, np.abs(b).max())):
                raise ConfigurationError(f"B_{q} is not symmetric")
            if np.linalg.eigvalsh(b).min() < -1e-10:
                raise ConfigurationError(f"B_{q} is not positive semidefinite")
        object.__setattr__(self, "latent_kernels", kernels)
        object.__setattr__(self, "coregionalization", tuple(mats))
        object.__setattr__(self, "_B", np.stack(mats))

    @property
    def output_dim(self):
        return self._B.shape[1]

    @property
    def Q(self):
        return len(self.latent_kernels)

    @classmethod
    def independent(cls, kernels):
        """Diagonal (independent-output) kernel: ``B_q = e_q e_q^T``."""
        kernels = list(kernels)
        D = len(kernels)
        mats = []
        for q in range(D):
            b = np.zeros((D, D))
            b[q, q] = 1.0
            mats.append(b)
        return cls(tuple(kernels), tuple(mats))

    @classmethod
    def single(cls, kernel):
        """Wrap a scalar kernel as a one-output LMC kernel."""
        return cls((kernel,), (np.ones((1, 1)),))

    def B_sum(self):
        return self._B.sum(axis=0)

    def point_cov(self):
        """``kappa(x, x)``, the same ``D x D`` matrix at every point."""
        return sum(k.variance * b for k, b in zip(self.latent_kernels, self.coregionalization))

    def prior_diag(self, m):
        """Diagonal of the block Gram matrix on ``m`` points."""
        return np.tile(np.diag(self.point_cov()), m)

    def latent_grams(self, x, x2=None):
        """Stack of latent cross-covariances, shape ``(Q, n, m)``."""
        return np.stack([k(x, x2) for k in self.latent_kernels])

    def cross(self, x, x2=None):
        """Block cross-covariance ``(n D, m D)`` in point-major order."""
        x = as_points(x)
        x2 = x if x2 is None else as_points(x2, x.shape[1])
        Kq = self.latent_grams(x, x2)
        n, m, D = x.shape[0], x2.shape[0], self.output_dim
        # entry [(i, l), (j, l')] = sum_q Kq[q, i, j] B[q, l, l']
        blocks = np.einsum("qij,qab->iajb", Kq, self._B)
        return blocks.reshape(n * D, m * D)

    def to_dict(self):
        return {"latent_kernels": [k.to_dict() for k in self.latent_kernels],
                "coregionalization": [b.tolist() for b in self.coregionalization]}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(ScalarKernel.from_dict(k) for k in d["latent_kernels"]),
                   tuple(np.asarray(b) for b in d["coregionalization"]))


def eval_lmc(K, x, x2):
    """Evaluate the ``D x D`` matrix ``kappa(x, x')`` at one pair of points."""
    return K.cross(_single(x), _single(x2))


def gram_block(K, X):
    """Block Gram matrix of ``K`` on the design ``X`` (point-major ordering)."""
    return K.cross(X)


def kronecker_gram(K, X):
    """Output-major form ``sum_q B_q (x) K_q`` of the Gram matrix."""
    Kq = K.latent_grams(as_points(X))
    return sum(np.kron(b, kq) for b, kq in zip(K.coregionalization, Kq))


def point_major_permutation(n, D):
    """Index map from output-major to point-major ordering.

    ``kronecker_gram(K, X)[np.ix_(p, p)]`` equals ``gram_block(K, X)`` for
    ``p = point_major_permutation(n, D)``.
    """
    return np.array([l * n + i for i in range(n) for l in range(D)])
