"""Multi-output Gaussian process conditioning.

A :class:`GpModel` stores the design, the observations and a Cholesky factor
of ``K_XX + nugget * I``. Posterior queries follow the standard formulas

.. math::
    \\bar\\mu(x) = \\mu(x) + K_{xX} (K_{XX} + \\sigma^2 I)^{-1} (Z - \\mu_X)

.. math::
    \\bar\\kappa(x, x') = \\kappa(x, x') - K_{xX} (K_{XX} + \\sigma^2 I)^{-1} K_{Xx'}

with outputs stacked point-major (``D`` consecutive entries per point).
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConfigurationError, DegeneratePosteriorError, DomainError, SingularDesignError
from .kernels import LmcKernel, ScalarKernel, as_points

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
JITTER_START = 1e-12
JITTER_GROWTH = 10.0
JITTER_RETRIES = 6
# Posterior variances below this fraction of the prior variance are treated as
# exactly zero when sampling (pinned to the mean).
PIN_RELATIVE = 1e-12
REPEAT_DISTANCE = 1e-12
PSD_ROUNDOFF = 1e-10


def psd_sqrt(A, prior_scale):
    """Square root ``F`` with ``F F^T = A`` for a numerically singular PSD matrix.

    Negative eigenvalues down to ``-1e-10 * prior_scale`` are round-off and
    clipped to zero.

    Raises
    ------
    DegeneratePosteriorError
        An eigenvalue is more negative than the round-off allowance.
    """
    w, V = np.linalg.eigh(0.5 * (A + A.T))
    if w.size and w.min() < -PSD_ROUNDOFF * prior_scale:
        raise DegeneratePosteriorError(f"posterior covariance has eigenvalue {w.min():.3g}")
    return V * np.sqrt(np.clip(w, 0.0, None))


def jittered_cholesky(A, error=SingularDesignError, what="matrix"):
    """Lower Cholesky factor of ``A``, escalating a diagonal jitter on failure.

    The first attempt uses ``A`` as is. Retries add ``1e-12 * tr(A) / n``,
    multiplied by 10 each time, at most 6 times.

    Returns
    -------
    L : ndarray
    jitter : float
        Diagonal term that was finally added (0.0 when none was needed).
    """
    A = 0.5 * (A + A.T)
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    scale = np.trace(A) / n
    if not np.isfinite(scale):
        raise error(f"{what} has non-finite entries")
    base = JITTER_START * (scale if scale > 0 else 1.0)
    jitter = 0.0
    for attempt in range(JITTER_RETRIES + 1):
        try:
            L = linalg.cholesky(A + jitter * np.eye(n), lower=True, check_finite=False)
            if np.all(np.isfinite(L)):
                if jitter > 0:
                    log.debug("%s factorized with jitter %.3g", what, jitter)
                return L, jitter
        except linalg.LinAlgError:
            pass
        jitter = base * JITTER_GROWTH ** attempt
    raise error(f"{what} is not positive definite after {JITTER_RETRIES} jitter escalations")


def _duplicate_pairs(X, tol):
    pairs = []
    for i in range(len(X)):
        d = np.linalg.norm(X[i + 1:] - X[i], axis=1)
        pairs.extend((i, i + 1 + j) for j in np.flatnonzero(d <= tol))
    return pairs


def _as_kernel(kernel):
    if isinstance(kernel, ScalarKernel):
        return LmcKernel.single(kernel)
    if isinstance(kernel, LmcKernel):
        return kernel
    raise ConfigurationError(f"unsupported kernel type {type(kernel).__name__}")


@dataclass(frozen=True, eq=False)
class GpModel:
    """Trained multi-output GP. Build it with :func:`fit`."""

    kernel: LmcKernel
    X: np.ndarray
    Z: np.ndarray
    nugget: float
    prior_mean: object
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = 0.0
    _prior_const: object = field(default=None, repr=False)

    @property
    def output_dim(self):
        return self.kernel.output_dim

    @property
    def input_dim(self):
        return self.X.shape[1]

    @property
    def n(self):
        return self.X.shape[0]

    def _points(self, x):
        return as_points(x, self.input_dim)

    def prior_mean_at(self, x):
        """Prior mean at points, shape ``(m, D)``."""
        x = self._points(x)
        if callable(self.prior_mean):
            mu = np.asarray(self.prior_mean(x), dtype=float).reshape(x.shape[0], self.output_dim)
        else:
            mu = np.broadcast_to(self._prior_const, (x.shape[0], self.output_dim)).copy()
        return mu

    def cross_solve(self, x):
        """``L^{-1} K_{Xx}``, shape ``(n D, m D)``."""
        if self.n == 0:
            return np.zeros((0, self._points(x).shape[0] * self.output_dim))
        Kx = self.kernel.cross(self.X, self._points(x))
        return linalg.solve_triangular(self.chol, Kx, lower=True, check_finite=False)

    def mean(self, x):
        """Posterior mean at points, shape ``(m, D)``."""
        x = self._points(x)
        mu = self.prior_mean_at(x)
        if self.n == 0:
            return mu
        Kx = self.kernel.cross(x, self.X)
        return mu + (Kx @ self.alpha).reshape(x.shape[0], self.output_dim)

    def cov(self, x, x2=None):
        """Posterior block covariance ``(m D, m2 D)``."""
        x = self._points(x)
        same = x2 is None
        x2 = x if same else self._points(x2)
        prior = self.kernel.cross(x, x2)
        if self.n == 0:
            return prior
        V = self.cross_solve(x)
        V2 = V if same else self.cross_solve(x2)
        return prior - V.T @ V2

    def var(self, x):
        """Posterior marginal variances, shape ``(m, D)``."""
        x = self._points(x)
        D = self.output_dim
        prior = self.kernel.prior_diag(x.shape[0]).reshape(x.shape[0], D)
        if self.n == 0:
            return prior
        V = self.cross_solve(x)
        return prior - np.sum(V * V, axis=0).reshape(x.shape[0], D)

    def to_dict(self):
        if callable(self.prior_mean):
            raise ConfigurationError("models with a callable prior mean cannot be serialized")
        return {
            "format": "gpcouple.GpModel",
            "version": FORMAT_VERSION,
            "kernel": self.kernel.to_dict(),
            "X": self.X.tolist(),
            "Z": self.Z.tolist(),
            "nugget": self.nugget,
            "prior_mean": np.asarray(self._prior_const).tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "gpcouple.GpModel" or d.get("version") != FORMAT_VERSION:
            raise ConfigurationError("not a serialized GpModel of a supported version")
        kernel = LmcKernel.from_dict(d["kernel"])
        X = np.asarray(d["X"], dtype=float).reshape(-1, np.asarray(d["X"]).shape[-1] if len(d["X"]) else 1)
        return fit(kernel, X, np.asarray(d["Z"], dtype=float), d["nugget"], d["prior_mean"])


def fit(kernel, X, Z, nugget=0.0, prior_mean=0.0):
    """Condition a GP prior on observations.

    Parameters
    ----------
    kernel : ScalarKernel or LmcKernel
    X : array_like, shape (n, d)
        Design points; ``n = 0`` gives the prior model.
    Z : array_like, shape (n, D) or (n D,)
        Observations, point-major.
    nugget : float
        Noise variance added to the diagonal.
    prior_mean : float, array_like of shape (D,), or callable
        Constant prior mean or a function mapping ``(m, d)`` points to ``(m, D)``.

    Raises
    ------
    SingularDesignError
        Duplicate points with zero nugget, or a Gram matrix that stays
        indefinite after jitter escalation.
    """
    kernel = _as_kernel(kernel)
    D = kernel.output_dim
    X = np.asarray(X, dtype=float)
    if X.size == 0:
        X = X.reshape(0, X.shape[-1] if X.ndim == 2 else 1)
    else:
        X = as_points(X)
    n = X.shape[0]
    Z = np.asarray(Z, dtype=float).reshape(-1)
    if Z.size != n * D:
        raise ConfigurationError(f"expected {n * D} observations for n={n}, D={D}; got {Z.size}")
    if not np.all(np.isfinite(Z)):
        raise DomainError("non-finite observations")
    if nugget < 0 or not np.isfinite(nugget):
        raise ConfigurationError(f"nugget must be nonnegative, got {nugget}")
    const = None
    if not callable(prior_mean):
        const = np.broadcast_to(np.asarray(prior_mean, dtype=float), (D,)).copy()

    if n and nugget == 0.0:
        scale = max(1.0, float(np.abs(X).max()))
        pairs = _duplicate_pairs(X, 1e-12 * scale)
        if pairs:
            raise SingularDesignError(
                f"duplicate design points {pairs} make the noise-free Gram matrix singular", pairs)

    K = kernel.cross(X) + nugget * np.eye(n * D)
    try:
        L, jitter = jittered_cholesky(K, SingularDesignError, "Gram matrix")
    except SingularDesignError as exc:
        pairs = _duplicate_pairs(X, 1e-6 * max(1.0, float(np.abs(X).max())))
        raise SingularDesignError(f"{exc}; near-duplicate points: {pairs}", pairs) from None

    model = GpModel(kernel, X, Z.reshape(n, D), float(nugget), prior_mean, L, np.zeros(0), jitter, const)
    resid = Z - model.prior_mean_at(X).reshape(-1) if n else Z
    alpha = linalg.cho_solve((L, True), resid, check_finite=False) if n else np.zeros(0)
    object.__setattr__(model, "alpha", alpha)
    return model


def batch_mean(models, x):
    """Posterior means of several models at the same points.

    Models sharing a design array and latent correlation shapes reuse one
    cross-correlation evaluation. Returns a list of ``(m, D_k)`` arrays.
    """
    cache = {}
    out = []
    for model in models:
        pts = model._points(x)
        mu = model.prior_mean_at(pts)
        if model.n == 0:
            out.append(mu)
            continue
        acc = np.zeros((pts.shape[0], model.output_dim))
        A = model.alpha.reshape(model.n, model.output_dim)
        for k, B in zip(model.kernel.latent_kernels, model.kernel.coregionalization):
            key = (id(model.X), k.family, k.lengthscale)
            if key not in cache:
                cache[key] = k.profile(k._scaled_distance(pts, model.X))
            acc += k.variance * cache[key] @ A @ B.T
        out.append(mu + acc)
    return out


def posterior_mean(model, x):
    """Posterior mean ``D``-vector at a single point."""
    return model.mean(np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1))[0]


def posterior_cov(model, x, x2):
    """Posterior ``D x D`` covariance between two single points."""
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1)
    x2 = np.atleast_1d(np.asarray(x2, dtype=float)).reshape(1, -1)
    C = model.cov(x, x2)
    if np.array_equal(x, x2):
        C = 0.5 * (C + C.T)
    return C


class PosteriorSampler:
    """Joint posterior law at a fixed point set, factorized once.

    Coordinates whose posterior variance is below ``1e-12`` times their prior
    variance are pinned to the mean; they are uncorrelated with everything
    else up to round-off.
    """

    def __init__(self, model, points):
        pts = model._points(points)
        self.points = pts
        self.D = model.output_dim
        self.mean = model.mean(pts)
        C = model.cov(pts)
        C = 0.5 * (C + C.T)
        prior_diag = model.kernel.prior_diag(pts.shape[0])
        self.free = np.flatnonzero(np.diag(C) > PIN_RELATIVE * prior_diag)
        self.method = "cholesky"
        if self.free.size:
            Cf = C[np.ix_(self.free, self.free)]
            try:
                self.factor, self.jitter = jittered_cholesky(Cf, DegeneratePosteriorError, "posterior covariance")
            except DegeneratePosteriorError:
                # near-duplicate points: factor the numerically singular matrix directly
                self.factor = psd_sqrt(Cf, float(prior_diag.max()))
                self.jitter, self.method = 0.0, "eigh"
        else:
            self.factor, self.jitter = np.zeros((0, 0)), 0.0
        self.cov = C

    def draw(self, rng, size=None):
        """One draw ``(M, D)`` or ``size`` draws ``(size, M, D)``."""
        M = self.points.shape[0]
        k = 1 if size is None else int(size)
        out = np.repeat(self.mean.reshape(1, -1), k, axis=0)
        if self.free.size:
            eps = rng.standard_normal((k, self.free.size))
            out[:, self.free] += eps @ self.factor.T
        out = out.reshape(k, M, self.D)
        return out[0] if size is None else out

    def offsets(self, rng):
        """Draw minus posterior mean, ``(M, D)``."""
        return self.draw(rng) - self.mean


def joint_sample(model, points, rng, size=None):
    """Draw from the joint posterior at ``points``; returns ``(M, D)``."""
    if np.asarray(points).size == 0:
        raise ConfigurationError("joint_sample needs at least one point")
    return PosteriorSampler(model, points).draw(rng, size)


class TrajectoryState:
    """Append-only record of values already sampled along one trajectory.

    The law of the next value is the base posterior further conditioned on
    the recorded ``(location, value)`` pairs. The Cholesky factor of the
    history covariance is extended by one Schur block per query, so each
    step costs ``O(h^2)`` for ``h`` recorded coordinates.

    A coordinate whose variance given the history falls below
    ``PIN_RELATIVE`` times its prior variance is pinned to its conditional
    mean and left out of the factor. This covers both exact interpolation
    at design points and queries that nearly coincide with earlier ones.
    """

    def __init__(self, model):
        self.model = model
        D = model.output_dim
        self._X = np.zeros((0, model.input_dim))
        self._Z = np.zeros(0)
        # factor of the conditioning set: cross-solves, Cholesky factor and
        # whitened residuals of the free history coordinates
        self._V = np.zeros((model.n * D, 0))
        self._Xf = np.zeros((0, model.input_dim))
        self._cols = np.zeros(0, dtype=int)
        self._L = np.zeros((0, 0))
        self._w = np.zeros(0)
        self.repeats = 0
        self.pinned = 0

    @property
    def X_hist(self):
        return self._X.copy()

    @property
    def Z_hist(self):
        return self._Z.reshape(-1, self.model.output_dim).copy()

    def __len__(self):
        return self._X.shape[0]

    def _repeat_index(self, x):
        if not len(self):
            return None
        d = np.linalg.norm(self._X - x, axis=1)
        i = int(np.argmin(d))
        return i if d[i] < REPEAT_DISTANCE else None

    def _post_cov_hist(self, Vn, xn):
        """Base posterior covariance between free history coordinates and new ones."""
        prior = self.model.kernel.cross(self._Xf, xn)[self._cols]
        return prior - self._V.T @ Vn if self.model.n else prior

    def sample(self, x, rng):
        """Draw the value(s) at ``x`` given the history and append them.

        ``x`` may hold several points; they are drawn jointly. Returns an
        array ``(k, D)`` for ``k`` points.
        """
        model = self.model
        pts = model._points(x)
        D = model.output_dim
        out = np.empty((pts.shape[0], D))
        new = []
        for r, p in enumerate(pts):
            i = self._repeat_index(p)
            if i is not None:
                log.debug("trajectory query within %.0e of history point %d; reusing value", REPEAT_DISTANCE, i)
                self.repeats += 1
                out[r] = self._Z[i * D:(i + 1) * D]
            else:
                new.append(r)
        if not new:
            return out
        xn = pts[new]
        k = xn.shape[0] * D
        Vn = model.cross_solve(xn)
        mn = model.mean(xn).reshape(-1)
        Cnn = model.kernel.cross(xn)
        if model.n:
            Cnn = Cnn - Vn.T @ Vn
        if self._L.shape[0]:
            c = linalg.solve_triangular(self._L, self._post_cov_hist(Vn, xn), lower=True, check_finite=False)
            cmean = mn + c.T @ self._w
            S = Cnn - c.T @ c
        else:
            c = np.zeros((0, k))
            cmean, S = mn, Cnn
        S = 0.5 * (S + S.T)
        free = np.diag(S) > PIN_RELATIVE * model.kernel.prior_diag(xn.shape[0])
        vals = cmean.copy()
        fn = np.flatnonzero(free)
        if fn.size:
            Sff = S[np.ix_(fn, fn)]
            Lf, _ = jittered_cholesky(Sff, DegeneratePosteriorError, "trajectory covariance")
            eps = rng.standard_normal(fn.size)
            vals[fn] = cmean[fn] + Lf @ eps
            # extend the factor: [[L, 0], [c_f^T, Lf]] and whitened residual eps
            h = self._L.shape[0]
            L = np.zeros((h + fn.size, h + fn.size))
            L[:h, :h] = self._L
            L[h:, :h] = c[:, fn].T
            L[h:, h:] = Lf
            self._L = L
            self._w = np.concatenate([self._w, eps])
            base = self._Xf.shape[0]
            self._Xf = np.vstack([self._Xf, xn])
            self._cols = np.concatenate([self._cols, base * D + fn])
            self._V = np.hstack([self._V, Vn[:, fn]])
        self.pinned += int(k - fn.size)
        out[new] = vals.reshape(len(new), D)
        self._X = np.vstack([self._X, xn])
        self._Z = np.concatenate([self._Z, vals])
        return out


def trajectory_condition_sample(state, x, rng):
    """Draw ``f(x)`` given the trajectory history; returns ``(value, state)``."""
    vals = state.sample(np.atleast_1d(np.asarray(x, dtype=float)).reshape(1, -1), rng)
    return vals[0], state
