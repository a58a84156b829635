"""Latin hypercube designs and fill distances."""
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigurationError, DomainError

_CHUNK = 200_000


def _check_bounds(bounds):
    b = np.asarray(bounds, dtype=float)
    if b.ndim == 1:
        b = b.reshape(1, 2)
    if b.ndim != 2 or b.shape[1] != 2:
        raise ConfigurationError(f"bounds must be a sequence of (lo, hi) pairs, got shape {b.shape}")
    if np.any(b[:, 0] >= b[:, 1]):
        raise ConfigurationError(f"every bound needs lo < hi, got {b.tolist()}")
    return b


@dataclass(frozen=True, eq=False)
class Design:
    """Point set inside a hyper-rectangle."""

    points: np.ndarray
    bounds: np.ndarray

    def __post_init__(self):
        b = _check_bounds(self.bounds)
        p = np.asarray(self.points, dtype=float).reshape(-1, b.shape[0])
        if np.any(p < b[:, 0]) or np.any(p > b[:, 1]):
            raise DomainError("design points outside the bounds")
        object.__setattr__(self, "points", p)
        object.__setattr__(self, "bounds", b)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    def strata_counts(self):
        """Points per stratum ``[lo + k w, lo + (k+1) w)`` for each dimension, ``(d, n)``."""
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        k = np.floor((self.points - lo) / (hi - lo) * self.n).astype(int)
        k = np.clip(k, 0, self.n - 1)
        return np.stack([np.bincount(k[:, j], minlength=self.n) for j in range(self.dim)])

    def to_csv(self, path):
        header = "bounds: " + "; ".join(f"{float(lo)!r} {float(hi)!r}" for lo, hi in self.bounds)
        header += "\n" + ",".join(f"x{j + 1}" for j in range(self.dim))
        np.savetxt(path, self.points, delimiter=",", header=header, fmt="%.17g")

    @classmethod
    def from_csv(cls, path):
        with open(path) as fh:
            first = fh.readline()
        if not first.startswith("# bounds:"):
            raise ConfigurationError(f"{path}: missing bounds header")
        pairs = [tuple(float(v) for v in item.split()) for item in first[len("# bounds:"):].split(";")]
        pts = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        return cls(pts, np.array(pairs))


def lhs(n, bounds, rng):
    """Latin hypercube sample of ``n`` points, uniform within each stratum."""
    if n < 1:
        raise ConfigurationError(f"need n >= 1, got {n}")
    b = _check_bounds(bounds)
    d = b.shape[0]
    u = np.empty((n, d))
    for j in range(d):
        u[:, j] = (rng.permutation(n) + rng.random(n)) / n
    pts = b[:, 0] + u * (b[:, 1] - b[:, 0])
    # guard against rounding onto the upper edge
    pts = np.minimum(pts, np.nextafter(b[:, 1], b[:, 0]))
    return Design(pts, b)


def default_probe_resolution(dim):
    """Probe intervals per dimension: 512 in 1-D, 64 for 2-3 dims, 16 above."""
    if dim == 1:
        return 512
    return 64 if dim <= 3 else 16


def _grid(lo, hi, res):
    axes = [np.linspace(a, b, res + 1) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _max_min_distance(tree, probe):
    best = 0.0
    for start in range(0, probe.shape[0], _CHUNK):
        d, _ = tree.query(probe[start:start + _CHUNK])
        best = max(best, float(d.max()))
    return best


def _unpack(X, bounds):
    if isinstance(X, Design):
        return X.points, X.bounds if bounds is None else _check_bounds(bounds)
    pts = np.asarray(X, dtype=float)
    if bounds is None:
        raise ConfigurationError("bounds are required when X is not a Design")
    b = _check_bounds(bounds)
    return pts.reshape(-1, b.shape[0]), b


def fill_distance(X, bounds=None, probe_resolution=None):
    """Largest distance from the domain to the nearest design point.

    The supremum is taken over a regular probe grid with ``probe_resolution``
    intervals per dimension (grid nodes include the domain corners). The
    result never exceeds the exact fill distance and falls short of it by at
    most half the probe cell diagonal.
    """
    pts, b = _unpack(X, bounds)
    if pts.shape[0] == 0:
        raise DomainError("fill distance of an empty design is undefined")
    res = probe_resolution or default_probe_resolution(b.shape[0])
    if res < 10:
        raise ConfigurationError(f"probe_resolution must be >= 10, got {res}")
    return _max_min_distance(cKDTree(pts), _grid(b[:, 0], b[:, 1], res))


def local_fill_distance(X, x, radius, bounds=None, probe_resolution=None):
    """Fill distance restricted to the ball of ``radius`` around ``x``.

    The probe grid covers the intersection of the ball's bounding box with
    the domain, at ``probe_resolution`` intervals per dimension, and only
    nodes inside the ball are kept (``x`` itself is always probed).
    """
    if radius <= 0:
        raise ConfigurationError(f"radius must be positive, got {radius}")
    pts, b = _unpack(X, bounds)
    if pts.shape[0] == 0:
        raise DomainError("fill distance of an empty design is undefined")
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != b.shape[0] or not np.all(np.isfinite(x)):
        raise DomainError("center must be a finite point of the domain dimension")
    res = probe_resolution or default_probe_resolution(b.shape[0])
    lo = np.maximum(b[:, 0], x - radius)
    hi = np.minimum(b[:, 1], x + radius)
    if np.any(lo > hi):
        raise DomainError("ball does not meet the domain")
    probe = _grid(lo, hi, res)
    probe = probe[np.linalg.norm(probe - x, axis=1) <= radius]
    probe = np.vstack([probe, np.clip(x, b[:, 0], b[:, 1])[None, :]])
    return _max_min_distance(cKDTree(pts), probe)
