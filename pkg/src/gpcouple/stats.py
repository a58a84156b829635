"""Two-sample tests: Welch's t-test and the two-sample Kolmogorov-Smirnov test.

Both are self-contained. The Student-t tail comes from a continued-fraction
evaluation of the regularized incomplete beta function, and the KS p-value
from the asymptotic Kolmogorov distribution.
"""
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DegeneratePosteriorError, InsufficientDataError

_EPS = 1e-15
_TINY = 1e-300
_SERIES_TOL = 1e-10


class DegenerateSampleError(DegeneratePosteriorError):
    """Both samples have zero variance, so the t statistic is undefined."""


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n_a: int
    n_b: int
    df: float = None
    name: str = ""

    def to_dict(self):
        return asdict(self)


# keep pytest from collecting the result type as a test class
TestResult.__test__ = False


def _betacf(a, b, x, max_iter=500):
    # modified Lentz evaluation of the incomplete beta continued fraction
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _TINY else _TINY)
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _TINY else _TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _TINY else _TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    return h


def betainc_reg(a, b, x):
    """Regularized incomplete beta ``I_x(a, b)`` for ``a, b > 0``."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc_reg needs a, b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf2(t, df):
    """Two-sided tail ``P(|T| >= |t|)`` of Student's t with ``df`` degrees of freedom."""
    if not math.isfinite(t):
        return 0.0
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    return min(1.0, max(0.0, betainc_reg(0.5 * df, 0.5, df / (df + t * t))))


def _sample(x, name, minimum):
    a = np.asarray(x, dtype=float).ravel()
    if a.size < minimum:
        raise InsufficientDataError(f"sample {name} needs at least {minimum} values, got {a.size}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"sample {name} has non-finite values")
    return a


def welch_t(a, b, var_floor=0.0):
    """Welch's unequal-variance t-test, two-sided.

    Parameters
    ----------
    a, b : array_like
        Samples of size at least 2.
    var_floor : float
        Lower bound applied to each sample variance. With the default 0, two
        constant samples raise :class:`DegenerateSampleError`.
    """
    a = _sample(a, "a", 2)
    b = _sample(b, "b", 2)
    na, nb = a.size, b.size
    va = max(float(np.var(a, ddof=1)), var_floor)
    vb = max(float(np.var(b, ddof=1)), var_floor)
    if va == 0.0 and vb == 0.0:
        raise DegenerateSampleError("both samples have zero variance")
    qa, qb = va / na, vb / nb
    diff = float(np.mean(a) - np.mean(b))
    t = diff / math.sqrt(qa + qb)
    df = (qa + qb) ** 2 / (qa * qa / (na - 1) + qb * qb / (nb - 1))
    return TestResult(t, student_t_sf2(t, df), na, nb, df, "welch")


def kolmogorov_sf(lam):
    """Asymptotic Kolmogorov tail ``P(K > lam)``.

    Uses ``2 sum (-1)^(k-1) exp(-2 k^2 lam^2)`` for ``lam >= 1``. Below that
    the alternating series converges slowly, so the complementary theta
    series ``1 - sqrt(2 pi)/lam sum exp(-(2k-1)^2 pi^2 / (8 lam^2))`` is used.
    Both are truncated once a term falls below 1e-10.
    """
    if lam <= 0.0:
        return 1.0
    if lam < 1.0:
        s, k = 0.0, 1
        while True:
            term = math.exp(-((2 * k - 1) ** 2) * math.pi ** 2 / (8.0 * lam * lam))
            s += term
            if term < _SERIES_TOL:
                break
            k += 1
        return min(1.0, max(0.0, 1.0 - math.sqrt(2.0 * math.pi) / lam * s))
    s, k = 0.0, 1
    while True:
        term = math.exp(-2.0 * k * k * lam * lam)
        s += term if k % 2 else -term
        if term < _SERIES_TOL:
            break
        k += 1
    return min(1.0, max(0.0, 2.0 * s))


def ks_statistic(a, b):
    """``sup |F_a - F_b|`` over the pooled sample; ties step both ECDFs together."""
    a = np.sort(_sample(a, "a", 1))
    b = np.sort(_sample(b, "b", 1))
    pooled = np.concatenate([a, b])
    Fa = np.searchsorted(a, pooled, side="right") / a.size
    Fb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(Fa - Fb)))


def ks_two_sample(a, b):
    """Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.

    The p-value is ``kolmogorov_sf(sqrt(n_e) D)`` with effective size
    ``n_e = n_a n_b / (n_a + n_b)``.
    """
    a = _sample(a, "a", 1)
    b = _sample(b, "b", 1)
    D = ks_statistic(a, b)
    ne = a.size * b.size / (a.size + b.size)
    return TestResult(D, kolmogorov_sf(math.sqrt(ne) * D), a.size, b.size, None, "ks")
