"""Bivariate conditional Poisson (BCP) distribution.

``(Z1, Z2) ~ BCP(lambda1, lambda2, phi)`` means ``Z1 ~ Poisson(lambda1)`` and
``Z2 | Z1 = z1 ~ Poisson(mu2 * exp(phi * z1))`` with
``mu2 = lambda2 * exp(-lambda1 * (e^phi - 1))``, so that ``E[Z2] = lambda2``.
``phi`` controls the sign and strength of the dependence; ``phi = 0`` is
independence.
"""
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import gammaln

from ._backend import kernels
from .exceptions import DomainError, NumericalWarning

# exp() overflows above this argument in double precision.
_EXP_MAX = 709.0


@dataclass(frozen=True)
class BcpParams:
    """Parameters of a BCP distribution.

    Attributes
    ----------
    lambda1 : float
        Mean of ``Z1``; must be positive.
    lambda2 : float
        Marginal mean of ``Z2``; must be positive.
    phi : float
        Dependence parameter, any real value.
    """

    lambda1: float
    lambda2: float
    phi: float

    def __post_init__(self):
        for name in ("lambda1", "lambda2"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be positive and finite, got {value!r}")
        if not np.isfinite(self.phi):
            raise DomainError(f"phi must be finite, got {self.phi!r}")


def _log_mu2(p):
    return math.log(p.lambda2) - p.lambda1 * math.expm1(p.phi)


def mu2(p: BcpParams) -> float:
    """Baseline conditional mean of ``Z2`` given ``Z1 = 0``."""
    expo = -p.lambda1 * math.expm1(p.phi)
    log_value = math.log(p.lambda2) + expo
    if not (log_value < _EXP_MAX):
        raise DomainError(
            f"mu2 overflows: exponent -lambda1*(e^phi - 1) = {expo!r} "
            f"(log mu2 = {log_value!r})"
        )
    return math.exp(log_value)


_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _stirling_error(n):
    # log(n!) - [(n + 1/2) log n - n + log(2 pi)/2], n >= 1
    out = np.empty_like(n)
    small = n < 16.0
    ns = n[small]
    out[small] = gammaln(ns + 1.0) - (ns + 0.5) * np.log(ns) + ns - _HALF_LOG_2PI
    nl = n[~small]
    inv2 = 1.0 / (nl * nl)
    out[~small] = (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0))) / nl
    return out


def _bd0(k, m):
    # k log(k/m) + m - k without cancellation (Loader's saddle-point deviance)
    out = k * (np.log(k) - np.log(m)) + m - k
    close = np.abs(k - m) < 0.1 * (k + m)
    if np.any(close):
        kc, mc = k[close], m[close]
        v = (kc - mc) / (kc + mc)
        s = (kc - mc) * v
        ej = 2.0 * kc * v
        v2 = v * v
        for j in range(1, 40):
            ej = ej * v2
            s1 = s + ej / (2 * j + 1)
            if np.all(s1 == s):
                break
            s = s1
        out[close] = s
    return out


def _log_poisson(k, log_mean, mean):
    """Accurate ``log P(Poisson(mean) = k)`` for arrays of counts."""
    k, log_mean, mean = np.broadcast_arrays(np.asarray(k, dtype=np.float64),
                                            np.asarray(log_mean, dtype=np.float64),
                                            np.asarray(mean, dtype=np.float64))
    out = np.empty(k.shape)
    zero = k == 0
    out[zero] = -mean[zero]
    pos = ~zero
    kp, mp = k[pos], mean[pos]
    direct = kp * log_mean[pos] - mp - gammaln(kp + 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        stable = -_stirling_error(kp) - _bd0(kp, mp) - _HALF_LOG_2PI - 0.5 * np.log(kp)
    out[pos] = np.where((kp > 30.0) & (mp > 0.0), stable, direct)
    return out


def log_pmf(x, y, p: BcpParams):
    """Log joint probability ``log P(Z1 = x, Z2 = y)``.

    ``x`` and ``y`` may be integers or integer arrays (broadcast together).
    When the term ``lambda2 * exp(-lambda1 (e^phi - 1) + phi x)`` overflows
    the probability is zero and ``-inf`` is returned with a
    :class:`NumericalWarning`.
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if np.any(x < 0) or np.any(y < 0):
        raise DomainError("counts must be non-negative")
    xf = x.astype(np.float64)
    yf = y.astype(np.float64)
    expo = _log_mu2(p) + p.phi * xf
    saturated = expo >= _EXP_MAX
    with np.errstate(over="ignore"):
        cond_mean = np.exp(np.minimum(expo, _EXP_MAX))
    out = (_log_poisson(xf, math.log(p.lambda1), p.lambda1)
           + _log_poisson(yf, np.minimum(expo, _EXP_MAX), cond_mean))
    if np.any(saturated):
        warnings.warn("conditional mean overflow; pmf saturated to 0", NumericalWarning,
                      stacklevel=2)
        out = np.where(saturated, -np.inf, out)
    # A probability cannot exceed one; only rounding may push this above 0.
    assert np.all(out <= 1e-9), "log_pmf returned a positive value"
    out = np.minimum(out, 0.0)
    return float(out) if out.ndim == 0 else out


def pmf(x, y, p: BcpParams):
    """Joint probability ``P(Z1 = x, Z2 = y)``."""
    return np.exp(log_pmf(x, y, p))


def pmf_grid(p: BcpParams, size1: int, size2: int) -> np.ndarray:
    """Joint pmf on ``{0..size1-1} x {0..size2-1}``; rows index ``Z1``."""
    x = np.arange(size1)[:, None]
    y = np.arange(size2)[None, :]
    return np.exp(log_pmf(x, y, p))


def sample(p: BcpParams, rng) -> tuple:
    """Draw one pair ``(z1, z2)``; deterministic given the generator state."""
    z = sample_many(p, 1, rng)
    return int(z[0, 0]), int(z[0, 1])


def sample_many(p: BcpParams, size: int, rng) -> np.ndarray:
    """Draw ``size`` independent pairs as an ``(size, 2)`` int64 array.

    ``rng`` is a ``numpy.random.Generator`` (or a seed for one).
    """
    rng = np.random.default_rng(rng)
    stream = kernels.UniformStream(rng)
    return kernels.sample_bcp(float(p.lambda1), float(p.lambda2), float(p.phi), int(size),
                              stream)


def covariance(p: BcpParams) -> float:
    """``cov(Z1, Z2) = lambda1 lambda2 (e^phi - 1)``."""
    return p.lambda1 * p.lambda2 * math.expm1(p.phi)


def variance_z2(p: BcpParams) -> float:
    """``Var(Z2) = lambda2 + lambda2^2 (exp(lambda1 (e^phi - 1)^2) - 1)``."""
    inner = p.lambda1 * math.expm1(p.phi) ** 2
    if inner >= _EXP_MAX:
        warnings.warn("Var(Z2) overflows", NumericalWarning, stacklevel=2)
        return math.inf
    value = p.lambda2 + p.lambda2 ** 2 * math.expm1(inner)
    if not math.isfinite(value):
        warnings.warn("Var(Z2) overflows", NumericalWarning, stacklevel=2)
    return value


def _correlation(lambda1, lambda2, phi):
    em1 = np.expm1(phi)
    inner = lambda1 * em1 ** 2
    with np.errstate(over="ignore"):
        denom = 1.0 + lambda2 * np.expm1(inner)
    return em1 * np.sqrt(lambda1 * lambda2 / denom)


def correlation(p: BcpParams) -> float:
    """Pearson correlation of ``Z1`` and ``Z2``; same sign as ``phi``.

    Returns 0 with a :class:`NumericalWarning` when the inner exponential
    overflows (the correlation vanishes as ``|phi|`` grows).
    """
    if p.phi == 0.0:
        return 0.0
    inner = p.lambda1 * math.expm1(p.phi) ** 2
    if inner >= _EXP_MAX:
        warnings.warn("correlation underflows to 0", NumericalWarning, stacklevel=2)
        return 0.0
    return float(_correlation(p.lambda1, p.lambda2, p.phi))


def correlation_path(lambda1, lambda2, phi) -> np.ndarray:
    """Vectorised correlation over arrays of means with a common ``phi``."""
    lambda1 = np.asarray(lambda1, dtype=np.float64)
    lambda2 = np.asarray(lambda2, dtype=np.float64)
    if phi == 0.0:
        return np.zeros(np.broadcast(lambda1, lambda2).shape)
    return _correlation(lambda1, lambda2, phi)


_INV_E = math.exp(-1.0)


def lambert_w(branch: int, x: float) -> float:
    """Real Lambert W function on branch 0 or -1 by Halley iteration.

    Parameters
    ----------
    branch : {0, -1}
    x : float
        Branch 0 needs ``x >= -1/e``; branch -1 needs ``-1/e <= x < 0``.

    Returns
    -------
    float
        ``w`` with ``w * exp(w) = x``.
    """
    x = float(x)
    if branch not in (0, -1):
        raise DomainError(f"unsupported branch {branch!r}")
    if not math.isfinite(x) or x < -_INV_E - 4 * np.finfo(float).eps:
        raise DomainError(f"x={x!r} outside the real domain of W_{branch}")
    if branch == -1 and x >= 0.0:
        raise DomainError(f"W_-1 requires -1/e <= x < 0, got {x!r}")
    if x == 0.0:
        return 0.0
    # Distance from the branch point, clamped against rounding below -1/e.
    q = max(2.0 * (math.e * x + 1.0), 0.0)
    if branch == 0:
        if x < -0.25:
            r = math.sqrt(q)
            w = -1.0 + r - r * r / 3.0 + 11.0 / 72.0 * r ** 3
        elif x < 3.0:
            w = math.log1p(x)
        else:
            l1 = math.log(x)
            l2 = math.log(l1)
            w = l1 - l2 + l2 / l1
    else:
        if x < -0.25:
            r = -math.sqrt(q)
            w = -1.0 + r - r * r / 3.0 + 11.0 / 72.0 * r ** 3
        else:
            l1 = math.log(-x)
            l2 = math.log(-l1)
            w = l1 - l2 + l2 / l1
    if q == 0.0:
        return -1.0
    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= dw
        if abs(dw) <= 4 * np.finfo(float).eps * (1.0 + abs(w)):
            break
    return w


class StationaryPoint(NamedTuple):
    phi: float
    corr: float
    branch: int
    kind: str  # "max" or "min"


@dataclass(frozen=True)
class CorrelationExtrema:
    """Stationary points of the correlation as a function of ``phi``.

    Iterates over :class:`StationaryPoint` items.  ``explanation`` records
    roots that were discarded and why.
    """

    points: tuple
    explanation: str

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, i):
        return self.points[i]


def correlation_extrema(lambda1: float, lambda2: float) -> CorrelationExtrema:
    """Locate the stationary points of ``corr(phi)`` for fixed means.

    Setting the derivative to zero gives ``z e^z = e^{-1}(1/lambda2 - 1)``
    with ``z = lambda1 (e^phi - 1)^2 - 1``; ``z`` comes from W_0, plus W_-1
    when ``lambda2 > 1``.  Each admissible ``z`` yields up to two values of
    ``phi``, one per sign of ``e^phi - 1``.
    """
    if not (lambda1 > 0 and lambda2 > 0):
        raise DomainError("lambda1 and lambda2 must be positive")
    arg = _INV_E * (1.0 / lambda2 - 1.0)
    branches = [0] + ([-1] if lambda2 > 1.0 else [])
    points = []
    notes = []
    for k in branches:
        z = lambert_w(k, arg)
        s = (z + 1.0) / lambda1
        if s < 0.0:
            notes.append(f"W_{k} root z={z:.6g} gives (e^phi-1)^2 < 0: no real phi")
            continue
        r = math.sqrt(s)
        for sign in (1.0, -1.0):
            u = sign * r
            if 1.0 + u <= 0.0:
                notes.append(
                    f"W_{k} root z={z:.6g}: e^phi - 1 = {u:.6g} has no real phi"
                )
                continue
            if u == 0.0 and sign < 0:
                continue
            phi = math.log1p(u)
            c = float(_correlation(lambda1, lambda2, phi))
            points.append(StationaryPoint(phi, c, k, "max" if c > 0 else "min"))
    points.sort(key=lambda sp: sp.phi)
    explanation = "; ".join(notes) if notes else "all roots admissible"
    if not points:
        explanation = "no real stationary point: " + explanation
    return CorrelationExtrema(tuple(points), explanation)


def correlation_limit_negative(lambda1: float, lambda2: float) -> float:
    """Limit of ``corr(phi)`` as ``phi -> -inf``."""
    return -math.sqrt(lambda1 * lambda2 / (1.0 + lambda2 * math.expm1(lambda1)))


def correlation_range(lambda1: float, lambda2: float) -> tuple:
    """Infimum and supremum of ``corr(phi)`` over real ``phi``.

    The supremum is always attained at a stationary point.  The infimum is
    either a stationary point or, when ``e^phi - 1`` cannot reach the
    negative root, the limit as ``phi -> -inf`` (not attained).
    """
    ext = correlation_extrema(lambda1, lambda2)
    values = [sp.corr for sp in ext]
    hi = max(values + [0.0])
    lo = min(values + [correlation_limit_negative(lambda1, lambda2)])
    return lo, hi


def poisson_mode(mean: float) -> int:
    """Smallest mode of a Poisson distribution.

    For an integer mean both ``mean - 1`` and ``mean`` are modes; the
    smaller one is returned.  Means within 1e-12 (relative) of an integer
    count as integers, matching the tie tolerance of :func:`joint_mode`.
    """
    if not math.isfinite(mean):
        raise DomainError(f"Poisson mode of non-finite mean {mean!r}")
    if mean < 1.0:
        return 0
    r = round(mean)
    if abs(mean - r) <= 1e-12 * mean:
        return int(r - 1)
    return int(math.floor(mean))


def _is_tie(a, b):
    return abs(a - b) <= 1e-12 * max(1.0, abs(a), abs(b))


def joint_mode(p: BcpParams) -> tuple:
    """Integer pair maximising the joint pmf.

    For every ``z1`` in ``[0, ceil(lambda1 + 12 sqrt(lambda1) + 20)]`` the
    best ``z2`` is the Poisson mode of ``mu2 exp(phi z1)``; the best pair
    over the window wins.  Ties (up to 1e-12 relative) go to the
    lexicographically smallest pair.
    """
    upper = math.ceil(p.lambda1 + 12.0 * math.sqrt(p.lambda1) + 20.0)
    z1 = np.arange(upper + 1)
    log_means = _log_mu2(p) + p.phi * z1.astype(np.float64)
    if np.any(log_means >= _EXP_MAX):
        raise DomainError(
            "joint-mode search window exhausts the numeric range "
            f"(conditional log-mean up to {log_means.max():.6g})"
        )
    # modes can exceed int64 far in the window; keep them as Python ints
    z2 = [poisson_mode(math.exp(v)) for v in log_means]
    lp = log_pmf(z1, np.array(z2, dtype=np.float64), p)
    best = int(np.argmax(lp))
    for i in range(best):
        if _is_tie(lp[i], lp[best]):
            best = i
            break
    return int(z1[best]), z2[best]
