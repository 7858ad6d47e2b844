"""Pure-Python kernels.

Same algorithms, argument conventions and random-number consumption as the
compiled ``_kernels`` extension; used when the extension is unavailable and
as a cross-check in the test suite.

Parameter vectors have nine entries in the order
``(alpha1, alpha2, beta11, beta12, beta21, beta22, omega1, omega2, phi)``
with a diagonal autoregressive matrix.  Count arrays are ``(n, 2)`` int64.
"""
import math

import numpy as np

from .exceptions import SamplingError

BACKEND = "python"

_BLOCK = 4096
# Poisson means above this cannot be represented reliably as int64 counts.
_MAX_MEAN = 1.0e15


class UniformStream:
    """Buffered U(0, 1) draws from a numpy ``Generator``."""

    def __init__(self, rng, block=_BLOCK):
        self.rng = rng
        self.block = block
        self._buf = []
        self._pos = 0

    def next(self):
        if self._pos >= len(self._buf):
            self._buf = self.rng.random(self.block).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u


def _poisson_inversion(mu, stream):
    u = stream.next()
    p = math.exp(-mu)
    cdf = p
    k = 0
    while u > cdf:
        k += 1
        p *= mu / k
        if p == 0.0:
            break
        cdf += p
    return k


def _poisson_ptrs(mu, stream):
    # Transformed rejection with squeeze (Hormann 1993).
    slam = math.sqrt(mu)
    loglam = math.log(mu)
    b = 0.931 + 2.53 * slam
    a = -0.059 + 0.02483 * b
    invalpha = 1.1239 + 1.1328 / (b - 3.4)
    vr = 0.9277 - 3.6224 / (b - 2.0)
    while True:
        u = stream.next() - 0.5
        v = stream.next()
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + mu + 0.43)
        if us >= 0.07 and v <= vr:
            return int(k)
        if k < 0 or (us < 0.013 and v > us):
            continue
        if (math.log(v) + math.log(invalpha) - math.log(a / (us * us) + b)
                <= -mu + k * loglam - math.lgamma(k + 1.0)):
            return int(k)


def poisson(mu, stream):
    """One Poisson(mu) draw: inversion below 10, transformed rejection above."""
    if mu < 10.0:
        if mu <= 0.0:
            return 0
        return _poisson_inversion(mu, stream)
    return _poisson_ptrs(mu, stream)


def poisson_draws(mu, stream):
    mu = np.ascontiguousarray(mu, dtype=np.float64).ravel()
    out = np.empty(mu.shape[0], dtype=np.int64)
    for i, m in enumerate(mu.tolist()):
        if not (m <= _MAX_MEAN):
            raise SamplingError(f"Poisson mean {m!r} is not representable")
        out[i] = poisson(m, stream)
    return out


def sample_bcp(lam1, lam2, phi, size, stream):
    """``size`` independent BCP(lam1, lam2, phi) pairs as an ``(size, 2)`` array."""
    out = np.empty((size, 2), dtype=np.int64)
    log_mu2 = math.log(lam2) - lam1 * math.expm1(phi)
    for i in range(size):
        z1 = poisson(lam1, stream)
        expo = log_mu2 + phi * z1
        m = math.exp(expo) if expo < 709.0 else math.inf
        if not (m <= _MAX_MEAN):
            raise SamplingError(
                f"conditional mean of Z2 overflows at z1={z1} "
                f"(log-mean {expo:.6g}); parameters unsuitable for simulation"
            )
        out[i, 0] = z1
        out[i, 1] = poisson(m, stream)
    return out


def simulate_path(omega, a, b, phi, total, init1, init2, stream):
    """Run the bivariate recursion for ``total`` steps from lambda = (init1, init2).

    Returns counts ``(total, 2)`` int64 and conditional means ``(total, 2)``.
    """
    w1, w2 = float(omega[0]), float(omega[1])
    a11, a12, a21, a22 = float(a[0, 0]), float(a[0, 1]), float(a[1, 0]), float(a[1, 1])
    b11, b12, b21, b22 = float(b[0, 0]), float(b[0, 1]), float(b[1, 0]), float(b[1, 1])
    em1 = math.expm1(phi)
    y = np.empty((total, 2), dtype=np.int64)
    lam = np.empty((total, 2), dtype=np.float64)
    l1, l2 = float(init1), float(init2)
    z1 = z2 = 0
    for t in range(total):
        if t > 0:
            l1, l2 = (w1 + a11 * l1 + a12 * l2 + b11 * z1 + b12 * z2,
                      w2 + a21 * l1 + a22 * l2 + b21 * z1 + b22 * z2)
        lam[t, 0] = l1
        lam[t, 1] = l2
        if not (l1 <= _MAX_MEAN):
            raise SamplingError(f"conditional mean of Y1 diverged at step {t}")
        z1 = poisson(l1, stream)
        expo = math.log(l2) - l1 * em1 + phi * z1
        m = math.exp(expo) if expo < 709.0 else math.inf
        if not (m <= _MAX_MEAN):
            raise SamplingError(
                f"conditional mean of Y2 overflows at step {t}, z1={z1} "
                f"(log-mean {expo:.6g}); parameters unsuitable for simulation"
            )
        z2 = poisson(m, stream)
        y[t, 0] = z1
        y[t, 1] = z2
    return y, lam


def filter_path(theta, y, init1, init2):
    a1, a2, b11, b12, b21, b22, w1, w2 = (float(v) for v in theta[:8])
    n = y.shape[0]
    lam = np.empty((n, 2), dtype=np.float64)
    l1, l2 = float(init1), float(init2)
    yl = y.tolist()
    lam[0] = (l1, l2)
    for t in range(1, n):
        y1p, y2p = yl[t - 1]
        l1 = w1 + a1 * l1 + b11 * y1p + b12 * y2p
        l2 = w2 + a2 * l2 + b21 * y1p + b22 * y2p
        lam[t, 0] = l1
        lam[t, 1] = l2
    return lam


def _terms(theta, y, init1, init2, want_score):
    a1, a2, b11, b12, b21, b22, w1, w2, phi = (float(v) for v in theta)
    # saturate like C's exp instead of raising
    ephi = math.exp(phi) if phi < 709.0 else math.inf
    em1 = math.expm1(phi) if phi < 709.0 else math.inf
    yl = y.tolist()
    n = len(yl)
    l1, l2 = float(init1), float(init2)
    # d lambda_1 / d(alpha1, beta11, beta12, omega1), same for lambda_2
    da1 = db11 = db12 = dw1 = 0.0
    da2 = db21 = db22 = dw2 = 0.0
    ll = []
    sc = []
    for t in range(1, n):
        y1p, y2p = yl[t - 1]
        if want_score:
            da1 = l1 + a1 * da1
            db11 = y1p + a1 * db11
            db12 = y2p + a1 * db12
            dw1 = 1.0 + a1 * dw1
            da2 = l2 + a2 * da2
            db21 = y1p + a2 * db21
            db22 = y2p + a2 * db22
            dw2 = 1.0 + a2 * dw2
        l1 = w1 + a1 * l1 + b11 * y1p + b12 * y2p
        l2 = w2 + a2 * l2 + b21 * y1p + b22 * y2p
        y1, y2 = yl[t]
        if l1 <= 0.0 or l2 <= 0.0:
            ll.append(-math.inf)
            if want_score:
                sc.append([math.nan] * 9)
            continue
        expo = math.log(l2) - l1 * em1 + phi * y1
        m = math.exp(expo) if expo < 709.0 else math.inf
        ll.append(y1 * math.log(l1) + y2 * math.log(l2)
                  - l1 * (1.0 + y2 * em1) - m + phi * y1 * y2)
        if want_score:
            s1 = y1 / l1 - 1.0 + em1 * (m - y2)
            s2 = y2 / l2 - m / l2
            s3 = -y2 * l1 * ephi - m * (y1 - l1 * ephi) + y1 * y2
            sc.append([s1 * da1, s2 * da2, s1 * db11, s1 * db12,
                       s2 * db21, s2 * db22, s1 * dw1, s2 * dw2, s3])
    return ll, sc


def loglik_terms(theta, y, init1, init2):
    ll, _ = _terms(theta, y, init1, init2, False)
    return np.asarray(ll, dtype=np.float64)


def loglik(theta, y, init1, init2):
    ll, _ = _terms(theta, y, init1, init2, False)
    total = 0.0
    for v in ll:
        total += v
    return total


def loglik_grad(theta, y, init1, init2):
    ll, sc = _terms(theta, y, init1, init2, True)
    total = 0.0
    for v in ll:
        total += v
    grad = np.asarray(sc, dtype=np.float64).reshape(-1, 9).sum(axis=0)
    return total, grad


def score_terms(theta, y, init1, init2):
    _, sc = _terms(theta, y, init1, init2, True)
    return np.asarray(sc, dtype=np.float64).reshape(-1, 9)
