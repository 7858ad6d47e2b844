# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: likelihood/score recursions and trajectory simulation.

Mirrors ``_kernels_py`` operation for operation; see that module for the
argument conventions.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, log, sqrt, floor, fabs, lgamma, INFINITY, NAN

from .exceptions import SamplingError

cnp.import_array()

BACKEND = "cython"

DEF BLOCK = 4096
DEF MAX_MEAN = 1.0e15


cdef class UniformStream:
    """Buffered U(0, 1) draws from a numpy ``Generator``."""

    cdef public object rng
    cdef Py_ssize_t block
    cdef double[::1] buf
    cdef Py_ssize_t pos, size

    def __init__(self, rng, Py_ssize_t block=BLOCK):
        self.rng = rng
        self.block = block
        self.pos = 0
        self.size = 0

    cdef void _refill(self) except *:
        self.buf = np.ascontiguousarray(self.rng.random(self.block), dtype=np.float64)
        self.size = self.buf.shape[0]
        self.pos = 0

    cdef inline double draw(self) except? -1.0:
        if self.pos >= self.size:
            self._refill()
        self.pos += 1
        return self.buf[self.pos - 1]

    def next(self):
        return self.draw()


cdef long long _poisson_inversion(double mu, UniformStream stream) except? -1:
    cdef double u = stream.draw()
    cdef double p = exp(-mu)
    cdef double cdf = p
    cdef long long k = 0
    while u > cdf:
        k += 1
        p *= mu / k
        if p == 0.0:
            break
        cdf += p
    return k


cdef long long _poisson_ptrs(double mu, UniformStream stream) except? -1:
    cdef double slam = sqrt(mu)
    cdef double loglam = log(mu)
    cdef double b = 0.931 + 2.53 * slam
    cdef double a = -0.059 + 0.02483 * b
    cdef double invalpha = 1.1239 + 1.1328 / (b - 3.4)
    cdef double vr = 0.9277 - 3.6224 / (b - 2.0)
    cdef double u, v, us, k
    while True:
        u = stream.draw() - 0.5
        v = stream.draw()
        us = 0.5 - fabs(u)
        k = floor((2.0 * a / us + b) * u + mu + 0.43)
        if us >= 0.07 and v <= vr:
            return <long long>k
        if k < 0 or (us < 0.013 and v > us):
            continue
        if (log(v) + log(invalpha) - log(a / (us * us) + b)
                <= -mu + k * loglam - lgamma(k + 1.0)):
            return <long long>k


cdef inline long long _poisson(double mu, UniformStream stream) except? -1:
    if mu < 10.0:
        if mu <= 0.0:
            return 0
        return _poisson_inversion(mu, stream)
    return _poisson_ptrs(mu, stream)


def poisson(double mu, UniformStream stream):
    """One Poisson(mu) draw: inversion below 10, transformed rejection above."""
    return _poisson(mu, stream)


def poisson_draws(mu, UniformStream stream):
    cdef double[::1] m = np.ascontiguousarray(mu, dtype=np.float64).ravel()
    cdef Py_ssize_t i, n = m.shape[0]
    out = np.empty(n, dtype=np.int64)
    cdef long long[::1] o = out
    for i in range(n):
        if not (m[i] <= MAX_MEAN):
            raise SamplingError(f"Poisson mean {m[i]!r} is not representable")
        o[i] = _poisson(m[i], stream)
    return out


def sample_bcp(double lam1, double lam2, double phi, Py_ssize_t size, UniformStream stream):
    out = np.empty((size, 2), dtype=np.int64)
    cdef long long[:, ::1] o = out
    cdef double log_mu2 = log(lam2) - lam1 * expm1(phi)
    cdef double expo, m
    cdef long long z1
    cdef Py_ssize_t i
    for i in range(size):
        z1 = _poisson(lam1, stream)
        expo = log_mu2 + phi * z1
        m = exp(expo)
        if not (m <= MAX_MEAN):
            raise SamplingError(
                f"conditional mean of Z2 overflows at z1={z1} "
                f"(log-mean {expo:.6g}); parameters unsuitable for simulation"
            )
        o[i, 0] = z1
        o[i, 1] = _poisson(m, stream)
    return out


def simulate_path(omega, a, b, double phi, Py_ssize_t total, double init1, double init2,
                  UniformStream stream):
    cdef double w1 = omega[0], w2 = omega[1]
    cdef double a11 = a[0, 0], a12 = a[0, 1], a21 = a[1, 0], a22 = a[1, 1]
    cdef double b11 = b[0, 0], b12 = b[0, 1], b21 = b[1, 0], b22 = b[1, 1]
    cdef double em1 = expm1(phi)
    y_out = np.empty((total, 2), dtype=np.int64)
    lam_out = np.empty((total, 2), dtype=np.float64)
    cdef long long[:, ::1] y = y_out
    cdef double[:, ::1] lam = lam_out
    cdef double l1 = init1, l2 = init2, n1, expo, m
    cdef long long z1 = 0, z2 = 0
    cdef Py_ssize_t t
    for t in range(total):
        if t > 0:
            n1 = w1 + a11 * l1 + a12 * l2 + b11 * z1 + b12 * z2
            l2 = w2 + a21 * l1 + a22 * l2 + b21 * z1 + b22 * z2
            l1 = n1
        lam[t, 0] = l1
        lam[t, 1] = l2
        if not (l1 <= MAX_MEAN):
            raise SamplingError(f"conditional mean of Y1 diverged at step {t}")
        z1 = _poisson(l1, stream)
        expo = log(l2) - l1 * em1 + phi * z1
        m = exp(expo)
        if not (m <= MAX_MEAN):
            raise SamplingError(
                f"conditional mean of Y2 overflows at step {t}, z1={z1} "
                f"(log-mean {expo:.6g}); parameters unsuitable for simulation"
            )
        z2 = _poisson(m, stream)
        y[t, 0] = z1
        y[t, 1] = z2
    return y_out, lam_out


def filter_path(const double[::1] theta, const long long[:, ::1] y, double init1, double init2):
    cdef double a1 = theta[0], a2 = theta[1], b11 = theta[2], b12 = theta[3]
    cdef double b21 = theta[4], b22 = theta[5], w1 = theta[6], w2 = theta[7]
    cdef Py_ssize_t t, n = y.shape[0]
    out = np.empty((n, 2), dtype=np.float64)
    cdef double[:, ::1] lam = out
    cdef double l1 = init1, l2 = init2
    lam[0, 0] = l1
    lam[0, 1] = l2
    for t in range(1, n):
        l1 = w1 + a1 * l1 + b11 * y[t - 1, 0] + b12 * y[t - 1, 1]
        l2 = w2 + a2 * l2 + b21 * y[t - 1, 0] + b22 * y[t - 1, 1]
        lam[t, 0] = l1
        lam[t, 1] = l2
    return out


cdef double _run(const double[::1] theta, const long long[:, ::1] y, double init1,
                 double init2, double[::1] ll_terms, double[::1] grad,
                 double[:, ::1] sc_terms):
    # Accumulates log-likelihood; fills optional per-term / score outputs
    # (zero-length views disable them).
    cdef double a1 = theta[0], a2 = theta[1], b11 = theta[2], b12 = theta[3]
    cdef double b21 = theta[4], b22 = theta[5], w1 = theta[6], w2 = theta[7]
    cdef double phi = theta[8]
    cdef double ephi = exp(phi), em1 = expm1(phi)
    cdef bint want_grad = grad.shape[0] > 0
    cdef bint want_sc = sc_terms.shape[0] > 0
    cdef bint want_ll = ll_terms.shape[0] > 0
    cdef bint want_score = want_grad or want_sc
    cdef Py_ssize_t t, j, n = y.shape[0]
    cdef double l1 = init1, l2 = init2, y1p, y2p, y1, y2, expo, m, term, total = 0.0
    cdef double da1 = 0.0, db11 = 0.0, db12 = 0.0, dw1 = 0.0
    cdef double da2 = 0.0, db21 = 0.0, db22 = 0.0, dw2 = 0.0
    cdef double s1, s2, s3
    cdef double u[9]
    if want_grad:
        for j in range(9):
            grad[j] = 0.0
    for t in range(1, n):
        y1p = y[t - 1, 0]
        y2p = y[t - 1, 1]
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
        y1 = y[t, 0]
        y2 = y[t, 1]
        if l1 <= 0.0 or l2 <= 0.0:
            term = -INFINITY
            for j in range(9):
                u[j] = NAN
        else:
            expo = log(l2) - l1 * em1 + phi * y1
            m = exp(expo)
            term = (y1 * log(l1) + y2 * log(l2)
                    - l1 * (1.0 + y2 * em1) - m + phi * y1 * y2)
            if want_score:
                s1 = y1 / l1 - 1.0 + em1 * (m - y2)
                s2 = y2 / l2 - m / l2
                s3 = -y2 * l1 * ephi - m * (y1 - l1 * ephi) + y1 * y2
                u[0] = s1 * da1
                u[1] = s2 * da2
                u[2] = s1 * db11
                u[3] = s1 * db12
                u[4] = s2 * db21
                u[5] = s2 * db22
                u[6] = s1 * dw1
                u[7] = s2 * dw2
                u[8] = s3
        total += term
        if want_ll:
            ll_terms[t - 1] = term
        if want_grad:
            for j in range(9):
                grad[j] += u[j]
        if want_sc:
            for j in range(9):
                sc_terms[t - 1, j] = u[j]
    return total


cdef double[::1] _EMPTY1 = np.empty(0, dtype=np.float64)
cdef double[:, ::1] _EMPTY2 = np.empty((0, 9), dtype=np.float64)


def loglik(const double[::1] theta, const long long[:, ::1] y, double init1, double init2):
    return _run(theta, y, init1, init2, _EMPTY1, _EMPTY1, _EMPTY2)


def loglik_terms(const double[::1] theta, const long long[:, ::1] y, double init1,
                 double init2):
    out = np.empty(max(y.shape[0] - 1, 0), dtype=np.float64)
    if y.shape[0] > 1:
        _run(theta, y, init1, init2, out, _EMPTY1, _EMPTY2)
    return out


def loglik_grad(const double[::1] theta, const long long[:, ::1] y, double init1,
                double init2):
    grad = np.zeros(9, dtype=np.float64)
    total = _run(theta, y, init1, init2, _EMPTY1, grad, _EMPTY2)
    return total, grad


def score_terms(const double[::1] theta, const long long[:, ::1] y, double init1,
                double init2):
    out = np.empty((max(y.shape[0] - 1, 0), 9), dtype=np.float64)
    if y.shape[0] > 1:
        _run(theta, y, init1, init2, _EMPTY1, _EMPTY1, out)
    return out
