"""Conditional maximum likelihood for the BCP-INGARCH(1,1) model.

The log-likelihood is conditional on the first observation and on the
initial conditional mean, and drops the parameter-free ``log(y!)`` terms,
so values (and hence AIC/BIC) are only comparable across fits of the same
data.
"""
import hashlib
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Tuple, Union

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln

from ._backend import kernels
from .exceptions import ConvergenceError, DataError, DomainError, NumericalWarning
from .process import (LambdaPath, ModelParams, SeriesPair, free_index, lambda_update,
                      param_names, stationarity_check)

logger = logging.getLogger(__name__)

_BAD_OBJECTIVE = 1.0e10
MIN_FIT_LENGTH = 20
_BFGS_RESTARTS = 2
_OBJECTIVE_TIE = 1e-12


@dataclass(frozen=True)
class FitConfig:
    """Estimation options.

    Attributes
    ----------
    b_diagonal : bool
        Restrict ``B`` to be diagonal.
    phi_fixed : float or None
        Hold ``phi`` at this value (``0.0`` fits the independence null).
    lambda_init : "sample-mean" or pair of float
        Initial conditional mean used by the likelihood recursion.
    gtol : float
        Convergence tolerance on the max-abs gradient of the per-observation
        objective in the transformed (log-positive) parameterization.
    xtol : float
        Relative step tolerance passed to the quasi-Newton routine.
    max_iter : int
    n_starts : int
        Number of starting points; the first is the moment-style start (or a
        user-supplied warm start), the rest are seeded jitters of it.
    barrier_weight, barrier_eps : float
        Quadratic penalty ``weight * max(0, ||A||_1 + ||B||_1 - (1 - eps))^2``
        added to the per-observation objective.
    jitter_scale : float
        Standard deviation of log-scale jitter for extra starts.
    seed : int
        Seed of the jitter generator.
    """

    b_diagonal: bool = False
    phi_fixed: Optional[float] = None
    lambda_init: Union[str, Tuple[float, float]] = "sample-mean"
    gtol: float = 1e-6
    xtol: float = 1e-10
    max_iter: int = 1000
    n_starts: int = 3
    barrier_weight: float = 1e4
    barrier_eps: float = 1e-3
    jitter_scale: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.gtol <= 0 or self.xtol <= 0 or self.max_iter < 1:
            raise DomainError("tolerances must be positive")
        if self.n_starts < 1:
            raise DomainError("n_starts must be at least 1")
        if self.barrier_weight < 0 or not (0 < self.barrier_eps < 1):
            raise DomainError("invalid barrier settings")
        if isinstance(self.lambda_init, str):
            if self.lambda_init != "sample-mean":
                raise DomainError(f"unknown lambda_init rule {self.lambda_init!r}")
        elif len(self.lambda_init) != 2 or min(self.lambda_init) <= 0:
            raise DomainError("lambda_init must be 'sample-mean' or a positive pair")

    @property
    def free_names(self) -> tuple:
        return param_names(self.b_diagonal, include_phi=self.phi_fixed is None)


@dataclass(frozen=True)
class FitResult:
    """Outcome of :func:`fit`.

    ``gradient_norm`` is the max-abs gradient of the penalised
    per-observation objective in the transformed parameterization.
    ``aic = -2 loglik + 2k`` and ``bic = -2 loglik + k log(n_used)``.
    """

    theta_hat: ModelParams
    loglik: float
    gradient_norm: float
    converged: bool
    stationarity_margin: float
    n_used: int
    aic: float
    bic: float
    k: int
    lambda_init: Tuple[float, float]
    config: FitConfig
    data_key: str = ""
    n_iter: int = 0
    message: str = ""
    start_logliks: tuple = field(default=(), repr=False)

    @property
    def free_names(self) -> tuple:
        return self.config.free_names

    @property
    def estimates(self) -> dict:
        return dict(zip(self.free_names, self.free_vector().tolist()))

    def free_vector(self) -> np.ndarray:
        idx = free_index(self.config.b_diagonal, include_phi=self.config.phi_fixed is None)
        return self.theta_hat.full_vector()[idx]


def sample_mean_init(s: SeriesPair) -> Tuple[float, float]:
    means = s.values.mean(axis=0)
    if np.any(means <= 0):
        raise DataError("a component is identically zero; the model is not identifiable")
    return float(means[0]), float(means[1])


def resolve_init(s: SeriesPair, init=None) -> Tuple[float, float]:
    if init is None or (isinstance(init, str) and init == "sample-mean"):
        return sample_mean_init(s)
    init = tuple(float(v) for v in init)
    if len(init) != 2 or min(init) <= 0:
        raise DomainError("initial conditional mean must be a positive pair")
    return init


def data_key(s: SeriesPair, init) -> str:
    h = hashlib.sha1(s.values.tobytes())
    h.update(np.asarray(init, dtype=np.float64).tobytes())
    return h.hexdigest()


def _theta9(p: ModelParams) -> np.ndarray:
    if not p.a_is_diagonal:
        raise DomainError("likelihood routines require a diagonal A")
    return np.ascontiguousarray(p.full_vector())


def filter_lambda(p: ModelParams, s: SeriesPair, init=None) -> LambdaPath:
    """Conditional means implied by ``p`` along the observed series."""
    l1, l2 = resolve_init(s, init)
    if p.a_is_diagonal:
        return LambdaPath.from_array(kernels.filter_path(_theta9(p), s.values, l1, l2))
    lam = np.empty((len(s), 2))
    lam[0] = (l1, l2)
    for t in range(1, len(s)):
        lam[t] = lambda_update(lam[t - 1], s.values[t - 1], p)
    return LambdaPath.from_array(lam)


def log_likelihood(p: ModelParams, s: SeriesPair, init=None, constants: bool = False) -> float:
    """Conditional log-likelihood over ``t = 2..n``.

    With ``constants=True`` the ``-log(y1!) - log(y2!)`` terms are added so
    the value is a proper log-probability.  A non-finite term gives ``-inf``
    and a :class:`NumericalWarning` naming the first offending index.
    """
    l1, l2 = resolve_init(s, init)
    theta = _theta9(p)
    value = kernels.loglik(theta, s.values, l1, l2)
    if not math.isfinite(value):
        terms = kernels.loglik_terms(theta, s.values, l1, l2)
        bad = int(np.flatnonzero(~np.isfinite(terms))[0]) + 2
        warnings.warn(f"non-finite log-likelihood term at t={bad}", NumericalWarning,
                      stacklevel=2)
        return -math.inf
    if constants:
        y = s.values[1:].astype(np.float64)
        value -= float(gammaln(y + 1.0).sum())
    return value


def score_contributions(p: ModelParams, s: SeriesPair, init=None,
                        include_phi: bool = True) -> np.ndarray:
    """Per-observation scores ``U_t``, shape ``(n - 1, k)``.

    Columns follow ``param_names(p.b_diagonal, include_phi)``.
    """
    l1, l2 = resolve_init(s, init)
    terms = kernels.score_terms(_theta9(p), s.values, l1, l2)
    return terms[:, free_index(p.b_diagonal, include_phi)]


def score(p: ModelParams, s: SeriesPair, init=None, include_phi: bool = True) -> np.ndarray:
    """Analytic gradient of :func:`log_likelihood` over the free parameters."""
    l1, l2 = resolve_init(s, init)
    _, grad = kernels.loglik_grad(_theta9(p), s.values, l1, l2)
    return grad[free_index(p.b_diagonal, include_phi)]


class _Objective:
    """Penalised negative mean log-likelihood in transformed coordinates.

    Positive parameters enter as ``exp(u)``; ``phi`` enters directly.
    """

    def __init__(self, s: SeriesPair, init, cfg: FitConfig):
        self.y = s.values
        self.l1, self.l2 = init
        self.cfg = cfg
        self.phi_free = cfg.phi_fixed is None
        self.idx = free_index(cfg.b_diagonal, include_phi=self.phi_free)
        self.n_pos = len(self.idx) - int(self.phi_free)
        self.base = np.zeros(9)
        if not self.phi_free:
            self.base[8] = float(cfg.phi_fixed)
        self.scale = 1.0 / (self.y.shape[0] - 1)
        self.n_eval = 0

    def theta(self, u) -> np.ndarray:
        th = self.base.copy()
        with np.errstate(over="ignore"):
            th[self.idx[:self.n_pos]] = np.exp(u[:self.n_pos])
        if self.phi_free:
            th[8] = u[-1]
        return th

    def to_u(self, theta9) -> np.ndarray:
        pos = np.maximum(theta9[self.idx[:self.n_pos]], 1e-10)
        u = np.log(pos)
        if self.phi_free:
            u = np.append(u, theta9[8])
        return u

    def barrier(self, th):
        cfg = self.cfg
        col = (th[2] + th[4], th[3] + th[5])
        s = max(th[0], th[1]) + max(col)
        excess = s - (1.0 - cfg.barrier_eps)
        grad = np.zeros(9)
        if excess <= 0.0 or cfg.barrier_weight == 0.0:
            return 0.0, grad
        g = 2.0 * cfg.barrier_weight * excess
        grad[0 if th[0] >= th[1] else 1] = g
        if col[0] >= col[1]:
            grad[[2, 4]] = g
        else:
            grad[[3, 5]] = g
        return cfg.barrier_weight * excess ** 2, grad

    def __call__(self, u):
        self.n_eval += 1
        th = self.theta(u)
        if not np.all(np.isfinite(th)):
            return _BAD_OBJECTIVE, np.zeros_like(u)
        ll, g9 = kernels.loglik_grad(th, self.y, self.l1, self.l2)
        if not (math.isfinite(ll) and np.all(np.isfinite(g9))):
            return _BAD_OBJECTIVE, np.zeros_like(u)
        pen, pen_grad = self.barrier(th)
        f = -ll * self.scale + pen
        g9 = -g9 * self.scale + pen_grad
        g = g9[self.idx]
        g[:self.n_pos] *= th[self.idx[:self.n_pos]]
        return f, g


def moment_start(s: SeriesPair, cfg: FitConfig) -> np.ndarray:
    """Full nine-vector used as the default starting point."""
    means = np.maximum(s.values.mean(axis=0), 0.1)
    theta = np.zeros(9)
    theta[0:2] = 0.3
    theta[2] = theta[5] = 0.3
    if not cfg.b_diagonal:
        theta[3] = theta[4] = 0.02
    theta[6:8] = 0.2 * means
    theta[8] = 0.0 if cfg.phi_fixed is None else cfg.phi_fixed
    return theta


def _shrink_to_region(theta, limit=0.9):
    s = max(theta[0], theta[1]) + max(theta[2] + theta[4], theta[3] + theta[5])
    if s > limit:
        theta = theta.copy()
        theta[:6] *= limit / s
    return theta


def _starts(s, cfg, obj, start):
    base = moment_start(s, cfg)
    first = base
    if start is not None:
        warm = start.full_vector() if isinstance(start, ModelParams) else np.asarray(start, float)
        warm = warm.copy()
        if cfg.b_diagonal:
            warm[3] = warm[4] = 0.0
        if cfg.phi_fixed is not None:
            warm[8] = cfg.phi_fixed
        first = warm
    points = [obj.to_u(first)]
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.n_starts - 1):
        jit = base.copy()
        jit[obj.idx[:obj.n_pos]] *= np.exp(cfg.jitter_scale * rng.standard_normal(obj.n_pos))
        if obj.phi_free:
            jit[8] += 0.1 * rng.standard_normal()
        points.append(obj.to_u(_shrink_to_region(jit)))
    return points


def _result(theta9, ll, gnorm, converged, s, init, cfg, n_iter, message, start_lls):
    p = ModelParams.from_full_vector(theta9, cfg.b_diagonal)
    k = len(cfg.free_names)
    n_used = len(s) - 1
    return FitResult(
        theta_hat=p,
        loglik=ll,
        gradient_norm=gnorm,
        converged=converged,
        stationarity_margin=stationarity_check(p).margin,
        n_used=n_used,
        aic=-2.0 * ll + 2.0 * k,
        bic=-2.0 * ll + k * math.log(n_used),
        k=k,
        lambda_init=tuple(init),
        config=cfg,
        data_key=data_key(s, init),
        n_iter=n_iter,
        message=message,
        start_logliks=tuple(start_lls),
    )


def _newton_polish(obj, u, f, g, cfg, iters=8):
    # Newton steps with a differenced Hessian of the analytic gradient; used
    # when BFGS stalls against the stiff stationarity barrier.
    k = u.size
    for _ in range(iters):
        if np.max(np.abs(g)) <= cfg.gtol:
            break
        h = np.empty((k, k))
        for j in range(k):
            step = 1e-6 * max(1.0, abs(u[j]))
            up, down = u.copy(), u.copy()
            up[j] += step
            down[j] -= step
            h[:, j] = (obj(up)[1] - obj(down)[1]) / (2.0 * step)
        h = 0.5 * (h + h.T)
        eig = np.linalg.eigvalsh(h)
        if eig.min() <= 0.0:
            h += (1e-8 - eig.min()) * np.eye(k)
        direction = -np.linalg.solve(h, g)
        for scale in (1.0, 0.5, 0.25, 0.125):
            cand = u + scale * direction
            fc, gc = obj(cand)
            if fc <= f + 1e-14 * max(1.0, abs(f)) and np.max(np.abs(gc)) < np.max(np.abs(g)):
                u, f, g = cand, fc, gc
                break
        else:
            break
    return u, f, g


def _minimize(obj, u0, cfg):
    options = {"gtol": cfg.gtol, "xrtol": cfg.xtol, "maxiter": cfg.max_iter, "norm": np.inf}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(obj, u0, jac=True, method="BFGS", options=options)
        f, g = obj(res.x)
        # a stalled line search in a narrow valley usually recovers once the
        # inverse-Hessian estimate is reset
        for _ in range(_BFGS_RESTARTS):
            if not (f < _BAD_OBJECTIVE and np.max(np.abs(g)) > cfg.gtol):
                break
            again = minimize(obj, res.x, jac=True, method="BFGS", options=options)
            fa, ga = obj(again.x)
            if fa > f:
                break
            again.nit += res.nit
            res, f, g = again, fa, ga
    if f < _BAD_OBJECTIVE and np.max(np.abs(g)) > cfg.gtol:
        u, f, g = _newton_polish(obj, res.x, f, g, cfg)
        res.x = u
    return res, f, g


def fit(s: SeriesPair, cfg: Optional[FitConfig] = None, start=None) -> FitResult:
    """Conditional maximum likelihood estimate.

    Parameters
    ----------
    s : SeriesPair
    cfg : FitConfig, optional
    start : ModelParams or nine-vector, optional
        Warm start, used in place of the moment-style start.

    Returns
    -------
    FitResult

    Raises
    ------
    ConvergenceError
        When no start reaches a finite objective, or none gets within
        ``100 * gtol`` of a stationary point.  ``err.best`` holds the best
        result seen, if any.
    """
    cfg = cfg or FitConfig()
    if len(s) < MIN_FIT_LENGTH:
        raise DataError(f"need at least {MIN_FIT_LENGTH} observations to fit, got {len(s)}")
    init = resolve_init(s, cfg.lambda_init)
    obj = _Objective(s, init, cfg)
    candidates = []
    start_lls = []
    for u0 in _starts(s, cfg, obj, start):
        f0, _ = obj(u0)
        if f0 >= _BAD_OBJECTIVE:
            start_lls.append(-math.inf)
            continue
        res, f, g = _minimize(obj, u0, cfg)
        if f >= _BAD_OBJECTIVE:
            start_lls.append(-math.inf)
            continue
        gnorm = float(np.max(np.abs(g)))
        theta = obj.theta(res.x)
        ll = kernels.loglik(theta, s.values, *init)
        start_lls.append(ll)
        candidates.append((f, gnorm, theta, ll, int(res.nit), str(res.message)))
    if not candidates:
        raise ConvergenceError("no starting point gave a finite likelihood")
    # objectives equal to rounding are the same optimum; keep the most stationary
    f_min = min(c[0] for c in candidates)
    tied = [c for c in candidates if c[0] <= f_min + _OBJECTIVE_TIE * max(1.0, abs(f_min))]
    f, gnorm, theta, ll, nit, message = min(tied, key=lambda c: c[1])
    converged = gnorm <= cfg.gtol
    result = _result(theta, ll, gnorm, converged, s, init, cfg, nit, message, start_lls)
    if not converged:
        logger.debug("fit stopped with gradient %.3g: %s", gnorm, message)
        if gnorm > 100 * cfg.gtol:
            raise ConvergenceError(
                f"optimizer stopped with gradient norm {gnorm:.3g} ({message})", best=result)
    return result


def result_at(p: ModelParams, s: SeriesPair, cfg: Optional[FitConfig] = None) -> FitResult:
    """:class:`FitResult` describing ``p`` on ``s`` without optimizing.

    ``converged`` reports whether ``p`` is a stationary point to within
    ``cfg.gtol``.
    """
    cfg = cfg or FitConfig(b_diagonal=p.b_diagonal)
    init = resolve_init(s, cfg.lambda_init)
    obj = _Objective(s, init, cfg)
    theta = p.full_vector()
    f, g = obj(obj.to_u(theta))
    gnorm = float(np.max(np.abs(g))) if f < _BAD_OBJECTIVE else math.inf
    ll = kernels.loglik(theta, s.values, *init)
    return _result(theta, ll, gnorm, gnorm <= cfg.gtol, s, init, cfg, 0, "evaluated", ())


def refit(s: SeriesPair, previous: FitResult, **changes) -> FitResult:
    """Re-run :func:`fit` warm-started at a previous estimate."""
    cfg = replace(previous.config, **changes)
    return fit(s, cfg, start=previous.theta_hat)
