"""Standard errors, tests of ``phi = 0`` and model comparison."""
import logging
import warnings
from dataclasses import dataclass, replace
from functools import partial
from typing import List, NamedTuple, Optional

import numpy as np
from scipy.stats import chi2

from . import bcp_dist
from .estimation import (FitConfig, FitResult, filter_lambda, fit, resolve_init,
                         score_contributions)
from .exceptions import (BcpError, ConvergenceError, DataError, DomainError,
                         NumericalError, NumericalWarning)
from .parallel import pmap, replica_seeds
from .process import DEFAULT_BURN_IN, SeriesPair, free_index, simulate
from ._backend import kernels

logger = logging.getLogger(__name__)

SE_METHODS = ("outer", "hessian", "bootstrap")
_METHOD_ALIASES = {"outer": "outer", "S_n": "outer", "hessian": "hessian", "D_n": "hessian",
                   "bootstrap": "bootstrap"}
BOOTSTRAP_FAILURE_BUDGET = 0.2


@dataclass(frozen=True)
class SeResult:
    """Standard errors aligned with ``names``.

    ``replicates`` holds the bootstrap estimate matrix (rows = kept
    replicas) and is ``None`` for the asymptotic methods.
    """

    method: str
    names: tuple
    se: np.ndarray
    n_used: int
    replicates: Optional[np.ndarray] = None
    n_replicas: int = 0
    n_failed: int = 0

    def as_dict(self) -> dict:
        return dict(zip(self.names, self.se.tolist()))


@dataclass(frozen=True)
class TestResult:
    """Chi-square(1) test of ``phi = 0``."""

    __test__ = False  # not a pytest class

    name: str
    statistic: float
    p_value: float
    null_fit: FitResult
    alt_fit: Optional[FitResult] = None
    df: int = 1

    def reject(self, level: float = 0.05) -> bool:
        return self.p_value < level


def chi2_pvalue(statistic: float, df: int = 1) -> float:
    return float(min(1.0, max(0.0, chi2.sf(statistic, df))))


def _unpack(theta, init, include_phi):
    if isinstance(theta, FitResult):
        if init is None:
            init = theta.lambda_init
        if include_phi is None:
            include_phi = theta.config.phi_fixed is None
        theta = theta.theta_hat
    return theta, init, (True if include_phi is None else include_phi)


def info_outer(theta, s: SeriesPair, init=None, include_phi=None) -> np.ndarray:
    """Mean outer product of per-observation scores.

    ``theta`` may be a :class:`ModelParams` or a :class:`FitResult` (whose
    initial conditional mean and free-parameter set are then used).
    """
    p, init, include_phi = _unpack(theta, init, include_phi)
    u = score_contributions(p, s, init, include_phi)
    return (u.T @ u) / u.shape[0]


def hessian_terms(theta, s: SeriesPair, init=None, include_phi=None) -> np.ndarray:
    """Per-observation Hessians ``H_t``, shape ``(n - 1, k, k)``.

    Column ``j`` is the central difference of the analytic per-observation
    score in parameter ``j`` with step ``1e-5 * max(1, |theta_j|)``.  A
    forward difference is used when the backward point would leave the
    positive orthant.
    """
    p, init, include_phi = _unpack(theta, init, include_phi)
    l1, l2 = resolve_init(s, init)
    idx = free_index(p.b_diagonal, include_phi)
    base = p.full_vector()
    k = len(idx)
    out = np.empty((len(s) - 1, k, k))
    for j, pos in enumerate(idx):
        h = 1e-5 * max(1.0, abs(base[pos]))
        up = base.copy()
        up[pos] += h
        down = base.copy()
        lo = base[pos] - h
        central = pos == 8 or lo > 0
        down[pos] = lo if central else base[pos]
        su = kernels.score_terms(up, s.values, l1, l2)[:, idx]
        sd = kernels.score_terms(down, s.values, l1, l2)[:, idx]
        out[:, :, j] = (su - sd) / (2.0 * h if central else h)
    return out


def info_hessian(theta, s: SeriesPair, init=None, include_phi=None) -> np.ndarray:
    """Negative mean per-observation Hessian, symmetrised.

    Emits a :class:`NumericalWarning` when the result is not positive
    definite.
    """
    h = hessian_terms(theta, s, init, include_phi)
    d = -h.mean(axis=0)
    d = 0.5 * (d + d.T)
    if np.linalg.eigvalsh(d).min() <= 0.0:
        warnings.warn("Hessian-based information is not positive definite",
                      NumericalWarning, stacklevel=2)
    return d


def _inverse_diag(m, what):
    eig = np.linalg.eigvalsh(m)
    if eig.min() <= 1e-12 * max(1.0, eig.max()):
        raise NumericalError(f"{what} is singular or indefinite (smallest eigenvalue "
                             f"{eig.min():.3g})")
    return np.diag(np.linalg.inv(m))


def se_asymptotic(fit_result: FitResult, s: SeriesPair, method: str = "hessian") -> SeResult:
    """Asymptotic SEs ``sqrt(diag(M^-1) / (n - 1))`` from one information matrix.

    ``method`` is ``"outer"`` (mean score outer product) or ``"hessian"``
    (negative mean Hessian).
    """
    m = _METHOD_ALIASES.get(method)
    if m not in ("outer", "hessian"):
        raise DomainError(f"unknown asymptotic SE method {method!r}")
    info = info_outer(fit_result, s) if m == "outer" else info_hessian(fit_result, s)
    n_used = len(s) - 1
    se = np.sqrt(_inverse_diag(info, f"{m} information matrix") / n_used)
    return SeResult(method=m, names=fit_result.free_names, se=se, n_used=n_used)


def _bootstrap_replica(seed, params, n, burn_in, cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            series, _ = simulate(params, n, burn_in=burn_in, seed=seed)
            res = fit(series, cfg, start=params)
        except BcpError as exc:
            return None, type(exc).__name__
    if not res.converged:
        return None, "not converged"
    return res.free_vector(), None


def se_bootstrap(fit_result: FitResult, s: SeriesPair, B: int = 500, seed=0,
                 burn_in: int = DEFAULT_BURN_IN, n_starts: int = 1,
                 workers: Optional[int] = None) -> SeResult:
    """Parametric bootstrap SEs.

    Simulates ``B`` series of the same length at the estimate, refits each
    (warm-started at the estimate, ``n_starts`` starts) and returns the
    sample standard deviation of the estimates.  Non-converged replicas are
    dropped; more than 20% failures raises :class:`ConvergenceError`.
    """
    if B < 2:
        raise DomainError("B must be at least 2")
    cfg = replace(fit_result.config, n_starts=n_starts)
    task = partial(_bootstrap_replica, params=fit_result.theta_hat, n=len(s),
                   burn_in=burn_in, cfg=cfg)
    results = pmap(task, replica_seeds(seed, B), workers)
    kept = [v for v, _ in results if v is not None]
    failed = B - len(kept)
    if failed:
        reasons = sorted({r for _, r in results if r is not None})
        logger.info("bootstrap dropped %d of %d replicas (%s)", failed, B, ", ".join(reasons))
    if failed > BOOTSTRAP_FAILURE_BUDGET * B or len(kept) < 2:
        raise ConvergenceError(f"{failed} of {B} bootstrap replicas failed")
    reps = np.vstack(kept)
    return SeResult(method="bootstrap", names=fit_result.free_names,
                    se=reps.std(axis=0, ddof=1), n_used=len(s) - 1, replicates=reps,
                    n_replicas=len(kept), n_failed=failed)


def _null_config(cfg: FitConfig) -> FitConfig:
    return replace(cfg, phi_fixed=0.0)


def _alt_config(cfg: FitConfig) -> FitConfig:
    return replace(cfg, phi_fixed=None)


def _require_converged(res: FitResult, what: str):
    if not res.converged:
        raise ConvergenceError(f"{what} fit did not converge (gradient "
                               f"{res.gradient_norm:.3g})", best=res)


def lrt_phi(s: SeriesPair, cfg: Optional[FitConfig] = None,
            null_fit: Optional[FitResult] = None,
            alt_fit: Optional[FitResult] = None) -> TestResult:
    """Likelihood-ratio test of ``phi = 0``.

    Fits are computed unless supplied.  A statistic below ``-1e-6``
    triggers a refit of the alternative warm-started at the null estimate;
    remaining negativity is clamped to 0.
    """
    cfg = cfg or FitConfig()
    null_fit = null_fit or fit(s, _null_config(cfg))
    alt_fit = alt_fit or fit(s, _alt_config(cfg))
    _require_converged(null_fit, "null")
    _require_converged(alt_fit, "alternative")
    stat = 2.0 * (alt_fit.loglik - null_fit.loglik)
    if stat < -1e-6:
        logger.info("negative LRT statistic %.3g; refitting alternative from null", stat)
        again = fit(s, replace(alt_fit.config, n_starts=1), start=null_fit.theta_hat)
        if again.loglik > alt_fit.loglik:
            alt_fit = again
        stat = 2.0 * (alt_fit.loglik - null_fit.loglik)
    stat = max(stat, 0.0)
    return TestResult("lrt", stat, chi2_pvalue(stat), null_fit, alt_fit)


def score_test_phi(s: SeriesPair, cfg: Optional[FitConfig] = None,
                   null_fit: Optional[FitResult] = None) -> TestResult:
    """Score (Lagrange multiplier) test of ``phi = 0``.

    Uses the full analytic score at the null estimate and the Hessian-based
    information over all parameters, ``phi`` included.
    """
    cfg = cfg or FitConfig()
    null_fit = null_fit or fit(s, _null_config(cfg))
    _require_converged(null_fit, "null")
    p, init = null_fit.theta_hat, null_fit.lambda_init
    u = score_contributions(p, s, init, include_phi=True).sum(axis=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NumericalWarning)
        d = info_hessian(p, s, init, include_phi=True)
    eig = np.linalg.eigvalsh(d)
    if eig.min() <= 0.0:
        raise NumericalError("information matrix at the null estimate is not positive "
                             f"definite (smallest eigenvalue {eig.min():.3g}); use the "
                             "likelihood-ratio test instead")
    stat = float(u @ np.linalg.solve(d * (len(s) - 1), u))
    stat = max(stat, 0.0)
    return TestResult("score", stat, chi2_pvalue(stat), null_fit)


class CompetitorBound(NamedTuple):
    phi_max: float
    max_corr_path: np.ndarray

    @property
    def max_corr(self) -> float:
        return float(np.max(self.max_corr_path))


def competitor_phi_bound(fit_result: FitResult, s: SeriesPair) -> CompetitorBound:
    """Covariance cap of the trivariate-reduction Poisson competitor.

    ``phi_max = min((I - A)^-1 omega)`` and the implied largest correlation
    ``phi_max / sqrt(lambda1_t lambda2_t)`` along the fitted mean path.
    """
    p = fit_result.theta_hat
    m = np.eye(2) - p.a
    if abs(np.linalg.det(m)) < 1e-12:
        raise NumericalError("I - A is singular")
    a = np.linalg.solve(m, p.omega)
    phi_max = float(a.min())
    lam = filter_lambda(p, s, fit_result.lambda_init).values
    return CompetitorBound(phi_max, phi_max / np.sqrt(lam[:, 0] * lam[:, 1]))


def conditional_correlation_path(fit_result: FitResult, s: SeriesPair) -> np.ndarray:
    """Contemporaneous correlation of the fitted model at each time point."""
    lam = filter_lambda(fit_result.theta_hat, s, fit_result.lambda_init).values
    return bcp_dist.correlation_path(lam[:, 0], lam[:, 1], fit_result.theta_hat.phi)


@dataclass(frozen=True)
class Ranking:
    """Orders (indices into the input list) by AIC and BIC, best first."""

    aic_order: List[int]
    bic_order: List[int]
    aic: List[float]
    bic: List[float]


def model_select(fits: List[FitResult]) -> Ranking:
    if not fits:
        raise DomainError("no fits to compare")
    keys = {f.data_key for f in fits}
    if len(keys) != 1:
        raise DataError("fits were computed on different data or initial means")
    aic = [f.aic for f in fits]
    bic = [f.bic for f in fits]
    order = range(len(fits))
    return Ranking(sorted(order, key=aic.__getitem__), sorted(order, key=bic.__getitem__),
                   aic, bic)


__all__ = [
    "SE_METHODS", "SeResult", "TestResult", "CompetitorBound", "Ranking", "chi2_pvalue",
    "info_outer", "hessian_terms", "info_hessian", "se_asymptotic", "se_bootstrap",
    "lrt_phi", "score_test_phi", "competitor_phi_bound", "conditional_correlation_path",
    "model_select",
]
