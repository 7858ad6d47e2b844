"""One-step-ahead prediction and rolling out-of-sample evaluation."""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import stats

from . import bcp_dist
from .estimation import FitConfig, FitResult, filter_lambda, fit
from .exceptions import BcpError, ConvergenceError, DomainError, NumericalError
from .process import SeriesPair, lambda_update

logger = logging.getLogger(__name__)

MIN_TRAIN = 20


@dataclass(frozen=True)
class ForecastRecord:
    """Prediction for observation ``t`` (0-based) from data ``0..t-1``."""

    t: int
    lambda_next: Tuple[float, float]
    point_joint: Tuple[int, int]
    point_conditional: Optional[int] = None
    actual: Optional[Tuple[int, int]] = None

    def as_dict(self) -> dict:
        return {"t": self.t, "lambda_next": list(self.lambda_next),
                "point_joint": list(self.point_joint),
                "point_conditional": self.point_conditional,
                "actual": None if self.actual is None else list(self.actual)}


def next_lambda(fit_result: FitResult, s: SeriesPair) -> np.ndarray:
    """Conditional mean of the observation following ``s``."""
    p = fit_result.theta_hat
    lam = filter_lambda(p, s, fit_result.lambda_init).values
    return lambda_update(lam[-1], s.values[-1], p)


def one_step(fit_result: FitResult, s: SeriesPair) -> ForecastRecord:
    """Joint-mode prediction of the next pair."""
    lam = next_lambda(fit_result, s)
    bp = bcp_dist.BcpParams(float(lam[0]), float(lam[1]), fit_result.theta_hat.phi)
    return ForecastRecord(t=len(s), lambda_next=(bp.lambda1, bp.lambda2),
                          point_joint=bcp_dist.joint_mode(bp))


def conditional_mean_second(lambda_next, phi: float, y1_next: int) -> float:
    """Mean of the second component given the first, at the next time point."""
    if y1_next < 0 or int(y1_next) != y1_next:
        raise DomainError("y1_next must be a non-negative integer")
    l1, l2 = float(lambda_next[0]), float(lambda_next[1])
    expo = math.log(l2) - l1 * math.expm1(phi) + phi * y1_next
    if expo >= 709.0:
        raise NumericalError(f"conditional mean overflows (log-mean {expo:.6g})")
    return math.exp(expo)


def conditional_one_step(fit_result: FitResult, s: SeriesPair, y1_next: int) -> int:
    """Mode of the second component given the next value of the first."""
    lam = next_lambda(fit_result, s)
    return bcp_dist.poisson_mode(conditional_mean_second(lam, fit_result.theta_hat.phi, y1_next))


def forecast_pmf(fit_result: FitResult, s: SeriesPair, size1: Optional[int] = None,
                 size2: Optional[int] = None) -> np.ndarray:
    """Predictive pmf of the next pair on ``[0, size1) x [0, size2)``.

    The default ``size1`` covers twelve standard deviations past the mean
    of the first component; the default ``size2`` is the smallest width
    leaving at most ``1e-10`` joint probability beyond it, capped at
    ``MAX_PMF_WIDTH``.
    """
    lam = next_lambda(fit_result, s)
    bp = bcp_dist.BcpParams(float(lam[0]), float(lam[1]), fit_result.theta_hat.phi)
    if size1 is None:
        size1 = math.ceil(bp.lambda1 + 12.0 * math.sqrt(bp.lambda1) + 20.0)
    if size2 is None:
        size2 = _second_width(bp, size1)
    return bcp_dist.pmf_grid(bp, size1, size2)


MAX_PMF_WIDTH = 20_000


def _second_width(bp, size1, tail=1e-10):
    z1 = np.arange(size1)
    w1 = stats.poisson.pmf(z1, bp.lambda1)
    means = np.exp(np.minimum(math.log(bcp_dist.mu2(bp)) + bp.phi * z1, 700.0))

    def beyond(width):
        return float(w1 @ stats.poisson.sf(width - 1, means))

    lo, hi = 1, MAX_PMF_WIDTH
    if beyond(hi) > tail:
        logger.warning("predictive pmf truncated at %d values of the second component", hi)
        return hi
    while lo < hi:
        mid = (lo + hi) // 2
        if beyond(mid) <= tail:
            hi = mid
        else:
            lo = mid + 1
    return lo


def error_metrics(actual, predicted):
    """RMSFE path, RMSE and MAE per column.

    The final row of the path is the RMSE.
    """
    e = np.asarray(actual, dtype=np.float64) - np.asarray(predicted, dtype=np.float64)
    if e.ndim == 1:
        e = e[:, None]
    if e.shape[0] == 0:
        raise DomainError("no predictions to evaluate")
    steps = np.arange(1, e.shape[0] + 1)[:, None]
    path = np.sqrt(np.cumsum(e * e, axis=0) / steps)
    return path, path[-1].copy(), np.abs(e).mean(axis=0)


@dataclass
class RollingResult:
    """Output of :func:`rolling_eval`.

    ``rmsfe`` has one row per prediction and one column per component;
    the ``*_conditional`` entries refer to the second component predicted
    given the first.
    """

    records: List[ForecastRecord]
    rmsfe: np.ndarray
    rmse: np.ndarray
    mae: np.ndarray
    rmsfe_conditional: Optional[np.ndarray] = None
    rmse_conditional: Optional[float] = None
    mae_conditional: Optional[float] = None
    fits: List[FitResult] = field(default_factory=list, repr=False)


class RollingEvalError(ConvergenceError):
    """A refit failed; ``partial`` holds the records produced so far."""

    def __init__(self, message, index, partial):
        super().__init__(message)
        self.index = index
        self.partial = partial


def _summarise(records, conditional, fits):
    actual = np.array([r.actual for r in records])
    joint = np.array([r.point_joint for r in records])
    rmsfe, rmse, mae = error_metrics(actual, joint)
    out = RollingResult(records, rmsfe, rmse, mae, fits=fits)
    if conditional:
        cond = np.array([r.point_conditional for r in records])
        path, r2, m2 = error_metrics(actual[:, 1], cond)
        out.rmsfe_conditional = path[:, 0]
        out.rmse_conditional = float(r2[0])
        out.mae_conditional = float(m2[0])
    return out


def rolling_eval(s: SeriesPair, n0: int, cfg: Optional[FitConfig] = None,
                 conditional_on_first: bool = False, refit: bool = True,
                 initial_fit: Optional[FitResult] = None) -> RollingResult:
    """Recursive one-step-ahead evaluation over ``t = n0 .. n-1``.

    At each step the model is fitted to the first ``t`` observations
    (warm-started at the previous estimate) and observation ``t`` is
    predicted, giving ``n - n0`` records.  With ``refit=False`` the
    estimate from the first ``n0`` observations (or ``initial_fit``) is
    kept fixed and only the conditional means are updated.
    """
    cfg = cfg or FitConfig()
    n = len(s)
    if n0 < MIN_TRAIN or n0 >= n:
        raise DomainError(f"need {MIN_TRAIN} <= n0 < n, got n0={n0}, n={n}")
    records: List[ForecastRecord] = []
    fits: List[FitResult] = []
    current = initial_fit
    for t in range(n0, n):
        prefix = s.head(t)
        if refit or current is None:
            try:
                current = fit(prefix, cfg, start=None if current is None else current.theta_hat)
            except BcpError as exc:
                raise RollingEvalError(f"refit failed at t={t}: {exc}", t,
                                       _summarise(records, conditional_on_first, fits)
                                       if records else None) from exc
            fits.append(current)
        rec = one_step(current, prefix)
        cond = None
        y_next = tuple(int(v) for v in s.values[t])
        if conditional_on_first:
            cond = bcp_dist.poisson_mode(conditional_mean_second(
                rec.lambda_next, current.theta_hat.phi, y_next[0]))
        records.append(ForecastRecord(t, rec.lambda_next, rec.point_joint, cond, y_next))
    return _summarise(records, conditional_on_first, fits)
