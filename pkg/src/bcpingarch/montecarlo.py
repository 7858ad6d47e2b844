"""Monte Carlo harness: estimator accuracy, standard errors and test power.

Every replica draws its own seed from the master seed by index, so results
are reproducible and independent of the number of worker processes.
"""
import logging
import warnings
from dataclasses import dataclass, replace
from functools import partial
from typing import Dict, Optional, Sequence

import numpy as np

from .estimation import FitConfig, fit
from .exceptions import BcpError
from .inference import lrt_phi, score_test_phi, se_asymptotic, se_bootstrap
from .parallel import pmap, replica_seeds
from .process import DEFAULT_BURN_IN, ModelParams, free_index, simulate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class StudySummary:
    """Per-parameter mean, SD (ddof=1) and MSE over successful replicas."""

    names: tuple
    true: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    mse: np.ndarray
    n_ok: int
    n_failed: int

    def rows(self):
        for i, name in enumerate(self.names):
            yield name, float(self.mean[i]), float(self.sd[i]), float(self.mse[i])


def summarize(estimates: np.ndarray, true: np.ndarray, names) -> StudySummary:
    """Summary of an estimate matrix; rows containing NaN count as failures."""
    estimates = np.atleast_2d(np.asarray(estimates, dtype=np.float64))
    ok = np.all(np.isfinite(estimates), axis=1)
    good = estimates[ok]
    k = estimates.shape[1]
    if good.shape[0] == 0:
        nan = np.full(k, np.nan)
        return StudySummary(tuple(names), true, nan, nan, nan, 0, int((~ok).sum()))
    sd = good.std(axis=0, ddof=1) if good.shape[0] > 1 else np.zeros(k)
    mse = ((good - true) ** 2).mean(axis=0)
    return StudySummary(tuple(names), np.asarray(true, dtype=np.float64), good.mean(axis=0),
                        sd, mse, int(ok.sum()), int((~ok).sum()))


def true_vector(params: ModelParams, cfg: FitConfig) -> np.ndarray:
    return params.full_vector()[free_index(cfg.b_diagonal, cfg.phi_fixed is None)]


def _children(seed):
    # child 0 drives the simulation, child 1 anything stochastic downstream
    return (np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key + (0,)),
            np.random.SeedSequence(seed.entropy, spawn_key=seed.spawn_key + (1,)))


def _quiet(func, *args, **kwargs):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return func(*args, **kwargs)


@dataclass(frozen=True)
class PointStudy:
    estimates: np.ndarray
    summary: StudySummary
    converged: np.ndarray


def _point_replica(seed, params, n, burn_in, cfg):
    sim_seed, _ = _children(seed)
    k = len(cfg.free_names)
    try:
        series, _ = _quiet(simulate, params, n, burn_in=burn_in, seed=sim_seed)
        res = _quiet(fit, series, cfg)
    except BcpError as exc:
        logger.debug("replica failed: %s", exc)
        return np.full(k, np.nan), False
    return res.free_vector(), res.converged


def point_study(params: ModelParams, n: int, replicas: int, seed=0,
                cfg: Optional[FitConfig] = None, burn_in: int = DEFAULT_BURN_IN,
                workers: Optional[int] = None) -> PointStudy:
    """Simulate and fit ``replicas`` series; summarise the estimates."""
    cfg = cfg or FitConfig(b_diagonal=params.b_diagonal)
    task = partial(_point_replica, params=params, n=n, burn_in=burn_in, cfg=cfg)
    out = pmap(task, replica_seeds(seed, replicas), workers)
    est = np.vstack([e for e, _ in out])
    conv = np.array([c for _, c in out])
    return PointStudy(est, summarize(est, true_vector(params, cfg), cfg.free_names), conv)


@dataclass(frozen=True)
class SeStudy:
    """Estimates and standard errors per replica.

    ``se[method]`` has the same shape as ``estimates``; failed entries are
    NaN.  ``mc_sd`` is the Monte Carlo SD of the estimates.
    """

    names: tuple
    estimates: np.ndarray
    se: Dict[str, np.ndarray]

    @property
    def mc_sd(self) -> np.ndarray:
        ok = np.all(np.isfinite(self.estimates), axis=1)
        return self.estimates[ok].std(axis=0, ddof=1)

    def mean_se(self, method: str) -> np.ndarray:
        return np.nanmean(self.se[method], axis=0)


def _se_replica(seed, params, n, burn_in, cfg, methods, B):
    sim_seed, boot_seed = _children(seed)
    k = len(cfg.free_names)
    nan = np.full(k, np.nan)
    ses = {m: nan for m in methods}
    try:
        series, _ = _quiet(simulate, params, n, burn_in=burn_in, seed=sim_seed)
        res = _quiet(fit, series, cfg)
    except BcpError as exc:
        logger.debug("replica failed: %s", exc)
        return nan, ses
    for m in methods:
        try:
            if m == "bootstrap":
                r = _quiet(se_bootstrap, res, series, B=B, seed=boot_seed, burn_in=burn_in,
                           workers=1)
            else:
                r = _quiet(se_asymptotic, res, series, m)
            ses[m] = r.se
        except BcpError as exc:
            logger.debug("%s SE failed: %s", m, exc)
    return res.free_vector(), ses


def se_study(params: ModelParams, n: int, replicas: int, seed=0,
             cfg: Optional[FitConfig] = None, methods: Sequence[str] = ("outer", "hessian"),
             B: int = 500, burn_in: int = DEFAULT_BURN_IN,
             workers: Optional[int] = None) -> SeStudy:
    """Compare standard-error methods against the Monte Carlo spread."""
    cfg = cfg or FitConfig(b_diagonal=params.b_diagonal)
    task = partial(_se_replica, params=params, n=n, burn_in=burn_in, cfg=cfg,
                   methods=tuple(methods), B=B)
    out = pmap(task, replica_seeds(seed, replicas), workers)
    est = np.vstack([e for e, _ in out])
    se = {m: np.vstack([s[m] for _, s in out]) for m in methods}
    return SeStudy(cfg.free_names, est, se)


@dataclass(frozen=True)
class PowerStudy:
    """Rejection rates at ``level`` per ``phi`` value and test."""

    phis: np.ndarray
    rates: Dict[str, np.ndarray]
    n_ok: Dict[str, np.ndarray]
    level: float


def _power_replica(seed, params, n, burn_in, cfg, tests):
    sim_seed, _ = _children(seed)
    pvals = {t: np.nan for t in tests}
    try:
        series, _ = _quiet(simulate, params, n, burn_in=burn_in, seed=sim_seed)
        null = _quiet(fit, series, replace(cfg, phi_fixed=0.0))
    except BcpError as exc:
        logger.debug("replica failed: %s", exc)
        return pvals
    for t in tests:
        try:
            if t == "lrt":
                pvals[t] = _quiet(lrt_phi, series, cfg, null_fit=null).p_value
            else:
                pvals[t] = _quiet(score_test_phi, series, cfg, null_fit=null).p_value
        except BcpError as exc:
            logger.debug("%s failed: %s", t, exc)
    return pvals


def power_study(params: ModelParams, phis: Sequence[float], n: int, replicas: int, seed=0,
                cfg: Optional[FitConfig] = None, tests: Sequence[str] = ("lrt", "score"),
                level: float = 0.05, burn_in: int = DEFAULT_BURN_IN,
                workers: Optional[int] = None) -> PowerStudy:
    """Rejection rates of the tests of ``phi = 0`` over a grid of true ``phi``.

    The same replica seeds are reused for every grid value.
    """
    cfg = cfg or FitConfig(b_diagonal=params.b_diagonal)
    cfg = replace(cfg, phi_fixed=None)
    seeds = replica_seeds(seed, replicas)
    rates = {t: np.empty(len(phis)) for t in tests}
    n_ok = {t: np.empty(len(phis), dtype=np.int64) for t in tests}
    for i, phi in enumerate(phis):
        task = partial(_power_replica, params=params.replace(phi=float(phi)), n=n,
                       burn_in=burn_in, cfg=cfg, tests=tuple(tests))
        out = pmap(task, seeds, workers)
        for t in tests:
            p = np.array([o[t] for o in out])
            ok = np.isfinite(p)
            n_ok[t][i] = ok.sum()
            rates[t][i] = np.mean(p[ok] < level) if ok.any() else np.nan
    return PowerStudy(np.asarray(phis, dtype=np.float64), rates, n_ok, level)
