import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from bcpingarch import bcp_dist as bd
from bcpingarch import estimation as es
from bcpingarch import forecast as fc
from bcpingarch import process as pr
from bcpingarch.exceptions import ConvergenceError, DomainError, NumericalError

DIAG = es.FitConfig(b_diagonal=True)


def frozen(p, s):
    return es.result_at(p, s, es.FitConfig(b_diagonal=p.b_diagonal))


def brute_joint_mode(l1, l2, phi, size=201):
    z1 = np.arange(size)[:, None]
    z2 = np.arange(size)[None, :]
    m = l2 * np.exp(-l1 * np.expm1(phi) + phi * z1)
    lp = stats.poisson.logpmf(z1, l1) + stats.poisson.logpmf(z2, m)
    return np.unravel_index(np.argmax(lp), lp.shape)


class TestOneStep:
    def test_static_model_gives_poisson_modes(self, series_a):
        s, _ = series_a
        p = pr.ModelParams([3.7, 1.2], np.zeros((2, 2)), np.zeros((2, 2)), 0.0)
        rec = fc.one_step(frozen(p, s), s)
        assert rec.point_joint == (3, 1)
        assert rec.lambda_next == (3.7, 1.2)
        assert rec.t == len(s)

    def test_lambda_is_advanced_filter(self, series_a):
        s, lam = series_a
        p = pr.config_a()
        f = es.result_at(p, s, es.FitConfig(lambda_init=tuple(lam.values[0])))
        expected = pr.lambda_update(lam.values[-1], s.values[-1], p)
        assert_allclose(fc.next_lambda(f, s), expected, rtol=1e-13)

    def test_matches_brute_force(self, rng):
        for _ in range(10):
            p = pr.ModelParams([rng.uniform(0.5, 3), rng.uniform(0.5, 3)],
                               np.diag(rng.uniform(0.1, 0.4, 2)),
                               np.diag(rng.uniform(0.1, 0.4, 2)),
                               rng.uniform(-0.8, 0.8), b_diagonal=True)
            s, _ = pr.simulate(p, 60, seed=int(rng.integers(1 << 30)))
            f = frozen(p, s)
            rec = fc.one_step(f, s)
            assert rec.point_joint == brute_joint_mode(*rec.lambda_next, p.phi)

    def test_deterministic(self, series_se):
        s, _ = series_se
        f = frozen(pr.se_setting(), s)
        assert fc.one_step(f, s) == fc.one_step(f, s)

    def test_pmf_grid_peaks_at_joint_mode(self, series_se):
        s, _ = series_se
        f = frozen(pr.se_setting(), s)
        grid = fc.forecast_pmf(f, s)
        assert grid.sum() > 1 - 1e-8
        peak = np.unravel_index(np.argmax(grid), grid.shape)
        assert tuple(int(v) for v in peak) == fc.one_step(f, s).point_joint

    def test_record_dict(self):
        rec = fc.ForecastRecord(5, (1.0, 2.0), (1, 2), 3, (0, 4))
        assert rec.as_dict() == {"t": 5, "lambda_next": [1.0, 2.0], "point_joint": [1, 2],
                                 "point_conditional": 3, "actual": [0, 4]}


class TestConditional:
    def test_independent_of_first_when_phi_zero(self, series_a):
        s, _ = series_a
        f = frozen(pr.config_a().replace(phi=0.0), s)
        preds = {fc.conditional_one_step(f, s, y) for y in range(0, 60)}
        assert len(preds) == 1

    @given(st.floats(0.1, 20), st.floats(0.1, 20), st.floats(-1.5, 1.5), st.integers(0, 25))
    @settings(max_examples=200, deadline=None)
    def test_matches_brute_force(self, l1, l2, phi, y1):
        mean = fc.conditional_mean_second((l1, l2), phi, y1)
        if mean > 400:
            return
        grid = np.arange(501)
        lp = stats.poisson.logpmf(grid, mean)
        best = np.flatnonzero(np.isclose(lp, lp.max(), rtol=1e-12, atol=0))
        assert bd.poisson_mode(mean) == grid[best[0]]

    def test_conditional_mean_formula(self):
        got = fc.conditional_mean_second((2.0, 3.0), 0.4, 5)
        assert got == pytest.approx(3.0 * np.exp(-2.0 * np.expm1(0.4) + 0.4 * 5), rel=1e-14)

    def test_overflow_and_domain(self):
        with pytest.raises(NumericalError):
            fc.conditional_mean_second((1.0, 1.0), 5.0, 200)
        with pytest.raises(DomainError):
            fc.conditional_mean_second((1.0, 1.0), 0.1, -1)


class TestMetrics:
    def test_perfect_predictor(self):
        y = np.array([[1, 2], [3, 4], [0, 7]])
        path, rmse, mae = fc.error_metrics(y, y)
        assert np.all(path == 0) and np.all(rmse == 0) and np.all(mae == 0)

    def test_constant_predictor(self):
        y = np.array([3.0, 5.0, 1.0, 7.0])
        c = 4.0
        path, rmse, mae = fc.error_metrics(y, np.full(4, c))
        assert rmse[0] == pytest.approx(np.sqrt(np.mean((y - c) ** 2)))
        assert mae[0] == pytest.approx(2.0)
        assert path[0, 0] == pytest.approx(1.0)
        assert path[1, 0] == pytest.approx(1.0)

    @given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50)), min_size=1, max_size=60))
    def test_final_path_is_rmse_and_jensen(self, pairs):
        a = np.array(pairs)
        predicted = np.roll(a, 1, axis=0)
        path, rmse, mae = fc.error_metrics(a, predicted)
        assert_array_equal(path[-1], rmse)
        assert np.all(mae <= rmse + 1e-12)

    def test_empty(self):
        with pytest.raises(DomainError):
            fc.error_metrics(np.empty((0, 2)), np.empty((0, 2)))


class TestRolling:
    def test_protocol_shape(self):
        s, _ = pr.simulate(pr.se_setting(), 216, seed=40)
        r = fc.rolling_eval(s, 116, DIAG, conditional_on_first=True)
        assert len(r.records) == 100 and len(r.fits) == 100
        assert [rec.t for rec in r.records] == list(range(116, 216))
        assert r.rmsfe.shape == (100, 2)
        assert_array_equal(r.rmsfe[-1], r.rmse)
        assert r.rmsfe_conditional[-1] == r.rmse_conditional
        assert np.all(r.mae <= r.rmse)
        for rec in r.records:
            assert rec.actual == tuple(int(v) for v in s.values[rec.t])
        assert r.fits[0].n_used == 115 and r.fits[-1].n_used == 214

    def test_frozen_is_deterministic(self, series_se):
        s, _ = series_se
        f = es.fit(s.head(400), DIAG)
        a = fc.rolling_eval(s, 400, DIAG, refit=False, initial_fit=f)
        b = fc.rolling_eval(s, 400, DIAG, refit=False, initial_fit=f)
        assert a.records == b.records and not a.fits
        one = fc.one_step(f, s.head(450))
        assert a.records[50].point_joint == one.point_joint

    def test_bounds(self, series_se):
        s, _ = series_se
        with pytest.raises(DomainError):
            fc.rolling_eval(s, 10)
        with pytest.raises(DomainError):
            fc.rolling_eval(s, len(s))

    def test_failure_keeps_partial(self, series_se, monkeypatch):
        s, _ = series_se
        real_fit = fc.fit
        calls = []

        def flaky(*args, **kwargs):
            calls.append(1)
            if len(calls) == 4:
                raise ConvergenceError("forced")
            return real_fit(*args, **kwargs)

        monkeypatch.setattr(fc, "fit", flaky)
        with pytest.raises(fc.RollingEvalError) as info:
            fc.rolling_eval(s.head(60), 50, DIAG)
        assert info.value.index == 53
        assert len(info.value.partial.records) == 3
