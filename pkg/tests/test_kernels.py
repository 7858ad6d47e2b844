"""Sampler quality and agreement between the compiled and Python kernels."""
import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from bcpingarch import _kernels_py, process
from bcpingarch._backend import BACKEND, available_backends

BACKENDS = available_backends()
needs_both = pytest.mark.skipif("cython" not in BACKENDS, reason="extension not built")


def _draws(mod, mu, size, seed):
    stream = mod.UniformStream(np.random.default_rng(seed))
    return mod.poisson_draws(np.full(size, mu), stream)


@pytest.mark.parametrize("mu", [0.3, 3.0, 9.9, 10.0, 25.0, 400.0])
def test_poisson_sampler_goodness_of_fit(mu):
    x = _draws(_kernels_py if BACKEND == "python" else BACKENDS["cython"], mu, 200_000, 1)
    lo, hi = stats.poisson.ppf([1e-4, 1 - 1e-4], mu).astype(int)
    edges = np.arange(lo, hi + 2)
    observed = np.array([(x < lo).sum()] + [(x == k).sum() for k in edges[:-1]]
                        + [(x > hi).sum()])
    probs = np.concatenate([[stats.poisson.cdf(lo - 1, mu)], stats.poisson.pmf(edges[:-1], mu),
                            [stats.poisson.sf(hi, mu)]])
    expected = probs * x.size
    keep = expected > 5
    chi = ((observed[keep] - expected[keep]) ** 2 / expected[keep]).sum()
    assert stats.chi2.sf(chi, keep.sum() - 1) > 1e-4
    assert abs(x.mean() - mu) < 5 * np.sqrt(mu / x.size)


def test_poisson_zero_mean_is_zero():
    stream = _kernels_py.UniformStream(np.random.default_rng(0))
    assert _kernels_py.poisson(0.0, stream) == 0


@needs_both
@pytest.mark.parametrize("mu", [0.7, 5.0, 12.0, 1e4])
def test_backends_draw_identical_poisson_streams(mu):
    a = _draws(BACKENDS["python"], mu, 5000, 9)
    b = _draws(BACKENDS["cython"], mu, 5000, 9)
    assert_array_equal(a, b)


@needs_both
@pytest.mark.parametrize("factory", [process.config_a, process.config_b, process.se_setting])
def test_backends_simulate_identically(factory):
    p = factory()
    out = []
    for mod in (BACKENDS["python"], BACKENDS["cython"]):
        stream = mod.UniformStream(np.random.default_rng(5))
        out.append(mod.simulate_path(p.omega, p.a, p.b, p.phi, 400, 3.0, 2.0, stream))
    assert_array_equal(out[0][0], out[1][0])
    assert_allclose(out[0][1], out[1][1], rtol=0, atol=0)


@needs_both
def test_backends_likelihood_and_scores_agree(series_a):
    s, _ = series_a
    theta = process.config_a().full_vector()
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    args = (theta, s.values, 3.1, 2.7)
    assert_allclose(py.loglik(*args), cy.loglik(*args), rtol=1e-13)
    assert_allclose(py.loglik_terms(*args), cy.loglik_terms(*args), rtol=1e-12)
    assert_allclose(py.loglik_grad(*args)[1], cy.loglik_grad(*args)[1], rtol=1e-11)
    assert_allclose(py.score_terms(*args), cy.score_terms(*args), rtol=1e-11, atol=1e-12)
    assert_allclose(py.filter_path(*args), cy.filter_path(*args), rtol=1e-14)


def test_nonpositive_mean_gives_minus_inf():
    theta = np.array([0, 0, 0, 0, 0, 0, -1.0, 1.0, 0.0])
    y = np.array([[1, 1], [2, 2]], dtype=np.int64)
    for mod in BACKENDS.values():
        assert mod.loglik(theta, y, 1.0, 1.0) == -np.inf
        assert np.all(np.isnan(mod.score_terms(theta, y, 1.0, 1.0)))
