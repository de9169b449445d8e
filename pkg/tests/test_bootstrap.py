import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from sphsar.bootstrap import (_ReplicateTraces, bootstrap_gram, bootstrap_null_test, order_statistic,
                              order_statistic_interval)
from sphsar.errors import ConvergenceError
from sphsar.gmm import TraceOperators, fit_sar
from sphsar.simulation import SimConfig, generate_pssar_dataset


def problem(seed, n=25, rho0=0.0):
    return generate_pssar_dataset(SimConfig(n=n, k=4, rho0=rho0), np.random.default_rng(seed))


@given(st.integers(0, 10_000))
def test_replicate_traces_match_reference_gram(seed):
    data = problem(seed % 50)
    fit = fit_sar(data.transports, data.W)
    ops = TraceOperators.build(data.W)
    traces = _ReplicateTraces(fit.gram, ops)
    idx = np.random.default_rng(seed).integers(0, 25, 25)
    ref = ops.coefficients(bootstrap_gram(fit.gram, idx))
    got = traces(idx)
    scale = abs(ref.a) + abs(ref.b) + abs(ref.c)
    assert_allclose([got.a, got.b, got.c], [ref.a, ref.b, ref.c], atol=1e-10 * scale)


def test_reference_gram_is_resampled_and_recentered():
    data = problem(1)
    fit = fit_sar(data.transports, data.W)
    idx = np.arange(25)[::-1]
    cen = data.transports.take(idx).centered()
    assert_allclose(bootstrap_gram(fit.gram, idx), cen.gram(), atol=1e-12)


def test_order_statistics():
    v = np.arange(1.0, 11.0)
    assert order_statistic(v, 0.025) == 1.0
    assert order_statistic(v, 0.5) == 5.0
    assert order_statistic(v, 0.975) == 10.0
    assert order_statistic_interval(v[::-1], 0.2) == (1.0, 9.0)


def test_deterministic_and_seed_sensitive():
    data = problem(2, n=60)
    fit = fit_sar(data.transports, data.W)
    a = bootstrap_null_test(fit.gram, data.W, B=50, seed=9)
    b = bootstrap_null_test(fit.gram, data.W, B=50, seed=9)
    c = bootstrap_null_test(fit.gram, data.W, B=50, seed=10)
    assert a.replicate_estimates.tobytes() == b.replicate_estimates.tobytes()
    assert not np.array_equal(a.replicate_estimates, c.replicate_estimates)
    assert a.ci_lo <= a.ci_hi and a.B == 50 and a.n_failed == 0
    assert a.interval(0.5)[0] >= a.ci_lo


def test_rejects_strong_dependence():
    data = problem(3, n=200, rho0=0.9)
    fit = fit_sar(data.transports, data.W)
    res = bootstrap_null_test(data.transports.centered(), data.W, None, fit.estimate, B=100, seed=0)
    assert res.reject and not (res.ci_lo <= fit.estimate <= res.ci_hi)


def test_zero_residuals_abort():
    data = problem(4)
    with pytest.raises(ConvergenceError):
        bootstrap_null_test(np.zeros((25, 25)), data.W, estimate=0.0, B=20)


def test_argument_checks():
    data = problem(5)
    G = np.eye(25)
    with pytest.raises(ValueError):
        bootstrap_null_test(G, data.W, B=0)
    with pytest.raises(ValueError):
        bootstrap_null_test(G, data.W, alpha=1.5)
    with pytest.raises(ValueError):
        bootstrap_null_test(np.eye(3), data.W)
