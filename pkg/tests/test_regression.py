import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import cap_points
from sphsar.errors import SingularDesignError
from sphsar.models import fit_pssar, fit_srmsar
from sphsar.regression import (CovariateTable, IllConditionedWarning, conditional_frechet_mean, conditional_means,
                               global_frechet_weights, srmsar_transports)
from sphsar.simulation import SimConfig, generate_pssar_dataset, generate_srmsar_dataset
from sphsar.sphere import FrechetMeanOptions, log_map

OPTS = FrechetMeanOptions(max_iterations=2000, check_support=False)


def test_weight_sum_identity(rng):
    X = rng.standard_normal((50, 3))
    t = CovariateTable(X)
    for x0 in rng.standard_normal((20, 3)) * 3:
        assert abs(global_frechet_weights(t, x0).sum() - 50) <= 1e-8


def test_weights_at_mean_are_unity(rng):
    X = rng.standard_normal((10, 2))
    t = CovariateTable(X)
    assert_allclose(global_frechet_weights(t, X.mean(axis=0)), 1.0, atol=1e-12)


def test_weight_formula(rng):
    X = rng.standard_normal((12, 2))
    x0 = np.array([0.3, -1.0])
    Sigma = np.cov(X.T, bias=True)
    ref = 1 + (X - X.mean(0)) @ np.linalg.solve(Sigma, x0 - X.mean(0))
    assert_allclose(CovariateTable(X).weights(x0), ref, rtol=1e-12)


def test_constant_columns_dropped(rng):
    X = np.column_stack([rng.standard_normal(8), np.full(8, 2.0)])
    t = CovariateTable(X)
    assert t.active.tolist() == [True, False]
    assert_allclose(t.weights([0.5, 7.0]), CovariateTable(X[:, :1]).weights([0.5]))


def test_singular_and_ridge():
    X = np.column_stack([np.arange(6.0), 2 * np.arange(6.0)])
    with pytest.raises(SingularDesignError):
        CovariateTable(X)
    t = CovariateTable(X, ridge=1e-3)
    assert np.isfinite(t.condition_number)


def test_ill_conditioned_warning():
    x = np.arange(6.0)
    X = np.column_stack([x, x + 1e-6 * np.array([1, -1, 1, -1, 1, -1])])
    with pytest.warns(IllConditionedWarning):
        CovariateTable(X)


def test_first_order_condition_at_sites(rng):
    Y = cap_points(rng, 4, 30, spread=0.3)
    X = rng.standard_normal((30, 2))
    t = CovariateTable(X)
    for i in range(0, 30, 7):
        s = t.weights(X[i])
        mu = conditional_frechet_mean(Y, t, X[i], OPTS, rng=np.random.default_rng(i))
        assert np.linalg.norm((s @ log_map(mu.coords, Y)) / s.sum()) < OPTS.tolerance


def test_all_equal_covariates_reduce_to_pure_model():
    data = generate_pssar_dataset(SimConfig(n=80, rho0=0.4, kappa=5.0), np.random.default_rng(4))
    pure = fit_pssar(data.points, data.W, opts=OPTS)
    reg = fit_srmsar(data.points, np.ones((80, 2)), data.W, opts=OPTS)
    assert abs(reg.estimate - pure.estimate) <= 1e-10
    assert_allclose(reg.base, np.broadcast_to(pure.center.coords, reg.base.shape), atol=1e-12)


def test_field_cache_and_shapes(rng):
    Y = cap_points(rng, 3, 12)
    X = np.repeat(rng.standard_normal((4, 1)), 3, axis=0)
    field_ = conditional_means(Y, CovariateTable(X), opts=OPTS)
    assert field_.coords().shape == (12, 3)
    assert field_.means[0] is field_.means[1]


def test_srmsar_transports_invert(rng):
    data = generate_srmsar_dataset(SimConfig(model_kind="srmsar", n=40, kappa=20.0), np.random.default_rng(5))
    xi, field_ = srmsar_transports(data.points, CovariateTable(data.covariates), OPTS)
    assert_allclose(xi.exp_at(field_.coords()), data.points, atol=1e-10)


def test_srmsar_recovers_lambda_when_concentrated():
    cfg = SimConfig(model_kind="srmsar", n=200, rho0=0.4, kappa=50.0)
    est = []
    for s in range(10):
        d = generate_srmsar_dataset(cfg, np.random.default_rng(100 + s))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            est.append(fit_srmsar(d.points, d.covariates, d.W, opts=OPTS, pca_fraction=None).estimate)
    assert abs(np.mean(est) - 0.4) < 0.12
