from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from sphsar.simulation import (RHO_GRID, SimConfig, estimation_summary, generate_pssar_dataset,
                               generate_srmsar_dataset, neighbour_schedule, preset_config, replicate_rngs,
                               run_estimation_experiment, run_power_experiment, run_prediction_experiment,
                               sample_vmf, uniform_mean_direction)

# E<x, mu> and Var<x, mu> under vMF, by 1-D quadrature of the cosine density
# exp(kappa t) (1 - t^2)^{(m-3)/2} on [-1, 1]
VMF_COSINE = {
    (50.0, 3): (0.98, 0.00040000000000006697),
    (1.0, 6): (0.16330611761053426, 0.15680052389830362),
    (5.0, 6): (0.5901620816434182, 0.06154663574688907),
}


class TestVmf:
    @pytest.mark.parametrize("kappa,m", sorted(VMF_COSINE))
    def test_mean_cosine_vs_quadrature(self, kappa, m):
        mu = uniform_mean_direction(m)
        X = sample_vmf(mu, kappa, np.random.default_rng(7), size=20000)
        t = X @ mu
        mean, var = VMF_COSINE[(kappa, m)]
        assert abs(t.mean() - mean) <= 3 * np.sqrt(var / t.size)
        assert_allclose(np.linalg.norm(X, axis=1), 1.0, atol=1e-14)

    def test_uniform_at_zero_concentration(self):
        X = sample_vmf(uniform_mean_direction(4), 0.0, np.random.default_rng(0), size=40000)
        assert np.linalg.norm(X.mean(axis=0)) < 0.02
        # the cosine with any fixed axis has a symmetric law
        assert abs(np.mean(X[:, 0])) < 0.015

    def test_cross_check_with_scipy(self):
        mu = uniform_mean_direction(6)
        ours = sample_vmf(mu, 3.0, np.random.default_rng(1), size=5000) @ mu
        ref = stats.vonmises_fisher(mu, 3.0).rvs(5000, random_state=np.random.default_rng(2)) @ mu
        assert stats.ks_2samp(ours, ref).pvalue > 1e-3

    def test_tangent_direction_isotropic(self):
        mu = uniform_mean_direction(3)
        X = sample_vmf(mu, 2.0, np.random.default_rng(3), size=30000)
        T = X - np.outer(X @ mu, mu)
        C = T.T @ T / len(T)
        P = np.eye(3) - np.outer(mu, mu)
        assert_allclose(C, np.trace(C) / 2 * P, atol=0.01)

    def test_single_draw_shape(self):
        assert sample_vmf(uniform_mean_direction(5), 1.0, np.random.default_rng(0)).dim == 5


class TestGenerators:
    def test_rho_zero_gives_errors(self):
        d = generate_pssar_dataset(SimConfig(n=30, rho0=0.0), np.random.default_rng(0))
        assert np.array_equal(d.transports.coef, d.errors.coef)

    def test_spatial_mix_solves_system(self):
        d = generate_pssar_dataset(SimConfig(n=40, rho0=0.6), np.random.default_rng(1))
        S = np.eye(40) - 0.6 * d.W.toarray()
        assert_allclose(S @ d.transports.coef, d.errors.coef, atol=1e-12)

    def test_points_are_unit_and_exp_of_transports(self):
        d = generate_pssar_dataset(SimConfig(n=30, rho0=0.4), np.random.default_rng(2))
        assert_allclose(np.linalg.norm(d.points, axis=1), 1.0, atol=1e-14)
        assert_allclose(d.transports.exp_at(d.mean_dir), d.points)

    def test_srmsar_zero_scale_matches_pure(self):
        cfg = SimConfig(model_kind="srmsar", n=30, rho0=0.4, covariate_scale=0.0)
        s = generate_srmsar_dataset(cfg, np.random.default_rng(3))
        assert_allclose(s.site_means, np.broadcast_to(s.mean_dir, s.site_means.shape), atol=1e-15)
        assert s.covariates.shape == (30, 2)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SimConfig(rho0=1.0)
        with pytest.raises(ValueError):
            SimConfig(n=10, k=10)
        with pytest.raises(ValueError):
            preset_config("table9")

    def test_neighbour_schedule(self):
        assert [neighbour_schedule(n) for n in (200, 500, 1000)] == [10, 20, 30]

    def test_replicate_streams_independent_of_count(self):
        a = [r.random() for r in replicate_rngs(5, 3)]
        b = [r.random() for r in replicate_rngs(5, 6)][:3]
        assert a == b


class TestExperiments:
    def test_estimation_table_and_identity(self):
        cfg = SimConfig(n=100, replications=20, seed=1)
        t = run_estimation_experiment(cfg, rho_grid=(0.0, 0.4))
        for row in t.sorted_rows():
            assert abs(row["rmse"] ** 2 - (row["sd"] ** 2 + row["bias"] ** 2)) <= 1e-10
        assert len(t.rows) == 2 and t.lookup(rho0=0.4)["replications"] == 20

    def test_summary(self):
        s = estimation_summary(np.array([0.1, 0.3]), 0.0)
        assert s["bias"] == pytest.approx(0.2) and s["sd"] == pytest.approx(0.1)

    def test_csv_is_byte_identical(self, tmp_path):
        cfg = SimConfig(n=60, replications=6, seed=3, B=20)
        a = run_power_experiment(cfg, rho_grid=(0.0, 0.9)).to_csv(tmp_path / "a.csv")
        b = run_power_experiment(cfg, rho_grid=(0.0, 0.9)).to_csv(tmp_path / "b.csv")
        assert a == b and (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_parallel_matches_serial(self):
        cfg = SimConfig(n=60, replications=4, seed=4)
        assert run_estimation_experiment(cfg, workers=1).to_csv() == run_estimation_experiment(cfg, workers=2).to_csv()

    def test_power_monotone_in_signal(self):
        cfg = SimConfig(n=200, replications=20, B=50, seed=5)
        t = run_power_experiment(cfg, rho_grid=(0.0, 0.4, 0.9))
        p = [r["bootstrap_power"] for r in t.sorted_rows()]
        assert all(b >= a - 0.05 for a, b in zip(p, p[1:]))
        assert p[-1] == 1.0

    def test_prediction_table(self):
        cfg = SimConfig(n=80, replications=5, seed=6, rho0=0.4)
        t = run_prediction_experiment(cfg)
        measures = {r["measure"] for r in t.rows}
        assert {"prediction_error", "coverage_0.95", "width_0.8"} <= measures
        w = [t.lookup(measure=f"width_{lv}")["value"] for lv in (0.8, 0.9, 0.95)]
        assert w == sorted(w)

    def test_presets(self):
        cfg = preset_config("table1", space="s110", n=1000, seed=7)
        assert (cfg.m, cfg.n, cfg.k, cfg.seed, cfg.replications) == (111, 1000, 10, 7, 200)
        assert replace(cfg, rho0=0.4).rho0 == 0.4
        assert set(RHO_GRID) == {-0.7, -0.3, 0.0, 0.1, 0.4, 0.9}
