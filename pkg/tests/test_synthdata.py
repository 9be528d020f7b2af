import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riskcert import synthdata as sd


class TestHolderEta:
    def test_one_dimensional_fixture(self):
        eta = sd.make_holder_eta(1, 1.0, 1.0, center=[0.0], ref=[0.0])
        assert eta(np.array([0.0])) == 0.5
        assert eta(np.array([1.0])) == 1.0

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 5), st.floats(0.2, 1.0), st.integers(0, 1000))
    def test_declared_constant_holds(self, d, alpha, seed):
        lam = d ** (-alpha / 2)
        eta = sd.make_holder_eta(d, alpha, lam, seed)
        rng = np.random.default_rng(seed)
        x, y = rng.uniform(size=(5000, d)), rng.uniform(size=(5000, d))
        ratio = np.abs(eta(x) - eta(y)) / np.linalg.norm(x - y, axis=1) ** alpha
        assert ratio.max() <= lam + 1e-9
        assert np.all((eta(x) >= 0) & (eta(x) <= 1))

    def test_pairwise_oracle_large(self):
        eta = sd.make_holder_eta(3, 0.5, 0.5, seed=2)
        rng = np.random.default_rng(0)
        x, y = rng.uniform(size=(100_000, 3)), rng.uniform(size=(100_000, 3))
        ratio = np.abs(eta(x) - eta(y)) / np.linalg.norm(x - y, axis=1) ** 0.5
        assert ratio.max() <= 0.5 + 1e-9

    @pytest.mark.parametrize("alpha, lam", [(0.0, 0.5), (1.5, 0.5), (1.0, 2.0)])
    def test_rejects(self, alpha, lam):
        with pytest.raises(ValueError):
            sd.make_holder_eta(2, alpha, lam)

    def test_constant_eta(self):
        assert sd.constant_eta(3, 0.25)(np.zeros(3)) == 0.25
        with pytest.raises(ValueError):
            sd.constant_eta(3, 1.5)


class TestTsybakov:
    @pytest.mark.parametrize("q, t, p", [(1.0, 0.1, 0.2), (2.0, 0.5, 0.5)])
    def test_noise_cdf(self, q, t, p):
        est, se = sd.noise_cdf(sd.make_tsybakov_eta(2, q), t, mc_budget=200_000)
        assert abs(est[0] - p) <= 4 * se[0] + 1e-3

    def test_q_zero_fixture(self):
        eta = sd.make_tsybakov_eta(1, 0.0)
        np.testing.assert_array_equal(eta(np.array([[0.2], [0.7]])), [0.25, 0.75])


class TestSampling:
    def test_seed_determinism(self):
        eta = sd.make_holder_eta(2, 1.0, 0.5, seed=1)
        assert sd.sample_dataset(eta, 100, 7) == sd.sample_dataset(eta, 100, 7)
        assert not sd.sample_dataset(eta, 100, 7) == sd.sample_dataset(eta, 100, 8)

    def test_balanced_labels(self):
        ds = sd.sample_dataset(sd.constant_eta(2, 0.5), 10_000, 0)
        assert abs(ds.y.mean()) <= 4 / math.sqrt(10_000)
        assert set(np.unique(ds.y)) == {-1.0, 1.0}

    def test_bayes_risk_linear(self):
        eta = sd.EtaFunction(lambda x: x[:, 0], 1, "identity")
        est, se = sd.bayes_risk(eta, mc_budget=200_000)
        assert abs(est - 0.25) <= 3 * se

    def test_bayes_phi_risk_logistic_half(self):
        est, se = sd.bayes_phi_risk("logistic", sd.constant_eta(2, 0.5), mc_budget=1000)
        assert math.isclose(est, math.log(2), rel_tol=1e-12) and se <= 1e-15

    def test_csv_round_trip(self, tmp_path):
        ds = sd.sample_dataset(sd.make_holder_eta(3, 1.0, 0.5), 50, 3)
        path = tmp_path / "d.csv"
        sd.write_dataset(ds, path, {"note": "x"})
        back = sd.read_dataset(path)
        assert back == ds
        assert back.meta["note"] == "x" and back.seed == 3


class TestManifold:
    def test_samples_stay_near_and_in_cube(self):
        mt = sd.make_manifold_task(10, 2, 0.05, seed=1)
        rng = np.random.default_rng(0)
        X = mt.sampler(rng, 2000)
        assert X.min() >= 0 and X.max() <= 1
        ref = mt.embed(np.random.default_rng(1).uniform(size=(10_000, 2)))
        # nearest-neighbour oracle with discretisation slack
        d2 = ((X[:200, None, :] - ref[None]) ** 2).sum(axis=2).min(axis=1)
        assert np.sqrt(d2).max() <= 0.05 + 0.03

    def test_linear_segment(self):
        mt = sd.make_manifold_task(5, 1, 0.02, seed=3, amp=0.0)
        a, b = mt.embed(np.array([[0.0]]))[0], mt.embed(np.array([[1.0]]))[0]
        X = mt.sampler(np.random.default_rng(0), 5000)
        assert sd.segment_distance(X, a, b).max() <= 0.02 + 1e-12

    def test_rho_zero_warns(self, caplog):
        with caplog.at_level("WARNING"):
            sd.make_manifold_task(4, 1, 0.0)
        assert "rho = 0" in caplog.text

    def test_eta_depends_on_intrinsic_coordinates(self):
        base = sd.make_holder_eta(2, 1.0, 0.5, seed=0)
        mt = sd.make_manifold_task(8, 2, 0.0, seed=0, intrinsic_eta=base)
        u = np.random.default_rng(2).uniform(size=(100, 2))
        np.testing.assert_allclose(mt.eta()(mt.embed(u)), base(u), atol=1e-12)


class TestProjection:
    @pytest.mark.parametrize("d, k", [(64, 8), (20, 4), (5, 5), (3, 1)])
    def test_aat(self, d, k):
        A = sd.random_projection(d, k, seed=d + k)
        assert np.abs(A @ A.T - d / k * np.eye(k)).max() <= 1e-9

    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            sd.random_projection(3, 4)

    def test_distortion_check(self):
        mt = sd.make_manifold_task(64, 2, 0.0, seed=0)
        pts = mt.embed(np.random.default_rng(0).uniform(size=(2000, 2)))
        res = sd.projection_distortion_check(pts, 8, 0.5)
        assert res.passed and res.attempts <= 20
        assert len(res.seeds) == res.attempts
