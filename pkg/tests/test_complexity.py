import math

import numpy as np
import pytest

from riskcert import complexity as cx
from riskcert import net_core as nc


class TestClosedForms:
    @pytest.mark.parametrize("args, expected", [
        ((2, 1.0, 1.0), 2 * math.log(3)),
        ((3, 2.0, 0.5), 3 * math.log(9)),
    ])
    def test_ball(self, args, expected):
        assert math.isclose(cx.cover_bound_ball(*args), expected, rel_tol=1e-12)

    def test_ball_values_to_five_digits(self):
        assert round(cx.cover_bound_ball(2, 1.0, 1.0), 4) == 2.1972
        assert round(cx.cover_bound_ball(3, 2.0, 0.5), 4) == 6.5917

    def test_dense(self):
        assert math.isclose(cx.cover_bound_dense(2, 1, 1, 1, 1, 1), 3 * math.log(5), rel_tol=1e-12)
        assert math.isclose(cx.cover_bound_dense(4, 2, 2, 1, 2, 0.5), 10 * math.log(25), rel_tol=1e-12)

    def test_conv(self):
        v = cx.cover_bound_conv(1, 2, 2, 1, 1, 1, 1)
        assert math.isclose(v, 4 * math.log(1 + 2 * (math.sqrt(2) + 1)), rel_tol=1e-12)
        assert math.isclose(v, 7.05099, rel_tol=1e-5)
        v2 = cx.cover_bound_conv(2, 4, 6, 1, 1, 1, 0.5)
        assert math.isclose(v2, 20 * math.log(1 + 4 * (math.sqrt(6) + 1)), rel_tol=1e-12)

    def test_cnn_forms(self):
        assert math.isclose(cx.cover_bound_cnn(33, 2, 4, 1, "statement"), 66 * math.log(9), rel_tol=1e-12)
        assert math.isclose(cx.cover_bound_cnn(10, 3, 2, 1, "proof"),
                            min(10 * math.log(25), 20 * math.sqrt(24)), rel_tol=1e-12)
        assert cx.cover_bound_cnn(10, 3, 2, math.inf) == 0.0
        with pytest.raises(ValueError):
            cx.cover_bound_cnn(10, 3, 2, 1, "other")

    def test_nonpositive_eps(self):
        for fn, args in [(cx.cover_bound_ball, (2, 1.0)), (cx.cover_bound_cnn, (1, 1, 1.0))]:
            with pytest.raises(ValueError):
                fn(*args, 0.0)
            with pytest.raises(ValueError):
                fn(*args, -1.0)

    def test_monotone_in_eps(self):
        eps = np.geomspace(1e-3, 10, 30)
        for form in ("statement", "proof"):
            v = [cx.cover_bound_cnn(50, 4, 3.0, e, form) for e in eps]
            assert all(b <= a for a, b in zip(v, v[1:]))

    def test_rademacher(self):
        assert math.isclose(cx.rademacher_bound(100, 16, 1, 10_000), 16 * math.sqrt(2) * 20 / 100, rel_tol=1e-12)
        assert math.isclose(cx.rademacher_bound(1, 1, 1, 1), 22.6274, rel_tol=1e-5)

    def test_estimation_bound(self):
        eb = cx.estimation_bound(cx.ComplexityInputs(100, 16, 1.0, 10_000, 0.01, 1.0))
        assert math.isclose(eb.erm_gap, 4.58618, rel_tol=1e-5)
        assert eb.erm_gap == 2 * eb.sup_dev

    def test_estimation_bound_validates(self):
        with pytest.raises(ValueError):
            cx.ComplexityInputs(0, 1, 1.0, 1, 0.1, 1.0)
        with pytest.raises(ValueError):
            cx.ComplexityInputs(1, 1, 1.0, 1, 1.5, 1.0)

    def test_dudley_finite_and_decreasing_in_n(self):
        a = cx.dudley_entropy_bound(20, 3, 2.0, 100)
        b = cx.dudley_entropy_bound(20, 3, 2.0, 10_000)
        assert 0 < b < a < math.inf
        assert cx.dudley_entropy_bound(20, 3, 0.0, 100) == 0.0


class TestPacking:
    def test_linear_class_spacing(self):
        # {a x : a in [0,1]} on [0,1]: sup distance |a - a'|, separation > 0.2
        sampler = lambda rng: (lambda x, a=rng.uniform(): a * x)
        res = cx.empirical_packing(sampler, np.linspace(0, 1, 11), 0.1, budget=3000)
        assert 4 <= res.count <= 5
        assert not res.exhausted

    def test_greedy_packing_separation(self):
        rng = np.random.default_rng(0)
        vals = rng.uniform(size=(800, 3))
        count, last = cx.greedy_packing(vals, 0.3)
        assert 0 <= last < 800 and count >= 1
        # rebuild the packing by hand
        kept = []
        for v in vals:
            if all(np.abs(v - u).max() > 0.3 for u in kept):
                kept.append(v)
        assert len(kept) == count

    def test_packing_below_dense_cover(self):
        specs = [nc.dense(1, 1, 1.0, "relu")]
        sampler = cx.network_class_sampler(specs)
        grid = np.linspace(-1, 1, 64)
        for eps in (0.05, 0.1, 0.2):
            res = cx.empirical_packing(sampler, grid, eps, budget=2000)
            assert math.log(res.count) <= cx.cover_bound_dense(1, 1, 1.0, 1.0, 1.0, eps)

    def test_sampler_requires_budgets(self):
        with pytest.raises(ValueError):
            cx.network_class_sampler([nc.dense(1, 1)])


class TestRademacher:
    def test_single_function_is_near_zero(self):
        est = cx.empirical_rademacher(np.ones((1, 50)), np.zeros(50), num_sigma=4000)
        assert abs(est.value) <= 4 * est.stderr + 1e-12

    def test_sign_class_is_one(self):
        # all 2^n sign vectors: sup equals 1 for every sigma
        n = 6
        F = np.array([[1.0 if (k >> i) & 1 else -1.0 for i in range(n)] for k in range(2 ** n)])
        est = cx.empirical_rademacher(F, np.zeros(n), num_sigma=200)
        assert est.value == 1.0 and est.stderr == 0.0

    def test_below_closed_form(self):
        specs = [nc.dense(1, 1, 1.0, "identity")]
        rng = np.random.default_rng(0)
        X = rng.uniform(-1, 1, size=(100, 1))
        est = cx.empirical_rademacher(cx.network_class_sampler(specs), X, num_sigma=500,
                                      num_candidates=300)
        S = nc.param_count(specs)
        bound = cx.rademacher_bound(S, 1, nc.output_bound(specs, 1.0), 100)
        assert est.value <= bound + 2 * est.stderr

    def test_accepts_network_list(self):
        rng = np.random.default_rng(1)
        nets = [nc.init_network([nc.dense(2, 1, 1.0, "identity")], rng) for _ in range(5)]
        X = rng.uniform(size=(20, 2))
        a = cx.empirical_rademacher(nets, X, seed=3)
        F = np.stack([nc.forward(n, X)[:, 0] for n in nets])
        b = cx.empirical_rademacher(F, X, seed=3)
        assert a == b
