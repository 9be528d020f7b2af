import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riskcert import loss_calc as lc

ALL = [lc.SurrogateLoss(k, 2.0) if k in lc.MODIFIED else lc.SurrogateLoss(k) for k in lc.KINDS]


class TestPhi:
    def test_values(self):
        assert lc.phi("least_squares", 0.0) == 1.0
        assert lc.phi("hinge", 2.0) == 0.0
        ml = lc.SurrogateLoss("modified_logistic", 2.0)
        assert math.isclose(lc.phi(ml, 5.0), math.log1p(math.exp(-2.0)), rel_tol=1e-12)
        assert math.isclose(lc.phi(ml, 5.0), 0.126928, rel_tol=1e-5)
        assert math.isclose(lc.phi(ml, -1.0), math.log1p(math.e), rel_tol=1e-12)

    def test_floor_is_tau(self):
        me = lc.SurrogateLoss("modified_exponential", 3.0)
        assert me.tau == math.exp(-3.0)
        assert lc.phi(me, 10.0) == me.tau

    def test_modified_needs_T(self):
        with pytest.raises(ValueError):
            lc.SurrogateLoss("modified_logistic")

    @pytest.mark.parametrize("loss", ALL, ids=lambda l: l.kind)
    def test_nonnegative_and_convex(self, loss):
        a = np.linspace(-8, 8, 4001)
        v = lc.phi(loss, a)
        assert np.all(v >= 0)
        assert np.all(np.diff(v, 2) >= -1e-9)

    @pytest.mark.parametrize("loss", ALL, ids=lambda l: l.kind)
    def test_derivative_matches_differences(self, loss):
        a = np.linspace(-3, 3, 37) + 0.0123
        h = 1e-6
        fd = (lc.phi(loss, a + h) - lc.phi(loss, a - h)) / (2 * h)
        np.testing.assert_allclose(lc.dphi(loss, a), fd, atol=1e-5)


class TestConditionalRisk:
    def test_least_squares_at_minimizer(self):
        assert math.isclose(lc.conditional_risk("least_squares", 0.75, 0.5), 0.75)

    @pytest.mark.parametrize("loss", ALL, ids=lambda l: l.kind)
    def test_symmetric_point(self, loss):
        assert lc.conditional_risk(loss, 0.5, 0.0) == lc.phi(loss, 0.0)

    def test_exponential(self):
        v = lc.conditional_risk("exponential", 0.75, 0.5 * math.log(3))
        assert math.isclose(v, 2 * math.sqrt(0.75 * 0.25), rel_tol=1e-12)
        assert math.isclose(v, 0.866025, rel_tol=1e-6)


class TestMinimizer:
    def test_values(self):
        assert math.isclose(lc.pointwise_minimizer("logistic", 0.75, 10), math.log(3), rel_tol=1e-12)
        assert lc.pointwise_minimizer("least_squares", 0.5) == 0.0
        assert lc.pointwise_minimizer("exponential", 0.99, 1.0) == 1.0
        assert math.isclose(lc.pointwise_minimizer("exponential", 0.99), 0.5 * math.log(99), rel_tol=1e-12)

    def test_hinge_sign_zero_positive(self):
        assert lc.pointwise_minimizer("hinge", 0.5) == 1.0
        assert lc.pointwise_minimizer("hinge", 0.2) == -1.0

    @pytest.mark.parametrize("kind", ["logistic", "exponential"])
    def test_unbounded_needs_T(self, kind):
        with pytest.raises(lc.UnboundedMinimizerError):
            lc.pointwise_minimizer(kind, 1.0)
        assert lc.pointwise_minimizer(kind, 1.0, 3.0) == 3.0
        assert lc.pointwise_minimizer(kind, 0.0, 3.0) == -3.0

    def test_eta_range(self):
        with pytest.raises(ValueError):
            lc.pointwise_minimizer("least_squares", 1.2)

    @pytest.mark.parametrize("loss", ALL, ids=lambda l: l.kind)
    def test_optimality(self, loss):
        rng = np.random.default_rng(0)
        eta = rng.uniform(0.001, 0.999, size=10_000)
        T = loss.T if loss.kind in lc.MODIFIED else None
        a = rng.uniform(-T if T else -6, T if T else 6, size=10_000)
        best = lc.conditional_risk(loss, eta, lc.pointwise_minimizer(loss, eta))
        assert np.all(best <= lc.conditional_risk(loss, eta, a) + 1e-9)
        np.testing.assert_allclose(lc.minimal_conditional_risk(loss, eta), best, atol=1e-12)


class TestTable2:
    def test_lipschitz(self):
        assert lc.lipschitz_constant("hinge", 7.0) == 1.0
        assert math.isclose(lc.lipschitz_constant("logistic", 1.0), 0.731059, rel_tol=1e-6)
        assert lc.lipschitz_constant("least_squares", 2.0) == 4.0
        assert lc.lipschitz_constant("exponential", 2.0) == math.exp(2.0)
        with pytest.raises(ValueError):
            lc.lipschitz_constant("hinge", 0.5)

    def test_delta_phi(self):
        assert lc.delta_phi("least_squares", 1.0) == 0.0
        assert math.isclose(lc.delta_phi("exponential", 2.0), 0.135335, rel_tol=1e-5)
        assert lc.delta_phi(lc.SurrogateLoss("modified_logistic", 2.0), 2.0) == 0.0
        with pytest.raises(ValueError):
            lc.delta_phi("logistic", 0.5)

    @pytest.mark.parametrize("loss", ALL, ids=lambda l: l.kind)
    def test_delta_phi_nonincreasing(self, loss):
        Ts = np.linspace(1, 20, 50)
        v = [lc.delta_phi(loss, T) for T in Ts]
        assert all(b <= a for a, b in zip(v, v[1:]))

    def test_delta_phi_matches_definition(self):
        a = np.linspace(-2, 2, 40001)
        for kind in ("exponential", "logistic", "least_squares", "hinge"):
            direct = lc.phi(kind, a).min() - 0.0
            assert math.isclose(lc.delta_phi(kind, 2.0), direct, abs_tol=1e-9)

    def test_truncated_modulus(self):
        ident = lambda r: r
        assert lc.truncated_modulus("least_squares", ident, 1.0)(0.3) == 0.6
        for kind in ("least_squares", "exponential", "logistic"):
            assert lc.truncated_modulus(kind, ident, 1.0)(0.0) == 0.0
        v = lc.truncated_modulus("logistic", ident, 1.0)(1.0)
        assert math.isclose(v, (math.exp(0.5) + math.exp(-0.5)) ** 2, rel_tol=1e-12)
        assert math.isclose(v, 5.08616, rel_tol=1e-5)
        with pytest.raises(ValueError):
            lc.truncated_modulus("hinge", ident, 1.0)

    @pytest.mark.parametrize("kind", ["least_squares", "exponential", "logistic"])
    def test_truncated_modulus_bounds_minimizer(self, kind):
        T = 1.5
        rng = np.random.default_rng(1)
        e1, e2 = rng.uniform(size=5000), rng.uniform(size=5000)
        f1 = np.asarray(lc.pointwise_minimizer(kind, e1, T))
        f2 = np.asarray(lc.pointwise_minimizer(kind, e2, T))
        factor = lc.truncated_lipschitz_factor(kind, T)
        assert np.all(np.abs(f1 - f2) <= factor * np.abs(e1 - e2) + 1e-12)


class TestPsi:
    @pytest.mark.parametrize("kind", ["least_squares", "hinge", "exponential"])
    def test_closed_form(self, kind):
        pt = lc.psi_transform(kind)
        assert np.max(np.abs(pt.psi - lc.psi_closed_form(kind, pt.theta))) <= 1e-6

    def test_spot_values(self):
        hinge = lc.psi_transform("hinge")
        assert abs(hinge(0.3) - 0.3) <= 1e-9
        assert abs(lc.psi_transform("exponential")(0.6) - 0.2) <= 1e-6

    def test_logistic_closed_form(self):
        pt = lc.psi_transform("logistic")
        assert np.max(np.abs(pt.psi - lc.psi_closed_form("logistic", pt.theta))) <= 1e-6

    @pytest.mark.parametrize("loss", ALL, ids=lambda l: l.kind)
    def test_envelope(self, loss):
        pt = lc.psi_transform(loss, 401)
        assert pt.psi[0] == 0.0
        assert np.all(pt.psi <= pt.psi_tilde + 1e-12)
        assert np.all(np.diff(pt.psi, 2) >= -1e-9)
        assert np.all(np.diff(pt.psi) >= -1e-12)

    def test_hull_of_nonconvex_input(self):
        x = np.linspace(0, 1, 5)
        y = np.array([0.0, 0.5, 0.1, 0.6, 1.0])
        hull = lc.lower_convex_hull(x, y)
        assert np.all(hull <= y + 1e-15)
        assert np.all(np.diff(hull, 2) >= -1e-12)

    def test_inverse(self):
        assert math.isclose(lc.psi_inverse(lc.psi_transform("least_squares"), 0.25), 0.5, abs_tol=1e-12)
        assert lc.psi_inverse(lc.psi_transform("hinge"), 0.0) == 0.0
        assert math.isclose(lc.psi_inverse(lc.psi_transform("exponential"), 0.2), 0.6, abs_tol=1e-12)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0, 1))
    def test_inverse_roundtrip(self, v):
        pt = lc.psi_transform("logistic")
        v = v * pt.psi[-1]
        theta = lc.psi_inverse(pt, v)
        assert abs(float(lc.psi_pointwise(pt.loss, theta)) - v) <= 1e-12

    def test_inverse_linear_table(self):
        pt = lc.PsiTransform(np.array([0, 0.5, 1.0]), np.array([0, 0.25, 1.0]),
                             np.array([0, 0.25, 1.0]))
        assert lc.psi_inverse(pt, 0.625) == 0.75
        assert lc.psi_inverse(pt, 2.0) == 1.0
        with pytest.raises(ValueError):
            lc.psi_inverse(pt, -0.1)

    def test_csv_round_trip(self, tmp_path):
        pt = lc.psi_transform("exponential", 51)
        lc.write_psi_csv(pt, tmp_path / "psi.csv")
        assert (tmp_path / "psi.csv").read_text().splitlines()[0] == "theta,psi"
        back = lc.read_psi_csv(tmp_path / "psi.csv")
        np.testing.assert_array_equal(back.psi, pt.psi)


class TestCalibration:
    GRID = [0.01, 0.2, 0.45, 0.55, 0.8, 0.99]

    @pytest.mark.parametrize("loss", ALL, ids=lambda l: l.kind)
    def test_supported_kinds(self, loss):
        assert lc.is_calibrated(loss, self.GRID)

    def test_constant_loss(self):
        assert not lc.is_calibrated(lambda a: np.ones_like(a), self.GRID)

    def test_grid_must_exclude_half(self):
        with pytest.raises(ValueError):
            lc.is_calibrated("hinge", [0.5])
