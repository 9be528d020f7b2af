import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riskcert import net_core as nc
from riskcert.suites import direct_convolution, worked_example_matrix


def _layer(spec, w, b):
    return nc.Layer(spec, np.asarray(w, float), np.asarray(b, float))


class TestInducedMatrix:
    def test_worked_example_3x4(self):
        c = np.array([[1.0, 2.0, 3.0, 4.0]])
        idx = nc.sliding_index_sets((3, 4), (2, 2))
        assert idx.tolist()[0] == [0, 1, 4, 5]
        W = nc.induce_weight_matrix(nc.FilterBank(c, idx), 12)
        np.testing.assert_array_equal(W, worked_example_matrix(c))

    def test_scalar_filter_is_scaled_identity(self):
        fb = nc.FilterBank(np.array([[2.5]]), np.array([[0], [1], [2]]))
        np.testing.assert_array_equal(nc.induce_weight_matrix(fb, 3), 2.5 * np.eye(3))

    def test_random_filter_matches_loop(self):
        rng = np.random.default_rng(3)
        w = rng.normal(size=(2, 3))
        idx = nc.sliding_index_sets(8, 3)
        x = rng.normal(size=8)
        got = nc.induce_weight_matrix(nc.FilterBank(w, idx), 8) @ x
        assert np.max(np.abs(got - direct_convolution(w, idx, x))) <= 1e-12

    def test_rows_have_s_nonzeros_at_index_sets(self):
        rng = np.random.default_rng(0)
        w = rng.uniform(1, 2, size=(3, 4))
        idx = nc.sliding_index_sets((4, 4), (2, 2))
        W = nc.induce_weight_matrix(nc.FilterBank(w, idx), 16)
        m = idx.shape[0]
        for row in range(W.shape[0]):
            nz = np.flatnonzero(W[row])
            assert sorted(nz) == sorted(idx[row % m])
            np.testing.assert_array_equal(W[row, idx[row % m]], w[row // m])

    def test_index_out_of_range(self):
        fb = nc.FilterBank(np.ones((1, 2)), np.array([[0, 1], [1, 2]]))
        with pytest.raises(nc.DimensionError):
            nc.induce_weight_matrix(fb, 2)

    def test_index_sets_must_be_distinct(self):
        with pytest.raises(ValueError):
            nc.FilterBank(np.ones((1, 2)), np.array([[0, 1], [0, 1]]))

    def test_conv_forward_agrees_with_matrix(self):
        rng = np.random.default_rng(1)
        spec = nc.conv(12, nc.sliding_index_sets((3, 4), (2, 2)), 2, None, "identity")
        layer = _layer(spec, rng.normal(size=(2, 4)), rng.normal(size=12))
        x = rng.normal(size=12)
        np.testing.assert_allclose(nc.forward(nc.Network([layer]), x),
                                   layer.matrix() @ x + layer.bias, atol=1e-12)


class TestForward:
    def test_relu_kills_negative(self):
        net = nc.Network([_layer(nc.dense(2, 1, None, "relu"), [[1, -1]], [0])])
        np.testing.assert_array_equal(nc.forward(net, [2.0, 3.0]), [0.0])

    def test_identity_affine(self):
        net = nc.Network([_layer(nc.dense(2, 2, None, "identity"), np.eye(2), [0.5, -0.5])])
        np.testing.assert_array_equal(nc.forward(net, [1.0, 1.0]), [1.5, 0.5])

    def test_two_layer_composition(self):
        W1, b1 = np.array([[1.0, 2.0], [-1.0, 0.5]]), np.array([0.1, -0.2])
        W2, b2 = np.array([[0.3, -0.7]]), np.array([0.05])
        net = nc.Network([_layer(nc.dense(2, 2), W1, b1),
                          _layer(nc.dense(2, 1, None, "identity"), W2, b2)])
        x = np.array([0.4, -0.9])
        expected = W2 @ np.maximum(W1 @ x + b1, 0) + b2
        assert np.max(np.abs(nc.forward(net, x) - expected)) <= 1e-12

    def test_batch_matches_single(self):
        rng = np.random.default_rng(2)
        net = nc.init_network([nc.dense(3, 5), nc.dense(5, 1, None, "identity")], rng)
        X = rng.normal(size=(7, 3))
        batch = nc.forward(net, X)
        for i in range(7):
            np.testing.assert_allclose(batch[i], nc.forward(net, X[i]), atol=1e-15)

    def test_dimension_mismatch(self):
        net = nc.Network([_layer(nc.dense(2, 1), [[1, 1]], [0])])
        with pytest.raises(nc.DimensionError):
            nc.forward(net, [1.0, 2.0, 3.0])

    def test_layers_must_chain(self):
        with pytest.raises(nc.DimensionError):
            nc.Network([_layer(nc.dense(2, 3), np.ones((3, 2)), np.zeros(3)),
                        _layer(nc.dense(2, 1), np.ones((1, 2)), np.zeros(1))])


class TestMaxPool:
    def test_singletons_are_identity(self):
        np.testing.assert_array_equal(nc.max_pool([3, -1, 2], [[0], [1], [2]]), [3, -1, 2])

    def test_overlapping_sets(self):
        np.testing.assert_array_equal(nc.max_pool([3, -1, 2], [[0, 1], [1, 2]]), [3, 2])

    def test_empty_set_rejected(self):
        with pytest.raises(ValueError):
            nc.max_pool([1.0, 2.0], [[0], []])
        with pytest.raises(ValueError):
            nc.maxpool(2, [[0], []])

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 10_000), st.sampled_from([1.0, 2.0, math.inf]))
    def test_lipschitz_with_multiplicity(self, seed, p):
        rng = np.random.default_rng(seed)
        d = int(rng.integers(2, 9))
        sets = [sorted(rng.choice(d, size=int(rng.integers(1, d + 1)), replace=False))
                for _ in range(int(rng.integers(1, 6)))]
        spec = nc.maxpool(d, sets)
        u, v = rng.normal(size=d), rng.normal(size=d)
        lhs = np.linalg.norm(nc.max_pool(u, sets) - nc.max_pool(v, sets), p)
        factor = 1.0 if math.isinf(p) else spec.pool_multiplicity ** (1 / p)
        assert lhs <= factor * np.linalg.norm(u - v, p) + 1e-12

    def test_partition_is_nonexpansive(self):
        rng = np.random.default_rng(4)
        sets = [[0, 1], [2, 3], [4]]
        for _ in range(100):
            u, v = rng.normal(size=5), rng.normal(size=5)
            assert (np.linalg.norm(nc.max_pool(u, sets) - nc.max_pool(v, sets))
                    <= np.linalg.norm(u - v) + 1e-12)


class TestStatistics:
    def test_param_count_conv_plus_dense(self):
        idx = nc.sliding_index_sets((3, 4), (2, 2))
        specs = [nc.conv(12, idx, 2), nc.dense(12, 1)]
        assert nc.param_count(specs) == 33

    def test_param_count_small(self):
        assert nc.param_count([nc.dense(2, 1)]) == 3
        assert nc.param_count([]) == 0
        assert nc.param_count([nc.maxpool(4, [[0, 1], [2, 3]])]) == 0

    def test_output_bound_single_dense(self):
        assert nc.output_bound([nc.dense(3, 1, 2.0)], 1.0) == 4.0

    def test_output_bound_two_convs(self):
        specs = [nc.conv(5, nc.sliding_index_sets(5, 2), 1, 1.0),
                 nc.conv(4, nc.sliding_index_sets(4, 1), 1, 1.0)]
        assert specs[0].m == 4 and specs[1].m == 4
        assert nc.output_bound(specs, 1.0) == 10.0

    def test_output_bound_zero_budget_limit(self):
        assert nc.output_bound([nc.dense(2, 2, 1e-300), nc.dense(2, 1, 1e-300)], 1.0) < 1e-290

    def test_output_bound_dominates_forward(self):
        rng = np.random.default_rng(5)
        idx = nc.sliding_index_sets(6, 3)
        specs = [nc.conv(6, idx, 2, 1.5), nc.maxpool(8, [[0, 1, 2], [2, 3], [4, 5], [6, 7]]),
                 nc.dense(4, 3, 0.8), nc.dense(3, 1, 2.0, "identity")]
        B0 = 2.0
        bound = nc.output_bound(specs, B0)
        from riskcert.complexity import network_class_sampler
        draw = network_class_sampler(specs)
        for _ in range(100):
            net = draw(rng)
            assert net.satisfies_budgets()
            X = rng.normal(size=(100, 6))
            X *= B0 * rng.uniform(size=(100, 1)) ** (1 / 6) / np.linalg.norm(X, axis=1, keepdims=True)
            assert np.max(np.abs(nc.forward(net, X))) <= bound + 1e-9

    def test_depth_width_size(self):
        specs = [nc.dense(3, 7), nc.maxpool(7, [[i] for i in range(7)]), nc.dense(7, 1, None, "identity")]
        net = nc.init_network(specs, np.random.default_rng(0))
        assert (net.depth, net.width, net.size) == (2, 7, 36)


class TestProjection:
    def test_scales_onto_budget(self):
        W = np.array([[3.0, 0.0]])
        b = np.array([1.0])
        w2, b2 = nc.project_budget(W, b, 2.0)
        np.testing.assert_allclose(w2, 0.5 * W)
        np.testing.assert_allclose(b2, 0.5 * b)
        assert math.isclose(np.linalg.norm(w2) + np.linalg.norm(b2), 2.0)

    def test_interior_untouched(self):
        W, b = np.array([[1.0]]), np.array([0.5])
        w2, b2 = nc.project_budget(W, b, 2.0)
        assert w2 is W and b2 is b

    def test_zero_stays_zero(self):
        w2, b2 = nc.project_budget(np.zeros((2, 2)), np.zeros(2), 0.3)
        assert not w2.any() and not b2.any()

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10_000), st.floats(0.01, 10))
    def test_idempotent_and_feasible(self, seed, a):
        rng = np.random.default_rng(seed)
        W, b = rng.normal(scale=3, size=(3, 4)), rng.normal(size=3)
        w1, b1 = nc.project_budget(W, b, a)
        assert np.linalg.norm(w1) + np.linalg.norm(b1) <= a + 1e-12
        w2, b2 = nc.project_budget(w1, b1, a)
        np.testing.assert_allclose(w1, w2, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(b1, b2, rtol=1e-12, atol=1e-15)

    def test_uniform_budget_sampler_in_set(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            w, b = nc.sample_budget_params(rng, (2, 3), 2, 1.7)
            assert np.linalg.norm(w) + np.linalg.norm(b) <= 1.7 + 1e-12


class TestSerialization:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(9)
        specs = [nc.conv(12, nc.sliding_index_sets((3, 4), (2, 2)), 2, 3.0),
                 nc.maxpool(12, [[i, i + 1] for i in range(0, 12, 2)]),
                 nc.dense(6, 1, 2.0, "identity")]
        net = nc.init_network(specs, rng)
        net = net.with_parameters([(w * np.pi / 7, b + 1e-17) for w, b in net.parameters()])
        path = tmp_path / "net.json"
        nc.save_network(net, path)
        back = nc.load_network(path)
        for (w1, b1), (w2, b2) in zip(net.parameters(), back.parameters()):
            assert w1.tobytes() == w2.tobytes() and b1.tobytes() == b2.tobytes()
        assert [s.kind for s in back.specs] == ["conv", "maxpool", "dense"]
        np.testing.assert_array_equal(nc.forward(back, np.ones(12)), nc.forward(net, np.ones(12)))

    def test_document_is_versioned(self):
        net = nc.init_network([nc.dense(1, 1)], np.random.default_rng(0))
        doc = json.loads(nc.dumps_network(net))
        assert doc["format"] == "riskcert-network" and doc["version"] == 1
        doc["version"] = 99
        with pytest.raises(ValueError):
            nc.network_from_dict(doc)
