import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedsim.aggregation import (AggregationConfig, AttentionWeights,
                                FedAvgCoefficients, Strategy,
                                aggregation_loss, attention_weights,
                                fedatt_aggregate, fedavg_aggregate)
from fedsim.params import LayerParams, ParameterSet, SchemaError

# frozen from an independent high-precision scalar script (mpmath, 40 digits):
# softmax([1, 3]) and the resulting FedAtt step from global 0 with eps = 0.5
ALPHA_1_3 = (0.11920292202211756, 0.8807970779778824)
FEDATT_0_13_HALF = 1.3807970779778824
LOSS_0_13 = 4.02318831191153


def scalar_set(value, name="w"):
    return ParameterSet(layers=(
        LayerParams(name=name, shape=(1,), values=np.array([float(value)])),))


def random_set(rng, schema=(("a", 3), ("b", 2))):
    return ParameterSet(layers=tuple(
        LayerParams(name=n, shape=(k,), values=rng.normal(size=k))
        for n, k in schema
    ))


class TestAttentionWeights:
    def test_identical_clients_uniform(self):
        rng = np.random.default_rng(0)
        g = random_set(rng)
        c = random_set(rng)
        weights = attention_weights(g, [c, c, c])
        for vec in weights.per_layer.values():
            np.testing.assert_allclose(vec, [1 / 3] * 3, atol=1e-12)

    def test_single_client_is_one(self):
        rng = np.random.default_rng(1)
        weights = attention_weights(random_set(rng), [random_set(rng)])
        for vec in weights.per_layer.values():
            np.testing.assert_allclose(vec, [1.0], atol=1e-15)

    def test_derived_softmax_oracle(self):
        weights = attention_weights(scalar_set(0), [scalar_set(1), scalar_set(3)])
        np.testing.assert_allclose(weights.per_layer["w"], ALPHA_1_3, atol=1e-9)

    def test_empty_clients_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            attention_weights(scalar_set(0), [])

    def test_schema_mismatch_rejected(self):
        g = scalar_set(0)
        bad = scalar_set(1, name="v")
        with pytest.raises(SchemaError):
            attention_weights(g, [bad])

    def test_invariants_enforced_on_construction(self):
        with pytest.raises(ValueError, match="sum"):
            AttentionWeights(per_layer={"w": np.array([0.5, 0.4])})
        with pytest.raises(ValueError, match="outside"):
            AttentionWeights(per_layer={"w": np.array([1.2, -0.2])})

    @given(st.integers(0, 2**32 - 1), st.integers(2, 6))
    @settings(max_examples=50, deadline=None)
    def test_sum_to_one_positive(self, seed, m):
        rng = np.random.default_rng(seed)
        g = random_set(rng)
        clients = [random_set(rng) for _ in range(m)]
        weights = attention_weights(g, clients)
        for vec in weights.per_layer.values():
            assert abs(vec.sum() - 1.0) < 1e-9
            assert np.all(vec > 0)

    def test_monotonicity_in_distance(self):
        g = scalar_set(0)
        base = attention_weights(g, [scalar_set(1), scalar_set(2)])
        moved = attention_weights(g, [scalar_set(1), scalar_set(3)])
        assert moved.per_layer["w"][1] > base.per_layer["w"][1]
        assert moved.per_layer["w"][0] < base.per_layer["w"][0]


class TestFedAtt:
    def config(self, eps=1.0):
        return AggregationConfig(strategy=Strategy.FEDATT, epsilon=eps)

    def test_fixed_point_when_clients_equal_global(self):
        rng = np.random.default_rng(2)
        g = random_set(rng)
        out, _ = fedatt_aggregate(g, [g, g, g], self.config())
        for la, lb in zip(out.layers, g.layers):
            np.testing.assert_array_equal(la.values, lb.values)

    def test_eps_one_equidistant_matches_uniform_mean(self):
        g = scalar_set(0)
        clients = [scalar_set(2), scalar_set(-2)]
        out, _ = fedatt_aggregate(g, clients, self.config(eps=1.0))
        avg = fedavg_aggregate(clients, [1, 1],
                               AggregationConfig(strategy=Strategy.FEDAVG))
        np.testing.assert_allclose(out.layers[0].values, avg.layers[0].values,
                                   atol=1e-12)

    def test_derived_scalar_oracle(self):
        g = scalar_set(0)
        clients = [scalar_set(1), scalar_set(3)]
        out, weights = fedatt_aggregate(g, clients, self.config(eps=0.5))
        assert out.layers[0].values[0] == pytest.approx(FEDATT_0_13_HALF, abs=1e-9)
        np.testing.assert_allclose(weights.per_layer["w"], ALPHA_1_3, atol=1e-9)

    def test_wrong_strategy_rejected(self):
        with pytest.raises(ValueError, match="strategy"):
            fedatt_aggregate(scalar_set(0), [scalar_set(1)],
                             AggregationConfig(strategy=Strategy.FEDAVG))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_small_step_decreases_loss(self, seed):
        rng = np.random.default_rng(seed)
        g = random_set(rng)
        clients = [random_set(rng) for _ in range(4)]
        weights = attention_weights(g, clients)
        before = aggregation_loss(g, clients, weights)
        out, _ = fedatt_aggregate(g, clients, self.config(eps=0.1))
        after = aggregation_loss(out, clients, weights)
        assert after < before

    @given(st.integers(0, 2**32 - 1), st.permutations([0, 1, 2, 3]))
    @settings(max_examples=25, deadline=None)
    def test_permutation_equivariance(self, seed, perm):
        rng = np.random.default_rng(seed)
        g = random_set(rng)
        clients = [random_set(rng) for _ in range(4)]
        out, weights = fedatt_aggregate(g, clients, self.config())
        out_p, weights_p = fedatt_aggregate(g, [clients[i] for i in perm],
                                            self.config())
        for la, lb in zip(out.layers, out_p.layers):
            np.testing.assert_allclose(la.values, lb.values, atol=1e-12)
        for name in weights.per_layer:
            np.testing.assert_allclose(weights.per_layer[name][list(perm)],
                                       weights_p.per_layer[name], atol=1e-12)


class TestFedAvg:
    def config(self, coefficients=FedAvgCoefficients.UNIFORM):
        return AggregationConfig(strategy=Strategy.FEDAVG,
                                 fedavg_coefficients=coefficients)

    def test_single_client_passthrough(self):
        c = scalar_set(7)
        out = fedavg_aggregate([c], [5], self.config())
        np.testing.assert_array_equal(out.layers[0].values, c.layers[0].values)

    def test_uniform_midpoint(self):
        out = fedavg_aggregate([scalar_set(2), scalar_set(4)], [1, 1], self.config())
        assert out.layers[0].values[0] == pytest.approx(3.0, abs=1e-15)

    def test_data_proportional(self):
        out = fedavg_aggregate(
            [scalar_set(0), scalar_set(4)], [1, 3],
            self.config(FedAvgCoefficients.DATA_PROPORTIONAL))
        assert out.layers[0].values[0] == pytest.approx(3.0, abs=1e-12)

    def test_zero_total_count_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            fedavg_aggregate([scalar_set(1)], [0],
                             self.config(FedAvgCoefficients.DATA_PROPORTIONAL))

    def test_fixed_point_when_clients_equal(self):
        c = scalar_set(5)
        out = fedavg_aggregate([c, c, c], [1, 1, 1], self.config())
        np.testing.assert_array_equal(out.layers[0].values, c.layers[0].values)


class TestAggregationLoss:
    def test_zero_when_equal(self):
        rng = np.random.default_rng(4)
        g = random_set(rng)
        weights = attention_weights(g, [g, g])
        assert aggregation_loss(g, [g, g], weights) == 0.0

    def test_single_client_half_distance_squared(self):
        g = scalar_set(0)
        c = scalar_set(3)
        weights = AttentionWeights(per_layer={"w": np.array([1.0])})
        assert aggregation_loss(g, [c], weights) == pytest.approx(4.5, abs=1e-12)

    def test_derived_scalar_oracle(self):
        g = scalar_set(0)
        clients = [scalar_set(1), scalar_set(3)]
        weights = attention_weights(g, clients)
        assert aggregation_loss(g, clients, weights) == pytest.approx(
            LOSS_0_13, abs=1e-9)


def test_epsilon_must_be_positive():
    with pytest.raises(ValueError, match="epsilon"):
        AggregationConfig(epsilon=0.0)
