import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fedsim.params import (LayerParams, ParameterSet, SchemaError,
                           assert_schema_compatible, layer_l2_distance,
                           linear_combine)


def make_set(values_by_name):
    return ParameterSet(layers=tuple(
        LayerParams(name=n, shape=(len(v),), values=np.array(v, dtype=float))
        for n, v in values_by_name.items()
    ))


class TestLayerParams:
    def test_rejects_shape_value_mismatch(self):
        with pytest.raises(ValueError, match="3 values for shape"):
            LayerParams(name="w", shape=(2, 2), values=np.zeros(3))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            LayerParams(name="w", shape=(2,), values=np.array([1.0, np.nan]))

    def test_rejects_empty_shape(self):
        with pytest.raises(ValueError):
            LayerParams(name="w", shape=(), values=np.zeros(1))

    def test_values_read_only(self):
        lp = LayerParams(name="w", shape=(2,), values=np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            lp.values[0] = 5.0


class TestL2Distance:
    def test_identity_is_zero(self):
        a = LayerParams(name="w", shape=(3,), values=np.array([1.0, -2.0, 7.5]))
        assert layer_l2_distance(a, a) == 0.0

    def test_3_4_5(self):
        a = LayerParams(name="w", shape=(2,), values=np.array([0.0, 0.0]))
        b = LayerParams(name="w", shape=(2,), values=np.array([3.0, 4.0]))
        assert layer_l2_distance(a, b) == pytest.approx(5.0, abs=1e-15)

    def test_derived_scalar_oracle(self):
        # sqrt((1.5-0.5)^2 + (-2-1)^2 + 0^2) = sqrt(10), frozen from a
        # high-precision scalar computation
        a = LayerParams(name="w", shape=(3,), values=np.array([1.5, -2.0, 0.25]))
        b = LayerParams(name="w", shape=(3,), values=np.array([0.5, 1.0, 0.25]))
        assert layer_l2_distance(a, b) == pytest.approx(3.1622776601683795, abs=1e-12)

    def test_shape_mismatch_names_layers(self):
        a = LayerParams(name="lstm1", shape=(2,), values=np.zeros(2))
        b = LayerParams(name="lstm1", shape=(3,), values=np.zeros(3))
        with pytest.raises(SchemaError, match="lstm1"):
            layer_l2_distance(a, b)

    @given(st.lists(st.tuples(
        st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)),
        min_size=1, max_size=8))
    def test_metric_properties(self, triples):
        xs = np.array([t[0] for t in triples])
        ys = np.array([t[1] for t in triples])
        zs = np.array([t[2] for t in triples])
        shape = (len(triples),)
        a = LayerParams(name="w", shape=shape, values=xs)
        b = LayerParams(name="w", shape=shape, values=ys)
        c = LayerParams(name="w", shape=shape, values=zs)
        dab = layer_l2_distance(a, b)
        assert dab >= 0
        assert dab == layer_l2_distance(b, a)
        assert dab <= layer_l2_distance(a, c) + layer_l2_distance(c, b) + 1e-9


class TestLinearCombine:
    def test_identity(self):
        s = make_set({"w": [1.0, 2.0], "b": [3.0]})
        out = linear_combine([s], [1.0])
        for la, lb in zip(out.layers, s.layers):
            np.testing.assert_array_equal(la.values, lb.values)

    def test_convexity_fixed_point(self):
        s = make_set({"w": [1.0, -2.0]})
        out = linear_combine([s, s], [0.5, 0.5])
        np.testing.assert_allclose(out.layers[0].values, [1.0, -2.0], atol=1e-12)

    def test_hand_arithmetic(self):
        a = make_set({"w": [1.0, 2.0]})
        b = make_set({"w": [3.0, 6.0]})
        out = linear_combine([a, b], [0.25, 0.75])
        np.testing.assert_allclose(out.layers[0].values, [2.5, 5.0], atol=1e-12)

    def test_empty_list_rejected(self):
        with pytest.raises(ValueError, match="at least one"):
            linear_combine([], [])

    def test_coefficient_count_mismatch(self):
        s = make_set({"w": [1.0]})
        with pytest.raises(ValueError):
            linear_combine([s], [0.5, 0.5])

    @given(st.lists(st.floats(-10, 10), min_size=2, max_size=6))
    def test_affine_combination_of_identical_sets(self, raw_coeffs):
        total = sum(raw_coeffs)
        if abs(total) < 1e-6:
            raw_coeffs[0] += 1.0
            total = sum(raw_coeffs)
        coeffs = [c / total for c in raw_coeffs]
        s = make_set({"w": [0.5, -1.5, 2.0]})
        out = linear_combine([s] * len(coeffs), coeffs)
        np.testing.assert_allclose(out.layers[0].values, s.layers[0].values,
                                   atol=1e-10)


class TestSchemaCompat:
    def test_empty_is_vacuous(self):
        assert_schema_compatible([])

    def test_identical_schemas_pass(self):
        a = make_set({"w": [1.0, 2.0]})
        b = make_set({"w": [9.0, 9.0]})
        assert_schema_compatible([a, b])

    def test_divergent_layer_named(self):
        a = ParameterSet(layers=(LayerParams("lstm1", (4, 8), np.zeros(32)),))
        b = ParameterSet(layers=(LayerParams("lstm1", (4, 9), np.zeros(36)),))
        with pytest.raises(SchemaError, match="lstm1"):
            assert_schema_compatible([a, b])

    def test_duplicate_layer_names_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            ParameterSet(layers=(
                LayerParams("w", (1,), np.zeros(1)),
                LayerParams("w", (1,), np.zeros(1)),
            ))


class TestSerialization:
    def test_round_trip_bit_identical(self):
        rng = np.random.default_rng(3)
        s = ParameterSet(layers=(
            LayerParams("lstm1.wx", (4, 8), rng.normal(size=32)),
            LayerParams("fc.b", (1,), rng.normal(size=1)),
        ))
        restored = ParameterSet.from_json(s.to_json())
        assert restored.schema == s.schema
        for la, lb in zip(restored.layers, s.layers):
            assert np.array_equal(la.values, lb.values)  # bit-exact

    def test_order_preserved(self):
        s = ParameterSet(layers=(
            LayerParams("z_layer", (1,), np.ones(1)),
            LayerParams("a_layer", (1,), np.ones(1)),
        ))
        restored = ParameterSet.from_json(s.to_json())
        assert [lp.name for lp in restored.layers] == ["z_layer", "a_layer"]
