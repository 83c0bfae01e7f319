import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relufix.network import (
    AddressError,
    WeightId,
    decide,
    decide_exact,
    enumerate_weight_ids,
    forward,
    forward_batch,
    forward_exact,
    from_json,
    get_param,
    make_network,
    param_count,
    substitute,
    to_json,
)
from relufix.trainer import init_network


def zeros_net(biases=(1.0, 0.0)):
    return make_network([
        ([[0.0, 0.0], [0.0, 0.0]], [0.0, 0.0]),
        ([[0.0, 0.0], [0.0, 0.0]], list(biases)),
    ])


def test_zero_weights_pass_only_bias():
    net = zeros_net((1.0, 0.0))
    assert forward(net, [5.0, -3.0]).tolist() == [1.0, 0.0]


def test_one_neuron_topology_forward(one_neuron_net):
    out = forward(one_neuron_net, [2.0, 3.0])
    assert out.tolist() == [5.0, -5.0]


def test_relu_clamps_negative_preactivation(one_neuron_net):
    out = forward(one_neuron_net, [-2.0, -3.0])
    assert out.tolist() == [0.0, 0.0]


def test_decide_strict_maximum(one_neuron_net):
    assert decide(one_neuron_net, [2.0, 3.0]) == 0


def test_decide_tie_breaks_to_lowest_index(one_neuron_net):
    assert decide(one_neuron_net, [-2.0, -3.0]) == 0


@pytest.mark.parametrize(
    "topology,expected",
    [((2, 4, 2), 22), ((2, 10, 10, 2), 162), ((2, 1, 2), 7)],
)
def test_param_count(topology, expected):
    assert param_count(init_network(topology, seed=0)) == expected


def test_enumerate_all_ids_xor():
    net = init_network((2, 4, 2), seed=0)
    ids = enumerate_weight_ids(net)
    assert len(ids) == 22
    assert len(set(ids)) == 22
    assert param_count(net) == len(ids)


def test_enumerate_last_layer_blobs():
    net = init_network((2, 10, 10, 2), seed=0)
    assert len(enumerate_weight_ids(net, layers=(3,))) == 22


def test_enumerate_bias_filter_xor():
    net = init_network((2, 4, 2), seed=0)
    assert len(enumerate_weight_ids(net, kinds=("bias",))) == 6


def test_enumerate_order_is_layer_major_weights_first():
    net = make_network([([[1.0, 1.0]], [0.0]), ([[1.0], [-1.0]], [0.0, 0.0])])
    ids = enumerate_weight_ids(net)
    assert ids == [
        WeightId(1, "weight", 0, 0),
        WeightId(1, "weight", 0, 1),
        WeightId(1, "bias", 0),
        WeightId(2, "weight", 0, 0),
        WeightId(2, "weight", 1, 0),
        WeightId(2, "bias", 0),
        WeightId(2, "bias", 1),
    ]


def test_substitute_empty_is_identity(one_neuron_net):
    sub = substitute(one_neuron_net, {})
    for a, b in zip(sub.layers, one_neuron_net.layers):
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.biases, b.biases)


def test_substitute_sets_output_bias():
    net = zeros_net((0.0, 0.0))
    sub = substitute(net, {WeightId(2, "bias", 0): 7.0})
    assert forward(sub, [3.0, 4.0]).tolist() == [7.0, 0.0]
    # original untouched
    assert forward(net, [3.0, 4.0]).tolist() == [0.0, 0.0]


def test_substitute_invalid_address(one_neuron_net):
    with pytest.raises(AddressError):
        substitute(one_neuron_net, {WeightId(1, "weight", 5, 0): 1.0})
    with pytest.raises(AddressError):
        substitute(one_neuron_net, {WeightId(9, "bias", 0): 1.0})


def test_substitute_round_trip(one_neuron_net):
    wid = WeightId(2, "weight", 0, 0)
    original = get_param(one_neuron_net, wid)
    changed = substitute(one_neuron_net, {wid: 42.0})
    restored = substitute(changed, {wid: original})
    for x in ([2.0, 3.0], [-1.0, 0.5], [10.0, -10.0]):
        assert forward(restored, x).tolist() == forward(one_neuron_net, x).tolist()


def test_forward_dimension_mismatch(one_neuron_net):
    with pytest.raises(ValueError):
        forward(one_neuron_net, [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        forward(one_neuron_net, [float("nan"), 0.0])


def test_forward_exact_matches_float(one_neuron_net):
    exact = forward_exact(one_neuron_net, [Fraction(2), Fraction(3)])
    assert [float(v) for v in exact] == [5.0, -5.0]
    assert decide_exact(one_neuron_net, [Fraction(-2), Fraction(-3)]) == 0


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=2, max_size=2), st.integers(0, 10**6))
def test_forward_batch_agrees_with_single(x, seed):
    net = init_network((2, 3, 2), seed=seed % 17)
    single = forward(net, x)
    batch = forward_batch(net, np.array([x]))[0]
    assert np.allclose(single, batch, atol=0, rtol=0)


@settings(max_examples=25, deadline=None)
@given(st.floats(-1e3, 1e3), st.lists(st.floats(-20, 20), min_size=2, max_size=2))
def test_argmax_invariant_under_common_output_shift(c, x):
    net = init_network((2, 3, 3), seed=5)
    shifted = substitute(
        net, {WeightId(2, "bias", r): float(net.layers[1].biases[r] + c) for r in range(3)}
    )
    assert decide(net, x) == decide(shifted, x)


def test_decide_in_range(xor_a_net, xor_a_dataset):
    for p in xor_a_dataset.train[:50]:
        assert 0 <= decide(xor_a_net, p.x) < xor_a_net.output_dim


def test_json_round_trip_is_exact(xor_a_net):
    clone = from_json(to_json(xor_a_net))
    for a, b in zip(clone.layers, xor_a_net.layers):
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.biases, b.biases)


def test_json_reals_are_strings(one_neuron_net):
    doc = json.loads(to_json(one_neuron_net))
    assert doc["input_dim"] == 2 and doc["output_dim"] == 2
    assert isinstance(doc["layers"][0]["weights"][0][0], str)


def test_layer_dimension_validation():
    with pytest.raises(ValueError):
        make_network([([[1.0, 1.0]], [0.0]), ([[1.0, 1.0], [1.0, 1.0]], [0.0, 0.0])])
