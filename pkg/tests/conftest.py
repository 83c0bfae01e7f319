"""Shared fixtures: the benchmark datasets, trained models, and crafted
properties reused across the suite. Everything is seeded; training and
repair scenarios are session-scoped because several test modules lean on
the same artifacts."""

from __future__ import annotations

import shutil

import pytest

from relufix.datagen import (
    data_bounds,
    generate_mixture,
    sample_uniform_labeled,
    xor_a_spec,
    xor_b_spec,
)
from relufix.encoder import RobustnessProperty, verify_property
from relufix.network import make_network
from relufix.trainer import TrainConfig, init_network, train

DATA_SEED = 7
NET_SEED = 0


def pytest_sessionstart(session):
    if shutil.which("z3") is None:
        raise pytest.UsageError(
            "the suite drives an external SMT solver; install one providing a "
            "`z3` binary (e.g. `pip install z3-solver`) or adjust SolverConfig"
        )


@pytest.fixture(scope="session")
def one_neuron_net():
    """The 2-1-2 worked example: one hidden ReLU neuron, outputs (x, -x)."""
    return make_network([([[1.0, 1.0]], [0.0]), ([[1.0], [-1.0]], [0.0, 0.0])])


@pytest.fixture(scope="session")
def xor_a_dataset():
    ds = generate_mixture(xor_a_spec(), 2400, 1600, seed=DATA_SEED)
    return ds


@pytest.fixture(scope="session")
def xor_a_net(xor_a_dataset):
    net0 = init_network((2, 4, 2), seed=NET_SEED)
    return train(net0, xor_a_dataset.train, TrainConfig("sgd", 0.1, 10, 32, seed=NET_SEED))


@pytest.fixture(scope="session")
def xor_a_full(xor_a_dataset, xor_a_net):
    """XOR-A dataset extended with the uniformly sampled split."""
    ds = generate_mixture(xor_a_spec(), 2400, 1600, seed=DATA_SEED)
    ds.sampled = sample_uniform_labeled(xor_a_net, data_bounds(ds.train), 500, seed=11)
    return ds


@pytest.fixture(scope="session")
def xor_b_dataset():
    return generate_mixture(xor_b_spec(), 1562, 1600, seed=DATA_SEED)


@pytest.fixture(scope="session")
def xor_b_net(xor_b_dataset):
    net0 = init_network((2, 4, 2), seed=NET_SEED)
    return train(net0, xor_b_dataset.train, TrainConfig("adam", 0.01, 60, 32, seed=NET_SEED))


@pytest.fixture(scope="session")
def xor_b_full(xor_b_dataset, xor_b_net):
    ds = generate_mixture(xor_b_spec(), 1562, 1600, seed=DATA_SEED)
    ds.sampled = sample_uniform_labeled(xor_b_net, data_bounds(ds.train), 500, seed=11)
    return ds


@pytest.fixture(scope="session")
def xor_a_violated_prop(xor_a_net):
    """A delta=5 L1 property the trained XOR-A-style model violates."""
    prop = RobustnessProperty("xor-a-p1", (50.0, -15.0), 5.0, "l1", 0)
    assert verify_property(xor_a_net, prop).holds is False
    return prop


@pytest.fixture(scope="session")
def xor_b_violated_props(xor_b_net):
    """Far and near violated properties for the XOR-B reproduction."""
    far = RobustnessProperty("xor-b-p1", (50.0, -15.0), 5.0, "l1", 0)
    near = RobustnessProperty("xor-b-p2", (7.0, -15.0), 5.0, "l1", 0)
    assert verify_property(xor_b_net, far).holds is False
    assert verify_property(xor_b_net, near).holds is False
    return far, near
