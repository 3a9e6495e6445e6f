import numpy as np
import pytest

from drcc_ots.synthetic import (
    PROTOCOL_FAMILIES,
    bimodal_training,
    edge_family,
    protocol_family,
    three_point_family,
    uniform_training,
)
from drcc_ots.uncertainty import Polytope, moment_stats

MU = np.array([1.0, -2.0])
SIGMA = np.array([3.0, 0.5])
REACH = np.array([10.0, 4.0])


@pytest.mark.parametrize("name", PROTOCOL_FAMILIES)
def test_family_moments(name):
    # uniform on mu +- 2 sigma, +-sigma coin flips and the three-point law
    # with tail mass sigma / (2 reach) all have mean mu and MAD sigma
    s = protocol_family(name, MU, SIGMA, 200_000, seed=0, reach=REACH)
    mu, mad = moment_stats(s)
    np.testing.assert_allclose(mu, MU, atol=0.05)
    np.testing.assert_allclose(mad, SIGMA, rtol=0.02)


@pytest.mark.parametrize("name", PROTOCOL_FAMILIES)
def test_family_seeded(name):
    a = protocol_family(name, MU, SIGMA, 100, seed=4, reach=REACH)
    b = protocol_family(name, MU, SIGMA, 100, seed=4, reach=REACH)
    np.testing.assert_array_equal(a.samples, b.samples)


def test_three_point_atoms():
    s = three_point_family([0.0], [1.0], 5.0, 1000, seed=1)
    assert set(np.unique(s.samples)) <= {-5.0, 0.0, 5.0}


def test_three_point_rejects_short_reach():
    with pytest.raises(ValueError):
        three_point_family([0.0], [2.0], 0.5, 10, seed=0)


def test_unknown_family():
    with pytest.raises(ValueError):
        protocol_family("gamma", MU, SIGMA, 10, seed=0)


def test_uniform_training_range():
    s = uniform_training(500, half_width=20.0, K=3, seed=2)
    assert s.samples.shape == (500, 3)
    assert np.abs(s.samples).max() <= 20.0


def test_bimodal_has_two_bumps():
    x = bimodal_training(2000, seed=0).samples[:, 0]
    assert np.all((np.abs(x + 30) <= 5) | (np.abs(x - 25) <= 5))
    assert 0.45 < np.mean(x < 0) < 0.55


def test_edge_family_stays_inside_support():
    box = Polytope.box([-10.0, 0.0], [20.0, 5.0])
    s = edge_family(box, 300, seed=3)
    assert all(box.contains(x) for x in s.samples)
    np.testing.assert_allclose(np.unique(s.samples[:, 0]), [-9.7, 19.4])
