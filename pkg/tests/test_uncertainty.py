import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from drcc_ots.case import bundled_case
from drcc_ots.errors import (
    DegenerateCoordinate,
    DimensionMismatch,
    EmptyFile,
    MalformedDocument,
    MeanOutsideSupport,
    NonNumericCell,
    RaggedRows,
)
from drcc_ots.uncertainty import (
    Gaussian,
    MeanMad,
    MultiMad,
    Polytope,
    ScenarioSet,
    ambiguity_to_dict,
    box_support,
    fit_gaussian,
    load_scenarios,
    moment_stats,
    parse_ambiguity,
    parse_scenarios,
    partition_modes,
    placement_matrix,
)


def test_load_scenarios_shape(tmp_path):
    rng = np.random.default_rng(0)
    s = ScenarioSet(rng.normal(size=(200, 2)))
    path = tmp_path / "s.csv"
    path.write_text(s.to_csv())
    back = load_scenarios(path)
    assert (back.S, back.K) == (200, 2)
    np.testing.assert_allclose(back.samples, s.samples)


def test_three_source_file():
    text = "xi_1,xi_2,xi_3\n1,2,3\n-1,0,4\n"
    s = parse_scenarios(text)
    assert s.K == 3 and s.S == 2


@pytest.mark.parametrize("text,error", [
    ("xi_1,xi_2\n1,\n", NonNumericCell),
    ("xi_1,xi_2\n1,abc\n", NonNumericCell),
    ("xi_1,xi_2\n1\n", RaggedRows),
    ("", EmptyFile),
    ("xi_1\n", EmptyFile),
    ("a,b\n1,2\n", MalformedDocument),
    ("xi_1\nnan\n", NonNumericCell),
])
def test_scenario_validation(text, error):
    with pytest.raises(error):
        parse_scenarios(text)


def test_box_support_examples():
    s = ScenarioSet([[0.0, 0.0], [1.0, 2.0]])
    box = box_support(s)
    lo, hi = box.box_bounds()
    np.testing.assert_allclose(lo, [0, 0])
    np.testing.assert_allclose(hi, [1, 2])
    assert box.W == 4
    lo, hi = box_support(s, 0.1).box_bounds()
    np.testing.assert_allclose(lo, [-0.1, -0.2])
    np.testing.assert_allclose(hi, [1.1, 2.2])


def test_box_support_degenerate():
    with pytest.raises(DegenerateCoordinate):
        box_support(ScenarioSet([[1.0], [1.0]]))


@pytest.mark.parametrize("samples,mu,sigma", [
    ([-1.0, 1.0], 0.0, 1.0),
    ([0.0, 0.0, 3.0], 1.0, 4.0 / 3.0),
    ([2.5, 2.5, 2.5], 2.5, 0.0),
])
def test_moment_stats(samples, mu, sigma):
    m, s = moment_stats(ScenarioSet(np.array(samples)[:, None]))
    assert m[0] == pytest.approx(mu)
    assert s[0] == pytest.approx(sigma)


def test_fit_gaussian_unbiased():
    mu, Sigma = fit_gaussian(ScenarioSet([[-1.0], [1.0]]))
    assert mu[0] == 0.0
    assert Sigma[0, 0] == pytest.approx(2.0)


def test_fit_gaussian_regularizes_constant_data():
    _, Sigma = fit_gaussian(ScenarioSet(np.ones((5, 2))))
    assert np.all(np.linalg.eigvalsh(Sigma) > 0)
    assert np.allclose(Sigma, Sigma[0, 0] * np.eye(2))


def test_fit_gaussian_standard_normal():
    rng = np.random.default_rng(1)
    _, Sigma = fit_gaussian(ScenarioSet(rng.normal(size=(10000, 3))))
    assert np.abs(Sigma - np.eye(3)).max() < 0.1


def test_partition_two_clusters():
    rng = np.random.default_rng(2)
    s = ScenarioSet(np.concatenate([rng.normal(0, 0.5, 100), rng.normal(10, 0.5, 100)])[:, None])
    spec = partition_modes(s, 2, seed=0)
    np.testing.assert_allclose(spec.p, [0.5, 0.5], atol=0.02)
    np.testing.assert_allclose([m.mu[0] for m in spec.modes], [0, 10], atol=0.3)
    assert spec.mean() == pytest.approx(s.samples.mean(), abs=1e-9)


def test_partition_single_mode_matches_moments():
    rng = np.random.default_rng(3)
    s = ScenarioSet(rng.normal(size=(50, 2)))
    spec = partition_modes(s, 1)
    mu, sigma = moment_stats(s)
    np.testing.assert_allclose(spec.modes[0].mu, mu)
    np.testing.assert_allclose(spec.modes[0].sigma, sigma)
    assert spec.p[0] == 1.0


def test_partition_singletons():
    s = ScenarioSet(np.arange(6.0)[:, None])
    spec = partition_modes(s, 6, seed=0)
    np.testing.assert_allclose(spec.p, 1 / 6)
    assert all(m.sigma[0] == 0 for m in spec.modes)


def test_partition_rejects_bad_count():
    with pytest.raises(MalformedDocument):
        partition_modes(ScenarioSet(np.arange(3.0)[:, None]), 4)


@settings(max_examples=40, deadline=None)
@given(arrays(float, st.tuples(st.integers(2, 30), st.integers(1, 3)), elements=st.floats(-100, 100)),
       st.floats(0, 1))
def test_mean_inside_box(samples, margin):
    s = ScenarioSet(samples)
    spread = samples.max(axis=0) - samples.min(axis=0)
    if np.any(spread <= 1e-6):
        return
    mu, _ = moment_stats(s)
    assert box_support(s, margin).contains(mu, tol=1e-9)


def test_polytope_support_value_and_vertices():
    box = Polytope.box([-1, 0], [1, 2])
    assert box.support_value([1, -1]) == pytest.approx(1.0)
    assert len(box.vertices()) == 4
    general = Polytope(box.U, box.t)
    assert general.support_value([2, 1]) == pytest.approx(4.0)
    assert box.chebyshev_radius() == pytest.approx(1.0)


def test_mean_mad_validation():
    box = Polytope.box([-1], [1])
    with pytest.raises(MeanOutsideSupport):
        MeanMad([1.0], [0.1], box)
    with pytest.raises(MalformedDocument):
        MeanMad([0.0], [-0.1], box)
    with pytest.raises(DimensionMismatch):
        MeanMad([0.0, 0.0], [0.1], box)


def test_gaussian_validation():
    with pytest.raises(MalformedDocument):
        Gaussian([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(DimensionMismatch):
        Gaussian([0.0], [[1.0, 0.0], [0.0, 1.0]])


def test_multi_mad_weights():
    mode = MeanMad([0.0], [0.1], Polytope.box([-1], [1]))
    with pytest.raises(MalformedDocument):
        MultiMad([0.6, 0.6], (mode, mode))


@pytest.mark.parametrize("spec", [
    MeanMad([0.0, 1.0], [0.5, 0.2], Polytope.box([-2, -1], [2, 3])),
    Gaussian([1.0], [[4.0]]),
    MultiMad([0.3, 0.7], (MeanMad([-1.0], [0.2], Polytope.box([-2], [0])),
                          MeanMad([1.0], [0.3], Polytope.box([0], [2])))),
])
def test_ambiguity_sidecar_roundtrip(spec):
    doc = ambiguity_to_dict(spec)
    back = parse_ambiguity(doc)
    assert ambiguity_to_dict(back) == doc


def test_placement_matrix():
    case = bundled_case("case14")
    F = placement_matrix(case, [3, 6, 13])
    assert F.shape == (14, 3)
    assert F[2, 0] == F[5, 1] == F[12, 2] == 1.0
    assert F.sum() == 3
    with pytest.raises(DimensionMismatch):
        placement_matrix(case, [99])
