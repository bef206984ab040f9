import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from idlewatch.signal_model import (
    InterferenceParams,
    MatchedFilter,
    ScenarioConfig,
    Snapshot,
    UlaGeometry,
    amplitude,
    project,
    steering_vector,
    synthesize_snapshot,
    synthesize_snapshots,
)


@settings(max_examples=200, deadline=None)
@given(
    theta=st.floats(-math.pi / 2, math.pi / 2),
    m=st.integers(2, 16),
    d=st.floats(0.1, 2.0),
)
def test_steering_vector_unit_norm(theta, m, d):
    a = steering_vector(UlaGeometry(m, d), theta)
    assert abs(np.linalg.norm(a) - 1.0) < 1e-12


def test_steering_vector_broadside_and_phase_progression():
    g = UlaGeometry(4)
    np.testing.assert_allclose(steering_vector(g, 0.0), np.full(4, 0.5))
    a = steering_vector(g, math.pi / 6)
    # half-wavelength spacing: phase step pi*sin(30 deg) = pi/2
    np.testing.assert_allclose(a[1:] / a[:-1], np.full(3, 1j), atol=1e-14)


def test_steering_vector_vectorized_and_validated():
    g = UlaGeometry(3)
    thetas = np.array([[0.0, 0.1], [0.2, -0.3]])
    out = steering_vector(g, thetas)
    assert out.shape == (2, 2, 3)
    np.testing.assert_allclose(out[1, 1], steering_vector(g, -0.3))
    with pytest.raises(ValueError):
        steering_vector(g, 2.0)
    with pytest.raises(ValueError):
        steering_vector(g, float("nan"))


def test_geometry_validation():
    with pytest.raises(ValueError):
        UlaGeometry(1)
    with pytest.raises(ValueError):
        UlaGeometry(4, 0.0)


def test_noise_covariance_tends_to_identity():
    scenario = ScenarioConfig(rng_seed=11)
    Y = synthesize_snapshots(scenario, 100_000)
    R = Y.T @ Y.conj() / Y.shape[0]
    np.testing.assert_allclose(R, np.eye(4), atol=0.02)


def test_interference_principal_eigenvector_aligns():
    g = UlaGeometry(4)
    theta = math.radians(25)
    scenario = ScenarioConfig(g, interference=InterferenceParams(2.0, theta), change_point=1,
                              rng_seed=2)
    Y = synthesize_snapshots(scenario, 50_000)
    R = Y.T @ Y.conj() / Y.shape[0]
    _, V = np.linalg.eigh(R)
    assert abs(np.vdot(steering_vector(g, theta), V[:, -1])) > 0.999


def test_change_point_and_fixed_phase():
    g = UlaGeometry(4)
    itf = InterferenceParams(5.0, 0.2, phase_model="fixed", phase=0.7)
    scenario = ScenarioConfig(g, noise_std=1e-9, interference=itf, change_point=4)
    Y = synthesize_snapshots(scenario, 6)
    z = project(Y, steering_vector(g, 0.2))
    np.testing.assert_allclose(np.abs(z[:3]), 0.0, atol=1e-8)
    np.testing.assert_allclose(z[3:], 5.0 * np.exp(0.7j), atol=1e-8)
    # indices continue from ``start``
    tail = synthesize_snapshots(scenario, 2, start=10)
    np.testing.assert_allclose(np.abs(project(tail, steering_vector(g, 0.2))), 5.0, atol=1e-8)


def test_seeded_synthesis_is_deterministic():
    scenario = ScenarioConfig(rng_seed=123)
    np.testing.assert_array_equal(synthesize_snapshots(scenario, 10),
                                  synthesize_snapshots(scenario, 10))
    snap = synthesize_snapshot(scenario, 7, np.random.default_rng(1))
    assert isinstance(snap, Snapshot) and snap.index == 7 and snap.values.shape == (4,)


def test_project_and_amplitude():
    g = UlaGeometry(4)
    a = steering_vector(g, 0.3)
    snap = Snapshot(values=2.0 * a, index=1)
    assert project(snap, a) == pytest.approx(2.0)
    assert amplitude(project(snap, a)) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        project(np.ones(3), a)


def test_scenario_dict_roundtrip():
    scenario = ScenarioConfig(UlaGeometry(6, 0.4), 1.5,
                              InterferenceParams(2.0, math.radians(-30)), change_point=5,
                              rng_seed=9)
    back = ScenarioConfig.from_dict(scenario.to_dict())
    assert back.geometry == scenario.geometry
    assert back.change_point == 5
    assert back.interference.direction == pytest.approx(scenario.interference.direction)
    assert back.interference.amplitude == pytest.approx(2.0)
    h0 = ScenarioConfig()
    assert h0.to_dict()["change_point"] is None
    assert ScenarioConfig.from_dict(h0.to_dict()).change_point == math.inf


def test_scenario_inr_db_field():
    data = {"noise_std": 2.0, "interference": {"inr_db": -3.0}, "change_point": 1}
    scenario = ScenarioConfig.from_dict(data)
    assert scenario.interference.amplitude == pytest.approx(2.0 * 10 ** -0.15)


@pytest.mark.parametrize("data,field", [
    ({"version": 2}, "version"),
    ({"bogus": 1}, "bogus"),
    ({"noise_std": -1}, "noise_std"),
    ({"geometry": {"num_elements": 1}}, "geometry"),
    ({"interference": {"direction_deg": 10}}, "interference"),
    ({"interference": {"amplitude": 1, "direction_deg": 120}}, "interference"),
    ({"change_point": 0}, "change_point"),
])
def test_scenario_errors_name_the_field(data, field):
    with pytest.raises(ValueError, match=field):
        ScenarioConfig.from_dict(data)


def test_matched_filter_estimator():
    scenario = ScenarioConfig(interference=InterferenceParams(1.0, 0.4), change_point=1)
    Y = synthesize_snapshots(scenario, 20)
    mf = MatchedFilter(theta=0.4).fit(Y)
    expected = np.abs(Y @ steering_vector(UlaGeometry(4), 0.4).conj())
    np.testing.assert_allclose(mf.transform(Y), expected)
    np.testing.assert_allclose(mf.fit_transform(Y), expected)
    assert clone(mf).get_params() == {"theta": 0.4, "spacing_wavelengths": 0.5}
    with pytest.raises(ValueError):
        mf.transform(Y[:, :3])
