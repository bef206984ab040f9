import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from idlewatch.doa import (
    RootMusic,
    estimate_doa,
    noise_subspace,
    polynomial_roots,
    rootmusic_batch,
    rootmusic_polynomial,
    sample_covariance,
    sliding_doa,
)
from idlewatch.exceptions import NumericalFailure
from idlewatch.signal_model import (
    InterferenceParams,
    ScenarioConfig,
    Snapshot,
    UlaGeometry,
    steering_vector,
    synthesize_snapshots,
)

G4 = UlaGeometry(4)


def random_orthonormal(rng, m, k):
    A = rng.standard_normal((m, k)) + 1j * rng.standard_normal((m, k))
    Q, _ = np.linalg.qr(A)
    return Q


def test_single_snapshot_covariance_is_rank_one():
    y = np.array([1, 1j, -1, 2])
    cov = sample_covariance([Snapshot(y, 1)])
    np.testing.assert_allclose(cov.matrix, np.outer(y, y.conj()))
    assert np.linalg.matrix_rank(cov.matrix) == 1
    assert cov.num_snapshots == 1
    with pytest.raises(ValueError):
        sample_covariance(np.zeros((0, 4)))


def test_covariance_hermitian_psd():
    Y = synthesize_snapshots(ScenarioConfig(rng_seed=3), 7)
    R = sample_covariance(Y).matrix
    assert np.max(np.abs(R - R.conj().T)) <= 1e-12
    assert np.linalg.eigvalsh(R).min() >= -1e-12
    assert np.linalg.matrix_rank(R) <= 4


def test_noise_covariance_law_of_large_numbers():
    Y = synthesize_snapshots(ScenarioConfig(rng_seed=4), 100_000)
    np.testing.assert_allclose(sample_covariance(Y).matrix, np.eye(4), atol=0.02)


def test_principal_eigenvector_aligns_with_source():
    theta = math.radians(-35)
    scenario = ScenarioConfig(interference=InterferenceParams(1.5, theta), change_point=1,
                              rng_seed=5)
    R = sample_covariance(synthesize_snapshots(scenario, 100_000)).matrix
    _, V = np.linalg.eigh(R)
    assert abs(np.vdot(steering_vector(G4, theta), V[:, -1])) > 0.999


def test_noise_subspace_of_diagonal_matrix():
    sub = noise_subspace(np.diag([5.0, 1.0, 2.0, 3.0]))
    np.testing.assert_allclose(sub.eigenvalues, [1.0, 2.0, 3.0])
    # orthogonal to e1
    np.testing.assert_allclose(np.abs(sub.basis[0]), 0.0, atol=1e-15)
    np.testing.assert_allclose(sub.basis.conj().T @ sub.basis, np.eye(3), atol=1e-12)


@pytest.mark.parametrize("deg", [-70, -20, 0, 15, 60])
def test_noise_subspace_exactly_orthogonal(deg):
    a = steering_vector(G4, math.radians(deg))
    R = 2.0 * np.outer(a, a.conj()) + np.eye(4)
    E = noise_subspace(R).basis
    assert np.linalg.norm(E.conj().T @ a) <= 1e-10
    np.testing.assert_allclose(E.conj().T @ E, np.eye(3), atol=1e-10)


def test_noise_subspace_degenerate_identity():
    sub = noise_subspace(np.eye(4))
    assert sub.basis.shape == (4, 3)
    np.testing.assert_allclose(sub.basis.conj().T @ sub.basis, np.eye(3), atol=1e-12)


def test_noise_subspace_phase_convention_is_deterministic():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    R = A @ A.conj().T
    E = noise_subspace(R).basis
    for col in E.T:
        pivot = col[np.argmax(np.abs(col))]
        assert abs(pivot.imag) < 1e-12 and pivot.real > 0
    np.testing.assert_array_equal(E, noise_subspace(R).basis)


def test_noise_subspace_rejects_multiple_sources():
    with pytest.raises(ValueError):
        noise_subspace(np.eye(4), num_sources=2)


def test_polynomial_two_element_example():
    c = rootmusic_polynomial(np.array([[1.0], [0.0]]))
    np.testing.assert_allclose(c, [0.0, 1.0, 0.0])


def brute_force_coefficients(E):
    # c_l = sum_i sum_j E[i, j] conj(E[i + l, j]) for l >= 0, mirrored by conjugation
    M = E.shape[0]
    c = {}
    for lag in range(M):
        total = sum(E[i, j] * np.conj(E[i + lag, j]) for i in range(M - lag)
                    for j in range(E.shape[1]))
        c[lag] = total
    return c


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(2, 8))
def test_polynomial_symmetry_and_trace(seed, m):
    E = random_orthonormal(np.random.default_rng(seed), m, m - 1)
    c = rootmusic_polynomial(E)
    assert c[m - 1].imag == 0.0
    assert c[m - 1].real == pytest.approx(m - 1)
    np.testing.assert_allclose(c[::-1], c.conj(), atol=1e-13)
    ref = brute_force_coefficients(E)
    for lag in range(m):
        assert c[m - 1 + lag] == pytest.approx(ref[lag], abs=1e-12)


def test_polynomial_roots_simple():
    roots = np.sort_complex(polynomial_roots([-1.0, 0.0, 1.0]))
    np.testing.assert_allclose(roots, [-1.0, 1.0], atol=1e-14)


def test_polynomial_roots_forward_constructed_pair():
    z1, z2 = 0.5 * np.exp(1j * math.pi / 4), 2.0 * np.exp(-1j * math.pi / 4)
    ascending = np.polynomial.polynomial.polyfromroots([z1, z2]) * 3.0
    roots = polynomial_roots(ascending)
    for z in (z1, z2):
        assert np.min(np.abs(roots - z)) < 1e-8


def test_polynomial_roots_trims_and_validates():
    roots = polynomial_roots([-1.0, 0.0, 1.0, 1e-20])
    assert roots.size == 2
    with pytest.raises(ValueError):
        polynomial_roots([0.0, 0.0])


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 100_000), m=st.integers(2, 8))
def test_roots_come_in_conjugate_reciprocal_pairs(seed, m):
    rng = np.random.default_rng(seed)
    c = rootmusic_polynomial(random_orthonormal(rng, m, m - 1))
    roots = polynomial_roots(c)
    assert roots.size == 2 * (m - 1)
    for z in roots:
        if abs(abs(z) - 1.0) > 1e-6:
            assert np.min(np.abs(roots - 1.0 / np.conj(z))) < 1e-6


@pytest.mark.parametrize("deg", np.arange(-80, 81, 10))
def test_noiseless_single_snapshot_recovery(deg):
    theta = math.radians(deg)
    est = estimate_doa(1.7 * np.exp(0.4j) * steering_vector(G4, theta)[None, :], G4)
    assert abs(est.theta_hat - theta) < 1e-6
    assert 0 < est.root_modulus <= 1.0
    assert est.window == (1, 1)


def test_exact_covariance_recovery_on_grid():
    for deg in np.linspace(-80, 80, 161):
        theta = math.radians(deg)
        a = steering_vector(G4, theta)
        for s2 in (0.3, 1.0, 10.0):
            R = s2 * np.outer(a, a.conj()) + np.eye(4)
            est, _, ok = rootmusic_batch(R)
            assert ok and abs(est - theta) <= 1e-8


def test_broadside_high_snr():
    scenario = ScenarioConfig(interference=InterferenceParams(10 ** 0.25, 0.0), change_point=1,
                              rng_seed=6)
    rng = np.random.default_rng(6)
    est = [estimate_doa(synthesize_snapshots(scenario, 64, rng=rng)).theta_hat
           for _ in range(400)]
    assert abs(math.degrees(np.mean(est))) < 0.5
    assert math.degrees(np.sqrt(np.mean(np.square(est)))) < 2.0


def test_noise_only_single_snapshot_is_in_range():
    for seed in range(20):
        y = synthesize_snapshots(ScenarioConfig(rng_seed=seed), 1)
        est = estimate_doa(y)
        assert abs(est.theta_hat) <= math.pi / 2


def test_global_phase_invariance():
    scenario = ScenarioConfig(interference=InterferenceParams(1.0, 0.5), change_point=1,
                              rng_seed=7)
    Y = synthesize_snapshots(scenario, 16)
    base = estimate_doa(Y).theta_hat
    for psi in (0.3, 1.9, -2.5):
        assert abs(estimate_doa(Y * np.exp(1j * psi)).theta_hat - base) <= 1e-10


def test_rmse_decreases_with_window_length():
    theta = math.radians(20)
    scenario = ScenarioConfig(interference=InterferenceParams(1.0, theta), change_point=1)
    rng = np.random.default_rng(8)
    rmse = []
    for n in (4, 16, 64, 256):
        errs = [estimate_doa(synthesize_snapshots(scenario, n, rng=rng)).theta_hat - theta
                for _ in range(1000)]
        rmse.append(math.sqrt(np.mean(np.square(errs))))
    assert all(a > b for a, b in zip(rmse, rmse[1:]))


def test_no_admissible_root_is_a_numerical_failure(monkeypatch):
    from idlewatch import doa

    roots = np.array([2.0, 3.0 + 1j])
    _, _, ok = doa.select_root_batch(roots, np.eye(4), 0.5)
    assert not ok
    monkeypatch.setattr(doa, "polynomial_roots", lambda c: roots)
    with pytest.raises(NumericalFailure, match="moduli"):
        doa.estimate_doa(steering_vector(G4, 0.1)[None, :])


def test_tie_break_prefers_beamformer_power():
    from idlewatch.doa import select_root_batch

    a = steering_vector(G4, math.radians(30))
    R = 5.0 * np.outer(a, a.conj()) + np.eye(4)
    z_good = np.exp(1j * math.pi * math.sin(math.radians(30)))
    z_bad = np.exp(1j * math.pi * math.sin(math.radians(-40)))
    for roots in (np.array([z_good, z_bad]), np.array([z_bad, z_good])):
        theta, _, ok = select_root_batch(roots, R, 0.5)
        assert ok and theta == pytest.approx(math.radians(30))


def test_diagonal_loading_option():
    a = steering_vector(G4, 0.2)
    Y = np.vstack([a, 2 * a])
    est = estimate_doa(Y, G4, diagonal_loading=True)
    assert abs(est.theta_hat - 0.2) < 1e-6


def test_rootmusic_estimator():
    theta = math.radians(-12)
    scenario = ScenarioConfig(interference=InterferenceParams(2.0, theta), change_point=1,
                              rng_seed=9)
    Y = synthesize_snapshots(scenario, 200)
    est = RootMusic().fit(Y)
    assert abs(est.theta_ - theta) < math.radians(2)
    assert est.coefficients_.shape == (7,)
    assert est.noise_subspace_.shape == (4, 3)
    r = est.transform(Y)
    assert r.shape == (200,) and np.all(r >= 0)


def test_sliding_doa_windows():
    theta = math.radians(40)
    scenario = ScenarioConfig(interference=InterferenceParams(3.0, theta), change_point=1)
    Y = synthesize_snapshots(scenario, 100)
    out = list(sliding_doa(Y, 25))
    assert [e.window for e in out] == [(1, 25), (26, 50), (51, 75), (76, 100)]
    assert len(list(sliding_doa(Y, 25, step=5))) == 16
    for e in out:
        assert abs(e.theta_hat - theta) < math.radians(3)
