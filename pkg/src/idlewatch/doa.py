"""Root-MUSIC direction-of-arrival estimation for one source on a ULA.

The batched helpers (``*_batch``) operate on stacks of covariance matrices and
are what the GLR detector uses; the public single-window functions are thin
wrappers over them.

Polynomial convention: for a noise-subspace projector ``C = E_n E_n^H`` the
coefficient of ``z**l`` is ``c_l = sum_i C[i, i+l]`` (``l = -(M-1)..M-1``, so
``c_{-l} = conj(c_l)``). On the unit circle this polynomial equals
``v(z)^H C v(z)`` with ``v(z) = [1, z, ..., z^{M-1}]``, so a source at ``theta``
gives a root at ``exp(i 2 pi (d/lambda) sin(theta))``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_int, check_snapshots
from .exceptions import NumericalFailure
from .signal_model import UlaGeometry

logger = logging.getLogger(__name__)

__all__ = [
    "SampleCovariance",
    "NoiseSubspace",
    "DoaEstimate",
    "sample_covariance",
    "noise_subspace",
    "rootmusic_polynomial",
    "polynomial_roots",
    "estimate_doa",
    "RootMusic",
]

# Roots with |z| <= 1 + _UNIT_BAND count as inside/on the unit circle.
_UNIT_BAND = 1e-9
_TIE_BAND = 1e-9
_LOADING = 1e-10
# roots this close to |z| = 1 are treated as lying on the circle
_CIRCLE_BAND = 1e-6


@dataclass(frozen=True)
class SampleCovariance:
    matrix: np.ndarray
    num_snapshots: int


@dataclass(frozen=True)
class NoiseSubspace:
    """Orthonormal basis ``E_n`` (M x (M-1)) and its eigenvalues in ascending order."""

    basis: np.ndarray
    eigenvalues: np.ndarray


@dataclass(frozen=True)
class DoaEstimate:
    theta_hat: float
    root_modulus: float
    window: tuple[int, int]
    roots: np.ndarray


def covariance_batch(Y):
    """``(1/N) sum_i y_i y_i^H`` for snapshots stacked as (..., N, M)."""
    Y = np.asarray(Y, dtype=complex)
    R = np.einsum("...ni,...nj->...ij", Y, Y.conj()) / Y.shape[-2]
    return 0.5 * (R + np.conj(np.swapaxes(R, -1, -2)))


def _load(R):
    M = R.shape[-1]
    eps = _LOADING * np.real(np.trace(R, axis1=-2, axis2=-1)) / M
    return R + eps[..., None, None] * np.eye(M)


def noise_subspace_batch(R, diagonal_loading=False):
    """Eigenvectors of the M-1 smallest eigenvalues of each Hermitian ``R``.

    Each eigenvector is rotated so its largest-magnitude entry is real and
    positive, which fixes the otherwise arbitrary phase.
    """
    R = np.asarray(R, dtype=complex)
    if diagonal_loading:
        R = _load(R)
    try:
        w, V = np.linalg.eigh(R)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc
    idx = np.argmax(np.abs(V), axis=-2)
    pivot = np.take_along_axis(V, idx[..., None, :], axis=-2)
    V = V * (np.conj(pivot) / np.abs(pivot))
    return V[..., :, :-1], w[..., :-1]


def polynomial_batch(E):
    """Root-MUSIC coefficients ordered ``l = -(M-1) .. M-1`` (ascending powers of z)."""
    C = E @ np.conj(np.swapaxes(E, -1, -2))
    M = C.shape[-1]
    c = np.empty(C.shape[:-2] + (2 * M - 1,), dtype=complex)
    for lag in range(M):
        diag = np.trace(C, offset=lag, axis1=-2, axis2=-1)
        c[..., M - 1 + lag] = diag
        c[..., M - 1 - lag] = np.conj(diag)
    c[..., M - 1] = c[..., M - 1].real
    return c


def _companion_roots(c):
    # c: (..., n+1) ascending coefficients with nonzero c[..., -1]
    n = c.shape[-1] - 1
    comp = np.zeros(c.shape[:-1] + (n, n), dtype=complex)
    comp[..., np.arange(1, n), np.arange(n - 1)] = 1.0
    comp[..., :, -1] = -c[..., :-1] / c[..., -1:]
    return np.linalg.eigvals(comp)


def polynomial_roots(coefficients):
    """All roots of ``sum_k coefficients[k] * z**k`` via companion-matrix eigenvalues.

    Coefficients are in ascending powers (the ``numpy.polynomial`` order).
    Negligible highest-power coefficients are trimmed first.
    """
    c = np.atleast_1d(np.asarray(coefficients, dtype=complex))
    scale = np.max(np.abs(c)) if c.size else 0.0
    if scale == 0.0:
        raise ValueError("all polynomial coefficients are zero")
    nz = np.flatnonzero(np.abs(c) > 1e-14 * scale)
    c = c[: nz[-1] + 1]
    if c.size == 1:
        return np.empty(0, dtype=complex)
    return _companion_roots(c)


def _beam_power(R, z, spacing):
    # a(theta)^H R a(theta) with a built from the root's phase
    M = R.shape[-1]
    arg = np.angle(z) / (2.0 * np.pi * spacing)
    theta = np.arcsin(np.clip(arg, -1.0, 1.0))
    a = np.exp(1j * 2.0 * np.pi * spacing * np.sin(theta)[..., None] * np.arange(M)) / math.sqrt(M)
    Ra = np.einsum("...ij,...rj->...ri", R, a)
    return np.real(np.sum(np.conj(a) * Ra, axis=-1))


def _polish_on_circle(omega, c, modulus):
    """Refine ``arg z`` for roots on the unit circle.

    Such a root is a double zero of the nonnegative null spectrum
    ``Q(w) = sum_l c_l e^{ilw}``, which rooting only resolves to ~sqrt(eps).
    A few Newton steps on ``Q'(w) = 0`` recover full precision. Roots off the
    circle are returned unchanged.
    """
    M = (c.shape[-1] + 1) // 2
    lags = np.arange(-(M - 1), M)
    near = np.abs(modulus - 1.0) <= _CIRCLE_BAND
    if not np.any(near):
        return omega
    w = np.array(omega, dtype=float, copy=True)
    for _ in range(3):
        e = np.exp(1j * lags * w[..., None]) * c
        d1 = np.real(np.sum(1j * lags * e, axis=-1))
        d2 = np.real(np.sum(-(lags**2) * e, axis=-1))
        step = np.where(d2 > 0, d1 / np.where(d2 > 0, d2, 1.0), 0.0)
        step = np.where(np.abs(step) < 1e-4, step, 0.0)
        w = w - step
    return np.where(near, w, omega)


def select_root_batch(roots, R, spacing, coefficients=None):
    """Pick, per problem, the admissible root closest to the unit circle.

    Admissible means ``|z| <= 1 + 1e-9``. Near ties (moduli within 1e-9) go to
    the root whose steering direction carries more beamformer power. Returns
    ``(theta, modulus, ok)``; ``ok`` is False where no root is admissible.
    """
    mod = np.abs(roots)
    score = np.where(mod <= 1.0 + _UNIT_BAND, mod, -np.inf)
    best = np.max(score, axis=-1, keepdims=True)
    ok = np.isfinite(best[..., 0])
    tied = score >= best - _TIE_BAND
    if np.any(np.sum(tied, axis=-1) > 1):
        power = _beam_power(R, roots, spacing)
        pick = np.argmax(np.where(tied, power, -np.inf), axis=-1)
    else:
        pick = np.argmax(score, axis=-1)
    z = np.take_along_axis(roots, pick[..., None], axis=-1)[..., 0]
    modulus = np.abs(z)
    omega = np.angle(z)
    if coefficients is not None:
        omega = _polish_on_circle(omega, coefficients, modulus)
        omega = np.angle(np.exp(1j * omega))
    theta = np.arcsin(np.clip(omega / (2.0 * np.pi * spacing), -1.0, 1.0))
    theta = np.where(ok, theta, np.nan)
    return theta, modulus, ok


def rootmusic_batch(R, spacing=0.5, diagonal_loading=False):
    """Root-MUSIC on a stack of covariance matrices (..., M, M).

    Returns ``(theta, modulus, ok)`` arrays with the stack shape.
    """
    R = np.asarray(R, dtype=complex)
    E, _ = noise_subspace_batch(R, diagonal_loading)
    c = polynomial_batch(E)
    lead = np.abs(c[..., -1])
    scale = np.max(np.abs(c), axis=-1)
    regular = lead > 1e-12 * scale
    stack = R.shape[:-2]
    M = R.shape[-1]
    roots = np.full(stack + (2 * M - 2,), np.nan + 0j)
    if np.all(regular):
        roots = _companion_roots(c)
    else:
        # degenerate leading coefficient: root one problem at a time with trimming
        flat_c = c.reshape(-1, c.shape[-1])
        flat_roots = roots.reshape(-1, roots.shape[-1])
        for i, ci in enumerate(flat_c):
            r = polynomial_roots(ci)
            flat_roots[i, : r.size] = r
        roots = flat_roots.reshape(roots.shape)
    roots = np.where(np.isnan(roots), np.inf + 0j, roots)
    return select_root_batch(roots, R, spacing, c)


def sample_covariance(snapshots):
    """Sample covariance of a window of snapshots, symmetrized to be exactly Hermitian."""
    Y = check_snapshots(snapshots)
    return SampleCovariance(matrix=covariance_batch(Y), num_snapshots=Y.shape[0])


def noise_subspace(covariance, num_sources=1, diagonal_loading=False):
    """Noise subspace for a single source: eigenvectors of the M-1 smallest eigenvalues."""
    if num_sources != 1:
        raise ValueError("only a single interference source is supported (num_sources=1)")
    R = covariance.matrix if isinstance(covariance, SampleCovariance) else np.asarray(covariance)
    if R.ndim != 2 or R.shape[0] != R.shape[1] or R.shape[0] < 2:
        raise ValueError(f"covariance must be a square matrix with M >= 2, got {R.shape}")
    basis, eigenvalues = noise_subspace_batch(R, diagonal_loading)
    return NoiseSubspace(basis=basis, eigenvalues=eigenvalues)


def rootmusic_polynomial(subspace):
    """Coefficients ``c_l`` for ``l = -(M-1) .. M-1`` (index ``l + M - 1``)."""
    E = subspace.basis if isinstance(subspace, NoiseSubspace) else np.asarray(subspace)
    return polynomial_batch(np.asarray(E, dtype=complex))


def estimate_doa(snapshots, geometry=None, *, diagonal_loading=False, window=None):
    """Root-MUSIC estimate of a single interference direction.

    Parameters
    ----------
    snapshots : array-like of shape (N, M) or sequence of Snapshot
    geometry : UlaGeometry, optional
        Defaults to half-wavelength spacing with M taken from the data.
    window : tuple of int, optional
        (j, k) indices recorded on the result; defaults to (1, N).

    Raises
    ------
    NumericalFailure
        If no root lies inside or on the unit circle.
    """
    Y = check_snapshots(snapshots)
    geometry = geometry or UlaGeometry(Y.shape[1])
    if geometry.num_elements != Y.shape[1]:
        raise ValueError(f"geometry has {geometry.num_elements} elements, snapshots have {Y.shape[1]}")
    R = covariance_batch(Y)
    if diagonal_loading:
        R = _load(R)
    E, _ = noise_subspace_batch(R)
    c = polynomial_batch(E)
    roots = polynomial_roots(c)
    if roots.size == 0:
        raise NumericalFailure("Root-MUSIC polynomial has no roots")
    theta, modulus, ok = select_root_batch(roots, R, geometry.spacing_wavelengths, c)
    if not ok:
        raise NumericalFailure(
            f"no Root-MUSIC root inside the unit circle; moduli: {np.sort(np.abs(roots))}"
        )
    return DoaEstimate(
        theta_hat=float(theta),
        root_modulus=float(min(modulus, 1.0)),
        window=tuple(window) if window is not None else (1, Y.shape[0]),
        roots=roots,
    )


class RootMusic(BaseEstimator):
    """Single-source Root-MUSIC as an estimator.

    ``fit`` takes an (N, M) block of snapshots; ``transform`` projects
    snapshots onto the estimated direction and returns amplitudes.

    Attributes
    ----------
    theta_ : float
        Estimated direction in radians from broadside.
    root_modulus_ : float
    covariance_ : ndarray of shape (M, M)
    noise_subspace_ : ndarray of shape (M, M-1)
    coefficients_ : ndarray of shape (2M-1,)
    roots_ : ndarray
    """

    def __init__(self, spacing_wavelengths=0.5, diagonal_loading=False):
        self.spacing_wavelengths = spacing_wavelengths
        self.diagonal_loading = diagonal_loading

    def fit(self, X, y=None):
        Y = check_snapshots(X)
        geometry = UlaGeometry(Y.shape[1], self.spacing_wavelengths)
        est = estimate_doa(Y, geometry, diagonal_loading=self.diagonal_loading)
        self.covariance_ = covariance_batch(Y)
        sub = noise_subspace(self.covariance_, diagonal_loading=self.diagonal_loading)
        self.noise_subspace_ = sub.basis
        self.coefficients_ = rootmusic_polynomial(sub)
        self.roots_ = est.roots
        self.theta_ = est.theta_hat
        self.root_modulus_ = est.root_modulus
        self.n_elements_ = Y.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "theta_")
        Y = check_snapshots(X, self.n_elements_)
        m = np.arange(self.n_elements_)
        a = np.exp(1j * 2 * np.pi * self.spacing_wavelengths * math.sin(self.theta_) * m)
        return np.abs(Y @ a.conj()) / math.sqrt(self.n_elements_)


def sliding_doa(snapshots, window, step=None, geometry=None, diagonal_loading=False):
    """Root-MUSIC over consecutive windows of ``window`` snapshots.

    Yields :class:`DoaEstimate` objects with 1-based inclusive index ranges.
    Windows whose estimation fails are logged and skipped.
    """
    Y = check_snapshots(snapshots)
    window = check_int(window, "window")
    step = window if step is None else check_int(step, "step")
    for start in range(0, Y.shape[0] - window + 1, step):
        block = Y[start : start + window]
        try:
            yield estimate_doa(block, geometry, diagonal_loading=diagonal_loading,
                               window=(start + 1, start + window))
        except NumericalFailure as exc:
            logger.warning("window %d..%d skipped: %s", start + 1, start + window, exc)
