"""ULA geometry, idle-phase snapshot synthesis and matched-filter projection.

Angle convention: ``theta`` is measured from broadside, so ``theta = 0`` is a
plane wave arriving perpendicular to the array axis. A source "at 90 degrees
relative to the array axis" is therefore ``theta = 0`` here.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_angle, check_int, check_positive, check_snapshots
from .stats import inr_db_to_sigma

__all__ = [
    "UlaGeometry",
    "InterferenceParams",
    "ScenarioConfig",
    "Snapshot",
    "steering_vector",
    "synthesize_snapshot",
    "synthesize_snapshots",
    "project",
    "amplitude",
    "MatchedFilter",
]

SCENARIO_VERSION = 1
PHASE_MODELS = ("uniform", "fixed")


@dataclass(frozen=True)
class UlaGeometry:
    """Uniform linear array with ``num_elements`` sensors spaced ``spacing_wavelengths`` apart."""

    num_elements: int = 4
    spacing_wavelengths: float = 0.5

    def __post_init__(self):
        check_int(self.num_elements, "num_elements", minimum=2)
        check_positive(self.spacing_wavelengths, "spacing_wavelengths")


@dataclass(frozen=True)
class InterferenceParams:
    """Plane-wave interferer.

    ``phase_model="uniform"`` draws an independent phase per snapshot;
    ``"fixed"`` uses ``phase`` every time, which makes tests deterministic.
    """

    amplitude: float
    direction: float = 0.0
    phase_model: str = "uniform"
    phase: float = 0.0

    def __post_init__(self):
        check_positive(self.amplitude, "amplitude", allow_zero=True)
        check_angle(self.direction, "direction")
        if self.phase_model not in PHASE_MODELS:
            raise ValueError(f"phase_model must be one of {PHASE_MODELS}, got {self.phase_model!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    """Generative description of an idle-phase snapshot stream.

    ``change_point`` is the first index carrying interference; ``math.inf``
    (the default) means interference never appears.
    """

    geometry: UlaGeometry = field(default_factory=UlaGeometry)
    noise_std: float = 1.0
    interference: InterferenceParams | None = None
    change_point: float = math.inf
    rng_seed: int = 0

    def __post_init__(self):
        check_positive(self.noise_std, "noise_std")
        if not (self.change_point == math.inf or float(self.change_point).is_integer()):
            raise ValueError(f"change_point must be a positive integer or inf, got {self.change_point}")
        if self.change_point < 1:
            raise ValueError(f"change_point must be >= 1, got {self.change_point}")

    def interference_active(self, k):
        return self.interference is not None and k >= self.change_point

    def to_dict(self):
        """JSON-ready form; angles in degrees, ``change_point`` null for no change."""
        out = {
            "version": SCENARIO_VERSION,
            "geometry": asdict(self.geometry),
            "noise_std": self.noise_std,
            "interference": None,
            "change_point": None if self.change_point == math.inf else int(self.change_point),
            "rng_seed": self.rng_seed,
        }
        if self.interference is not None:
            itf = self.interference
            out["interference"] = {
                "amplitude": itf.amplitude,
                "inr_db": (20 * math.log10(itf.amplitude / self.noise_std)
                           if itf.amplitude > 0 else None),
                "direction_deg": math.degrees(itf.direction),
                "phase_model": itf.phase_model,
                "phase_deg": math.degrees(itf.phase),
            }
        return out

    @classmethod
    def from_dict(cls, data):
        """Build a scenario from its JSON form.

        The interference block takes either ``amplitude`` (linear) or
        ``inr_db``; errors name the offending field.
        """
        if not isinstance(data, dict):
            raise ValueError("scenario: expected a JSON object")
        version = data.get("version", SCENARIO_VERSION)
        if version != SCENARIO_VERSION:
            raise ValueError(f"scenario.version: unsupported version {version}")
        known = {"version", "geometry", "noise_std", "interference", "change_point", "rng_seed"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"scenario: unknown field(s) {sorted(unknown)}")

        def field_error(name, exc):
            return ValueError(f"scenario.{name}: {exc}")

        try:
            geometry = UlaGeometry(**data.get("geometry", {}))
        except (TypeError, ValueError) as exc:
            raise field_error("geometry", exc) from None
        try:
            noise_std = check_positive(data.get("noise_std", 1.0), "noise_std")
        except ValueError as exc:
            raise field_error("noise_std", exc) from None

        interference = None
        itf = data.get("interference")
        if itf is not None:
            if not isinstance(itf, dict):
                raise field_error("interference", "expected an object or null")
            if "amplitude" in itf and itf["amplitude"] is not None:
                amp = itf["amplitude"]
            elif itf.get("inr_db") is not None:
                amp = float(inr_db_to_sigma(itf["inr_db"])) * noise_std
            else:
                raise field_error("interference", "needs 'amplitude' or 'inr_db'")
            try:
                interference = InterferenceParams(
                    amplitude=amp,
                    direction=math.radians(itf.get("direction_deg", 0.0)),
                    phase_model=itf.get("phase_model", "uniform"),
                    phase=math.radians(itf.get("phase_deg", 0.0)),
                )
            except (TypeError, ValueError) as exc:
                raise field_error("interference", exc) from None

        cp = data.get("change_point", None)
        cp = math.inf if cp is None else cp
        try:
            seed = check_int(data.get("rng_seed", 0), "rng_seed", minimum=0)
            return cls(geometry=geometry, noise_std=noise_std, interference=interference,
                       change_point=cp, rng_seed=seed)
        except ValueError as exc:
            raise field_error("change_point/rng_seed", exc) from None


@dataclass(frozen=True)
class Snapshot:
    """One idle-phase array observation ``y_k`` (1-based index ``k``)."""

    values: np.ndarray
    index: int


def steering_vector(geometry, theta):
    """Unit-norm ULA response ``a(theta)``.

    Element ``m`` is ``exp(i 2 pi (d/lambda) m sin(theta)) / sqrt(M)``. ``theta``
    may be an array, in which case the result has shape ``theta.shape + (M,)``.
    """
    theta = check_angle(theta)
    m = np.arange(geometry.num_elements)
    phase = 2.0 * np.pi * geometry.spacing_wavelengths * np.sin(theta)[..., None] * m
    return np.exp(1j * phase) / math.sqrt(geometry.num_elements)


def _interference_phases(itf, n, rng):
    if itf.phase_model == "fixed":
        return np.full(n, itf.phase)
    return rng.uniform(0.0, 2.0 * np.pi, n)


def synthesize_snapshots(scenario, count, rng=None, start=1):
    """Draw snapshots ``y_start .. y_{start+count-1}`` as an array of shape (count, M).

    Noise is circular complex Gaussian with total variance ``noise_std**2`` per
    entry (half in each of the real and imaginary parts).
    """
    count = check_int(count, "count", minimum=0)
    start = check_int(start, "start", minimum=1)
    rng = np.random.default_rng(scenario.rng_seed if rng is None else rng)
    M = scenario.geometry.num_elements
    scale = scenario.noise_std / math.sqrt(2.0)
    y = scale * (rng.standard_normal((count, M)) + 1j * rng.standard_normal((count, M)))
    itf = scenario.interference
    if itf is not None and count:
        k = np.arange(start, start + count)
        active = k >= scenario.change_point
        phases = _interference_phases(itf, count, rng)
        a = steering_vector(scenario.geometry, itf.direction)
        y[active] += itf.amplitude * np.exp(1j * phases[active])[:, None] * a
    return y


def synthesize_snapshot(scenario, k, rng):
    """Draw the single snapshot ``y_k`` from ``rng``."""
    values = synthesize_snapshots(scenario, 1, rng=rng, start=k)[0]
    return Snapshot(values=values, index=int(k))


def project(snapshot, steer):
    """Matched-filter output ``steer^H y``.

    ``snapshot`` may be a :class:`Snapshot`, a length-M vector, or an (n, M)
    array, in which case one scalar per row is returned.
    """
    values = snapshot.values if isinstance(snapshot, Snapshot) else snapshot
    y = np.asarray(values, dtype=complex)
    steer = np.asarray(steer, dtype=complex)
    if steer.ndim != 1 or y.shape[-1] != steer.shape[0]:
        raise ValueError(
            f"dimension mismatch: snapshot has shape {y.shape}, steering vector {steer.shape}"
        )
    z = y @ steer.conj()
    return complex(z) if z.ndim == 0 else z


def amplitude(z):
    """Decision metric ``r = |z|``."""
    r = np.abs(z)
    return float(r) if np.ndim(r) == 0 else r


class MatchedFilter(TransformerMixin, BaseEstimator):
    """Project snapshots onto a known steering vector and return amplitudes.

    Parameters
    ----------
    theta : float
        Look direction in radians from broadside.
    spacing_wavelengths : float
        Element spacing in wavelengths.

    Attributes
    ----------
    steering_ : ndarray of shape (n_elements,)
    n_elements_ : int
    """

    def __init__(self, theta=0.0, spacing_wavelengths=0.5):
        self.theta = theta
        self.spacing_wavelengths = spacing_wavelengths

    def fit(self, X, y=None):
        X = check_snapshots(X)
        geometry = UlaGeometry(X.shape[1], self.spacing_wavelengths)
        self.n_elements_ = X.shape[1]
        self.steering_ = steering_vector(geometry, self.theta)
        return self

    def transform(self, X):
        check_is_fitted(self, "steering_")
        X = check_snapshots(X, self.n_elements_)
        return np.abs(X @ self.steering_.conj())
