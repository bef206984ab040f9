"""CUSUM detection of interference with a known direction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_amplitudes, check_positive, check_snapshots
from .exceptions import AlarmPendingError
from .signal_model import UlaGeometry, steering_vector
from .stats import AmplitudeModel, llr

__all__ = ["DetectionOutcome", "CusumDetector", "cusum_direct_statistic"]


@dataclass(frozen=True)
class DetectionOutcome:
    """Result of one detector update.

    ``stopping_index`` is set only on an alarm. The GLR detector additionally
    reports the direction estimate and change-point candidate that won.
    """

    alarm: bool
    statistic: float
    index: int
    stopping_index: int | None = None
    theta_hat: float | None = None
    change_index: int | None = None

    @property
    def verdict(self):
        return "alarm" if self.alarm else "continue"


class CusumDetector(BaseEstimator):
    """Page's CUSUM on Rice/Rayleigh log-likelihood ratios.

    The statistic follows ``g_k = max(0, g_{k-1} + llr(r_k))`` with ``g_0 = 0``
    and an alarm is raised at the first ``k`` with ``g_k >= threshold``.

    Parameters
    ----------
    sigma_i : float
        Post-change interference amplitude, assumed known.
    sigma_n : float
        Noise standard deviation.
    threshold : float
        Alarm threshold ``h > 0``.
    theta : float or None
        Known interference direction (radians from broadside). Required only
        when the detector is fed raw snapshots instead of amplitudes.
    spacing_wavelengths : float
        ULA spacing used to build the steering vector for snapshot input.

    Attributes
    ----------
    statistic_ : float
        Current value of ``g``.
    n_samples_seen_ : int
        Samples consumed by :meth:`update` since :meth:`fit`.
    alarm_index_ : int or None
        Index of the pending alarm, if the detector has latched.
    """

    def __init__(self, sigma_i=1.0, sigma_n=1.0, threshold=5.0, theta=None,
                 spacing_wavelengths=0.5):
        self.sigma_i = sigma_i
        self.sigma_n = sigma_n
        self.threshold = threshold
        self.theta = theta
        self.spacing_wavelengths = spacing_wavelengths

    def _check_params(self):
        check_positive(self.threshold, "threshold")
        model = AmplitudeModel(self.sigma_i, self.sigma_n)
        if model.sigma_i == 0:
            raise ValueError("sigma_i must be > 0 for the CUSUM log-likelihood ratio")
        return model

    @property
    def model(self):
        return AmplitudeModel(self.sigma_i, self.sigma_n)

    def fit(self, X=None, y=None):
        """Validate parameters and start a fresh run (``g = 0``, ``k = 0``).

        ``X`` is accepted for pipeline compatibility and otherwise ignored.
        """
        self.model_ = self._check_params()
        self.statistic_ = 0.0
        self.n_samples_seen_ = 0
        self.alarm_index_ = None
        return self

    def _ensure_started(self):
        if not hasattr(self, "model_"):
            self.fit()

    def update(self, r):
        """Consume one amplitude and return the :class:`DetectionOutcome`.

        Raises
        ------
        AlarmPendingError
            If the previous update raised an alarm and :meth:`reset` was not called.
        """
        self._ensure_started()
        if self.alarm_index_ is not None:
            raise AlarmPendingError(
                f"alarm pending at k={self.alarm_index_}; call reset() before further updates"
            )
        ell = llr(float(check_amplitudes(r)[0]), self.model_)
        self.n_samples_seen_ += 1
        self.statistic_ = max(0.0, self.statistic_ + ell)
        k = self.n_samples_seen_
        if self.statistic_ >= self.threshold:
            self.alarm_index_ = k
            return DetectionOutcome(True, self.statistic_, k, stopping_index=k)
        return DetectionOutcome(False, self.statistic_, k)

    def reset(self):
        """Clear the statistic and any pending alarm; the sample counter is kept."""
        self._ensure_started()
        self.statistic_ = 0.0
        self.alarm_index_ = None
        return self

    def amplitudes(self, X):
        """Amplitudes for ``X``: passed through if 1-D, matched-filtered if snapshots."""
        arr = np.asarray(X)
        if arr.ndim == 2 and arr.shape[1] > 1 or np.iscomplexobj(arr):
            if self.theta is None:
                raise ValueError(
                    "snapshot input needs the known interference direction: set theta "
                    "(CUSUM assumes the direction is known; use GlrDetector otherwise)"
                )
            Y = check_snapshots(arr)
            steer = steering_vector(UlaGeometry(Y.shape[1], self.spacing_wavelengths), self.theta)
            return np.abs(Y @ steer.conj())
        return check_amplitudes(arr)

    def _run(self, X, continual):
        model = self._check_params()
        ell = llr(self.amplitudes(X), model)
        g = np.empty_like(ell)
        alarm = np.zeros(ell.shape, dtype=bool)
        stat = 0.0
        for k, step in enumerate(ell):
            stat = max(0.0, stat + step)
            g[k] = stat
            if stat >= self.threshold:
                alarm[k] = True
                if not continual:
                    return g[: k + 1], alarm[: k + 1]
                stat = 0.0
        return g, alarm

    def decision_function(self, X):
        """Statistic path ``g_1..g_n`` for a fresh run over ``X``.

        After each alarm the statistic restarts from zero (continual operation).
        The online state of the detector is not touched.
        """
        return self._run(X, continual=True)[0]

    def predict(self, X):
        """1 at every sample where an alarm is raised (with reset after each alarm), else 0."""
        return self._run(X, continual=True)[1].astype(int)

    def first_alarm(self, X):
        """Stopping time ``tau(h)`` (1-based) of a fresh run over ``X``, or None."""
        _, alarm = self._run(X, continual=False)
        return int(alarm.size) if alarm.size and alarm[-1] else None


def cusum_direct_statistic(history, model):
    """``S_k = max_{1<=n<=k} sum_{i=n}^{k} llr(r_i)`` by explicit scan over all start points.

    Unlike the recursive statistic this can be negative. Used as an
    independent reference for the recursion.
    """
    r = check_amplitudes(history, "history")
    if r.size == 0:
        raise ValueError("history must be nonempty")
    ell = llr(r, model)
    best = -np.inf
    suffix = 0.0
    for value in ell[::-1]:
        suffix += value
        best = max(best, suffix)
    return float(best)
