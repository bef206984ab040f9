"""Window-limited GLR detection of interference with unknown direction.

At time ``k`` every candidate change point ``j`` in ``max(1, k-L+1) .. k`` is
scored by estimating the direction from ``y_j .. y_k`` with Root-MUSIC and
summing the log-likelihood ratios of the snapshots projected on that
direction. The statistic ``G_k`` is the best candidate score.

Cost per update is ``O(L (M^3 + L M))``: one small eigenproblem and one
companion-matrix eigenproblem per candidate, plus the projections.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import check_int, check_positive, check_snapshots
from .cusum import DetectionOutcome
from .doa import covariance_batch, rootmusic_batch
from .exceptions import AlarmPendingError, NumericalFailure
from .signal_model import Snapshot, UlaGeometry
from .stats import AmplitudeModel, llr

logger = logging.getLogger(__name__)

__all__ = ["GlrDetector", "glr_statistic", "glr_candidates"]


def _steer(theta, n_elements, spacing):
    m = np.arange(n_elements)
    return np.exp(1j * 2.0 * np.pi * spacing * np.sin(theta)[..., None] * m) / math.sqrt(n_elements)


def glr_candidates(Y, model, spacing=0.5, diagonal_loading=False):
    """Scores of every candidate change point for stacked buffers.

    Parameters
    ----------
    Y : ndarray of shape (..., B, M)
        Buffers of the ``B`` most recent snapshots, oldest first.

    Returns
    -------
    scores : ndarray of shape (..., B)
        ``scores[..., j]`` is the LLR sum over ``Y[..., j:, :]`` projected on
        the Root-MUSIC direction of that same window; ``-inf`` where the
        direction estimate failed.
    theta : ndarray of shape (..., B)
        Direction estimates in radians (NaN where failed).
    """
    Y = np.asarray(Y, dtype=complex)
    B, M = Y.shape[-2:]
    outer = Y[..., :, :, None] * np.conj(Y[..., :, None, :])
    suffix = np.flip(np.cumsum(np.flip(outer, axis=-3), axis=-3), axis=-3)
    counts = np.arange(B, 0, -1, dtype=float)[:, None, None]
    R = suffix / counts
    R = 0.5 * (R + np.conj(np.swapaxes(R, -1, -2)))
    theta, _, ok = rootmusic_batch(R, spacing, diagonal_loading)
    A = _steer(np.where(ok, theta, 0.0), M, spacing)
    # proj[..., j, i] = a(theta_j)^H y_i
    proj = np.einsum("...jm,...im->...ji", np.conj(A), Y)
    ell = llr(np.abs(proj), model)
    upper = np.triu(np.ones((B, B), dtype=bool))
    scores = np.where(upper, ell, 0.0).sum(axis=-1)
    scores = np.where(ok, scores, -np.inf)
    return scores, theta


def glr_statistic(window, model, geometry=None, *, diagonal_loading=False):
    """Score of a single candidate window ``y_j .. y_k``.

    Returns ``(G_partial, theta_hat)``: the LLR sum of the window projected on
    its own Root-MUSIC direction, and that direction in radians.
    """
    Y = check_snapshots(window)
    geometry = geometry or UlaGeometry(Y.shape[1])
    R = covariance_batch(Y)
    theta, _, ok = rootmusic_batch(R, geometry.spacing_wavelengths, diagonal_loading)
    if not ok:
        raise NumericalFailure("no Root-MUSIC root inside the unit circle for this window")
    a = _steer(np.asarray(theta), Y.shape[1], geometry.spacing_wavelengths)
    r = np.abs(Y @ np.conj(a))
    return float(np.sum(llr(r, model))), float(theta)


class GlrDetector(BaseEstimator):
    """Online GLR detector over raw snapshots with a change-point window cap.

    Parameters
    ----------
    sigma_i : float
        Interference amplitude, assumed known.
    sigma_n : float
        Noise standard deviation.
    threshold : float
        Alarm threshold ``h > 0``.
    max_window : int
        Largest candidate window ``L``; the oldest candidate is ``k - L + 1``.
    spacing_wavelengths : float
        ULA element spacing in wavelengths.
    diagonal_loading : bool
        Add ``1e-10 * trace(R)/M`` to the diagonal before the eigensolve.

    Attributes
    ----------
    statistic_ : float
        Last ``G_k`` (``-inf`` before the first update or if all candidates failed).
    theta_hat_ : float or None
        Direction of the maximizing candidate at the last update.
    change_index_ : int or None
        Maximizing candidate ``j`` (1-based, absolute) at the last update.
    n_samples_seen_ : int
    n_failed_candidates_ : int
        Candidates skipped because Root-MUSIC found no admissible root.
    alarm_index_ : int or None
    """

    def __init__(self, sigma_i=1.0, sigma_n=1.0, threshold=5.0, max_window=32,
                 spacing_wavelengths=0.5, diagonal_loading=False):
        self.sigma_i = sigma_i
        self.sigma_n = sigma_n
        self.threshold = threshold
        self.max_window = max_window
        self.spacing_wavelengths = spacing_wavelengths
        self.diagonal_loading = diagonal_loading

    def _check_params(self):
        check_positive(self.threshold, "threshold")
        check_int(self.max_window, "max_window")
        check_positive(self.spacing_wavelengths, "spacing_wavelengths")
        model = AmplitudeModel(self.sigma_i, self.sigma_n)
        if model.sigma_i == 0:
            raise ValueError("sigma_i must be > 0 for the GLR log-likelihood ratio")
        return model

    def fit(self, X=None, y=None):
        """Validate parameters and start a fresh run. ``X`` is ignored."""
        self.model_ = self._check_params()
        self.n_samples_seen_ = 0
        self.n_failed_candidates_ = 0
        self._clear()
        return self

    def _clear(self):
        self.buffer_ = None
        self.buffer_start_ = self.n_samples_seen_ + 1
        self.statistic_ = -math.inf
        self.theta_hat_ = None
        self.change_index_ = None
        self.alarm_index_ = None

    def reset(self):
        """Drop the buffer and any pending alarm; the sample counter is kept."""
        if not hasattr(self, "model_"):
            return self.fit()
        self._clear()
        return self

    def update(self, snapshot):
        """Consume one snapshot (length-M vector or :class:`Snapshot`).

        Raises
        ------
        AlarmPendingError
            If an alarm is pending and :meth:`reset` was not called.
        """
        if not hasattr(self, "model_"):
            self.fit()
        if self.alarm_index_ is not None:
            raise AlarmPendingError(
                f"alarm pending at k={self.alarm_index_}; call reset() before further updates"
            )
        if isinstance(snapshot, Snapshot):
            if snapshot.index != self.n_samples_seen_ + 1:
                raise ValueError(
                    f"snapshot index {snapshot.index} does not follow k={self.n_samples_seen_}"
                )
            snapshot = snapshot.values
        y = check_snapshots(np.atleast_2d(snapshot),
                            None if self.buffer_ is None else self.buffer_.shape[1])
        if y.shape[0] != 1:
            raise ValueError("update takes exactly one snapshot")
        self.n_samples_seen_ += 1
        k = self.n_samples_seen_
        buf = y if self.buffer_ is None else np.vstack([self.buffer_, y])
        if buf.shape[0] > self.max_window:
            buf = buf[-self.max_window:]
        self.buffer_ = buf
        self.buffer_start_ = k - buf.shape[0] + 1

        scores, theta = glr_candidates(buf, self.model_, self.spacing_wavelengths,
                                       self.diagonal_loading)
        failed = int(np.sum(~np.isfinite(scores)))
        if failed:
            self.n_failed_candidates_ += failed
            logger.debug("k=%d: %d GLR candidate(s) skipped after DoA failure", k, failed)
        if not np.any(np.isfinite(scores)):
            self.statistic_, self.theta_hat_, self.change_index_ = -math.inf, None, None
            return DetectionOutcome(False, -math.inf, k)
        best = int(np.argmax(scores))
        self.statistic_ = float(scores[best])
        self.theta_hat_ = float(theta[best])
        self.change_index_ = self.buffer_start_ + best
        alarm = self.statistic_ >= self.threshold
        if alarm:
            self.alarm_index_ = k
        return DetectionOutcome(alarm, self.statistic_, k, stopping_index=k if alarm else None,
                                theta_hat=self.theta_hat_, change_index=self.change_index_)

    def trace(self, X, continual=True):
        """Run a fresh copy of the detector over ``X``.

        Returns a dict of per-sample arrays ``G``, ``theta_hat``,
        ``change_index`` (0 where undefined) and ``alarm``. With
        ``continual=False`` the run stops after the first alarm.
        """
        Y = check_snapshots(X)
        det = GlrDetector(**self.get_params()).fit()
        n = Y.shape[0]
        out = {
            "G": np.full(n, -np.inf),
            "theta_hat": np.full(n, np.nan),
            "change_index": np.zeros(n, dtype=int),
            "alarm": np.zeros(n, dtype=bool),
        }
        for i in range(n):
            res = det.update(Y[i])
            out["G"][i] = res.statistic
            if res.theta_hat is not None:
                out["theta_hat"][i] = res.theta_hat
                out["change_index"][i] = res.change_index
            if res.alarm:
                out["alarm"][i] = True
                if not continual:
                    return {key: val[: i + 1] for key, val in out.items()}
                det.reset()
        return out

    def decision_function(self, X):
        """Statistic path ``G_1..G_n`` of a fresh run with reset after each alarm."""
        return self.trace(X)["G"]

    def predict(self, X):
        """1 where an alarm is raised (continual operation), else 0."""
        return self.trace(X)["alarm"].astype(int)

    def first_alarm(self, X):
        """Stopping time of a fresh run over ``X`` (1-based), or None."""
        alarm = self.trace(X, continual=False)["alarm"]
        return int(alarm.size) if alarm.size and alarm[-1] else None
