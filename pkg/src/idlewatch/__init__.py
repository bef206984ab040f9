"""Online detection of interference in idle-phase array snapshots.

CUSUM for a known interference direction, window-limited GLR with Root-MUSIC
direction estimates for an unknown one, and a Monte-Carlo harness for delay
and false-alarm rate estimates.
"""

from .cusum import CusumDetector, DetectionOutcome, cusum_direct_statistic
from .doa import RootMusic, estimate_doa
from .exceptions import AlarmPendingError, NumericalFailure
from .glr import GlrDetector, glr_statistic
from .signal_model import (
    InterferenceParams,
    MatchedFilter,
    ScenarioConfig,
    Snapshot,
    UlaGeometry,
    steering_vector,
    synthesize_snapshots,
)
from .stats import AmplitudeModel, kl_information, llr, theorem1_bounds

__version__ = "0.1.0"

__all__ = [
    "AlarmPendingError",
    "AmplitudeModel",
    "CusumDetector",
    "DetectionOutcome",
    "GlrDetector",
    "InterferenceParams",
    "MatchedFilter",
    "NumericalFailure",
    "RootMusic",
    "ScenarioConfig",
    "Snapshot",
    "UlaGeometry",
    "cusum_direct_statistic",
    "estimate_doa",
    "glr_statistic",
    "kl_information",
    "llr",
    "steering_vector",
    "synthesize_snapshots",
    "theorem1_bounds",
]
