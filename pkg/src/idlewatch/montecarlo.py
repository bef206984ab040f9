"""Monte-Carlo estimation of detection delay and false-alarm rate.

Every trial starts a fresh detector and runs until the statistic reaches a
stopping height ``h_stop`` or a run-length cap. Along the way only the
"ladder" of the statistic is kept: the ``(k, value)`` pairs at which it sets
a new running maximum. The stopping time for any threshold
``h <= h_stop`` is then the first ladder index whose value reaches ``h``, so
a single simulation serves a whole threshold grid and the estimates are
exactly monotone in ``h``.

Reproducibility: trials are grouped in fixed-size chunks; chunk ``c`` draws
from ``SeedSequence(master_seed, spawn_key=(cell, hypothesis, c))``. Results
are therefore identical for any number of workers.

CUSUM trials simulate the matched-filter amplitude directly, since with a
known direction the statistic depends on the snapshot only through it:
``r = sqrt(E)`` under no interference and ``r = |sigma + sqrt(E) e^{i psi}|``
with interference, where ``E ~ Exp(1)`` and ``psi ~ U(0, 2 pi)``. GLR trials
simulate full array snapshots.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
import warnings
import zlib
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed
from numba import njit

from ._validation import check_int, check_positive
from .cusum import CusumDetector
from .exceptions import NumericalFailure
from .glr import GlrDetector, glr_candidates
from .iqsn import atomic_write
from .signal_model import UlaGeometry, steering_vector
from .stats import AmplitudeModel, _llr_normalized, inr_db_to_sigma, kl_information

logger = logging.getLogger(__name__)

__all__ = [
    "CellConfig",
    "PassageTimes",
    "CaddEstimate",
    "FarEstimate",
    "SweepSpec",
    "RunRecord",
    "simulate_passages",
    "estimate_cadd",
    "estimate_far",
    "calibrate_threshold",
    "cadd_from_passages",
    "far_from_passages",
    "run_sweep",
]

CADD_CAP = 10**6
SPEC_VERSION = 1
CHUNK_TRIALS = {"cusum": 2000, "glr": 250}
_HYPOTHESES = {"H0": 0, "H1": 1}


@dataclass(frozen=True)
class CellConfig:
    """Detector and scenario shared by all trials of one simulation.

    ``direction`` (radians) only matters for GLR, which sees raw snapshots.
    """

    detector: str
    inr_db: float
    geometry: UlaGeometry = field(default_factory=UlaGeometry)
    direction: float = 0.0
    max_window: int = 32

    def __post_init__(self):
        if self.detector not in ("cusum", "glr"):
            raise ValueError(f"detector must be 'cusum' or 'glr', got {self.detector!r}")
        if not math.isfinite(self.inr_db):
            raise ValueError("inr_db must be finite")
        check_int(self.max_window, "max_window")

    @property
    def sigma(self):
        return float(inr_db_to_sigma(self.inr_db))

    def key(self):
        """Stable 32-bit identifier used in seed derivation."""
        text = (f"{self.detector}|{self.inr_db!r}|{self.geometry.num_elements}|"
                f"{self.geometry.spacing_wavelengths!r}|{self.direction!r}|{self.max_window}")
        return zlib.crc32(text.encode())

    @classmethod
    def from_detector(cls, detector, geometry=None, direction=0.0):
        """Cell for a configured :class:`CusumDetector` or :class:`GlrDetector`."""
        model = AmplitudeModel(detector.sigma_i, detector.sigma_n)
        if isinstance(detector, GlrDetector):
            geometry = geometry or UlaGeometry(4, detector.spacing_wavelengths)
            return cls("glr", model.inr_db, geometry, direction, detector.max_window)
        if isinstance(detector, CusumDetector):
            return cls("cusum", model.inr_db, geometry or UlaGeometry(), direction)
        raise ValueError(f"unsupported detector type {type(detector).__name__}")


@dataclass
class PassageTimes:
    """Running-maximum ladders of a batch of trials.

    Trial ``i`` owns ``ladder_k[offsets[i]:offsets[i+1]]`` and the matching
    ``ladder_value`` entries, strictly increasing and all positive. A trial
    ended at ``end_k[i]``, either because the statistic reached ``h_stop``
    or because it hit ``cap`` (``censored``).
    """

    ladder_k: np.ndarray
    ladder_value: np.ndarray
    offsets: np.ndarray
    end_k: np.ndarray
    censored: np.ndarray
    h_stop: float
    cap: int

    @property
    def trials(self):
        return self.end_k.size

    def times(self, h):
        """Stopping times for threshold ``h``; censored trials report ``cap``.

        Returns ``(tau, censored)`` arrays.
        """
        h = check_positive(h, "threshold")
        if h > self.h_stop * (1 + 1e-12):
            raise ValueError(f"threshold {h} exceeds the simulated stopping height {self.h_stop}")
        return _first_passage(self.ladder_k, self.ladder_value, self.offsets, self.cap, h)

    @classmethod
    def concatenate(cls, parts, h_stop, cap):
        ks = [p[0] for p in parts]
        lens = np.concatenate([np.diff(p[2]) for p in parts]) if parts else np.zeros(0, np.int64)
        offsets = np.zeros(lens.size + 1, dtype=np.int64)
        np.cumsum(lens, out=offsets[1:])
        return cls(
            ladder_k=np.concatenate(ks) if ks else np.zeros(0, np.int64),
            ladder_value=np.concatenate([p[1] for p in parts]) if parts else np.zeros(0),
            offsets=offsets,
            end_k=np.concatenate([p[3] for p in parts]) if parts else np.zeros(0, np.int64),
            censored=np.concatenate([p[4] for p in parts]) if parts else np.zeros(0, bool),
            h_stop=float(h_stop),
            cap=int(cap),
        )


@njit(cache=True)
def _first_passage(ladder_k, ladder_value, offsets, cap, h):
    n = offsets.size - 1
    tau = np.full(n, cap, dtype=np.int64)
    censored = np.ones(n, dtype=np.bool_)
    for i in range(n):
        for j in range(offsets[i], offsets[i + 1]):
            if ladder_value[j] >= h:
                tau[i] = ladder_k[j]
                censored[i] = False
                break
    return tau, censored


@njit(cache=True)
def _grow(arr, size):
    out = np.empty(max(2 * arr.size, size), dtype=arr.dtype)
    out[: arr.size] = arr
    return out


@njit(cache=True)
def _cusum_ladders(n_trials, sigma, interference, h_stop, cap, seed):
    np.random.seed(seed)
    ladder_k = np.empty(16 * n_trials, dtype=np.int64)
    ladder_v = np.empty(16 * n_trials, dtype=np.float64)
    offsets = np.zeros(n_trials + 1, dtype=np.int64)
    end_k = np.empty(n_trials, dtype=np.int64)
    censored = np.zeros(n_trials, dtype=np.bool_)
    two_pi = 2.0 * math.pi
    pos = 0
    for i in range(n_trials):
        g = 0.0
        best = 0.0
        k = 0
        while True:
            k += 1
            e = -math.log(1.0 - np.random.random())
            if interference:
                rho = math.sqrt(e)
                psi = two_pi * np.random.random()
                re = sigma + rho * math.cos(psi)
                im = rho * math.sin(psi)
                r = math.sqrt(re * re + im * im)
            else:
                r = math.sqrt(e)
            g += _llr_normalized(r, sigma)
            if g < 0.0:
                g = 0.0
            if g > best:
                best = g
                if pos == ladder_k.size:
                    ladder_k = _grow(ladder_k, pos + 1)
                    ladder_v = _grow(ladder_v, pos + 1)
                ladder_k[pos] = k
                ladder_v[pos] = g
                pos += 1
                if g >= h_stop:
                    break
            if k >= cap:
                censored[i] = True
                break
        end_k[i] = k
        offsets[i + 1] = pos
    return ladder_k[:pos].copy(), ladder_v[:pos].copy(), offsets, end_k, censored


def _glr_ladders(cell, n_trials, interference, h_stop, cap, rng):
    geometry = cell.geometry
    M = geometry.num_elements
    L = cell.max_window
    model = AmplitudeModel(cell.sigma)
    steer = steering_vector(geometry, cell.direction)
    buf = np.zeros((n_trials, L, M), dtype=complex)
    active = np.arange(n_trials)
    best = np.zeros(n_trials)
    ladders = [[] for _ in range(n_trials)]
    end_k = np.zeros(n_trials, dtype=np.int64)
    censored = np.zeros(n_trials, dtype=bool)
    failed = 0
    k = 0
    scale = math.sqrt(0.5)
    while active.size:
        k += 1
        n = active.size
        y = scale * (rng.standard_normal((n, M)) + 1j * rng.standard_normal((n, M)))
        if interference:
            phase = rng.uniform(0.0, 2.0 * math.pi, n)
            y += cell.sigma * np.exp(1j * phase)[:, None] * steer
        # buffer holds the last min(k, L) snapshots at its tail
        buf[active] = np.roll(buf[active], -1, axis=1)
        buf[active, -1] = y
        B = min(k, L)
        scores, _ = glr_candidates(buf[active, L - B:], model, geometry.spacing_wavelengths)
        failed += int(np.sum(~np.isfinite(scores)))
        G = np.max(scores, axis=1)
        rec = G > best[active]
        for t, g in zip(active[rec], G[rec]):
            ladders[t].append((k, g))
        best[active[rec]] = G[rec]
        done = G >= h_stop
        capped = ~done & (k >= cap)
        end_k[active[done | capped]] = k
        censored[active[capped]] = True
        active = active[~(done | capped)]
    if failed:
        logger.info("GLR simulation skipped %d candidate window(s) after DoA failure", failed)
    lens = np.array([len(lad) for lad in ladders], dtype=np.int64)
    offsets = np.zeros(n_trials + 1, dtype=np.int64)
    np.cumsum(lens, out=offsets[1:])
    flat = [item for lad in ladders for item in lad]
    ladder_k = np.array([item[0] for item in flat], dtype=np.int64)
    ladder_v = np.array([item[1] for item in flat], dtype=float)
    return ladder_k, ladder_v, offsets, end_k, censored


def _chunk_seed(cell, hypothesis, chunk, master_seed):
    return np.random.SeedSequence(
        master_seed, spawn_key=(cell.key(), _HYPOTHESES[hypothesis], chunk)
    )


def _run_chunk(cell, hypothesis, n_trials, h_stop, cap, seed_seq):
    interference = hypothesis == "H1"
    if cell.detector == "cusum":
        seed = int(seed_seq.generate_state(1)[0])
        return _cusum_ladders(n_trials, cell.sigma, interference, h_stop, cap, seed)
    rng = np.random.default_rng(seed_seq)
    return _glr_ladders(cell, n_trials, interference, h_stop, cap, rng)


def simulate_passages(cell, hypothesis, trials, h_stop, cap, master_seed, *, n_jobs=1):
    """Simulate ``trials`` independent runs and return their :class:`PassageTimes`.

    Parameters
    ----------
    cell : CellConfig
    hypothesis : {"H0", "H1"}
        ``"H1"`` has interference from the first sample (change point 1).
    h_stop : float
        Runs stop once the statistic reaches this height.
    cap : int
        Runs stop after this many samples regardless.
    n_jobs : int
        joblib worker count; results do not depend on it.
    """
    if hypothesis not in _HYPOTHESES:
        raise ValueError(f"hypothesis must be 'H0' or 'H1', got {hypothesis!r}")
    trials = check_int(trials, "trials")
    cap = check_int(cap, "cap")
    h_stop = check_positive(h_stop, "h_stop")
    master_seed = check_int(master_seed, "master_seed", minimum=0)
    size = CHUNK_TRIALS[cell.detector]
    sizes = [min(size, trials - start) for start in range(0, trials, size)]
    jobs = (
        delayed(_run_chunk)(cell, hypothesis, n, h_stop, cap,
                            _chunk_seed(cell, hypothesis, c, master_seed))
        for c, n in enumerate(sizes)
    )
    if n_jobs == 1 or len(sizes) == 1:
        parts = [fn(*args, **kw) for fn, args, kw in jobs]
    else:
        parts = Parallel(n_jobs=n_jobs)(jobs)
    return PassageTimes.concatenate(parts, h_stop, cap)


@dataclass(frozen=True)
class CaddEstimate:
    mean: float
    stderr: float
    trials_used: int
    excluded: int


@dataclass(frozen=True)
class FarEstimate:
    far: float
    stderr: float
    censored_fraction: float
    arl: float
    trials: int

    @property
    def neg_log_far(self):
        return -math.log(self.far)


def _mean_stderr(values):
    n = values.size
    mean = math.fsum(values.tolist()) / n
    if n < 2:
        return mean, math.nan
    var = math.fsum(((values - mean) ** 2).tolist()) / (n - 1)
    return mean, math.sqrt(var / n)


def cadd_from_passages(passages, h):
    """Mean delay with interference from sample 1, excluding runs that hit the cap."""
    tau, censored = passages.times(h)
    excluded = int(np.sum(censored))
    if excluded:
        logger.warning("%d of %d delay runs exceeded %d samples without alarm and were excluded",
                       excluded, tau.size, passages.cap)
    used = tau[~censored].astype(float)
    if used.size == 0:
        raise NumericalFailure(f"no run alarmed within {passages.cap} samples at h={h}")
    mean, stderr = _mean_stderr(used)
    return CaddEstimate(mean, stderr, int(used.size), excluded)


def far_from_passages(passages, h):
    """``1/ARL`` with censored runs counted at the cap; delta-method standard error.

    Counting censored runs at the cap shortens the ARL, so the estimate errs
    towards a higher false-alarm rate.
    """
    if passages.cap < 50.0 * math.exp(h):
        warnings.warn(
            f"run-length cap {passages.cap} is below 50*e^h = {50 * math.exp(h):.0f}; "
            "censoring may bias the FAR estimate upwards",
            RuntimeWarning,
            stacklevel=2,
        )
    tau, censored = passages.times(h)
    arl, arl_se = _mean_stderr(tau.astype(float))
    far = 1.0 / arl
    return FarEstimate(far, arl_se / arl**2, float(np.mean(censored)), arl, int(tau.size))


def _cell_and_threshold(detector, geometry, direction):
    if not hasattr(detector, "threshold"):
        raise ValueError("detector must be a CusumDetector or GlrDetector")
    detector._check_params()
    return CellConfig.from_detector(detector, geometry, direction), float(detector.threshold)


def estimate_cadd(detector, trials, seed, *, geometry=None, direction=0.0, cap=CADD_CAP,
                  n_jobs=1):
    """Conditional average detection delay of ``detector`` at its threshold.

    Interference is present from the first sample. Returns :class:`CaddEstimate`.
    """
    cell, h = _cell_and_threshold(detector, geometry, direction)
    passages = simulate_passages(cell, "H1", trials, h, cap, seed, n_jobs=n_jobs)
    return cadd_from_passages(passages, h)


def estimate_far(detector, trials, seed, *, far_run_cap=None, geometry=None, direction=0.0,
                 n_jobs=1):
    """False-alarm rate ``1/ARL`` of ``detector`` under noise only.

    ``far_run_cap`` defaults to ``ceil(50 e^h)``. Returns :class:`FarEstimate`.
    """
    cell, h = _cell_and_threshold(detector, geometry, direction)
    cap = far_run_cap or math.ceil(50.0 * math.exp(h))
    passages = simulate_passages(cell, "H0", trials, h, cap, seed, n_jobs=n_jobs)
    return far_from_passages(passages, h)


def calibrate_threshold(detector, target_far, tolerance=0.05, seed=0, *, trials=10**4,
                        geometry=None, direction=0.0, n_jobs=1, return_passages=False):
    """Threshold ``h`` whose simulated FAR matches ``target_far``.

    Bisects on the empirical ``ln FAR(h)`` of one fixed set of noise-only runs
    until it is within ``tolerance`` of ``ln target_far``. The runs stop at a
    height a little above ``-ln target_far``; if that does not bracket the
    target it is raised and the runs are redone, up to ``h = 50``.

    Raises
    ------
    NumericalFailure
        If the target cannot be bracketed in ``[0.01, 50]`` or bisection stalls.
    """
    if not (0.0 < target_far < 1.0):
        raise ValueError(f"target_far must lie in (0, 1), got {target_far}")
    tolerance = check_positive(tolerance, "tolerance")
    cell = CellConfig.from_detector(detector, geometry, direction)
    goal = -math.log(target_far)
    lo = 0.01
    hi = goal + (2.0 if cell.detector == "cusum" else 1.0)

    def neg_log_far(passages, h):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            return far_from_passages(passages, h).neg_log_far

    while True:
        cap = math.ceil(50.0 * math.exp(hi))
        passages = simulate_passages(cell, "H0", trials, hi, cap, seed, n_jobs=n_jobs)
        if neg_log_far(passages, lo) > goal + tolerance:
            raise NumericalFailure(f"target FAR {target_far} exceeds the FAR at h={lo}")
        if neg_log_far(passages, hi) >= goal - tolerance:
            break
        if hi >= 50.0:
            raise NumericalFailure(f"target FAR {target_far} not reached for h <= 50")
        hi = min(50.0, hi + 2.0)
        logger.info("widening calibration bracket to h=%.2f", hi)

    a, b = lo, hi
    for _ in range(200):
        mid = 0.5 * (a + b)
        value = neg_log_far(passages, mid)
        if abs(value - goal) <= tolerance:
            return (mid, passages) if return_passages else mid
        if value < goal:
            a = mid
        else:
            b = mid
        if b - a < 1e-12:
            break
    raise NumericalFailure(
        f"calibration stalled near h={0.5 * (a + b):.6g}; the empirical FAR jumps across "
        f"the tolerance band (increase trials or tolerance)"
    )


@dataclass(frozen=True)
class SweepSpec:
    """Grid of (INR, threshold) cells for one detector.

    ``far_run_cap`` of None means ``ceil(50 e^{max threshold})``.
    ``far_trials`` of None reuses ``trials``.
    """

    detector: str
    inr_db: tuple
    thresholds: tuple
    trials: int
    master_seed: int = 0
    far_run_cap: int | None = None
    far_trials: int | None = None
    geometry: UlaGeometry = field(default_factory=UlaGeometry)
    direction: float = 0.0
    max_window: int = 32
    change_point: int = 1

    def __post_init__(self):
        object.__setattr__(self, "inr_db", tuple(float(x) for x in self.inr_db))
        object.__setattr__(self, "thresholds", tuple(float(x) for x in self.thresholds))
        if not self.inr_db or not self.thresholds:
            raise ValueError("inr_db and thresholds must be nonempty")
        for h in self.thresholds:
            check_positive(h, "thresholds[]")
        check_int(self.trials, "trials")
        check_int(self.master_seed, "master_seed", minimum=0)
        if self.far_run_cap is not None:
            check_int(self.far_run_cap, "far_run_cap")
        if self.far_trials is not None:
            check_int(self.far_trials, "far_trials")
        if self.change_point != 1:
            raise ValueError("change_point must be 1: delays are measured with interference "
                             "present from the first sample")
        CellConfig(self.detector, self.inr_db[0], self.geometry, self.direction, self.max_window)

    @property
    def run_cap(self):
        return self.far_run_cap or math.ceil(50.0 * math.exp(max(self.thresholds)))

    def cells(self):
        return [CellConfig(self.detector, inr, self.geometry, self.direction, self.max_window)
                for inr in self.inr_db]

    def to_dict(self):
        return {
            "version": SPEC_VERSION,
            "detector": self.detector,
            "inr_db": list(self.inr_db),
            "thresholds": list(self.thresholds),
            "trials": self.trials,
            "far_trials": self.far_trials,
            "far_run_cap": self.far_run_cap,
            "master_seed": self.master_seed,
            "geometry": asdict(self.geometry),
            "direction_deg": math.degrees(self.direction),
            "max_window": self.max_window,
            "change_point": self.change_point,
        }

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ValueError("sweep spec: expected a JSON object")
        version = data.get("version", SPEC_VERSION)
        if version != SPEC_VERSION:
            raise ValueError(f"sweep spec.version: unsupported version {version}")
        allowed = set(cls.__dataclass_fields__) - {"direction"} | {"version", "direction_deg"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"sweep spec: unknown field(s) {sorted(unknown)}")
        for name in ("detector", "inr_db", "thresholds", "trials"):
            if name not in data:
                raise ValueError(f"sweep spec.{name}: required field missing")
        kwargs = {k: v for k, v in data.items() if k not in ("version", "direction_deg")}
        try:
            kwargs["geometry"] = UlaGeometry(**data.get("geometry", {}))
            kwargs["direction"] = math.radians(data.get("direction_deg", 0.0))
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"sweep spec: {exc}") from None


@dataclass(frozen=True)
class RunRecord:
    """One (INR, threshold) cell of a sweep.

    ``delay_ratio`` is ``cadd_mean / (-ln far)`` and ``kl_inverse`` is
    ``1/I(sigma)``, its large-threshold limit for CUSUM. ``wall_time`` is the
    time spent simulating the INR group the cell belongs to.
    """

    detector: str
    inr_db: float
    threshold: float
    cadd_mean: float
    cadd_stderr: float
    far: float
    far_stderr: float
    neg_log_far: float
    delay_ratio: float
    kl_inverse: float
    censored_fraction: float
    cadd_excluded: int
    trials_used: int
    wall_time: float

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def comparable(self):
        """All fields except ``wall_time``, for reproducibility checks."""
        out = asdict(self)
        out.pop("wall_time")
        return out


def _cell_id(inr_db, h):
    return f"{inr_db!r}@{h!r}"


def _simulate_group(spec, cell, n_jobs):
    start = time.perf_counter()
    h_top = max(spec.thresholds)
    far_trials = spec.far_trials or spec.trials
    h0 = simulate_passages(cell, "H0", far_trials, h_top, spec.run_cap, spec.master_seed,
                           n_jobs=n_jobs)
    h1 = simulate_passages(cell, "H1", spec.trials, h_top, CADD_CAP, spec.master_seed,
                           n_jobs=n_jobs)
    try:
        inv_info = 1.0 / kl_information(cell.sigma)
    except NumericalFailure as exc:
        logger.warning("KL information unavailable at %.3g dB: %s", cell.inr_db, exc)
        inv_info = math.nan
    elapsed = time.perf_counter() - start
    records = []
    for h in spec.thresholds:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            far = far_from_passages(h0, h)
        cadd = cadd_from_passages(h1, h)
        records.append(RunRecord(
            detector=spec.detector, inr_db=cell.inr_db, threshold=h,
            cadd_mean=cadd.mean, cadd_stderr=cadd.stderr,
            far=far.far, far_stderr=far.stderr, neg_log_far=far.neg_log_far,
            delay_ratio=cadd.mean / far.neg_log_far if far.neg_log_far > 0 else math.inf,
            kl_inverse=inv_info, censored_fraction=far.censored_fraction,
            cadd_excluded=cadd.excluded, trials_used=cadd.trials_used, wall_time=elapsed,
        ))
    return records


def _load_log(path, spec):
    done = {}
    if path is None or not path.exists():
        return done
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
        except json.JSONDecodeError:
            logger.warning("%s:%d: ignoring unreadable completion entry", path, lineno)
            continue
        if entry.get("spec") != spec.to_dict():
            continue
        rec = RunRecord(**entry["record"])
        done[_cell_id(rec.inr_db, rec.threshold)] = rec
    return done


def run_sweep(spec, out_csv=None, out_json=None, *, resume=False, n_jobs=1):
    """Run every (INR, threshold) cell of ``spec`` and return the :class:`RunRecord` list.

    Each INR is simulated once, to the largest threshold, and every threshold
    is read off the same runs. With ``out_csv`` a completion log
    ``<out_csv>.log.jsonl`` records finished cells; ``resume=True`` reuses
    the cells logged for an identical spec.
    """
    out_csv = Path(out_csv) if out_csv is not None else None
    log_path = out_csv.with_name(out_csv.name + ".log.jsonl") if out_csv else None
    done = _load_log(log_path, spec) if resume else {}
    if log_path is not None and not resume and log_path.exists():
        log_path.unlink()

    records = []
    for cell in spec.cells():
        ids = [_cell_id(cell.inr_db, h) for h in spec.thresholds]
        if all(i in done for i in ids):
            logger.info("reusing completed cells for %.3g dB", cell.inr_db)
            records.extend(done[i] for i in ids)
            continue
        group = _simulate_group(spec, cell, n_jobs)
        records.extend(group)
        if log_path is not None:
            try:
                with open(log_path, "a") as fh:
                    for rec in group:
                        fh.write(json.dumps({"spec": spec.to_dict(), "record": asdict(rec)}) + "\n")
            except OSError as exc:
                raise OSError(f"cell {cell.detector}@{cell.inr_db} dB: cannot write {log_path}: "
                              f"{exc}") from exc

    if out_csv is not None:
        write_records_csv(out_csv, records)
    if out_json is not None:
        with atomic_write(out_json, "w") as fh:
            json.dump({"spec": spec.to_dict(), "records": [asdict(r) for r in records]}, fh,
                      indent=2)
    return records


def write_records_csv(path, records):
    with atomic_write(path, "w") as fh:
        writer = csv.DictWriter(fh, fieldnames=RunRecord.columns())
        writer.writeheader()
        for rec in records:
            writer.writerow({k: repr(v) if isinstance(v, float) else v
                             for k, v in asdict(rec).items()})
