import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from idlewatch.cusum import CusumDetector, cusum_direct_statistic
from idlewatch.exceptions import AlarmPendingError
from idlewatch.signal_model import (
    InterferenceParams,
    MatchedFilter,
    ScenarioConfig,
    synthesize_snapshots,
)
from idlewatch.stats import AmplitudeModel, llr, sample_amplitude


def prefix_max_oracle(ell):
    """S_k for every k from cumulative sums: C_k - min_{n<=k} C_{n-1}."""
    c = np.concatenate([[0.0], np.cumsum(ell)])
    return c[1:] - np.minimum.accumulate(c[:-1])


def test_fresh_detector_state():
    det = CusumDetector(sigma_i=1.0, threshold=2.0).fit()
    assert det.statistic_ == 0.0 and det.n_samples_seen_ == 0 and det.alarm_index_ is None


def test_threshold_must_be_positive():
    with pytest.raises(ValueError):
        CusumDetector(threshold=0.0).fit()
    with pytest.raises(ValueError):
        CusumDetector(sigma_i=0.0).fit()


def test_zero_amplitudes_never_alarm():
    det = CusumDetector(sigma_i=1.0, threshold=0.5).fit()
    for _ in range(1000):
        out = det.update(0.0)
        assert not out.alarm and out.statistic == 0.0
        assert out.verdict == "continue"


def test_constant_llr_alarms_at_ceiling():
    model = AmplitudeModel(1.0)
    r = 3.0
    c = llr(r, model)
    assert c > 0
    for ratio in (0.5, 1.0, 2.5, 7.2):
        h = ratio * c
        det = CusumDetector(sigma_i=1.0, threshold=h).fit()
        k = 0
        while True:
            k += 1
            out = det.update(r)
            if out.alarm:
                break
        # the recursion accumulates k*c; allow for the exact-integer case
        assert k in (math.ceil(ratio), math.ceil(ratio - 1e-12))
        assert out.stopping_index == k and out.verdict == "alarm"


def test_update_after_alarm_requires_reset():
    det = CusumDetector(sigma_i=1.0, threshold=0.1).fit()
    assert det.update(5.0).alarm
    with pytest.raises(AlarmPendingError):
        det.update(1.0)
    det.reset()
    assert det.statistic_ == 0.0 and det.alarm_index_ is None
    det.reset()
    assert det.statistic_ == 0.0
    assert det.update(0.0).index == 2


def test_direct_statistic_basics():
    model = AmplitudeModel(1.0)
    assert cusum_direct_statistic([2.0], model) == pytest.approx(llr(2.0, model))
    stream = [0.0, 0.1, 0.05]
    values = llr(np.array(stream), model)
    assert np.all(values < 0)
    # the best interval ending at k is the last sample alone
    assert cusum_direct_statistic(stream, model) == pytest.approx(values[-1])
    assert cusum_direct_statistic(stream, model) < 0
    with pytest.raises(ValueError):
        cusum_direct_statistic([], model)


def test_recursion_equals_direct_statistic_on_random_streams():
    rng = np.random.default_rng(0)
    for trial in range(10_000):
        model = AmplitudeModel(float(rng.uniform(0.3, 2.5)))
        n = int(rng.integers(1, 40))
        hyp = "H1" if trial % 2 else "H0"
        r = sample_amplitude(model, hyp, rng=rng, size=n)
        g = CusumDetector(sigma_i=model.sigma_i, threshold=1e9).decision_function(r)
        assert g[-1] == pytest.approx(max(0.0, cusum_direct_statistic(r, model)), abs=1e-9)
        np.testing.assert_allclose(g, np.maximum(0.0, prefix_max_oracle(llr(r, model))),
                                   atol=1e-9)


@settings(max_examples=200, deadline=None)
@given(
    r=st.lists(st.floats(0.0, 6.0), min_size=1, max_size=60),
    sigma=st.floats(0.2, 3.0),
    h=st.floats(0.05, 8.0),
)
def test_recursion_properties(r, sigma, h):
    model = AmplitudeModel(sigma)
    ell = llr(np.array(r), model)
    det = CusumDetector(sigma_i=sigma, threshold=h)
    g = CusumDetector(sigma_i=sigma, threshold=1e9).decision_function(np.array(r))
    assert np.all(g >= 0)
    prev = np.concatenate([[0.0], g[:-1]])
    assert np.all(g <= np.maximum(prev + ell, 0.0) + 1e-12)
    clipped = prev + ell < 0
    np.testing.assert_allclose(g[~clipped], (prev + ell)[~clipped], atol=1e-12)
    # first crossing of the recursion is the first k with S_k >= h
    s = np.array([cusum_direct_statistic(r[: k + 1], model) for k in range(len(r))])
    hits = np.flatnonzero(s >= h)
    expected = int(hits[0]) + 1 if hits.size else None
    assert det.first_alarm(np.array(r)) == expected


def test_continual_operation_resets_after_each_alarm():
    model = AmplitudeModel.from_inr_db(3.0)
    r = sample_amplitude(model, "H1", rng=4, size=500)
    det = CusumDetector(sigma_i=model.sigma_i, threshold=3.0)
    g = det.decision_function(r)
    alarms = det.predict(r)
    assert alarms.sum() > 5
    # a fresh run restarted after each alarm gives the same alarm sequence
    idx, start = [], 0
    while True:
        tau = det.first_alarm(r[start:])
        if tau is None:
            break
        idx.append(start + tau - 1)
        start += tau
    np.testing.assert_array_equal(np.flatnonzero(alarms), idx)
    assert np.all(g[alarms == 1] >= 3.0)
    # online updates with explicit resets agree too
    online = CusumDetector(sigma_i=model.sigma_i, threshold=3.0).fit()
    seen = []
    for value in r:
        out = online.update(value)
        if out.alarm:
            seen.append(out.index - 1)
            online.reset()
    assert seen == idx


def test_snapshot_input_requires_direction():
    scenario = ScenarioConfig(interference=InterferenceParams(1.0, 0.3), change_point=1)
    Y = synthesize_snapshots(scenario, 50)
    with pytest.raises(ValueError, match="known"):
        CusumDetector(sigma_i=1.0).decision_function(Y)
    det = CusumDetector(sigma_i=1.0, theta=0.3)
    r = MatchedFilter(theta=0.3).fit_transform(Y)
    np.testing.assert_allclose(det.decision_function(Y), det.decision_function(r))


def test_estimator_params():
    det = CusumDetector(sigma_i=2.0, threshold=4.0)
    assert clone(det).get_params()["threshold"] == 4.0
    det.set_params(threshold=6.0)
    assert det.threshold == 6.0


def test_far_decreases_with_threshold():
    model = AmplitudeModel.from_inr_db(3.0)
    r = sample_amplitude(model, "H0", rng=8, size=200_000)
    rates = [CusumDetector(sigma_i=model.sigma_i, threshold=h).predict(r).mean()
             for h in (0.5, 1.0, 2.0, 3.0, 4.0)]
    assert all(a > b for a, b in zip(rates, rates[1:]))
