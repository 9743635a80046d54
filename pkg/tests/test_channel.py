import math

import numpy as np
import pytest
from scipy import stats

from spectrum_imitation.channel import (ChannelSpec, IIDIdle, MarkovIdle, UserRadioSpec, calibrate_mean_gain,
                                        calibrate_snr, dbm_to_mw, expected_rate, expected_rate_quad,
                                        sample_rate, sample_state, sample_states, shannon_rate,
                                        stationary_idle_prob)


def test_validation():
    with pytest.raises(ValueError):
        IIDIdle(1.3)
    with pytest.raises(ValueError):
        IIDIdle(0.0)
    with pytest.raises(ValueError):
        MarkovIdle(0.0, 0.5)
    with pytest.raises(ValueError):
        MarkovIdle(1.0, 1.0)
    with pytest.raises(ValueError):
        ChannelSpec(0, IIDIdle(0.5), bandwidth=-1.0)
    with pytest.raises(ValueError):
        UserRadioSpec(0, tx_power=0.0)


def test_stationary():
    assert stationary_idle_prob(MarkovIdle(0.3, 0.3)) == 0.5
    assert stationary_idle_prob(MarkovIdle(0.2, 0.6)) == pytest.approx(0.25)
    m = MarkovIdle.from_theta(4 / 7, 0.5)
    assert m.p + m.q == pytest.approx(0.5)
    assert stationary_idle_prob(m) == pytest.approx(4 / 7)
    assert ChannelSpec(1, IIDIdle(0.3)).theta == 0.3


def test_iid_frequency(rng):
    spec = ChannelSpec(0, IIDIdle(2 / 3))
    s = sample_states(spec, 200_000, None, rng)
    se = math.sqrt((2 / 3) * (1 / 3) / len(s))
    assert abs(s.mean() - 2 / 3) < 4 * se


def test_markov_frequency_and_transitions(rng):
    p, q = 0.1, 0.3
    spec = ChannelSpec(0, MarkovIdle(p, q))
    s = sample_states(spec, 1_000_000, None, rng)
    theta = p / (p + q)
    # batch means handle the serial correlation
    batches = s.reshape(1000, -1).mean(axis=1)
    assert abs(s.mean() - theta) < 4 * batches.std(ddof=1) / math.sqrt(len(batches))
    prev, nxt = s[:-1], s[1:]
    assert (nxt[~prev]).mean() == pytest.approx(p, abs=0.005)
    assert (~nxt[prev]).mean() == pytest.approx(q, abs=0.005)


def test_sample_state_consistent_with_batch():
    spec = ChannelSpec(0, MarkovIdle(0.2, 0.4))
    a = np.random.default_rng(5)
    b = np.random.default_rng(5)
    states, prev = [], True
    for _ in range(50):
        prev = sample_state(spec, prev, a)
        states.append(prev)
    assert states == sample_states(spec, 50, True, b).tolist()


def test_closed_form_matches_quadrature():
    for c in (1e-3, 0.05, 1.0, 10.0, 300.0, 1e5):
        assert expected_rate(10.0, c) == pytest.approx(expected_rate_quad(10.0, c), rel=1e-9)


@pytest.mark.parametrize("target", [15.0, 40.0, 70.0, 100.0, 0.5])
def test_calibration_monte_carlo(target):
    c = calibrate_snr(target, 10.0)
    assert expected_rate(10.0, c) == pytest.approx(target, rel=1e-10)
    h = np.random.default_rng(7).exponential(1.0, 400_000)
    assert (10.0 * np.log2(1 + c * h)).mean() == pytest.approx(target, rel=0.01)


def test_sample_rate_mean():
    noise = dbm_to_mw(-100.0)
    gain = calibrate_mean_gain(70.0, 10.0, 100.0, noise)
    ch = ChannelSpec(0, IIDIdle(0.5), 10.0, noise, gain)
    user = UserRadioSpec(0, 100.0)
    rng = np.random.default_rng(3)
    draws = np.array([sample_rate(ch, user, rng) for _ in range(40_000)])
    assert draws.mean() == pytest.approx(70.0, rel=0.01)
    assert stats.kstest(draws, lambda x: 1 - np.exp(-(2 ** (x / 10.0) - 1) / (100.0 * gain / noise))).pvalue > 1e-3


def test_shannon_and_units():
    assert dbm_to_mw(20.0) == pytest.approx(100.0)
    assert shannon_rate(10.0, 1.0, 1.0, 1.0) == pytest.approx(10.0)
