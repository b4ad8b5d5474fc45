import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from stein_queues.errors import ParameterError, UnsupportedRegimeError
from stein_queues.paths import sup_distance
from stein_queues.queues import (QueueParams, fluid_mm1, fluid_mminfty, gamma_fn,
                                 hitting_time_zero_stats, ks_two_sample, reflect_counts,
                                 simulate_mm1, simulate_mm1_from_events,
                                 simulate_mminfty_events, simulate_mminfty_trapeze, z_scale)
from stein_queues.rng import replicate, stream


def within(sample, target, k=3.0):
    sample = np.asarray(sample, float)
    return abs(sample.mean() - target) <= k * sample.std(ddof=1) / math.sqrt(sample.size)


# ---------------------------------------------------------------- M/M/1
def test_fluid_mm1_examples():
    p = QueueParams(1.0, 2.0, 1, 3.0, 1.0)
    f = fluid_mm1(p)
    assert f(0.25) == pytest.approx(0.75)
    assert f(1.0) == 0.0 and f(2.5) == 0.0
    flat = fluid_mm1(QueueParams(1.5, 1.5, 1, 2.0, 0.7))
    assert flat(0.0) == flat(2.0) == 0.7


def test_pure_birth_when_departures_are_empty():
    p = QueueParams(1.0, 2.0, 10, 1.0, 0.5)
    arr = np.array([0.1, 0.4, 0.45])
    b = simulate_mm1_from_events(p, arr, [])
    assert b.counts(1.0) == pytest.approx(5 + 3)


def test_reflection_suppresses_down_steps_at_zero():
    assert list(reflect_counts(1, np.array([-1, -1, 1, -1, -1, 1]))) == [0, 0, 1, 0, 0, 1]


def test_pathwise_identity_before_hitting_zero():
    p = QueueParams(1.0, 2.0, 20, 0.4, 1.0)
    for i in range(50):
        b = simulate_mm1(p, stream(5, i))
        t = np.linspace(0, 0.4, 401)
        t = t[t < b.tauZero]
        free = 20 + np.searchsorted(np.sort(b.arrivals), t, side="right") - np.searchsorted(
            np.sort(b.departures), t, side="right")
        assert np.array_equal(b.counts(t), free)


def test_zn_normalisation():
    p = QueueParams(1.0, 2.0, 16, 0.4, 1.0)
    b = simulate_mm1(p, 3)
    t = np.concatenate([b.Ln.knots, [0.123]])
    expect = math.sqrt(16) / math.sqrt(3) * (b.Ln(t) - b.fluid(t))
    assert np.allclose(b.Zn(t), expect, atol=1e-12)
    assert z_scale(p, convention="linear") == pytest.approx(4 / 3)


def test_fluid_mean_at_large_n():
    p = QueueParams(1.0, 2.0, 10_000, 0.5, 1.0)
    vals = replicate(lambda g: simulate_mm1(p, g).Ln(0.5), 21, 1000)
    assert within(vals, 0.5)


def test_initial_count_must_be_integral():
    with pytest.raises(ParameterError):
        QueueParams(1.0, 2.0, 3, 1.0, 0.5).initial_count


# ------------------------------------------------------------- hitting time
def test_hitting_time_at_zero_horizon():
    p = QueueParams(1.0, 2.0, 10, 0.0, 1.0)
    assert hitting_time_zero_stats(p, 100, 0).estimate == 0.0


def test_hitting_time_regime_violation():
    with pytest.raises(UnsupportedRegimeError):
        hitting_time_zero_stats(QueueParams(2.0, 1.0, 10, 0.5, 1.0), 10, 0)
    with pytest.raises(UnsupportedRegimeError):
        hitting_time_zero_stats(QueueParams(1.0, 2.0, 10, 1.5, 1.0), 10, 0)


def test_hitting_probability_decays_in_n():
    est = {n: hitting_time_zero_stats(QueueParams(1.0, 2.0, n, 0.5, 1.0), 10_000, 4).estimate
           for n in (10, 20, 40, 80)}
    assert est[10] > est[20] > est[40]
    at50 = hitting_time_zero_stats(QueueParams(1.0, 2.0, 50, 0.5, 1.0), 10_000, 4)
    assert at50.upper < est[10]
    # log-linear decay over the positive estimates
    pts = [(n, math.log(v)) for n, v in est.items() if v > 0]
    slope = np.polyfit([a for a, _ in pts], [b for _, b in pts], 1)[0]
    assert slope < 0


# ------------------------------------------------------------------ M/M/inf
def test_gamma_examples():
    assert gamma_fn(0.0, 1.0, 1.0) == 0.0
    assert gamma_fn(0.5, 1.0, 1.0) == pytest.approx(math.exp(-0.5), rel=1e-14)
    t, h = 0.7, 1e-6
    deriv = (gamma_fn(t + h, 1.3, 2.0) - gamma_fn(t, 1.3, 2.0)) / h
    assert deriv == pytest.approx(1.3 * (2 - math.exp(-2.0 * t)), abs=1e-5)


def test_empty_trapeze_gives_negative_fluid():
    from stein_queues.queues import _mminfty_bundle

    p = QueueParams(1.0, 1.0, 25, 1.0)
    b = _mminfty_bundle(p, [], [], None)
    assert b.Ln(1.0) == 0.0
    t = np.linspace(0, 1, 11)
    assert np.allclose(b.Zn(t), -5.0 * fluid_mminfty(p)(t), atol=1e-13)


def test_trapeze_mean_matches_fluid():
    p = QueueParams(1.0, 1.0, 1000, 1.0)
    vals = replicate(lambda g: simulate_mminfty_trapeze(p, g).Ln(1.0), 8, 2000)
    assert within(vals, 1 - math.exp(-1))


def test_trapeze_count_is_poisson():
    p = QueueParams(1.0, 2.0, 20, 1.0)
    counts = np.array(replicate(lambda g: simulate_mminfty_trapeze(p, g).counts(0.5), 6, 5000))
    mean = 20 * 0.5 * (1 - math.exp(-1.0))
    edges = np.arange(0, 13)
    obs = np.array([np.sum(counts == k) for k in edges[:-1]] + [np.sum(counts >= 12)])
    pmf = stats.poisson.pmf(edges[:-1], mean)
    exp = np.concatenate([pmf, [1 - pmf.sum()]]) * counts.size
    assert stats.chisquare(obs, exp).pvalue > 1e-3


def test_trapeze_needs_empty_start():
    with pytest.raises(UnsupportedRegimeError):
        simulate_mminfty_trapeze(QueueParams(1.0, 1.0, 10, 1.0, 1.0), 0)


def test_event_simulator_stationary_mean():
    p = QueueParams(2.0, 4.0, 10, 6.0)
    vals = replicate(lambda g: simulate_mminfty_events(p, g).counts(6.0), 12, 3000)
    assert within(vals, 10 * 0.5 * (1 - math.exp(-24.0)))


def test_simulators_agree_in_law():
    p = QueueParams(1.0, 2.0, 50, 1.0)
    a = replicate(lambda g: simulate_mminfty_trapeze(p, g).Ln(1.0), 1, 3000)
    b = replicate(lambda g: simulate_mminfty_events(p, g).Ln(1.0), 2, 3000)
    assert ks_two_sample(a, b) > 1e-3


@given(st.integers(0, 10 ** 9))
def test_bundles_are_seed_reproducible(seed):
    p = QueueParams(1.0, 2.0, 5, 0.4, 1.0)
    assert sup_distance(simulate_mm1(p, seed).Zn, simulate_mm1(p, seed).Zn) == 0.0
