import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import optimize

from stein_queues.bounds import (JumpBoundParams, brownian_interpolation_gap,
                                 chebyshev_tau_bound, interpolation_gap_bound,
                                 interval_event_counts, lambert_w0, max_poisson_bound,
                                 max_poisson_mc, max_poisson_objective,
                                 poisson_excess_probability)
from stein_queues.errors import DomainError, ResolutionError, UnsupportedRegimeError
from stein_queues.paths import interpolate_affine, sup_distance
from stein_queues.queues import QueueParams, simulate_mm1


# -------------------------------------------------------------- Lambert W
def test_lambert_examples():
    assert lambert_w0(0.0) == 0.0
    assert lambert_w0(math.e) == pytest.approx(1.0, rel=1e-15)
    ref = optimize.brentq(lambda w: w * math.exp(w) - 1.0, 0, 1, xtol=1e-15)
    assert lambert_w0(1.0) == pytest.approx(ref, abs=1e-12)
    assert lambert_w0(1.0) == pytest.approx(0.5671432904, abs=1e-10)
    assert lambert_w0(-1 / math.e) == pytest.approx(-1.0, abs=1e-7)


@given(st.floats(-1 / math.e + 1e-6, 1e12))
def test_lambert_inverts(x):
    w = lambert_w0(x)
    assert w * math.exp(w) == pytest.approx(x, rel=1e-12, abs=1e-15)


def test_lambert_domain():
    with pytest.raises(DomainError):
        lambert_w0(-0.5)
    assert np.allclose(lambert_w0(np.array([0.0, math.e])), [0.0, 1.0])


# ------------------------------------------------------------ max Poisson
def test_max_poisson_bound_against_infimum():
    b = max_poisson_bound(5000, 1.0)
    assert b.a == pytest.approx(math.log(5000 / math.e) / math.e)
    assert b.value == pytest.approx(math.log(5000 / math.e) / lambert_w0(b.a), rel=1e-15)
    # 64-point oracle bracket, then a bounded scalar refinement
    u = np.linspace(0.05, 5.0, 64)
    k = int(np.argmin(max_poisson_objective(u, 5000)))
    res = optimize.minimize_scalar(lambda v: float(max_poisson_objective(v, 5000)),
                                   bounds=(u[max(k - 1, 0)], u[min(k + 1, 63)]),
                                   method="bounded", options={"xatol": 1e-12})
    assert b.value == pytest.approx(res.fun, rel=1e-9)


def test_max_poisson_bound_is_monotone():
    vals = [max_poisson_bound(n).value for n in (10, 100, 1000, 10 ** 5, 10 ** 8)]
    assert np.all(np.diff(vals) > 0)


def test_max_poisson_asymptotic_form_only_when_stable():
    assert max_poisson_bound(1000).asymptotic is None
    big = max_poisson_bound(10 ** 12)
    assert big.asymptotic is not None and big.denominator >= 0.5


def test_max_poisson_regime_error():
    with pytest.raises(UnsupportedRegimeError):
        max_poisson_bound(2, 1.0)


def test_max_poisson_monte_carlo_below_bound():
    est = max_poisson_mc(1000, 1.0, 4000, 3)
    assert est.value + 3 * est.se <= max_poisson_bound(1000).value


# --------------------------------------------------- interpolation gap bound
def test_gap_bound_at_e_to_e():
    assert interpolation_gap_bound(JumpBoundParams(1, 1.0, math.exp(math.e))) == pytest.approx(
        2 * math.e)
    with pytest.raises(DomainError):
        interpolation_gap_bound(JumpBoundParams(1, 1.0, 2))


def test_gap_is_dominated_by_interval_counts():
    p = QueueParams(1.0, 2.0, 200, 0.4, 1.0)
    for seed in range(20):
        b = simulate_mm1(p, seed)
        L = b.Ln * p.n
        n = p.n
        events = np.concatenate([b.arrivals, b.departures])
        counts = interval_event_counts(events, n, p.T)
        gap = sup_distance(L, interpolate_affine(L, n))
        # all effective jumps are unit jumps, so the oscillation in a mesh
        # interval is at most the number of events in it
        assert gap <= counts.max() + 1e-12


def test_gap_monte_carlo_below_bound():
    n = 100
    p = QueueParams(1.0, 2.0, n, 0.4, 1.0)
    vals = []
    for seed in range(200):
        L = simulate_mm1(p, seed).Ln * n
        vals.append(sup_distance(L, interpolate_affine(L, n)))
    vals = np.array(vals)
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert vals.mean() + 3 * se <= interpolation_gap_bound(JumpBoundParams(1, 1.0, n))


# ----------------------------------------------------------------- Chebyshev
def test_chebyshev_examples():
    assert chebyshev_tau_bound(1.0, 100, 1.0) == pytest.approx(0.01)
    assert chebyshev_tau_bound(1.0, 200, 1.0) == pytest.approx(0.005)


def test_chebyshev_holds_by_monte_carlo():
    est = poisson_excess_probability(1.0, 20, 0.5, 100_000, 7)
    assert est.value <= chebyshev_tau_bound(1.0, 20, 0.5)


# ---------------------------------------------------- Brownian interpolation
def test_brownian_gap_resolution_guard():
    with pytest.raises(ResolutionError):
        brownian_interpolation_gap(0.1, 2, 8, 4, 0, refinement=8)


def test_brownian_gap_decays_near_square_root():
    eta = 0.02
    ns = np.array([8, 32, 128])
    vals = np.array([brownian_interpolation_gap(eta, 2, n, 40, 1, refinement=16).value
                     for n in ns])
    assert vals[0] > vals[1] > vals[2]
    # for small eta the squared seminorm carries a log n factor at these n
    raw = np.polyfit(np.log(ns), np.log(vals), 1)[0]
    corrected = np.polyfit(np.log(ns), np.log(vals / np.sqrt(np.log(ns))), 1)[0]
    assert -0.6 <= raw <= -0.3
    assert -0.6 <= corrected <= -0.4
    # h (int_h^1 u^(-1-2 eta) du + 1) tracks the squared norm across n
    h = 1.0 / ns
    shape = np.sqrt(h * ((h ** (-2 * eta) - 1) / (2 * eta) + 1))
    ratio = vals / shape
    assert ratio.max() / ratio.min() < 1.1
    # doubling n scales by about 2^-(1/2 - eta)
    a = brownian_interpolation_gap(eta, 2, 64, 40, 2, refinement=16).value
    b = brownian_interpolation_gap(eta, 2, 128, 40, 2, refinement=16).value
    assert b / a == pytest.approx(2 ** -(0.5 - eta), rel=0.25)
