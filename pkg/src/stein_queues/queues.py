"""Exact simulation of the M/M/1 and M/M/inf queues and their diffusion rescalings.

Counts are unscaled integers; ``Ln`` is the count divided by ``n``.  For the
M/M/1 queue the fluctuation process is

    Zn = sqrt(n) / sqrt(lam + mu) * (Ln - fluid),

(the ``1/(lam + mu)`` convention is available through ``z_scale``), and for
the M/M/inf queue ``Zn = sqrt(n) (Ln - fluid)`` with

    Yn(t) = Zn(t) - Zn(0) + mu int_0^t Zn = sqrt(n) (Ln(t) + mu int_0^t Ln - lam t).
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import stats

from .errors import ParameterError, UnsupportedRegimeError
from .paths import Path, constant_path, exp_path, linear_path, running_integral, step_path
from .ppp import ServiceMarks, _as_rng
from .rng import derive_seed, replicate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class QueueParams:
    lam: float
    mu: float
    n: int
    T: float
    x0: float = 0.0

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0):
            raise ParameterError("lam and mu must be positive")
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError("n must be a positive integer")
        if not self.T >= 0:
            raise ParameterError("T must be non-negative")
        if not self.x0 >= 0:
            raise ParameterError("x0 must be non-negative")
        object.__setattr__(self, "n", int(self.n))

    @property
    def rho(self) -> float:
        return self.lam / self.mu

    @property
    def initial_count(self) -> int:
        c = self.n * self.x0
        if abs(c - round(c)) > 1e-9:
            raise ParameterError("n * x0 must be an integer number of customers")
        return int(round(c))

    @property
    def exhaustion_time(self) -> float:
        """``x0 / (mu - lam)``, the time the M/M/1 fluid limit reaches 0."""
        return math.inf if self.lam >= self.mu else self.x0 / (self.mu - self.lam)

    def check_mm1_regime(self):
        """Enforce ``lam < mu`` and ``T <= x0/(mu - lam)`` (the pre-exhaustion regime)."""
        if not self.lam < self.mu:
            raise UnsupportedRegimeError("the pre-exhaustion regime needs lam < mu")
        if self.T > self.exhaustion_time:
            raise UnsupportedRegimeError(
                f"T={self.T} exceeds the fluid exhaustion time {self.exhaustion_time:g}")

    def check_mminfty(self):
        if self.x0 != 0:
            raise UnsupportedRegimeError("the M/M/inf construction starts from an empty system")

    def _need_horizon(self):
        if not self.T > 0:
            raise ParameterError("simulation needs T > 0")


def z_scale(params: QueueParams, model: str = "mm1", convention: str = "sqrt") -> float:
    """Factor multiplying ``Ln - fluid``.

    ``convention="sqrt"`` gives ``sqrt(n)/sqrt(lam+mu)`` (unit-variance driving
    noise); ``"linear"`` gives ``sqrt(n)/(lam+mu)``.  M/M/inf always uses ``sqrt(n)``.
    """
    if model == "mminfty":
        return math.sqrt(params.n)
    if convention == "sqrt":
        return math.sqrt(params.n) / math.sqrt(params.lam + params.mu)
    if convention == "linear":
        return math.sqrt(params.n) / (params.lam + params.mu)
    raise ParameterError(f"unknown normalisation {convention!r}")


@dataclass(frozen=True)
class TrajectoryBundle:
    """One simulated trajectory; ``Zn`` and ``Yn`` are built on first access."""

    model: str
    params: QueueParams
    Ln: Path
    fluid: Path
    tauZero: float = math.inf
    arrivals: Optional[np.ndarray] = None
    departures: Optional[np.ndarray] = None
    seed: Optional[int] = None
    convention: str = "sqrt"

    @cached_property
    def Zn(self) -> Path:
        return (self.Ln - self.fluid) * z_scale(self.params, self.model, self.convention)

    @cached_property
    def Yn(self) -> Optional[Path]:
        if self.model != "mminfty":
            return None
        p = self.params
        drift = linear_path([0.0, p.T], [0.0, p.lam * p.T])
        return (self.Ln + running_integral(self.Ln) * p.mu - drift) * math.sqrt(p.n)

    @property
    def counts(self) -> Path:
        return self.Ln * self.params.n

    def to_json(self) -> dict:
        out = {"model": self.model, "params": asdict(self.params), "seed": self.seed,
               "tauZero": None if math.isinf(self.tauZero) else self.tauZero,
               "Ln": self.Ln.to_json(), "fluid": self.fluid.to_json(), "Zn": self.Zn.to_json()}
        if self.Yn is not None:
            out["Yn"] = self.Yn.to_json()
        return out


def _seed_of(rng):
    return int(rng) if isinstance(rng, (int, np.integer)) else None


# --------------------------------------------------------------------- M/M/1
def fluid_mm1(params: QueueParams) -> Path:
    """``t -> (x0 + (lam - mu) t)^+`` as an exact piecewise-linear path."""
    params._need_horizon()
    T, x0, drift = params.T, params.x0, params.lam - params.mu
    if drift < 0 and x0 / -drift < T:
        t0 = x0 / -drift
        if t0 == 0:
            return constant_path(T, 0.0)
        return linear_path([0.0, t0, T], [x0, 0.0, 0.0])
    return linear_path([0.0, T], [x0, x0 + drift * T])


def reflect_counts(initial: int, steps: np.ndarray) -> np.ndarray:
    """Counts after each ±1 step when down-steps at 0 are suppressed."""
    walk = initial + np.cumsum(steps)
    return walk - np.minimum(0, np.minimum.accumulate(walk))


def simulate_mm1_from_events(params: QueueParams, arrivals, potential_departures,
                             seed: Optional[int] = None,
                             convention: str = "sqrt") -> TrajectoryBundle:
    """Build the M/M/1 bundle from the two driving Poisson streams.

    A potential departure is effective only when the queue is non-empty.
    """
    params._need_horizon()
    arrivals = np.sort(np.asarray(arrivals, float))
    deps = np.sort(np.asarray(potential_departures, float))
    times = np.concatenate([arrivals, deps])
    steps = np.concatenate([np.ones(arrivals.size), -np.ones(deps.size)])
    order = np.argsort(times, kind="stable")
    times, steps = times[order], steps[order]
    c0 = params.initial_count
    counts = reflect_counts(c0, steps)
    hit = np.nonzero(counts == 0)[0]
    tau = 0.0 if c0 == 0 else (float(times[hit[0]]) if hit.size else math.inf)
    n = params.n
    Ln = step_path(params.T, c0 / n, times, counts / n)
    fluid = fluid_mm1(params)
    effective = np.ones(times.size, bool)
    prev = np.concatenate([[c0], counts[:-1]])
    effective[(steps < 0) & (prev == 0)] = False
    return TrajectoryBundle("mm1", params, Ln, fluid, tau, arrivals,
                            times[(steps < 0) & effective], seed, convention)


def simulate_mm1(params: QueueParams, rng, convention: str = "sqrt") -> TrajectoryBundle:
    """One M/M/1 trajectory from independent Poisson streams of rates ``n lam`` and ``n mu``."""
    params._need_horizon()
    seed = _seed_of(rng)
    gen = _as_rng(rng)
    n, T = params.n, params.T
    arr = gen.uniform(0.0, T, gen.poisson(n * params.lam * T))
    dep = gen.uniform(0.0, T, gen.poisson(n * params.mu * T))
    return simulate_mm1_from_events(params, arr, dep, seed, convention)


@dataclass(frozen=True)
class HittingEstimate:
    estimate: float
    lower: float
    upper: float
    hits: int
    replications: int


def wilson_interval(hits: int, m: int, z: float = 1.959963984540054):
    if m == 0:
        return 0.0, 1.0
    p = hits / m
    denom = 1 + z * z / m
    centre = (p + z * z / (2 * m)) / denom
    half = z * math.sqrt(p * (1 - p) / m + z * z / (4 * m * m)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


def hitting_time_zero_stats(params: QueueParams, M: int, rng) -> HittingEstimate:
    """Monte Carlo estimate of ``P(tau_0 <= T)`` with a Wilson 95% interval."""
    if not params.lam < params.mu:
        raise UnsupportedRegimeError("hitting statistics need lam < mu")
    if params.T >= params.exhaustion_time:
        raise UnsupportedRegimeError("need T < x0/(mu - lam)")
    if M < 1:
        raise ParameterError("M must be positive")
    if params.T == 0:
        return HittingEstimate(0.0, 0.0, wilson_interval(0, M)[1], 0, M)
    seed = rng if isinstance(rng, (int, np.integer)) else int(_as_rng(rng).integers(2 ** 63))
    c0 = params.initial_count
    n, T = params.n, params.T
    p_up = params.lam / (params.lam + params.mu)

    def one(gen):
        k = gen.poisson(n * (params.lam + params.mu) * T)
        steps = np.where(gen.random(k) < p_up, 1, -1)
        # the unreflected walk first reaches 0 exactly when the queue empties
        return bool(k and c0 + np.min(np.cumsum(steps)) <= 0)

    hits = int(sum(replicate(one, derive_seed(seed, "tau0", n), M)))
    lo, hi = wilson_interval(hits, M)
    return HittingEstimate(hits / M, lo, hi, hits, M)


# ------------------------------------------------------------------- M/M/inf
def gamma_fn(t, lam: float, mu: float):
    """``2 lam t - (lam/mu)(1 - e^{-mu t})``, the variance clock of the M/M/inf limit."""
    t = np.asarray(t, float)
    if np.any(t < 0):
        raise ParameterError("t must be non-negative")
    out = 2.0 * lam * t + (lam / mu) * np.expm1(-mu * t)
    return out if out.ndim else float(out)


def fluid_mminfty(params: QueueParams) -> Path:
    """``t -> rho (1 - e^{-mu t})``."""
    params._need_horizon()
    return exp_path(params.T, params.rho, -params.rho, params.mu)


def _mminfty_bundle(params, arrivals, departures, seed):
    T, n = params.T, params.n
    arrivals = np.sort(np.asarray(arrivals, float))
    deps = np.sort(np.asarray(departures, float))
    deps = deps[deps <= T]
    times = np.concatenate([arrivals, deps])
    steps = np.concatenate([np.ones(arrivals.size), -np.ones(deps.size)])
    order = np.argsort(times, kind="stable")
    times, steps = times[order], steps[order]
    counts = np.cumsum(steps)
    Ln = step_path(T, 0.0, times, counts / n)
    return TrajectoryBundle("mminfty", params, Ln, fluid_mminfty(params), math.inf,
                            arrivals, deps, seed)


def simulate_mminfty_trapeze(params: QueueParams, rng) -> TrajectoryBundle:
    """M/M/inf trajectory read off a marked Poisson process of (arrival, service) pairs."""
    params.check_mminfty()
    params._need_horizon()
    seed = _seed_of(rng)
    config = ServiceMarks(params.T, lam=params.lam, mu=params.mu, n=params.n).sample(_as_rng(rng))
    return _mminfty_bundle(params, config.times, config.times + config.marks, seed)


def simulate_mminfty_events(params: QueueParams, rng) -> TrajectoryBundle:
    """Event-driven M/M/inf trajectory with competing exponential clocks."""
    params.check_mminfty()
    params._need_horizon()
    seed = _seed_of(rng)
    gen = _as_rng(rng)
    a_rate = params.n * params.lam
    t, k = 0.0, 0
    arrivals, departures = [], []
    while True:
        total = a_rate + k * params.mu
        t += gen.exponential(1.0 / total)
        if t > params.T:
            break
        if gen.random() * total < a_rate:
            arrivals.append(t)
            k += 1
        else:
            departures.append(t)
            k -= 1
    return _mminfty_bundle(params, arrivals, departures, seed)


def ks_two_sample(x, y) -> float:
    """p-value of the two-sample Kolmogorov-Smirnov test."""
    return float(stats.ks_2samp(np.asarray(x), np.asarray(y)).pvalue)
