"""Marked Poisson point processes, the divergence of deterministic kernels,
and a Monte Carlo check of the Campbell-Mecke integration-by-parts formula.

Three control measures are supported:

* ``HomogeneousLine(rate)``: ``rate * ds`` on ``[0, T]`` (marks are 0).
* ``MM1Marks(lam, mu, n)``: ``n(lam+mu) ds`` with marks ``+1`` (prob.
  ``lam/(lam+mu)``) and ``-1``.
* ``ServiceMarks(lam, mu, n)``: ``lam n dx`` with ``Exp(mu)`` service marks.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from numpy.polynomial.laguerre import laggauss

from .errors import FunctionalError, ParameterError, ToleranceError, UnsupportedKernelError
from .rng import derive_seed, replicate

log = logging.getLogger(__name__)

INTEGRATION_TOL = 1e-10


# ---------------------------------------------------------------- configurations
@dataclass(frozen=True)
class MarkedPoint:
    time: float
    mark: float


class PointConfiguration:
    """Immutable finite configuration of ``(time, mark)`` atoms sorted by time."""

    __slots__ = ("_times", "_marks", "_horizon", "_ties")

    def __init__(self, times, marks, horizon: float):
        times = np.asarray(times, float).ravel()
        marks = np.broadcast_to(np.asarray(marks, float), times.shape).copy()
        if horizon <= 0:
            raise ParameterError("horizon must be positive")
        if times.size and (times.min() < 0 or times.max() > horizon):
            raise ParameterError("atom times must lie in [0, horizon]")
        order = np.argsort(times, kind="stable")
        times, marks = times[order], marks[order]
        ties = bool(times.size > 1 and np.any(np.diff(times) == 0))
        if ties:
            log.info("configuration has simultaneous atoms; kept in insertion order")
        times.flags.writeable = False
        marks.flags.writeable = False
        self._times, self._marks, self._horizon, self._ties = times, marks, float(horizon), ties

    times = property(lambda self: self._times)
    marks = property(lambda self: self._marks)
    horizon = property(lambda self: self._horizon)
    has_ties = property(lambda self: self._ties)

    @property
    def points(self) -> list[MarkedPoint]:
        return [MarkedPoint(float(t), float(m)) for t, m in zip(self._times, self._marks)]

    def __len__(self):
        return self._times.size

    def add(self, time: float, mark: float = 0.0) -> "PointConfiguration":
        """The configuration with the extra atom ``(time, mark)``."""
        return PointConfiguration(np.append(self._times, time), np.append(self._marks, mark),
                                  self._horizon)

    def select(self, mask) -> "PointConfiguration":
        return PointConfiguration(self._times[mask], self._marks[mask], self._horizon)

    def __repr__(self):
        return f"PointConfiguration(atoms={len(self)}, horizon={self._horizon:g})"


# ---------------------------------------------------------------------- kernels
@dataclass(frozen=True, eq=False)
class DeterministicKernel:
    """A deterministic integrand ``u(time, mark)`` with declared smoothness breaks.

    ``func`` must be vectorised: given equal-shaped ``times`` and ``marks`` it
    returns an array of that shape, optionally with extra trailing axes (a
    whole family evaluated at once).  ``time_breaks`` are the times where
    ``u`` may be non-smooth; ``exit_breaks`` are the values of ``time + mark``
    where it may be non-smooth (service-mark measures only).
    """

    func: Callable[[np.ndarray, np.ndarray], np.ndarray]
    time_breaks: Sequence[float] = ()
    exit_breaks: Sequence[float] = ()
    name: str = "kernel"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __call__(self, times, marks):
        return self.func(np.asarray(times, float), np.asarray(marks, float))

    def integral(self, measure: "ControlMeasure"):
        """``int u d(nu)``, cached per measure."""
        key = measure
        if key not in self._cache:
            self._cache[key] = measure.integrate(self)
        return self._cache[key]


def indicator_kernel(s1: float, s2: float, mark: float | None = None) -> DeterministicKernel:
    """``1{s1 <= t < s2}``, optionally restricted to a single mark value."""
    if mark is None:
        fn = lambda t, m: ((t >= s1) & (t < s2)).astype(float)
    else:
        fn = lambda t, m: ((t >= s1) & (t < s2) & (m == mark)).astype(float)
    return DeterministicKernel(fn, time_breaks=(s1, s2), name=f"1[{s1:g},{s2:g})")


def product_kernel(u: DeterministicKernel, v: DeterministicKernel) -> DeterministicKernel:
    return DeterministicKernel(lambda t, m: u(t, m) * v(t, m),
                               tuple(u.time_breaks) + tuple(v.time_breaks),
                               tuple(u.exit_breaks) + tuple(v.exit_breaks),
                               name=f"{u.name}*{v.name}")


def power_kernel(u: DeterministicKernel, power: int) -> DeterministicKernel:
    return DeterministicKernel(lambda t, m: u(t, m) ** power, u.time_breaks, u.exit_breaks,
                               name=f"{u.name}^{power}")


# -------------------------------------------------------------- control measures
def _gl(order):
    x, w = leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _cells(breaks, lo, hi):
    pts = np.asarray(sorted({lo, hi, *[float(b) for b in breaks if lo < b < hi]}))
    return pts


def _line_integral(fn, cuts, order):
    nodes, weights = _gl(order)
    lo, hi = cuts[:-1], cuts[1:]
    t = lo[:, None] + (hi - lo)[:, None] * nodes[None, :]
    vals = fn(t)
    w = ((hi - lo)[:, None] * weights[None, :])
    w = w.reshape(w.shape + (1,) * (vals.ndim - 2))
    return np.sum(vals * w, axis=(0, 1))


def _adaptive(compute, cuts, what):
    """Compare Gauss-Legendre orders 10 and 20, bisecting cells until they agree."""
    for depth in range(7):
        lo, hi = compute(cuts, 10), compute(cuts, 20)
        err = float(np.max(np.abs(np.asarray(hi - lo))))
        if err <= INTEGRATION_TOL * max(1.0, float(np.max(np.abs(np.asarray(hi))))):
            return hi
        cuts = np.sort(np.concatenate([cuts, 0.5 * (cuts[:-1] + cuts[1:])]))
    raise ToleranceError(f"{what}: quadrature did not reach {INTEGRATION_TOL:g}",
                         {"estimate_error": err, "cells": cuts.size - 1})


@dataclass(frozen=True)
class ControlMeasure:
    horizon: float

    def __post_init__(self):
        if not self.horizon > 0:
            raise ParameterError("horizon must be positive")

    @property
    def total_mass(self) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator) -> PointConfiguration:
        raise NotImplementedError

    def sample_points(self, rng: np.random.Generator, size: int):
        """``size`` iid draws from the normalised measure (times, marks)."""
        raise NotImplementedError

    def integrate(self, kernel) -> np.ndarray | float:
        raise NotImplementedError


@dataclass(frozen=True)
class HomogeneousLine(ControlMeasure):
    rate: float = 1.0

    def __post_init__(self):
        super().__post_init__()
        if not self.rate > 0:
            raise ParameterError("rate must be positive")

    @property
    def total_mass(self):
        return self.rate * self.horizon

    def sample(self, rng):
        return sample_poisson_line(self.rate, self.horizon, rng)

    def sample_points(self, rng, size):
        return rng.uniform(0.0, self.horizon, size), np.zeros(size)

    def integrate(self, kernel):
        cuts = _cells(getattr(kernel, "time_breaks", ()), 0.0, self.horizon)
        fn = lambda t: kernel(t, np.zeros_like(t))
        out = self.rate * _adaptive(lambda c, o: _line_integral(fn, c, o), cuts, "line")
        return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class MM1Marks(ControlMeasure):
    lam: float = 1.0
    mu: float = 1.0
    n: int = 1

    def __post_init__(self):
        super().__post_init__()
        if not (self.lam > 0 and self.mu > 0):
            raise ParameterError("lam and mu must be positive")
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError("n must be a positive integer")

    @property
    def total_mass(self):
        return self.n * (self.lam + self.mu) * self.horizon

    @property
    def p_up(self):
        return self.lam / (self.lam + self.mu)

    def sample(self, rng):
        count = rng.poisson(self.total_mass)
        times = np.sort(rng.uniform(0.0, self.horizon, count))
        marks = np.where(rng.random(count) < self.p_up, 1.0, -1.0)
        return PointConfiguration(times, marks, self.horizon)

    def sample_points(self, rng, size):
        marks = np.where(rng.random(size) < self.p_up, 1.0, -1.0)
        return rng.uniform(0.0, self.horizon, size), marks

    def integrate(self, kernel):
        cuts = _cells(getattr(kernel, "time_breaks", ()), 0.0, self.horizon)
        total = 0
        for mark, rate in ((1.0, self.n * self.lam), (-1.0, self.n * self.mu)):
            fn = lambda t, mark=mark: kernel(t, np.full_like(t, mark))
            total = total + rate * _adaptive(lambda c, o: _line_integral(fn, c, o), cuts, "mm1")
        return total if np.ndim(total) else float(total)


@dataclass(frozen=True)
class ServiceMarks(ControlMeasure):
    lam: float = 1.0
    mu: float = 1.0
    n: int = 1

    def __post_init__(self):
        super().__post_init__()
        if not (self.lam > 0 and self.mu > 0):
            raise ParameterError("lam and mu must be positive")
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError("n must be a positive integer")

    @property
    def total_mass(self):
        return self.lam * self.n * self.horizon

    def sample(self, rng):
        count = rng.poisson(self.total_mass)
        times = np.sort(rng.uniform(0.0, self.horizon, count))
        marks = rng.exponential(1.0 / self.mu, count)
        return PointConfiguration(times, marks, self.horizon)

    def sample_points(self, rng, size):
        return rng.uniform(0.0, self.horizon, size), rng.exponential(1.0 / self.mu, size)

    def integrate(self, kernel):
        """``int int u(x, z) lam n mu e^{-mu z} dz dx`` over cells in ``(x, y = x + z)``.

        The x-axis is cut at every time and exit break inside ``[0, T]`` so each
        cell is a triangle ``x <= y < x1`` followed by rectangles in ``y`` and a
        Gauss-Laguerre tail past the last exit break.
        """
        T = self.horizon
        tb = list(getattr(kernel, "time_breaks", ()))
        eb = np.unique(np.asarray(list(getattr(kernel, "exit_breaks", ())), float))
        xcuts = _cells(tb + [e for e in eb], 0.0, T)
        mu = self.mu
        scale = self.lam * self.n * mu

        def compute(xc, order):
            nodes, weights = _gl(order)
            total = 0
            for x0, x1 in zip(xc[:-1], xc[1:]):
                total = total + self._cell(kernel, x0, x1, eb, nodes, weights, order)
            return total

        out = scale * _adaptive(compute, xcuts, "service")
        return out if np.ndim(out) else float(out)

    def _cell(self, kernel, x0, x1, eb, nodes, weights, order):
        mu = self.mu
        hx = x1 - x0
        x = x0 + hx * nodes  # (o,)
        wx = hx * weights
        total = 0
        # triangle x <= y < x1, y = x + (x1 - x) v
        v, wv = nodes, weights
        X = x[:, None] + 0 * v[None, :]
        Y = x[:, None] + (x1 - x)[:, None] * v[None, :]
        W = wx[:, None] * (x1 - x)[:, None] * wv[None, :] * np.exp(-mu * (Y - X))
        total = total + _weighted_sum(kernel(X, Y - X), W)
        ycuts = np.concatenate([[x1], eb[eb > x1]])
        for y0, y1 in zip(ycuts[:-1], ycuts[1:]):
            y = y0 + (y1 - y0) * nodes
            X, Y = np.meshgrid(x, y, indexing="ij")
            W = wx[:, None] * ((y1 - y0) * weights)[None, :] * np.exp(-mu * (Y - X))
            total = total + _weighted_sum(kernel(X, Y - X), W)
        # tail y >= last cut: y = y_last + w/mu, Gauss-Laguerre in w
        y_last = ycuts[-1]
        lw, ll = _laguerre(2 * order)
        X, Wn = np.meshgrid(x, lw, indexing="ij")
        Y = y_last + Wn / mu
        W = wx[:, None] * np.exp(-mu * (y_last - x))[:, None] * (ll / mu)[None, :]
        total = total + _weighted_sum(kernel(X, Y - X), W)
        return total


_LAG_CACHE: dict = {}


def _laguerre(order):
    if order not in _LAG_CACHE:
        _LAG_CACHE[order] = laggauss(order)
    return _LAG_CACHE[order]


def _weighted_sum(vals, weights):
    vals = np.asarray(vals, float)
    w = weights.reshape(weights.shape + (1,) * (vals.ndim - weights.ndim))
    return np.sum(vals * w, axis=(0, 1))


# --------------------------------------------------------------------- sampling
def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_poisson_line(rate: float, horizon: float, rng) -> PointConfiguration:
    """Homogeneous Poisson process on ``[0, horizon]`` (marks 0)."""
    if not rate > 0 or not horizon > 0:
        raise ParameterError("rate and horizon must be positive")
    rng = _as_rng(rng)
    count = rng.poisson(rate * horizon)
    times = np.sort(rng.uniform(0.0, horizon, count))
    return PointConfiguration(times, 0.0, horizon)


def sample_marked_ppp(measure: ControlMeasure, rng) -> PointConfiguration:
    return measure.sample(_as_rng(rng))


# ------------------------------------------------------------------- divergence
def divergence(u: DeterministicKernel, config: PointConfiguration, measure: ControlMeasure):
    """``sum_{x in config} u(x) - int u d(nu)`` for a deterministic kernel."""
    if not isinstance(u, DeterministicKernel):
        raise UnsupportedKernelError("divergence needs a DeterministicKernel with declared breaks")
    atoms = u(config.times, config.marks)
    total = np.sum(atoms, axis=0) if len(config) else 0.0 * np.asarray(u.integral(measure))
    out = total - u.integral(measure)
    return out if np.ndim(out) else float(out)


# ------------------------------------------------------------- Campbell-Mecke
class ConfigurationFunctional:
    """A bounded functional ``F(config)``.

    Subclasses may implement :meth:`difference` (vectorised ``D_x F``); the
    default evaluates ``F(config + x) - F(config)`` atom by atom.
    """

    def __call__(self, config: PointConfiguration) -> float:
        raise NotImplementedError

    def difference(self, config, times, marks):
        base = self(config)
        flat_t, flat_m = np.ravel(times), np.ravel(marks)
        out = np.array([self(config.add(t, m)) - base for t, m in zip(flat_t, flat_m)])
        return out.reshape(np.shape(times))

    def integrated_difference(self, config, u, measure):
        """``int D_x F(config) u(x) nu(dx)`` by quadrature of the exact difference."""
        k = DeterministicKernel(lambda t, m: self.difference(config, t, m) * u(t, m),
                                u.time_breaks, u.exit_breaks)
        return measure.integrate(k)

    exact_difference = False


class ConstantFunctional(ConfigurationFunctional):
    exact_difference = True

    def __init__(self, value: float = 1.0):
        self.value = float(value)

    def __call__(self, config):
        return self.value

    def difference(self, config, times, marks):
        return np.zeros(np.shape(times))

    def integrated_difference(self, config, u, measure):
        return 0.0


class CappedCount(ConfigurationFunctional):
    """``min(#config, cap)``."""

    exact_difference = True

    def __init__(self, cap: int = 5):
        self.cap = cap

    def __call__(self, config):
        return float(min(len(config), self.cap))

    def difference(self, config, times, marks):
        return np.full(np.shape(times), 1.0 if len(config) < self.cap else 0.0)

    def integrated_difference(self, config, u, measure):
        return u.integral(measure) if len(config) < self.cap else 0.0


class DivergenceFunctional(ConfigurationFunctional):
    """``F = delta(v)``, whose difference operator is ``D_x F = v(x)``."""

    exact_difference = True

    def __init__(self, v: DeterministicKernel, measure: ControlMeasure):
        self.v, self.measure = v, measure

    def __call__(self, config):
        return divergence(self.v, config, self.measure)

    def difference(self, config, times, marks):
        return self.v(times, marks)

    def integrated_difference(self, config, u, measure):
        # deterministic: int v u d(nu), cached on the product kernel
        key = (id(u), measure)
        if getattr(self, "_uv", (None,))[0] != key:
            self._uv = (key, product_kernel(self.v, u).integral(measure))
        return self._uv[1]


@dataclass(frozen=True)
class Estimate:
    value: float
    se: float

    def __iter__(self):
        yield self.value
        yield self.se


@dataclass(frozen=True)
class CampbellMeckeResult:
    lhs: Estimate
    rhs: Estimate
    replications: int

    @property
    def combined_se(self) -> float:
        return math.hypot(self.lhs.se, self.rhs.se)

    @property
    def gap(self) -> float:
        return abs(self.lhs.value - self.rhs.value)

    def agrees(self, k: float = 3.0) -> bool:
        return self.gap <= k * self.combined_se + 1e-12


def _guard(value, what):
    value = float(value)
    if not math.isfinite(value) or abs(value) > 1e150:
        raise FunctionalError(f"{what} overflowed ({value!r}); F must be bounded")
    return value


def campbell_mecke_check(F: ConfigurationFunctional, u: DeterministicKernel,
                         measure: ControlMeasure, replications: int, rng,
                         inner_draws: int = 8) -> CampbellMeckeResult:
    """Estimate both sides of ``E[F delta u] = E int D_x F u(x) nu(dx)``.

    When ``F`` provides an exact vectorised difference the inner ``nu``-integral
    is computed by quadrature; otherwise it is estimated without bias from
    ``inner_draws`` points drawn from the normalised measure.
    """
    if replications < 2:
        raise ParameterError("need at least two replications")
    seed = rng if isinstance(rng, (int, np.integer)) else int(_as_rng(rng).integers(2 ** 63))
    mass = measure.total_mass
    u_int = u.integral(measure)

    def one(gen):
        config = measure.sample(gen)
        try:
            f = _guard(F(config), "F")
        except OverflowError as exc:
            raise FunctionalError(f"F overflowed ({exc}); F must be bounded") from exc
        lhs = f * (float(np.sum(u(config.times, config.marks))) - u_int)
        if getattr(F, "exact_difference", False):
            rhs = F.integrated_difference(config, u, measure)
        else:
            t, m = measure.sample_points(gen, inner_draws)
            rhs = mass * float(np.mean(F.difference(config, t, m) * u(t, m)))
        return lhs, _guard(rhs, "D F")

    pairs = np.asarray(replicate(one, derive_seed(seed, "campbell"), replications))
    se = pairs.std(axis=0, ddof=1) / math.sqrt(replications)
    mean = pairs.mean(axis=0)
    return CampbellMeckeResult(Estimate(float(mean[0]), float(se[0])),
                               Estimate(float(mean[1]), float(se[1])), replications)
