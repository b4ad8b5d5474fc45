"""The integral transform ``f -> (f(0), f - f(0) + tau int_0^. f)``, its inverse,
and exact samplers for the Ornstein-Uhlenbeck limit and the time-changed
Brownian motion ``B o gamma`` that it relates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .errors import DomainError, ParameterError
from .paths import Path, linear_path, running_integral
from .ppp import _as_rng
from .queues import gamma_fn


@dataclass(frozen=True)
class ThetaImage:
    initial: float
    residual: Path


def _check_tau(tau):
    if not tau > 0:
        raise ParameterError("tau must be positive")


def theta_forward(f: Path, tau: float) -> ThetaImage:
    """``(f(0), t -> f(t) - f(0) + tau int_0^t f)``, exact for the built-in path classes."""
    _check_tau(tau)
    f0 = float(f(0.0))
    residual = f - f0 + running_integral(f) * tau
    return ThetaImage(f0, residual)


def theta_inverse(x, eta=None, tau=None) -> Path:
    """The unique ``z`` with ``z(0) = x`` and ``z - z(0) + tau int z = eta``.

    ``z(t) = x e^{-tau t} + eta(t) - tau int_0^t e^{-tau(t-s)} eta(s) ds``; on a
    segment where ``eta = a + b s`` this is ``b/tau + C e^{-tau s}``, so the
    result is exact.  Also accepts ``theta_inverse(image, tau)``.
    """
    if isinstance(x, ThetaImage):
        x, eta, tau = x.initial, x.residual, eta
    _check_tau(tau)
    if not eta.is_affine:
        raise ParameterError("eta must be piecewise affine")
    scale = 1.0 + float(np.max(np.abs(eta.right_values())))
    if abs(eta(0.0)) > 1e-12 * scale:
        raise DomainError(f"eta(0) = {eta(0.0):g} but must vanish")
    h = eta.widths
    decay = np.exp(-tau * h)
    one_minus = -np.expm1(-tau * h)
    a, b = eta.a, eta.b
    K = h.size
    W = np.empty(K + 1)  # W(t) = int_0^t e^{-tau(t-s)} eta(s) ds at the knots
    W[0] = 0.0
    for k in range(K):
        W[k + 1] = (W[k] * decay[k] + a[k] * one_minus[k] / tau
                    + b[k] * (h[k] / tau - one_minus[k] / tau ** 2))
    start = x * np.exp(-tau * eta.knots[:-1])
    C = start - tau * W[:-1] + a - b / tau
    T = eta.horizon
    end = x * math.exp(-tau * T) + eta.end - tau * W[-1]
    return Path(eta.knots, b / tau, 0.0, 0.0, C, end, tau)


# ----------------------------------------------------------------- samplers
def _grid(grid) -> np.ndarray:
    g = np.asarray(grid, float)
    if g.ndim != 1 or g.size < 1:
        raise ParameterError("grid must be a non-empty 1-d array")
    if np.any(np.diff(g) <= 0):
        raise ParameterError("grid must be strictly increasing")
    if g[0] < 0:
        raise ParameterError("grid must lie in [0, T]")
    if g[0] > 0:
        g = np.concatenate([[0.0], g])
    if g.size < 2:
        raise ParameterError("grid needs a point beyond 0")
    return g


def _clock(spec) -> Callable:
    if callable(spec):
        return spec
    lam, mu = spec
    return lambda t: gamma_fn(t, lam, mu)


def _bm_values(var: np.ndarray, gen: np.random.Generator, size: int) -> np.ndarray:
    steps = gen.standard_normal((size, 2, var.size))[:, 0] * np.sqrt(var)
    return np.concatenate([np.zeros((size, 1)), np.cumsum(steps, axis=1)], axis=1)


def _clock_increments(gamma_spec, g):
    var = np.diff(np.asarray(_clock(gamma_spec)(g), float))
    if np.any(var < 0):
        raise ParameterError("the time change must be non-decreasing")
    return var


def sample_time_changed_bm(gamma_spec: Union[tuple, Callable], grid, rng) -> Path:
    """``B o gamma`` on ``grid`` (linear between grid points), with exact increments.

    ``gamma_spec`` is ``(lam, mu)`` for the M/M/inf variance clock or any
    non-decreasing callable with ``gamma(0) = 0``.
    """
    g = _grid(grid)
    values = _bm_values(_clock_increments(gamma_spec, g), _as_rng(rng), 1)[0]
    return linear_path(g, values)


def time_changed_bm_values(gamma_spec: Union[tuple, Callable], grid, rng, size: int) -> np.ndarray:
    """``size`` independent copies of ``B o gamma`` at the grid points, as an array.

    Row 0 equals the values of :func:`sample_time_changed_bm` for the same stream.
    """
    g = _grid(grid)
    return _bm_values(_clock_increments(gamma_spec, g), _as_rng(rng), size)


def ou_transition(lam: float, mu: float, t0, t1):
    """Moments of one exact step of ``dX = -mu X dt + sqrt(h) dB``, ``h(s) = lam(2 - e^{-mu s})``.

    Returns ``(decay, var_G, cov_GM, var_M)`` where ``G`` is the innovation of
    ``X`` and ``M`` the increment of ``int sqrt(h) dB`` over ``[t0, t1]``.
    """
    t0, t1 = np.asarray(t0, float), np.asarray(t1, float)
    d = t1 - t0
    decay = np.exp(-mu * d)
    var_g = lam / mu * (-np.expm1(-2 * mu * d) + np.exp(-mu * t1) * np.expm1(-mu * d))
    cov = lam * (-2 * np.expm1(-mu * d) / mu - np.exp(-mu * t1) * d)
    var_m = gamma_fn(t1, lam, mu) - gamma_fn(t0, lam, mu)
    return decay, np.maximum(var_g, 0.0), cov, np.maximum(var_m, 0.0)


def ou_variance(t, lam: float, mu: float):
    """``Var X(t) = int_0^t e^{-2 mu (t-s)} h(s) ds`` for ``X(0) = 0``."""
    return ou_transition(lam, mu, 0.0, t)[1]


def _ou_values(lam, mu, g, gen, size):
    decay, vg, cov, vm = ou_transition(lam, mu, g[:-1], g[1:])
    z = gen.standard_normal((size, 2, decay.size))
    l11 = np.sqrt(vm)
    l21 = np.divide(cov, l11, out=np.zeros_like(cov), where=l11 > 0)
    l22 = np.sqrt(np.maximum(vg - l21 ** 2, 0.0))
    dm = l11 * z[:, 0]
    innov = l21 * z[:, 0] + l22 * z[:, 1]
    x = np.empty((size, g.size))
    x[:, 0] = 0.0
    for k in range(decay.size):
        x[:, k + 1] = decay[k] * x[:, k] + innov[:, k]
    m = np.concatenate([np.zeros((size, 1)), np.cumsum(dm, axis=1)], axis=1)
    return x, m


def _check_rates(lam, mu):
    if not (lam > 0 and mu > 0):
        raise ParameterError("lam and mu must be positive")


def sample_ou_limit(lam: float, mu: float, grid, rng, paired: bool = False):
    """Exact Gaussian recursion for the Ornstein-Uhlenbeck limit started at 0.

    With ``paired=True`` also returns the driving martingale ``M = int sqrt(h) dB``
    (a version of ``B o gamma``) on the same grid, built from the same normals
    that :func:`sample_time_changed_bm` would use for this stream.
    """
    _check_rates(lam, mu)
    g = _grid(grid)
    x, m = _ou_values(lam, mu, g, _as_rng(rng), 1)
    X = linear_path(g, x[0])
    if not paired:
        return X
    return X, linear_path(g, m[0])


def ou_values(lam: float, mu: float, grid, rng, size: int, paired: bool = False):
    """``size`` independent OU paths at the grid points (rows), optionally with ``M``."""
    _check_rates(lam, mu)
    x, m = _ou_values(lam, mu, _grid(grid), _as_rng(rng), size)
    return (x, m) if paired else x
