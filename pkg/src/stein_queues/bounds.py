"""Auxiliary bounds: the Lambert-W bound on the maximum of Poisson variables,
the interpolation gap of jump processes, the Chebyshev bound on the
M/M/inf stopping time, and the Brownian interpolation gap in W_{eta,p}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, ParameterError, ResolutionError, UnsupportedRegimeError
from .paths import NormOrder, QuadratureSpec, grid_path, sobolev_norm
from .ppp import Estimate
from .rng import derive_seed, replicate, stream

_INV_E = math.exp(-1.0)


# ---------------------------------------------------------------- Lambert W
def _w_guess(x: np.ndarray) -> np.ndarray:
    w = np.log1p(np.maximum(x, -0.99))
    near = x < -0.25
    if np.any(near):
        p = np.sqrt(np.maximum(2.0 * (math.e * x[near] + 1.0), 0.0))
        w[near] = -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
    big = x > math.e
    if np.any(big):
        l1 = np.log(x[big])
        l2 = np.log(l1)
        w[big] = l1 - l2 + l2 / l1
    return w


def lambert_w0(x):
    """Principal branch of the Lambert W function by Halley iteration.

    Iterates on ``g(w) = w - x e^{-w}``, which avoids overflow for large ``x``.
    """
    xa = np.asarray(x, dtype=float)
    if np.any(np.isnan(xa)):
        raise DomainError("Lambert W of NaN")
    if np.any(xa < -_INV_E - 1e-15):
        raise DomainError("Lambert W0 is defined for x >= -1/e")
    flat = np.clip(xa.ravel(), -_INV_E, None)
    w = _w_guess(flat)
    active = np.isfinite(flat) & (flat > -_INV_E)
    for _ in range(60):
        if not np.any(active):
            break
        wa, xa_ = w[active], flat[active]
        ex = xa_ * np.exp(-wa)
        g = wa - ex
        g1 = 1.0 + ex
        g2 = -ex
        denom = 2.0 * g1 * g1 - g * g2
        step = np.where(denom != 0, 2.0 * g * g1 / np.where(denom != 0, denom, 1.0), 0.0)
        w[active] = wa - step
        done = np.abs(step) <= 4e-16 * (1.0 + np.abs(wa))
        idx = np.nonzero(active)[0]
        active[idx[done]] = False
    w[flat <= -_INV_E] = -1.0
    w[np.isposinf(flat)] = np.inf
    out = w.reshape(xa.shape)
    return out if out.ndim else float(out)


# ------------------------------------------------------------ max of Poisson
@dataclass(frozen=True)
class MaxPoissonBound:
    n: int
    nu: float
    a: float
    value: float  # (log n - nu) / W(a), the constant-free bound
    asymptotic: Optional[float]  # (log n - nu) / (log a - log log a) when stable
    denominator: Optional[float]
    threshold: float  # exp(e^{nu+1} + nu)
    in_asymptotic_regime: bool

    def __float__(self):
        return self.value


def max_poisson_bound(n: int, nu: float = 1.0) -> MaxPoissonBound:
    """Upper bound on ``E max_i X_i`` for ``n`` Poisson(``nu``) variables (no independence needed).

    Optimising the exponential-moment bound gives ``(log n - nu) / W(a)`` with
    ``a = (log n - nu) / (nu e)``.  The asymptotic form replaces ``W(a)`` by its
    lower bound ``log a - log log a`` (valid for ``a > e``); it is reported
    only when that denominator is at least 0.5.
    """
    if int(n) != n or n < 2:
        raise ParameterError("n must be an integer >= 2")
    if not nu > 0:
        raise ParameterError("nu must be positive")
    excess = math.log(n) - nu
    if excess <= 0:
        raise UnsupportedRegimeError("need log n > nu for the bound to apply")
    a = excess / (nu * math.e)
    value = excess / lambert_w0(a)
    threshold = math.exp(math.exp(nu + 1.0) + nu)
    asym, denom = None, None
    if a > math.e:
        denom = math.log(a) - math.log(math.log(a))
        if denom >= 0.5:
            asym = excess / denom
    return MaxPoissonBound(int(n), nu, a, value, asym, denom, threshold, n >= threshold)


def max_poisson_objective(u, n: int, nu: float = 1.0):
    """``nu + (log n + nu(e^u - u - 1)) / u``; its infimum over ``u > 0`` is the W-form."""
    u = np.asarray(u, float)
    return nu + (math.log(n) + nu * (np.expm1(u) - u)) / u


def max_poisson_mc(n: int, nu: float, M: int, seed: int, chunk: int = 500) -> Estimate:
    """Monte Carlo ``E max`` of ``n`` iid Poisson(``nu``) variables."""
    blocks = -(-M // chunk)
    parts = replicate(lambda g: g.poisson(nu, (chunk, n)).max(axis=1),
                      derive_seed(seed, "maxpois", n), blocks)
    vals = np.concatenate(parts)[:M].astype(float)
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(M)))


# ------------------------------------------------------- interpolation gap
@dataclass(frozen=True)
class JumpBoundParams:
    J: int
    alpha: float
    n: int
    T: float = 1.0

    def __post_init__(self):
        if int(self.J) != self.J or self.J < 1:
            raise ParameterError("J must be a positive integer")
        if not self.alpha > 0 or not self.T > 0:
            raise ParameterError("alpha and T must be positive")


def interpolation_gap_bound(p: JumpBoundParams) -> float:
    """``2 J log n / log log n``."""
    if p.n < 3:
        raise DomainError("need n >= 3 so that log log n > 0")
    ln = math.log(p.n)
    return 2.0 * p.J * ln / math.log(ln)


def interval_event_counts(jump_times, n: int, T: float) -> np.ndarray:
    """Number of jumps in each mesh interval ``[iT/n, (i+1)T/n)``."""
    idx = np.clip(np.floor(np.asarray(jump_times) * n / T).astype(int), 0, n - 1)
    return np.bincount(idx, minlength=n)


# ------------------------------------------------------------- Chebyshev
def chebyshev_tau_bound(lam: float, n: int, T: float) -> float:
    """``Var N / (lam n T)^2 = 1 / (lam n T)`` bounds ``P(N_{n lam}(T) >= 2 lam n T)``."""
    if not (lam > 0 and n > 0 and T > 0):
        raise ParameterError("arguments must be positive")
    return 1.0 / (lam * n * T)


def poisson_excess_probability(lam: float, n: int, T: float, M: int, seed: int) -> Estimate:
    """Monte Carlo ``P(N_{n lam}(T) >= 2 lam n T)``."""
    gen = stream(derive_seed(seed, "cheb", n), 0)
    hits = gen.poisson(lam * n * T, M) >= 2 * lam * n * T
    p = float(hits.mean())
    return Estimate(p, math.sqrt(max(p * (1 - p), 0.0) / M))


# ------------------------------------------------- Brownian interpolation
def brownian_interpolation_gap(eta: float, p: float, n: int, M: int, seed: int,
                               refinement: int = 64, T: float = 1.0,
                               quad: Optional[QuadratureSpec] = None) -> Estimate:
    """Monte Carlo ``E || pi_n B - B ||_{eta,p}``.

    ``B`` is sampled exactly on the ``refinement * n`` mesh and taken linear
    in between, so the norm of the difference is computed exactly.
    """
    if not 0 < eta < 0.5:
        raise ParameterError("eta must lie in (0, 1/2)")
    if int(n) != n or n < 1:
        raise ParameterError("n must be a positive integer")
    if refinement < 16:
        raise ResolutionError(f"refinement {refinement} < 16: the fine mesh must have m >= 16 n")
    order = NormOrder(eta, p)
    m = refinement * n
    fine = np.linspace(0.0, T, m + 1)
    coarse_idx = np.arange(0, m + 1, refinement)

    def one(gen):
        b = np.concatenate([[0.0], np.cumsum(gen.standard_normal(m) * math.sqrt(T / m))])
        interp = np.interp(fine, fine[coarse_idx], b[coarse_idx])
        return sobolev_norm(grid_path(T, interp - b), order, quad)

    vals = np.asarray(replicate(one, derive_seed(seed, "bgap", n, refinement), M))
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(M)) if M > 1 else math.inf)
