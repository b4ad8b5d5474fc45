"""Exact path representations on [0, T] and the norms used to compare them.

A :class:`Path` is an rcll function that is, on each segment
``[t_k, t_{k+1})``, of the form

    a_k + b_k s + q_k s**2 + c_k exp(-rate * s),   s = t - t_k,

with one exponential rate shared by the whole path.  Step paths, continuous
piecewise-linear paths, uniform-grid paths, the M/M/inf fluid limit and the
image of the inverse integral transform all fit this family, so sums,
running integrals and sup-distances stay exact.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import integrate, optimize

from .errors import (
    DivergenceError,
    ParameterError,
    ShapeError,
    UnsupportedError,
)

log = logging.getLogger(__name__)

_GL_NODES, _GL_WEIGHTS = leggauss(16)


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Path:
    knots: np.ndarray
    a: np.ndarray
    b: np.ndarray
    q: np.ndarray
    c: np.ndarray
    end: float
    rate: float = 0.0
    grid: bool = False

    def __post_init__(self):
        knots = _frozen(self.knots)
        if knots.ndim != 1 or knots.size < 2:
            raise ShapeError("a path needs at least two knots")
        if knots[0] != 0.0:
            raise ParameterError("first knot must be 0")
        if np.any(np.diff(knots) <= 0):
            raise ParameterError("knots must be strictly increasing")
        k = knots.size - 1
        coeffs = {}
        for name in ("a", "b", "q", "c"):
            arr = _frozen(np.broadcast_to(np.asarray(getattr(self, name), float), (k,)))
            coeffs[name] = arr
        if self.rate < 0:
            raise ParameterError("exponential rate must be non-negative")
        c = coeffs["c"]
        a = coeffs["a"]
        if self.rate == 0.0 and np.any(c != 0):
            a = _frozen(a + c)
            c = _frozen(np.zeros(k))
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", coeffs["b"])
        object.__setattr__(self, "q", coeffs["q"])
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "end", float(self.end))
        object.__setattr__(self, "rate", float(self.rate) if np.any(c != 0) else 0.0)

    # ------------------------------------------------------------------ shape
    @property
    def horizon(self) -> float:
        return float(self.knots[-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.knots)

    @property
    def has_exp(self) -> bool:
        return bool(np.any(self.c != 0))

    @property
    def is_polynomial(self) -> bool:
        return not self.has_exp

    @property
    def is_affine(self) -> bool:
        return self.is_polynomial and not np.any(self.q != 0)

    @property
    def is_step(self) -> bool:
        return self.is_affine and not np.any(self.b != 0)

    @property
    def is_continuous(self) -> bool:
        jumps = self.right_values() - self.left_values()
        scale = 1.0 + np.max(np.abs(self.right_values()))
        return bool(np.all(np.abs(jumps) <= 1e-12 * scale))

    @property
    def kind(self) -> str:
        if self.is_step:
            return "step"
        if self.is_affine and self.is_continuous:
            return "grid" if self.grid else "linear"
        if self.is_affine:
            return "affine"
        return "piecewise"

    # -------------------------------------------------------------- evaluation
    def _segment_value(self, k, s):
        val = self.a[k] + s * (self.b[k] + s * self.q[k])
        if self.has_exp:
            val = val + self.c[k] * np.exp(-self.rate * s)
        return val

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(self.knots, t, side="right") - 1, 0, self.knots.size - 2)
        out = self._segment_value(k, t - self.knots[k])
        out = np.where(t >= self.horizon, self.end, out)
        return out if out.ndim else float(out)

    def left(self, t):
        """Left limits ``f(t-)``; equals ``f(0)`` at ``t = 0``."""
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(self.knots, t, side="left") - 1, 0, self.knots.size - 2)
        out = self._segment_value(k, t - self.knots[k])
        return out if out.ndim else float(out)

    def right_values(self) -> np.ndarray:
        """Values ``f(t_k)`` at every knot, including ``f(T)``."""
        return np.append(self.a + self.c, self.end)

    def left_values(self) -> np.ndarray:
        """Left limits ``f(t_k-)`` at every knot (``f(0)`` at the first)."""
        inner = self._segment_value(np.arange(self.knots.size - 1), self.widths)
        return np.concatenate([[self.a[0] + self.c[0]], inner])

    def jumps(self) -> np.ndarray:
        return self.right_values() - self.left_values()

    # ----------------------------------------------------------- re-expression
    def refine(self, new_knots: Iterable[float]) -> "Path":
        """Re-express on the union of the current knots and ``new_knots``."""
        extra = np.asarray(list(new_knots) if not isinstance(new_knots, np.ndarray) else new_knots, float)
        extra = extra[(extra > 0) & (extra < self.horizon)]
        union = np.union1d(self.knots, extra)
        if union.size == self.knots.size:
            return self
        k = np.clip(np.searchsorted(self.knots, union[:-1], side="right") - 1, 0, self.knots.size - 2)
        d = union[:-1] - self.knots[k]
        a = self.a[k] + d * (self.b[k] + d * self.q[k])
        b = self.b[k] + 2.0 * self.q[k] * d
        c = self.c[k] * np.exp(-self.rate * d) if self.has_exp else np.zeros_like(d)
        return Path(union, a, b, self.q[k], c, self.end, self.rate, grid=False)

    def _combine(self, other: "Path", wa: float, wb: float) -> "Path":
        _check_horizons(self, other)
        if self.has_exp and other.has_exp and not math.isclose(self.rate, other.rate, rel_tol=1e-14):
            raise ShapeError("cannot combine paths with different exponential rates")
        rate = self.rate if self.has_exp else other.rate
        union = np.union1d(self.knots, other.knots)
        f, g = self.refine(union), other.refine(union)
        same_grid = self.grid and other.grid and f.knots.size == self.knots.size
        return Path(union, wa * f.a + wb * g.a, wa * f.b + wb * g.b, wa * f.q + wb * g.q,
                    wa * f.c + wb * g.c, wa * f.end + wb * g.end, rate, grid=same_grid)

    def __add__(self, other):
        if isinstance(other, Path):
            return self._combine(other, 1.0, 1.0)
        other = float(other)
        return Path(self.knots, self.a + other, self.b, self.q, self.c, self.end + other,
                    self.rate, self.grid)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Path):
            return self._combine(other, 1.0, -1.0)
        return self + (-float(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, k):
        k = float(k)
        return Path(self.knots, k * self.a, k * self.b, k * self.q, k * self.c, k * self.end,
                    self.rate, self.grid)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    # -------------------------------------------------------------- integrals
    def _segment_integral(self, k, s):
        """``int_0^s`` of segment ``k`` (vectorised over ``k`` and ``s``)."""
        val = s * (self.a[k] + s * (self.b[k] / 2.0 + s * self.q[k] / 3.0))
        if self.has_exp:
            val = val + self.c[k] * -np.expm1(-self.rate * s) / self.rate
        return val

    def cumulative_at_knots(self) -> np.ndarray:
        pieces = self._segment_integral(np.arange(self.knots.size - 1), self.widths)
        return np.concatenate([[0.0], np.cumsum(pieces)])

    def integral(self, t=None):
        """``int_0^t f`` (whole horizon when ``t`` is None), exact."""
        cum = self.cumulative_at_knots()
        if t is None:
            return float(cum[-1])
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(self.knots, t, side="right") - 1, 0, self.knots.size - 2)
        s = np.minimum(t, self.horizon) - self.knots[k]
        out = cum[k] + self._segment_integral(k, s)
        return out if out.ndim else float(out)

    def reversed(self) -> "Path":
        """``t -> f(T - t)`` made right-continuous; polynomial paths only."""
        if self.has_exp:
            raise UnsupportedError("reversal of exponential segments is not offered")
        T = self.horizon
        knots = T - self.knots[::-1]
        h = self.widths[::-1]
        a0, b0, q0 = self.a[::-1], self.b[::-1], self.q[::-1]
        # old segment value at s_old = h - s
        a = a0 + h * (b0 + h * q0)
        b = -(b0 + 2.0 * h * q0)
        return Path(knots, a, b, q0, 0.0, self.a[0], 0.0, self.grid)

    # ---------------------------------------------------------- serialisation
    def to_json(self) -> dict:
        kind = self.kind
        T = self.horizon
        if kind == "step":
            right = self.right_values()
            jumps = self.jumps()
            idx = np.nonzero(jumps[1:] != 0)[0] + 1
            return {"type": "step", "horizon": T, "initial": float(right[0]),
                    "jumps": self.knots[idx].tolist(), "values": right[idx].tolist()}
        if kind == "grid":
            return {"type": "grid", "horizon": T, "values": self.right_values().tolist()}
        if kind == "linear":
            return {"type": "linear", "horizon": T, "knots": self.knots.tolist(),
                    "values": self.right_values().tolist()}
        return {"type": "piecewise", "horizon": T, "knots": self.knots.tolist(),
                "rate": self.rate,
                "coefficients": np.stack([self.a, self.b, self.q, self.c], axis=1).tolist(),
                "end": self.end}

    @classmethod
    def from_json(cls, data) -> "Path":
        if isinstance(data, str):
            data = json.loads(data)
        kind = data["type"]
        if kind == "step":
            return step_path(data["horizon"], data["initial"], data["jumps"], data["values"])
        if kind == "grid":
            return grid_path(data["horizon"], data["values"])
        if kind == "linear":
            path = linear_path(data["knots"], data["values"])
            if not math.isclose(path.horizon, data["horizon"]):
                raise ShapeError("knots do not end at the declared horizon")
            return path
        if kind == "piecewise":
            coef = np.asarray(data["coefficients"], float).reshape(-1, 4)
            return cls(data["knots"], coef[:, 0], coef[:, 1], coef[:, 2], coef[:, 3],
                       data["end"], data["rate"])
        raise ParameterError(f"unknown path type {kind!r}")

    def __repr__(self):
        return f"Path(kind={self.kind}, horizon={self.horizon:g}, segments={self.knots.size - 1})"


# ------------------------------------------------------------------ builders
def step_path(horizon: float, initial: float, jump_times: Sequence[float],
              values: Sequence[float]) -> Path:
    """Right-continuous step path: ``initial`` then ``values[i]`` from ``jump_times[i]``.

    Simultaneous jumps are merged (the last value wins).
    """
    if horizon <= 0:
        raise ParameterError("horizon must be positive")
    times = np.asarray(jump_times, float)
    vals = np.asarray(values, float)
    if times.shape != vals.shape:
        raise ShapeError("jump_times and values differ in length")
    if times.size and (np.any(np.diff(times) < 0) or times[0] < 0 or times[-1] > horizon):
        raise ParameterError("jump times must be sorted inside [0, horizon]")
    if times.size and times[0] == 0.0:
        keep0 = np.nonzero(times == 0.0)[0][-1]
        initial = vals[keep0]
        times, vals = times[keep0 + 1:], vals[keep0 + 1:]
    if times.size:
        last = np.append(times[1:] != times[:-1], True)
        times, vals = times[last], vals[last]
    end = vals[-1] if times.size else initial
    inner = times < horizon
    knots = np.concatenate([[0.0], times[inner], [horizon]])
    a = np.concatenate([[initial], vals[inner]])
    return Path(knots, a, 0.0, 0.0, 0.0, end)


def linear_path(knots: Sequence[float], values: Sequence[float]) -> Path:
    knots = np.asarray(knots, float)
    values = np.asarray(values, float)
    if knots.shape != values.shape:
        raise ShapeError("knots and values differ in length")
    slopes = np.diff(values) / np.diff(knots)
    return Path(knots, values[:-1], slopes, 0.0, 0.0, values[-1])


def grid_path(horizon: float, values: Sequence[float]) -> Path:
    """Continuous piecewise-linear path through ``values`` on a uniform mesh."""
    values = np.asarray(values, float)
    if values.size < 2:
        raise ParameterError("grid paths need at least 2 mesh values")
    knots = np.linspace(0.0, horizon, values.size)
    slopes = np.diff(values) / np.diff(knots)
    return Path(knots, values[:-1], slopes, 0.0, 0.0, values[-1], grid=True)


def constant_path(horizon: float, value: float = 0.0) -> Path:
    return Path([0.0, horizon], value, 0.0, 0.0, 0.0, value)


def exp_path(horizon: float, const: float, coef: float, rate: float) -> Path:
    """``t -> const + coef * exp(-rate t)`` on ``[0, horizon]``."""
    return Path([0.0, horizon], const, 0.0, 0.0, coef,
                const + coef * math.exp(-rate * horizon), rate)


def _check_horizons(f: Path, g: Path):
    if not math.isclose(f.horizon, g.horizon, rel_tol=1e-12, abs_tol=0.0):
        raise ShapeError(f"horizons differ: {f.horizon} vs {g.horizon}")


# ------------------------------------------------------------ interpolation
def interpolate_affine(f: Path, n: int, T: float | None = None) -> Path:
    """Affine interpolation of ``f`` on the mesh ``iT/n``."""
    if int(n) != n or n < 1:
        raise ParameterError("n must be a positive integer")
    if T is not None and not math.isclose(T, f.horizon):
        raise ShapeError("interpolation horizon differs from the path horizon")
    T = f.horizon
    mesh = np.arange(n + 1) * (T / n)
    mesh[-1] = T
    return grid_path(T, f(mesh))


# ----------------------------------------------------------- sup distances
def _sup_abs(d: Path) -> float:
    """Exact ``sup |d|`` using one-sided knot limits and interior extrema."""
    best = max(np.max(np.abs(d.right_values())), np.max(np.abs(d.left_values())))
    h = d.widths
    k = np.arange(h.size)
    cand_k, cand_s = [], []
    quad_only = (d.q != 0) & (d.c == 0)
    if np.any(quad_only):
        kk = k[quad_only]
        s = -d.b[kk] / (2.0 * d.q[kk])
        ok = (s > 0) & (s < h[kk])
        cand_k.append(kk[ok]); cand_s.append(s[ok])
    exp_only = (d.q == 0) & (d.c != 0) & (d.b != 0)
    if np.any(exp_only):
        kk = k[exp_only]
        ratio = d.b[kk] / (d.c[kk] * d.rate)
        with np.errstate(invalid="ignore", divide="ignore"):
            s = np.where(ratio > 0, -np.log(np.where(ratio > 0, ratio, 1.0)) / d.rate, -1.0)
        ok = (s > 0) & (s < h[kk])
        cand_k.append(kk[ok]); cand_s.append(s[ok])
    for kk in k[(d.q != 0) & (d.c != 0)]:
        for s in _mixed_critical_points(d.b[kk], d.q[kk], d.c[kk], d.rate, h[kk]):
            cand_k.append(np.array([kk])); cand_s.append(np.array([s]))
    if cand_k:
        kk = np.concatenate(cand_k)
        ss = np.concatenate(cand_s)
        if kk.size:
            best = max(best, float(np.max(np.abs(d._segment_value(kk, ss)))))
    return float(best)


def _mixed_critical_points(b, q, c, rate, h):
    """Roots in (0, h) of ``b + 2 q s - c rate exp(-rate s)``."""
    deriv = lambda s: b + 2 * q * s - c * rate * math.exp(-rate * s)
    cuts = [0.0, h]
    ratio = -2 * q / (c * rate * rate)
    if ratio > 0:
        s2 = -math.log(ratio) / rate
        if 0 < s2 < h:
            cuts = [0.0, s2, h]
    roots = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        flo, fhi = deriv(lo), deriv(hi)
        if flo == 0:
            roots.append(lo)
        elif flo * fhi < 0:
            roots.append(optimize.brentq(deriv, lo, hi, xtol=1e-15, rtol=1e-15))
    return roots


def sup_distance(f: Path, g: Path) -> float:
    """Exact uniform distance ``sup_t |f(t) - g(t)|``."""
    _check_horizons(f, g)
    return _sup_abs(f - g)


def sup_norm(f: Path) -> float:
    return _sup_abs(f)


# ------------------------------------------------------------ Hölder norm
def holder_norm(f: Path, eta: float) -> float:
    """Hölder seminorm ``sup |f(t)-f(s)| / |t-s|^eta`` of a continuous piecewise-linear path."""
    if not 0 < eta <= 1:
        raise ParameterError("eta must lie in (0, 1]")
    if not f.is_affine:
        raise UnsupportedError("Hölder norm is offered for piecewise-linear paths only")
    if not f.is_continuous:
        raise UnsupportedError("paths with jumps have infinite Hölder norm")
    t = f.knots
    v = f.right_values()
    slope = f.b
    h = f.widths
    best = float(np.max(np.abs(slope) * h ** (1.0 - eta)))
    K = h.size
    chunk = max(1, 4_000_000 // (K + 1))
    for start in range(0, K + 1, chunk):
        p = np.arange(start, min(K + 1, start + chunk))[:, None]
        # knot pairs
        dt = np.abs(t[None, :] - t[p])
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(dt > 0, np.abs(v[None, :] - v[p]) / dt ** eta, 0.0)
        best = max(best, float(np.max(r)))
        if eta >= 1:
            continue
        # knot p against the interior of segment k: f(s) - f(t_p) = n0 + b u, u = s - t_p,
        # and |n0 + b u| / |u|^eta is stationary at the same signed u on either side
        kk = np.arange(K)[None, :]
        tk, bk = t[kk], slope[kk]
        n0 = v[kk] - v[p] - bk * (tk - t[p])
        with np.errstate(divide="ignore", invalid="ignore"):
            u_star = eta * n0 / (bk * (1.0 - eta))
            s = t[p] + u_star
            ok = (bk != 0) & (s > tk) & (s < t[kk + 1]) & (u_star != 0)
            safe_u = np.where(ok, np.abs(u_star), 1.0)
            val = np.where(ok, np.abs(n0 + bk * u_star) / safe_u ** eta, 0.0)
        best = max(best, float(np.max(val)))
    return best


# ------------------------------------------------------ fractional Sobolev
@dataclass(frozen=True)
class NormOrder:
    eta: float
    p: float

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ParameterError("eta must lie in (0, 1]")
        if self.p < 1:
            raise ParameterError("p must be >= 1")

    @property
    def embedding_index(self) -> float:
        """``eta - 1/p``: positive means embedding into Hölder(eta - 1/p)."""
        return self.eta - 1.0 / self.p

    def embeds_into(self, other: "NormOrder") -> bool:
        """True when ``W(self)`` is contained in ``W(other)``."""
        return self.eta >= other.eta and self.embedding_index >= other.embedding_index


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-8
    rel_tol: float = 1e-10
    limit: int = 200
    method: str = "auto"  # auto | exact | lag


def norm_is_finite(f: Path, order: NormOrder) -> bool:
    """Whether ``||f||_{eta,p}`` is finite for this path class."""
    if not f.is_continuous:
        return order.eta * order.p < 1
    return True


def _lp_part(f: Path, p: float) -> float:
    if f.is_affine:
        v0 = f.a
        v1 = f.a + f.b * f.widths
        return float(np.sum(_abs_pow_linear(v0, v1, f.widths, p)))
    total = 0.0
    for k in range(f.widths.size):
        h = f.widths[k]
        total += integrate.quad(lambda s: abs(f._segment_value(k, s)) ** p, 0, h,
                                epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    return total


def _abs_pow_linear(v0, v1, length, p):
    """``int |linear from v0 to v1|^p`` over intervals of the given lengths."""
    v0 = np.asarray(v0, float); v1 = np.asarray(v1, float); length = np.asarray(length, float)
    a0, a1 = np.abs(v0), np.abs(v1)
    cross = v0 * v1 < 0
    out = np.empty(np.broadcast(v0, v1, length).shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(cross, a0 / (a0 + a1), 0.0)
        split = length * (r * a0 ** p + (1 - r) * a1 ** p) / (p + 1)
        diff = a1 - a0
        close = np.abs(diff) <= 1e-9 * np.maximum(a1, a0)
        same = np.where(close,
                        length * _close_pow_mean(a0, a1, p),
                        length * (a1 ** (p + 1) - a0 ** (p + 1)) / ((p + 1) * np.where(close, 1.0, diff)))
    out = np.where(cross, split, same)
    return out


def _close_pow_mean(a0, a1, p):
    m = 0.5 * (a0 + a1)
    d = 0.5 * (a1 - a0)
    return m ** p + p * (p - 1) / 6.0 * m ** np.maximum(p - 2, 0) * d * d


def _step_seminorm(f: Path, order: NormOrder) -> float:
    """Closed form of the double integral for a step path (requires eta p < 1)."""
    gam = 1.0 + order.p * order.eta
    t = f.knots
    v = f.a
    K = v.size

    def G(u):
        return np.power(u, 2.0 - gam) / ((1.0 - gam) * (2.0 - gam))

    total = 0.0
    chunk = max(1, 2_000_000 // K)
    for start in range(0, K, chunk):
        i = np.arange(start, min(K, start + chunk))[:, None]
        j = np.arange(K)[None, :]
        mask = j > i
        dv = np.abs(v[j] - v[i]) ** order.p
        with np.errstate(invalid="ignore"):
            R = (G(t[j + 1] - t[i]) - G(np.maximum(t[j + 1] - t[i + 1], 0))
                 - G(np.maximum(t[j] - t[i], 0)) + G(np.maximum(t[j] - t[i + 1], 0)))
        total += float(np.sum(np.where(mask & (dv > 0), dv * R, 0.0)))
    return 2.0 * total


def _lag_profile(f: Path, u: float, p: float) -> float:
    """``D_p(u) = int_0^{T-u} |f(s+u) - f(s)|^p ds``."""
    T = f.horizon
    if u >= T:
        return 0.0
    pts = np.union1d(f.knots, f.knots - u)
    pts = pts[(pts >= 0) & (pts <= T - u)]
    pts = np.union1d(pts, [0.0, T - u])
    pts = pts[np.append(np.diff(pts) > 1e-13 * T, True)]
    pts[-1] = T - u
    lo, hi = pts[:-1], pts[1:]
    if f.is_affine:
        # the increment is affine on each piece; sampling strictly inside avoids
        # landing on the wrong side of a jump through rounding
        w = hi - lo
        x1, x2 = lo + w / 3.0, lo + 2.0 * w / 3.0
        d1 = f(x1 + u) - f(x1)
        d2 = f(x2 + u) - f(x2)
        v0 = 2.0 * d1 - d2
        v1 = 2.0 * d2 - d1
        return float(np.sum(_abs_pow_linear(v0, v1, w, p)))
    mid = 0.5 * (lo + hi)[:, None]
    half = 0.5 * (hi - lo)[:, None]
    s = mid + half * _GL_NODES[None, :]
    vals = np.abs(f(s + u) - f(s)) ** p
    return float(np.sum(half * _GL_WEIGHTS[None, :] * vals))


def _lag_seminorm(f: Path, order: NormOrder, quad: QuadratureSpec) -> float:
    """``2 int_0^T u^{-1-p eta} D_p(u) du`` by adaptive Gauss-Kronrod over lag pieces."""
    p, eta = order.p, order.eta
    gam = 1.0 + p * eta
    T = f.horizon
    diffs = np.abs(f.knots[:, None] - f.knots[None, :]).ravel()
    diffs = np.unique(diffs[(diffs > 0) & (diffs < T)])
    if diffs.size > 400:
        diffs = np.linspace(0, T, 401)[1:-1]
    cuts = np.concatenate([[0.0], diffs, [T]])
    m = p if f.is_continuous else 1.0
    first = cuts[1]

    def scaled(u):
        return _lag_profile(f, u, p) / u ** m if u > 0 else _lag_limit(f, p, m)

    total, err = integrate.quad(scaled, 0.0, first, weight="alg", wvar=(m - gam, 0.0),
                                epsabs=quad.abs_tol / 10, epsrel=quad.rel_tol, limit=quad.limit)
    for lo, hi in zip(cuts[1:-1], cuts[2:]):
        val, e = integrate.quad(lambda u: u ** -gam * _lag_profile(f, u, p), lo, hi,
                                epsabs=quad.abs_tol / max(1, cuts.size), epsrel=quad.rel_tol,
                                limit=quad.limit)
        total += val
        err += e
    return 2.0 * total


def _lag_limit(f: Path, p: float, m: float) -> float:
    if m == 1.0:
        return float(np.sum(np.abs(f.jumps()[1:-1]) ** p))
    # continuous: D_p(u)/u^p -> int |f'|^p
    return _derivative_lp(f, p)


def _derivative_lp(f: Path, p: float) -> float:
    if f.is_affine:
        return float(np.sum(np.abs(f.b) ** p * f.widths))
    total = 0.0
    for k in range(f.widths.size):
        d = lambda s: abs(f.b[k] + 2 * f.q[k] * s - f.c[k] * f.rate * math.exp(-f.rate * s)) ** p
        total += integrate.quad(d, 0, f.widths[k], epsabs=1e-13, epsrel=1e-12)[0]
    return total


def _uniform_grid_values(f: Path):
    h = f.widths
    if not (f.is_affine and f.is_continuous):
        return None
    # linspace widths differ by rounding, relative to the horizon
    if f.grid or np.allclose(h, h[0], rtol=0, atol=1e-13 * f.horizon):
        return f.right_values(), f.horizon / h.size
    return None


def _grid_seminorm_p2(values: np.ndarray, delta: float, eta: float) -> float:
    """Exact ``int int |g(t)-g(s)|^2/|t-s|^{1+2 eta}`` for a piecewise-linear uniform-grid g.

    The lag profile ``D(h)`` is a cubic polynomial on every ``[r delta, (r+1) delta]``;
    it is sampled exactly at thirds of the mesh (autocorrelations of the refined
    nodal values) and integrated against ``h^{-1-2 eta}`` exactly per piece.
    """
    gam = 1.0 + 2.0 * eta
    m = values.size - 1
    fine = np.empty(3 * m + 1)
    fine[0::3] = values
    fine[1::3] = values[:-1] + (values[1:] - values[:-1]) / 3.0
    fine[2::3] = values[:-1] + 2.0 * (values[1:] - values[:-1]) / 3.0
    g = fine - fine.mean()
    N = g.size
    d_fine = delta / 3.0
    D = _lag_profile_grid(g, d_fine)  # D[L] for L = 0..N-1
    # cubic per coarse lag interval from samples at thirds
    theta = np.array([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])
    V = np.vander(theta, 4, increasing=True)
    samples = D[3 * np.arange(m)[:, None] + np.arange(4)[None, :]]  # (m, 4)
    coef = np.linalg.solve(V, samples.T).T  # (m, 4) in powers of theta
    total = 0.0
    # r = 0: P(theta) = c2 theta^2 + c3 theta^3 (D vanishes to second order)
    c = coef[0]
    total += delta ** (1.0 - gam) * (c[2] / (3.0 - gam) + c[3] / (4.0 - gam))
    if m > 1:
        r = np.arange(1, m)[:, None]
        th = 0.5 * (_GL_NODES + 1.0)[None, :]
        w = 0.5 * _GL_WEIGHTS[None, :]
        poly = (coef[1:, 0:1] + th * (coef[1:, 1:2] + th * (coef[1:, 2:3] + th * coef[1:, 3:4])))
        total += delta ** (1.0 - gam) * float(np.sum(w * (r + th) ** -gam * poly))
    return 2.0 * total


def _lag_profile_grid(g: np.ndarray, step: float) -> np.ndarray:
    """``D(L step)`` for every integer lag of a piecewise-linear nodal sequence."""
    N = g.size
    D = np.zeros(N)
    direct = min(N - 1, 96)
    for L in range(1, direct + 1):
        d = g[L:] - g[:-L]
        D[L] = step / 3.0 * np.sum(d[:-1] ** 2 + d[:-1] * d[1:] + d[1:] ** 2)
    if direct >= N - 1:
        return D
    size = 1 << int(np.ceil(np.log2(2 * N)))
    F = np.fft.rfft(g, size)
    R = np.fft.irfft(F * np.conj(F), size)[:N]  # R[L] = sum_k g_k g_{k+L}
    sq = np.concatenate([[0.0], np.cumsum(g * g)])
    pr = np.concatenate([[0.0], np.cumsum(g[:-1] * g[1:])])
    L = np.arange(direct + 1, N)
    full = (sq[N] - sq[L]) + sq[N - L] - 2.0 * R[L]
    d_first = g[L] - g[0]
    d_last = g[N - 1] - g[N - 1 - L]
    A = full - d_last ** 2
    B = full - d_first ** 2
    Rm1 = R[L - 1] - g[0] * g[L - 1] - g[N - L] * g[N - 1]
    Rp1 = np.where(L + 1 < N, R[np.minimum(L + 1, N - 1)], 0.0)
    C = (pr[N - 1] - pr[L]) + pr[N - 1 - L] - Rm1 - Rp1
    D[L] = step / 3.0 * (A + B + C)
    D[N - 1] = 0.0
    return D


def sobolev_norm(f: Path, order: NormOrder, quad: QuadratureSpec | None = None) -> float:
    """Fractional Sobolev norm ``||f||_{eta,p}``.

    Raises :class:`DivergenceError` when the double integral is infinite
    (paths with jumps need ``eta * p < 1``; ``eta = 1`` needs continuity).
    """
    quad = quad or QuadratureSpec()
    p, eta = order.p, order.eta
    lp = _lp_part(f, p)
    continuous = f.is_continuous
    if not continuous and eta * p >= 1:
        raise DivergenceError(
            f"path has jumps: W_{{eta,p}} norm diverges for eta*p = {eta * p:g} >= 1")
    if eta == 1.0:
        return (lp + _derivative_lp(f, p)) ** (1.0 / p)
    if f.is_step and quad.method in ("auto", "exact"):
        semi = _step_seminorm(f, order)
    elif p == 2 and quad.method in ("auto", "exact") and _uniform_grid_values(f) is not None:
        values, delta = _uniform_grid_values(f)
        semi = _grid_seminorm_p2(values, delta, eta)
    else:
        semi = _lag_seminorm(f, order, quad)
    return (lp + semi) ** (1.0 / p)


# ---------------------------------------------------------- Skorohod bound
def _compose_affine(g: Path, knots: np.ndarray, images: np.ndarray) -> Path:
    """``g o phi`` for the piecewise-linear homeomorphism ``phi(knots) = images``."""
    T = g.horizon
    inv = np.interp(g.knots, images, knots)
    union = np.union1d(knots, inv)
    union = union[(union >= 0) & (union <= T)]
    phi = np.interp(union, knots, images)
    right = g(phi)
    left = g.left(phi)
    slope = (left[1:] - right[:-1]) / np.diff(union)
    return Path(union, right[:-1], slope, 0.0, 0.0, g(T))


def skorohod_distance_upper(f: Path, g: Path, search_depth: int = 8,
                            sweeps: int = 4) -> float:
    """Upper bound on the Skorohod distance between ``f`` and ``g``.

    Candidates are the identity time change and piecewise-linear time changes
    with at most ``search_depth`` interior knots, seeded by matching the
    largest jumps and refined by coordinate descent.  The result never exceeds
    ``sup_distance(f, g)``.
    """
    _check_horizons(f, g)
    best = sup_distance(f, g)
    if best == 0.0 or search_depth < 1 or not (f.is_affine and g.is_affine):
        return best
    T = f.horizon

    def objective(knots, images):
        comp = _compose_affine(g, knots, images)
        return max(float(np.max(np.abs(knots - images))), sup_distance(f, comp))

    jf, jg = f.jumps()[1:], g.jumps()[1:]
    tf = f.knots[1:][np.abs(jf) > 0]
    tg = g.knots[1:][np.abs(jg) > 0]
    sf = np.abs(jf[np.abs(jf) > 0])
    sg = np.abs(jg[np.abs(jg) > 0])
    m = min(tf.size, tg.size, search_depth)
    if m == 0:
        return best
    keep_f = np.sort(tf[np.argsort(-sf, kind="stable")[:m]])
    keep_g = np.sort(tg[np.argsort(-sg, kind="stable")[:m]])
    ok = (keep_f < T) & (keep_g < T) & (keep_f > 0) & (keep_g > 0)
    keep_f, keep_g = keep_f[ok], keep_g[ok]
    knots = np.concatenate([[0.0], keep_f, [T]])
    images = np.concatenate([[0.0], keep_g, [T]])
    if np.any(np.diff(images) <= 0) or np.any(np.diff(knots) <= 0):
        return best
    value = objective(knots, images)
    for _ in range(sweeps):
        improved = False
        for i in range(1, knots.size - 1):
            lo, hi = images[i - 1], images[i + 1]
            span = hi - lo
            if span <= 0:
                continue

            def obj_i(x, i=i):
                trial = images.copy()
                trial[i] = x
                return objective(knots, trial)

            res = optimize.minimize_scalar(obj_i, bounds=(lo + 1e-12 * span, hi - 1e-12 * span),
                                           method="bounded", options={"xatol": 1e-12 * T})
            if res.fun < value - 1e-15:
                images[i] = res.x
                value = float(res.fun)
                improved = True
        if not improved:
            break
    return min(best, value)


# ------------------------------------------------- Riemann-Liouville integrals
def _rl_values(f: Path, alpha: float, x: np.ndarray, side: str) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, float))
    T = f.horizon
    out = np.zeros_like(x)
    gamma_alpha = math.gamma(alpha)
    for idx, xv in enumerate(x):
        if side == "left":
            lo_t, hi_t = 0.0, min(xv, T)
        else:
            lo_t, hi_t = max(xv, 0.0), T
        if hi_t <= lo_t:
            continue
        ks = range(np.searchsorted(f.knots, lo_t, side="right") - 1,
                   np.searchsorted(f.knots, hi_t, side="left"))
        total = 0.0
        for k in ks:
            t0 = max(f.knots[k], lo_t)
            t1 = min(f.knots[k + 1], hi_t)
            if t1 <= t0:
                continue
            total += _rl_segment(f, k, alpha, xv, t0, t1, side)
        out[idx] = total / gamma_alpha
    return out


def _rl_segment(f: Path, k: int, alpha: float, x: float, t0: float, t1: float, side: str) -> float:
    tk = f.knots[k]
    a, b, q, c = f.a[k], f.b[k], f.q[k], f.c[k]
    if side == "left":
        # w = x - t, s = t - tk = (x - tk) - w
        D = x - tk
        e = (a + b * D + q * D * D, -(b + 2 * q * D), q)
        w_lo, w_hi = x - t1, x - t0
    else:
        # w = t - x, s = (x - tk) + w
        D = x - tk
        e = (a + b * D + q * D * D, b + 2 * q * D, q)
        w_lo, w_hi = t0 - x, t1 - x
    total = 0.0
    for j, ej in enumerate(e):
        if ej != 0.0:
            total += ej * (w_hi ** (alpha + j) - w_lo ** (alpha + j)) / (alpha + j)
    if c != 0.0:
        rate = f.rate
        if side == "left":
            g = lambda t: c * math.exp(-rate * (t - tk))
            total += integrate.quad(g, t0, t1, weight="alg", wvar=(0.0, alpha - 1.0),
                                    epsabs=1e-14, epsrel=1e-12)[0] if t1 == x else \
                integrate.quad(lambda t: g(t) * (x - t) ** (alpha - 1.0), t0, t1,
                               epsabs=1e-14, epsrel=1e-12)[0]
        else:
            g = lambda t: c * math.exp(-rate * (t - tk))
            total += integrate.quad(g, t0, t1, weight="alg", wvar=(alpha - 1.0, 0.0),
                                    epsabs=1e-14, epsrel=1e-12)[0] if t0 == x else \
                integrate.quad(lambda t: g(t) * (t - x) ** (alpha - 1.0), t0, t1,
                               epsabs=1e-14, epsrel=1e-12)[0]
    return total


def frac_integral_values(f: Path, alpha: float, x, side: str = "left") -> np.ndarray:
    """Values of the left (``I^alpha_{0+}``) or right (``I^alpha_{T-}``) fractional integral."""
    if side not in ("left", "right"):
        raise ParameterError("side must be 'left' or 'right'")
    if alpha < 0:
        raise ParameterError("alpha must be non-negative")
    if alpha == 0:
        return np.atleast_1d(f(np.asarray(x, float)))
    return _rl_values(f, alpha, x, side)


def _output_grid(f: Path, grid):
    if grid is None:
        return np.linspace(0.0, f.horizon, 201)
    if isinstance(grid, int):
        return np.linspace(0.0, f.horizon, grid)
    return np.asarray(grid, float)


def frac_integral_left(f: Path, alpha: float, grid=None) -> Path:
    """``I^alpha_{0+} f`` sampled on ``grid`` (identity for ``alpha = 0``)."""
    if alpha < 0:
        raise ParameterError("alpha must be non-negative")
    if alpha == 0:
        return f
    x = _output_grid(f, grid)
    return linear_path(x, frac_integral_values(f, alpha, x, "left"))


def frac_integral_right(f: Path, alpha: float, grid=None) -> Path:
    """``I^alpha_{T-} f`` sampled on ``grid`` (identity for ``alpha = 0``)."""
    if alpha < 0:
        raise ParameterError("alpha must be non-negative")
    if alpha == 0:
        return f
    x = _output_grid(f, grid)
    return linear_path(x, frac_integral_values(f, alpha, x, "right"))


def primitive_indicator(horizon: float, s1: float, s2: float) -> Path:
    """``t -> int_0^t 1_[s1, s2]``, the primitive of an indicator."""
    if not 0 <= s1 < s2 <= horizon:
        raise ParameterError("need 0 <= s1 < s2 <= horizon")
    knots = np.unique([0.0, s1, s2, horizon])
    values = np.clip(knots - s1, 0.0, s2 - s1)
    return linear_path(knots, values)


def running_integral(f: Path) -> Path:
    """The path ``t -> int_0^t f``, exact for segments without a quadratic term."""
    if np.any(f.q != 0):
        raise UnsupportedError("running integrals of quadratic segments are not offered")
    cum = f.cumulative_at_knots()
    if not f.has_exp:
        return Path(f.knots, cum[:-1], f.a, f.b / 2.0, 0.0, cum[-1])
    k = f.c / f.rate
    return Path(f.knots, cum[:-1] + k, f.a, f.b / 2.0, -k, cum[-1], f.rate)
