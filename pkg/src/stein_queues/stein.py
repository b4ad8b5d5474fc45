"""Orthogonal kernel families, their Gram matrices and triple moments, and the
functional Stein bound

    |E F(B_xi) - E F(delta u)| <= 1/2 n^{-3/2 + eta} sum_{j,k,l} int |u_j u_k u_l| d(nu).

Two families are built in:

* M/M/1: ``u_i(s, r) = r (T(lam+mu))^{-1/2} 1[iT/n, (i+1)T/n)(s)`` against the
  ``+-1``-marked measure.
* M/M/inf (horizon 1): ``u_i = alpha_{i+1} - alpha_i + mu beta_i`` against the
  service-mark measure, where ``alpha_k(x, z) = 1{x <= k/n <= x + z}`` and
  ``beta_i`` is the length of ``[i/n, (i+1)/n]`` inside ``[x, x + z]``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gammainc

from .errors import ParameterError, PreconditionError, UnsupportedError
from .ppp import DeterministicKernel, MM1Marks, ServiceMarks

CLOSED_FORM = "closed-form"
QUADRATURE = "quadrature"
_METHODS = (CLOSED_FORM, QUADRATURE)


@dataclass(frozen=True)
class MM1Variant:
    lam: float
    mu: float
    T: float = 1.0


@dataclass(frozen=True)
class MMInftyVariant:
    lam: float
    mu: float
    T: float = 1.0


@dataclass(frozen=True, eq=False)
class OrthogonalFamily:
    """``n`` kernels evaluated together: ``kernel(t, m)`` has a trailing axis of length ``n``."""

    variant: object
    n: int
    measure: object
    kernel: DeterministicKernel

    @property
    def name(self) -> str:
        return "mm1" if isinstance(self.variant, MM1Variant) else "mminfty"

    @property
    def lam(self) -> float:
        return self.variant.lam

    @property
    def mu(self) -> float:
        return self.variant.mu

    @property
    def T(self) -> float:
        return self.variant.T

    def component(self, i: int) -> DeterministicKernel:
        if not 0 <= i < self.n:
            raise ParameterError(f"kernel index {i} outside 0..{self.n - 1}")
        k = self.kernel
        return DeterministicKernel(lambda t, m: k(t, m)[..., i], k.time_breaks, k.exit_breaks,
                                   name=f"u_{i}")

    def abs_sum_kernel(self, power: int = 1) -> DeterministicKernel:
        """``(sum_i |u_i|)^power`` with the breaks needed for exact cell quadrature."""
        k = self.kernel
        exits = tuple(k.exit_breaks) + tuple(self._kinks())
        return DeterministicKernel(lambda t, m: np.sum(np.abs(k(t, m)), axis=-1) ** power,
                                   k.time_breaks, exits, name=f"(sum|u|)^{power}")

    def _kinks(self):
        if self.name != "mminfty":
            return ()
        h = 1.0 / self.n
        if 1.0 / self.mu >= h:
            return ()
        return tuple(b * h + 1.0 / self.mu for b in range(self.n))


def _mm1_kernel(lam, mu, T, n):
    scale = 1.0 / math.sqrt(T * (lam + mu))
    width = T / n

    def func(s, r):
        idx = np.clip(np.floor(s / width).astype(int), 0, n - 1)
        inside = (s >= 0) & (s < T)
        out = np.zeros(np.shape(s) + (n,))
        np.put_along_axis(out, idx[..., None], (np.where(inside, r, 0.0) * scale)[..., None],
                          axis=-1)
        return out

    breaks = tuple(np.arange(1, n) * width)
    return DeterministicKernel(func, time_breaks=breaks, name="u_dagger")


def alpha_values(x, z, n):
    """``alpha_k(x, z)`` for ``k = 0..n`` on a trailing axis."""
    grid = np.arange(n + 1) / n
    x = np.asarray(x, float)[..., None]
    y = x + np.asarray(z, float)[..., None]
    return ((x <= grid) & (grid <= y)).astype(float)


def beta_values(x, z, n):
    """``beta_i(x, z) = |[i/n, (i+1)/n] & [x, x + z]|`` for ``i = 0..n-1``."""
    lo = np.arange(n) / n
    hi = np.arange(1, n + 1) / n
    x = np.asarray(x, float)[..., None]
    y = x + np.asarray(z, float)[..., None]
    return np.clip(np.minimum(y, hi) - np.maximum(x, lo), 0.0, None)


def _mminfty_kernel(lam, mu, n):
    def func(x, z):
        a = alpha_values(x, z, n)
        return a[..., 1:] - a[..., :-1] + mu * beta_values(x, z, n)

    breaks = tuple(np.arange(1, n) / n)
    return DeterministicKernel(func, time_breaks=breaks,
                               exit_breaks=tuple(np.arange(n + 1) / n), name="u_sharp")


def build_family(variant, params=None, n: Optional[int] = None) -> OrthogonalFamily:
    """Build the M/M/1 or M/M/inf kernel family.

    ``variant`` is ``"mm1"``/``"mminfty"`` (rates taken from ``params``, which
    needs ``lam``, ``mu``, ``T`` and optionally ``n``) or an explicit
    :class:`MM1Variant` / :class:`MMInftyVariant`.
    """
    if isinstance(variant, str):
        if params is None:
            raise ParameterError("params are required with a variant name")
        T = float(getattr(params, "T", 1.0))
        if variant == "mm1":
            variant = MM1Variant(params.lam, params.mu, T)
        elif variant == "mminfty":
            variant = MMInftyVariant(params.lam, params.mu, T)
        else:
            raise ParameterError(f"unknown family {variant!r}")
        n = n if n is not None else getattr(params, "n", None)
    if n is None or int(n) != n or n < 1:
        raise ParameterError("n must be a positive integer")
    n = int(n)
    if not (variant.lam > 0 and variant.mu > 0 and variant.T > 0):
        raise ParameterError("lam, mu and T must be positive")
    if isinstance(variant, MM1Variant):
        measure = MM1Marks(variant.T, lam=variant.lam, mu=variant.mu, n=n)
        return OrthogonalFamily(variant, n, measure, _mm1_kernel(variant.lam, variant.mu,
                                                                  variant.T, n))
    if isinstance(variant, MMInftyVariant):
        if variant.T != 1.0:
            raise UnsupportedError("the M/M/inf family is defined on the unit horizon; "
                                   "rescale time to T = 1")
        measure = ServiceMarks(1.0, lam=variant.lam, mu=variant.mu, n=n)
        return OrthogonalFamily(variant, n, measure, _mminfty_kernel(variant.lam, variant.mu, n))
    raise ParameterError(f"unknown family variant {variant!r}")


# ------------------------------------------------------------- closed forms
def _e(mu, n):
    return lambda k: math.exp(-mu * k / n)


def appendix_b_terms(i: int, j: int, family: OrthogonalFamily, as_printed: bool = False) -> dict:
    """Closed-form pieces of ``int u_i u_j`` for the M/M/inf family.

    For ``i < j`` returns ``I1..I4`` (the products of alpha-differences,
    beta_i against alpha_j-differences, beta_j against alpha_i-differences,
    and beta_i beta_j); for ``i == j`` returns ``J1..J6``.

    ``as_printed=True`` reproduces the literal ``I1 = lam n (...)``; the
    default carries the ``1/mu`` factor that the defining integral produces.
    """
    if family.name != "mminfty":
        raise UnsupportedError("these closed forms describe the M/M/inf family")
    n = family.n
    if not (0 <= i < n and 0 <= j < n):
        raise ParameterError(f"indices must lie in 0..{n - 1}")
    if i > j:
        raise ParameterError("closed forms are indexed with i <= j")
    lam, mu = family.lam, family.mu
    e = _e(mu, n)
    ln_mu = lam * n / mu
    if i < j:
        d = j - i
        A = 2 * e(d) - e(d - 1) - e(d + 1)
        minus_A = -2 * e(d) + e(d - 1) + e(d + 1)
        edge = lam * (e(j + 1) - e(j))
        I1 = (lam * n if as_printed else ln_mu) * A
        return {"I1": I1, "I2": ln_mu * A - edge, "I3": ln_mu * minus_A,
                "I4": ln_mu * minus_A + edge}
    return {
        "J1": ln_mu * (1 - e(i + 1)),
        "J2": ln_mu * (1 - e(i)),
        "J3": -2 * ln_mu * (e(1) - e(i + 1)),
        "J4": 2 * ln_mu * (1 - e(1)) - 2 * lam * e(i + 1),
        "J5": -2 * ln_mu * (1 - e(1)) - 2 * ln_mu * (e(i + 1) - e(i)),
        "J6": lam * (2 + 2 * e(i + 1) + 2 * n / mu * (e(i + 1) - e(i) + e(1) - 1)),
    }


def appendix_b_quadrature(i: int, j: int, family: OrthogonalFamily) -> dict:
    """The defining integrals of :func:`appendix_b_terms`, by cell quadrature."""
    if family.name != "mminfty":
        raise UnsupportedError("these integrals describe the M/M/inf family")
    n, mu, meas = family.n, family.mu, family.measure
    if i > j:
        raise ParameterError("integrals are indexed with i <= j")

    def integ(fn):
        k = DeterministicKernel(fn, tuple(np.arange(1, n) / n), tuple(np.arange(n + 1) / n))
        return meas.integrate(k)

    da = lambda x, z, k: alpha_values(x, z, n)[..., k + 1] - alpha_values(x, z, n)[..., k]
    al = lambda x, z, k: alpha_values(x, z, n)[..., k]
    be = lambda x, z, k: beta_values(x, z, n)[..., k]
    if i < j:
        return {"I1": integ(lambda x, z: da(x, z, i) * da(x, z, j)),
                "I2": mu * integ(lambda x, z: be(x, z, i) * da(x, z, j)),
                "I3": mu * integ(lambda x, z: be(x, z, j) * da(x, z, i)),
                "I4": mu * mu * integ(lambda x, z: be(x, z, i) * be(x, z, j))}
    return {"J1": integ(lambda x, z: al(x, z, i + 1)),
            "J2": integ(lambda x, z: al(x, z, i)),
            "J3": -2 * integ(lambda x, z: al(x, z, i + 1) * al(x, z, i)),
            "J4": 2 * mu * integ(lambda x, z: be(x, z, i) * al(x, z, i + 1)),
            "J5": -2 * mu * integ(lambda x, z: be(x, z, i) * al(x, z, i)),
            "J6": mu * mu * integ(lambda x, z: be(x, z, i) ** 2)}


def mminfty_diagonal(lam: float, mu: float, n: int) -> np.ndarray:
    """``2 lam + (lam n / mu)(e^{-mu(i+1)/n} - e^{-mu i/n})`` for ``i = 0..n-1``."""
    i = np.arange(n)
    return 2 * lam + lam * n / mu * (np.exp(-mu * (i + 1) / n) - np.exp(-mu * i / n))


def gram_matrix(family: OrthogonalFamily, method: str = CLOSED_FORM) -> np.ndarray:
    """``G_ij = int u_i u_j d(nu)``."""
    if method not in _METHODS:
        raise ParameterError(f"method must be one of {_METHODS}")
    n = family.n
    if method == QUADRATURE:
        k = family.kernel
        outer = DeterministicKernel(lambda t, m: (lambda u: u[..., :, None] * u[..., None, :])(k(t, m)),
                                    k.time_breaks, k.exit_breaks)
        g = np.asarray(family.measure.integrate(outer))
        return 0.5 * (g + g.T)
    if family.name == "mm1":
        lam, mu, T = family.lam, family.mu, family.T
        # strip mass n(lam+mu) * T/n times u^2 = 1/(T(lam+mu)); marks do not matter since r^2 = 1
        strip_mass = (lam + mu) * T
        return np.eye(n) * (strip_mass / (T * (lam + mu)))
    g = np.zeros((n, n))
    for i in range(n):
        terms = appendix_b_terms(i, i, family)
        g[i, i] = sum(terms.values())
        for j in range(i + 1, n):
            t = appendix_b_terms(i, j, family)
            # paired so that the cancellation is exact in floating point
            g[i, j] = g[j, i] = (t["I1"] + t["I3"]) + (t["I2"] + t["I4"])
    return g


# -------------------------------------------------------------- triple sums
def _mminfty_triple_closed(lam, mu, n, order=16):
    """``int (sum_i |u_i|)^3 d(nu)`` summed cell by cell in ``(x, y = x + z)``.

    On a cell ``x in [a/n, (a+1)/n)``, ``y in [b/n, (b+1)/n)`` with ``b > a``
    the sum is ``1 + mu((a+1)/n - x) + (b-a-1) mu/n + |mu(y - b/n) - 1|``; past
    ``y = 1`` the last term is absent and the y-integral is exact; on the
    diagonal cell the only kernel is ``mu (y - x)`` and the integral is an
    incomplete gamma function.
    """
    nodes, weights = leggauss(order)
    nodes, weights = 0.5 * (nodes + 1), 0.5 * weights
    h = 1.0 / n
    a = np.arange(n)
    x = (a[:, None] + nodes[None, :]) * h
    wx = weights * h
    ua = 1.0 + mu * ((a[:, None] + 1) * h - x)
    dens = lam * n
    # diagonal triangle: int_0^W (mu w)^3 mu e^{-mu w} dw = 6 P(4, mu W)
    W = (a[:, None] + 1) * h - x
    total = dens * np.sum(wx * 6.0 * gammainc(4, mu * W))
    # tail beyond y = 1: int_1^inf mu e^{-mu(y-x)} dy = e^{-mu(1-x)}
    S_tail = ua + (n - 1 - a)[:, None] * mu * h
    total += dens * np.sum(wx * S_tail ** 3 * np.exp(-mu * (1.0 - x)))
    kink = 1.0 / mu
    for d in range(1, n):
        aa = np.arange(n - d)
        b = aa + d
        P = ua[aa] + (d - 1) * mu * h  # (m, o)
        xs = x[aa]
        pieces = [(0.0, h)] if kink >= h else [(0.0, kink), (kink, h)]
        for lo, hi in pieces:
            s = lo + (hi - lo) * nodes  # offset y - b/n
            wy = (hi - lo) * weights
            y = b[:, None] * h + s[None, :]  # (m, o)
            Q = np.abs(mu * s - 1.0)
            S = P[:, :, None] + Q[None, None, :]
            E = mu * np.exp(-mu * (y[:, None, :] - xs[:, :, None]))
            total += dens * np.einsum("mij,i,j->", S ** 3 * E, wx, wy)
    return float(total)


def triple_abs_sum(family: OrthogonalFamily, method: str = CLOSED_FORM) -> float:
    """``sum_{j,k,l} int |u_j u_k u_l| d(nu) = int (sum_i |u_i|)^3 d(nu)``."""
    if method not in _METHODS:
        raise ParameterError(f"method must be one of {_METHODS}")
    if method == QUADRATURE:
        return float(family.measure.integrate(family.abs_sum_kernel(3)))
    if family.name == "mm1":
        return family.n / math.sqrt(family.T * (family.lam + family.mu))
    return _mminfty_triple_closed(family.lam, family.mu, family.n)


def cube_sum(family: OrthogonalFamily) -> float:
    """``sum_i int |u_i|^3 d(nu)``, the diagonal part of the triple sum."""
    k = family.kernel
    cubes = DeterministicKernel(lambda t, m: np.sum(np.abs(k(t, m)) ** 3, axis=-1),
                                k.time_breaks, tuple(k.exit_breaks) + family._kinks())
    return float(family.measure.integrate(cubes))


def triple_tensor(family: OrthogonalFamily) -> np.ndarray:
    """All ``int |u_j u_k u_l| d(nu)`` as an ``n x n x n`` array (small ``n`` only)."""
    if family.n > 24:
        raise ParameterError("the full triple tensor is offered for n <= 24")
    k = family.kernel

    def fn(t, m):
        u = np.abs(k(t, m))
        return u[..., :, None, None] * u[..., None, :, None] * u[..., None, None, :]

    kern = DeterministicKernel(fn, k.time_breaks, tuple(k.exit_breaks) + family._kinks())
    return np.asarray(family.measure.integrate(kern))


def triple_class_maxima(family: OrthogonalFamily) -> dict:
    """Largest triple moment among all-equal, two-equal and distinct index triples."""
    t = triple_tensor(family)
    n = family.n
    j, k, l = np.meshgrid(np.arange(n), np.arange(n), np.arange(n), indexing="ij")
    equal = (j == k) & (k == l)
    distinct = (j != k) & (k != l) & (j != l)
    two = ~equal & ~distinct
    out = {"all_equal": float(t[equal].max()), "two_equal": float(t[two].max()) if n > 1 else 0.0,
           "distinct": float(t[distinct].max()) if n > 2 else 0.0}
    return out


# ---------------------------------------------------------------- the bound
@dataclass(frozen=True, eq=False)
class BoundReport:
    """Ingredients and value of the Stein bound for one family."""

    family: str
    n: int
    gram: np.ndarray
    xiSq: np.ndarray
    tripleSum: float
    eta: float
    method: str
    T: float = 1.0
    params: dict = field(default_factory=dict)

    def bound(self, eta: Optional[float] = None) -> float:
        eta = self.eta if eta is None else eta
        return 0.5 * self.n ** (-1.5 + eta) * self.tripleSum

    @property
    def value(self) -> float:
        return self.bound()

    @property
    def increment_variances(self) -> np.ndarray:
        """Variances ``(T/n) xi_k^2`` of the comparator's mesh increments."""
        return self.xiSq * (self.T / self.n)

    def to_json(self) -> dict:
        return {"family": self.family, "n": self.n, "eta": self.eta, "method": self.method,
                "T": self.T, "params": self.params, "gram": self.gram.tolist(),
                "xiSq": self.xiSq.tolist(), "tripleSum": self.tripleSum, "bound": self.bound()}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def check_orthogonal(gram: np.ndarray, tol: float):
    off = gram - np.diag(np.diag(gram))
    if off.size and np.max(np.abs(off)) > tol:
        i, j = np.unravel_index(np.argmax(np.abs(off)), off.shape)
        raise PreconditionError(
            f"family is not orthogonal: |G[{min(i, j)},{max(i, j)}]| = {abs(off[i, j]):.3g} > {tol:g}")


def stein_bound(family: OrthogonalFamily, eta: float, method: str = CLOSED_FORM,
                gram: Optional[np.ndarray] = None) -> BoundReport:
    """Assemble the bound ``1/2 n^{-3/2 + eta} tripleSum`` after checking orthogonality."""
    if not 0 < eta < 0.5:
        raise ParameterError("eta must lie in (0, 1/2)")
    g = gram_matrix(family, method) if gram is None else np.asarray(gram, float)
    tol = 1e-13 * max(1.0, float(np.max(np.abs(np.diag(g))))) if method == CLOSED_FORM else 1e-8
    check_orthogonal(g, tol)
    triple = triple_abs_sum(family, method)
    params = {"lam": family.lam, "mu": family.mu}
    return BoundReport(family.name, family.n, g, np.diag(g).copy(), triple, eta, method,
                       family.T, params)
