"""Experiment orchestration: a finite panel of Lipschitz test functionals,
Monte Carlo panel distances, the three-term rate experiment and rate fits.

The panel distance ``max_F |E F(A) - E F(B)|`` over finitely many bounded
1-Lipschitz functionals is a lower bound for the distance over the whole
Lipschitz class, so every experiment verdict is one-sided: the estimate plus
three standard errors must stay below the theoretical bound.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path as FsPath
from typing import Callable, List, Optional, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .bounds import brownian_interpolation_gap
from .errors import ConfigError, FitError, ParameterError, SteinQueuesError
from .paths import Path, grid_path, interpolate_affine, sup_distance
from .queues import QueueParams, simulate_mm1, simulate_mminfty_trapeze
from .rng import derive_seed, replicate, replicate_indexed
from .stein import build_family, stein_bound

log = logging.getLogger(__name__)

_GLX, _GLW = leggauss(12)
_GLX, _GLW = 0.5 * (_GLX + 1.0), 0.5 * _GLW


# ------------------------------------------------------------------ panel
def _weights(s: np.ndarray, k: int) -> np.ndarray:
    """Six weight shapes on the unit interval, each with unit L1 mass."""
    if k == 0:
        return np.ones_like(s)
    if k == 1:
        return 2.0 * s
    if k == 2:
        return 2.0 * (1.0 - s)
    if k == 3:
        return 0.5 * math.pi * np.sin(math.pi * s)
    if k == 4:
        return 0.5 * math.pi * np.cos(2.0 * math.pi * s)
    return 3.0 * s * s


@dataclass(frozen=True)
class PanelMember:
    name: str
    kind: str  # integral | softmax | point
    index: int = 0
    sign: float = 1.0
    span: float = 1.0  # fraction of the horizon used by softmax members
    at: float = 0.5  # fraction of the horizon for point members


@dataclass(frozen=True, eq=False)
class TestFunctionalPanel:
    """Bounded (by 1) functionals, 1-Lipschitz for the uniform distance."""

    members: tuple
    beta: float = 10.0
    points: int = 33
    name: str = "default"
    _cache: dict = field(default_factory=dict, repr=False)

    __test__ = False  # not a pytest class

    def __post_init__(self):
        if not self.members:
            raise ConfigError("the panel has no members")

    def __len__(self):
        return len(self.members)

    @property
    def names(self) -> List[str]:
        return [m.name for m in self.members]

    def _softmax(self, values: np.ndarray) -> np.ndarray:
        # log-sum-exp minus log J / beta lies in [max - log J / beta, max]
        b = self.beta
        top = values.max(axis=-1, keepdims=True)
        lse = top[..., 0] + np.log(np.exp(b * (values - top)).sum(axis=-1)) / b
        return lse - math.log(values.shape[-1]) / b

    def _member_values(self, member, integral_fn, eval_fn, T):
        if member.kind == "integral":
            return np.tanh(integral_fn(member.index))
        if member.kind == "softmax":
            t = np.linspace(0.0, member.span * T, self.points)
            return np.tanh(self._softmax(member.sign * eval_fn(t)))
        return np.tanh(eval_fn(np.array([member.at * T]))[..., 0])

    def evaluate(self, f: Path) -> np.ndarray:
        """All member values at one path."""
        T = f.horizon
        if f.kind == "grid":
            return self.evaluate_nodal(f.right_values()[None, :], T)[0]
        lo, hi = f.knots[:-1], f.knots[1:]
        t = lo[:, None] + (hi - lo)[:, None] * _GLX[None, :]
        w = (hi - lo)[:, None] * _GLW[None, :]
        vals = f(t)

        def integral(k):
            return float(np.sum(w * vals * _weights(t / T, k) / T))

        return np.array([float(self._member_values(m, integral, lambda s: np.asarray(f(s)), T))
                         for m in self.members])

    def _nodal_operators(self, m: int, T: float):
        key = (m, T)
        if key not in self._cache:
            knots = np.linspace(0.0, T, m + 1)
            h = T / m
            # integral of w_k against each hat function, by Gauss-Legendre per segment
            s = (np.arange(m)[:, None] + _GLX[None, :]) * h
            ints = np.zeros((6, m + 1))
            for k in range(6):
                wk = _weights(s / T, k) / T * h * _GLW[None, :]
                ints[k, :-1] += np.sum(wk * (1.0 - _GLX[None, :]), axis=1)
                ints[k, 1:] += np.sum(wk * _GLX[None, :], axis=1)
            evals = {}
            for mem in self.members:
                if mem.kind == "softmax":
                    pts = np.linspace(0.0, mem.span * T, self.points)
                elif mem.kind == "point":
                    pts = np.array([mem.at * T])
                else:
                    continue
                E = np.zeros((pts.size, m + 1))
                for r, tp in enumerate(pts):
                    j = min(int(np.floor(tp / h)), m - 1)
                    frac = (tp - knots[j]) / h
                    E[r, j] += 1.0 - frac
                    E[r, j + 1] += frac
                evals[(mem.span, mem.at, mem.kind)] = E
            self._cache[key] = (ints, evals)
        return self._cache[key]

    def evaluate_nodal(self, values: np.ndarray, T: float) -> np.ndarray:
        """Member values for a batch of uniform-grid paths given by nodal values ``(M, m+1)``."""
        values = np.atleast_2d(np.asarray(values, float))
        m = values.shape[1] - 1
        ints, evals = self._nodal_operators(m, T)
        out = np.empty((values.shape[0], len(self.members)))
        for c, mem in enumerate(self.members):
            if mem.kind == "integral":
                out[:, c] = np.tanh(values @ ints[mem.index])
            elif mem.kind == "softmax":
                E = evals[(mem.span, mem.at, mem.kind)]
                out[:, c] = np.tanh(self._softmax(mem.sign * (values @ E.T)))
            else:
                E = evals[(mem.span, mem.at, mem.kind)]
                out[:, c] = np.tanh((values @ E.T)[:, 0])
        return out


def default_panel() -> TestFunctionalPanel:
    members = [PanelMember(f"tanh_int_w{k}", "integral", index=k) for k in range(6)]
    members += [PanelMember("softmax_sup", "softmax", sign=1.0),
                PanelMember("softmax_neg_sup", "softmax", sign=-1.0),
                PanelMember("softmax_sup_first_half", "softmax", sign=1.0, span=0.5)]
    members += [PanelMember(f"tanh_eval_{q}", "point", at=q / 4.0) for q in (1, 2, 3)]
    return TestFunctionalPanel(tuple(members))


PANELS = {"default": default_panel}


def get_panel(name: str) -> TestFunctionalPanel:
    try:
        return PANELS[name]()
    except KeyError:
        raise ConfigError(f"unknown panel {name!r}") from None


# ------------------------------------------------------- panel distances
@dataclass(frozen=True)
class PanelDistance:
    d: float
    se: float
    argmax: int
    member: str
    differences: np.ndarray
    means_a: np.ndarray
    means_b: np.ndarray

    def __iter__(self):
        yield self.d
        yield self.se


def _panel_values(sampler, panel, M, seed):
    rows = replicate(lambda g: panel.evaluate(sampler(g)), seed, M)
    return np.asarray(rows)


def panel_distance_from_values(va: np.ndarray, vb: np.ndarray, names) -> PanelDistance:
    if va.shape[1] == 0:
        raise ConfigError("the panel has no members")
    ma, mb = va.mean(axis=0), vb.mean(axis=0)
    diff = ma - mb
    k = int(np.argmax(np.abs(diff)))
    se = math.sqrt(va[:, k].var(ddof=1) / va.shape[0] + vb[:, k].var(ddof=1) / vb.shape[0])
    return PanelDistance(float(abs(diff[k])), se, k, names[k], diff, ma, mb)


def estimate_panel_distance(sampler_a: Callable, sampler_b: Callable,
                            panel: TestFunctionalPanel, M: int, seed: int,
                            seed_b: Optional[int] = None) -> PanelDistance:
    """``max_F |mean_A F - mean_B F|`` over the panel, with its standard error.

    Replication ``i`` of ``A`` uses stream ``(seed, i)``; ``B`` uses
    ``(seed_b, i)``, where ``seed_b`` defaults to a seed derived from ``seed``.
    Passing ``seed_b == seed`` with identical samplers gives exactly 0.
    """
    if len(panel) == 0:
        raise ConfigError("the panel has no members")
    if M < 2:
        raise ParameterError("need at least two replications")
    seed_b = derive_seed(seed, "B") if seed_b is None else seed_b
    va = _panel_values(sampler_a, panel, M, seed)
    vb = _panel_values(sampler_b, panel, M, seed_b)
    return panel_distance_from_values(va, vb, panel.names)


def gaussian_comparator(increment_variances: np.ndarray, T: float) -> Callable:
    """Sampler of the grid path with independent centred increments of the given variances."""
    sd = np.sqrt(np.asarray(increment_variances, float))

    def sample(gen):
        return grid_path(T, np.concatenate([[0.0], np.cumsum(gen.standard_normal(sd.size) * sd)]))

    return sample


# ------------------------------------------------------------- rate fits
@dataclass(frozen=True)
class RateFit:
    exponent: float
    c: float
    residuals: tuple
    shape: str
    decaying: bool


def rate_fit(points: Sequence, shape: str = "theorem") -> RateFit:
    """Fit ``d = c n^k`` (``shape="power"``) or ``d = c n^k log n / log log n`` (``"theorem"``).

    Least squares on the log scale; a fitted exponent above -0.05 is flagged
    as non-decaying.
    """
    pts = np.asarray([(float(n), float(d)) for n, d in points])
    if pts.shape[0] < 3:
        raise FitError("a rate fit needs at least three points")
    n, d = pts[:, 0], pts[:, 1]
    if np.any(d <= 0) or np.any(n <= 0):
        raise FitError("points must be positive")
    if np.ptp(np.log(n)) == 0:
        raise FitError("degenerate design: all n are equal")
    y = np.log(d)
    if shape == "theorem":
        if np.any(n <= math.e):
            raise FitError("the theorem shape needs n > e")
        y = y - np.log(np.log(n) / np.log(np.log(n)))
    elif shape != "power":
        raise FitError(f"unknown shape {shape!r}")
    X = np.stack([np.ones_like(n), np.log(n)], axis=1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return RateFit(float(coef[1]), float(math.exp(coef[0])), tuple(float(r) for r in resid),
                   shape, bool(coef[1] < -0.05))


# --------------------------------------------------------------- configs
_MODELS = {"mm1": "mm1", "mminfty": "mminfty", "mm_infty": "mminfty", "mminf": "mminfty"}


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    lam: float
    mu: float
    T: float
    nGrid: tuple
    replications: int
    x0: float = 0.0
    panel: str = "default"
    eta: float = 0.1
    p: float = 2.0
    seed: int = 0
    output: Optional[str] = None
    theorem_regime: bool = True
    gap_replications: int = 50
    refinement: int = 64

    def __post_init__(self):
        model = _MODELS.get(str(self.model).lower().replace("/", "").replace("∞", "infty"))
        if model is None:
            raise ConfigError(f"unknown model {self.model!r}")
        object.__setattr__(self, "model", model)
        object.__setattr__(self, "nGrid", tuple(int(n) for n in self.nGrid))
        if not self.nGrid or min(self.nGrid) < 1:
            raise ConfigError("nGrid must list positive integers")
        if self.replications < 2:
            raise ConfigError("replications must be at least 2")
        if not (self.lam > 0 and self.mu > 0 and self.T > 0):
            raise ConfigError("lam, mu and T must be positive")
        if not 0 < self.eta < 0.5:
            raise ConfigError("eta must lie in (0, 1/2)")
        if model == "mminfty":
            if self.x0 != 0:
                raise ConfigError("the M/M/inf experiment starts from an empty system (x0 = 0)")
            if self.T != 1.0:
                raise ConfigError("the M/M/inf experiment runs on the unit horizon")
        elif self.theorem_regime:
            if not self.lam < self.mu:
                raise ConfigError("the theorem regime needs lam < mu")
            if self.T > self.x0 / (self.mu - self.lam):
                raise ConfigError("the theorem regime needs T <= x0 / (mu - lam)")
        get_panel(self.panel)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        aliases = {"lambda": "lam", "λ": "lam", "μ": "mu", "x₀": "x0", "η": "eta", "M": "replications"}
        clean = {}
        for k, v in data.items():
            k = aliases.get(k, k)
            if k not in known:
                raise ConfigError(f"unknown config field {k!r}")
            clean[k] = v
        try:
            return cls(**clean)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, source) -> "ExperimentConfig":
        if isinstance(source, dict):
            return cls.from_dict(source)
        text = FsPath(source).read_text() if not str(source).lstrip().startswith("{") else source
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc

    def to_dict(self) -> dict:
        out = asdict(self)
        out["nGrid"] = list(self.nGrid)
        return out


# ----------------------------------------------------------- experiments
@dataclass
class RateReport:
    config: ExperimentConfig
    rows: List[dict]
    criteria: dict
    fit: Optional[dict]
    notes: List[str]

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.criteria.values())

    def payload(self) -> dict:
        return {"config": self.config.to_dict(), "rows": self.rows, "criteria": self.criteria,
                "fit": self.fit, "notes": self.notes}

    def to_json(self) -> str:
        body = self.payload()
        canon = json.dumps(body, sort_keys=True, separators=(",", ":"))
        body["content_hash"] = hashlib.sha256(canon.encode()).hexdigest()
        return json.dumps(body, sort_keys=True, indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "term", "value", "se"])
        for r in self.rows:
            for term in ("term1", "term2", "term3", "stein_bound", "total"):
                w.writerow([r["n"], term, repr(r[term]), repr(r.get(term + "_se", 0.0))])
        return buf.getvalue()

    def write(self, output: str):
        out = FsPath(output)
        json_path = out if out.suffix == ".json" else out.with_suffix(".json")
        json_path.parent.mkdir(parents=True, exist_ok=True)
        json_path.write_text(self.to_json())
        json_path.with_suffix(".csv").write_text(self.to_csv())
        return json_path


def _attach(exc: Exception, **coords) -> Exception:
    where = ", ".join(f"{k}={v}" for k, v in coords.items())
    msg = f"{exc} [{where}]"
    try:
        new = type(exc)(msg)
    except Exception:
        new = SteinQueuesError(msg)
    return new


def _theorem_curve(n: int) -> float:
    ln = math.log(n)
    return ln / (math.log(ln) * math.sqrt(n))


def run_experiment(config: ExperimentConfig) -> RateReport:
    """Three-term decomposition for every ``n`` in the grid.

    term1: ``E || Z_n - pi_n Z_n ||_inf``; term2: panel distance between
    ``pi_n Z_n`` (M/M/1) or ``pi_n Y_n`` (M/M/inf, the integral-transform
    route) and the matched Gaussian interpolation; term3:
    ``E || pi_n B - B ||_{eta,p}``.  The verdict for each ``n`` is
    ``term2 + 3 SE <= stein_bound + term1 + term3``.
    """
    panel = get_panel(config.panel)
    rows, criteria, notes = [], {}, []
    if config.model == "mminfty":
        notes.append("M/M/inf: term2 compares pi_n Y_n, the residual of the integral transform "
                     "of Z_n with tau = mu, against B_xi")
        log.info(notes[-1])
    for n in config.nGrid:
        params = QueueParams(config.lam, config.mu, n, config.T, config.x0)
        if config.model == "mm1" and config.theorem_regime:
            params.check_mm1_regime()
        report = stein_bound(build_family(config.model, params, n), config.eta)
        sim_seed = derive_seed(config.seed, "sim", n)

        def one(i, gen, params=params, n=n, sim_seed=sim_seed):
            try:
                if config.model == "mm1":
                    b = simulate_mm1(params, gen)
                    target = b.Zn
                else:
                    b = simulate_mminfty_trapeze(params, gen)
                    target = b.Yn
                z = b.Zn
                gap = sup_distance(z, interpolate_affine(z, n))
                return gap, interpolate_affine(target, n).right_values()
            except SteinQueuesError as exc:
                raise _attach(exc, n=n, replication=i, seed=sim_seed) from exc

        sims = replicate_indexed(one, sim_seed, config.replications)
        gaps = np.array([s[0] for s in sims])
        va = panel.evaluate_nodal(np.stack([s[1] for s in sims]), config.T)
        comp = gaussian_comparator(report.increment_variances, config.T)
        gauss_seed = derive_seed(config.seed, "gauss", n)
        vb = panel.evaluate_nodal(
            np.stack(replicate(lambda g: comp(g).right_values(), gauss_seed, config.replications)),
            config.T)
        dist = panel_distance_from_values(va, vb, panel.names)
        gap3 = brownian_interpolation_gap(config.eta, config.p, n, config.gap_replications,
                                          derive_seed(config.seed, "bgap"), config.refinement,
                                          config.T)
        term1 = float(gaps.mean())
        term1_se = float(gaps.std(ddof=1) / math.sqrt(gaps.size))
        stein = report.bound()
        rhs = stein + term1 + gap3.value
        row = {"n": n, "term1": term1, "term1_se": term1_se, "term2": dist.d,
               "term2_se": dist.se, "term2_member": dist.member, "term3": gap3.value,
               "term3_se": gap3.se, "stein_bound": stein, "stein_bound_se": 0.0,
               "total": term1 + dist.d + gap3.value,
               "total_se": math.sqrt(term1_se ** 2 + dist.se ** 2 + gap3.se ** 2),
               "tripleSum": report.tripleSum}
        rows.append(row)
        ok = dist.d + 3 * dist.se <= rhs
        criteria[f"directional_n{n}"] = {"pass": bool(ok), "lhs": dist.d + 3 * dist.se,
                                         "rhs": rhs}
    fit = None
    usable = [(r["n"], r["total"]) for r in rows if r["n"] > 2 and r["total"] > 0]
    if len(usable) >= 3:
        f = rate_fit(usable, "theorem")
        c_env = max(t / _theorem_curve(n) for n, t in usable)
        fit = {"shape": f.shape, "exponent": f.exponent, "c": f.c, "decaying": f.decaying,
               "envelope_c": c_env}
    return RateReport(config, rows, criteria, fit, notes)


def run_and_write(config: ExperimentConfig) -> RateReport:
    report = run_experiment(config)
    if config.output:
        report.write(config.output)
    return report
