import json
import logging
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from stein_queues import harness
from stein_queues.errors import ConfigError, DomainError, FitError
from stein_queues.harness import (ExperimentConfig, TestFunctionalPanel,
                                  default_panel, estimate_panel_distance,
                                  gaussian_comparator, rate_fit, run_experiment)
from stein_queues.paths import grid_path, linear_path, step_path, sup_distance

from conftest import random_linear, random_step

PANEL = default_panel()


# --------------------------------------------------------------------- panel
def test_panel_composition():
    kinds = [m.kind for m in PANEL.members]
    assert len(PANEL) == 12
    assert kinds.count("integral") == 6
    assert kinds.count("softmax") == 3
    assert kinds.count("point") == 3


@given(st.integers(0, 10 ** 6))
def test_panel_members_are_bounded_and_lipschitz(seed):
    gen = np.random.default_rng(seed)
    pairs = [(random_step(gen), random_step(gen)),
             (random_linear(gen), random_linear(gen)),
             (grid_path(1.0, gen.normal(size=9) * 3), grid_path(1.0, gen.normal(size=9) * 3))]
    for f, g in pairs:
        ff, fg = PANEL.evaluate(f), PANEL.evaluate(g)
        assert np.all(np.abs(ff) <= 1.0)
        d = sup_distance(f, g)
        assert np.all(np.abs(ff - fg) <= d * (1 + 1e-9) + 1e-15)


def test_small_perturbation_probe(gen):
    f = random_linear(gen, k=8)
    for _ in range(20):
        eps = 1e-3 * gen.normal(size=f.knots.size)
        g = linear_path(f.knots, f(f.knots) + eps)
        ratio = np.abs(PANEL.evaluate(f) - PANEL.evaluate(g)) / sup_distance(f, g)
        assert np.all(ratio <= 1 + 1e-9)


def test_nodal_batch_matches_path_evaluation(gen):
    vals = gen.normal(size=(5, 33))
    batch = PANEL.evaluate_nodal(vals, 0.4)
    for row, v in zip(batch, vals):
        knots = np.linspace(0, 0.4, 33)
        assert np.allclose(row, PANEL.evaluate(linear_path(knots, v)), atol=1e-13)


def test_integral_members_against_quadrature():
    f = step_path(1.0, 0.0, [0.5], [1.0])
    vals = PANEL.evaluate(f)
    # weight 1: int_0.5^1 1 = 0.5 ; weight 2s: int_0.5^1 2s = 0.75
    assert vals[0] == pytest.approx(math.tanh(0.5), rel=1e-14)
    assert vals[1] == pytest.approx(math.tanh(0.75), rel=1e-14)


def test_empty_panel_is_rejected():
    with pytest.raises(ConfigError):
        TestFunctionalPanel(())


# --------------------------------------------------------- panel distances
def _bm_sampler(gen):
    return grid_path(1.0, np.concatenate([[0.0], np.cumsum(gen.standard_normal(16) / 4)]))


def test_same_stream_gives_zero_distance():
    res = estimate_panel_distance(_bm_sampler, _bm_sampler, PANEL, 200, 5, seed_b=5)
    assert res.d == 0.0


def test_null_case_within_bonferroni_band():
    res = estimate_panel_distance(_bm_sampler, _bm_sampler, PANEL, 2000, 6)
    z = stats.norm.isf(0.01 / (2 * len(PANEL)))
    assert res.d <= z * res.se
    # the estimate is the largest member-wise mean difference
    assert res.d == pytest.approx(np.max(np.abs(res.means_a - res.means_b)))


def test_shifted_sampler_is_detected():
    shifted = lambda g: _bm_sampler(g) + 0.5
    res = estimate_panel_distance(_bm_sampler, shifted, PANEL, 1000, 7)
    assert res.d > 5 * res.se


def test_gaussian_comparator_variances():
    var = np.array([0.1, 0.2, 0.3, 0.4])
    sampler = gaussian_comparator(var, 1.0)
    from stein_queues.rng import replicate

    paths = replicate(lambda g: sampler(g).right_values(), 3, 20_000)
    inc = np.diff(np.array(paths), axis=1)
    assert np.allclose(inc.var(axis=0, ddof=1), var, rtol=0.05)


# ------------------------------------------------------------------ rate fit
def test_rate_fit_examples():
    ns = np.array([16, 64, 256, 1024])
    fit = rate_fit(list(zip(ns, ns ** -0.5)), shape="power")
    assert fit.exponent == pytest.approx(-0.5, abs=1e-10)
    theorem = np.log(ns) / (np.log(np.log(ns)) * np.sqrt(ns))
    fit = rate_fit(list(zip(ns, theorem)))
    assert fit.exponent == pytest.approx(-0.5, abs=1e-10)
    assert fit.c == pytest.approx(1.0, rel=1e-10)
    flat = rate_fit(list(zip(ns, np.ones(4))), shape="power")
    assert abs(flat.exponent) < 1e-10 and not flat.decaying


def test_rate_fit_errors():
    with pytest.raises(FitError):
        rate_fit([(10, 1.0), (20, 0.5)])
    with pytest.raises(FitError):
        rate_fit([(10, 1.0), (10, 0.9), (10, 0.8)])


# -------------------------------------------------------------- configs
def test_config_validation():
    base = dict(model="MM1", lam=1.0, mu=2.0, x0=1.0, T=0.4, nGrid=[16], replications=10)
    assert ExperimentConfig.from_dict(base).model == "mm1"
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**base, "T": 2.0})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**base, "lam": 3.0})
    assert ExperimentConfig.from_dict({**base, "T": 2.0, "theorem_regime": False}).T == 2.0
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**base, "model": "MMInfty", "T": 1.0})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**base, "colour": "blue"})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json("{not json")


# ----------------------------------------------------------- experiments
SMALL = dict(model="MM1", lam=1.0, mu=2.0, x0=1.0, T=0.4, nGrid=[16], replications=60,
             seed=11, gap_replications=4, refinement=16)


def test_single_row_report():
    rep = run_experiment(ExperimentConfig.from_dict(SMALL))
    assert len(rep.rows) == 1
    row = rep.rows[0]
    for key in ("term1", "term2", "term3", "stein_bound"):
        assert math.isfinite(row[key]) and row[key] >= 0
    assert set(rep.criteria) == {"directional_n16"}


def test_report_is_byte_identical_across_thread_counts(monkeypatch):
    cfg = ExperimentConfig.from_dict({**SMALL, "nGrid": [8, 16, 32]})
    monkeypatch.setenv("STEIN_QUEUES_THREADS", "1")
    a = run_experiment(cfg).to_json()
    monkeypatch.setenv("STEIN_QUEUES_THREADS", "4")
    b = run_experiment(cfg).to_json()
    assert a == b
    body = json.loads(a)
    assert len(body["content_hash"]) == 64
    assert "time" not in a.lower()


def test_rate_envelope_covers_every_n():
    rep = run_experiment(ExperimentConfig.from_dict({**SMALL, "nGrid": [8, 16, 32]}))
    c = rep.fit["envelope_c"]
    for r in rep.rows:
        n = r["n"]
        assert r["total"] <= c * math.log(n) / (math.log(math.log(n)) * math.sqrt(n)) + 1e-12


def test_mminfty_uses_the_transform_route(caplog):
    cfg = ExperimentConfig.from_dict(dict(model="MMInfty", lam=1.0, mu=2.0, T=1.0, nGrid=[8],
                                          replications=40, gap_replications=3, refinement=16))
    with caplog.at_level(logging.INFO, logger="stein_queues.harness"):
        rep = run_experiment(cfg)
    assert any("integral transform" in r.message for r in caplog.records)
    assert rep.notes


def test_errors_carry_coordinates(monkeypatch):
    def broken(params, gen):
        raise DomainError("synthetic failure")

    monkeypatch.setattr(harness, "simulate_mm1", broken)
    with pytest.raises(DomainError, match=r"n=16, replication=0, seed="):
        run_experiment(ExperimentConfig.from_dict(SMALL))


def test_report_files(tmp_path):
    rep = run_experiment(ExperimentConfig.from_dict(SMALL))
    path = rep.write(str(tmp_path / "out"))
    assert path.suffix == ".json" and path.exists()
    lines = path.with_suffix(".csv").read_text().splitlines()
    assert lines[0] == "n,term,value,se" and len(lines) == 1 + 5
