import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import gram_piece_oracle
from stein_queues.errors import ParameterError, PreconditionError, UnsupportedError
from stein_queues.queues import QueueParams, gamma_fn
from stein_queues.stein import (MM1Variant, MMInftyVariant, alpha_values, appendix_b_terms,
                                beta_values, build_family, check_orthogonal, cube_sum,
                                gram_matrix, mminfty_diagonal, stein_bound, triple_abs_sum,
                                triple_class_maxima)


def mminf(lam, mu, n):
    return build_family(MMInftyVariant(lam, mu), n=n)


# -------------------------------------------------------------- families
def test_mm1_single_kernel():
    fam = build_family(MM1Variant(1.0, 3.0, 2.0), n=1)
    t = np.array([0.0, 0.7, 1.99])
    vals = fam.component(0)(t, np.ones(3))
    assert np.allclose(np.abs(vals), 1 / math.sqrt(2.0 * 4.0))
    assert fam.component(0)(np.array([2.0]), np.ones(1))[0] == 0.0


def test_beta_covering_interval():
    # x <= i/n and x + z >= (i+1)/n
    assert beta_values(0.1, 0.6, 4)[1] == pytest.approx(0.25)


@given(st.floats(0, 1), st.floats(0, 2), st.integers(1, 12))
def test_alpha_definition(x, z, n):
    a = alpha_values(x, z, n)
    for k in range(n + 1):
        assert a[k] == (1.0 if x <= k / n <= x + z else 0.0)


def test_build_family_from_params():
    fam = build_family("mm1", QueueParams(1.0, 2.0, 8, 0.4, 1.0))
    assert fam.n == 8 and fam.T == 0.4
    with pytest.raises(UnsupportedError):
        build_family(MMInftyVariant(1.0, 1.0, 2.0), n=4)


# ------------------------------------------------------------------ Gram
@pytest.mark.parametrize("lam,mu,n,T", [(1, 2, 4, 1.0), (2, 5, 16, 0.3), (1, 3, 7, 2.0)])
def test_mm1_gram_is_identity(lam, mu, n, T):
    g = gram_matrix(build_family(MM1Variant(lam, mu, T), n=n))
    assert np.array_equal(g, np.eye(n))


def test_mminfty_gram_small_example():
    fam = mminf(1.0, 1.0, 2)
    terms = appendix_b_terms(0, 1, fam)
    assert sum(terms.values()) == pytest.approx(0.0, abs=1e-15)
    g = gram_matrix(fam)
    assert g[0, 0] == pytest.approx(2 * math.exp(-0.5), rel=1e-14)
    assert g[0, 0] == pytest.approx(1.21306, abs=1e-5)


@pytest.mark.parametrize("mu", [0.5, 1.0, 4.0])
def test_mminfty_gram_quadrature_agrees(mu):
    fam = mminf(1.3, mu, 6)
    closed = gram_matrix(fam)
    quad = gram_matrix(fam, method="quadrature")
    assert np.max(np.abs(closed - quad)) < 1e-10
    i = np.arange(6)
    diag = 6 * (gamma_fn((i + 1) / 6, 1.3, mu) - gamma_fn(i / 6, 1.3, mu))
    assert np.allclose(np.diag(closed), diag, rtol=1e-12)
    assert np.allclose(mminfty_diagonal(1.3, mu, 6), diag, rtol=1e-12)


def test_unknown_gram_method():
    with pytest.raises(ParameterError):
        gram_matrix(mminf(1, 1, 2), method="simpson")


# ------------------------------------------------------------ Gram pieces
def test_gram_pieces_pairwise_cancellation():
    t = appendix_b_terms(1, 5, mminf(1.0, 2.0, 8))
    assert t["I1"] + t["I3"] == 0.0
    assert t["I2"] + t["I4"] == 0.0


def test_gram_pieces_diagonal_sum():
    t = appendix_b_terms(2, 2, mminf(1.0, 1.0, 4))
    target = 2 + 4 * (math.exp(-3 / 4) - math.exp(-2 / 4))
    assert sum(t.values()) == pytest.approx(target, abs=1e-12)


@pytest.mark.parametrize("i,j", [(1, 4), (3, 3)])
def test_gram_pieces_against_dblquad(i, j):
    closed = appendix_b_terms(i, j, mminf(1.0, 2.0, 8))
    oracle = gram_piece_oracle(i, j, 1.0, 2.0, 8)
    for k, v in oracle.items():
        assert closed[k] == pytest.approx(v, rel=1e-6, abs=1e-12), k


def test_literal_first_piece_disagrees():
    fam = mminf(1.0, 2.0, 8)
    printed = appendix_b_terms(1, 4, fam, as_printed=True)["I1"]
    oracle = gram_piece_oracle(1, 4, 1.0, 2.0, 8)["I1"]
    assert printed == pytest.approx(2.0 * oracle, rel=1e-10)


def test_gram_pieces_index_order():
    with pytest.raises(ParameterError):
        appendix_b_terms(3, 1, mminf(1, 1, 4))


# ------------------------------------------------------------ triple sums
def test_mm1_triple_sum():
    fam = build_family(MM1Variant(1.0, 3.0, 1.0), n=4)
    assert triple_abs_sum(fam) == pytest.approx(2.0, rel=1e-14)
    assert triple_abs_sum(fam, "quadrature") == pytest.approx(2.0, rel=1e-12)
    ratios = [triple_abs_sum(build_family(MM1Variant(1.0, 3.0, 1.0), n=n)) / n
              for n in (2, 8, 32)]
    assert np.ptp(ratios) < 1e-14


@pytest.mark.parametrize("mu", [1.0, 3.0, 20.0])
def test_mminfty_triple_closed_matches_quadrature(mu):
    fam = mminf(1.0, mu, 8)
    assert triple_abs_sum(fam) == pytest.approx(triple_abs_sum(fam, "quadrature"), rel=1e-9)


def test_mminfty_triple_sum_grows_linearly():
    vals = [triple_abs_sum(mminf(1.0, 1.0, n)) / n for n in (8, 16, 32, 64)]
    assert max(vals) / min(vals) <= 1.5


def test_triple_classes_bound_the_total():
    fam = mminf(1.0, 2.0, 6)
    classes = triple_class_maxima(fam)
    assert classes["all_equal"] >= classes["two_equal"] >= 0
    assert cube_sum(fam) <= triple_abs_sum(fam)


# --------------------------------------------------------------- the bound
def test_mm1_bound_small_eta_limit():
    lam, mu, n = 1.0, 2.0, 25
    rep = stein_bound(build_family(MM1Variant(lam, mu, 1.0), n=n), 1e-12)
    assert rep.value == pytest.approx(0.5 / math.sqrt(n) / math.sqrt(lam + mu), rel=1e-10)


def test_bound_increases_with_eta():
    rep = stein_bound(mminf(1.0, 1.0, 8), 0.1)
    etas = np.linspace(0.01, 0.49, 20)
    assert np.all(np.diff([rep.bound(e) for e in etas]) > 0)


def test_mminfty_bound_rate():
    eta = 0.1
    cs = [stein_bound(mminf(1.0, 1.0, n), eta).value / n ** (-0.5 + eta) for n in (8, 16, 32)]
    assert max(cs) / min(cs) < 1.5


def test_increment_variances_follow_gram_diagonal():
    rep = stein_bound(mminf(1.0, 2.0, 8), 0.2)
    i = np.arange(8)
    assert np.allclose(rep.increment_variances,
                       gamma_fn((i + 1) / 8, 1.0, 2.0) - gamma_fn(i / 8, 1.0, 2.0), rtol=1e-12)


def test_non_orthogonal_family_is_refused():
    g = np.eye(3)
    g[0, 2] = g[2, 0] = 0.1
    with pytest.raises(PreconditionError, match=r"G\[0,2\]"):
        check_orthogonal(g, 1e-12)
    with pytest.raises(PreconditionError):
        stein_bound(mminf(1, 1, 3), 0.1, gram=g)


def test_eta_range():
    with pytest.raises(ParameterError):
        stein_bound(mminf(1, 1, 3), 0.5)
