import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sampdisc.concentration import (
    Family, UnionFamily, bernoulli_family, bernstein_tail, binomial_slack, eta_schedule,
    ladder_budget, ladder_families, mc_tail, sweep_csv, tail_sweep, theorem_budget,
    uniform_family, union_bound_m, union_log_sum,
)
from sampdisc.entropy import BallSampler
from sampdisc.errors import ConstraintViolation, DomainError
from sampdisc.sandwich import build_ladder
from sampdisc.spaces import FrequencySet, Grid


# tail bound ----------------------------------------------------------------

def test_bernstein_examples():
    assert bernstein_tail(1000, 0.3, 1.0) == pytest.approx(2 * math.exp(-11.25), rel=1e-14)
    assert bernstein_tail(1000, 0.3, 1.0) == pytest.approx(2.6e-5, rel=0.02)
    assert bernstein_tail(1, 1e-12, 1.0) == pytest.approx(2.0)
    a, b = bernstein_tail(500, 0.2, 2.0), bernstein_tail(1000, 0.2, 2.0)
    assert b / 2 == pytest.approx((a / 2) ** 2, rel=1e-12)


@pytest.mark.parametrize("eta", [0.0, 1.0, -0.2, 1.5])
def test_bernstein_domain(eta):
    with pytest.raises(DomainError):
        bernstein_tail(10, eta, 1.0)


@given(st.integers(1, 10 ** 6), st.floats(1e-6, 0.999), st.floats(1e-3, 1e3))
def test_bernstein_range(m, eta, M):
    assert 0 <= bernstein_tail(m, eta, M) <= 2


# Monte Carlo tails ---------------------------------------------------------

def test_builtin_families_constraints():
    b = bernoulli_family(1.0, 0.5)
    assert b.sup == 1.0 and b.l1 == pytest.approx(1.0)
    u = uniform_family(1.0)
    assert u.sup == 1.0 and u.l1 == pytest.approx(0.5)
    b3 = bernoulli_family(1.5, 0.2)
    assert b3.sup == 1.5 and b3.l1 == pytest.approx(2 * (1.5 / 0.8) * 0.2 * 0.8)


def test_family_moments_empirically():
    rng = np.random.default_rng(0)
    for fam in (bernoulli_family(1.0, 0.3), uniform_family(2.0)):
        s = fam.sample_sums(rng, 1, 200_000)
        assert abs(s.mean()) < 0.01
        assert np.abs(s).mean() == pytest.approx(fam.l1, rel=0.02)
        assert np.abs(s).max() <= fam.sup + 1e-12


def test_constraint_violation():
    heavy = Family(name="heavy", l1=3.0, sup=3.0, sampler=lambda rng, size: rng.choice([-3.0, 3.0], size=size))
    with pytest.raises(ConstraintViolation):
        mc_tail(heavy, 10, 0.1, 100, 0)
    with pytest.raises(ConstraintViolation):
        mc_tail(uniform_family(2.0), 10, 0.1, 100, 0, M=1.0)
    liar = Family(name="liar", l1=0.5, sup=1.0, sampler=lambda rng, size: rng.uniform(-2, 2, size=size))
    with pytest.raises(ConstraintViolation):
        mc_tail(liar, 10, 0.1, 100, 0)


def test_mc_tail_eta_above_M_is_zero():
    assert mc_tail(bernoulli_family(1.0), 50, 1.01, 1000, 0) == 0.0
    assert mc_tail(uniform_family(1.0), 50, 1.2, 1000, 0) == 0.0


def test_mc_tail_bernoulli_example():
    p = mc_tail(bernoulli_family(1.0, 0.5), 1000, 0.3, 100_000, 0)
    b = bernstein_tail(1000, 0.3, 1.0)
    assert p <= b + binomial_slack(b, 100_000)


def test_mc_tail_deterministic_and_monotone():
    etas = [0.05, 0.1, 0.15, 0.2, 0.3]
    a = mc_tail(uniform_family(1.0), 200, etas, 5000, 42)
    b = mc_tail(uniform_family(1.0), 200, etas, 5000, 42)
    assert np.array_equal(a, b)
    assert np.all(np.diff(a) <= 0)


def test_mc_tail_binomial_oracle():
    # Rademacher sums: P(|S_m| >= m eta) from the exact binomial law
    m, eta = 100, 0.2
    k = math.ceil((m + m * eta) / 2)  # S = 2K - m >= m eta
    exact = 2 * sum(math.comb(m, j) for j in range(k, m + 1)) / 2 ** m
    est = mc_tail(bernoulli_family(1.0), m, eta, 200_000, 1)
    assert est == pytest.approx(exact, abs=4 * math.sqrt(exact * (1 - exact) / 200_000))


def test_sweep_csv_format():
    rows = tail_sweep([bernoulli_family(), uniform_family()], ms=(100,), etas=(0.1, 0.2), trials=2000)
    text = sweep_csv(rows)
    lines = text.splitlines()
    assert lines[0] == "m,eta,M,family,empirical,bound,pass"
    assert len(lines) == 5
    assert all(r.passed for r in rows)


# union bound ---------------------------------------------------------------

def test_union_bound_examples():
    assert union_bound_m([UnionFamily(1, 1.0, 0.125)]) == 355
    assert 512 * math.log(2) < 355 and 512 * math.log(2) > 354
    assert union_bound_m([UnionFamily(2, 1.0, 0.125)]) == math.ceil(512 * math.log(4)) == 710
    assert union_bound_m([UnionFamily(1, 4.0, 0.25)]) == 355


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 10 ** 30), st.floats(0.01, 100), st.floats(1e-3, 0.99)),
                min_size=1, max_size=5))
def test_union_bound_is_the_threshold(params):
    fams = [UnionFamily(c, M, e) for c, M, e in params]
    m = union_bound_m(fams)
    assert union_log_sum(fams, m) < 0
    if m > 1:
        assert union_log_sum(fams, m - 1) >= 0


def test_union_bound_huge_cardinality():
    card = 10 ** 400
    m = union_bound_m([UnionFamily(card, 1.0, 0.125)])
    assert m == math.floor(512 * (math.log(2) + 400 * math.log(10))) + 1


def test_union_family_validation():
    with pytest.raises(DomainError):
        UnionFamily(0, 1.0, 0.1)
    with pytest.raises(DomainError):
        UnionFamily(1, 0.0, 0.1)
    with pytest.raises(DomainError):
        UnionFamily(1, 1.0, 1.0)


def test_eta_schedule():
    assert eta_schedule(0, 1) == [Fraction(1, 8)]
    s = eta_schedule(-10, 4)
    assert len(s) == 14 and s[0] == Fraction(1, 112)
    for j0, J in [(-78, 41), (-3, 4), (5, 6)]:
        assert sum(eta_schedule(j0, J)) == Fraction(1, 8)
    with pytest.raises(DomainError):
        eta_schedule(3, 3)


# budgets -------------------------------------------------------------------

def test_theorem_budget_examples():
    assert theorem_budget(1, 1, 1, 1, 1) == pytest.approx(1.0)
    assert theorem_budget(1, 2, 1, 1, 1) == pytest.approx(8.0)
    assert theorem_budget(7, 1.5, 2, 3.0, 2) == pytest.approx(7 * theorem_budget(7, 1.5, 2, 3.0, 1))
    with pytest.raises(DomainError):
        theorem_budget(4, 0.5, 1)


@given(st.floats(1, 1e4), st.floats(1, 100), st.floats(1, 4), st.floats(0.1, 10), st.floats(1, 3))
def test_theorem_budget_monotone(N, B, q, C, alpha):
    base = theorem_budget(N, B, q, C, alpha)
    assert theorem_budget(N * 2, B, q, C, alpha) >= base
    assert theorem_budget(N, B * 2, q, C, alpha) >= base
    assert theorem_budget(N, B, q, C * 2, alpha) >= base
    assert theorem_budget(N, B, q, C, alpha + 1) >= base


def test_single_level_families():
    fams = ladder_families({5: 1}, 0.5, 1.0, 4, 5)
    assert len(fams) == 1
    f = fams[0]
    assert f.cardinality == 1 and f.sup_bound == pytest.approx(1.5 ** 5) and f.tolerance == 0.125


def test_families_products_and_monotonicity():
    sizes = {1: 40, 2: 12, 3: 3}
    fams = ladder_families(sizes, 0.25, 2.0, 0, 3)
    assert [f.cardinality for f in fams] == [40 * 12 * 3, 12 * 3, 3]
    assert [f.sup_bound for f in fams] == pytest.approx([1.25 ** 2, 1.25 ** 4, 1.25 ** 6])
    m = union_bound_m(fams)
    bigger = ladder_families({1: 40, 2: 13, 3: 3}, 0.25, 2.0, 0, 3)
    assert union_bound_m(bigger) >= m


def test_ladder_budget_report():
    ball = BallSampler(FrequencySet([0]), 1.0, Grid(1, 1), size=2001, field="real", probes=16)
    lad = build_ladder(ball, 0.5, -3, 1.0)
    rep = ladder_budget(lad)
    assert len(rep.families) == lad.J - lad.j0
    assert rep.m_star == union_bound_m(rep.families)
    d = json.loads(rep.to_json())
    assert {"families", "m_star", "theorem_budget", "N", "B", "q", "C"} <= set(d)
    assert {"card", "M", "eta"} <= set(d["families"][0])
    assert rep.theorem_budget == pytest.approx(theorem_budget(1, 1.0, 1.0))
