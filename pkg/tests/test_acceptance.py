"""Acceptance checks, one test per criterion.

Each test prints a single ``PASS criterion N: ...`` or ``FAIL criterion N: ...``
line as it finishes and then asserts the criterion at its stated tolerance.
The lines are repeated together in an "acceptance criteria" section at the
end of the run.  Run ``python tests/test_acceptance.py``
to get just the eight summary lines.
"""
import math
import sys
import time

import numpy as np
import pytest

from sampdisc.concentration import (
    UnionFamily, bernoulli_family, binomial_slack, ladder_budget, tail_sweep, uniform_family,
    union_bound_m,
)
from sampdisc.entropy import BallSampler, entropy_number_bracket, greedy_net, packing_lower
from sampdisc.pointsets import certify_q2, derive_seed, equispaced, sample_grid, sample_uniform, search_pointset
from sampdisc.sandwich import (
    sampled_norm_bounds, sampled_norm_check, build_ladder, check_sandwich, choose_parameters, decompose,
    half_norm_batch, sandwich_ball,
)
from sampdisc.spaces import (
    FrequencySet, Grid, TrigPoly, condition_e_constant, frequency_range, hyperbolic_cross,
    hyperbolic_cross_size, random_units, real_trig_system, rho_block, sup_norm,
)

pytestmark = pytest.mark.acceptance


# 1 -------------------------------------------------------------------------

def test_criterion_1_exact_equispaced_certification(criterion_report):
    t0 = time.perf_counter()
    worst = 0.0
    for n in range(1, 17):
        rep = certify_q2(frequency_range(n), equispaced(2 * n + 1))
        worst = max(worst, abs(rep.lower - 1), abs(rep.upper - 1))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and dt < 1.0
    criterion_report(1, ok, f"n=1..16, m=2n+1: max |lambda - 1| = {worst:.2e} (tol 1e-10), {dt:.3f} s (< 1 s)")
    assert worst <= 1e-10
    assert dt < 1.0


# 2 -------------------------------------------------------------------------

def _real_system_cases():
    cases = [(n, 1) for n in range(1, 33)]          # N = 2n+1 = 3..65
    cases += [(n, 2) for n in range(1, 4)]          # N = (2n+1)^2 = 9, 25, 49
    return cases


def test_criterion_2_random_points_full_trig_system(criterion_report):
    t0 = time.perf_counter()
    seeds = 50
    worst_t, worst_rate, worst_case = 0.0, 1.0, None
    rates, fails_hi, fails_lo = {}, 0, 0
    for n, d in _real_system_cases():
        space = frequency_range(n, d)
        N = len(space)
        t = condition_e_constant(real_trig_system(space), Grid(d, 4 * n + 3))
        worst_t = max(worst_t, abs(t - 1.0))
        m = math.ceil(8 * N * math.log(N))
        reps = [certify_q2(space, sample_uniform(m, d, derive_seed(s, d, N))) for s in range(seeds)]
        ok = sum(r.passed for r in reps)
        fails_hi += sum(r.upper > 1.5 for r in reps)
        fails_lo += sum(r.lower < 0.5 for r in reps)
        rates[(d, N)] = ok / seeds
        if ok / seeds < worst_rate:
            worst_rate, worst_case = ok / seeds, (d, N)
    dt = time.perf_counter() - t0
    below = sorted(k for k, r in rates.items() if r < 0.9)
    ok = worst_t <= 1e-12 and not below and dt < 60
    detail = (f"|t - 1| <= {worst_t:.1e}; {len(rates)} (d, N) cases, m = ceil(8 N ln N), "
              f"min success rate {worst_rate:.2f} at (d, N) = {worst_case} (need >= 0.90); "
              f"pooled rate {np.mean(list(rates.values())):.2f}; cases below 0.90: {below or 'none'} "
              f"(runs with lambda_max > 3/2: {fails_hi}, lambda_min < 1/2: {fails_lo}); {dt:.1f} s (< 60 s)")
    criterion_report(2, ok, detail)
    assert worst_t <= 1e-12
    assert not below, f"success rate below 0.90 for {below}: {[rates[k] for k in below]}"
    assert dt < 60


# 3 -------------------------------------------------------------------------

def _enumerated_cross_size(d, n):
    # direct enumeration over all s >= 0 with |s|_1 <= n
    import itertools
    seen = set()
    for s in itertools.product(range(n + 1), repeat=d):
        if sum(s) <= n:
            seen.update(map(tuple, rho_block(s).freqs.tolist()))
    return len(seen)


def test_criterion_3_hyperbolic_cross_sizes(criterion_report):
    q1 = len(hyperbolic_cross(1, 2))
    q2 = len(hyperbolic_cross(2, 2))
    exact = q1 == 7 and q2 == 17 and _enumerated_cross_size(1, 2) == 7 and _enumerated_cross_size(2, 2) == 17
    spreads = {}
    for d in (1, 2, 3):
        r = [hyperbolic_cross_size(d, n) / (2 ** n * n ** (d - 1)) for n in range(3, 11)]
        spreads[d] = max(r) / min(r)
    ok = exact and all(v < 2 for v in spreads.values())
    criterion_report(3, ok, f"|Q_2| = {q1} (d=1), {q2} (d=2); ratio max/min over n=3..10: "
                  + ", ".join(f"d={d}: {v:.3f}" for d, v in spreads.items()) + " (need < 2)")
    assert exact
    assert all(v < 2 for v in spreads.values())


# 4 and 5 -------------------------------------------------------------------

SANDWICH_SPACES = {
    "T({-1,0,1})": (frequency_range(1), 64),
    "Q_1 (d=2, |Q|=5)": (hyperbolic_cross(2, 1), 64),
}


@pytest.fixture(scope="module")
def sandwich_runs():
    """One batch, surrogate and ladder per (space, q); shared by criteria 4 and 5."""
    out = {}
    t0 = time.perf_counter()
    for si, (name, (space, M)) in enumerate(SANDWICH_SPACES.items()):
        grid = Grid(space.dim, M)
        for q in (1.0, 2.0):
            seed = 100 * si + int(q)
            choice = choose_parameters(q, 0.125)
            batch = half_norm_batch(space, q, 200, seed, grid)
            ball = sandwich_ball(space, q, grid, batch, size=10_000, seed=seed + 1, probes=0)
            ladder = build_ladder(ball, choice.a, choice.j0, 1.0, allow_coarse=True)
            decs, checks = [], []
            for c in batch:
                f = TrigPoly(space, c)
                dec = decompose(f, ladder)
                decs.append(dec)
                checks.append(check_sandwich(f, dec, ladder))
            out[(name, q)] = dict(space=space, grid=grid, q=q, seed=seed, choice=choice, batch=batch,
                                  ladder=ladder, decs=decs, checks=checks)
    out["seconds"] = time.perf_counter() - t0
    return out


def test_criterion_4_sandwich_soundness(sandwich_runs, criterion_report):
    parts, ok = [], True
    for key, run in sandwich_runs.items():
        if key == "seconds":
            continue
        name, q = key
        on = sum(c.lower_violations + c.upper_violations for c in run["checks"])
        rem = sum(c.remainder_violations for c in run["checks"])
        part = all(c.partition_ok for c in run["checks"])
        xi = sample_grid(run["grid"], 1000, derive_seed(run["seed"], 9))
        ident = max(sampled_norm_check(TrigPoly(run["space"], c), xi, run["ladder"], 0.125, dec=d).identity_error
                    for c, d in zip(run["batch"], run["decs"]))
        good = on == 0 and rem == 0 and part and ident <= 1e-12
        ok &= good
        parts.append(f"{name} q={q:g}: off-remainder {on}, remainder {rem}, partition {part}, "
                     f"identity {ident:.1e}")
    dt = sandwich_runs["seconds"]
    ok &= dt < 300
    criterion_report(4, ok, "; ".join(parts) + f"; build {dt:.1f} s (< 300 s)")
    assert ok


def test_criterion_5_sampled_norm_implication(sandwich_runs, criterion_report):
    parts, ok = [], True
    for key, run in sandwich_runs.items():
        if key == "seconds":
            continue
        name, q = key
        ch = run["choice"]
        lo, hi = sampled_norm_bounds(0.5, 0.125, ch.a, ch.j0, q)
        inside = 0.25 <= lo <= hi <= 0.75
        m_star = ladder_budget(run["ladder"]).m_star
        premise = conclusion = 0
        for s in range(20):
            xi = sample_grid(run["grid"], m_star, derive_seed(run["seed"], 5, s))
            for c, dec in zip(run["batch"], run["decs"]):
                r = sampled_norm_check(TrigPoly(run["space"], c), xi, run["ladder"], 0.125, dec=dec)
                if r.premise_holds:
                    premise += 1
                    conclusion += bool(r.conclusion_holds)
        good = inside and conclusion == premise
        ok &= good
        parts.append(f"{name} q={q:g}: m*={m_star:.3g}, premise {premise}/4000, "
                     f"conclusion {conclusion}/{premise}, bounds [{lo:.4f}, {hi:.4f}] in [1/4, 3/4]: {inside}")
    criterion_report(5, ok, "; ".join(parts))
    assert ok


# 6 -------------------------------------------------------------------------

def test_criterion_6_concentration(criterion_report):
    t0 = time.perf_counter()
    rows = tail_sweep([bernoulli_family(1.0), uniform_family(1.0)], ms=(100, 1000, 10_000),
                      etas=(0.1, 0.2, 0.3), trials=100_000, seed=0)
    failed = [r for r in rows if not r.passed]
    # each row must satisfy empirical <= bound + 3 binomial standard deviations
    recheck = all(r.empirical <= r.bound + binomial_slack(r.bound, 100_000) for r in rows)
    m = union_bound_m([UnionFamily(1, 1.0, 0.125)])
    closed = math.floor(512 * math.log(2)) + 1
    dt = time.perf_counter() - t0
    ok = not failed and recheck and len(rows) == 18 and m == 355 == closed and dt < 120
    criterion_report(6, ok, f"{len(rows) - len(failed)}/{len(rows)} sweep rows within bound + 3 sd; "
                  f"union_bound_m((1, 1, 1/8)) = {m} (closed form {closed}); {dt:.1f} s (< 120 s)")
    assert ok


# 7 -------------------------------------------------------------------------

def test_criterion_7_entropy_brackets(criterion_report):
    const = BallSampler(FrequencySet([0]), 1.0, Grid(1, 1), size=4097, field="real", probes=64)
    worst_ratio, contain = 0.0, True
    for k in range(1, 11):
        b = entropy_number_bracket(const, k)
        contain &= b.lower <= 2.0 ** -k <= b.upper
        worst_ratio = max(worst_ratio, b.upper / b.lower)

    small = [
        ("{0} q=1", FrequencySet([0]), 1.0),
        ("T(1) q=1", frequency_range(1), 1.0),
        ("T(1) q=2", frequency_range(1), 2.0),
        ("Q_1 d=2 q=1", hyperbolic_cross(2, 1), 1.0),
    ]
    pack_ok, pack_tested, nik = True, 0, []
    for i, (name, space, q) in enumerate(small):
        grid = Grid.for_space(space, q)
        ball = BallSampler(space, q, grid, size=4000, seed=i, probes=64)
        for eps in (0.1, 0.2, 0.4, 0.8, 1.6):
            pack_tested += 1
            pack_ok &= packing_lower(ball, eps) <= len(greedy_net(ball, eps, allow_coarse=True))
        up = entropy_number_bracket(ball, 1).upper
        draws = random_units(space, q, 1.0, 1000, 1000 + i, grid)
        worst = max(sup_norm(TrigPoly(space, c), grid, refine=True) for c in draws.T)
        nik.append((name, worst, 4 * up))
    nik_ok = all(w <= b for _, w, b in nik)
    ok = contain and worst_ratio <= 4 and pack_ok and nik_ok
    criterion_report(7, ok, f"constant space k=1..10: contains 2^-k {contain}, max upper/lower {worst_ratio:.4f} (<= 4); "
                  f"packing <= greedy in {pack_tested} cases: {pack_ok}; sup over 1000 draws vs 4*eps1 upper: "
                  + ", ".join(f"{n} {w:.3f} <= {b:.3f}" for n, w, b in nik))
    assert contain and worst_ratio <= 4
    assert pack_ok
    assert nik_ok


# 8 -------------------------------------------------------------------------

@pytest.mark.slow
def test_criterion_8_scaling_budget(criterion_report):
    t0 = time.perf_counter()
    outcome = {}
    for q in (1.0, 2.0):
        for n in range(1, 5):
            space = hyperbolic_cross(2, n)
            N = len(space)
            m = math.ceil(N * n ** 3)
            grid = None if q == 2 else Grid.for_space(space, q)
            _, rep = search_pointset(space, q, m, (0.5, 1.5), restarts=10, seed=8000 + 10 * n + int(q), grid=grid)
            outcome[(q, n)] = (N, m, rep.passed, rep.lower, rep.upper)
    dt = time.perf_counter() - t0
    failed = [k for k, v in outcome.items() if not v[2]]
    ok = not failed and dt < 600
    criterion_report(8, ok, "; ".join(f"q={q:g} n={n} |Q_n|={v[0]} m={v[1]}: {'ok' if v[2] else 'no'} "
                            f"[{v[3]:.3f}, {v[4]:.3f}]" for (q, n), v in outcome.items())
           + f"; {dt:.1f} s (< 600 s)")
    assert not failed, f"no point set within 10 restarts for (q, n) in {failed}"
    assert dt < 600


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
