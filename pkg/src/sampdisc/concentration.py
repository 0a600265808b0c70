"""Tail bounds, union-bound sample sizes and point-count budgets."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConstraintViolation, DomainError


def bernstein_tail(m: int, eta: float, M: float) -> float:
    """``2 exp(-m eta^2 / (8 M))``, clamped to ``[0, 2]``.

    Bounds ``P(|sum g_nu| >= m eta)`` for independent centered ``g_nu`` with
    ``||g||_1 <= 2`` and ``||g||_inf <= M``.
    """
    if m < 1:
        raise DomainError("m must be >= 1")
    if not 0 < eta < 1:
        raise DomainError(f"eta must lie in (0, 1), got {eta}")
    if M <= 0:
        raise DomainError("M must be positive")
    return min(2.0, max(0.0, 2.0 * math.exp(-m * eta * eta / (8.0 * M))))


@dataclass(frozen=True)
class Family:
    """A centered bounded distribution with known ``E|g|`` and ``sup |g|``.

    ``sample_sums(rng, m, trials)`` returns ``trials`` independent sums of
    ``m`` i.i.d. copies.  When only ``sampler(rng, size)`` is given the sums
    are accumulated in blocks.
    """

    name: str
    l1: float
    sup: float
    sampler: Optional[Callable] = None
    sums: Optional[Callable] = None

    def validate(self, M: float) -> None:
        if self.l1 > 2:
            raise ConstraintViolation(f"{self.name}: E|g| = {self.l1} exceeds 2")
        if self.sup > M:
            raise ConstraintViolation(f"{self.name}: sup|g| = {self.sup} exceeds M = {M}")

    def sample_sums(self, rng: np.random.Generator, m: int, trials: int) -> np.ndarray:
        if self.sums is not None:
            return self.sums(rng, m, trials)
        out = np.zeros(trials)
        block = max(1, (1 << 22) // max(1, trials))
        done = 0
        while done < m:
            take = min(block, m - done)
            x = np.asarray(self.sampler(rng, (trials, take)), dtype=float)
            if np.any(np.abs(x) > self.sup * (1 + 1e-12)):
                raise ConstraintViolation(f"{self.name}: draw exceeds the declared sup {self.sup}")
            out += x.sum(axis=1)
            done += take
        return out


def bernoulli_family(M: float = 1.0, p: float = 0.5) -> Family:
    """``g = M (b - p) / max(p, 1 - p)`` with ``b ~ Bernoulli(p)``, so ``sup |g| = M``.

    For ``p = 1/2`` this is ``+-M``.  Sums are drawn exactly through the
    binomial law.
    """
    if not 0 < p < 1:
        raise DomainError("p must lie in (0, 1)")
    scale = M / max(p, 1 - p)

    def sums(rng, m, trials):
        return scale * (rng.binomial(m, p, size=trials) - m * p)

    return Family(name=f"bernoulli(p={p:g};M={M:g})", l1=2 * scale * p * (1 - p), sup=M, sums=sums)


def uniform_family(M: float = 1.0) -> Family:
    """``g`` uniform on ``[-M, M]``."""

    def sampler(rng, size):
        return rng.uniform(-M, M, size=size)

    return Family(name=f"uniform(M={M:g})", l1=M / 2, sup=M, sampler=sampler)


def mc_tail(family: Family, m: int, eta, trials: int, seed, M: Optional[float] = None):
    """Monte Carlo estimate of ``P(|sum_{nu<=m} g_nu| >= m eta)``.

    ``eta`` may be a scalar or a sequence; a sequence is evaluated on one
    shared set of sample paths, so the estimates are nonincreasing in
    ``eta``.  ``M`` defaults to the family's sup bound.
    """
    M = family.sup if M is None else M
    family.validate(M)
    if m < 1 or trials < 1:
        raise DomainError("m and trials must be >= 1")
    rng = np.random.default_rng(seed)
    s = np.abs(family.sample_sums(rng, m, trials))
    etas = np.atleast_1d(np.asarray(eta, dtype=float))
    probs = np.array([np.count_nonzero(s >= m * e) / trials for e in etas])
    return float(probs[0]) if np.ndim(eta) == 0 else probs


def binomial_slack(p: float, trials: int, sigmas: float = 3.0) -> float:
    """``sigmas`` standard deviations of a frequency estimate of probability ``p``."""
    p = min(max(p, 0.0), 1.0)
    return sigmas * math.sqrt(p * (1 - p) / trials)


@dataclass
class SweepRow:
    m: int
    eta: float
    M: float
    family: str
    empirical: float
    bound: float
    passed: bool


SWEEP_COLUMNS = ("m", "eta", "M", "family", "empirical", "bound", "pass")


def tail_sweep(families: Sequence[Family], ms=(100, 1000, 10_000), etas=(0.1, 0.2, 0.3),
               trials: int = 100_000, seed: int = 0) -> list[SweepRow]:
    """Compare ``mc_tail`` with ``bernstein_tail`` on a grid of ``(m, eta)``.

    A cell passes when the empirical frequency is at most the bound plus
    three binomial standard deviations.
    """
    rows = []
    for fi, fam in enumerate(families):
        for mi, m in enumerate(ms):
            ss = np.random.SeedSequence([seed, fi, mi])
            probs = mc_tail(fam, m, list(etas), trials, ss)
            for e, p in zip(etas, probs):
                b = bernstein_tail(m, e, fam.sup)
                ok = p <= b + binomial_slack(min(b, 1.0), trials)
                rows.append(SweepRow(m, float(e), fam.sup, fam.name, float(p), b, bool(ok)))
    return rows


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([r.m, f"{r.eta:g}", f"{r.M:g}", r.family, f"{r.empirical:.17g}",
                    f"{r.bound:.17g}", str(r.passed).lower()])
    return buf.getvalue()


@dataclass(frozen=True)
class UnionFamily:
    """A finite family: its cardinality, sup bound ``M_j`` and tolerance ``eta_j``.

    ``cardinality`` is an exact integer and may be astronomically large.
    """

    cardinality: int
    sup_bound: float
    tolerance: float

    def __post_init__(self):
        if int(self.cardinality) < 1:
            raise DomainError("cardinality must be >= 1")
        if self.sup_bound <= 0:
            raise DomainError("sup bound must be positive")
        if not 0 < float(self.tolerance) < 1:
            raise DomainError("tolerance must lie in (0, 1)")

    @property
    def log_cardinality(self) -> float:
        return math.log(int(self.cardinality))

    def to_dict(self) -> dict:
        return {"card": str(int(self.cardinality)), "log_card": self.log_cardinality,
                "M": self.sup_bound, "eta": float(self.tolerance)}


def union_log_sum(families: Sequence[UnionFamily], m: int) -> float:
    """``log(2 sum_j |F_j| exp(-m eta_j^2 / (8 M_j)))``."""
    terms = np.array([f.log_cardinality - m * float(f.tolerance) ** 2 / (8.0 * f.sup_bound)
                      for f in families])
    top = terms.max()
    return math.log(2.0) + float(top + math.log(np.exp(terms - top).sum()))


def union_bound_m(families: Sequence[UnionFamily]) -> int:
    """Smallest ``m`` with ``2 sum_j |F_j| exp(-m eta_j^2 / (8 M_j)) < 1``.

    The sum decreases strictly in ``m``; the search doubles an upper end
    and bisects.
    """
    if not families:
        raise DomainError("need at least one family")
    ok = lambda m: union_log_sum(families, m) < 0.0
    if ok(1):
        return 1
    lo, hi = 1, 2
    while not ok(hi):
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def eta_schedule(j0: int, J: int) -> list[Fraction]:
    """Constant tolerances ``1 / (8 (J - j0))`` over the levels ``j0 < j <= J``."""
    if J <= j0:
        raise DomainError("need J > j0")
    G = J - j0
    return [Fraction(1, 8 * G)] * G


def theorem_budget(N: float, B: float, q: float, C: float = 1.0, alpha: float = 1.0) -> float:
    """``C N^alpha B^q (log2(2 B N))^2``."""
    if N < 1:
        raise DomainError("N must be >= 1")
    if B < 1:
        raise DomainError("B must be >= 1")
    if q < 1 or alpha < 1:
        raise DomainError("q and alpha must be >= 1")
    if C <= 0:
        raise DomainError("C must be positive")
    return C * N ** alpha * B ** q * math.log2(2 * B * N) ** 2


@dataclass
class BudgetReport:
    families: list
    m_star: int
    theorem_budget: float
    N: int
    B: float
    q: float
    C: float = 1.0

    def to_dict(self) -> dict:
        return {"families": [f.to_dict() for f in self.families], "m_star": self.m_star,
                "theorem_budget": self.theorem_budget, "N": self.N, "B": self.B,
                "q": self.q, "C": self.C}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def ladder_families(net_sizes: dict, a: float, q: float, j0: int, J: int) -> list[UnionFamily]:
    """Families for levels ``j0 < j <= J`` from measured net sizes.

    ``|F_j| <= prod_{k=j..J} |A_k|``, ``M_j = (1+a)^(q j)``, and the
    tolerances come from :func:`eta_schedule`.
    """
    etas = eta_schedule(j0, J)
    fams = []
    card = 1
    for j in range(J, j0, -1):
        card *= int(net_sizes[j])
        fams.append(UnionFamily(card, (1.0 + a) ** (q * j), float(etas[0])))
    return fams[::-1]


def ladder_budget(ladder, q: Optional[float] = None, C: float = 1.0) -> BudgetReport:
    """Union-bound sample size from the measured net sizes of ``ladder``."""
    q = ladder.q if q is None else q
    sizes = {j: len(ladder.nets[j]) for j in ladder.levels}
    fams = ladder_families(sizes, ladder.a, q, ladder.j0, ladder.J)
    N = ladder.ball.N
    return BudgetReport(families=fams, m_star=union_bound_m(fams),
                        theorem_budget=theorem_budget(N, ladder.B, q, C), N=N, B=ladder.B, q=q, C=C)
