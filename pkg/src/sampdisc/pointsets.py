"""Sampling sets and Marcinkiewicz-type constants.

For a point set ``xi`` and a subspace, the discretization constants are the
extreme values of the ratio

    (1/m) sum_nu |f(xi^nu)|^q  /  ||f||_q^q

over nonzero ``f`` in the subspace.  For ``q = 2`` they are eigenvalues of an
empirical Gram matrix and are computed exactly.  For other ``q`` only inner
brackets are available: a best-found minimum and maximum of the ratio.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import SearchExhausted
from .spaces import (
    TWO_PI,
    FrequencySet,
    Grid,
    TrigPoly,
    check_resolution,
    evaluate_coeffs,
    exponential_matrix,
    grid_matrix,
    hyperbolic_cross,
    random_units,
)

DEFAULT_TARGET = (0.5, 1.5)


def derive_seed(seed: int, *index: int) -> np.random.SeedSequence:
    """Independent stream for (seed, index...)."""
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, index)])


def sub_seed(seed: int, *index: int) -> int:
    """Integer seed for the stream ``(seed, *index)``."""
    return int(derive_seed(seed, *index).generate_state(1)[0])


@dataclass(frozen=True)
class PointSet:
    """``m`` points on the torus, optionally with integer multiplicities.

    ``counts`` records repeated points compactly: a sample of ``m`` draws
    from a finite set of nodes is stored as the nodes plus how often each
    was drawn.  Without ``counts`` every point appears once.
    """

    points: np.ndarray
    provenance: str = "unspecified"
    counts: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] < 1:
            raise ValueError("a point set needs at least one point")
        if np.any(pts < 0) or np.any(pts >= TWO_PI):
            raise ValueError("coordinates must lie in [0, 2*pi)")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.counts is not None:
            cnt = np.asarray(self.counts, dtype=np.int64).reshape(-1)
            if cnt.shape[0] != pts.shape[0] or np.any(cnt < 0) or cnt.sum() < 1:
                raise ValueError("counts must be nonnegative, one per point, with positive total")
            cnt.setflags(write=False)
            object.__setattr__(self, "counts", cnt)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def m(self) -> int:
        return int(self.points.shape[0] if self.counts is None else self.counts.sum())

    @property
    def weights(self) -> np.ndarray:
        """Weight of each stored point in the averaging measure (sums to 1)."""
        if self.counts is None:
            return np.full(self.points.shape[0], 1.0 / self.points.shape[0])
        return self.counts / float(self.counts.sum())

    def union(self, other: "PointSet") -> "PointSet":
        """Multiset union; weights follow multiplicities."""
        a = np.ones(self.points.shape[0], dtype=np.int64) if self.counts is None else self.counts
        b = np.ones(other.points.shape[0], dtype=np.int64) if other.counts is None else other.counts
        counts = None if self.counts is None and other.counts is None else np.concatenate([a, b])
        return PointSet(np.vstack([self.points, other.points]), "union", counts)

    def to_text(self) -> str:
        pts = self.expanded()
        lines = [f"{self.dim} {pts.shape[0]}\n"]
        lines.extend(" ".join(f"{v:.17g}" for v in row) + "\n" for row in pts)
        return "".join(lines)

    def expanded(self) -> np.ndarray:
        if self.counts is None:
            return self.points
        return np.repeat(self.points, self.counts, axis=0)

    @classmethod
    def from_text(cls, text: str, provenance: str = "file") -> "PointSet":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        dim, m = (int(v) for v in lines[0].split())
        pts = np.array([[float(v) for v in ln.split()] for ln in lines[1:1 + m]], dtype=float)
        if pts.shape != (m, dim):
            raise ValueError(f"header announces {m} points of dim {dim}, found {pts.shape}")
        return cls(pts, provenance)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "PointSet":
        return cls.from_text(Path(path).read_text(), provenance=f"file:{path}")


def sample_uniform(m: int, d: int, seed) -> PointSet:
    """``m`` i.i.d. uniform points on ``[0, 2 pi)^d``."""
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    pts = rng.random((m, d)) * TWO_PI
    # x * 2pi can round up to 2pi for x just below 1
    pts[pts >= TWO_PI] = 0.0
    return PointSet(pts, f"uniform:seed={seed}")


def equispaced(m: int, d: int = 1) -> PointSet:
    """Nodes ``2 pi j / m``; for ``d > 1`` the tensor product with ``m^d`` points."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return PointSet(Grid(d, m).nodes, f"equispaced:m={m}")


def sample_grid(grid: Grid, m: int, seed) -> PointSet:
    """``m`` i.i.d. draws from the uniform measure on the grid nodes.

    The draws are stored as multiplicities, so ``m`` may be far larger than
    could be held point by point.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(m, np.full(grid.size, 1.0 / grid.size))
    return PointSet(grid.nodes, f"grid-sample:M={grid.points_per_dim},m={m},seed={seed}", counts)


def sampled_power(f: TrigPoly, xi: PointSet, q: float) -> float:
    """``(1/m) sum_nu |f(xi^nu)|^q``."""
    vals = np.abs(evaluate_coeffs(f.basis.freqs, f.coeffs, xi.points))
    return float(np.dot(xi.weights, vals ** q))


def sampled_norm(f: TrigPoly, xi: PointSet, q: float) -> float:
    """``||S(f, xi)||_q``: the q-mean of the values of ``f`` on ``xi``."""
    return sampled_power(f, xi, q) ** (1.0 / q)


@dataclass
class DiscretizationReport:
    """Bracketing constants for one (space, point set, q)."""

    q: float
    m: int
    N: int
    lower: float
    upper: float
    method: str
    target: tuple = DEFAULT_TARGET
    seed: Optional[int] = None
    trials: int = 0
    iterations: int = 0
    restarts: int = 0
    note: str = ""

    def __post_init__(self):
        self.lower = float(max(0.0, self.lower))
        self.upper = float(max(self.lower, self.upper))
        self.target = tuple(float(t) for t in self.target)

    @property
    def passed(self) -> bool:
        return self.lower >= self.target[0] and self.upper <= self.target[1]

    def shortfall(self) -> float:
        """How far the constants sit outside the target; <= 0 means pass."""
        return max(self.target[0] - self.lower, self.upper - self.target[1])

    def to_dict(self) -> dict:
        out = asdict(self)
        out["target"] = list(self.target)
        out["pass"] = self.passed
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def gram_extremes(values: np.ndarray, weights: np.ndarray) -> tuple[float, float]:
    """Extreme eigenvalues of ``sum_nu w_nu v_nu v_nu^*`` for rows ``v_nu`` of ``values``."""
    V = values * np.sqrt(weights)[:, None]
    G = V.conj().T @ V
    ev = np.linalg.eigvalsh(G)
    return float(ev[0]), float(ev[-1])


def support_size(xi: PointSet) -> int:
    """Number of distinct points carrying positive weight."""
    pts = xi.points[xi.weights > 0]
    return int(np.unique(pts, axis=0).shape[0])


def certify_q2(space: FrequencySet, xi: PointSet, target=DEFAULT_TARGET) -> DiscretizationReport:
    """Exact best constants for ``q = 2``.

    The exponentials are orthonormal, so ``||f||_2^2 = c^* c`` and the sampled
    power is ``c^* G c`` with ``G`` the empirical Gram matrix.  Its extreme
    eigenvalues are the optimal constants over the whole space.
    """
    E = exponential_matrix(space.freqs, xi.points)
    lo, hi = gram_extremes(E, xi.weights)
    if support_size(xi) < len(space):
        lo = 0.0  # rank deficiency: fewer distinct points than dimensions
    return DiscretizationReport(q=2.0, m=xi.m, N=len(space), lower=lo, upper=hi,
                                method="exact-eigen", target=target)


class _RatioProblem:
    """Sampled-to-integral power ratio as a function of coefficient columns."""

    def __init__(self, space: FrequencySet, xi: PointSet, q: float, grid: Grid):
        self.q = q
        self.Es = exponential_matrix(space.freqs, xi.points)
        self.ws = xi.weights
        self.Eg = grid_matrix(space, grid)

    def powers(self, C):
        vs = self.Es @ C
        vg = self.Eg @ C
        ps = self.ws @ (np.abs(vs) ** self.q)
        pg = np.mean(np.abs(vg) ** self.q, axis=0)
        return ps, pg, vs, vg

    def log_ratio(self, C):
        ps, pg, _, _ = self.powers(C)
        return np.log(ps) - np.log(pg)

    def grad_log_ratio(self, C):
        """Ascent direction of ``log(ratio)`` in the real coordinates of ``C``."""
        q = self.q
        ps, pg, vs, vg = self.powers(C)
        tiny = 1e-300
        ws = np.abs(vs)
        wg = np.abs(vg)
        # d|v|^q / d conj(c) = (q/2) |v|^(q-2) v  E^*
        ks = (np.maximum(ws, tiny) ** (q - 2)) * vs * self.ws[:, None]
        kg = (np.maximum(wg, tiny) ** (q - 2)) * vg / vg.shape[0]
        gs = q * (self.Es.conj().T @ ks)
        gg = q * (self.Eg.conj().T @ kg)
        g = gs / ps - gg / pg
        return np.log(ps) - np.log(pg), g


def _refine(problem: _RatioProblem, C: np.ndarray, sign: float, steps: int) -> np.ndarray:
    """Normalized-gradient ascent of ``sign * log ratio`` on the unit sphere.

    Each column runs its own step size, halved on rejection and grown on
    acceptance.  Returns the best log-ratio per column.
    """
    C = C / np.linalg.norm(C, axis=0)
    cur, g = problem.grad_log_ratio(C)
    cur = sign * cur
    step = np.full(C.shape[1], 0.25)
    for _ in range(steps):
        gn = np.linalg.norm(g, axis=0)
        gn[gn == 0] = 1.0
        trial = C + sign * step * g / gn
        trial /= np.linalg.norm(trial, axis=0)
        val, gt = problem.grad_log_ratio(trial)
        val = sign * val
        ok = val > cur
        C[:, ok] = trial[:, ok]
        g[:, ok] = gt[:, ok]
        cur = np.where(ok, val, cur)
        step = np.where(ok, np.minimum(step * 1.5, 1.0), step * 0.5)
        if np.all(step < 1e-10):
            break
    return sign * cur


def bracket_general_q(space: FrequencySet, xi: PointSet, q: float, trials: int, seed: int,
                      grid: Grid, optimizer_steps: int = 200, starts: int = 32,
                      target=DEFAULT_TARGET) -> DiscretizationReport:
    """Inner brackets for the discretization constants at general ``q``.

    Evaluates the ratio on ``trials`` Gaussian draws, then refines the
    ``starts`` most extreme ones in each direction by normalized-gradient
    steps (``optimizer_steps`` per start).  ``lower`` is the smallest ratio
    found, ``upper`` the largest: a necessary-condition check, not a
    certificate, since the true constants can only be more extreme.
    """
    if q < 1:
        raise ValueError("q must lie in [1, inf)")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    check_resolution(space, q, grid)
    problem = _RatioProblem(space, xi, q, grid)
    C0 = random_units(space, 2.0, 1.0, trials, derive_seed(seed, 0), grid)
    r = problem.log_ratio(C0)
    k = min(starts, trials)
    order = np.argsort(r, kind="stable")
    lo = float(r[order[0]])
    hi = float(r[order[-1]])
    if optimizer_steps > 0 and len(space) > 1:
        lo = min(lo, float(_refine(problem, C0[:, order[:k]].copy(), -1.0, optimizer_steps).min()))
        hi = max(hi, float(_refine(problem, C0[:, order[::-1][:k]].copy(), 1.0, optimizer_steps).max()))
    lower = math.exp(lo)
    if support_size(xi) < len(space):
        lower = 0.0  # some nonzero f vanishes on every point
    return DiscretizationReport(q=float(q), m=xi.m, N=len(space), lower=lower,
                                upper=math.exp(hi), method="random-adversarial", target=target,
                                seed=seed, trials=trials, iterations=optimizer_steps,
                                note="inner brackets from test functions, not a certificate")


def evaluate_pointset(space: FrequencySet, xi: PointSet, q: float, grid: Optional[Grid],
                      seed: int, target=DEFAULT_TARGET, trials: int = 256,
                      optimizer_steps: int = 200, starts: int = 32) -> DiscretizationReport:
    """``certify_q2`` for ``q == 2``, ``bracket_general_q`` otherwise."""
    if q == 2:
        return certify_q2(space, xi, target)
    if grid is None:
        grid = Grid.for_space(space, q)
    return bracket_general_q(space, xi, q, trials, seed, grid, optimizer_steps, starts, target)


def search_pointset(space: FrequencySet, q: float, m: int, target=DEFAULT_TARGET,
                    restarts: int = 10, seed: int = 0, grid: Optional[Grid] = None,
                    trials: int = 256, optimizer_steps: int = 200, starts: int = 32,
                    threads: int = 1, strict: bool = False):
    """Random restarts until a uniform sample of ``m`` points meets ``target``.

    Restart ``r`` draws its points from the stream ``(seed, r)``.  Returns
    the first passing ``(PointSet, report)``, or the one with the smallest
    shortfall.  ``report.restarts`` records how many restarts were used.
    With ``strict=True`` an unsuccessful search raises ``SearchExhausted``
    carrying the best result.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")

    def attempt(r):
        xi = sample_uniform(m, space.dim, derive_seed(seed, r))
        rep = evaluate_pointset(space, xi, q, grid, sub_seed(seed, r, 1),
                                target, trials, optimizer_steps, starts)
        return xi, rep

    best = None
    batch = max(1, int(threads))
    with ThreadPoolExecutor(max_workers=batch) as pool:
        for lo in range(0, restarts, batch):
            results = list(pool.map(attempt, range(lo, min(restarts, lo + batch))))
            for r, (xi, rep) in enumerate(results, start=lo):
                rep.restarts = r + 1
                if rep.passed:
                    return xi, rep
                if best is None or rep.shortfall() < best[1].shortfall():
                    best = (xi, rep)
    best[1].restarts = restarts
    if strict:
        raise SearchExhausted(f"no point set of size {m} met {target} in {restarts} restarts",
                              best[0], best[1])
    return best


def default_schedule(n: int, N: int) -> list[int]:
    """Geometric m-schedule from ``N`` up to ``N * max(n, 1)^3 * 4`` by factors sqrt(2)."""
    top = N * max(n, 1) ** 3 * 4
    out, m = [], float(N)
    while m <= top:
        out.append(int(math.ceil(m)))
        m *= math.sqrt(2.0)
    return sorted(set(out))


@dataclass
class ScalingRow:
    n: int
    N: int
    m_found: Optional[int]
    restarts_used: Optional[int]
    budget_n3: float
    budget_n72: float
    lower: Optional[float] = None
    upper: Optional[float] = None
    complete: bool = True

    def as_dict(self) -> dict:
        return asdict(self)


SCALING_COLUMNS = ("n", "N", "m_found", "restarts_used", "budget_n3", "budget_n72",
                   "lower", "upper", "complete")


def scaling_study(d: int, ns: Iterable[int], q: float, target=DEFAULT_TARGET,
                  schedule: Callable[[int, int], Sequence[int]] = default_schedule,
                  seed: int = 0, restarts: int = 10, grid_for: Optional[Callable] = None,
                  trials: int = 256, optimizer_steps: int = 200, starts: int = 32) -> list[ScalingRow]:
    """Smallest scheduled ``m`` reaching ``target`` on hyperbolic crosses.

    For each ``n`` the schedule is scanned in increasing order of ``m``; the
    first ``m`` for which :func:`search_pointset` passes is recorded.  Rows
    whose schedule is exhausted are marked ``complete=False``.  Budget
    columns give ``|Q_n| n^3`` and ``|Q_n| n^(7/2)`` for comparison.
    """
    rows = []
    for n in ns:
        space = hyperbolic_cross(d, n)
        N = len(space)
        grid = grid_for(space, q) if grid_for else (None if q == 2 else Grid.for_space(space, q))
        row = ScalingRow(n=n, N=N, m_found=None, restarts_used=None,
                         budget_n3=float(N * n ** 3), budget_n72=float(N * n ** 3.5), complete=False)
        for m in sorted(set(int(v) for v in schedule(n, N))):
            if m < N:
                continue
            _, rep = search_pointset(space, q, m, target, restarts, sub_seed(seed, n, m),
                                     grid, trials, optimizer_steps, starts)
            if rep.passed:
                row.m_found, row.restarts_used = m, rep.restarts
                row.lower, row.upper, row.complete = rep.lower, rep.upper, True
                break
        rows.append(row)
    return rows
