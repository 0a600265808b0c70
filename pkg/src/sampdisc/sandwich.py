"""Sandwiching |f| between multiples of a piecewise-constant function.

A ladder of nets at radii ``a (1+a)^j`` assigns to each ``f`` its nearest
centers ``A_j(f)``.  The level sets

    U_j(f) = {x : |A_j(f)(x)| >= (1+a)^(j-1)}

are turned into disjoint strata ``D_j(f)`` (the highest level whose set
contains ``x``) plus a remainder ``D_{j0}(f)``, and

    h(f, x) = (1+a)^j  on D_j(f),   0 on D_{j0}(f).

Whenever ``||f - A_j(f)||_inf <= a (1+a)^j`` at every level,
``C1(a) h <= |f| <= C2(a) h`` off the remainder and ``|f| <= (1+a)^j0 C2(a)``
on it.  All sets and integrals live on the grid nodes.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .entropy import BallSampler, _LB_SAFETY, _net_from_prefix
from .errors import DomainError, InvalidLadder, NormalizationError, PremiseFailed, SurrogateTooCoarse
from .pointsets import PointSet
from .spaces import (
    SUP_SLACK,
    FrequencySet,
    Grid,
    TrigPoly,
    evaluate_coeffs,
    grid_values,
    lq_power,
    nikolskii_bound,
    random_units,
)

#: Relative allowance for floating-point rounding in pointwise checks.
CHECK_RTOL = 1e-12


def _check_a(a: float) -> None:
    if not 0 < a <= 0.5:
        raise DomainError(f"a must lie in (0, 1/2], got {a}")


def sandwich_constants(a: float) -> tuple[float, float]:
    """``C1(a) = (1 - a(1+a)) / (1+a)`` and ``C2(a) = 1 + a(1+a)``."""
    _check_a(a)
    return (1.0 - a * (1.0 + a)) / (1.0 + a), 1.0 + a * (1.0 + a)


def sampled_norm_bounds(norm_q_q: float, delta: float, a: float, j0: int, q: float) -> tuple[float, float]:
    """Range for ``||S(f, xi)||_q^q`` once ``h(f)`` is discretized within ``delta``.

    ``lower = C1^q (C2^-q (||f||^q - C2^q (1+a)^(q j0)) - delta)`` and
    ``upper = C2^q (1+a)^(q j0) + C2^q (C1^-q ||f||^q + delta)``.
    """
    c1, c2 = sandwich_constants(a)
    c1q, c2q = c1 ** q, c2 ** q
    tail = c2q * (1.0 + a) ** (q * j0)
    lower = c1q * ((norm_q_q - tail) / c2q - delta)
    upper = tail + c2q * (norm_q_q / c1q + delta)
    return lower, upper


class ParameterChoice(NamedTuple):
    a: float
    j0: int
    delta: float


def choose_parameters(q: float, delta: float = 0.125, norm_q_q: float = 0.5,
                      window=(0.25, 0.75), max_halvings: int = 40,
                      min_j0: int = -100_000) -> ParameterChoice:
    """Largest ``a`` in ``1/2, 1/4, ...`` and then largest ``j0 <= 0`` such that
    :func:`sampled_norm_bounds` lands inside ``window`` and ``C1(a)^-q <= 2``.

    The defaults are the regime ``||f||_q^q = 1/2``, ``delta = 1/8`` where
    the window ``[1/4, 3/4]`` is ``[1/2, 3/2] ||f||_q^q``.
    """
    if q < 1:
        raise DomainError("q must lie in [1, inf)")
    lo_w, hi_w = window
    for h in range(1, max_halvings + 1):
        a = 2.0 ** -h
        c1, c2 = sandwich_constants(a)
        if c1 ** -q > 2:
            continue
        # j0 -> -inf limit of the bounds; strict feasibility needed for finite j0
        lim_lo = c1 ** q * (norm_q_q / c2 ** q - delta)
        lim_hi = c2 ** q * (norm_q_q / c1 ** q + delta)
        if not (lim_lo > lo_w and lim_hi < hi_w):
            continue
        j0 = 0
        while j0 >= min_j0:
            lo, hi = sampled_norm_bounds(norm_q_q, delta, a, j0, q)
            if lo >= lo_w and hi <= hi_w:
                return ParameterChoice(a, j0, delta)
            j0 -= 1
    raise DomainError(f"no feasible (a, j0) for q={q} within the schedule")


def ladder_top(a: float, B: float, N: int, q: float) -> int:
    """The integer ``J`` with ``(1+a)^(J-1) <= 4 B N^(1/q) < (1+a)^J``."""
    _check_a(a)
    X = nikolskii_bound(B, N, q)
    J = int(math.floor(math.log(X) / math.log1p(a))) + 1
    while (1 + a) ** J <= X:
        J += 1
    while (1 + a) ** (J - 1) > X:
        J -= 1
    return J


@dataclass
class NetLadder:
    """Nets ``A_j`` at radius ``a (1+a)^j`` for ``j0 < j <= J``."""

    a: float
    j0: int
    J: int
    B: float
    q: float
    ball: BallSampler
    nets: dict
    resolution_limited: bool = False

    @property
    def levels(self) -> range:
        return range(self.j0 + 1, self.J + 1)

    @property
    def grid(self) -> Grid:
        return self.ball.grid

    @property
    def space(self) -> FrequencySet:
        return self.ball.space

    def radius(self, j: int) -> float:
        return self.a * (1.0 + self.a) ** j

    def metadata(self) -> dict:
        return {
            "a": self.a, "j0": self.j0, "J": self.J, "B": self.B, "q": self.q,
            "surrogate_size": self.ball.size, "grid_M": self.grid.points_per_dim,
            "resolution_limited": self.resolution_limited,
            "levels": [{"j": j, "radius": self.radius(j), "net_size": len(self.nets[j]),
                        "covering_radius": self.nets[j].covering_radius} for j in self.levels],
        }

    def metadata_json(self) -> str:
        return json.dumps(self.metadata(), sort_keys=True, indent=2)


def build_ladder(ball: BallSampler, a: float, j0: int, B: float,
                 allow_coarse: bool = False) -> NetLadder:
    """Greedy nets of ``ball`` at every level ``j0 < j <= J``.

    ``J`` comes from ``B`` through :func:`ladder_top`.  All levels are
    prefixes of one farthest-point traversal.  ``SurrogateTooCoarse`` is
    raised when the finest radius is below twice the surrogate resolution,
    unless ``allow_coarse``: then the nets still cover every surrogate
    member exactly and the ladder is flagged ``resolution_limited``.
    ``InvalidLadder`` is raised when a member reaches ``(1+a)^J`` in sup
    norm, which would make level ``J + 1`` nonempty.
    """
    _check_a(a)
    if B < 1:
        raise DomainError("B must be >= 1")
    J = ladder_top(a, B, ball.N, ball.q)
    if not j0 < J:
        raise DomainError(f"need j0 < J, got j0={j0}, J={J}")
    finest = a * (1.0 + a) ** (j0 + 1)
    limited = False
    if finest < 2 * ball.resolution:
        if not allow_coarse:
            raise SurrogateTooCoarse(
                f"finest radius {finest:.3g} is below twice the surrogate resolution {ball.resolution:.3g}"
            )
        limited = True
    sup = float(ball.sup_norms().max())
    if sup * SUP_SLACK >= (1.0 + a) ** J:
        raise InvalidLadder(f"surrogate sup norm {sup:.4g} reaches (1+a)^J = {(1 + a) ** J:.4g}; B={B} too small")
    trav = ball.traversal(finest)
    nets = {}
    for j in range(j0 + 1, J + 1):
        r = a * (1.0 + a) ** j
        nets[j] = _net_from_prefix(ball, trav, trav.prefix_for_radius(r), r, ball.resolution)
    return NetLadder(a=a, j0=j0, J=J, B=B, q=ball.q, ball=ball, nets=nets, resolution_limited=limited)


class NearestCenter(NamedTuple):
    center: TrigPoly
    index: int
    distance: float
    slack: float


def nearest_net_map(f: TrigPoly, ladder: NetLadder, j: int) -> NearestCenter:
    """Closest center of level ``j`` to ``f`` in (grid) sup distance.

    ``slack`` is how far the distance exceeds the level radius; it is zero
    for every surrogate member.  Ties go to the lowest center index.
    """
    net = ladder.nets[j]
    pos, dist = ladder.ball.nearest(np.asarray(f.coeffs), net.indices)
    return NearestCenter(TrigPoly(ladder.space, net.centers[pos]), pos, dist,
                         max(0.0, dist - net.radius))


def _nearest_all_levels(c: np.ndarray, ladder: NetLadder) -> dict:
    """Nearest center at every level, reusing work across the nested prefixes."""
    ball = ladder.ball
    finest = ladder.nets[ladder.j0 + 1].indices
    lb = ball.l2_dist_to(c, finest) * _LB_SAFETY
    best_d, best_p, done = math.inf, -1, 0
    out = {}
    for j in range(ladder.J, ladder.j0, -1):
        p = len(ladder.nets[j])
        if p > done:
            new = np.arange(done, p)
            new = new[np.argsort(lb[new], kind="stable")]
            for lo in range(0, new.shape[0], 64):
                blk = new[lo:lo + 64]
                blk = blk[lb[blk] < best_d]
                if blk.shape[0] == 0:
                    break
                d = ball.sup_dist_to(c, finest[blk])
                for q_, v in zip(blk, d):
                    if v < best_d or (v == best_d and q_ < best_p):
                        best_d, best_p = float(v), int(q_)
            done = p
        out[j] = (best_p, best_d)
    return out


@dataclass
class SandwichDecomposition:
    """Stratum labels of the grid nodes and the resulting ``h`` values.

    ``labels[x] == j`` for nodes in ``D_j`` (``j0 < j <= J``) and
    ``labels[x] == j0`` for the remainder ``D_{j0}``.
    """

    labels: np.ndarray
    h: np.ndarray
    abs_f: np.ndarray
    j0: int
    J: int
    centers: dict
    distances: dict
    max_slack: float
    scale: float = 1.0

    def level_counts(self) -> dict:
        vals, cnt = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, cnt)}

    def to_csv(self, grid: Grid) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node", *[f"x{i}" for i in range(grid.dim)], "label", "h", "abs_f"])
        for i, (x, lab, hv, fv) in enumerate(zip(grid.nodes, self.labels, self.h, self.abs_f)):
            w.writerow([i, *[f"{v:.17g}" for v in x], "j0" if lab == self.j0 else int(lab),
                        f"{hv:.17g}", f"{fv:.17g}"])
        return buf.getvalue()


def _labels_from_centers(center_vals: dict, ladder: NetLadder) -> np.ndarray:
    labels = None
    for j in range(ladder.J, ladder.j0, -1):
        inside = center_vals[j] >= (1.0 + ladder.a) ** (j - 1)
        if labels is None:
            labels = np.full(inside.shape[0], ladder.j0, dtype=np.int64)
        labels[(labels == ladder.j0) & inside] = j
    return labels


def decompose(f: TrigPoly, ladder: NetLadder, rescale: bool = False,
              tol: float = 1e-6) -> SandwichDecomposition:
    """Strata ``D_j(f)`` on the grid nodes and the step function ``h(f)``.

    ``f`` must satisfy ``||f||_q^q = 1/2`` within ``tol``; with ``rescale``
    it is scaled to that normalization first and ``scale`` records the
    factor applied.
    """
    space, grid, q = ladder.space, ladder.grid, ladder.q
    power = float(lq_power(space, f.coeffs, q, grid))
    scale = 1.0
    if rescale:
        scale = (0.5 / power) ** (1.0 / q)
        f = f.scaled(scale)
        power = 0.5
    elif abs(power - 0.5) > tol:
        raise NormalizationError(f"||f||_q^q = {power:.8g}, expected 1/2")
    c = np.asarray(f.coeffs)
    nearest = _nearest_all_levels(c, ladder)
    cache, center_vals, centers, distances = {}, {}, {}, {}
    max_slack = 0.0
    for j, (pos, dist) in nearest.items():
        net = ladder.nets[j]
        if pos not in cache:
            cache[pos] = np.abs(grid_values(space, net.centers[pos], grid))
        center_vals[j] = cache[pos]
        centers[j] = int(net.indices[pos])
        distances[j] = dist
        max_slack = max(max_slack, dist - net.radius)
    labels = _labels_from_centers(center_vals, ladder)
    h = np.where(labels == ladder.j0, 0.0, (1.0 + ladder.a) ** labels.astype(float))
    abs_f = np.abs(grid_values(space, c, grid))
    return SandwichDecomposition(labels=labels, h=h, abs_f=abs_f, j0=ladder.j0, J=ladder.J,
                                 centers=centers, distances=distances,
                                 max_slack=max(0.0, max_slack), scale=scale)


@dataclass
class SandwichCheck:
    nodes: int
    lower_violations: int
    upper_violations: int
    remainder_violations: int
    lower_margin: float
    upper_margin: float
    remainder_margin: float
    partition_ok: bool
    max_slack: float

    @property
    def violations(self) -> int:
        return self.lower_violations + self.upper_violations + self.remainder_violations

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["violations"] = self.violations
        return d


def check_sandwich(f: TrigPoly, dec: SandwichDecomposition, ladder: NetLadder) -> SandwichCheck:
    """Node-by-node check of ``C1 h <= |f| <= C2 h`` off the remainder and of
    ``|f| <= (1+a)^j0 C2`` on it.

    Margins are relative: ``|f| / (C1 h) - 1``, ``1 - |f| / (C2 h)`` and
    ``1 - |f| / ((1+a)^j0 C2)``, minimized over the relevant nodes
    (``inf`` when no node is relevant).  ``f`` is the function passed to
    :func:`decompose`, before any rescaling.
    """
    c1, c2 = sandwich_constants(ladder.a)
    abs_f = dec.abs_f
    rem = dec.labels == ladder.j0
    on = ~rem
    valid = np.isin(dec.labels, np.arange(ladder.j0, ladder.J + 1))
    partition_ok = bool(valid.all()) and (on.sum() + rem.sum() == dec.labels.shape[0])
    lo_b = c1 * dec.h[on]
    hi_b = c2 * dec.h[on]
    rem_b = (1.0 + ladder.a) ** ladder.j0 * c2
    lower_v = int(np.count_nonzero(abs_f[on] < lo_b * (1 - CHECK_RTOL)))
    upper_v = int(np.count_nonzero(abs_f[on] > hi_b * (1 + CHECK_RTOL)))
    rem_v = int(np.count_nonzero(abs_f[rem] > rem_b * (1 + CHECK_RTOL)))
    lower_m = float(np.min(abs_f[on] / lo_b - 1.0)) if on.any() else math.inf
    upper_m = float(np.min(1.0 - abs_f[on] / hi_b)) if on.any() else math.inf
    rem_m = float(np.min(1.0 - abs_f[rem] / rem_b)) if rem.any() else math.inf
    return SandwichCheck(nodes=int(dec.labels.shape[0]), lower_violations=lower_v,
                         upper_violations=upper_v, remainder_violations=rem_v,
                         lower_margin=lower_m, upper_margin=upper_m, remainder_margin=rem_m,
                         partition_ok=partition_ok, max_slack=dec.max_slack)


@dataclass
class SampledNormReport:
    norm_q_q: float
    h_norm: float
    h_norm_by_levels: float
    sampled_h: float
    sampled_h_by_levels: float
    sampled_f: float
    delta: float
    premise_holds: bool
    bounds: tuple
    conclusion_holds: Optional[bool]
    identity_error: float
    m: int

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["bounds"] = list(self.bounds)
        return d


def labels_at(dec: SandwichDecomposition, ladder: NetLadder, points: np.ndarray) -> np.ndarray:
    """Stratum labels at arbitrary points, from the centers chosen in ``dec``."""
    space = ladder.space
    vals, cache = {}, {}
    for j, idx in dec.centers.items():
        if idx not in cache:
            cache[idx] = np.abs(evaluate_coeffs(space.freqs, ladder.ball.coeffs[idx], points))
        vals[j] = cache[idx]
    return _labels_from_centers(vals, ladder)


def sampled_norm_check(f: TrigPoly, xi: PointSet, ladder: NetLadder, delta: float = 0.125,
                   dec: Optional[SandwichDecomposition] = None,
                   strict: bool = False) -> SampledNormReport:
    """Check the discretization premise for ``h(f)`` on ``xi`` and, when it
    holds, whether ``||S(f, xi)||_q^q`` lies within :func:`sampled_norm_bounds`.

    ``||h||_q^q`` and its sampled counterpart are computed both directly and
    as sums over strata of ``(1+a)^(qj)`` times the stratum measure; the
    strata are disjoint, so the two agree.  With ``strict`` a failed premise
    raises ``PremiseFailed``.
    """
    a, q, j0 = ladder.a, ladder.q, ladder.j0
    if dec is None:
        dec = decompose(f, ladder)
    grid = ladder.grid
    norm_q_q = float(np.mean(dec.abs_f ** q))
    h_norm = float(np.mean(dec.h ** q))
    counts = dec.level_counts()
    h_levels = sum((1.0 + a) ** (q * j) * cnt / grid.size for j, cnt in sorted(counts.items()) if j != j0)
    lab = labels_at(dec, ladder, xi.points)
    w = xi.weights
    h_xi = np.where(lab == j0, 0.0, (1.0 + a) ** lab.astype(float))
    sampled_h = float(np.dot(w, h_xi ** q))
    sampled_levels = 0.0
    for j in range(j0 + 1, ladder.J + 1):
        sel = lab == j
        if sel.any():
            sampled_levels += (1.0 + a) ** (q * j) * float(w[sel].sum())
    f_xi = np.abs(evaluate_coeffs(ladder.space.freqs, np.asarray(f.coeffs) * dec.scale, xi.points))
    sampled_f = float(np.dot(w, f_xi ** q))
    premise = abs(sampled_h - h_norm) <= delta
    bounds = sampled_norm_bounds(norm_q_q, delta, a, j0, q)
    conclusion = (bounds[0] <= sampled_f <= bounds[1]) if premise else None
    ident = max(abs(h_norm - h_levels), abs(sampled_h - sampled_levels))
    rep = SampledNormReport(norm_q_q=norm_q_q, h_norm=h_norm, h_norm_by_levels=h_levels,
                    sampled_h=sampled_h, sampled_h_by_levels=sampled_levels, sampled_f=sampled_f,
                    delta=delta, premise_holds=premise, bounds=bounds, conclusion_holds=conclusion,
                    identity_error=ident, m=xi.m)
    if strict and not premise:
        raise PremiseFailed(f"|S(h) - ||h||| = {abs(sampled_h - h_norm):.4g} exceeds delta={delta}", rep)
    return rep


def half_norm_batch(space: FrequencySet, q: float, count: int, seed: int, grid: Grid) -> np.ndarray:
    """``count`` Gaussian draws normalized to ``||f||_q^q = 1/2`` (rows)."""
    return random_units(space, q, 0.5, count, seed, grid).T.copy()


def sandwich_ball(space: FrequencySet, q: float, grid: Grid, batch: np.ndarray,
                  size: int = 10_000, seed: int = 0, **kwargs) -> BallSampler:
    """Surrogate ball that contains ``batch`` as members, so the nets cover it."""
    return BallSampler(space, q, grid, size=size, seed=seed, extra=batch, **kwargs)
