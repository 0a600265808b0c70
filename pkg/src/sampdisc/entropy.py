"""Covering numbers and entropy numbers of L_q unit balls in the sup norm.

The unit ball ``{f : ||f||_q <= 1}`` of a trigonometric subspace is replaced
by a finite surrogate (a coefficient mesh or a random cloud).  Everything
else is read off one farthest-point traversal of the surrogate:

* the first ``p`` traversal points form a greedy net whose covering radius
  is the insertion distance of point ``p + 1``;
* the traversal points inserted at distance ``> 2 eps`` are pairwise more
  than ``2 eps`` apart and every other member lies within ``2 eps`` of
  them, so they form a maximal ``2 eps``-separated subset.

Net centers are surrogate members, hence members of the ball.  Sup
distances are grid maxima; the prune uses ``||g||_inf >= ||g||_2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DomainError, SurrogateTooCoarse
from .spaces import (
    FrequencySet,
    Grid,
    check_resolution,
    grid_matrix,
    hyperbolic_cross_size,
    lq_power,
)

_LB_SAFETY = 1.0 - 1e-9
_VALUE_CACHE_LIMIT = 1 << 23
_CHUNK = 1 << 21


class BallSampler:
    """Finite surrogate for ``{f in T(Q) : ||f||_q <= 1}``.

    Parameters
    ----------
    space, q, grid
        The subspace, the exponent, and the reference grid for all norms
        and sup distances.
    size : int
        Cloud cardinality, or the number of cube-mesh points before the
        points outside the ball are discarded.
    seed : int
        Seed for the cloud and the resolution probes.
    field : {"complex", "real"}
        Coefficient field.  The real field gives the ball of real
        combinations of the exponentials.
    kind : {"auto", "mesh", "cloud"}
        ``auto`` meshes real dimension <= 4 and samples a cloud otherwise.
    extra : array, optional
        Coefficient rows appended to the surrogate, each inside the ball.
        Functions placed here are guaranteed to be covered by every net.
    probes : int
        Ball draws used to estimate the surrogate resolution.
    """

    def __init__(self, space: FrequencySet, q: float, grid: Grid, size: int = 10_000,
                 seed: int = 0, field: str = "complex", kind: str = "auto",
                 extra=None, probes: int = 256):
        if q < 1:
            raise ValueError("q must lie in [1, inf)")
        if field not in ("complex", "real"):
            raise ValueError("field must be 'complex' or 'real'")
        check_resolution(space, q, grid)
        self.space, self.q, self.grid = space, float(q), grid
        self.field, self.seed, self.probes = field, seed, probes
        self.real_dim = len(space) * (2 if field == "complex" else 1)
        if kind == "auto":
            kind = "mesh" if self.real_dim <= 4 else "cloud"
        self.kind = kind
        self._E = grid_matrix(space, grid)
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
        if kind == "mesh":
            coeffs, self._mesh_step = self._mesh(size)
        elif kind == "cloud":
            coeffs, self._mesh_step = self._cloud(rng, size), None
        else:
            raise ValueError(f"unknown surrogate kind {kind!r}")
        if extra is not None:
            extra = np.atleast_2d(np.asarray(extra, dtype=complex))
            if extra.shape[1] != len(space):
                raise ValueError("extra members must have one coefficient per frequency")
            coeffs = np.vstack([coeffs, extra])
        norms = self._norms(coeffs)
        if np.any(norms > 1 + 1e-10):
            raise ValueError("surrogate members must satisfy ||f||_q <= 1")
        coeffs.setflags(write=False)
        self.coeffs = coeffs
        self.norms = norms
        self.n_extra = 0 if extra is None else extra.shape[0]
        self._values = None
        if grid.size * coeffs.shape[0] <= _VALUE_CACHE_LIMIT:
            self._values = self._E @ coeffs.T
        self._resolution = None
        self._trav = None

    # construction ---------------------------------------------------------
    def _norms(self, coeffs: np.ndarray) -> np.ndarray:
        out = np.empty(coeffs.shape[0])
        step = max(1, _CHUNK // self.grid.size)
        for lo in range(0, coeffs.shape[0], step):
            out[lo:lo + step] = lq_power(self.space, coeffs[lo:lo + step].T, self.q, self.grid) ** (1 / self.q)
        return out

    def _from_real(self, x: np.ndarray) -> np.ndarray:
        if self.field == "real":
            return x.astype(complex)
        N = len(self.space)
        return x[:, :N] + 1j * x[:, N:]

    def _mesh(self, size: int):
        D = self.real_dim
        per_axis = max(3, int(math.ceil(size ** (1.0 / D) - 1e-9)))
        if per_axis % 2 == 0:
            per_axis += 1
        axis = np.linspace(-1.0, 1.0, per_axis)
        grids = np.meshgrid(*([axis] * D), indexing="ij")
        pts = np.stack([g.reshape(-1) for g in grids], axis=1)
        coeffs = self._from_real(pts)
        keep = self._norms(coeffs) <= 1 + 1e-12
        return coeffs[keep], 2.0 / (per_axis - 1)

    def _cloud(self, rng: np.random.Generator, size: int) -> np.ndarray:
        # uniform direction in real coordinates, L_q gauge, radius U^(1/D)
        x = rng.standard_normal((size, self.real_dim))
        c = self._from_real(x)
        c /= self._norms(c)[:, None]
        r = rng.random(size) ** (1.0 / self.real_dim)
        return c * r[:, None]

    # geometry ---------------------------------------------------------------
    @property
    def size(self) -> int:
        return self.coeffs.shape[0]

    @property
    def N(self) -> int:
        return len(self.space)

    def values(self, idx) -> np.ndarray:
        """Grid values of members ``idx`` as columns."""
        if self._values is not None:
            return self._values[:, idx]
        return self._E @ self.coeffs[idx].T

    def sup_dist_to(self, c: np.ndarray, idx: np.ndarray) -> np.ndarray:
        """Grid sup distance from coefficient vector ``c`` to members ``idx``."""
        idx = np.asarray(idx, dtype=np.int64)
        out = np.empty(idx.shape[0])
        step = max(1, _CHUNK // self.grid.size)
        vc = self._E @ c
        for lo in range(0, idx.shape[0], step):
            blk = idx[lo:lo + step]
            if self._values is not None:
                diff = self._values[:, blk] - vc[:, None]
            else:
                diff = self._E @ (self.coeffs[blk] - c).T
            out[lo:lo + step] = np.abs(diff).max(axis=0)
        return out

    def l2_dist_to(self, c: np.ndarray, idx=None) -> np.ndarray:
        C = self.coeffs if idx is None else self.coeffs[idx]
        return np.linalg.norm(C - c, axis=1)

    def sup_norms(self) -> np.ndarray:
        """Grid sup norm of every member."""
        out = np.empty(self.size)
        step = max(1, _CHUNK // self.grid.size)
        for lo in range(0, self.size, step):
            out[lo:lo + step] = np.abs(self.values(np.arange(lo, min(self.size, lo + step)))).max(axis=0)
        return out

    def nearest(self, c: np.ndarray, idx: Optional[np.ndarray] = None) -> tuple[int, float]:
        """Nearest member (among ``idx``) to ``c`` in grid sup distance.

        Ties go to the smallest position in ``idx``.  Returns ``(position,
        distance)``.
        """
        idx = np.arange(self.size) if idx is None else np.asarray(idx, dtype=np.int64)
        lb = self.l2_dist_to(c, idx) * _LB_SAFETY
        order = np.argsort(lb, kind="stable")
        best_d, best_p = math.inf, -1
        for lo in range(0, order.shape[0], 64):
            blk = order[lo:lo + 64]
            blk = blk[lb[blk] <= best_d]
            if blk.shape[0] == 0:
                break
            d = self.sup_dist_to(c, idx[blk])
            for p, v in zip(blk, d):
                if v < best_d or (v == best_d and p < best_p):
                    best_d, best_p = float(v), int(p)
        return best_p, best_d

    # resolution -------------------------------------------------------------
    @property
    def resolution(self) -> float:
        """Estimated sup distance from any ball point to the surrogate.

        Maximum over ``probes`` fresh ball draws of the distance to the
        nearest member; for meshes also at least the cell bound.  This is an
        estimate, not a certified covering radius.
        """
        if self._resolution is None:
            rng = np.random.default_rng(np.random.SeedSequence([self.seed, 1]))
            probes = self._cloud(rng, self.probes) if self.probes > 0 else np.empty((0, self.N))
            worst = 0.0
            for c in probes:
                worst = max(worst, self.nearest(c)[1])
            if self._mesh_step is not None:
                per = self._mesh_step / 2 if self.field == "real" else self._mesh_step / math.sqrt(2)
                worst = max(worst, per * self.N)
            self._resolution = worst
        return self._resolution

    def check_radius(self, eps: float) -> None:
        if eps < 2 * self.resolution:
            raise SurrogateTooCoarse(
                f"radius {eps:.3g} is below twice the surrogate resolution {self.resolution:.3g}"
            )

    # farthest-point traversal ------------------------------------------------
    def traversal(self, stop_radius: float = 0.0, max_points: Optional[int] = None) -> "Traversal":
        """Farthest-point order, extended until the covering radius is at most
        ``stop_radius`` or ``max_points`` points are placed.

        The traversal is deterministic and is resumed, never recomputed,
        when a later call asks for more.
        """
        if self._trav is None:
            self._trav = Traversal(self)
        self._trav.extend(stop_radius, max_points)
        return self._trav


class Traversal:
    """Gonzalez farthest-point order of a surrogate.

    ``order[t]`` is the t-th chosen member and ``radii[t]`` its distance to
    the earlier ones (``inf`` for the start).  The first ``p`` members cover
    the surrogate at radius ``cover_radius(p)``.
    """

    def __init__(self, ball: BallSampler):
        self.ball = ball
        start = int(np.argmin(ball.norms))
        self.order = [start]
        self.radii = [math.inf]
        self.dmin = ball.sup_dist_to(ball.coeffs[start], np.arange(ball.size))
        self.dmin[start] = 0.0
        self._next = self._argmax()

    def _argmax(self):
        i = int(np.argmax(self.dmin))
        return i, float(self.dmin[i])

    @property
    def exhausted(self) -> bool:
        return self._next[1] == 0.0

    def extend(self, stop_radius: float = 0.0, max_points: Optional[int] = None) -> None:
        ball = self.ball
        while True:
            i, r = self._next
            if r <= stop_radius or r == 0.0:
                return
            if max_points is not None and len(self.order) >= max_points:
                return
            self.order.append(i)
            self.radii.append(r)
            c = ball.coeffs[i]
            lb = ball.l2_dist_to(c) * _LB_SAFETY
            cand = np.flatnonzero(lb < self.dmin)
            if cand.shape[0]:
                d = ball.sup_dist_to(c, cand)
                self.dmin[cand] = np.minimum(self.dmin[cand], d)
            self.dmin[i] = 0.0
            self._next = self._argmax()

    def cover_radius(self, p: int) -> float:
        """Covering radius of the first ``p`` traversal points (needs them placed)."""
        if p < 1:
            return math.inf
        if p < len(self.order):
            return self.radii[p]
        return self._next[1]

    def prefix_for_radius(self, eps: float) -> int:
        """Smallest ``p`` whose prefix covers the surrogate at radius ``eps``."""
        self.extend(eps)
        radii = np.asarray(self.radii[1:] + [self._next[1]])
        return int(np.argmax(radii <= eps)) + 1

    def separated_count(self, sep: float) -> int:
        """Number of traversal points inserted at distance ``> sep``."""
        self.extend(sep)
        return int(np.count_nonzero(np.asarray(self.radii) > sep))


@dataclass(frozen=True)
class Net:
    """Centers (surrogate members) covering the surrogate at ``radius``."""

    radius: float
    centers: np.ndarray
    indices: np.ndarray
    covering_radius: float
    resolution: Optional[float] = None

    def __len__(self) -> int:
        return self.centers.shape[0]

    def to_text(self) -> str:
        lines = [f"{self.radius:.17g}\n"]
        for c in self.centers:
            lines.append(" ".join(f"{v.real:.17g} {v.imag:.17g}" for v in c) + "\n")
        return "".join(lines)


def _net_from_prefix(ball: BallSampler, trav: Traversal, p: int, eps: float,
                     resolution: Optional[float]) -> Net:
    idx = np.asarray(trav.order[:p], dtype=np.int64)
    return Net(radius=float(eps), centers=ball.coeffs[idx], indices=idx,
               covering_radius=trav.cover_radius(p), resolution=resolution)


def greedy_net(ball: BallSampler, eps: float, allow_coarse: bool = False) -> Net:
    """Farthest-point greedy ``eps``-net of the surrogate.

    ``len(net)`` bounds the covering number of the surrogate from above;
    for the full ball it is an upper estimate at radius ``eps`` plus the
    surrogate resolution.  Raises ``SurrogateTooCoarse`` when ``eps`` is
    below twice the resolution unless ``allow_coarse``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    resolution = None
    if not allow_coarse:
        ball.check_radius(eps)
        resolution = ball.resolution
    trav = ball.traversal(eps)
    return _net_from_prefix(ball, trav, trav.prefix_for_radius(eps), eps, resolution)


def packing_lower(ball: BallSampler, eps: float) -> int:
    """Size of a maximal subset of the surrogate with pairwise distances ``> 2 eps``.

    No ``eps``-ball contains two such points, so this lower-bounds the
    covering number of the surrogate and of the full ball.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    return ball.traversal(2 * eps).separated_count(2 * eps)


@dataclass(frozen=True)
class EntropyBracket:
    k: int
    lower: float
    upper: float
    surrogate_size: int
    grid_M: int
    resolution: float
    resolution_limited: bool

    def as_row(self) -> dict:
        return {"k": self.k, "lower": self.lower, "upper": self.upper,
                "surrogate_size": self.surrogate_size, "grid_M": self.grid_M}


BRACKET_COLUMNS = ("k", "lower", "upper", "surrogate_size", "grid_M")


def entropy_number_bracket(ball: BallSampler, k: int) -> EntropyBracket:
    """Bracket the entropy number ``eps_k`` of the ball in the sup norm.

    ``eps_k`` is the smallest radius with at most ``2^k`` centers.  The
    greedy-net size drops to ``2^k`` exactly at the covering radius of the
    first ``2^k`` traversal points, and the packing size drops to ``2^k``
    at half the insertion distance of point ``2^k + 1``; these are the
    limits a bisection on either count converges to.  The prefix centers
    are then improved by :func:`refine_cover` when affordable.  The upper
    end adds the surrogate resolution so that it refers to the full ball.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    res = ball.resolution
    cap = 1 << min(k, 62)
    trav = ball.traversal(0.0, max_points=cap + 1)
    placed = len(trav.order)
    if placed > cap:
        lower = trav.radii[cap] / 2.0
        upper_s = trav.cover_radius(cap)
    else:
        lower = 0.0
        upper_s = trav.cover_radius(placed)
    if placed > cap:
        upper_s = min(upper_s, refine_cover(ball, trav.order[:cap])[1])
    limited = placed <= cap or upper_s < res
    upper = max(upper_s + res, lower)
    return EntropyBracket(k=k, lower=float(lower), upper=float(upper), surrogate_size=ball.size,
                          grid_M=ball.grid.points_per_dim, resolution=float(res),
                          resolution_limited=bool(limited))


def fit_entropy_bound(ball: BallSampler, ks: Optional[Iterable[int]] = None,
                      brackets: Optional[Sequence[EntropyBracket]] = None) -> float:
    """Smallest ``B`` with ``upper(k) <= B (N/k)^(1/q)`` over the measured ``k``.

    ``ks`` defaults to ``1..N``.
    """
    N = ball.N
    if brackets is None:
        ks = range(1, N + 1) if ks is None else ks
        brackets = [entropy_number_bracket(ball, k) for k in ks]
    return max(b.upper / (N / b.k) ** (1.0 / ball.q) for b in brackets)


def _assign(ball: BallSampler, centers: Sequence[int]):
    D = np.vstack([ball.sup_dist_to(ball.coeffs[c], np.arange(ball.size)) for c in centers])
    lab = np.argmin(D, axis=0)
    return lab, D[lab, np.arange(ball.size)]


def refine_cover(ball: BallSampler, centers: Sequence[int], rounds: int = 8,
                 candidates: int = 32, budget: int = 1 << 27) -> tuple[np.ndarray, float]:
    """Minimax local improvement of a set of centers.

    Each round assigns members to their nearest center and replaces every
    center by the cluster member closest to covering its cluster best.
    Candidates are the members nearest to the pointwise midrange of the
    cluster values, which is the sup-norm center for real-valued data.
    The number of centers never changes and centers stay members, so the
    result is still a covering of the surrogate with centers in the ball.
    Returns ``(centers, covering_radius)``; skipped, with radius ``inf``,
    when one assignment would cost more than ``budget`` value comparisons.
    """
    centers = np.asarray(centers, dtype=np.int64).copy()
    if centers.shape[0] * ball.size * ball.grid.size > budget:
        return centers, math.inf
    lab, dist = _assign(ball, centers)
    best = float(dist.max())
    for _ in range(rounds):
        changed = False
        for j in range(centers.shape[0]):
            S = np.flatnonzero(lab == j)
            if S.shape[0] <= 1:
                continue
            cur = float(dist[S].max())
            V = ball.values(S)
            mid = 0.5 * (V.real.max(axis=1) + V.real.min(axis=1)) + 0.5j * (V.imag.max(axis=1) + V.imag.min(axis=1))
            near = np.abs(V - mid[:, None]).max(axis=0)
            cand = S[np.argsort(near, kind="stable")[:candidates]]
            for c in cand:
                r = float(ball.sup_dist_to(ball.coeffs[c], S).max())
                if r < cur - 1e-15:
                    cur, centers[j], changed = r, c, True
        if not changed:
            break
        # reassignment can only shorten distances
        lab, dist = _assign(ball, centers)
        radius = float(dist.max())
        if radius >= best - 1e-15:
            break
        best = radius
    return centers, best


# analytic evaluators ---------------------------------------------------------

def entropy_formula(eps: float, N: int, B: float, q: float) -> float:
    """Upper bound on ``log2 N_eps`` implied by ``eps_k <= B (N/k)^(1/q)``.

    ``1 + N (B/eps)^q`` for ``eps >= B`` and ``1 + N log2(6B/eps)`` below.
    At ``eps == B`` the power branch is taken.
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    if eps >= B:
        return 1.0 + N * (B / eps) ** q
    return 1.0 + N * math.log2(6.0 * B / eps)


def entropy_tail(k: int, N: int, B: float) -> float:
    """``6 B 2^(-k/N)``: the entropy-number bound for ``k > N``."""
    return 6.0 * B * 2.0 ** (-k / N)


def log_power_constant(q: float) -> float:
    """Best ``C`` with ``ln t <= C t^q`` for all ``t > 1``; equals ``1/(e q)``."""
    if q <= 0:
        raise DomainError("q must be positive")
    return 1.0 / (math.e * q)


def entropy_eps0_constant(eps_prime: float, N: int, B: float, q: float, samples: int = 4097) -> float:
    """Smallest ``C`` with ``entropy_formula(eps) <= C (B/eps)^q`` for ``eps >= eps_prime``.

    Above ``4 B N^(1/q)`` a single center covers the ball, so the entropy
    vanishes there and the supremum runs over ``[eps_prime, 4 B N^(1/q)]``.
    """
    if eps_prime <= 0:
        raise DomainError("eps_prime must be positive")
    top = 4.0 * B * N ** (1.0 / q)
    if eps_prime >= top:
        return 0.0
    eps = np.geomspace(eps_prime, top, samples)
    eps = np.concatenate([eps, [B] if eps_prime <= B <= top else []])
    vals = [entropy_formula(e, N, B, q) / (B / e) ** q for e in eps]
    return float(max(vals))


def belinsky_bound(n: int, d: int, q: float, k: int, constant: float = 1.0) -> float:
    """Shape ``n^(1/q) |Q_n|/k`` (``k <= 2|Q_n|``) or ``n^(1/q) 2^(-k/(2|Q_n|))``.

    Valid for ``1 <= q <= 2``; ``constant`` is the unspecified implied
    constant.
    """
    if not 1 <= q <= 2:
        raise DomainError("the bound is stated for 1 <= q <= 2")
    if k < 1:
        raise DomainError("k must be >= 1")
    Q = hyperbolic_cross_size(d, n)
    shape = Q / k if k <= 2 * Q else 2.0 ** (-k / (2 * Q))
    return constant * n ** (1.0 / q) * shape


def small_ball_bound(n: int, k: int, constant: float = 1.0) -> float:
    """Bivariate L_1-ball shape ``n^(1/2) (|Q_n|/k) log2(4|Q_n|/k)``, tail ``n^(1/2) 2^(-k/(2|Q_n|))``."""
    if k < 1:
        raise DomainError("k must be >= 1")
    Q = hyperbolic_cross_size(2, n)
    if k <= 2 * Q:
        shape = (Q / k) * math.log2(4.0 * Q / k)
    else:
        shape = 2.0 ** (-k / (2 * Q))
    return constant * math.sqrt(n) * shape


def coarse_small_ball_bound(n: int, k: int, constant: float = 1.0) -> float:
    """The bivariate shape with the logarithm absorbed: ``n^(3/2) |Q_n|/k`` or ``n^(3/2) 2^(-k/(2|Q_n|))``."""
    if k < 1:
        raise DomainError("k must be >= 1")
    Q = hyperbolic_cross_size(2, n)
    shape = Q / k if k <= 2 * Q else 2.0 ** (-k / (2 * Q))
    return constant * n ** 1.5 * shape
