"""Trigonometric subspaces on the d-torus.

Functions live on ``[0, 2*pi)^d`` with the normalized Lebesgue measure, so
every norm below is taken against a probability measure.  A subspace is
described by a finite set of integer frequencies ``Q``; its members are

    f(x) = sum_{k in Q} c_k exp(i (k, x))

with complex coefficients.  Integrals are computed on equispaced tensor
grids, which integrate trigonometric polynomials exactly once the grid is
fine enough.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import DegenerateDraw, UnderResolvedGrid

TWO_PI = 2.0 * np.pi

#: Default oversampling factor for L_q quadrature with q != 2.
OVERSAMPLE = 8

#: Multiplicative slack applied to grid maxima whenever an upper bound on a
#: sup norm is needed.  Grid maxima never exceed the true sup norm.
SUP_SLACK = 1.01

# Cap for evaluation blocks: rows * columns of complex entries held at once.
_BLOCK = 1 << 22


class FrequencySet:
    """A finite set of distinct frequency vectors in Z^d.

    Frequencies are stored as an ``(N, d)`` integer array in a fixed order;
    that order indexes the coefficient vectors of :class:`TrigPoly`.
    """

    __slots__ = ("_freqs", "_index")

    def __init__(self, freqs, dim: Optional[int] = None):
        arr = np.asarray(freqs, dtype=np.int64)
        if arr.ndim == 1:
            if dim is None or dim == 1:
                arr = arr.reshape(-1, 1)
            else:
                arr = arr.reshape(1, -1)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValueError("a frequency set needs at least one vector of positive length")
        if dim is not None and arr.shape[1] != dim:
            raise ValueError(f"frequency vectors have length {arr.shape[1]}, expected {dim}")
        index = {tuple(int(v) for v in row): i for i, row in enumerate(arr)}
        if len(index) != arr.shape[0]:
            raise ValueError("duplicate frequency vectors")
        arr.setflags(write=False)
        self._freqs = arr
        self._index = index

    @property
    def freqs(self) -> np.ndarray:
        return self._freqs

    @property
    def dim(self) -> int:
        return self._freqs.shape[1]

    @property
    def max_degree(self) -> int:
        """Largest absolute value of any coordinate (the per-axis degree K)."""
        return int(np.abs(self._freqs).max())

    def __len__(self) -> int:
        return self._freqs.shape[0]

    def __iter__(self):
        return iter(self._index)

    def __contains__(self, k) -> bool:
        return tuple(int(v) for v in np.atleast_1d(k)) in self._index

    def __eq__(self, other) -> bool:
        if not isinstance(other, FrequencySet):
            return NotImplemented
        return self.dim == other.dim and set(self._index) == set(other._index)

    def __hash__(self):
        return hash((self.dim, frozenset(self._index)))

    def __repr__(self) -> str:
        return f"FrequencySet(dim={self.dim}, size={len(self)})"

    def index_of(self, k) -> int:
        return self._index[tuple(int(v) for v in np.atleast_1d(k))]

    def is_symmetric(self) -> bool:
        """True when Q = -Q, i.e. the span is closed under complex conjugation."""
        return all(tuple(-v for v in k) in self._index for k in self._index)

    def to_text(self) -> str:
        return "".join(" ".join(str(v) for v in k) + "\n" for k in self._index)

    @classmethod
    def from_text(cls, text: str) -> "FrequencySet":
        rows = [[int(tok) for tok in line.split()] for line in text.splitlines() if line.strip()]
        return cls(rows)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "FrequencySet":
        return cls.from_text(Path(path).read_text())


def frequency_range(n: int, d: int = 1) -> FrequencySet:
    """The cube {-n, ..., n}^d; for d = 1 the classical degree-n polynomials."""
    axis = range(-n, n + 1)
    return FrequencySet(list(itertools.product(axis, repeat=d)))


def _block_axis(s: int) -> list[int]:
    if s == 0:
        return [0]
    lo, hi = 1 << (s - 1), 1 << s
    return [-k for k in range(hi - 1, lo - 1, -1)] + list(range(lo, hi))


def rho_block(s: Sequence[int]) -> FrequencySet:
    """Dyadic block: all k with floor(2^(s_j - 1)) <= |k_j| < 2^s_j for every j."""
    s = [int(v) for v in s]
    if not s:
        raise ValueError("empty block index")
    if any(v < 0 for v in s):
        raise ValueError("block indices must be nonnegative")
    return FrequencySet(list(itertools.product(*(_block_axis(v) for v in s))), dim=len(s))


def _compositions(n: int, d: int):
    """All s in Z_+^d with |s|_1 <= n."""
    if d == 1:
        for v in range(n + 1):
            yield (v,)
        return
    for first in range(n + 1):
        for rest in _compositions(n - first, d - 1):
            yield (first,) + rest


def hyperbolic_cross(d: int, n: int) -> FrequencySet:
    """Step hyperbolic cross: union of the blocks rho(s) over |s|_1 <= n.

    Blocks are pairwise disjoint, so the union is assembled by concatenation;
    the result is sorted lexicographically for a reproducible ordering.
    """
    if d < 1 or n < 0:
        raise ValueError("need d >= 1 and n >= 0")
    parts = [rho_block(s).freqs for s in _compositions(n, d)]
    freqs = np.concatenate(parts, axis=0)
    order = np.lexsort(freqs.T[::-1])
    return FrequencySet(freqs[order])


def hyperbolic_cross_size(d: int, n: int) -> int:
    """|Q_n| from block sizes alone: |rho(s)| = 2^{|s|_1}."""
    from math import comb

    return sum((1 << l) * comb(l + d - 1, d - 1) for l in range(n + 1))


def exponential_matrix(freqs: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Matrix ``E[nu, k] = exp(i (k, x^nu))`` of shape ``(m, N)``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return np.exp(1j * (points @ np.asarray(freqs, dtype=float).T))


class TrigPoly:
    """A trigonometric polynomial with complex coefficients over a FrequencySet."""

    __slots__ = ("basis", "coeffs")

    def __init__(self, basis: FrequencySet, coeffs):
        c = np.asarray(coeffs, dtype=complex).reshape(-1)
        if c.shape[0] != len(basis):
            raise ValueError(f"expected {len(basis)} coefficients, got {c.shape[0]}")
        c.setflags(write=False)
        self.basis = basis
        self.coeffs = c

    def __call__(self, x) -> np.ndarray | complex:
        return evaluate(self, x)

    def __repr__(self) -> str:
        return f"TrigPoly(dim={self.basis.dim}, N={len(self.basis)})"

    def scaled(self, factor) -> "TrigPoly":
        return TrigPoly(self.basis, self.coeffs * factor)

    def to_text(self) -> str:
        lines = []
        for k, c in zip(self.basis.freqs, self.coeffs):
            lines.append(" ".join(str(int(v)) for v in k) + f" {c.real:.17g} {c.imag:.17g}\n")
        return "".join(lines)

    @classmethod
    def from_text(cls, text: str, dim: int) -> "TrigPoly":
        freqs, coeffs = [], []
        for line in text.splitlines():
            tok = line.split()
            if not tok:
                continue
            freqs.append([int(v) for v in tok[:dim]])
            coeffs.append(complex(float(tok[dim]), float(tok[dim + 1])))
        return cls(FrequencySet(freqs, dim=dim), coeffs)


def dirichlet_kernel(space: FrequencySet) -> TrigPoly:
    """All coefficients equal to one."""
    return TrigPoly(space, np.ones(len(space)))


def evaluate(f: TrigPoly, x):
    """Evaluate ``f`` at a point (shape ``(d,)``) or at points (shape ``(m, d)``).

    Coordinates outside ``[0, 2*pi)`` are reduced modulo ``2*pi``.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 0 or (x.ndim == 1 and x.shape[0] == f.basis.dim)
    pts = np.mod(x.reshape(-1, f.basis.dim), TWO_PI)
    vals = evaluate_coeffs(f.basis.freqs, f.coeffs, pts)
    return complex(vals[0]) if single else vals


def evaluate_coeffs(freqs: np.ndarray, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Values at ``points`` of one (``coeffs`` 1-D) or many (columns) polynomials."""
    points = np.atleast_2d(points)
    coeffs = np.asarray(coeffs, dtype=complex)
    ncols = 1 if coeffs.ndim == 1 else coeffs.shape[1]
    step = max(1, _BLOCK // max(len(freqs), ncols))
    out = np.empty((points.shape[0],) + coeffs.shape[1:], dtype=complex)
    for lo in range(0, points.shape[0], step):
        out[lo:lo + step] = exponential_matrix(freqs, points[lo:lo + step]) @ coeffs
    return out


@dataclass(frozen=True)
class Grid:
    """Equispaced tensor grid ``{2 pi j / M}^d`` carrying the uniform weight ``1/M^d``."""

    dim: int
    points_per_dim: int

    def __post_init__(self):
        if self.dim < 1 or self.points_per_dim < 1:
            raise ValueError("grid needs dim >= 1 and points_per_dim >= 1")

    @property
    def size(self) -> int:
        return self.points_per_dim ** self.dim

    @property
    def weight(self) -> float:
        return 1.0 / self.size

    @property
    def nodes(self) -> np.ndarray:
        axis = TWO_PI * np.arange(self.points_per_dim) / self.points_per_dim
        mesh = np.meshgrid(*([axis] * self.dim), indexing="ij")
        return np.stack([g.reshape(-1) for g in mesh], axis=1)

    def refined(self) -> "Grid":
        return Grid(self.dim, 2 * self.points_per_dim)

    def integrate(self, values) -> float | np.ndarray:
        """Quadrature of sampled values (first axis runs over nodes)."""
        return np.asarray(values).mean(axis=0)

    @classmethod
    def for_space(cls, space: FrequencySet, q: float = 2.0, oversample: int = OVERSAMPLE) -> "Grid":
        return cls(space.dim, required_points(space.max_degree, q, oversample))


def required_points(K: int, q: float = 2.0, oversample: int = OVERSAMPLE) -> int:
    """Smallest admissible points per axis for L_q quadrature at degree ``K``.

    ``2K + 1`` nodes integrate ``|f|^2`` exactly; for other ``q`` the integrand
    is not band-limited and the grid is oversampled.
    """
    if q == 2 or K == 0:
        return 2 * K + 1  # constants have constant |f|^q
    return max(2 * K + 1, oversample * (K + 1))


def check_resolution(space: FrequencySet, q: float, grid: Grid, oversample: int = OVERSAMPLE) -> None:
    if grid.dim != space.dim:
        raise ValueError(f"grid dimension {grid.dim} does not match space dimension {space.dim}")
    need = required_points(space.max_degree, q, oversample)
    if grid.points_per_dim < need:
        raise UnderResolvedGrid(
            f"grid has {grid.points_per_dim} points per axis, q={q} at degree "
            f"{space.max_degree} needs at least {need}"
        )


class _GridCache:
    """Per-(space, grid) exponential matrices; both inputs are immutable."""

    def __init__(self, maxsize: int = 8):
        self._store: dict = {}
        self._maxsize = maxsize

    def get(self, space: FrequencySet, grid: Grid) -> np.ndarray:
        key = (id(space), grid)
        hit = self._store.get(key)
        if hit is not None and hit[0] is space:
            return hit[1]
        mat = exponential_matrix(space.freqs, grid.nodes)
        if len(self._store) >= self._maxsize:
            self._store.pop(next(iter(self._store)))
        self._store[key] = (space, mat)
        return mat


_grid_cache = _GridCache()


def grid_matrix(space: FrequencySet, grid: Grid) -> np.ndarray:
    """Exponential matrix of ``space`` on the grid nodes (cached)."""
    if grid.size * len(space) > 4 * _BLOCK:
        return exponential_matrix(space.freqs, grid.nodes)
    return _grid_cache.get(space, grid)


def grid_values(space: FrequencySet, coeffs, grid: Grid) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=complex)
    if grid.size * len(space) > 4 * _BLOCK:
        return evaluate_coeffs(space.freqs, coeffs, grid.nodes)
    return grid_matrix(space, grid) @ coeffs


def norm_l2_exact(f: TrigPoly) -> float:
    """Parseval: the exponentials are orthonormal in L_2 of the torus."""
    return float(np.linalg.norm(f.coeffs))


def lq_power(space: FrequencySet, coeffs, q: float, grid: Grid) -> np.ndarray | float:
    """Grid quadrature of ``|f|^q``; ``coeffs`` may hold one polynomial per column."""
    check_resolution(space, q, grid)
    vals = np.abs(grid_values(space, coeffs, grid))
    return np.mean(vals ** q if q != 2 else vals * vals, axis=0)


def norm_lq(f: TrigPoly, q: float, grid: Grid, refine: bool = False,
            rtol: float = 1e-8, max_points: int = 1 << 16) -> float:
    """L_q norm of ``f`` by grid quadrature.

    Parameters
    ----------
    f : TrigPoly
    q : float
        Exponent in ``[1, inf)``.
    grid : Grid
        Must satisfy :func:`required_points`, otherwise ``UnderResolvedGrid``.
    refine : bool
        Double the grid until the relative change drops below ``rtol`` or the
        per-axis count would exceed ``max_points``.
    """
    if q < 1:
        raise ValueError("q must lie in [1, inf)")
    value = float(lq_power(f.basis, f.coeffs, q, grid)) ** (1.0 / q)
    if not refine:
        return value
    while grid.points_per_dim * 2 <= max_points and grid.refined().size * len(f.basis) <= 1 << 27:
        grid = grid.refined()
        new = float(lq_power(f.basis, f.coeffs, q, grid)) ** (1.0 / q)
        done = abs(new - value) <= rtol * max(new, np.finfo(float).tiny)
        value = new
        if done:
            break
    return value


def sup_norm(f: TrigPoly, grid: Grid, refine: bool = False, rtol: float = 1e-8,
             max_points: int = 1 << 16) -> float:
    """Maximum of ``|f|`` over grid nodes.

    This never exceeds the true sup norm.  With ``refine`` the best nodes
    are polished by gradient ascent on ``|f|^2`` and the grid is doubled
    until the polished maximum settles; polished values are still values of
    ``f``, so the result stays a lower estimate.  Callers needing an upper
    bound multiply by :data:`SUP_SLACK` after refining.
    """
    vals = np.abs(grid_values(f.basis, f.coeffs, grid))
    value = float(vals.max())
    if not refine:
        return value
    value = max(value, _polish_top(f, grid, vals))
    while grid.points_per_dim * 2 <= max_points and grid.refined().size * len(f.basis) <= 1 << 27:
        grid = grid.refined()
        vals = np.abs(grid_values(f.basis, f.coeffs, grid))
        new = max(value, float(vals.max()), _polish_top(f, grid, vals))
        done = new - value <= rtol * max(new, np.finfo(float).tiny)
        value = new
        if done:
            break
    return value


def _polish_top(f: TrigPoly, grid: Grid, vals: np.ndarray, starts: int = 8) -> float:
    top = np.argsort(vals)[::-1][:starts]
    return _polish_max(f, grid.nodes[top], 0.5 * TWO_PI / grid.points_per_dim)


def _polish_max(f: TrigPoly, x: np.ndarray, step: float, iters: int = 60) -> float:
    """Gradient ascent on ``|f|^2`` from the rows of ``x``; returns the best ``|f|`` seen."""
    K = f.basis.freqs.astype(float)
    c = np.asarray(f.coeffs)

    def val_grad(x):
        e = np.exp(1j * (x @ K.T)) * c
        v = e.sum(axis=1)
        dv = (1j * e) @ K
        return np.abs(v), 2.0 * np.real(np.conj(v)[:, None] * dv)

    x = np.array(x, dtype=float)
    h = np.full(x.shape[0], step)
    cur, g = val_grad(x)
    best = float(cur.max())
    for _ in range(iters):
        gn = np.linalg.norm(g, axis=1)
        gn[gn == 0] = 1.0
        trial = x + (h / gn)[:, None] * g
        tv, tg = val_grad(trial)
        ok = tv > cur
        x[ok], cur[ok], g[ok] = trial[ok], tv[ok], tg[ok]
        h = np.where(ok, h * 1.5, h * 0.5)
        best = max(best, float(cur.max()))
        if np.all(h < 1e-13):
            break
    return best


def _gaussian_coeffs(rng: np.random.Generator, shape, field: str) -> np.ndarray:
    if field == "complex":
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)
    if field == "real":
        return rng.standard_normal(shape).astype(complex)
    raise ValueError(f"field must be 'complex' or 'real', got {field!r}")


def normalize_coeffs(space: FrequencySet, coeffs: np.ndarray, q: float, target: float,
                     grid: Grid) -> np.ndarray:
    """Rescale columns of ``coeffs`` so that ``||f||_q^q == target``."""
    if q == 2:
        power = np.sum(np.abs(coeffs) ** 2, axis=0)
    else:
        power = lq_power(space, coeffs, q, grid)
    return coeffs * (target / power) ** (1.0 / q)


def random_unit(space: FrequencySet, q: float, target: float, seed: int, grid: Grid,
                field: str = "complex", max_retries: int = 8) -> TrigPoly:
    """Gaussian random polynomial rescaled to ``||f||_q^q = target``.

    Coefficients are i.i.d. standard (complex) Gaussians; for ``q == 2`` the
    norm comes from Parseval, otherwise from the grid quadrature.
    """
    if target <= 0:
        raise ValueError("target must be positive")
    check_resolution(space, q, grid)
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        c = _gaussian_coeffs(rng, len(space), field)
        if np.any(c != 0):
            return TrigPoly(space, normalize_coeffs(space, c, q, target, grid))
    raise DegenerateDraw(f"{max_retries} consecutive zero draws")


def random_units(space: FrequencySet, q: float, target: float, count: int, seed: int,
                 grid: Grid, field: str = "complex") -> np.ndarray:
    """``count`` normalized Gaussian draws as the columns of an ``(N, count)`` array."""
    check_resolution(space, q, grid)
    rng = np.random.default_rng(seed)
    c = _gaussian_coeffs(rng, (len(space), count), field)
    zero = ~np.any(c != 0, axis=0)
    if np.any(zero):
        raise DegenerateDraw("zero draw in batch")
    return normalize_coeffs(space, c, q, target, grid)


class NikolskiiEstimate(NamedTuple):
    ratio: float
    bound: Optional[float]


def nikolskii_bound(B: float, N: int, q: float) -> float:
    """The sup-norm bound ``4 B N^(1/q)`` implied by the k = 1 entropy assumption."""
    return 4.0 * B * N ** (1.0 / q)


def nikolskii_ratio(space: FrequencySet, q: float, trials: int, seed: int, grid: Grid,
                    B: Optional[float] = None) -> NikolskiiEstimate:
    """Largest observed ``||f||_inf / ||f||_q``.

    Candidates are ``trials`` Gaussian draws plus the Dirichlet kernel, so the
    value is a lower estimate of the best Nikol'skii constant of the space.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    check_resolution(space, q, grid)
    rng = np.random.default_rng(seed)
    best = 0.0
    batch = max(1, _BLOCK // max(1, grid.size))
    cols = [np.ones((len(space), 1), dtype=complex)]
    remaining = trials
    while remaining > 0:
        take = min(batch, remaining)
        cols.append(_gaussian_coeffs(rng, (len(space), take), "complex"))
        remaining -= take
    for c in cols:
        vals = np.abs(grid_values(space, c, grid))
        sup = vals.max(axis=0)
        lq = np.mean(vals ** q, axis=0) ** (1.0 / q)
        best = max(best, float(np.max(sup / lq)))
    bound = None if B is None else nikolskii_bound(B, len(space), q)
    return NikolskiiEstimate(best, bound)


class RealOrthonormalSystem:
    """Real-valued functions ``u_i(x) = sum_k A[i, k] exp(i (k, x))``.

    Rows of ``A`` must be conjugate-symmetric so each ``u_i`` is real; the
    rows must be orthonormal in L_2 of the torus.  Both properties are
    checked on an exact quadrature grid at construction.
    """

    def __init__(self, basis: FrequencySet, coeffs, atol: float = 1e-10):
        A = np.atleast_2d(np.asarray(coeffs, dtype=complex))
        if A.shape[1] != len(basis):
            raise ValueError("coefficient rows must match the frequency set")
        grid = Grid(basis.dim, 2 * basis.max_degree + 1)
        vals = grid_values(basis, A.T, grid)
        if np.max(np.abs(vals.imag), initial=0.0) > atol:
            raise ValueError("system functions are not real-valued")
        gram = (vals.real.T @ vals.real) / grid.size
        if np.max(np.abs(gram - np.eye(A.shape[0]))) > atol:
            raise ValueError("system is not orthonormal")
        A.setflags(write=False)
        self.basis = basis
        self.coeffs = A

    @property
    def N(self) -> int:
        return self.coeffs.shape[0]

    def values(self, points) -> np.ndarray:
        """``(m, N)`` matrix of ``u_i(x^nu)``."""
        return evaluate_coeffs(self.basis.freqs, self.coeffs.T, np.atleast_2d(points)).real


def real_trig_system(space: FrequencySet) -> RealOrthonormalSystem:
    """``1``, ``sqrt(2) cos(k, x)`` and ``sqrt(2) sin(k, x)`` over a symmetric set."""
    if not space.is_symmetric():
        raise ValueError("the real trigonometric system needs a symmetric frequency set")
    rows = []
    r = np.sqrt(0.5)
    for k in space:
        neg = tuple(-v for v in k)
        if k == neg:
            row = np.zeros(len(space), dtype=complex)
            row[space.index_of(k)] = 1.0
            rows.append(row)
        elif k > neg:
            i, j = space.index_of(k), space.index_of(neg)
            cos = np.zeros(len(space), dtype=complex)
            cos[i] = cos[j] = r
            sin = np.zeros(len(space), dtype=complex)
            sin[i], sin[j] = -1j * r, 1j * r
            rows.extend([cos, sin])
    return RealOrthonormalSystem(space, rows)


def condition_e_constant(system: RealOrthonormalSystem, grid: Grid) -> float:
    """Smallest ``t`` with ``sum_i u_i(x)^2 <= N t^2`` at every grid node."""
    u = system.values(grid.nodes)
    w = np.sum(u * u, axis=1)
    return float(np.sqrt(w.max() / system.N))
