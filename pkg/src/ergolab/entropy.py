"""Partition entropies, plug-in entropy of orbits, Bowen balls and separated sets,
the Monte Carlo topological-entropy integral, and admissible-sequence counting.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .cocycle import log_exterior_norms_of_products
from .measures import EmpiricalMeasure
from .systems import (
    DyadicPoint,
    PhaseSpace,
    SystemSpec,
    iterate,
    iterate_many,
    orbit_distance,
    sample_points,
)


class UndersampledWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Partition:
    """Axis-aligned uniform grid with ``shape[i]`` cells along axis i.

    Cells are half-open, ``[k/g, (k+1)/g)`` on the unit chart. On an
    interval the right endpoint joins the last cell.
    """

    space: PhaseSpace
    shape: tuple

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) != self.space.dim or min(shape) < 1:
            raise ValueError(f"partition shape {shape} does not fit a {self.space.dim}-dimensional space")
        object.__setattr__(self, "shape", shape)

    @classmethod
    def parse(cls, space: PhaseSpace, spec):
        """``"2"`` -> 2 cells per axis, ``"3x1"`` -> explicit shape."""
        if isinstance(spec, Partition):
            return spec
        if isinstance(spec, int):
            return cls(space, (spec,) * space.dim)
        parts = [int(p) for p in str(spec).lower().split("x")]
        if len(parts) == 1:
            parts = parts * space.dim
        return cls(space, tuple(parts))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def diameter(self) -> float:
        if self.space.kind == "interval":
            return self.space.volume / self.shape[0]
        return max(min(1.0 / g, 0.5) for g in self.shape)

    def code(self, points) -> np.ndarray:
        """Atom index of each point (array of shape (..., d) -> (...))."""
        u = self.space.to_unit(points)
        idx = np.zeros(u.shape[:-1], dtype=np.int64)
        for axis, g in enumerate(self.shape):
            k = np.clip(np.floor(u[..., axis] * g).astype(np.int64), 0, g - 1)
            idx = idx * g + k
        return idx


def default_partition(sys: SystemSpec) -> Partition:
    # three strips for the cat map: a 2x2 grid has a much larger block-entropy
    # excess, so (1/m) H(P^m) is still far from h at m = 10
    if sys.space.dim == 2:
        return Partition(sys.space, (3, 1))
    return Partition(sys.space, (2,) * sys.space.dim)


def _entropy_of_masses(masses: np.ndarray) -> float:
    p = masses[masses > 0]
    return float(-(p * np.log(p)).sum())


def _word_entropy(words: np.ndarray, weights: np.ndarray) -> float:
    """Entropy of the partition of points by their rows in ``words``."""
    if words.shape[1] == 0:
        return 0.0
    _, inv = np.unique(words, axis=0, return_inverse=True)
    masses = np.bincount(inv.ravel(), weights=weights)
    return _entropy_of_masses(masses)


def static_entropy(mu: EmpiricalMeasure, P: Partition) -> float:
    """``H_mu(P) = -sum mu(A) log mu(A)`` with 0 log 0 = 0."""
    masses = np.bincount(P.code(mu.support), weights=mu.weights, minlength=P.size)
    return _entropy_of_masses(masses)


def itineraries(sys: SystemSpec, points, n: int, P: Partition) -> np.ndarray:
    """P-itinerary of length n for each point, shape (N, n)."""
    pts = np.asarray(points, dtype=float).reshape(-1, sys.d)
    if n <= 0:
        return np.zeros((len(pts), 0), dtype=np.int64)
    orbits = iterate_many(sys, pts, n - 1)  # (n, N, d)
    return P.code(orbits).T


def refined_entropy(sys: SystemSpec, mu: EmpiricalMeasure, P: Partition, n: int) -> float:
    """``H_mu(P^n)`` with ``P^n`` the join of ``f^{-k} P`` over ``0 <= k < n``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return _word_entropy(itineraries(sys, mu.support, n, P), mu.weights)


def pushforward_average(sys: SystemSpec, mu: EmpiricalMeasure, n: int) -> EmpiricalMeasure:
    """``nu_n = (1/n) sum_{0 <= k < n} f^k_* mu``, built point by point."""
    orbits = iterate_many(sys, mu.support, n - 1)  # (n, N, d)
    pts = orbits.reshape(-1, sys.d)
    w = np.tile(mu.weights, n) / n
    return EmpiricalMeasure.from_points(pts, w)


def misiurewicz_bound(H_P_n_of_mu: float, n: int, m: int, cardP: int) -> float:
    """Lower bound ``(1/n)(H_{mu_n}(P^n) - 3 m log #P)`` for ``(1/m) H_{nu_n}(P^m)``."""
    if not n >= m >= 1 or cardP < 1:
        raise ValueError("need n >= m >= 1 and #P >= 1")
    return (H_P_n_of_mu - 3 * m * math.log(cardP)) / n


@dataclass
class EntropyEstimate:
    estimate: float
    curve: dict
    n: int
    partition: tuple
    unreliable: bool
    x: object = None

    def to_record(self) -> dict:
        x = self.x
        if isinstance(x, DyadicPoint):
            x = float(x)
        return {
            "x": [float(v) for v in np.atleast_1d(x)] if x is not None else None,
            "n": self.n,
            "partition": list(self.partition),
            "estimate": float(self.estimate),
            "curve": {str(m): float(v) for m, v in self.curve.items()},
            "unreliable": bool(self.unreliable),
        }


def _block_entropies(codes: np.ndarray, n: int, base: int, m_list) -> dict:
    """``(1/m) H(P^m)`` of the uniform measure on the first n orbit points."""
    out = {}
    for m in m_list:
        # each word is packed exactly into int64 chunks of `per` symbols
        per = max(1, int(62 // math.log2(max(base, 2))))
        chunks = []
        for start in range(0, m, per):
            words = np.zeros(n, dtype=np.int64)
            for j in range(start, min(start + per, m)):
                words = words * base + codes[j : j + n]
            chunks.append(words)
        if len(chunks) == 1:
            _, counts = np.unique(chunks[0], return_counts=True)
        else:
            rows = np.ascontiguousarray(np.stack(chunks, axis=1))
            keys = rows.view(np.dtype((np.void, rows.itemsize * rows.shape[1]))).ravel()
            _, counts = np.unique(keys, return_counts=True)
        out[m] = _entropy_of_masses(counts / n) / m
    return out


def entropy_estimate(sys: SystemSpec, x, n: int, P: Partition, m_list) -> EntropyEstimate:
    """Plug-in entropy of the empirical measure of ``x``: ``min_m (1/m) H(P^m)``.

    Flags the estimate (and warns) when ``n < 10 (#P)^max(m)``.
    """
    m_list = sorted(int(m) for m in m_list)
    if not m_list or m_list[0] < 1:
        raise ValueError("block lengths must be >= 1")
    mmax = m_list[-1]
    orbit = iterate(sys, x, n + mmax - 2) if n + mmax - 2 >= 0 else iterate(sys, x, 0)
    codes = P.code(orbit)
    curve = _block_entropies(codes, n, P.size, m_list)
    unreliable = n < 10 * P.size ** mmax
    if unreliable:
        warnings.warn(
            f"n={n} < 10 * #P^m = {10 * P.size ** mmax}; large-m block entropies are biased low",
            UndersampledWarning,
            stacklevel=2,
        )
    return EntropyEstimate(min(curve.values()), curve, n, P.shape, unreliable, x)


def dynamical_ball_contains(sys: SystemSpec, x, y, n: int, alpha: float) -> bool:
    """Membership of y in the Bowen ball ``B_f(x, n, alpha)``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return orbit_distance(sys, x, y, n) < alpha


@dataclass
class SeparatedResult:
    count: int
    estimate: float
    grid_size: int
    n: int
    alpha: float


def _grid(space: PhaseSpace, step: float) -> np.ndarray:
    k = int(math.ceil(space.volume / step)) if space.kind == "interval" else int(math.ceil(1.0 / step))
    axis = np.arange(k) * step
    if space.kind == "interval":
        axis = space.lo + axis[axis <= space.volume]
    else:
        axis = axis[axis < 1.0]
    mesh = np.meshgrid(*([axis] * space.dim), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def separated_entropy(sys: SystemSpec, n: int, alpha: float, grid_step: float,
                      detail: bool = False):
    """``(1/n) log #S`` for a greedy maximal (n, alpha)-separated subset S of a uniform grid.

    Grid points are scanned in lexicographic order; a point joins S unless
    its Bowen distance to some member is below alpha. Close pairs come from
    a k-d tree on the stacked orbit coordinates (Chebyshev metric, periodic
    on tori).
    """
    if not 0 < grid_step < alpha:
        raise ValueError("need 0 < grid_step < alpha")
    pts = _grid(sys.space, grid_step)
    orbits = iterate_many(sys, pts, n - 1)  # (n, N, d)
    data = np.ascontiguousarray(np.transpose(orbits, (1, 0, 2)).reshape(len(pts), -1))
    box = 1.0 if sys.space.kind == "torus" else None
    if box is not None:
        data = np.where(data >= 1.0, 0.0, data)
    tree = cKDTree(data, boxsize=box)
    pairs = tree.query_pairs(alpha, p=np.inf, output_type="ndarray")
    if len(pairs):
        dist = sys.space.distance(orbits[:, pairs[:, 0]], orbits[:, pairs[:, 1]]).max(axis=0)
        pairs = pairs[dist < alpha]
    neighbours = [[] for _ in range(len(pts))]
    for i, j in pairs:
        lo, hi = (i, j) if i < j else (j, i)
        neighbours[hi].append(lo)
    chosen = np.zeros(len(pts), dtype=bool)
    for i in range(len(pts)):
        if not any(chosen[j] for j in neighbours[i]):
            chosen[i] = True
    count = int(chosen.sum())
    est = math.log(count) / n
    if detail:
        return SeparatedResult(count, est, len(pts), n, alpha)
    return est


def _log_mean_exp(a: np.ndarray) -> float:
    top = float(np.max(a))
    if not np.isfinite(top):
        return top
    return top + math.log(float(np.mean(np.exp(a - top))))


@dataclass
class KozlovskiResult:
    estimate: float
    mean_sigma_chi_plus: float
    n: int
    samples: int
    seed: int

    def to_record(self) -> dict:
        return {
            "n": self.n,
            "samples": self.samples,
            "seed": self.seed,
            "estimate": float(self.estimate),
            "mean_sigma_chi_plus": float(self.mean_sigma_chi_plus),
        }


def kozlovski_estimate(sys: SystemSpec, n: int, sample_count: int, seed: int,
                       detail: bool = False):
    """``(1/n) log mean_x max_k ||Lambda^k d_x f^n||`` over Lebesgue-random x.

    The mean is taken in log space so ``n`` may be large.
    """
    if sample_count < 100:
        raise ValueError("sample_count must be >= 100")
    pts = sample_points(sys, sample_count, seed, n)
    if sys.shift is not None:
        orbits = np.stack([iterate(sys, p, n - 1) for p in pts], axis=1)
    else:
        orbits = iterate_many(sys, np.array(pts), n - 1)  # (n, B, d)
    if not sys.smooth:
        for s in sys.singular_points:
            if np.any(orbits == s):
                raise ValueError(f"{sys.name}: a sampled orbit hits the non-smooth point {s}")
    J = sys.jacobian(orbits.reshape(-1, sys.d)).reshape(n, len(pts), sys.d, sys.d)
    ext = log_exterior_norms_of_products(np.swapaxes(J, 0, 1))  # (B, d)
    top = ext.max(axis=1)
    est = _log_mean_exp(top) / n
    if not detail:
        return est
    sigma = np.maximum(top / n, 0.0)
    return KozlovskiResult(est, float(sigma.mean()), n, sample_count, seed)


def F_function(t: float) -> float:
    """``t log t - (t - 1) log(t - 1)`` for t >= 1, with F(1) = 0.

    This is the binary-entropy growth rate: ``log C(mt, m) ~ m F(t)``.
    """
    if t < 1:
        raise ValueError("F is defined for t >= 1")
    if t == 1:
        return 0.0
    return t * math.log(t) - (t - 1) * math.log(t - 1)


class EnumerationLimitError(ValueError):
    pass


def _admissible_ranges(one_block_logs, A, range_guard):
    floor = math.ceil(A) - range_guard
    tops = [math.ceil(v) + 1 for v in one_block_logs]
    return floor, tops


def _threshold(m: int, A: float) -> int:
    return math.ceil(m * A - 1e-12)


def enumerate_admissible(one_block_logs, A: float, range_guard: int = 50, limit: int = 2_000_000):
    """Every admissible integer sequence, by brute force (small cases only)."""
    import itertools

    m = len(one_block_logs)
    floor, tops = _admissible_ranges(one_block_logs, A, range_guard)
    total = math.prod(max(t - floor + 1, 0) for t in tops)
    if total > limit:
        raise EnumerationLimitError(f"{total} candidate sequences exceed the limit {limit}; use a smaller m")
    need = _threshold(m, A)
    return [seq for seq in itertools.product(*(range(floor, t + 1) for t in tops)) if sum(seq) >= need]


def count_admissible(one_block_logs, A: float, m: int = None, range_guard: int = 50,
                     limit: int = 10**7):
    """Number of A-admissible code sequences and the counting bound ``exp(m F(lam + 2 - A))``.

    A sequence is admissible when ``floor <= a_l <= ceil(one_block_logs[l]) + 1``
    for every l and ``sum a_l >= m A``, where ``floor = ceil(A) - range_guard``.
    Counting is exact, by dynamic programming over partial sums. The bound
    is NaN when its argument is below 1.
    """
    logs = [float(v) for v in one_block_logs]
    if m is None:
        m = len(logs)
    if m != len(logs) or m < 1:
        raise ValueError("m must equal the number of one-block logs")
    floor, tops = _admissible_ranges(logs, A, range_guard)
    widths = [t - floor + 1 for t in tops]
    if m * sum(max(w, 0) for w in widths) > limit:
        raise EnumerationLimitError("enumeration range too large; use a smaller m")
    # ways[s] = number of prefixes with sum s + m_prefix * floor
    ways = [1]
    for w in widths:
        if w <= 0:
            ways = [0]
            break
        new = [0] * (len(ways) + w - 1)
        run = 0
        for s in range(len(new)):
            if s < len(ways):
                run += ways[s]
            if s - w >= 0:
                run -= ways[s - w]
            new[s] = run
        ways = new
    need = _threshold(m, A) - m * floor
    count = sum(ways[max(need, 0):])
    lam = sum(max(v, 0.0) for v in logs) / m
    arg = lam + 2 - A
    bound = math.exp(m * F_function(arg)) if arg >= 1 else math.nan
    return count, bound
