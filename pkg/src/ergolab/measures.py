"""Empirical measures, the weighted Fourier metric on measures, and sampled pw / physical-like sets.

A measure is compared with another only through its moment vector
``(int phi_n dmu)_n`` against a fixed truncated family of test functions.
The distance is then a weighted l1 distance of moment vectors, so it is an
exact pseudo-metric on whatever the family resolves.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import parallel_map
from .systems import PhaseSpace, SystemSpec, iterate, sample_points

DEFAULT_NPHI = 33
DEFAULT_EPS_CLUSTER = 0.02


def _wave_vectors(dim: int, count: int) -> list:
    """Nonzero integer frequencies up to sign, by max-norm then lexicographically."""
    out = []
    radius = 1
    while len(out) < count and count > 0:
        shell = []
        for k in itertools.product(range(-radius, radius + 1), repeat=dim):
            if max(abs(c) for c in k) != radius:
                continue
            first = next(c for c in k if c != 0)
            if first > 0:
                shell.append(k)
        out.extend(sorted(shell))
        radius += 1
    return out[:count]


@dataclass(frozen=True)
class TestFunctionFamily:
    """Truncated family ``1, cos(2 pi k.u), sin(2 pi k.u), ...`` on the unit chart of a space.

    ``count`` is the truncation length N_phi. Functions are indexed from 1,
    and function n carries weight ``1 / (2^n (1 + sup|phi_n|))``.
    """

    __test__ = False  # not a pytest class

    space: PhaseSpace
    count: int = DEFAULT_NPHI

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("N_phi must be >= 1")

    @property
    def frequencies(self) -> np.ndarray:
        # one wave vector per cos/sin pair after the constant
        ks = _wave_vectors(self.space.dim, self.count // 2)
        return np.array(ks, dtype=float).reshape(-1, self.space.dim)

    @property
    def sup_norms(self) -> np.ndarray:
        return np.ones(self.count)

    @property
    def weights(self) -> np.ndarray:
        n = np.arange(1, self.count + 1, dtype=float)
        return 1.0 / (2.0**n * (1.0 + self.sup_norms))

    @property
    def tail_bound(self) -> float:
        return 2.0 ** (-self.count + 1)

    def features(self, points) -> np.ndarray:
        """Matrix of phi_n(point), shape (N, count)."""
        pts = np.asarray(points, dtype=float).reshape(-1, self.space.dim)
        u = self.space.to_unit(pts)
        phase = 2.0 * np.pi * (u @ self.frequencies.T)
        out = np.empty((len(pts), self.count))
        out[:, 0] = 1.0
        n_cos = self.count // 2
        n_sin = (self.count - 1) // 2
        out[:, 1::2] = np.cos(phase[:, :n_cos])
        out[:, 2::2] = np.sin(phase[:, :n_sin])
        return out


@dataclass
class EmpiricalMeasure:
    """Finitely supported probability measure."""

    support: np.ndarray  # (N, d)
    weights: np.ndarray  # (N,)
    n: int = 0  # orbit length it was built from, 0 if not an orbit measure
    _moments: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=float)
        if self.support.ndim == 1:
            self.support = self.support.reshape(-1, 1)
        self.weights = np.asarray(self.weights, dtype=float)
        if len(self.support) != len(self.weights) or len(self.weights) == 0:
            raise ValueError("support and weights must be nonempty and of equal length")
        if np.any(self.weights < 0):
            raise ValueError("weights must be nonnegative")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {self.weights.sum()!r}, not 1")

    @classmethod
    def dirac(cls, point):
        return cls(np.atleast_2d(np.asarray(point, dtype=float)), np.ones(1))

    @classmethod
    def from_points(cls, points, weights=None, n: int = 0):
        """Merge exactly-equal points, summing their weights."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        w = np.full(len(pts), 1.0 / len(pts)) if weights is None else np.asarray(weights, dtype=float)
        uniq, inv = np.unique(pts, axis=0, return_inverse=True)
        merged = np.bincount(inv.ravel(), weights=w, minlength=len(uniq))
        merged = merged / merged.sum()
        return cls(uniq, merged, n=n)

    def moments(self, fam: TestFunctionFamily) -> np.ndarray:
        key = (fam.space, fam.count)
        if key not in self._moments:
            self._moments[key] = self.weights @ fam.features(self.support)
        return self._moments[key]

    def to_record(self) -> dict:
        return {
            "support": [[float(c) for c in p] for p in self.support],
            "weights": [float(w) for w in self.weights],
        }

    @classmethod
    def from_record(cls, rec: dict):
        return cls(np.array(rec["support"], dtype=float), np.array(rec["weights"], dtype=float))


@dataclass
class MeasureSet:
    """Finite stand-in for a compact set of measures.

    ``multiplicity[i]`` counts how many input measures were merged into
    member i by clustering.
    """

    members: list
    multiplicity: list = None

    def __post_init__(self):
        if not self.members:
            raise ValueError("a measure set must be nonempty")
        if self.multiplicity is None:
            self.multiplicity = [1] * len(self.members)

    def __len__(self):
        return len(self.members)

    def to_record(self) -> list:
        return [dict(m.to_record(), multiplicity=int(c), n=int(m.n))
                for m, c in zip(self.members, self.multiplicity)]


def empirical_measure(sys: SystemSpec, x, n: int) -> EmpiricalMeasure:
    """Uniform weights 1/n on ``x, f(x), ..., f^{n-1}(x)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    orbit = iterate(sys, x, n - 1)
    return EmpiricalMeasure.from_points(orbit, n=n)


def lebesgue_grid(space: PhaseSpace, per_axis: int = 1000) -> EmpiricalMeasure:
    """Uniform measure on the cell centres of a regular grid (a Lebesgue proxy)."""
    axis = (np.arange(per_axis) + 0.5) / per_axis
    grid = np.array(list(itertools.product(axis, repeat=space.dim)))
    if space.kind == "interval":
        grid = space.lo + (space.hi - space.lo) * grid
    return EmpiricalMeasure(grid, np.full(len(grid), 1.0 / len(grid)))


def _dist_moments(a: np.ndarray, b: np.ndarray, weights: np.ndarray) -> float:
    return float(np.sum(weights * np.abs(a - b)))


def dmetric(mu: EmpiricalMeasure, nu: EmpiricalMeasure, fam: TestFunctionFamily) -> float:
    """Truncated weak-* distance ``sum_n |int phi_n dnu - int phi_n dmu| / (2^n (1 + sup|phi_n|))``."""
    return _dist_moments(mu.moments(fam), nu.moments(fam), fam.weights)


def _pairwise(A: np.ndarray, B: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return np.abs(A[:, None, :] - B[None, :, :]) @ weights


def hausdorff(dA: MeasureSet, dB: MeasureSet, fam: TestFunctionFamily) -> float:
    """Hausdorff distance between two measure sets under :func:`dmetric`."""
    A = np.array([m.moments(fam) for m in dA.members])
    B = np.array([m.moments(fam) for m in dB.members])
    D = _pairwise(A, B, fam.weights)
    return float(max(D.min(axis=1).max(), D.min(axis=0).max()))


def _cluster(moments: np.ndarray, weights: np.ndarray, eps: float):
    """Greedy clustering in input order; returns (representative indices, multiplicities)."""
    reps, counts = [], []
    for i, m in enumerate(moments):
        if reps:
            d = np.abs(moments[reps] - m) @ weights
            j = int(np.argmin(d))
            if d[j] < eps:
                counts[j] += 1
                continue
        reps.append(i)
        counts.append(1)
    return reps, counts


def pw_estimate(sys: SystemSpec, x, n_checkpoints, fam: TestFunctionFamily,
                eps_cluster: float = DEFAULT_EPS_CLUSTER) -> MeasureSet:
    """Cluster the empirical measures at the checkpoints; the latest one represents its cluster."""
    cps = [int(c) for c in n_checkpoints]
    if len(cps) < 2 or any(b <= a for a, b in zip(cps, cps[1:])) or cps[0] < 1:
        raise ValueError("need at least two increasing positive checkpoints")
    orbit = iterate(sys, x, cps[-1] - 1)
    feats = fam.features(orbit)
    bounds = [0] + cps
    partial = np.cumsum([feats[a:b].sum(axis=0) for a, b in zip(bounds, bounds[1:])], axis=0)
    moments = partial / np.array(cps, dtype=float)[:, None]
    order = list(range(len(cps)))[::-1]  # largest n first
    reps, counts = _cluster(moments[order], fam.weights, eps_cluster)
    members = []
    for r in reps:
        c = cps[order[r]]
        mu = EmpiricalMeasure.from_points(orbit[:c], n=c)
        mu._moments[(fam.space, fam.count)] = moments[order[r]]
        members.append(mu)
    return MeasureSet(members, counts)


def default_checkpoints(n: int) -> list:
    return sorted({max(1, n // 4), max(2, n // 2), max(3, (3 * n) // 4), n})


def physical_like_estimate(sys: SystemSpec, sample_count: int, n: int, seed: int,
                           fam: TestFunctionFamily, eps_cluster: float = DEFAULT_EPS_CLUSTER,
                           checkpoints=None) -> MeasureSet:
    """Pool pw estimates of Lebesgue-random points and cluster the pool.

    Multiplicities count pooled representatives, so ``multiplicity / total``
    is the empirical frequency of each cluster among the samples. Clusters
    the sample never hits are invisible, so the result is not a complete
    description of the physical-like set.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    cps = checkpoints or default_checkpoints(n)
    points = sample_points(sys, sample_count, seed, n)
    sets = parallel_map(lambda p: pw_estimate(sys, p, cps, fam, eps_cluster), points)
    pool = [m for s in sets for m in s.members]
    moments = np.array([m.moments(fam) for m in pool])
    # stable: largest n first, then sample index
    order = sorted(range(len(pool)), key=lambda i: -pool[i].n)
    reps, counts = _cluster(moments[order], fam.weights, eps_cluster)
    return MeasureSet([pool[order[r]] for r in reps], counts)
