"""Dynamical systems: phase spaces, maps with exact Jacobians, and the built-in catalog.

Points are numpy arrays of shape ``(d,)``; orbits are arrays of shape
``(n + 1, d)``. Torus coordinates are reduced into ``[0, 1)`` after every
step.

The doubling and tent maps additionally accept :class:`DyadicPoint`
initial conditions. A double-precision orbit of either map collapses onto
0 after about 55 steps, so long Lebesgue-typical orbits are generated from
a stored random binary expansion instead.
"""
from __future__ import annotations

import math
import shlex
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

_MANTISSA = 53


class OrbitEscapeError(RuntimeError):
    def __init__(self, system: str, index: int, point):
        self.index = index
        self.point = point
        super().__init__(f"orbit of {system} left the phase space at iterate {index}: {point!r}")


class NonSmoothError(ValueError):
    """Raised when a smoothness-dependent estimator meets a non-smooth point."""

    def __init__(self, system: str, index: int, point):
        self.index = index
        super().__init__(
            f"{system} is not differentiable at iterate {index} (x={point!r}); "
            "derivative-based estimators refuse this orbit"
        )


@dataclass(frozen=True)
class PhaseSpace:
    """Either a closed interval ``[lo, hi]`` or the flat torus ``R^dim / Z^dim``."""

    kind: str
    lo: float = 0.0
    hi: float = 1.0
    dim: int = 1

    def __post_init__(self):
        if self.kind == "interval":
            if not self.lo < self.hi:
                raise ValueError("interval needs lo < hi")
            if self.dim != 1:
                raise ValueError("intervals are one-dimensional")
        elif self.kind == "torus":
            if self.dim not in (1, 2, 3):
                raise ValueError("torus dimension must be 1, 2 or 3")
        else:
            raise ValueError(f"unknown phase space kind {self.kind!r}")

    @classmethod
    def interval(cls, lo=0.0, hi=1.0):
        return cls("interval", float(lo), float(hi), 1)

    @classmethod
    def torus(cls, dim=1):
        return cls("torus", 0.0, 1.0, int(dim))

    @property
    def d(self) -> int:
        return self.dim

    @property
    def volume(self) -> float:
        return self.hi - self.lo if self.kind == "interval" else 1.0

    def distance(self, a, b):
        """Distance along the last axis (max of circle distances on tori)."""
        diff = np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
        if self.kind == "interval":
            return diff[..., 0] if diff.ndim and diff.shape[-1:] == (1,) else diff
        diff = np.mod(diff, 1.0)
        return np.minimum(diff, 1.0 - diff).max(axis=-1)

    def reduce(self, x):
        if self.kind == "interval":
            return x
        y = np.mod(x, 1.0)
        # np.mod(-tiny, 1.0) rounds to 1.0
        return np.where(y >= 1.0, 0.0, y)

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "interval":
            ok = (x >= self.lo) & (x <= self.hi)
        else:
            ok = (x >= 0.0) & (x < 1.0)
        return np.all(ok, axis=-1) & np.all(np.isfinite(x), axis=-1)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Lebesgue-uniform points, shape (size, d)."""
        u = rng.random((size, self.dim))
        if self.kind == "interval":
            return self.lo + (self.hi - self.lo) * u
        return u

    def to_unit(self, x):
        """Affine chart onto the unit cube (identity on tori)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "interval":
            return (x - self.lo) / (self.hi - self.lo)
        return x


class DyadicPoint:
    """A point of [0, 1) given by its binary expansion ``0.b0 b1 b2 ...``.

    ``flip`` complements every stored bit; the tent map needs it.
    """

    __slots__ = ("bits", "flip")

    def __init__(self, bits, flip: int = 0):
        self.bits = np.asarray(bits, dtype=np.uint8)
        self.flip = int(flip) & 1

    @classmethod
    def random(cls, rng: np.random.Generator, nbits: int):
        return cls(rng.integers(0, 2, size=nbits, dtype=np.uint8))

    @classmethod
    def from_float(cls, x: float, nbits: int = _MANTISSA):
        bits = np.zeros(nbits, dtype=np.uint8)
        frac = float(x) % 1.0
        for i in range(nbits):
            frac *= 2.0
            if frac >= 1.0:
                bits[i] = 1
                frac -= 1.0
        return cls(bits)

    def __len__(self):
        return len(self.bits)

    def state(self) -> np.ndarray:
        return self.bits ^ np.uint8(self.flip)

    def __float__(self):
        head = self.state()[:_MANTISSA]
        return float(sum(int(b) << (_MANTISSA - 1 - i) for i, b in enumerate(head))) * 2.0**-_MANTISSA

    def __eq__(self, other):
        return isinstance(other, DyadicPoint) and np.array_equal(self.state(), other.state())

    def __hash__(self):
        return hash(self.state().tobytes())

    def __repr__(self):
        return f"DyadicPoint({float(self)!r}, nbits={len(self.bits)})"


def _window_values(bits: np.ndarray, count: int) -> np.ndarray:
    """Values of the 53-bit windows starting at offsets 0..count-1."""
    need = count - 1 + _MANTISSA
    if len(bits) < need:
        raise ValueError(f"dyadic point carries {len(bits)} bits, orbit needs {need}")
    acc = np.zeros(count, dtype=np.int64)
    for j in range(_MANTISSA):
        acc |= bits[j : j + count].astype(np.int64) << (_MANTISSA - 1 - j)
    return acc, (np.int64(1) << _MANTISSA) - 1


@dataclass(frozen=True)
class SystemSpec:
    """A smooth (or explicitly non-smooth) self-map of a phase space.

    ``map`` and ``jacobian`` are vectorised: they take an array of points of
    shape (N, d) and return shapes (N, d) and (N, d, d). ``step`` is an
    optional scalar fast path (tuple in, tuple out) used for long single
    orbits.
    """

    name: str
    space: PhaseSpace
    map: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    smoothness_class: str = "c_infinity"
    r: Optional[int] = None
    params: dict = field(default_factory=dict)
    step: Optional[Callable] = None
    singular_points: tuple = ()
    shift: Optional[str] = None

    @property
    def d(self) -> int:
        return self.space.dim

    @property
    def smooth(self) -> bool:
        return self.smoothness_class == "c_infinity" or (self.r is not None and self.r >= 1)

    def __call__(self, x):
        if isinstance(x, DyadicPoint):
            return shift_step(self, x)
        x = np.asarray(x, dtype=float).reshape(1, self.d)
        return self.space.reduce(self.map(x))[0]

    def jacobian_at(self, x) -> np.ndarray:
        x = np.asarray(float(x) if isinstance(x, DyadicPoint) else x, dtype=float)
        return self.jacobian(x.reshape(1, self.d))[0]

    def describe(self) -> str:
        if not self.params:
            return self.name
        return self.name + " " + " ".join(f"{k}={v!r}" for k, v in self.params.items())


def shift_step(sys: SystemSpec, x: DyadicPoint) -> DyadicPoint:
    if sys.shift == "doubling":
        return DyadicPoint(x.bits[1:], x.flip)
    if sys.shift == "tent":
        lead = int(x.bits[0]) ^ x.flip
        return DyadicPoint(x.bits[1:], x.flip ^ lead)
    raise TypeError(f"{sys.name} does not act on dyadic expansions")


def as_point(sys: SystemSpec, x):
    if isinstance(x, DyadicPoint):
        if sys.shift is None:
            return np.array([float(x)])
        return x
    return np.asarray(x, dtype=float).reshape(sys.d)


def _dyadic_orbit(sys: SystemSpec, x: DyadicPoint, n: int) -> np.ndarray:
    acc, full = _window_values(x.bits, n + 1)
    if sys.shift == "doubling":
        flips = np.full(n + 1, x.flip, dtype=np.int64)
    elif sys.shift == "tent":
        flips = np.empty(n + 1, dtype=np.int64)
        flips[0] = x.flip
        flips[1:] = x.bits[:n]
    else:
        raise TypeError(f"{sys.name} does not act on dyadic expansions")
    acc = np.where(flips == 1, full - acc, acc)
    return (acc.astype(np.float64) * 2.0**-_MANTISSA).reshape(n + 1, 1)


def iterate(sys: SystemSpec, x, n: int) -> np.ndarray:
    """Orbit ``x, f(x), ..., f^n(x)`` as an array of shape (n + 1, d)."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    x = as_point(sys, x)
    if isinstance(x, DyadicPoint):
        return _dyadic_orbit(sys, x, n)
    if not sys.space.contains(x):
        raise OrbitEscapeError(sys.name, 0, x)
    if sys.step is not None:
        step = sys.step
        cur = tuple(float(v) for v in x)
        out = [cur]
        append = out.append
        for _ in range(n):
            cur = step(cur)
            append(cur)
        orbit = np.array(out, dtype=float).reshape(n + 1, sys.d)
    else:
        orbit = np.empty((n + 1, sys.d))
        orbit[0] = x
        cur = x.reshape(1, sys.d)
        for k in range(n):
            cur = sys.space.reduce(sys.map(cur))
            orbit[k + 1] = cur[0]
    _check_orbit(sys, orbit)
    return orbit


def iterate_many(sys: SystemSpec, points, n: int) -> np.ndarray:
    """Orbits of several points at once; shape (n + 1, B, d)."""
    pts = np.asarray(points, dtype=float).reshape(-1, sys.d)
    out = np.empty((n + 1,) + pts.shape)
    out[0] = pts
    cur = pts
    for k in range(n):
        cur = sys.space.reduce(sys.map(cur))
        out[k + 1] = cur
    for b in range(pts.shape[0]):
        _check_orbit(sys, out[:, b])
    return out


def _check_orbit(sys: SystemSpec, orbit: np.ndarray):
    ok = sys.space.contains(orbit)
    if not ok.all():
        k = int(np.argmin(ok))
        raise OrbitEscapeError(sys.name, k, orbit[k])


def orbit_distance(sys: SystemSpec, x, y, n: int) -> float:
    """Bowen distance ``max_{0 <= l < n} d(f^l x, f^l y)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ox = iterate(sys, x, n - 1)
    oy = iterate(sys, y, n - 1)
    return float(np.max(sys.space.distance(ox, oy)))


def sample_points(sys: SystemSpec, count: int, seed: int, n_steps: int = 0) -> list:
    """Lebesgue-uniform initial points, reproducible from ``seed``.

    Shift systems get dyadic points carrying enough random bits for
    ``n_steps`` iterations.
    """
    rng = np.random.default_rng(np.uint64(seed))
    if sys.shift is not None:
        return [DyadicPoint.random(rng, n_steps + _MANTISSA + 11) for _ in range(count)]
    return list(sys.space.sample(rng, count))


def jacobian_self_check(sys: SystemSpec, count: int = 100, seed: int = 0, h: float = 1e-6,
                        rtol: float = 1e-6, avoid: float = 1e-3) -> float:
    """Worst relative mismatch between ``jacobian`` and a central difference of ``map``.

    Points within ``avoid`` of a singular point or of the boundary of the
    phase space are skipped. Returns the worst relative error found and
    raises AssertionError when it exceeds ``rtol``.
    """
    rng = np.random.default_rng(seed)
    pts = sys.space.sample(rng, count * 4)
    keep = np.ones(len(pts), dtype=bool)
    for s in sys.singular_points:
        keep &= np.all(np.abs(pts - s) > avoid, axis=1)
    if sys.space.kind == "interval":
        keep &= np.all((pts - sys.space.lo > avoid) & (sys.space.hi - pts > avoid), axis=1)
    pts = pts[keep][:count]
    J = sys.jacobian(pts)
    worst = 0.0
    for e in range(sys.d):
        shift = np.zeros(sys.d)
        shift[e] = h
        # central differences on the lift: no reduction mod 1
        fd = (sys.map(pts + shift) - sys.map(pts - shift)) / (2 * h)
        if sys.space.kind == "torus":
            fd = np.mod(fd * 2 * h + 0.5, 1.0) - 0.5
            fd /= 2 * h
        col = J[:, :, e]
        scale = np.maximum(np.abs(col).max(axis=1, keepdims=True), 1.0)
        worst = max(worst, float(np.max(np.abs(fd - col) / scale)))
    if worst > rtol:
        raise AssertionError(f"{sys.name}: Jacobian disagrees with finite differences ({worst:.3g})")
    return worst


# -- catalog -----------------------------------------------------------------

def doubling() -> SystemSpec:
    def step(p):
        y = (2.0 * p[0]) % 1.0
        return (y,)

    return SystemSpec(
        name="doubling",
        space=PhaseSpace.torus(1),
        map=lambda x: 2.0 * x,
        jacobian=lambda x: np.full((len(x), 1, 1), 2.0),
        step=step,
        shift="doubling",
    )


def rotation(theta: float = (math.sqrt(5) - 1) / 2) -> SystemSpec:
    theta = float(theta)

    def step(p):
        y = (p[0] + theta) % 1.0
        return (0.0 if y >= 1.0 else y,)

    return SystemSpec(
        name="rotation",
        space=PhaseSpace.torus(1),
        map=lambda x: x + theta,
        jacobian=lambda x: np.ones((len(x), 1, 1)),
        params={"theta": theta},
        step=step,
    )


def tent() -> SystemSpec:
    def f(x):
        return np.where(x < 0.5, 2.0 * x, 2.0 - 2.0 * x)

    def jac(x):
        # one-sided at the peak: the right derivative
        return np.where(x < 0.5, 2.0, -2.0).reshape(len(x), 1, 1)

    def step(p):
        x = p[0]
        return (2.0 * x if x < 0.5 else 2.0 - 2.0 * x,)

    return SystemSpec(
        name="tent",
        space=PhaseSpace.interval(0.0, 1.0),
        map=f,
        jacobian=jac,
        smoothness_class="c_r",
        r=0,
        step=step,
        singular_points=(0.5,),
        shift="tent",
    )


def logistic(mu: float = 4.0) -> SystemSpec:
    mu = float(mu)
    if not 0.0 < mu <= 4.0:
        raise ValueError("logistic parameter mu must lie in (0, 4]")

    def step(p):
        x = p[0]
        return (mu * x * (1.0 - x),)

    return SystemSpec(
        name="logistic",
        space=PhaseSpace.interval(0.0, 1.0),
        map=lambda x: mu * x * (1.0 - x),
        jacobian=lambda x: (mu * (1.0 - 2.0 * x)).reshape(len(x), 1, 1),
        params={"mu": mu},
        step=step,
    )


_CAT = np.array([[2.0, 1.0], [1.0, 1.0]])


def cat() -> SystemSpec:
    def step(p):
        x, y = p
        u = (2.0 * x + y) % 1.0
        v = (x + y) % 1.0
        return (0.0 if u >= 1.0 else u, 0.0 if v >= 1.0 else v)

    return SystemSpec(
        name="cat",
        space=PhaseSpace.torus(2),
        map=lambda x: x @ _CAT.T,
        jacobian=lambda x: np.broadcast_to(_CAT, (len(x), 2, 2)).copy(),
        step=step,
    )


def identity() -> SystemSpec:
    return SystemSpec(
        name="identity",
        space=PhaseSpace.interval(0.0, 1.0),
        map=lambda x: x.copy(),
        jacobian=lambda x: np.ones((len(x), 1, 1)),
        step=lambda p: p,
    )


def _counterexample(r=2, lam=2.0, n0=5, nmax=12, **kw):
    from .counterexample import build

    return build(int(r), float(lam), int(n0), int(nmax)).system()


CATALOG = {
    "doubling": doubling,
    "rotation": rotation,
    "tent": tent,
    "logistic": logistic,
    "cat": cat,
    "identity": identity,
    "counterexample": _counterexample,
}

_ALIASES = {"lambda": "lam", "lam": "lam"}


def make_system(name: str, **params) -> SystemSpec:
    try:
        ctor = CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown system {name!r}; choose from {sorted(CATALOG)}") from None
    params = {_ALIASES.get(k, k): v for k, v in params.items()}
    try:
        return ctor(**params)
    except TypeError as exc:
        raise ValueError(f"bad parameters for {name}: {exc}") from None


def parse_system(spec) -> SystemSpec:
    """Build a system from ``"logistic mu=4.0"`` or the token list ``["logistic", "mu=4.0"]``."""
    tokens = shlex.split(spec) if isinstance(spec, str) else list(spec)
    if not tokens:
        raise ValueError("empty system specification")
    name, rest = tokens[0], tokens[1:]
    params = {}
    for tok in rest:
        if "=" not in tok:
            raise ValueError(f"system parameter {tok!r} is not key=value")
        k, v = tok.split("=", 1)
        try:
            params[k] = int(v) if v.lstrip("-").isdigit() else float(v)
        except ValueError:
            raise ValueError(f"system parameter {k} needs a number, got {v!r}") from None
    return make_system(name, **params)
