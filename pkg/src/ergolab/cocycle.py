"""Derivative cocycle along orbits and the pointwise Lyapunov quantities built on it.

The product ``d_{f^{n-1}x} f ... d_x f`` is never formed. It is carried as
``Q D T`` with ``Q`` orthogonal, ``D`` a diagonal kept as logarithms and
``T`` unit upper triangular with bounded entries. Each step applies one
Jacobian and re-orthonormalises with a small QR. The singular values of
the product are the singular values of ``D T``. They come out in log space
through the compound matrices of ``T``, so exponents of any size are safe.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import compound, gram_schmidt, singular_values
from .systems import NonSmoothError, SystemSpec, as_point, iterate

_EXP_CLIP = 700.0


def _generic_frame(d: int) -> np.ndarray:
    # fixed, "irrational" starting frame so that no coordinate axis is
    # accidentally invariant (e.g. diagonal Jacobians with the small entry first)
    rng = np.random.default_rng(20240917)
    q, _ = gram_schmidt(rng.standard_normal((1, d, d)))
    return q[0]


@dataclass
class _Accumulator:
    """Running factorisation for a batch of B products."""

    q: np.ndarray  # (B, d, d)
    logd: np.ndarray  # (B, d)
    t: np.ndarray  # (B, d, d), unit upper triangular
    steps: int = 0

    @classmethod
    def start(cls, batch: int, d: int):
        frame = _generic_frame(d)
        return cls(
            q=np.broadcast_to(frame, (batch, d, d)).copy(),
            logd=np.zeros((batch, d)),
            t=np.broadcast_to(np.eye(d), (batch, d, d)).copy(),
        )

    def push(self, J: np.ndarray):
        q, r = gram_schmidt(J @ self.q)
        self.q = q
        diag = np.diagonal(r, axis1=1, axis2=2)
        d = diag.shape[1]
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            gap = self.logd[:, None, :] - self.logd[:, :, None]  # a_j - a_i
            gap = np.nan_to_num(gap, nan=0.0, posinf=_EXP_CLIP, neginf=-_EXP_CLIP)
            scale = np.exp(np.clip(gap, -_EXP_CLIP, _EXP_CLIP))
            s = np.triu(r * scale, 1) + np.einsum("bi,ij->bij", diag, np.eye(d))
            m = s @ self.t
            safe = np.where(diag > 0, diag, 1.0)
            self.t = np.triu(m / safe[:, :, None], 1) + np.eye(d)
            self.logd = self.logd + np.log(diag)
        self.steps += 1

    def log_exterior_norms(self) -> np.ndarray:
        """log ||Lambda^k P|| for k = 1..d, shape (B, d)."""
        B, d = self.logd.shape
        out = np.empty((B, d))
        out[:, d - 1] = self.logd.sum(axis=1)  # det T = 1
        if d == 1:
            return out
        if d == 2:
            out[:, 0] = _log_top_sv_2x2(self.logd, self.t[:, 0, 1])
            return out
        for b in range(B):
            for k in range(1, d):
                out[b, k - 1] = _log_compound_norm(self.logd[b], self.t[b], k)
        return out


def _log_top_sv_2x2(logd: np.ndarray, t12: np.ndarray) -> np.ndarray:
    """log sigma_1 of [[e^a1, e^a1 t], [0, e^a2]] without leaving log space."""
    a1, a2 = logd[:, 0], logd[:, 1]
    with np.errstate(invalid="ignore"):
        m = np.maximum(a1, a2)
        m = np.where(np.isfinite(m), m, 0.0)
        p = np.exp(a1 - m)
        q = p * t12
        s = np.exp(a2 - m)
        fro = p * p + q * q + s * s
        det = p * s
        disc = np.sqrt(np.maximum(fro * fro - 4 * det * det, 0.0))
        top = np.sqrt((fro + disc) / 2)
        with np.errstate(divide="ignore"):
            return m + np.log(top)


def _log_compound_norm(logd: np.ndarray, t: np.ndarray, k: int) -> float:
    d = len(logd)
    idx = list(itertools.combinations(range(d), k))
    weights = np.array([logd[list(I)].sum() for I in idx])
    top = weights.max()
    if not np.isfinite(top):
        return -math.inf
    scaled = np.exp(weights - top)[:, None] * compound(t, k)
    return float(top + math.log(singular_values(scaled)[0]))


def log_exterior_norms_of_products(jacobians: np.ndarray) -> np.ndarray:
    """log ||Lambda^k (J_{n-1} ... J_0)|| for every product in a batch.

    ``jacobians`` has shape (B, n, d, d). Returns shape (B, d).
    """
    J = np.asarray(jacobians, dtype=float)
    B, n, d, _ = J.shape
    if d == 1:
        with np.errstate(divide="ignore"):
            return np.log(np.abs(J[:, :, 0, 0])).sum(axis=1, keepdims=True)
    acc = _Accumulator.start(B, d)
    for k in range(n):
        acc.push(J[:, k])
    return acc.log_exterior_norms()


@dataclass
class CocycleRecord:
    """Log singular values ``s_1 >= ... >= s_d`` of ``d_x f^n``."""

    x: object
    n: int
    log_singvals: np.ndarray
    per_step_jacobians_consumed: int

    @property
    def log_exterior_norms(self) -> np.ndarray:
        return np.cumsum(self.log_singvals)


def _smooth_orbit(sys: SystemSpec, x, n: int) -> np.ndarray:
    orbit = iterate(sys, x, n - 1)
    if not sys.smooth:
        for s in sys.singular_points:
            hits = np.flatnonzero(np.any(orbit == s, axis=1))
            if len(hits):
                raise NonSmoothError(sys.name, int(hits[0]), orbit[hits[0]])
    return orbit


def cocycle_along_orbit(sys: SystemSpec, x, n: int) -> CocycleRecord:
    if n < 1:
        raise ValueError("n must be >= 1")
    x = as_point(sys, x)
    orbit = _smooth_orbit(sys, x, n)
    J = sys.jacobian(orbit)
    ext = log_exterior_norms_of_products(J[None])[0]
    sv = np.diff(np.concatenate([[0.0], ext]))
    return CocycleRecord(x=x, n=n, log_singvals=sv, per_step_jacobians_consumed=len(J))


@dataclass
class LyapunovReport:
    chi_k: np.ndarray
    sigma_chi_plus: float
    n: int
    x: object = None

    def to_record(self) -> dict:
        return {
            "x": _point_record(self.x),
            "n": self.n,
            "chi": [float(c) for c in self.chi_k],
            "sigma_chi_plus": float(self.sigma_chi_plus),
        }


def _point_record(x):
    if x is None:
        return None
    try:
        return [float(v) for v in np.atleast_1d(x)]
    except TypeError:
        return [float(x)]


def lyapunov_report(sys: SystemSpec, x, n: int) -> LyapunovReport:
    """Finite-time exponents ``chi_k = (1/n) log ||Lambda^k d_x f^n||``."""
    rec = cocycle_along_orbit(sys, x, n)
    chi = np.cumsum(rec.log_singvals) / n
    return LyapunovReport(chi_k=chi, sigma_chi_plus=max(0.0, float(np.max(chi))), n=n, x=rec.x)


def lyapunov_reports(sys: SystemSpec, xs, n: int) -> list:
    """:func:`lyapunov_report` for many points, sharing one batched QR sweep.

    The per-step cost of the factorisation is numpy call overhead, so a
    batch of B points costs about as much as one.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    xs = [as_point(sys, x) for x in xs]
    if not xs:
        return []
    J = np.stack([sys.jacobian(_smooth_orbit(sys, x, n)) for x in xs])
    ext = log_exterior_norms_of_products(J)
    out = []
    for x, e in zip(xs, ext):
        chi = e / n
        out.append(LyapunovReport(chi_k=chi, sigma_chi_plus=max(0.0, float(np.max(chi))), n=n, x=x))
    return out


@dataclass
class StrongExponentReport:
    p_list: list
    lambda_p: dict
    lambda_p_limsup: dict
    lam: float
    sigma_lambda_p: dict
    sigma_lambda: float
    n: int
    x: object = None
    extras: dict = field(default_factory=dict)

    def to_record(self) -> dict:
        return {
            "x": _point_record(self.x),
            "n": self.n,
            "lambda_p": {str(p): float(v) for p, v in self.lambda_p.items()},
            "lambda_p_limsup": {str(p): float(v) for p, v in self.lambda_p_limsup.items()},
            "lambda": float(self.lam),
            "sigma_lambda_p": {str(p): float(v) for p, v in self.sigma_lambda_p.items()},
            "sigma_lambda": float(self.sigma_lambda),
        }


def _cesaro_limsup(values: np.ndarray) -> float:
    n = len(values) - 1
    marks = sorted({max(n // 2, 0), max(3 * n // 4, 0), n})
    return max(float(values[: m + 1].mean()) for m in marks)


def strong_exponents(sys: SystemSpec, x, p_list, n: int) -> StrongExponentReport:
    """Time averages of ``log+ ||d_{f^l x} f^p||`` over ``l = 0..n``.

    The average is normalised by the number of terms, ``n + 1``. The limsup
    is approximated by the largest Cesaro average at n/2, 3n/4 and n and is
    reported next to the plain average.
    """
    p_list = [int(p) for p in p_list]
    if not p_list or min(p_list) < 1:
        raise ValueError("block lengths must be >= 1")
    pmax = max(p_list)
    x = as_point(sys, x)
    orbit = _smooth_orbit(sys, x, n + pmax)
    J = sys.jacobian(orbit)
    lam_p, lam_sup, sig_p = {}, {}, {}
    for p in p_list:
        windows = np.lib.stride_tricks.sliding_window_view(J, p, axis=0)[: n + 1]
        windows = np.moveaxis(windows, -1, 1)  # (n+1, p, d, d)
        ext = log_exterior_norms_of_products(windows)
        top = np.maximum(ext[:, 0], 0.0)
        lam_p[p] = float(top.mean())
        lam_sup[p] = _cesaro_limsup(top)
        sig_p[p] = float(np.maximum(ext.max(axis=1), 0.0).mean())
    return StrongExponentReport(
        p_list=p_list,
        lambda_p=lam_p,
        lambda_p_limsup=lam_sup,
        lam=min(lam_p[p] / p for p in p_list),
        sigma_lambda_p=sig_p,
        sigma_lambda=min(sig_p[p] / p for p in p_list),
        n=n,
        x=x,
    )
