"""Small dense linear algebra for d <= 3 Jacobians.

Everything here is written out by hand: the matrices are tiny, and the
cocycle code needs deterministic, solver-independent singular values.
"""
from __future__ import annotations

import itertools
import math

import numpy as np

_JACOBI_SWEEPS = 60


def singular_values(a) -> np.ndarray:
    """Singular values of a small real matrix, sorted descending.

    One-sided Jacobi: plane rotations are applied to pairs of columns
    until all columns are mutually orthogonal; the singular values are
    then the column norms.
    """
    u = np.array(a, dtype=float, copy=True)
    if u.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    if u.shape[0] < u.shape[1]:
        u = u.T.copy()
    ncol = u.shape[1]
    for _ in range(_JACOBI_SWEEPS):
        rotated = False
        for i in range(ncol - 1):
            for j in range(i + 1, ncol):
                ci = u[:, i]
                cj = u[:, j]
                alpha = float(ci @ ci)
                beta = float(cj @ cj)
                gamma = float(ci @ cj)
                if gamma == 0.0 or abs(gamma) <= 1e-15 * math.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                new_i = c * ci - s * cj
                new_j = s * ci + c * cj
                u[:, i] = new_i
                u[:, j] = new_j
        if not rotated:
            break
    sv = np.sqrt(np.einsum("ij,ij->j", u, u))
    return np.sort(sv)[::-1]


def singular_values_2x2(a) -> np.ndarray:
    """Closed form for 2x2 matrices; used as an oracle for the Jacobi path."""
    (p, q), (r, s) = np.asarray(a, dtype=float)
    fro = p * p + q * q + r * r + s * s
    det = abs(p * s - q * r)
    disc = math.sqrt(max(fro * fro - 4.0 * det * det, 0.0))
    s1 = math.sqrt((fro + disc) / 2.0)
    s2 = det / s1 if s1 > 0 else 0.0
    return np.array([s1, s2])


def det(a) -> float:
    """Determinant by cofactor expansion (d <= 3)."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if n == 1:
        return float(a[0, 0])
    if n == 2:
        return float(a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0])
    total = 0.0
    for j in range(n):
        minor = np.delete(np.delete(a, 0, axis=0), j, axis=1)
        total += (-1) ** j * a[0, j] * det(minor)
    return float(total)


def compound(a, k: int) -> np.ndarray:
    """k-th compound matrix: the matrix of Lambda^k a in the basis of wedge products."""
    a = np.asarray(a, dtype=float)
    d = a.shape[0]
    idx = list(itertools.combinations(range(d), k))
    out = np.empty((len(idx), len(idx)))
    for r, rows in enumerate(idx):
        for c, cols in enumerate(idx):
            out[r, c] = det(a[np.ix_(rows, cols)])
    return out


def exterior_norm(J, k: int) -> float:
    """Operator norm of Lambda^k J, i.e. the product of the k largest singular values."""
    J = np.atleast_2d(np.asarray(J, dtype=float))
    d = J.shape[0]
    if J.shape != (d, d):
        raise ValueError(f"expected a square matrix, got shape {J.shape}")
    if not 1 <= k <= d:
        raise ValueError(f"exterior power k={k} out of range 1..{d}")
    return float(np.prod(singular_values(J)[:k]))


def log_exterior_norms(J) -> np.ndarray:
    """log ||Lambda^k J|| for k = 1..d (entries are -inf for rank-deficient powers)."""
    sv = singular_values(np.atleast_2d(J))
    with np.errstate(divide="ignore"):
        return np.cumsum(np.log(sv))


def gram_schmidt(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Batched QR by modified Gram-Schmidt with reorthogonalisation.

    ``a`` has shape (B, d, d). Returns (q, r) with r upper triangular and
    nonnegative diagonal. Zero columns yield a zero diagonal entry and an
    arbitrary completion of q.
    """
    a = np.asarray(a, dtype=float)
    B, d, _ = a.shape
    q = np.zeros_like(a)
    r = np.zeros_like(a)
    for j in range(d):
        v = a[:, :, j].copy()
        for _ in range(2):
            for i in range(j):
                coef = np.einsum("bk,bk->b", q[:, :, i], v)
                r[:, i, j] += coef
                v -= coef[:, None] * q[:, :, i]
        norm = np.sqrt(np.einsum("bk,bk->b", v, v))
        r[:, j, j] = norm
        safe = norm > 0
        q[safe, :, j] = v[safe] / norm[safe, None]
        if not safe.all():
            # complete the basis with a canonical vector orthogonal to the rest
            for b in np.flatnonzero(~safe):
                for e in np.eye(d):
                    w = e - sum((q[b, :, i] @ e) * q[b, :, i] for i in range(j))
                    nw = np.linalg.norm(w)
                    if nw > 1e-8:
                        q[b, :, j] = w / nw
                        break
    return q, r
