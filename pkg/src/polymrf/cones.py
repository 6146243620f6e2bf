"""Conic machinery: interval moment matrices, nonnegativity certificates,
Gram-coefficient maps, and projection onto the positive semidefinite cone.

All matrices here are small (dimension <= 9 for degree <= 16), so the
symmetric eigensolver is a cyclic Jacobi sweep, batched over leading axes.
A numba kernel accelerates the batch loop when numba is importable; the
pure-numpy fallback runs the identical rotations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegreeTooSmall, EigenFailure, LengthMismatch
from .poly import Interval, Polynomial, minimize_on_interval

_JACOBI_SWEEPS = 50
_JACOBI_TOL = 1e-14

try:  # pragma: no cover - exercised implicitly when numba is present
    import numba

    @numba.njit(cache=True)
    def _jacobi_sweep_kernel(A, V, max_sweeps, tol):
        nbad = 0
        B, n = A.shape[0], A.shape[1]
        for b in range(B):
            a = A[b]
            v = V[b]
            converged = False
            for _ in range(max_sweeps):
                off2 = 0.0
                scale = 0.0
                for i in range(n):
                    scale += a[i, i] * a[i, i]
                    for j in range(i + 1, n):
                        off2 += a[i, j] * a[i, j]
                if off2 <= tol * tol * max(scale, 1e-300):
                    converged = True
                    break
                for p in range(n - 1):
                    for q in range(p + 1, n):
                        apq = a[p, q]
                        app = a[p, p]
                        aqq = a[q, q]
                        if apq * apq <= 1e-36 * (app * app + aqq * aqq) + 1e-300:
                            continue
                        theta = 0.5 * (aqq - app) / apq
                        if theta >= 0.0:
                            t = 1.0 / (theta + np.sqrt(1.0 + theta * theta))
                        else:
                            t = -1.0 / (-theta + np.sqrt(1.0 + theta * theta))
                        c = 1.0 / np.sqrt(1.0 + t * t)
                        s = t * c
                        for k in range(n):
                            akp = a[k, p]
                            akq = a[k, q]
                            a[k, p] = c * akp - s * akq
                            a[k, q] = s * akp + c * akq
                        for k in range(n):
                            apk = a[p, k]
                            aqk = a[q, k]
                            a[p, k] = c * apk - s * aqk
                            a[q, k] = s * apk + c * aqk
                        for k in range(n):
                            vkp = v[k, p]
                            vkq = v[k, q]
                            v[k, p] = c * vkp - s * vkq
                            v[k, q] = s * vkp + c * vkq
            if not converged:
                off2 = 0.0
                scale = 0.0
                for i in range(n):
                    scale += a[i, i] * a[i, i]
                    for j in range(i + 1, n):
                        off2 += a[i, j] * a[i, j]
                if off2 > tol * tol * max(scale, 1e-300):
                    nbad += 1
        return nbad

    @numba.njit(cache=True)
    def _psd_project_kernel(A, max_sweeps, tol):
        """Symmetrize, diagonalize, clamp negative eigenvalues, reconstruct, in place."""
        nbad = 0
        B, n = A.shape[0], A.shape[1]
        V = np.empty((n, n))
        d = np.empty(n)
        for b in range(B):
            a = A[b]
            for i in range(n):
                for j in range(i + 1, n):
                    m = 0.5 * (a[i, j] + a[j, i])
                    a[i, j] = m
                    a[j, i] = m
            for i in range(n):
                for j in range(n):
                    V[i, j] = 1.0 if i == j else 0.0
            converged = False
            for _ in range(max_sweeps):
                off2 = 0.0
                scale = 0.0
                for i in range(n):
                    scale += a[i, i] * a[i, i]
                    for j in range(i + 1, n):
                        off2 += a[i, j] * a[i, j]
                if off2 <= tol * tol * max(scale, 1e-300):
                    converged = True
                    break
                for p in range(n - 1):
                    for q in range(p + 1, n):
                        apq = a[p, q]
                        app = a[p, p]
                        aqq = a[q, q]
                        if apq * apq <= 1e-36 * (app * app + aqq * aqq) + 1e-300:
                            continue
                        theta = 0.5 * (aqq - app) / apq
                        if theta >= 0.0:
                            t = 1.0 / (theta + np.sqrt(1.0 + theta * theta))
                        else:
                            t = -1.0 / (-theta + np.sqrt(1.0 + theta * theta))
                        c = 1.0 / np.sqrt(1.0 + t * t)
                        s = t * c
                        for k in range(n):
                            akp = a[k, p]
                            akq = a[k, q]
                            a[k, p] = c * akp - s * akq
                            a[k, q] = s * akp + c * akq
                        for k in range(n):
                            apk = a[p, k]
                            aqk = a[q, k]
                            a[p, k] = c * apk - s * aqk
                            a[q, k] = s * apk + c * aqk
                        for k in range(n):
                            vkp = V[k, p]
                            vkq = V[k, q]
                            V[k, p] = c * vkp - s * vkq
                            V[k, q] = s * vkp + c * vkq
            if not converged:
                off2 = 0.0
                scale = 0.0
                for i in range(n):
                    scale += a[i, i] * a[i, i]
                    for j in range(i + 1, n):
                        off2 += a[i, j] * a[i, j]
                if off2 > tol * tol * max(scale, 1e-300):
                    nbad += 1
            for i in range(n):
                d[i] = a[i, i] if a[i, i] > 0.0 else 0.0
            for i in range(n):
                for j in range(i, n):
                    acc = 0.0
                    for k in range(n):
                        acc += V[i, k] * d[k] * V[j, k]
                    a[i, j] = acc
                    a[j, i] = acc
        return nbad

    _HAVE_NUMBA = True
except Exception:  # pragma: no cover
    _HAVE_NUMBA = False


def _jacobi_sweep_numpy(A, V, max_sweeps, tol):
    """Reference implementation of the batched cyclic Jacobi sweeps."""
    n = A.shape[-1]
    iu, ju = np.triu_indices(n, k=1)
    for _ in range(max_sweeps):
        off2 = np.sum(A[..., iu, ju] ** 2, axis=-1)
        scale = np.maximum(np.sum(np.diagonal(A, axis1=-2, axis2=-1) ** 2, axis=-1), 1e-300)
        if np.all(off2 <= tol * tol * scale):
            return 0
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[..., p, q]
                theta = np.where(apq == 0.0, 0.0, 0.5 * np.arctan2(2.0 * apq, A[..., q, q] - A[..., p, p]))
                c = np.cos(theta)[..., None]
                s = np.sin(theta)[..., None]
                ap, aq = A[..., :, p].copy(), A[..., :, q].copy()
                A[..., :, p] = c * ap - s * aq
                A[..., :, q] = s * ap + c * aq
                ap, aq = A[..., p, :].copy(), A[..., q, :].copy()
                A[..., p, :] = c * ap - s * aq
                A[..., q, :] = s * ap + c * aq
                vp, vq = V[..., :, p].copy(), V[..., :, q].copy()
                V[..., :, p] = c * vp - s * vq
                V[..., :, q] = s * vp + c * vq
    off2 = np.sum(A[..., iu, ju] ** 2, axis=-1)
    scale = np.maximum(np.sum(np.diagonal(A, axis1=-2, axis2=-1) ** 2, axis=-1), 1e-300)
    return int(np.sum(off2 > tol * tol * scale))


def jacobi_eigh(mats: np.ndarray, max_sweeps: int = _JACOBI_SWEEPS) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a batch of symmetric matrices by cyclic Jacobi.

    Returns (eigenvalues, eigenvectors) with eigenvectors in columns;
    eigenvalues are unsorted.  Raises EigenFailure if any matrix fails to
    converge within the sweep budget.
    """
    mats = np.asarray(mats, dtype=float)
    n = mats.shape[-1]
    if mats.shape[-2] != n:
        raise ValueError("matrices must be square")
    batch_shape = mats.shape[:-2]
    A = np.ascontiguousarray(mats.reshape(-1, n, n)).copy()
    V = np.broadcast_to(np.eye(n), A.shape).copy()
    if n > 1:
        if _HAVE_NUMBA:
            nbad = _jacobi_sweep_kernel(A, V, max_sweeps, _JACOBI_TOL)
        else:
            nbad = _jacobi_sweep_numpy(A, V, max_sweeps, _JACOBI_TOL)
        if nbad:
            raise EigenFailure(f"{nbad} matrices did not converge in {max_sweeps} Jacobi sweeps")
    vals = np.diagonal(A, axis1=-2, axis2=-1).copy()
    return vals.reshape(batch_shape + (n,)), V.reshape(batch_shape + (n, n))


def symmetrize(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def project_psd(M: np.ndarray) -> np.ndarray:
    """Frobenius-nearest positive semidefinite matrix (batched over leading axes)."""
    M = np.asarray(M, dtype=float)
    n = M.shape[-1]
    if n == 0:
        return M.copy()
    if _HAVE_NUMBA and n > 1:
        A = np.ascontiguousarray(M.reshape(-1, n, n)).copy()
        nbad = _psd_project_kernel(A, _JACOBI_SWEEPS, _JACOBI_TOL)
        if nbad:
            raise EigenFailure(f"{nbad} matrices did not converge in {_JACOBI_SWEEPS} Jacobi sweeps")
        return A.reshape(M.shape)
    M = symmetrize(M)
    if n == 1:
        return np.maximum(M, 0.0)
    vals, vecs = jacobi_eigh(M)
    clamped = np.maximum(vals, 0.0)
    out = np.matmul(vecs * clamped[..., None, :], np.swapaxes(vecs, -1, -2))
    return symmetrize(out)


def min_eigenvalues(M: np.ndarray) -> np.ndarray:
    """Smallest eigenvalue of each matrix in a batch."""
    M = symmetrize(np.asarray(M, dtype=float))
    vals, _ = jacobi_eigh(M)
    return np.min(vals, axis=-1)


# ---------------------------------------------------------------------------
# Moment matrices and the interval moment cone
# ---------------------------------------------------------------------------


def hankel(y, i: int, n: int) -> np.ndarray:
    """(n+1) x (n+1) Hankel matrix with entry (r, c) = y[i + r + c]."""
    y = np.asarray(y, dtype=float)
    if len(y) < i + 2 * n + 1:
        raise LengthMismatch(f"moment sequence of length {len(y)} too short for offset {i}, size {n + 1}")
    idx = i + np.add.outer(np.arange(n + 1), np.arange(n + 1))
    return y[idx]


@dataclass(frozen=True)
class MomentBlock:
    """Truncated moment sequence of a nonnegative measure on one piece."""

    moments: np.ndarray
    piece: Interval

    def __post_init__(self):
        object.__setattr__(self, "moments", np.asarray(self.moments, dtype=float))

    @property
    def degree(self) -> int:
        return len(self.moments) - 1


@dataclass(frozen=True)
class ConeDescription:
    """Conic set described by PSD images of a variable vector plus affine equations.

    Each psd_map is a tensor of shape (s, s, nvar); the image of a vector v
    is ``einsum('rcj,j->rc', map, v)``.  A vector belongs to the set iff all
    images are positive semidefinite and every (row, rhs) pair satisfies
    ``row @ v == rhs``.
    """

    psd_maps: tuple
    affine_eqs: tuple
    nvar: int

    def matrices(self, v: np.ndarray) -> list[np.ndarray]:
        v = np.asarray(v, dtype=float)
        return [np.einsum("rcj,j->rc", m, v) for m in self.psd_maps]

    def contains(self, v: np.ndarray, tol: float = 1e-8) -> bool:
        v = np.asarray(v, dtype=float)
        for m in self.matrices(v):
            tr = float(np.trace(m))
            if float(min_eigenvalues(m)) < -tol * max(1.0, tr):
                return False
        for row, rhs in self.affine_eqs:
            if abs(float(row @ v) - rhs) > tol * max(1.0, abs(rhs)):
                return False
        return True


def moment_hankel_tensors(deg: int, iv: Interval) -> list[np.ndarray]:
    """Linear maps sending a moment vector y[0..deg] to the interval Hankel
    matrices whose joint positive semidefiniteness characterizes membership
    in the moment cone of nonnegative measures on [a, b]."""
    if deg < 1:
        raise DegreeTooSmall("moment cone descriptions need degree >= 1")
    a, b = iv.a, iv.b
    maps = []
    if deg % 2 == 1:
        n = (deg - 1) // 2
        m1 = np.zeros((n + 1, n + 1, deg + 1))
        m2 = np.zeros((n + 1, n + 1, deg + 1))
        for r in range(n + 1):
            for c in range(n + 1):
                m1[r, c, r + c] += b
                m1[r, c, r + c + 1] -= 1.0
                m2[r, c, r + c + 1] += 1.0
                m2[r, c, r + c] -= a
        maps = [m1, m2]
    else:
        n = deg // 2
        m1 = np.zeros((n + 1, n + 1, deg + 1))
        for r in range(n + 1):
            for c in range(n + 1):
                m1[r, c, r + c] = 1.0
        m2 = np.zeros((n, n, deg + 1))
        for r in range(n):
            for c in range(n):
                m2[r, c, r + c + 1] += a + b
                m2[r, c, r + c] -= a * b
                m2[r, c, r + c + 2] -= 1.0
        maps = [m1, m2]
    return maps


def moment_cone_description(deg: int, iv: Interval) -> ConeDescription:
    """SDP description of the cone of truncated moment vectors on [a, b]."""
    maps = moment_hankel_tensors(deg, iv)
    return ConeDescription(psd_maps=tuple(maps), affine_eqs=(), nvar=deg + 1)


def moment_cone_check(block: MomentBlock, tol: float = 1e-8) -> bool:
    """Membership test: all interval Hankel matrices PSD up to a trace-scaled slack."""
    y = block.moments
    desc = moment_cone_description(len(y) - 1, block.piece)
    for m in desc.matrices(y):
        tr = float(np.trace(m))
        if float(min_eigenvalues(m)) < -tol * max(1.0, tr):
            return False
    return True


# ---------------------------------------------------------------------------
# Sum-of-squares certificates on an interval
# ---------------------------------------------------------------------------


def sos_gram_tensors(deg: int, iv: Interval) -> tuple[np.ndarray, np.ndarray]:
    """Maps from the two Gram matrices of an interval nonnegativity certificate
    to polynomial coefficients.

    A polynomial p with deg p <= deg is nonnegative on [a, b] iff there are
    PSD Gram matrices S, T with coeffs(p) = AS(S) + AT(T), where for even
    bound 2n the certificate is s + (x-a)(b-x) t (Gram sizes n+1 and n) and
    for odd bound 2n+1 it is (x-a) s + (b-x) t (both sizes n+1).

    Returns (AS, AT) of shapes (deg+1, sS, sS) and (deg+1, sT, sT).
    """
    if deg < 0:
        raise DegreeTooSmall("certificate degree must be nonnegative")
    a, b = iv.a, iv.b
    if deg % 2 == 0:
        n = deg // 2
        ss, st = n + 1, n
        AS = np.zeros((deg + 1, ss, ss))
        AT = np.zeros((deg + 1, st, st))
        for j in range(ss):
            for l in range(ss):
                AS[j + l, j, l] += 1.0
        # (x - a)(b - x) = -ab + (a + b) x - x^2
        for j in range(st):
            for l in range(st):
                AT[j + l, j, l] += -a * b
                AT[j + l + 1, j, l] += a + b
                AT[j + l + 2, j, l] += -1.0
    else:
        n = (deg - 1) // 2
        ss = st = n + 1
        AS = np.zeros((deg + 1, ss, ss))
        AT = np.zeros((deg + 1, st, st))
        for j in range(ss):
            for l in range(ss):
                AS[j + l, j, l] += -a
                AS[j + l + 1, j, l] += 1.0
                AT[j + l, j, l] += b
                AT[j + l + 1, j, l] += -1.0
    return AS, AT


def sos_certificate_description(deg: int, iv: Interval) -> ConeDescription:
    """Certificate set for nonnegativity on [a, b], in joint variables.

    The variable vector is [coeffs(p); vec(S); vec(T)].  The psd maps select
    the Gram blocks, and the affine equations tie the coefficients of p to
    the Gram entries through the interval-weight multiplication.
    """
    AS, AT = sos_gram_tensors(deg, iv)
    ss, st = AS.shape[1], AT.shape[1]
    ncoef = deg + 1
    nvar = ncoef + ss * ss + st * st
    sel_s = np.zeros((ss, ss, nvar))
    for j in range(ss):
        for l in range(ss):
            sel_s[j, l, ncoef + j * ss + l] = 1.0
    maps = [sel_s]
    if st > 0:
        sel_t = np.zeros((st, st, nvar))
        for j in range(st):
            for l in range(st):
                sel_t[j, l, ncoef + ss * ss + j * st + l] = 1.0
        maps.append(sel_t)
    eqs = []
    for i in range(ncoef):
        row = np.zeros(nvar)
        row[i] = 1.0
        row[ncoef : ncoef + ss * ss] -= AS[i].ravel()
        if st > 0:
            row[ncoef + ss * ss :] -= AT[i].ravel()
        eqs.append((row, 0.0))
    return ConeDescription(psd_maps=tuple(maps), affine_eqs=tuple(eqs), nvar=nvar)


def gram_to_coeffs(Q: np.ndarray) -> Polynomial:
    """Polynomial whose k-th coefficient is the k-th anti-diagonal sum of Q."""
    Q = np.asarray(Q, dtype=float)
    n = Q.shape[0]
    out = np.zeros(2 * n - 1) if n > 0 else np.zeros(1)
    for j in range(n):
        for l in range(n):
            out[j + l] += Q[j, l]
    return Polynomial(out)


def is_nonneg_on_interval(p: Polynomial, iv: Interval, tol: float = 1e-9) -> bool:
    """Exact nonnegativity oracle via root-based interval minimization."""
    _, vmin = minimize_on_interval(p, iv)
    return vmin >= -tol
