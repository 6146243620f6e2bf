"""Univariate polynomial and piecewise-polynomial arithmetic.

Polynomials are stored in the monomial basis with ascending coefficients:
index k holds the coefficient of x^k.  Piecewise polynomials are given by a
strictly increasing knot sequence and one polynomial per piece; global
evaluation takes the minimum over pieces containing the point, so functions
may be discontinuous but are always lower semicontinuous.

Root isolation uses derivative-bracketing subdivision with plain bisection
inside each monotone bracket, which is robust for the small degrees
(<= 16) used throughout the package.  A vectorized companion-matrix
minimizer is provided for hot paths that need the exact minimum of many
same-length polynomials at once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IdenticallyZero, InsufficientSamples, RankDeficient

_BISECT_MAX_ITERS = 200
_COND_LIMIT = 1e12


@dataclass(frozen=True)
class Interval:
    """Compact label interval [a, b] with a < b."""

    a: float
    b: float

    def __post_init__(self):
        if not self.a < self.b:
            raise ValueError(f"interval endpoints must satisfy a < b, got [{self.a}, {self.b}]")

    @property
    def width(self) -> float:
        return self.b - self.a


class Polynomial:
    """Dense univariate polynomial, ascending monomial coefficients."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs):
        c = np.atleast_1d(np.asarray(coeffs, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("coefficients must be a non-empty 1-d sequence")
        self.coeffs = c.copy()
        self.coeffs.flags.writeable = False

    def __call__(self, x):
        return horner(self.coeffs, x)

    def degree(self) -> int:
        return len(self.coeffs) - 1

    def derivative(self) -> "Polynomial":
        c = self.coeffs
        if len(c) == 1:
            return Polynomial([0.0])
        k = np.arange(1, len(c))
        return Polynomial(c[1:] * k)

    def __add__(self, other: "Polynomial") -> "Polynomial":
        n = max(len(self.coeffs), len(other.coeffs))
        out = np.zeros(n)
        out[: len(self.coeffs)] += self.coeffs
        out[: len(other.coeffs)] += other.coeffs
        return Polynomial(out)

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self + (-other)

    def __neg__(self) -> "Polynomial":
        return Polynomial(-self.coeffs)

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            return Polynomial(np.convolve(self.coeffs, other.coeffs))
        return Polynomial(self.coeffs * float(other))

    __rmul__ = __mul__

    def shift(self, delta: float) -> "Polynomial":
        """Vertical shift: p + delta."""
        out = self.coeffs.copy()
        out[0] += delta
        return Polynomial(out)

    def is_zero(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.coeffs) <= tol))

    def __repr__(self):
        return f"Polynomial({self.coeffs.tolist()})"


def horner(coeffs, x):
    """Evaluate ascending coefficients at x (scalar or array) by Horner's rule."""
    c = np.asarray(coeffs, dtype=float)
    xs = np.asarray(x, dtype=float)
    val = np.full(xs.shape, c[-1], dtype=float)
    for k in range(len(c) - 2, -1, -1):
        val = val * xs + c[k]
    if np.isscalar(x) or xs.ndim == 0:
        return float(val)
    return val


def affine_substitute(p: Polynomial, c: float, h: float) -> Polynomial:
    """Coefficients of q(t) = p(c + h*t).

    Used to re-express a piece polynomial in locally rescaled coordinates.
    """
    coeffs = p.coeffs
    out = np.array([coeffs[-1]])
    lin = np.array([c, h])
    for k in range(len(coeffs) - 2, -1, -1):
        out = np.convolve(out, lin)
        out[0] += coeffs[k]
    return Polynomial(out)


class PiecewisePolynomial:
    """Lower-semicontinuous piecewise polynomial on consecutive knot intervals."""

    __slots__ = ("knots", "pieces")

    def __init__(self, knots, pieces):
        knots = np.asarray(knots, dtype=float)
        pieces = tuple(pieces)
        if knots.ndim != 1 or len(knots) < 2:
            raise ValueError("need at least two knots")
        if np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be strictly increasing")
        if len(pieces) != len(knots) - 1:
            raise ValueError("piece count must equal knot count - 1")
        self.knots = knots.copy()
        self.knots.flags.writeable = False
        self.pieces = pieces

    @property
    def num_pieces(self) -> int:
        return len(self.pieces)

    @property
    def interval(self) -> Interval:
        return Interval(float(self.knots[0]), float(self.knots[-1]))

    def degree(self) -> int:
        return max(p.degree() for p in self.pieces)

    def piece_interval(self, k: int) -> Interval:
        return Interval(float(self.knots[k]), float(self.knots[k + 1]))

    def __call__(self, x) -> float:
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        vals = self.values(xs)
        if np.isscalar(x) or np.asarray(x).ndim == 0:
            return float(vals[0])
        return vals

    def values(self, xs: np.ndarray) -> np.ndarray:
        """Vectorized evaluation with the min-over-covering-pieces convention."""
        xs = np.asarray(xs, dtype=float)
        out = np.full(xs.shape, np.inf)
        for k, piece in enumerate(self.pieces):
            mask = (xs >= self.knots[k]) & (xs <= self.knots[k + 1])
            if np.any(mask):
                out[mask] = np.minimum(out[mask], horner(piece.coeffs, xs[mask]))
        return out

    def refine(self, new_knots) -> "PiecewisePolynomial":
        """Re-express on a refinement of the knot sequence (exact piece splitting)."""
        new_knots = np.asarray(new_knots, dtype=float)
        tol = 1e-9 * max(1.0, float(np.max(np.abs(self.knots))))
        for t in self.knots:
            if np.min(np.abs(new_knots - t)) > tol:
                raise ValueError("new knots must contain every existing knot")
        if abs(new_knots[0] - self.knots[0]) > tol or abs(new_knots[-1] - self.knots[-1]) > tol:
            raise ValueError("refinement must span the same interval")
        mids = 0.5 * (new_knots[:-1] + new_knots[1:])
        owners = np.clip(np.searchsorted(self.knots, mids) - 1, 0, self.num_pieces - 1)
        return PiecewisePolynomial(new_knots, [self.pieces[int(k)] for k in owners])

    def __repr__(self):
        return f"PiecewisePolynomial(knots={self.knots.tolist()}, pieces={len(self.pieces)})"


def _trimmed(coeffs: np.ndarray) -> np.ndarray:
    """Drop trailing coefficients that are exactly zero (keep at least one)."""
    nz = np.nonzero(coeffs)[0]
    if len(nz) == 0:
        return coeffs[:1]
    return coeffs[: nz[-1] + 1]


def _bisect(coeffs: np.ndarray, lo: float, hi: float, flo: float, tol: float) -> float:
    """Locate the sign change of a monotone bracket by bisection."""
    for _ in range(_BISECT_MAX_ITERS):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        fmid = horner(coeffs, mid)
        if fmid == 0.0:
            return mid
        if (flo < 0) == (fmid < 0):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def roots_in_interval(p: Polynomial, iv: Interval, tol: float = 1e-10) -> list[float]:
    """All real roots of p in [a, b], ascending, multiplicities collapsed.

    Brackets are derived recursively from the critical points of p, so even
    tangential (even-multiplicity) roots are found as critical points with
    vanishing value.
    """
    coeffs = _trimmed(p.coeffs)
    if len(coeffs) == 1 and coeffs[0] == 0.0:
        raise IdenticallyZero("cannot isolate roots of the zero polynomial")
    return _roots_rec(coeffs, iv.a, iv.b, tol)


def _roots_rec(coeffs: np.ndarray, a: float, b: float, tol: float) -> list[float]:
    deg = len(coeffs) - 1
    if deg == 0:
        return []
    if deg == 1:
        r = -coeffs[0] / coeffs[1]
        return [float(r)] if a - tol <= r <= b + tol else []
    dcoeffs = _trimmed(coeffs[1:] * np.arange(1, len(coeffs)))
    crit = _roots_rec(dcoeffs, a, b, tol)
    pts = [a] + [c for c in crit if a < c < b] + [b]
    scale = float(np.sum(np.abs(coeffs) * np.maximum(1.0, max(abs(a), abs(b))) ** np.arange(len(coeffs))))
    ftol = 1e-11 * max(1.0, scale)
    roots: list[float] = []
    vals = [horner(coeffs, t) for t in pts]
    for i in range(len(pts) - 1):
        lo, hi = pts[i], pts[i + 1]
        flo, fhi = vals[i], vals[i + 1]
        if abs(flo) <= ftol:
            roots.append(lo)
        if flo * fhi < 0 and abs(flo) > ftol and abs(fhi) > ftol:
            roots.append(_bisect(coeffs, lo, hi, flo, tol))
    if abs(vals[-1]) <= ftol:
        roots.append(pts[-1])
    roots.sort()
    merged: list[float] = []
    for r in roots:
        r = min(max(r, a), b)
        if not merged or r - merged[-1] > 10 * tol:
            merged.append(r)
    return merged


def minimize_on_interval(p: Polynomial, iv: Interval, tol: float = 1e-10) -> tuple[float, float]:
    """Global minimum of p on [a, b]; ties break toward smaller x."""
    candidates = [iv.a, iv.b]
    dp = p.derivative()
    if not dp.is_zero():
        candidates.extend(roots_in_interval(dp, iv, tol))
    candidates.sort()
    best_x, best_v = candidates[0], horner(p.coeffs, candidates[0])
    for x in candidates[1:]:
        v = horner(p.coeffs, x)
        if v < best_v:
            best_x, best_v = x, v
    return float(best_x), float(best_v)


def piecewise_min(f: PiecewisePolynomial, tol: float = 1e-10) -> tuple[float, float]:
    """Global minimum of a piecewise polynomial; ties break toward smaller x,
    then smaller piece index."""
    best_x, best_v = None, np.inf
    for k, piece in enumerate(f.pieces):
        x, v = minimize_on_interval(piece, f.piece_interval(k), tol)
        if v < best_v:
            best_x, best_v = x, v
    return float(best_x), float(best_v)


def fit_least_squares(samples, deg: int) -> Polynomial:
    """Least-squares fit of degree deg (exact interpolation when counts match)."""
    pts = np.asarray(samples, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("samples must be a sequence of (x, value) pairs")
    xs, ys = pts[:, 0], pts[:, 1]
    if len(xs) < deg + 1:
        raise InsufficientSamples(f"need at least {deg + 1} samples for degree {deg}")
    if len(np.unique(xs)) != len(xs):
        raise ValueError("sample x values must be distinct")
    vand = np.vander(xs, deg + 1, increasing=True)
    svals = np.linalg.svd(vand, compute_uv=False)
    if svals[-1] <= 0 or svals[0] / svals[-1] > _COND_LIMIT:
        raise RankDeficient("Vandermonde system is numerically singular")
    coeffs, *_ = np.linalg.lstsq(vand, ys, rcond=None)
    return Polynomial(coeffs)


def _constrained_fit(xs, ys, deg, constraints):
    """Least squares with interpolation constraints, via null-space elimination."""
    vand = np.vander(xs, deg + 1, increasing=True)
    if not constraints:
        coeffs, *_ = np.linalg.lstsq(vand, ys, rcond=None)
        return coeffs
    rows = np.vander(np.array([t for t, _ in constraints]), deg + 1, increasing=True)
    rhs = np.array([v for _, v in constraints])
    c0, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    _, svals, vt = np.linalg.svd(rows)
    rank = int(np.sum(svals > 1e-12 * max(1.0, svals[0] if len(svals) else 1.0)))
    null = vt[rank:].T
    if null.shape[1] == 0:
        return c0
    z, *_ = np.linalg.lstsq(vand @ null, ys - vand @ c0, rcond=None)
    return c0 + null @ z


def fit_piecewise_under_approx(costs, knots, deg: int) -> PiecewisePolynomial:
    """Continuous piecewise fit that never exceeds the sampled costs.

    Pieces are fit independently, shifted below their samples, made
    continuous by averaging the fitted values at interior knots and
    re-fitting with endpoint interpolation constraints, then shifted down
    globally by any remaining positive residual so the under-approximation
    property survives the continuity step.
    """
    pts = np.asarray(costs, dtype=float)
    knots = np.asarray(knots, dtype=float)
    xs, ys = pts[:, 0], pts[:, 1]
    K = len(knots) - 1
    piece_samples = []
    for k in range(K):
        mask = (xs >= knots[k]) & (xs <= knots[k + 1])
        if np.sum(mask) < deg + 1:
            raise InsufficientSamples(f"piece {k} holds {int(np.sum(mask))} samples, needs {deg + 1}")
        piece_samples.append((xs[mask], ys[mask]))

    fits = []
    shifts = []
    for k in range(K):
        px, py = piece_samples[k]
        poly = fit_least_squares(np.column_stack([px, py]), deg)
        shift = max(0.0, float(np.max(horner(poly.coeffs, px) - py)))
        shifts.append(shift)
        fits.append(poly.shift(-shift))

    if K > 1:
        targets = [0.5 * (fits[k](knots[k + 1]) + fits[k + 1](knots[k + 1])) for k in range(K - 1)]
        refit = []
        for k in range(K):
            cons = []
            if k > 0:
                cons.append((knots[k], targets[k - 1]))
            if k < K - 1:
                cons.append((knots[k + 1], targets[k]))
            px, py = piece_samples[k]
            refit.append(Polynomial(_constrained_fit(px, py - shifts[k], deg, cons)))
        fits = refit

    overshoot = 0.0
    for k in range(K):
        px, py = piece_samples[k]
        overshoot = max(overshoot, float(np.max(horner(fits[k].coeffs, px) - py)))
    if overshoot > 0.0:
        fits = [p.shift(-overshoot) for p in fits]
    return PiecewisePolynomial(knots, fits)


def minimize_many(coeffs: np.ndarray, a: float = -1.0, b: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Exact minima of a batch of polynomials on [a, b].

    coeffs has shape (N, m), ascending per row.  Critical points come from
    companion-matrix eigenvalues of the derivatives, batched per effective
    degree; spurious or clipped candidates are harmless because the minimum
    is taken over evaluated candidates (endpoints always included).

    Returns (argmin, min) arrays of shape (N,); ties break toward smaller x.
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    n, m = coeffs.shape
    if m == 1:
        return np.full(n, a), coeffs[:, 0].copy()

    dcoef = coeffs[:, 1:] * np.arange(1, m)[None, :]
    md = m - 1
    scale = np.max(np.abs(dcoef), axis=1)
    nz = np.abs(dcoef) > 1e-13 * np.maximum(scale, 1e-300)[:, None]
    eff_deg = np.where(nz.any(axis=1), md - 1 - np.argmax(nz[:, ::-1], axis=1), 0)

    roots = np.full((n, max(md - 1, 1)), a, dtype=float)
    for d in range(1, md):
        rows = np.nonzero(eff_deg == d)[0]
        if len(rows) == 0:
            continue
        if d == 1:
            roots[rows, 0] = np.clip(-dcoef[rows, 0] / dcoef[rows, 1], a, b)
        else:
            comp = np.zeros((len(rows), d, d))
            comp[:, 1:, :-1] = np.eye(d - 1)
            comp[:, :, -1] = -dcoef[rows, :d] / dcoef[rows, d][:, None]
            eig = np.linalg.eigvals(comp)
            real = np.where(np.abs(eig.imag) <= 1e-6 * (1.0 + np.abs(eig.real)), eig.real, a)
            roots[rows, :d] = np.clip(real, a, b)

    # a few Newton steps on p' polish roots that the companion matrix located
    # poorly (tiny leading coefficients make it ill-conditioned); spurious
    # candidates are harmless since the minimum is over evaluated points
    if md >= 2:
        ddcoef = dcoef[:, 1:] * np.arange(1, md)[None, :]
        for _ in range(3):
            num = np.full(roots.shape, dcoef[:, -1][:, None])
            for k in range(md - 2, -1, -1):
                num = num * roots + dcoef[:, k][:, None]
            den = np.full(roots.shape, ddcoef[:, -1][:, None])
            for k in range(md - 3, -1, -1):
                den = den * roots + ddcoef[:, k][:, None]
            step = np.where(np.abs(den) > 1e-300, num / np.where(den == 0.0, 1.0, den), 0.0)
            moved = np.clip(roots - step, a, b)
            roots = np.where(np.abs(step) < 0.1 * (b - a), moved, roots)

    cand = np.concatenate([np.full((n, 1), a), np.full((n, 1), b), roots], axis=1)
    cand.sort(axis=1)
    vals = np.full(cand.shape, coeffs[:, -1][:, None])
    for k in range(m - 2, -1, -1):
        vals = vals * cand + coeffs[:, k][:, None]
    idx = np.argmin(vals, axis=1)
    rows = np.arange(n)
    return cand[rows, idx], vals[rows, idx]
