"""Problem assembly: bind unaries, graph, metric and dual-subspace
configuration into a conic saddle-point program.

The assembled program is

    min_Y max_P   <W, Y> + <V, P> + <P, B(Y)>

subject to per-block cone constraints, where Y gathers per-vertex moment
blocks, auxiliary moment matrices and equality multipliers, and P gathers
per-edge dual coefficients, certificate Gram matrices and linking
multipliers.  Every projection is closed-form: PSD clamp, zeroth-moment
hyperplane, box clamp, or identity.

Coordinates are rescaled per piece: a piece [t_k, t_{k+1}] maps affinely to
[-1, 1], and all moment matrices, Gram certificates and coefficient blocks
live in the rescaled variable.  Dual variables may use a coarser knot grid
than the unaries; each coarse-piece polynomial is embedded into the fine
pieces by exact affine reparametrization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cones
from .cones import ConeDescription
from .errors import ConfigMismatch
from .graph import Graph
from .poly import Interval, affine_substitute

_KNOT_TOL = 1e-9


@dataclass(frozen=True)
class Metric:
    """Ground metric of the pairwise coupling: absolute difference or 0/1."""

    kind: str

    def __post_init__(self):
        if self.kind not in ("tv", "potts"):
            raise ValueError(f"unknown metric kind {self.kind!r}")

    @classmethod
    def tv(cls) -> "Metric":
        return cls("tv")

    @classmethod
    def potts(cls) -> "Metric":
        return cls("potts")

    def pairwise(self, x: float, y: float, weight: float = 1.0) -> float:
        if self.kind == "tv":
            return weight * abs(x - y)
        return weight * float(abs(x - y) > 1e-9)


@dataclass(frozen=True)
class DualConfig:
    """Knot grid and per-piece degree of the dual subspace.

    continuity=None resolves per metric: continuous duals for the absolute
    difference metric, discontinuous for the 0/1 metric.
    """

    knots: np.ndarray
    deg: int
    continuity: bool | None = None

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        if knots.ndim != 1 or len(knots) < 2 or np.any(np.diff(knots) <= 0):
            raise ValueError("knots must be a strictly increasing sequence of length >= 2")
        if self.deg < 1:
            raise ValueError("dual degree must be >= 1")
        object.__setattr__(self, "knots", knots)

    @classmethod
    def uniform(cls, iv: Interval, pieces: int, deg: int, continuity: bool | None = None) -> "DualConfig":
        return cls(np.linspace(iv.a, iv.b, pieces + 1), deg, continuity)

    @property
    def num_pieces(self) -> int:
        return len(self.knots) - 1

    @property
    def interval(self) -> Interval:
        return Interval(float(self.knots[0]), float(self.knots[-1]))

    def resolved_continuity(self, metric: Metric) -> bool:
        if self.continuity is None:
            return metric.kind == "tv"
        return self.continuity


@dataclass(frozen=True)
class Problem:
    """Graph-structured energy with piecewise-polynomial unaries and a metric coupling."""

    graph: Graph
    unaries: tuple
    metric: Metric
    config: DualConfig
    edge_weights: np.ndarray = None

    def __post_init__(self):
        if len(self.unaries) != self.graph.num_vertices:
            raise ConfigMismatch("need one unary per vertex")
        iv = self.config.interval
        for u, f in enumerate(self.unaries):
            fiv = f.interval
            if abs(fiv.a - iv.a) > _KNOT_TOL or abs(fiv.b - iv.b) > _KNOT_TOL:
                raise ConfigMismatch(f"unary {u} spans [{fiv.a}, {fiv.b}], config spans [{iv.a}, {iv.b}]")
        w = self.edge_weights
        if w is None:
            w = np.ones(self.graph.num_edges)
        w = np.asarray(w, dtype=float)
        if w.shape != (self.graph.num_edges,):
            raise ConfigMismatch("edge_weights must have one entry per edge")
        if np.any(w <= 0):
            raise ConfigMismatch("edge weights must be positive")
        object.__setattr__(self, "edge_weights", w)
        object.__setattr__(self, "unaries", tuple(self.unaries))

    @property
    def interval(self) -> Interval:
        return self.config.interval

    @property
    def continuity(self) -> bool:
        return self.config.resolved_continuity(self.metric)


# ---------------------------------------------------------------------------
# Lipschitz constraint descriptions
# ---------------------------------------------------------------------------


def _derivative_matrix(deg: int) -> np.ndarray:
    """Map from coefficients of a degree-deg polynomial to those of its derivative."""
    out = np.zeros((max(deg, 1), deg + 1))
    for i in range(deg):
        out[i, i + 1] = i + 1
    return out


def _alternating(deg: int) -> np.ndarray:
    return (-1.0) ** np.arange(deg + 1)


def _certificate_rows(config: DualConfig, metric_kind: str):
    """Shared data for the per-piece Lipschitz certificates, in rescaled coordinates.

    Returns (coef_map, signs, rhs_scale_is_halfwidth, AS, AT, n_eq)."""
    d = config.deg
    if metric_kind == "tv":
        bound_deg = d - 1
        coef_map = _derivative_matrix(d)[:d]
        signs = np.array([1.0, -1.0])
    else:
        bound_deg = d
        coef_map = np.eye(d + 1)
        signs = np.array([-1.0, 1.0])
    AS, AT = cones.sos_gram_tensors(bound_deg, Interval(-1.0, 1.0))
    return coef_map, signs, AS, AT, bound_deg + 1


def _lipschitz_description(config: DualConfig, metric: Metric) -> ConeDescription:
    d = config.deg
    K = config.num_pieces
    half = 0.5 * np.diff(config.knots)
    coef_map, signs, AS, AT, n_eq = _certificate_rows(config, metric.kind)
    ss, st = AS.shape[1], AT.shape[1]
    ncoef = K * (d + 1)
    per_piece = 2 * (ss * ss + st * st)
    nvar = ncoef + K * per_piece

    psd_maps = []
    eqs = []
    alt = _alternating(d)
    for k in range(K):
        gram0 = ncoef + k * per_piece
        for direction in range(2):
            s_off = gram0 + direction * (ss * ss + st * st)
            t_off = s_off + ss * ss
            sel = np.zeros((ss, ss, nvar))
            for j in range(ss):
                for l in range(ss):
                    sel[j, l, s_off + j * ss + l] = 1.0
            psd_maps.append(sel)
            if st > 0:
                selt = np.zeros((st, st, nvar))
                for j in range(st):
                    for l in range(st):
                        selt[j, l, t_off + j * st + l] = 1.0
                psd_maps.append(selt)
            if metric.kind == "tv":
                rhs_vec = half[k] * np.eye(n_eq)[:, 0]
            else:
                rhs_vec = (0.0 if direction == 0 else 1.0) * np.eye(n_eq)[:, 0]
            for i in range(n_eq):
                row = np.zeros(nvar)
                row[k * (d + 1) : (k + 1) * (d + 1)] = signs[direction] * coef_map[i]
                row[s_off : s_off + ss * ss] = AS[i].ravel()
                if st > 0:
                    row[t_off : t_off + st * st] = AT[i].ravel()
                eqs.append((row, float(rhs_vec[i])))
    if config.resolved_continuity(metric):
        ones = np.ones(d + 1)
        for k in range(K - 1):
            row = np.zeros(nvar)
            row[k * (d + 1) : (k + 1) * (d + 1)] = ones
            row[(k + 1) * (d + 1) : (k + 2) * (d + 1)] = -alt
            eqs.append((row, 0.0))
    if metric.kind == "tv":
        row = np.zeros(nvar)
        row[: d + 1] = alt
        eqs.append((row, 0.0))
    return ConeDescription(psd_maps=tuple(psd_maps), affine_eqs=tuple(eqs), nvar=nvar)


def lipschitz_description_tv(config: DualConfig) -> ConeDescription:
    """Certificate set for unit-slope-bounded continuous piecewise duals.

    Variables are [per-piece coefficients (rescaled); per-piece, per-side
    Gram blocks].  The equations tie each side's slope bound certificate to
    the coefficients, chain adjacent pieces when continuity is on, and pin
    the left endpoint value to zero.
    """
    return _lipschitz_description(config, Metric.tv())


def lipschitz_description_potts(config: DualConfig) -> ConeDescription:
    """Certificate set for duals with values in [0, 1] on every piece."""
    return _lipschitz_description(config, Metric.potts())


def dual_feasible(p: np.ndarray, problem: Problem, tol: float = 1e-7) -> bool:
    """Exact membership oracle for the Lipschitz set, up to the constant gauge.

    p has shape (K, deg+1) (one edge, rescaled per-piece coefficients) or
    (E, K, deg+1).  Uses root-based range computation, not the Gram
    certificates, so it can cross-check the certificate route.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim == 2:
        p = p[None]
    from .poly import minimize_many  # local import to keep module load light

    K = problem.config.num_pieces
    d = problem.config.deg
    half = 0.5 * np.diff(problem.config.knots)
    weights = problem.edge_weights if p.shape[0] == problem.graph.num_edges else np.ones(p.shape[0])
    scale = max(1.0, float(np.max(np.abs(p))))
    if problem.metric.kind == "tv":
        dcoef = p[..., 1:] * np.arange(1, d + 1)
        flat = dcoef.reshape(-1, d)
        _, lo = minimize_many(flat)
        _, neghi = minimize_many(-flat)
        rng = np.maximum(np.abs(lo), np.abs(-neghi)).reshape(p.shape[0], K)
        slope = rng / half[None, :]
        if np.any(slope > weights[:, None] * (1 + tol) + tol * scale):
            return False
        if problem.continuity and K > 1:
            left = p @ _alternating(d)
            right = p.sum(axis=-1)
            if np.any(np.abs(right[:, :-1] - left[:, 1:]) > tol * scale):
                return False
        return True
    flat = p.reshape(-1, d + 1)
    _, lo = minimize_many(flat)
    _, neghi = minimize_many(-flat)
    lo = lo.reshape(p.shape[0], K).min(axis=1)
    hi = (-neghi).reshape(p.shape[0], K).max(axis=1)
    return bool(np.all(lo >= -tol * scale) and np.all(hi <= weights * (1 + tol) + tol * scale))


# ---------------------------------------------------------------------------
# Fine decomposition: common knot refinement and coarse-to-fine embedding
# ---------------------------------------------------------------------------


@dataclass
class FineData:
    """Unaries and dual embedding expressed on the common knot refinement."""

    fine_knots: np.ndarray
    n_mom: int
    w: np.ndarray            # (V, K_f, n_mom+1) rescaled unary coefficients
    coarse_of_fine: np.ndarray  # (K_f,) index of covering coarse piece
    emb: list                # per fine piece: (n_mom+1, deg+1) coefficient map
    fine_half: np.ndarray
    fine_center: np.ndarray
    coarse_half: np.ndarray
    coarse_center: np.ndarray

    @property
    def num_fine(self) -> int:
        return len(self.fine_knots) - 1


def _union_knots(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    merged = np.sort(np.concatenate([a, b]))
    keep = [merged[0]]
    tol = _KNOT_TOL * max(1.0, float(np.max(np.abs(merged))))
    for t in merged[1:]:
        if t - keep[-1] > tol:
            keep.append(t)
    return np.asarray(keep)


def _embedding_matrix(alpha: float, beta: float, deg_from: int, deg_to: int) -> np.ndarray:
    """Coefficient map of the substitution eta = alpha + beta * xi.

    Column k holds the xi-coefficients of (alpha + beta*xi)^k, padded to
    deg_to + 1 rows.
    """
    out = np.zeros((deg_to + 1, deg_from + 1))
    col = np.array([1.0])
    out[0, 0] = 1.0
    for k in range(1, deg_from + 1):
        col = np.convolve(col, [alpha, beta])
        out[: len(col), k] = col
    return out


def fine_decomposition(problem: Problem) -> FineData:
    """Express the problem on the union of unary and dual knots."""
    fine = problem.config.knots
    for f in problem.unaries:
        fine = _union_knots(fine, f.knots)
    K_f = len(fine) - 1
    n_mom = max(problem.config.deg, max(f.degree() for f in problem.unaries))

    fine_center = 0.5 * (fine[:-1] + fine[1:])
    fine_half = 0.5 * np.diff(fine)
    cfg = problem.config
    coarse_center = 0.5 * (cfg.knots[:-1] + cfg.knots[1:])
    coarse_half = 0.5 * np.diff(cfg.knots)
    mids = fine_center
    coarse_of_fine = np.clip(np.searchsorted(cfg.knots, mids) - 1, 0, cfg.num_pieces - 1)

    emb = []
    for j in range(K_f):
        c = int(coarse_of_fine[j])
        alpha = (fine_center[j] - coarse_center[c]) / coarse_half[c]
        beta = fine_half[j] / coarse_half[c]
        emb.append(_embedding_matrix(alpha, beta, cfg.deg, n_mom))

    V = problem.graph.num_vertices
    w = np.zeros((V, K_f, n_mom + 1))
    for u, f in enumerate(problem.unaries):
        ref = f.refine(fine)
        for j in range(K_f):
            loc = affine_substitute(ref.pieces[j], fine_center[j], fine_half[j])
            w[u, j, : len(loc.coeffs)] = loc.coeffs
    return FineData(fine, n_mom, w, coarse_of_fine, emb, fine_half, fine_center, coarse_half, coarse_center)


# ---------------------------------------------------------------------------
# Block containers and the assembled conic program
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BlockSpec:
    shape: tuple
    side: str          # "primal" | "dual"
    cone: str          # "free" | "psd" | "mass" | "box"
    box: tuple = None  # (lo, hi) when cone == "box"


@dataclass
class _Term:
    primal: str
    dual: str
    apply: callable      # primal block -> dual-shaped contribution
    adjoint: callable    # dual block -> primal-shaped contribution
    abs_apply: callable  # same maps with absolute entries (for step sizing)
    abs_adjoint: callable


class ConicProgram:
    """Saddle-point data: blocks, cones, bilinear terms, linear offsets."""

    def __init__(self, blocks: dict, terms: list, offset_primal: dict, offset_dual: dict, meta: dict):
        self.blocks = blocks
        self.terms = terms
        self.offset_primal = offset_primal
        self.offset_dual = offset_dual
        self.meta = meta
        self.primal_names = [n for n, b in blocks.items() if b.side == "primal"]
        self.dual_names = [n for n, b in blocks.items() if b.side == "dual"]

    # -- containers ---------------------------------------------------------

    def zeros(self, side: str) -> dict:
        return {n: np.zeros(self.blocks[n].shape) for n in self.blocks if self.blocks[n].side == side}

    def initial_primal(self) -> dict:
        Y = self.zeros("primal")
        init = self.meta.get("initial_primal")
        if init is not None:
            for k, v in init.items():
                Y[k] = v.copy()
        return Y

    # -- bilinear operator ---------------------------------------------------

    def apply_B(self, Y: dict) -> dict:
        out = self.zeros("dual")
        for t in self.terms:
            out[t.dual] += t.apply(Y[t.primal])
        return out

    def apply_BT(self, P: dict) -> dict:
        out = self.zeros("primal")
        for t in self.terms:
            out[t.primal] += t.adjoint(P[t.dual])
        return out

    def bilinear(self, Y: dict, P: dict) -> float:
        BY = self.apply_B(Y)
        return sum(float(np.sum(P[n] * BY[n])) for n in self.dual_names)

    def operator_norm_estimate(self, iters: int = 100, safety: float = 1.01) -> float:
        """Power iteration on B^T B over the primal container."""
        rng = np.random.default_rng(0)
        x = {n: rng.standard_normal(self.blocks[n].shape) for n in self.primal_names}
        nx = _container_norm(x)
        if nx == 0.0:
            return 0.0
        x = {k: v / nx for k, v in x.items()}
        est = 0.0
        for _ in range(iters):
            u = self.apply_B(x)
            z = self.apply_BT(u)
            nz = _container_norm(z)
            if nz == 0.0:
                return 0.0
            x = {k: v / nz for k, v in z.items()}
            est = np.sqrt(nz)
        return float(est * safety)

    def block_step_sizes(self, relax: float = 0.99) -> tuple[dict, dict]:
        """Per-block diagonal step sizes from absolute row/column sums.

        With tau_j <= 1/sum_i |B_ij| and sigma_i <= 1/sum_j |B_ij| the
        primal-dual iteration is convergent; taking the blockwise minimum
        keeps every within-block projection an unscaled one.
        """
        ones_p = {n: np.ones(self.blocks[n].shape) for n in self.primal_names}
        ones_d = {n: np.ones(self.blocks[n].shape) for n in self.dual_names}
        col = self.zeros("dual")
        row = self.zeros("primal")
        for t in self.terms:
            col[t.dual] += t.abs_apply(ones_p[t.primal])
            row[t.primal] += t.abs_adjoint(ones_d[t.dual])
        fallback = max(self.operator_norm_estimate(iters=30), 1e-12)
        tau = {}
        for n in self.primal_names:
            m = float(np.max(row[n]))
            tau[n] = relax / m if m > 0 else 1.0 / fallback
        sigma = {}
        for n in self.dual_names:
            m = float(np.max(col[n]))
            sigma[n] = relax / m if m > 0 else 1.0 / fallback
        return tau, sigma

    # -- projections ---------------------------------------------------------

    def project(self, side: str, X: dict) -> dict:
        out = {}
        for n, v in X.items():
            blk = self.blocks[n]
            if blk.cone == "free":
                out[n] = v
            elif blk.cone == "psd":
                s = blk.shape[-1]
                out[n] = cones.project_psd(v.reshape((-1, s, s))).reshape(blk.shape)
            elif blk.cone == "mass":
                out[n] = _project_mass(v)
            elif blk.cone == "box":
                lo, hi = blk.box
                out[n] = np.clip(v, lo, hi)
            else:  # pragma: no cover
                raise ValueError(f"unknown cone {blk.cone}")
        return out


def _project_mass(y: np.ndarray) -> np.ndarray:
    """Project onto the hyperplane sum_k y[v, k, 0] = 1 for every vertex v."""
    out = y.copy()
    K = y.shape[1]
    deficit = (1.0 - np.sum(y[:, :, 0], axis=1)) / K
    out[:, :, 0] += deficit[:, None]
    return out


def _container_norm(X: dict) -> float:
    return float(np.sqrt(sum(np.sum(v * v) for v in X.values())))


def _matmul_term(primal, dual, M, in_tail, out_tail):
    """Bilinear term applying a dense matrix M along the trailing axes.

    M has shape (prod(in_tail), prod(out_tail)); apply contracts the last
    len(in_tail) axes of the primal block, adjoint the last len(out_tail)
    axes of the dual block.
    """
    M = np.ascontiguousarray(M)
    MT = np.ascontiguousarray(M.T)
    Ma, MTa = np.abs(M), np.abs(MT)
    ni, no = M.shape

    def apply(x, m=M):
        batch = x.shape[: x.ndim - len(in_tail)]
        return (x.reshape(-1, ni) @ m).reshape(batch + out_tail)

    def adjoint(z, m=MT):
        batch = z.shape[: z.ndim - len(out_tail)]
        return (z.reshape(-1, no) @ m).reshape(batch + in_tail)

    return _Term(primal, dual,
                 apply, adjoint,
                 lambda x: apply(x, Ma),
                 lambda z: adjoint(z, MTa))


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


def assemble(problem: Problem) -> ConicProgram:
    """Assemble the saddle-point program of the relaxed labeling problem."""
    fd = fine_decomposition(problem)
    g = problem.graph
    V, E = g.num_vertices, g.num_edges
    K_f, K_c = fd.num_fine, problem.config.num_pieces
    d = problem.config.deg
    n_mom = fd.n_mom

    mom_maps = cones.moment_hankel_tensors(n_mom, Interval(-1.0, 1.0))
    blocks = {}
    terms = []
    offset_primal = {}
    offset_dual = {}

    blocks["y"] = BlockSpec((V, K_f, n_mom + 1), "primal", "mass")
    offset_primal["y"] = fd.w.copy()

    y0 = np.zeros((V, K_f, n_mom + 1))
    y0[:, :, 0] = 1.0 / K_f
    initial = {"y": y0}

    for i, H in enumerate(mom_maps):
        s = H.shape[0]
        zn, qn = f"Z{i}", f"Q{i}"
        blocks[zn] = BlockSpec((V, K_f, s, s), "primal", "psd")
        blocks[qn] = BlockSpec((V, K_f, s, s), "dual", "free")
        # <Q, Z - H(y)>
        Hmat = -H.reshape(s * s, n_mom + 1).T  # (n_mom+1, s*s)
        terms.append(_matmul_term("y", qn, Hmat, (n_mom + 1,), (s, s)))
        terms.append(_Term(zn, qn, lambda z: z, lambda q: q, lambda z: z, lambda q: q))
        initial[zn] = np.einsum("rcj,vkj->vkrc", H, y0)

    if E > 0:
        coef_map, signs, AS, AT, n_eq = _certificate_rows(problem.config, problem.metric.kind)
        ss, st = AS.shape[1], AT.shape[1]
        blocks["p"] = BlockSpec((E, K_c, d + 1), "dual", "free")
        blocks["S"] = BlockSpec((E, K_c, 2, ss, ss), "dual", "psd")
        if st > 0:
            blocks["T"] = BlockSpec((E, K_c, 2, st, st), "dual", "psd")
        blocks["m_sos"] = BlockSpec((E, K_c, 2, n_eq), "primal", "free")

        # graph coupling <p, emb^T(grad y)>
        inc = g.incidence
        incT = inc.T.tocsr()
        inc_abs = abs(inc)
        incT_abs = abs(incT)
        emb = [m.copy() for m in fd.emb]
        emb_abs = [np.abs(m) for m in emb]
        cof = fd.coarse_of_fine

        def grad_apply(y, inc=inc, emb=emb):
            gr = (inc @ y.reshape(V, -1)).reshape(E, K_f, n_mom + 1)
            out = np.zeros((E, K_c, d + 1))
            for j in range(K_f):
                out[:, cof[j], :] += gr[:, j, :] @ emb[j]
            return out

        def grad_adjoint(p, incT=incT, emb=emb):
            lam = np.empty((E, K_f, n_mom + 1))
            for j in range(K_f):
                lam[:, j, :] = p[:, cof[j], :] @ emb[j].T
            return (incT @ lam.reshape(E, -1)).reshape(V, K_f, n_mom + 1)

        def grad_apply_abs(y, inc=inc_abs, emb=emb_abs):
            gr = (inc @ y.reshape(V, -1)).reshape(E, K_f, n_mom + 1)
            out = np.zeros((E, K_c, d + 1))
            for j in range(K_f):
                out[:, cof[j], :] += gr[:, j, :] @ emb[j]
            return out

        def grad_adjoint_abs(p, incT=incT_abs, emb=emb_abs):
            lam = np.empty((E, K_f, n_mom + 1))
            for j in range(K_f):
                lam[:, j, :] = p[:, cof[j], :] @ emb[j].T
            return (incT @ lam.reshape(E, -1)).reshape(V, K_f, n_mom + 1)

        terms.append(_Term("y", "p", grad_apply, grad_adjoint, grad_apply_abs, grad_adjoint_abs))

        # certificate equations: AS(S) + AT(T) + sign * coef_map(p) = rhs
        sign_mat = np.concatenate([signs[0] * coef_map, signs[1] * coef_map], axis=0)  # (2*n_eq, d+1)
        terms.append(_matmul_term("m_sos", "p", sign_mat, (2, n_eq), (d + 1,)))
        terms.append(_matmul_term("m_sos", "S", AS.reshape(n_eq, ss * ss), (n_eq,), (ss, ss)))
        if st > 0:
            terms.append(_matmul_term("m_sos", "T", AT.reshape(n_eq, st * st), (n_eq,), (st, st)))

        rhs = np.zeros((E, K_c, 2, n_eq))
        wgt = problem.edge_weights
        if problem.metric.kind == "tv":
            rhs[:, :, 0, 0] = wgt[:, None] * fd.coarse_half[None, :]
            rhs[:, :, 1, 0] = wgt[:, None] * fd.coarse_half[None, :]
        else:
            rhs[:, :, 1, 0] = wgt[:, None]
        offset_primal["m_sos"] = -rhs

        alt = _alternating(d)
        ones = np.ones(d + 1)
        if problem.continuity and K_c > 1:
            blocks["m_cont"] = BlockSpec((E, K_c - 1), "primal", "free")

            def cont_apply(m):
                out = np.zeros((E, K_c, d + 1))
                out[:, :-1, :] += m[:, :, None] * ones[None, None, :]
                out[:, 1:, :] -= m[:, :, None] * alt[None, None, :]
                return out

            def cont_adjoint(p):
                return p[:, :-1, :] @ ones - p[:, 1:, :] @ alt

            def cont_apply_abs(m):
                out = np.zeros((E, K_c, d + 1))
                out[:, :-1, :] += m[:, :, None] * ones[None, None, :]
                out[:, 1:, :] += m[:, :, None] * np.abs(alt)[None, None, :]
                return out

            def cont_adjoint_abs(p):
                return p[:, :-1, :] @ ones + p[:, 1:, :] @ np.abs(alt)

            terms.append(_Term("m_cont", "p", cont_apply, cont_adjoint, cont_apply_abs, cont_adjoint_abs))

        if problem.metric.kind == "tv":
            blocks["m_gauge"] = BlockSpec((E,), "primal", "free")

            def gauge_apply(m):
                out = np.zeros((E, K_c, d + 1))
                out[:, 0, :] = m[:, None] * alt[None, :]
                return out

            def gauge_adjoint(p):
                return p[:, 0, :] @ alt

            def gauge_apply_abs(m):
                out = np.zeros((E, K_c, d + 1))
                out[:, 0, :] = m[:, None] * np.abs(alt)[None, :]
                return out

            def gauge_adjoint_abs(p):
                return p[:, 0, :] @ np.abs(alt)

            terms.append(_Term("m_gauge", "p", gauge_apply, gauge_adjoint, gauge_apply_abs, gauge_adjoint_abs))

    meta = {
        "problem": problem,
        "fine": fd,
        "initial_primal": initial,
        "kind": "mrf",
    }
    return ConicProgram(blocks, terms, offset_primal, offset_dual, meta)


def assemble_support_program(problem: Problem, deltas: np.ndarray, weights=None) -> ConicProgram:
    """Program for support-function values of the edge Lipschitz set.

    Each row of deltas is a fine moment-space direction; the program
    maximizes <p, emb^T delta> over the certificate set, one independent
    row per direction.
    """
    fd = fine_decomposition(problem)
    deltas = np.asarray(deltas, dtype=float)
    if deltas.ndim == 2:
        deltas = deltas[None]
    N = deltas.shape[0]
    K_c, d = problem.config.num_pieces, problem.config.deg
    if weights is None:
        weights = np.ones(N)
    weights = np.asarray(weights, dtype=float)

    coef_map, signs, AS, AT, n_eq = _certificate_rows(problem.config, problem.metric.kind)
    ss, st = AS.shape[1], AT.shape[1]

    dtil = np.zeros((N, K_c, d + 1))
    for j in range(fd.num_fine):
        dtil[:, fd.coarse_of_fine[j], :] += deltas[:, j, :] @ fd.emb[j]

    blocks = {
        "m_sos": BlockSpec((N, K_c, 2, n_eq), "primal", "free"),
        "p": BlockSpec((N, K_c, d + 1), "dual", "free"),
        "S": BlockSpec((N, K_c, 2, ss, ss), "dual", "psd"),
    }
    if st > 0:
        blocks["T"] = BlockSpec((N, K_c, 2, st, st), "dual", "psd")

    terms = []
    sign_mat = np.concatenate([signs[0] * coef_map, signs[1] * coef_map], axis=0)
    terms.append(_matmul_term("m_sos", "p", sign_mat, (2, n_eq), (d + 1,)))
    terms.append(_matmul_term("m_sos", "S", AS.reshape(n_eq, ss * ss), (n_eq,), (ss, ss)))
    if st > 0:
        terms.append(_matmul_term("m_sos", "T", AT.reshape(n_eq, st * st), (n_eq,), (st, st)))

    alt = _alternating(d)
    ones = np.ones(d + 1)
    if problem.continuity and K_c > 1:
        blocks["m_cont"] = BlockSpec((N, K_c - 1), "primal", "free")

        def cont_apply(m):
            out = np.zeros((N, K_c, d + 1))
            out[:, :-1, :] += m[:, :, None] * ones[None, None, :]
            out[:, 1:, :] -= m[:, :, None] * alt[None, None, :]
            return out

        def cont_adjoint(p):
            return p[:, :-1, :] @ ones - p[:, 1:, :] @ alt

        def cont_apply_abs(m):
            out = np.zeros((N, K_c, d + 1))
            out[:, :-1, :] += m[:, :, None] * ones[None, None, :]
            out[:, 1:, :] += m[:, :, None] * np.abs(alt)[None, None, :]
            return out

        def cont_adjoint_abs(p):
            return p[:, :-1, :] @ ones + p[:, 1:, :] @ np.abs(alt)

        terms.append(_Term("m_cont", "p", cont_apply, cont_adjoint, cont_apply_abs, cont_adjoint_abs))
    if problem.metric.kind == "tv":
        blocks["m_gauge"] = BlockSpec((N,), "primal", "free")

        def gauge_apply(m):
            out = np.zeros((N, K_c, d + 1))
            out[:, 0, :] = m[:, None] * alt[None, :]
            return out

        def gauge_adjoint(p):
            return p[:, 0, :] @ alt

        terms.append(_Term("m_gauge", "p", gauge_apply, gauge_adjoint,
                           lambda m: np.abs(gauge_apply(m)), lambda p: p[:, 0, :] @ np.abs(alt)))

    rhs = np.zeros((N, K_c, 2, n_eq))
    if problem.metric.kind == "tv":
        rhs[:, :, 0, 0] = weights[:, None] * fd.coarse_half[None, :]
        rhs[:, :, 1, 0] = weights[:, None] * fd.coarse_half[None, :]
    else:
        rhs[:, :, 1, 0] = weights[:, None]

    meta = {"problem": problem, "fine": fd, "kind": "support", "objective": dtil, "weights": weights}
    return ConicProgram(blocks, terms, {"m_sos": -rhs}, {"p": dtil}, meta)
