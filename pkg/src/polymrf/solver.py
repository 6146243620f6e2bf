"""First-order primal-dual solver for the assembled conic programs.

Each iteration performs a projected gradient ascent step in the dual
variables, a projected descent step in the primal variables, and an
extrapolation step in the primal.  All projections are blockwise and
closed-form.  Reported dual energies are always computed from a
post-processed dual that is feasible by construction (exact root-based
range computation, no certificates involved), so they are valid lower
bounds regardless of the solver state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import model as model_mod
from .errors import Diverged, InfeasibleDual, StepSizeViolation
from .model import ConicProgram, Problem, fine_decomposition
from .poly import minimize_many

_DIVERGE_LIMIT = 1e8


@dataclass
class SolverOptions:
    """Iteration controls; tau/sigma of None select per-block preconditioned steps."""

    max_iters: int = 50000
    tau: float | None = None
    sigma: float | None = None
    theta: float = 1.0
    check_every: int = 500
    rel_tol: float = 1e-6

    def __post_init__(self):
        if not (0.0 <= self.theta <= 1.0):
            raise ValueError("theta must lie in [0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if self.check_every < 1:
            raise ValueError("check_every must be positive")


@dataclass
class Solution:
    """Converged state: primal moments, feasible dual, certified dual energy."""

    moments: np.ndarray
    dual: np.ndarray
    dual_energy: float
    history: list
    iterations: int
    problem: Problem
    _relaxed: float | None = field(default=None, repr=False)

    @property
    def fine_knots(self) -> np.ndarray:
        return fine_decomposition(self.problem).fine_knots

    def relaxed_objective(self, opts: "SolverOptions | None" = None) -> float:
        """Primal relaxation value at the converged moments.

        Evaluates the unary pairing plus one support-function value per edge;
        each support value is itself a small conic solve, so this is computed
        only on demand and cached.
        """
        if self._relaxed is None:
            from .graph import gradient

            fd = fine_decomposition(self.problem)
            val = float(np.sum(self.moments * fd.w))
            if self.problem.graph.num_edges > 0:
                deltas = gradient(self.problem.graph, self.moments)
                vals = support_lipschitz_many(deltas, self.problem, self.problem.edge_weights, opts)
                val += float(np.sum(vals))
            self._relaxed = val
        return self._relaxed


def _norm(X: dict) -> float:
    return math.sqrt(sum(float(np.sum(v * v)) for v in X.values()))


def _steps(program: ConicProgram, opts: SolverOptions) -> tuple[dict, dict]:
    if opts.tau is not None or opts.sigma is not None:
        L = program.operator_norm_estimate()
        tau = opts.tau if opts.tau is not None else (0.99 / L if L > 0 else 1.0)
        sigma = opts.sigma if opts.sigma is not None else (0.99 / L if L > 0 else 1.0)
        if tau <= 0 or sigma <= 0 or tau * sigma * L * L > 1.0 + 1e-9:
            raise StepSizeViolation(f"tau*sigma*L^2 = {tau * sigma * L * L:.6f} exceeds 1 (L={L:.4f})")
        return ({n: tau for n in program.primal_names}, {n: sigma for n in program.dual_names})
    return program.block_step_sizes()


def _pdhg_loop(program: ConicProgram, opts: SolverOptions, on_check) -> tuple[dict, dict, int]:
    """Generic primal-dual iteration; on_check may stop the loop early."""
    tau, sigma = _steps(program, opts)
    theta = opts.theta
    Y = program.initial_primal()
    P = program.zeros("dual")
    Ybar = {k: v.copy() for k, v in Y.items()}
    off_p = program.offset_primal
    off_d = program.offset_dual
    it = 0
    for it in range(1, opts.max_iters + 1):
        check = (it % opts.check_every == 0) or (it == opts.max_iters)

        BY = program.apply_B(Ybar)
        Pnew = {}
        for n in program.dual_names:
            step = BY[n]
            if n in off_d:
                step = step + off_d[n]
            Pnew[n] = P[n] + sigma[n] * step
        Pnew = program.project("dual", Pnew)

        BTP = program.apply_BT(Pnew)
        Ynew = {}
        for n in program.primal_names:
            step = BTP[n]
            if n in off_p:
                step = step + off_p[n]
            Ynew[n] = Y[n] - tau[n] * step
        Ynew = program.project("primal", Ynew)

        if check:
            dY = {n: Y[n] - Ynew[n] for n in program.primal_names}
            dP = {n: P[n] - Pnew[n] for n in program.dual_names}
            BT_dP = program.apply_BT(dP)
            B_dY = program.apply_B(dY)
            rp = _norm({n: dY[n] / tau[n] - BT_dP[n] for n in dY})
            rd = _norm({n: dP[n] / sigma[n] - B_dY[n] for n in dP})

        Ybar = {n: Ynew[n] + theta * (Ynew[n] - Y[n]) for n in program.primal_names}
        Y, P = Ynew, Pnew

        if check:
            ny, np_ = _norm(Y), _norm(P)
            if not (np.isfinite(rp) and np.isfinite(rd)) or max(ny, np_) > _DIVERGE_LIMIT:
                raise Diverged(f"iterate norms {ny:.3e}/{np_:.3e}, residuals {rp:.3e}/{rd:.3e}")
            rel_p = rp / (1.0 + ny)
            rel_d = rd / (1.0 + np_)
            if on_check(it, Y, P, rel_p, rel_d):
                break
    return Y, P, it


# ---------------------------------------------------------------------------
# Dual feasibility post-processing and exact dual energy
# ---------------------------------------------------------------------------


def _piece_ranges(coeffs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact (min, max) of each row polynomial on [-1, 1]."""
    flat = coeffs.reshape(-1, coeffs.shape[-1])
    _, lo = minimize_many(flat)
    _, neg_hi = minimize_many(-flat)
    shape = coeffs.shape[:-1]
    return lo.reshape(shape), (-neg_hi).reshape(shape)


def _alt(d: int) -> np.ndarray:
    return (-1.0) ** np.arange(d + 1)


def _chain_continuity(p: np.ndarray) -> np.ndarray:
    """Shift piece constants so the piecewise dual chains continuously."""
    E, K, dp1 = p.shape
    if K == 1:
        return p
    alt = _alt(dp1 - 1)
    left = p @ alt        # value at piece start
    right = p.sum(axis=-1)  # value at piece end
    out = p.copy()
    offsets = np.zeros((E, K))
    for c in range(1, K):
        offsets[:, c] = offsets[:, c - 1] + (right[:, c - 1] - left[:, c])
    out[:, :, 0] += offsets
    return out


def _feasibilize(p: np.ndarray, problem: Problem, weights: np.ndarray) -> np.ndarray:
    p = np.array(p, dtype=float)
    E, K, dp1 = p.shape
    d = dp1 - 1
    half = 0.5 * np.diff(problem.config.knots)
    if problem.metric.kind == "tv":
        out = _chain_continuity(p)
        dcoef = out[..., 1:] * np.arange(1, d + 1)[None, None, :]
        if d >= 1:
            lo, hi = _piece_ranges(dcoef)
            slope = np.maximum(np.abs(lo), np.abs(hi)) / half[None, :]
            lips = slope.max(axis=1)
        else:
            lips = np.zeros(E)
        scale = np.where(lips > weights, weights / np.maximum(lips, 1e-300), 1.0)
        out = out * scale[:, None, None]
        gauge = out[:, 0, :] @ _alt(d)
        out[:, :, 0] -= gauge[:, None]
        return out
    if problem.continuity:
        p = _chain_continuity(p)
    lo, hi = _piece_ranges(p)
    mn, mx = lo.min(axis=1), hi.max(axis=1)
    slack = 1e-12 * np.maximum(1.0, weights)
    bad = (mn < -slack) | (mx > weights + slack)
    if not np.any(bad):
        return p
    out = p.copy()
    spread = np.maximum(mx - mn, 1e-300)
    scale = np.where(bad, np.minimum(1.0, weights / spread), 1.0)
    shift = np.where(bad, mn, 0.0)
    out[:, :, 0] -= shift[:, None]
    out *= scale[:, None, None]
    return out


def make_dual_feasible(p: np.ndarray, problem: Problem) -> np.ndarray:
    """Rescale/shift per-edge dual coefficients onto the Lipschitz set.

    For the absolute-difference metric the pieces are chained to continuity,
    uniformly scaled by the exact slope excess, and re-gauged; for the 0/1
    metric the value range is affinely remapped into [0, weight].  Already
    feasible duals pass through unchanged.
    """
    p = np.asarray(p, dtype=float)
    squeeze = p.ndim == 2
    if squeeze:
        p = p[None]
    w = problem.edge_weights if p.shape[0] == problem.graph.num_edges else np.ones(p.shape[0])
    out = _feasibilize(p, problem, w)
    return out[0] if squeeze else out


def _check_dual_feasible(p: np.ndarray, problem: Problem, weights: np.ndarray, tol: float):
    E, K, dp1 = p.shape
    d = dp1 - 1
    half = 0.5 * np.diff(problem.config.knots)
    scale = max(1.0, float(np.max(np.abs(p))) if p.size else 1.0)
    if problem.metric.kind == "tv":
        dcoef = p[..., 1:] * np.arange(1, d + 1)[None, None, :]
        lo, hi = _piece_ranges(dcoef)
        slope = (np.maximum(np.abs(lo), np.abs(hi)) / half[None, :]).max(axis=1)
        if np.any(slope > weights * (1 + tol) + tol * scale):
            raise InfeasibleDual(f"slope bound exceeded by {float(np.max(slope - weights)):.3e}")
        if K > 1:
            alt = _alt(d)
            gaps = p.sum(axis=-1)[:, :-1] - (p @ alt)[:, 1:]
            if np.any(np.abs(gaps) > tol * scale):
                raise InfeasibleDual(f"continuity gap {float(np.max(np.abs(gaps))):.3e}")
    else:
        lo, hi = _piece_ranges(p)
        if np.any(lo.min(axis=1) < -tol * scale) or np.any(hi.max(axis=1) > weights * (1 + tol) + tol * scale):
            raise InfeasibleDual("value range leaves [0, weight]")


def dual_energy(p: np.ndarray | None, problem: Problem, feas_tol: float = 1e-6) -> float:
    """Exact dual objective: sum over vertices of the piecewise minimum of the
    unary minus the dual divergence, via root-based interval minimization."""
    fd = fine_decomposition(problem)
    g = problem.graph
    V, K_f, n1 = fd.w.shape
    r = fd.w
    if g.num_edges > 0 and p is not None and p.size:
        p = np.asarray(p, dtype=float)
        _check_dual_feasible(p, problem, problem.edge_weights, feas_tol)
        lam = np.empty((g.num_edges, K_f, n1))
        for j in range(K_f):
            lam[:, j, :] = p[:, fd.coarse_of_fine[j], :] @ fd.emb[j].T
        div = -(g.incidence.T @ lam.reshape(g.num_edges, -1)).reshape(V, K_f, n1)
        r = fd.w - div
    _, mins = minimize_many(r.reshape(V * K_f, n1))
    return float(np.sum(mins.reshape(V, K_f).min(axis=1)))


# ---------------------------------------------------------------------------
# Main solve and support functions
# ---------------------------------------------------------------------------


def pdhg_solve(program: ConicProgram, opts: SolverOptions | None = None, callback=None) -> Solution:
    """Run the primal-dual iteration on an assembled program.

    Every check interval the current dual is post-processed to feasibility
    and its exact energy evaluated; the best value seen is returned.  The
    history rows are (iteration, dual_energy, primal_residual,
    dual_residual), with residuals relative to the iterate norms.
    """
    opts = opts or SolverOptions()
    problem: Problem = program.meta["problem"]
    history: list[tuple[int, float, float, float]] = []
    best = {"energy": -np.inf, "p": None}
    has_edges = "p" in program.blocks

    def on_check(it, Y, P, rel_p, rel_d):
        if has_edges:
            feas = make_dual_feasible(P["p"], problem)
            energy = dual_energy(feas, problem)
        else:
            feas = None
            energy = dual_energy(None, problem)
        if energy > best["energy"]:
            best["energy"] = energy
            best["p"] = feas
        history.append((it, energy, rel_p, rel_d))
        if callback is not None:
            callback(it, energy, rel_p, rel_d)
        return rel_p <= opts.rel_tol and rel_d <= opts.rel_tol

    Y, P, iters = _pdhg_loop(program, opts, on_check)
    dual = best["p"]
    if dual is None and has_edges:
        dual = make_dual_feasible(P["p"], problem)
        best["energy"] = dual_energy(dual, problem)
    if dual is None:
        K_c, d = problem.config.num_pieces, problem.config.deg
        dual = np.zeros((problem.graph.num_edges, K_c, d + 1))
    return Solution(
        moments=Y["y"],
        dual=dual,
        dual_energy=float(best["energy"]),
        history=history,
        iterations=iters,
        problem=problem,
    )


def support_lipschitz_many(deltas: np.ndarray, problem: Problem, weights=None,
                           opts: SolverOptions | None = None) -> np.ndarray:
    """Support-function values of the edge Lipschitz sets at moment directions.

    Each row solves max <p, delta> over the certificate set by the same
    primal-dual iteration; the reported value is evaluated at a
    post-processed feasible point, so it never exceeds the true support
    value by more than the evaluation tolerance.
    """
    deltas = np.asarray(deltas, dtype=float)
    if deltas.ndim == 2:
        deltas = deltas[None]
    N = deltas.shape[0]
    if weights is None:
        weights = np.ones(N)
    weights = np.asarray(weights, dtype=float) * np.ones(N)
    prog = model_mod.assemble_support_program(problem, deltas, weights)
    opts = opts or SolverOptions(max_iters=20000, check_every=200, rel_tol=1e-9)

    def on_check(it, Y, P, rel_p, rel_d):
        return rel_p <= opts.rel_tol and rel_d <= opts.rel_tol

    Y, P, _ = _pdhg_loop(prog, opts, on_check)
    feas = _feasibilize(P["p"], problem, weights)
    dtil = prog.meta["objective"]
    return np.einsum("eci,eci->e", dtil, feas)


def support_lipschitz(delta: np.ndarray, problem: Problem, weight: float = 1.0,
                      opts: SolverOptions | None = None) -> float:
    """Support function of one edge Lipschitz set at a fine moment direction."""
    vals = support_lipschitz_many(np.asarray(delta, dtype=float)[None], problem, np.array([weight]), opts)
    return float(vals[0])
