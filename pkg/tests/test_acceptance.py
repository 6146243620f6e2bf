"""Acceptance suite: every criterion prints one pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The criteria are ordered;
the final weak-duality criterion audits every solver history logged by the
earlier ones, so the module is meant to run as a whole.
"""

import time

import numpy as np
import pytest

from polymrf import cones
from polymrf.graph import Graph, chain_graph, grid_graph
from polymrf.model import DualConfig, Metric, Problem, assemble, fine_decomposition
from polymrf.oracle import GridSpec, dp_chain, relaxation_value_chain
from polymrf.poly import (
    Interval,
    PiecewisePolynomial,
    Polynomial,
    fit_least_squares,
    fit_piecewise_under_approx,
)
from polymrf.rounding import round_mode_mean, rounded_energy
from polymrf.solver import SolverOptions, pdhg_solve, support_lipschitz_many

IV = Interval(-1.0, 1.0)

# (label, history, rounded upper bound) triples audited by the final criterion
_LOGGED = []


def _report(num, passed, detail=""):
    tag = "PASS" if passed else "FAIL"
    print(f"[{tag}] criterion {num}: {detail}", flush=True)
    assert passed, f"criterion {num}: {detail}"


def _register(label, sol, problem):
    fd = fine_decomposition(problem)
    labels = round_mode_mean(sol.moments, fd.fine_knots)
    upper = rounded_energy(labels, problem)
    _LOGGED.append((label, list(sol.history), float(upper)))
    return labels, upper


def _random_quartic(rng, knots=(-1.0, 1.0)):
    xs = np.linspace(knots[0], knots[-1], 9)
    p = fit_least_squares(np.column_stack([xs, rng.normal(0, 1, 9)]), 4)
    return PiecewisePolynomial([knots[0], knots[-1]], [p])


@pytest.fixture(scope="module", autouse=True)
def warm_kernels():
    # trigger jit compilation outside the timed sections
    cones.project_psd(np.eye(3))
    from polymrf.poly import minimize_many

    minimize_many(np.array([[0.0, 0.0, 1.0]]))
    yield


def test_criterion_01_single_vertex_exactness():
    f = PiecewisePolynomial([-1, 1], [Polynomial([0, 0, -1, 0, 1])])
    prob = Problem(Graph(1, []), (f,), Metric.tv(), DualConfig(np.array([-1.0, 1.0]), 4))
    t0 = time.perf_counter()
    sol = pdhg_solve(assemble(prob), SolverOptions(max_iters=20000, check_every=200))
    elapsed = time.perf_counter() - t0
    _register("c1", sol, prob)
    ok = abs(sol.dual_energy - (-0.25)) <= 1e-4 and elapsed < 5.0
    _report(1, ok, f"single-vertex dual {sol.dual_energy:.6f} (target -0.25 +/- 1e-4), {elapsed:.1f}s < 5s")


def test_criterion_02_convex_chain_exactness():
    f1 = PiecewisePolynomial([-1, 1], [Polynomial([0.25, -1, 1])])
    f2 = PiecewisePolynomial([-1, 1], [Polynomial([0.25, 1, 1])])
    prob = Problem(chain_graph(2), (f1, f2), Metric.tv(), DualConfig(np.array([-1.0, 1.0]), 2))
    t0 = time.perf_counter()
    sol = pdhg_solve(assemble(prob), SolverOptions(max_iters=30000, check_every=500, rel_tol=1e-9))
    elapsed = time.perf_counter() - t0
    labels, _ = _register("c2", sol, prob)
    _, dp_value = dp_chain(prob, GridSpec(2001))
    ok = (
        abs(sol.dual_energy - 0.5) <= 1e-3
        and np.all(np.abs(labels) <= 1e-2)
        and abs(dp_value - 0.5) <= 5e-4
        and elapsed < 30.0
    )
    _report(2, ok, f"two-vertex dual {sol.dual_energy:.6f} (0.5 +/- 1e-3), labels {labels.round(4)}, "
                   f"dp {dp_value:.6f}, {elapsed:.1f}s < 30s")


def test_criterion_03_piecewise_linear_discrete_equivalence():
    rng = np.random.default_rng(3)
    knots = np.linspace(-1, 1, 11)

    def pl_unary(vals):
        pieces = []
        for k in range(10):
            x0, x1 = knots[k], knots[k + 1]
            slope = (vals[k + 1] - vals[k]) / (x1 - x0)
            pieces.append(Polynomial([vals[k] - slope * x0, slope]))
        return PiecewisePolynomial(knots, pieces)

    unaries = tuple(pl_unary(rng.normal(0, 1, 11)) for _ in range(8))
    prob = Problem(chain_graph(8), unaries, Metric.tv(), DualConfig(knots, 1))
    lp_value = relaxation_value_chain(prob, GridSpec(11))
    t0 = time.perf_counter()
    sol = pdhg_solve(assemble(prob), SolverOptions(max_iters=40000, check_every=500, rel_tol=1e-10))
    elapsed = time.perf_counter() - t0
    _register("c3", sol, prob)
    ok = abs(sol.dual_energy - lp_value) <= 1e-3 and elapsed < 60.0
    _report(3, ok, f"deg-1 dual {sol.dual_energy:.6f} vs grid relaxation {lp_value:.6f} "
                   f"(diff {abs(sol.dual_energy - lp_value):.2e} <= 1e-3), {elapsed:.1f}s < 60s")


def test_criterion_04_hierarchy_monotonicity():
    rng = np.random.default_rng(42)
    g = grid_graph(8, 8)
    unaries = tuple(_random_quartic(rng) for _ in range(g.num_vertices))
    opts = SolverOptions(max_iters=15000, check_every=1000, rel_tol=1e-9)

    def solve(metric, K, deg, weight):
        prob = Problem(g, unaries, metric, DualConfig.uniform(IV, K, deg),
                       weight * np.ones(g.num_edges))
        sol = pdhg_solve(assemble(prob), opts)
        _register(f"c4-{metric.kind}-K{K}-d{deg}", sol, prob)
        return sol.dual_energy

    slack = 1e-6
    tv = {}
    for K in (1, 3, 5):
        for deg in (1, 2, 3, 4, 5):
            tv[(K, deg)] = solve(Metric.tv(), K, deg, 1.0)
    tv_ok = all(tv[(K, d)] <= tv[(K, d + 1)] + slack for K in (1, 3, 5) for d in range(1, 5))

    dyadic = {1: tv[(1, 2)]}
    for K in (2, 4):
        dyadic[K] = solve(Metric.tv(), K, 2, 1.0)
    dy_ok = dyadic[1] <= dyadic[2] + slack <= dyadic[4] + 2 * slack

    potts = {}
    for K in (1, 2, 4):
        for deg in (1, 2, 3, 4):
            potts[(K, deg)] = solve(Metric.potts(), K, deg, 0.25)
    potts_ok = all(potts[(K, d)] <= potts[(K, d + 1)] + slack for K in (1, 2, 4) for d in range(1, 4))

    ok = tv_ok and dy_ok and potts_ok
    _report(4, ok, f"tv-in-deg {tv_ok}, dyadic-in-K {dy_ok}, potts-in-deg {potts_ok} (slack 1e-6)")


def test_criterion_05_gap_rate_slope():
    rng = np.random.default_rng(11)
    V = 16
    originals = tuple(_random_quartic(rng) for _ in range(V))
    g = chain_graph(V)
    base = Problem(g, originals, Metric.tv(), DualConfig(np.array([-1.0, 1.0]), 4))
    t0 = time.perf_counter()
    _, oracle_value = dp_chain(base, GridSpec(4001))
    xs = np.linspace(-1, 1, 161)
    gaps = []
    for K in (1, 2, 4, 8):
        knots = np.linspace(-1, 1, K + 1)
        fits = tuple(
            fit_piecewise_under_approx(np.column_stack([xs, f.values(xs)]), knots, 1)
            for f in originals
        )
        prob = Problem(g, fits, Metric.tv(), DualConfig(knots, 1))
        sol = pdhg_solve(assemble(prob), SolverOptions(max_iters=30000, check_every=500, rel_tol=1e-10))
        _register(f"c5-K{K}", sol, prob)
        gaps.append(oracle_value - sol.dual_energy)
    elapsed = time.perf_counter() - t0
    slope = float(np.polyfit(np.log([1, 2, 4, 8]), np.log(gaps), 1)[0])
    ok = slope <= -0.7 and all(gp > 0 for gp in gaps) and elapsed < 300.0
    _report(5, ok, f"gaps {[round(gp, 4) for gp in gaps]}, log-log slope {slope:.3f} <= -0.7, "
                   f"{elapsed:.0f}s < 300s")


def test_criterion_06_sos_root_oracle_equivalence():
    rng = np.random.default_rng(2024)
    polys = [Polynomial(rng.uniform(-1, 1, int(rng.integers(1, 8)) + 1)) for _ in range(1000)]
    by_deg = {}
    for i, p in enumerate(polys):
        by_deg.setdefault(p.degree(), []).append(i)
    values = np.empty(1000)
    for d, idxs in sorted(by_deg.items()):
        unaries = tuple(PiecewisePolynomial([-1, 1], [polys[i]]) for i in idxs)
        prob = Problem(Graph(len(idxs), []), unaries, Metric.tv(),
                       DualConfig(np.array([-1.0, 1.0]), max(d, 1)))
        sol = pdhg_solve(assemble(prob), SolverOptions(max_iters=40000, check_every=1000, rel_tol=1e-12))
        _register(f"c6-deg{d}", sol, prob)
        w = fine_decomposition(prob).w
        vals = np.sum(sol.moments * w, axis=(1, 2))
        for j, i in enumerate(idxs):
            values[i] = vals[j]
    agree = sum(
        (values[i] >= -1e-6) == cones.is_nonneg_on_interval(polys[i], IV, 1e-6)
        for i in range(1000)
    )
    _report(6, agree == 1000, f"conic vs root-oracle nonnegativity agreement {agree}/1000")


def test_criterion_07_moment_cone_soundness():
    rng = np.random.default_rng(7)
    ok_dirac = all(
        cones.moment_cone_check(cones.MomentBlock(x ** np.arange(deg + 1), IV))
        for x in np.linspace(-1, 1, 100)
        for deg in (2, 4, 7)
    )
    ok_mix = True
    for _ in range(1000):
        deg = int(rng.integers(1, 8))
        atoms = int(rng.integers(1, 6))
        ws = rng.dirichlet(np.ones(atoms))
        xs = rng.uniform(-1, 1, atoms)
        y = sum(w * x ** np.arange(deg + 1) for w, x in zip(ws, xs))
        ok_mix &= cones.moment_cone_check(cones.MomentBlock(y, IV))
    ok_out = True
    for _ in range(100):
        deg = int(rng.integers(2, 8))
        x_out = rng.choice([-1, 1]) * rng.uniform(1.5, 3.0)
        m = rng.uniform(0.6, 0.95)
        y = m * x_out ** np.arange(deg + 1) + (1 - m) * rng.uniform(-1, 1) ** np.arange(deg + 1)
        ok_out &= not cones.moment_cone_check(cones.MomentBlock(y, IV), tol=1e-10)
    ok = ok_dirac and ok_mix and ok_out
    _report(7, ok, f"diracs {ok_dirac}, mixtures {ok_mix}, outside atoms rejected {ok_out}")


def test_criterion_08_dirac_recovery():
    rng = np.random.default_rng(5)
    N = 50
    unaries = tuple(_random_quartic(rng) for _ in range(N))
    xs_grid = np.linspace(-1, 1, 100001)
    # all seeded instances have a unique grid minimizer
    for f in unaries:
        vals = f.values(xs_grid)
        assert np.sum(vals <= vals.min() + 1e-12) == 1
    prob = Problem(Graph(N, []), unaries, Metric.tv(), DualConfig.uniform(IV, 2, 2))
    sol = pdhg_solve(assemble(prob), SolverOptions(max_iters=60000, check_every=1000, rel_tol=1e-12))
    _register("c8", sol, prob)
    fd = fine_decomposition(prob)
    labels = round_mode_mean(sol.moments, fd.fine_knots)
    hits = 0
    for u in range(N):
        k = int(np.argmax(sol.moments[u, :, 0]))
        H = cones.hankel(sol.moments[u, k], 0, fd.n_mom // 2)
        vals, _ = cones.jacobi_eigh(H)
        second = np.sort(vals)[-2]
        grid_argmin = xs_grid[int(np.argmin(unaries[u].values(xs_grid)))]
        if second <= 1e-3 * np.trace(H) and abs(labels[u] - grid_argmin) <= 1e-2:
            hits += 1
    _report(8, hits >= 45, f"rank-1 moment matrices with matching labels on {hits}/50 instances (need 45)")


def test_criterion_09_support_function_tightness():
    rng = np.random.default_rng(9)
    zero = PiecewisePolynomial([-1, 1], [Polynomial([0.0])])
    prob = Problem(chain_graph(2), (zero, zero), Metric.tv(), DualConfig.uniform(IV, 2, 2))
    fd = fine_decomposition(prob)
    pairs = rng.uniform(-1, 1, (100, 2))
    deltas = np.zeros((100, fd.num_fine, fd.n_mom + 1))
    for i, (xu, xv) in enumerate(pairs):
        for x, s in ((xu, 1.0), (xv, -1.0)):
            j = max(min(int(np.searchsorted(fd.fine_knots, x, side="right")) - 1, fd.num_fine - 1), 0)
            xi = (x - fd.fine_center[j]) / fd.fine_half[j]
            deltas[i, j] += s * xi ** np.arange(fd.n_mom + 1)
    vals = support_lipschitz_many(deltas, prob)
    errs = np.abs(vals - np.abs(pairs[:, 0] - pairs[:, 1]))
    ok = bool(np.all(errs <= 1e-3))
    _report(9, ok, f"support values match |xu - xv| on 100 pairs, max err {errs.max():.2e} <= 1e-3")


def test_criterion_10_weak_duality_sandwich():
    if not _LOGGED:
        # standalone run: produce one solve to audit
        f1 = PiecewisePolynomial([-1, 1], [Polynomial([0.25, -1, 1])])
        f2 = PiecewisePolynomial([-1, 1], [Polynomial([0.25, 1, 1])])
        prob = Problem(chain_graph(2), (f1, f2), Metric.tv(), DualConfig(np.array([-1.0, 1.0]), 2))
        sol = pdhg_solve(assemble(prob), SolverOptions(max_iters=5000, check_every=500))
        _register("c10-standalone", sol, prob)
    worst = -np.inf
    violations = []
    iterates = 0
    for label, history, upper in _LOGGED:
        for _, energy, _, _ in history:
            iterates += 1
            excess = energy - upper
            worst = max(worst, excess)
            if excess > 1e-6:
                violations.append((label, excess))
    ok = not violations
    _report(10, ok, f"dual <= rounded + 1e-6 on {iterates} logged iterates "
                    f"across {len(_LOGGED)} solves, worst excess {worst:.2e}")
