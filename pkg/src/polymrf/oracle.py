"""Brute-force references: dense-grid dynamic programming on chains and
exhaustive grid minimization.  These are the ground truth the solver is
tested against; they share no code path with the conic machinery.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NotAChain
from .model import Problem
from .poly import PiecewisePolynomial

_CHUNK = 512


@dataclass(frozen=True)
class GridSpec:
    """Uniform label grid resolution."""

    points: int

    def __post_init__(self):
        if self.points < 2:
            raise ValueError("need at least two grid points")

    def labels(self, a: float, b: float) -> np.ndarray:
        return np.linspace(a, b, self.points)


def _chain_order(problem: Problem) -> tuple[list[int], list[int]]:
    """Vertex order along the path and the edge index used at each step."""
    g = problem.graph
    V = g.num_vertices
    if V == 1 and g.num_edges == 0:
        return [0], []
    if g.num_edges != V - 1:
        raise NotAChain("edge count does not match a path")
    adj: list[list[tuple[int, int]]] = [[] for _ in range(V)]
    for e, (u, v) in enumerate(g.edges):
        adj[u].append((v, e))
        adj[v].append((u, e))
    degs = [len(a) for a in adj]
    if max(degs) > 2:
        raise NotAChain("a vertex has degree above two")
    ends = [u for u in range(V) if degs[u] == 1]
    if len(ends) != 2:
        raise NotAChain("graph is not a single path")
    order = [min(ends)]
    edges_used = []
    prev = -1
    while len(order) < V:
        u = order[-1]
        nxt = [(v, e) for v, e in adj[u] if v != prev]
        if not nxt:
            raise NotAChain("graph is disconnected")
        v, e = nxt[0]
        order.append(v)
        edges_used.append(e)
        prev = u
    return order, edges_used


def _unary_table(problem: Problem, xs: np.ndarray) -> np.ndarray:
    V = problem.graph.num_vertices
    table = np.empty((V, len(xs)))
    for u, f in enumerate(problem.unaries):
        table[u] = f.values(xs)
    return table


def _transition(m: np.ndarray, xs: np.ndarray, metric_kind: str, weight: float):
    """min over x' of m(x') + w*d(x', x), with argmin backpointers."""
    G = len(xs)
    if metric_kind == "potts":
        j = int(np.argmin(m))
        stay = m
        move = m[j] + weight
        take_move = move < stay
        out = np.where(take_move, move, stay)
        back = np.where(take_move, j, np.arange(G))
        return out, back
    out = np.empty(G)
    back = np.empty(G, dtype=np.int64)
    for lo in range(0, G, _CHUNK):
        hi = min(lo + _CHUNK, G)
        cost = m[:, None] + weight * np.abs(xs[:, None] - xs[None, lo:hi])
        idx = np.argmin(cost, axis=0)
        out[lo:hi] = cost[idx, np.arange(hi - lo)]
        back[lo:hi] = idx
    return out, back


def dp_chain(problem: Problem, grid: GridSpec) -> tuple[np.ndarray, float]:
    """Exact optimum of the grid-restricted energy on a path graph."""
    order, edges_used = _chain_order(problem)
    iv = problem.interval
    xs = grid.labels(iv.a, iv.b)
    unary = _unary_table(problem, xs)
    m = unary[order[0]].copy()
    backs = []
    for step, u in enumerate(order[1:]):
        e = edges_used[step]
        trans, back = _transition(m, xs, problem.metric.kind, float(problem.edge_weights[e]))
        backs.append(back)
        m = unary[u] + trans
    j = int(np.argmin(m))
    value = float(m[j])
    idx = [j]
    for back in reversed(backs):
        idx.append(int(back[idx[-1]]))
    idx.reverse()
    labels = np.empty(problem.graph.num_vertices)
    for pos, u in enumerate(order):
        labels[u] = xs[idx[pos]]
    return labels, value


def grid_min(f: PiecewisePolynomial, grid: GridSpec) -> tuple[float, float]:
    """Exhaustive minimum over the grid; ties go to the smaller label."""
    xs = grid.labels(f.knots[0], f.knots[-1])
    vals = f.values(xs)
    j = int(np.argmin(vals))
    return float(xs[j]), float(vals[j])


def relaxation_value_chain(problem: Problem, grid: GridSpec) -> float:
    """Value of the grid-label local-polytope relaxation on a chain.

    For the absolute-difference metric on an ordered label grid the coupling
    is submodular, and on a path the relaxation is integral, so its value
    coincides with the exact grid optimum.
    """
    if problem.metric.kind != "tv":
        raise ValueError("chain relaxation value is only available for the absolute-difference metric")
    _, value = dp_chain(problem, grid)
    return value
