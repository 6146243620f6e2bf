"""Oriented graphs with blockwise divergence/gradient operators.

Coefficient fields are dense arrays whose leading axis runs over vertices or
edges; the remaining axes form the per-vertex/per-edge block (typically
pieces x coefficients).  The divergence of an edge field and the gradient of
a vertex field are exact negative adjoints of each other.
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .errors import ShapeMismatch


class Graph:
    """Immutable oriented graph on vertices 0..num_vertices-1."""

    def __init__(self, num_vertices: int, edges):
        edges = [(int(u), int(v)) for u, v in edges]
        seen = set()
        for u, v in edges:
            if u == v:
                raise ValueError(f"self-loop at vertex {u}")
            if not (0 <= u < num_vertices and 0 <= v < num_vertices):
                raise ValueError(f"edge ({u}, {v}) out of range")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise ValueError(f"duplicate edge between {u} and {v}")
            seen.add(key)
        self.num_vertices = int(num_vertices)
        self.edges = tuple(edges)
        self._incidence = None

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def incidence(self) -> sparse.csr_matrix:
        """Sparse (E x V) matrix with +1 at the tail and -1 at the head of each edge."""
        if self._incidence is None:
            e = self.num_edges
            rows = np.repeat(np.arange(e), 2)
            cols = np.array([x for uv in self.edges for x in uv], dtype=int)
            vals = np.tile([1.0, -1.0], e)
            self._incidence = sparse.csr_matrix((vals, (rows, cols)), shape=(e, self.num_vertices))
        return self._incidence

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_vertices, dtype=int)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def __repr__(self):
        return f"Graph(V={self.num_vertices}, E={self.num_edges})"


def grid_graph(width: int, height: int) -> Graph:
    """4-neighborhood grid; horizontal edges run left-to-right, vertical top-to-bottom."""
    if width < 1 or height < 1:
        raise ValueError("grid dimensions must be positive")
    def vid(r, c):
        return r * width + c
    edges = []
    for r in range(height):
        for c in range(width):
            if c + 1 < width:
                edges.append((vid(r, c), vid(r, c + 1)))
            if r + 1 < height:
                edges.append((vid(r, c), vid(r + 1, c)))
    return Graph(width * height, edges)


def chain_graph(n: int) -> Graph:
    """Path graph 0 - 1 - ... - (n-1) with edges oriented left to right."""
    if n < 1:
        raise ValueError("need at least one vertex")
    return Graph(n, [(i, i + 1) for i in range(n - 1)])


def _check_field(g: Graph, field: np.ndarray, expected: int, what: str) -> np.ndarray:
    field = np.asarray(field, dtype=float)
    if field.ndim < 1 or field.shape[0] != expected:
        raise ShapeMismatch(f"{what} field must have leading dimension {expected}, got {field.shape}")
    return field


def divergence(g: Graph, p: np.ndarray) -> np.ndarray:
    """Per-vertex block: incoming minus outgoing edge blocks."""
    p = _check_field(g, p, g.num_edges, "edge")
    flat = p.reshape(g.num_edges, -1)
    out = -(g.incidence.T @ flat)
    return out.reshape((g.num_vertices,) + p.shape[1:])


def gradient(g: Graph, y: np.ndarray) -> np.ndarray:
    """Per-edge block (u, v): y_u - y_v; the exact negative adjoint of divergence."""
    y = _check_field(g, y, g.num_vertices, "vertex")
    flat = y.reshape(g.num_vertices, -1)
    out = g.incidence @ flat
    return out.reshape((g.num_edges,) + y.shape[1:])


def operator_norm_estimate(g: Graph, iters: int = 100, safety: float = 1.01) -> float:
    """Upper bound on the gradient operator norm by power iteration."""
    if g.num_edges == 0:
        return 0.0
    rng = np.random.default_rng(0)
    x = rng.standard_normal(g.num_vertices)
    x /= np.linalg.norm(x)
    inc = g.incidence
    est = 0.0
    for _ in range(iters):
        z = inc.T @ (inc @ x)
        nz = np.linalg.norm(z)
        if nz == 0.0:
            return 0.0
        x = z / nz
        est = np.sqrt(nz)
    return float(est * safety)
