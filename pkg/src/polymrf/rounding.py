"""Recover labelings from converged moment vectors and evaluate the original energy.

Moment arrays have shape (V, K, deg+1) with per-piece rescaled coordinates;
knots map the pieces back to label space.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateMass
from .model import Problem, fine_decomposition

_MASS_EPS = 1e-12


def _prepare(moments: np.ndarray, knots: np.ndarray):
    y = np.asarray(moments, dtype=float)
    knots = np.asarray(knots, dtype=float)
    if y.ndim != 3 or y.shape[1] != len(knots) - 1:
        raise ValueError(f"moments of shape {y.shape} do not match {len(knots) - 1} pieces")
    masses = y[:, :, 0]
    if np.any(np.all(masses < 1e-9, axis=1)):
        raise DegenerateMass("a vertex carries no piece mass")
    if np.any(np.abs(masses.sum(axis=1) - 1.0) > 1e-6):
        raise ValueError("piece masses must sum to one per vertex")
    centers = 0.5 * (knots[:-1] + knots[1:])
    halves = 0.5 * np.diff(knots)
    return y, masses, centers, halves


def round_mode_mean(moments: np.ndarray, knots: np.ndarray) -> np.ndarray:
    """Select the piece with the largest mass, then take its normalized mean.

    Ties go to the smaller piece index; the mean is clamped into the piece.
    """
    y, masses, centers, halves = _prepare(moments, knots)
    k_star = np.argmax(masses, axis=1)
    rows = np.arange(y.shape[0])
    mass = np.maximum(masses[rows, k_star], _MASS_EPS)
    xi = np.clip(y[rows, k_star, 1] / mass, -1.0, 1.0)
    return centers[k_star] + halves[k_star] * xi


def round_mean(moments: np.ndarray, knots: np.ndarray, literal_knot_mean: bool = False) -> np.ndarray:
    """Mean of the piecewise measure.

    Default is the true first moment sum_k (c_k m_k + h_k y_k1); the
    literal_knot_mean variant quantizes to left knots, sum_k t_k m_k.
    Both are clamped to the label interval.
    """
    y, masses, centers, halves = _prepare(moments, knots)
    if literal_knot_mean:
        out = masses @ knots[:-1]
    else:
        out = masses @ centers + y[:, :, 1] @ halves
    return np.clip(out, knots[0], knots[-1])


def rounded_energy(labels: np.ndarray, problem: Problem) -> float:
    """Exact original energy of a labeling: unaries plus metric pairwise costs."""
    labels = np.asarray(labels, dtype=float)
    iv = problem.interval
    if np.any(labels < iv.a - 1e-9) or np.any(labels > iv.b + 1e-9):
        raise ValueError("labels must lie in the label interval")
    total = 0.0
    for u, f in enumerate(problem.unaries):
        total += f(float(labels[u]))
    w = problem.edge_weights
    for e, (u, v) in enumerate(problem.graph.edges):
        total += problem.metric.pairwise(float(labels[u]), float(labels[v]), float(w[e]))
    return float(total)


def round_solution(solution, scheme: str = "mode_mean") -> np.ndarray:
    """Round a solver Solution with the named scheme."""
    fd = fine_decomposition(solution.problem)
    if scheme == "mode_mean":
        return round_mode_mean(solution.moments, fd.fine_knots)
    if scheme == "mean":
        return round_mean(solution.moments, fd.fine_knots)
    if scheme == "mean_knots":
        return round_mean(solution.moments, fd.fine_knots, literal_knot_mean=True)
    raise ValueError(f"unknown rounding scheme {scheme!r}")
