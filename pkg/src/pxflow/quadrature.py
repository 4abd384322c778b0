"""Symmetric Gauss rules on the reference triangle {x, y >= 0, x + y <= 1}.

The tables are the positive-weight, fully symmetric rules of Xiao and
Gimbutas, frozen into ``data/triangle_rules.json``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

MAX_DEGREE = 12


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    points: np.ndarray  # (nq, 2) reference coordinates
    weights: np.ndarray  # (nq,), sum 1/2
    degree: int

    @property
    def barycentric(self) -> np.ndarray:
        x, y = self.points.T
        return np.stack([1.0 - x - y, x, y], axis=1)

    def __len__(self):
        return len(self.weights)


@lru_cache(maxsize=None)
def _tables():
    text = resources.files("pxflow.data").joinpath("triangle_rules.json").read_text()
    return json.loads(text)


@lru_cache(maxsize=None)
def rule(degree: int) -> QuadratureRule:
    """Rule integrating all polynomials of total degree <= ``degree`` exactly."""
    if not 1 <= degree <= MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree} (1..{MAX_DEGREE})")
    entry = _tables()[str(degree)]
    pts = np.array(entry["points"], dtype=float)
    wts = np.array(entry["weights"], dtype=float)
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, degree)


def map_to_element(q: QuadratureRule, geom) -> tuple[np.ndarray, np.ndarray]:
    """Physical points and weights of ``q`` on one element."""
    det = float(np.linalg.det(geom.jacobian))
    if det <= 0:
        raise ValueError(f"degenerate or inverted triangle {geom.index} (det={det:g})")
    pts = geom.origin + q.points @ np.asarray(geom.jacobian).T
    return pts, q.weights * det


def map_to_mesh(q: QuadratureRule, mesh) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized variant: points (N_t, nq, 2) and weights (N_t, nq)."""
    if (mesh.dets <= 0).any():
        raise ValueError("mesh contains degenerate or inverted triangles")
    origin = mesh.vertices[mesh.triangles[:, 0]]
    pts = origin[:, None, :] + np.einsum("tij,qj->tqi", mesh.jacobians, q.points)
    return pts, mesh.dets[:, None] * q.weights[None, :]


def integrate(f, mesh, degree: int) -> float:
    """Integrate a vectorized point function f(x) with x of shape (..., 2)."""
    pts, w = map_to_mesh(rule(degree), mesh)
    return float(np.sum(f(pts) * w))
