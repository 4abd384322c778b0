"""Lagrange spaces P0, P1, P2 and P1 + cubic bubble on triangles.

Scalar dof numbering: P1 vertex ``i`` -> ``i``; P2 edge ``e`` -> ``N_v + e``
(edges in lexicographic order of sorted vertex pairs); bubble of triangle
``t`` -> ``N_v + t``; P0 triangle ``t`` -> ``t``.  Vector spaces stack the
components: component ``c`` of scalar dof ``k`` is ``c * n_scalar + k``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .mesh import Triangulation

FAMILIES = ("P0", "P1c", "P2c", "P1c_bubble")

# gradients of the barycentric coordinates w.r.t. reference (x, y)
_DLAM = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def _barycentric(ref):
    ref = np.atleast_2d(np.asarray(ref, dtype=float))
    x, y = ref[:, 0], ref[:, 1]
    return np.stack([1.0 - x - y, x, y], axis=1)


def local_basis(family: str, ref) -> tuple[np.ndarray, np.ndarray]:
    """Values (nq, nl) and reference gradients (nq, nl, 2) at points ``ref``."""
    lam = _barycentric(ref)
    nq = len(lam)
    if family == "P0":
        return np.ones((nq, 1)), np.zeros((nq, 1, 2))
    if family == "P1c":
        return lam.copy(), np.broadcast_to(_DLAM, (nq, 3, 2)).copy()
    if family == "P1c_bubble":
        b = 27.0 * lam[:, 0] * lam[:, 1] * lam[:, 2]
        db = 27.0 * (
            (lam[:, 1] * lam[:, 2])[:, None] * _DLAM[0]
            + (lam[:, 0] * lam[:, 2])[:, None] * _DLAM[1]
            + (lam[:, 0] * lam[:, 1])[:, None] * _DLAM[2]
        )
        vals = np.column_stack([lam, b])
        grads = np.concatenate([np.broadcast_to(_DLAM, (nq, 3, 2)), db[:, None, :]], axis=1)
        return vals, grads
    if family == "P2c":
        vals = np.empty((nq, 6))
        grads = np.empty((nq, 6, 2))
        for i in range(3):
            vals[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
            grads[:, i] = (4.0 * lam[:, i] - 1.0)[:, None] * _DLAM[i]
        for k, (i, j) in enumerate(((1, 2), (2, 0), (0, 1))):
            vals[:, 3 + k] = 4.0 * lam[:, i] * lam[:, j]
            grads[:, 3 + k] = 4.0 * (lam[:, j][:, None] * _DLAM[i] + lam[:, i][:, None] * _DLAM[j])
        return vals, grads
    raise ValueError(f"unknown family {family!r}")


def local_nodes(family: str) -> np.ndarray:
    """Reference coordinates of the nodal points of the local basis."""
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    if family == "P0":
        return np.array([[1 / 3, 1 / 3]])
    if family == "P1c":
        return verts
    if family == "P1c_bubble":
        return np.vstack([verts, [[1 / 3, 1 / 3]]])
    if family == "P2c":
        mids = np.array([[0.5, 0.5], [0.0, 0.5], [0.5, 0.0]])
        return np.vstack([verts, mids])
    raise ValueError(f"unknown family {family!r}")


@dataclass(frozen=True, eq=False)
class FeSpace:
    mesh: Triangulation
    family: str
    value_dim: int = 1

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.value_dim not in (1, 2):
            raise ValueError("value_dim must be 1 or 2")

    @cached_property
    def n_scalar(self) -> int:
        m = self.mesh
        return {
            "P0": m.n_triangles,
            "P1c": m.n_vertices,
            "P2c": m.n_vertices + m.n_edges,
            "P1c_bubble": m.n_vertices + m.n_triangles,
        }[self.family]

    @property
    def n_dofs(self) -> int:
        return self.value_dim * self.n_scalar

    @property
    def n_local(self) -> int:
        return {"P0": 1, "P1c": 3, "P2c": 6, "P1c_bubble": 4}[self.family]

    @cached_property
    def cell_dofs(self) -> np.ndarray:
        """Scalar dofs of every triangle, shape (N_t, n_local)."""
        m = self.mesh
        t = m.triangles
        if self.family == "P0":
            out = np.arange(m.n_triangles)[:, None]
        elif self.family == "P1c":
            out = t.copy()
        elif self.family == "P2c":
            out = np.hstack([t, m.n_vertices + m.triangle_edges])
        else:
            out = np.hstack([t, (m.n_vertices + np.arange(m.n_triangles))[:, None]])
        out.setflags(write=False)
        return out

    def vector_cell_dofs(self) -> np.ndarray:
        """Global dofs per triangle, shape (N_t, value_dim, n_local)."""
        cd = self.cell_dofs
        return np.stack([cd + c * self.n_scalar for c in range(self.value_dim)], axis=1)

    @cached_property
    def scalar_boundary_dofs(self) -> np.ndarray:
        m = self.mesh
        if self.family == "P0":
            return np.zeros(0, dtype=np.int64)
        dofs = [m.boundary_vertices]
        if self.family == "P2c":
            dofs.append(m.n_vertices + np.flatnonzero(m.boundary_edge_mask))
        return np.unique(np.concatenate(dofs))

    @cached_property
    def boundary_dofs(self) -> np.ndarray:
        b = self.scalar_boundary_dofs
        return np.concatenate([b + c * self.n_scalar for c in range(self.value_dim)])

    @cached_property
    def node_coordinates(self) -> np.ndarray:
        """Physical location of each scalar dof's node."""
        m = self.mesh
        out = np.empty((self.n_scalar, 2))
        nodes = local_nodes(self.family)
        origin = m.vertices[m.triangles[:, 0]]
        pts = origin[:, None, :] + np.einsum("tij,nj->tni", m.jacobians, nodes)
        out[self.cell_dofs.ravel()] = pts.reshape(-1, 2)
        return out

    def eval_basis(self, t: int, ref_point):
        """Values and reference gradients of the local basis of triangle ``t``."""
        if not 0 <= t < self.mesh.n_triangles:
            raise IndexError(t)
        return local_basis(self.family, ref_point)

    def physical_gradients(self, ref_grads: np.ndarray) -> np.ndarray:
        """Map reference gradients (nq, nl, 2) to (N_t, nq, nl, 2)."""
        return np.einsum("qlj,tji->tqli", ref_grads, self.mesh.inv_jacobians)

    def interpolate(self, f) -> np.ndarray:
        """Nodal interpolant of a vectorized point function; bubble dofs are 0.

        ``f`` maps (n, 2) points to (n,) for scalar or (n, 2) for vector spaces.
        """
        if self.family == "P0":
            raise ValueError("P0 has no nodal interpolant here; use element means")
        x = self.node_coordinates
        vals = np.asarray(f(x), dtype=float)
        if self.value_dim == 1:
            vals = vals.reshape(self.n_scalar, 1)
        if vals.shape != (self.n_scalar, self.value_dim):
            raise ValueError(f"interpolated function returned shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            bad = np.flatnonzero(~np.isfinite(vals).all(axis=1))
            raise ValueError(f"function undefined at {len(bad)} nodes, e.g. {x[bad[0]]}")
        if self.family == "P1c_bubble":
            vals[self.mesh.n_vertices :] = 0.0
        return vals.T.reshape(-1).copy()

    def evaluate(self, coeffs, tri, ref) -> np.ndarray:
        """Values of the FE function at reference points ``ref`` of triangles ``tri``.

        Returns shape (len(tri), value_dim) for one point per triangle.
        """
        coeffs = np.asarray(coeffs, dtype=float).reshape(self.value_dim, self.n_scalar)
        tri = np.asarray(tri)
        out = np.empty((len(tri), self.value_dim))
        for k, (t, r) in enumerate(zip(tri, np.atleast_2d(ref))):
            phi, _ = local_basis(self.family, r)
            out[k] = coeffs[:, self.cell_dofs[t]] @ phi[0]
        return out


@dataclass(frozen=True, eq=False)
class MixedPair:
    name: str
    velocity: FeSpace
    pressure: FeSpace

    @property
    def mesh(self) -> Triangulation:
        return self.velocity.mesh

    @property
    def n_velocity(self) -> int:
        return self.velocity.n_dofs

    @property
    def n_pressure(self) -> int:
        return self.pressure.n_dofs

    @property
    def n_total(self) -> int:
        return self.n_velocity + self.n_pressure + 1

    @property
    def assembly_degree(self) -> int:
        # 2k + 2 with k the velocity polynomial degree (bubble: cubic)
        return 8 if self.velocity.family == "P1c_bubble" else 6


def build_space(mesh: Triangulation, family: str, value_dim: int = 1) -> FeSpace:
    return FeSpace(mesh, family, value_dim)


def mini(mesh: Triangulation) -> MixedPair:
    return MixedPair("MINI", FeSpace(mesh, "P1c_bubble", 2), FeSpace(mesh, "P1c", 1))


def taylor_hood(mesh: Triangulation) -> MixedPair:
    return MixedPair("TaylorHood", FeSpace(mesh, "P2c", 2), FeSpace(mesh, "P1c", 1))


def make_pair(name: str, mesh: Triangulation) -> MixedPair:
    key = name.lower().replace("-", "").replace("_", "")
    if key == "mini":
        return mini(mesh)
    if key == "taylorhood":
        return taylor_hood(mesh)
    raise ValueError(f"unknown element pair {name!r}")
