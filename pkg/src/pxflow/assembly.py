"""Residual and Jacobian of the discrete steady p(x)-Navier-Stokes system.

The unknown vector is laid out as ``[velocity | pressure | multiplier]``.
Equations, tested with velocity basis z, pressure basis r and constants:

    (S_h(Dv), Dz) + b(v, v, z) - (q, div z) - L(z) = 0
    -(div v, r) + lam (1, r)                       = 0
    (q, 1)                                         = 0

with the skew-symmetric convective form
b(u, w, z) = 1/2 (z, [grad w] u) - 1/2 (w, [grad z] u).
Rows of Dirichlet velocity dofs are zeroed in the residual.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .exponent import StressLaw, stress, stress_jacobian_coeffs
from .quadrature import map_to_mesh, rule
from .spaces import MixedPair, local_basis


@dataclass
class MixedSolution:
    velocity: np.ndarray
    pressure: np.ndarray
    multiplier: float = 0.0

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.velocity, self.pressure, [self.multiplier]])

    @classmethod
    def from_vector(cls, x, pair: MixedPair) -> "MixedSolution":
        nv, npr = pair.n_velocity, pair.n_pressure
        return cls(x[:nv].copy(), x[nv : nv + npr].copy(), float(x[nv + npr]))

    def copy(self) -> "MixedSolution":
        return MixedSolution(self.velocity.copy(), self.pressure.copy(), self.multiplier)


class ElementData:
    """Basis functions of a mixed pair tabulated at the quadrature points of every element."""

    def __init__(self, pair: MixedPair, degree: int):
        self.pair = pair
        mesh = pair.mesh
        self.rule = rule(degree)
        self.points, self.wdet = map_to_mesh(self.rule, mesh)  # (M,nq,2), (M,nq)
        self.phi, dref = local_basis(pair.velocity.family, self.rule.points)
        self.dphi = pair.velocity.physical_gradients(dref)  # (M,nq,nl,2)
        self.psi, _ = local_basis(pair.pressure.family, self.rule.points)
        self.vdofs = pair.velocity.vector_cell_dofs()  # (M,2,nl)
        self.pdofs = pair.pressure.cell_dofs + pair.n_velocity  # (M,np)

    def velocity(self, x):
        """Velocity values (M,nq,2) and gradients (M,nq,2,2), grad[..., i, j] = d_j v_i."""
        loc = x[self.vdofs]
        val = np.einsum("tcl,ql->tqc", loc, self.phi)
        grad = np.einsum("tcl,tqlj->tqcj", loc, self.dphi)
        return val, grad

    def pressure(self, x):
        return np.einsum("tr,qr->tq", x[self.pdofs], self.psi)


def _scatter(n, idx, vals):
    return np.bincount(idx.ravel(), weights=vals.ravel(), minlength=n)


class Assembler:
    """Discrete (Q_h) operator for one mesh, mixed pair, stress law and frozen exponent."""

    def __init__(
        self,
        pair: MixedPair,
        law: StressLaw,
        p_frozen,
        degree: int | None = None,
        convection: bool = True,
    ):
        self.pair = pair
        self.law = law
        self.p_h = np.broadcast_to(np.asarray(p_frozen, dtype=float), (pair.mesh.n_triangles,))
        self.convection = convection
        self.ed = ElementData(pair, degree or pair.assembly_degree)
        self.n = pair.n_total
        self.dirichlet_dofs = pair.velocity.boundary_dofs

    @cached_property
    def pressure_mass(self) -> np.ndarray:
        """(1, r) for every pressure basis function r."""
        ed = self.ed
        loc = np.einsum("tq,qr->tr", ed.wdet, ed.psi)
        return _scatter(self.pair.n_pressure, self.pair.pressure.cell_dofs, loc)

    @cached_property
    def _divergence_local(self) -> np.ndarray:
        # B[t, i, l, r] = -(psi_r, d_i phi_l)
        ed = self.ed
        return -np.einsum("tq,qr,tqli->tilr", ed.wdet, ed.psi, ed.dphi, optimize=True)

    def residual(self, x: np.ndarray, rhs: np.ndarray | None = None) -> np.ndarray:
        ed = self.ed
        pair = self.pair
        nv, npr = pair.n_velocity, pair.n_pressure
        val, grad = ed.velocity(x)
        q = ed.pressure(x)
        w = ed.wdet
        s = stress(self.law, self.p_h[:, None], grad)
        rv = np.einsum("tq,tqij,tqlj->til", w, s, ed.dphi, optimize=True)
        if self.convection:
            gv = np.einsum("tqij,tqj->tqi", grad, val)
            rv += 0.5 * np.einsum("tq,ql,tqi->til", w, ed.phi, gv, optimize=True)
            vdz = np.einsum("tqlj,tqj->tql", ed.dphi, val)
            rv -= 0.5 * np.einsum("tq,tqi,tql->til", w, val, vdz, optimize=True)
        rv -= np.einsum("tq,tq,tqli->til", w, q, ed.dphi, optimize=True)

        div = grad[..., 0, 0] + grad[..., 1, 1]
        rp = -np.einsum("tq,qr,tq->tr", w, ed.psi, div, optimize=True)

        out = np.zeros(self.n)
        out[:nv] = _scatter(nv, ed.vdofs, rv)
        out[nv : nv + npr] = _scatter(npr, pair.pressure.cell_dofs, rp)
        lam = x[-1]
        out[nv : nv + npr] += lam * self.pressure_mass
        out[-1] = self.pressure_mass @ x[nv : nv + npr]
        if rhs is not None:
            out[:nv] -= rhs[:nv]
        out[self.dirichlet_dofs] = 0.0
        return out

    @cached_property
    def _pattern(self):
        ed = self.ed
        M, _, nl, _ = ed.dphi.shape
        npl = ed.pdofs.shape[1]
        vd = ed.vdofs.reshape(M, 2 * nl)
        vv_r = np.repeat(vd, 2 * nl, axis=1)
        vv_c = np.tile(vd, (1, 2 * nl))
        vp_r = np.repeat(vd, npl, axis=1)
        vp_c = np.tile(ed.pdofs, (1, 2 * nl))
        gp = np.arange(self.pair.n_pressure) + self.pair.n_velocity
        last = np.full(self.pair.n_pressure, self.n - 1)
        rows = np.concatenate([vv_r.ravel(), vp_r.ravel(), vp_c.ravel(), gp, last])
        cols = np.concatenate([vv_c.ravel(), vp_c.ravel(), vp_r.ravel(), last, gp])
        return rows, cols

    def jacobian(self, x: np.ndarray) -> sp.csr_matrix:
        """Derivative of the residual; Dirichlet rows are left unconstrained.

        Use :func:`apply_dirichlet` to pin the Dirichlet dofs.
        """
        ed = self.ed
        val, grad = ed.velocity(x)
        w = ed.wdet
        dphi = ed.dphi
        M, nq, nl, _ = dphi.shape

        c1, c2, d = stress_jacobian_coeffs(self.law, self.p_h[:, None], grad)
        wc1 = w * c1
        gram = np.einsum("tq,tqlj,tqmj->tlm", wc1, dphi, dphi, optimize=True)
        k = np.zeros((M, 2, nl, 2, nl))
        k[:, 0, :, 0, :] += 0.5 * gram
        k[:, 1, :, 1, :] += 0.5 * gram
        k += 0.5 * np.einsum("tq,tqlk,tqmi->tilkm", wc1, dphi, dphi, optimize=True)
        ddphi = np.einsum("tqij,tqlj->tqil", d, dphi)
        k += np.einsum("tq,tqil,tqkm->tilkm", w * c2, ddphi, ddphi, optimize=True)

        if self.convection:
            phi = ed.phi
            k += 0.5 * np.einsum("tq,ql,tqik,qm->tilkm", w, phi, grad, phi, optimize=True)
            k -= 0.5 * np.einsum("tq,tqi,tqlk,qm->tilkm", w, val, dphi, phi, optimize=True)
            vdz = np.einsum("tqlj,tqj->tql", dphi, val)
            a = 0.5 * np.einsum("tq,ql,tqm->tlm", w, phi, vdz, optimize=True)
            a -= 0.5 * np.einsum("tq,qm,tql->tlm", w, phi, vdz, optimize=True)
            k[:, 0, :, 0, :] += a
            k[:, 1, :, 1, :] += a

        b = self._divergence_local
        data = np.concatenate(
            [
                k.reshape(M, -1).ravel(),
                b.reshape(M, -1).ravel(),
                b.reshape(M, -1).ravel(),
                self.pressure_mass,
                self.pressure_mass,
            ]
        )
        rows, cols = self._pattern
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def initial_vector(self, boundary_values: np.ndarray | None = None) -> np.ndarray:
        x = np.zeros(self.n)
        if boundary_values is not None:
            x[self.dirichlet_dofs] = boundary_values[self.dirichlet_dofs]
        return x


def nonzero_on_boundary(space, samples: int = 4) -> np.ndarray:
    """Scalar dofs whose basis function is nonzero somewhere on the mesh boundary.

    Found by sampling every local basis function along every boundary edge.
    """
    m = space.mesh
    tri, k = np.nonzero(m.boundary_edge_mask[m.triangle_edges])
    if len(tri) == 0:
        return np.zeros(0, dtype=np.int64)
    s = (np.arange(samples) + 0.5) / samples
    verts = np.eye(3)
    found = []
    for edge in range(3):
        sel = tri[k == edge]
        if len(sel) == 0:
            continue
        a, b = verts[(edge + 1) % 3], verts[(edge + 2) % 3]
        lam = (1 - s)[:, None] * a + s[:, None] * b  # barycentric points on the edge
        phi, _ = local_basis(space.family, lam[:, 1:])
        local = np.flatnonzero(np.any(np.abs(phi) > 1e-12, axis=0))
        found.append(space.cell_dofs[sel][:, local].ravel())
    return np.unique(np.concatenate(found))


def apply_dirichlet(matrix, rhs, dofs, values):
    """Symmetric elimination of the dofs ``dofs`` pinned to ``values``.

    Returns ``(A, b)`` where Dirichlet rows and columns of ``A`` are identity
    rows/columns and ``b`` carries the column correction.
    """
    a = sp.csr_matrix(matrix)
    n = a.shape[0]
    values = np.broadcast_to(np.asarray(values, dtype=float), (len(dofs),))
    lift = np.zeros(n)
    lift[dofs] = values
    b = np.asarray(rhs, dtype=float) - a @ lift
    keep = np.ones(n)
    keep[dofs] = 0.0
    dk = sp.diags(keep)
    out = (dk @ a @ dk + sp.diags(1.0 - keep)).tocsr()
    out.eliminate_zeros()
    b[dofs] = values
    return out, b


def functional(pair: MixedPair, degree: int, tensor=None, vector=None, scalar=None) -> np.ndarray:
    """Load vector z -> (T, grad z) + (g, z) + (s, div z) over the velocity space.

    ``tensor``, ``vector``, ``scalar`` are callables of the physical quadrature
    points (M, nq, 2) returning (M, nq, 2, 2), (M, nq, 2) and (M, nq).
    The result is padded to the full mixed vector length with zeros.
    """
    ed = ElementData(pair, degree)
    w = ed.wdet
    loc = np.zeros(ed.vdofs.shape)
    if tensor is not None:
        loc += np.einsum("tq,tqij,tqlj->til", w, tensor(ed.points), ed.dphi)
    if vector is not None:
        loc += np.einsum("tq,tqi,ql->til", w, vector(ed.points), ed.phi)
    if scalar is not None:
        loc += np.einsum("tq,tq,tqli->til", w, scalar(ed.points), ed.dphi)
    out = np.zeros(pair.n_total)
    out[: pair.n_velocity] = _scatter(pair.n_velocity, ed.vdofs, loc)
    return out


def load_vector(pair: MixedPair, f, degree: int) -> np.ndarray:
    """(f, z) for a body force f mapping points (..., 2) to (..., 2)."""
    return functional(pair, degree, vector=f)


def convective_form(pair: MixedPair, u, w, z, degree: int | None = None) -> float:
    """b(u, w, z) = 1/2 (z, [grad w] u) - 1/2 (w, [grad z] u) for velocity dof vectors."""
    ed = ElementData(pair, degree or pair.assembly_degree)
    pad = np.zeros(pair.n_total)

    def fields(vec):
        pad[: pair.n_velocity] = vec
        return ed.velocity(pad)

    uv, _ = fields(u)
    wv, wg = fields(w)
    zv, zg = fields(z)
    t1 = np.einsum("tqi,tqij,tqj->tq", zv, wg, uv)
    t2 = np.einsum("tqi,tqij,tqj->tq", wv, zg, uv)
    return float(np.sum(ed.wdet * 0.5 * (t1 - t2)))


def stress_block(assembler: Assembler, x) -> sp.csr_matrix:
    """Velocity-velocity block of the Jacobian."""
    nv = assembler.pair.n_velocity
    return assembler.jacobian(x)[:nv, :nv].tocsr()
