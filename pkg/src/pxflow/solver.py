"""Damped Newton iteration with sparse LU solves, and level-to-level prolongation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import Assembler, MixedSolution, apply_dirichlet
from .mesh import Triangulation
from .spaces import MixedPair, local_basis, local_nodes

log = logging.getLogger(__name__)


class SingularSystemError(RuntimeError):
    pass


@dataclass
class NewtonConfig:
    atol: float = 1e-8
    rtol: float = 1e-10
    max_iter: int = 50
    damping: bool = True
    backtrack: float = 0.5
    min_step: float = 2.0**-10

    def __post_init__(self):
        if self.atol <= 0 or self.rtol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class NewtonReport:
    iterations: int = 0
    residuals: list[float] = field(default_factory=list)
    steps: list[float] = field(default_factory=list)
    converged: bool = False
    message: str = ""


def _pair_zero_diagonal(a: sp.csr_matrix, skip: np.ndarray) -> np.ndarray:
    """Group id per unknown: each zero-diagonal row joins one distinct neighbour.

    The neighbour (largest coupling, lowest index on ties) is eliminated
    first, so the saddle-point rows meet a nonzero pivot without row swaps.
    """
    n = a.shape[0]
    diag = a.diagonal()
    group = np.arange(n)
    taken = skip.copy()
    mag = abs(a).tocsr()
    for i in np.flatnonzero((diag == 0) & ~skip):
        lo, hi = mag.indptr[i], mag.indptr[i + 1]
        cols, vals = mag.indices[lo:hi], mag.data[lo:hi]
        ok = (diag[cols] != 0) & ~taken[cols]
        if ok.any():
            j = cols[ok][np.lexsort((cols[ok], -vals[ok]))[0]]
            taken[j] = True
            group[i] = j
    return group


def fill_reducing_ordering(matrix) -> np.ndarray | None:
    """Symmetric ordering for the bordered saddle-point systems (needs pymetis).

    Nested dissection of the symmetrized pattern, computed on groups that tie
    every zero-diagonal row to a coupled unknown ordered just before it.
    Rows coupled to a large share of the unknowns (the mean-value border)
    come just before the last zero-diagonal row.  Returns None if pymetis is unavailable.
    """
    try:
        import pymetis
    except ImportError:
        return None
    a = sp.csr_matrix(matrix)
    n = a.shape[0]
    g = (abs(a) + abs(a).T).tocsr()
    g.setdiag(0)
    g.eliminate_zeros()
    dense = np.diff(g.indptr) > max(64, 10 * int(np.sqrt(n)))
    keep = np.flatnonzero(~dense)
    if len(keep) < 2:
        return np.arange(n)
    group = _pair_zero_diagonal(a, dense)
    _, gid = np.unique(group[keep], return_inverse=True)
    ng = int(gid.max()) + 1
    incid = sp.csr_matrix((np.ones(len(keep)), (keep, gid)), shape=(n, ng))
    q = (incid.T @ g @ incid).tocsr()
    q.setdiag(0)
    q.eliminate_zeros()
    adj = pymetis.CSRAdjacency(q.indptr.astype(np.int64), q.indices.astype(np.int64))
    perm = np.asarray(pymetis.nested_dissection(adjacency=adj)[0], dtype=np.int64)
    rank = np.empty(ng, dtype=np.int64)
    rank[perm] = np.arange(ng)
    zero = a.diagonal() == 0
    order = keep[np.lexsort((keep, zero[keep].astype(np.int64), rank[gid]))]
    # the border fixes the pressure constant mode: eliminated after the last
    # zero-diagonal row that pivot would vanish, so it goes just before it
    last = np.flatnonzero(zero[order])
    cut = last[-1] if len(last) else len(order)
    return np.concatenate([order[:cut], np.flatnonzero(dense), order[cut:]])


def _factor(a, perm):
    try:
        if perm is None:
            return spla.splu(a, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                             options=dict(SymmetricMode=True))
        if perm is False:
            return spla.splu(a)
        return spla.splu(a[perm][:, perm].tocsc(), permc_spec="NATURAL",
                         diag_pivot_thresh=0.0, options=dict(SymmetricMode=True))
    except RuntimeError as exc:  # SuperLU reports "Factor is exactly singular"
        raise SingularSystemError(str(exc)) from exc


def sparse_lu_solve(matrix, rhs, ordering=None, check: float = 1e-10) -> np.ndarray:
    """Solve ``matrix @ x = rhs`` with SuperLU.

    The systems here are structurally symmetric, so the first attempt uses a
    symmetric fill-reducing ordering (``ordering``, else nested dissection,
    else SuperLU's minimum degree on A + A^T) with diagonal pivots.  If that
    breaks down or the relative residual exceeds ``check``, the solve is
    repeated with partial pivoting and SuperLU's default column ordering.
    """
    a = sp.csc_matrix(matrix)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got {a.shape}")
    b = np.asarray(rhs, dtype=float)
    n = a.shape[0]
    if ordering is None:
        ordering = fill_reducing_ordering(a)
    scale = np.abs(a).max() if a.nnz else 0.0
    bnorm = float(np.linalg.norm(b))
    x = None
    for perm in (ordering, False):
        last = perm is False
        try:
            lu = _factor(a, perm)
        except SingularSystemError:
            if last:
                raise
            continue
        diag_u = np.abs(lu.U.diagonal())
        tiny = np.flatnonzero(diag_u <= 1e-14 * max(scale, 1e-300))
        if len(tiny) and last:
            col = int(lu.perm_c[tiny[0]])
            raise SingularSystemError(f"numerically singular matrix (pivot at column {col})")
        with np.errstate(all="ignore"):
            if isinstance(perm, np.ndarray):
                x = np.empty(n)
                x[perm] = lu.solve(b[perm])
            else:
                x = lu.solve(b)
        if np.all(np.isfinite(x)) and np.linalg.norm(a @ x - b) <= check * max(bnorm, 1e-300):
            return x
        log.debug("LU residual check failed (ordering=%s)", "default" if last else "symmetric")
    return x


def solve_newton(
    assembler: Assembler,
    u0: MixedSolution | np.ndarray,
    rhs: np.ndarray | None = None,
    cfg: NewtonConfig | None = None,
    context: str = "",
) -> tuple[MixedSolution, NewtonReport]:
    """Newton's method on the residual of ``assembler`` starting from ``u0``.

    ``u0`` must already carry the Dirichlet values; updates keep them fixed.
    Converged iff ||R|| <= atol or ||R|| <= rtol * ||R(u0)|| (Euclidean norms).
    """
    cfg = cfg or NewtonConfig()
    pair = assembler.pair
    x = u0.to_vector() if isinstance(u0, MixedSolution) else np.array(u0, dtype=float)
    dofs = assembler.dirichlet_dofs
    report = NewtonReport()
    ordering = None

    r = assembler.residual(x, rhs)
    rnorm = float(np.linalg.norm(r))
    r0 = rnorm
    report.residuals.append(rnorm)

    def done(rn):
        return rn <= cfg.atol or rn <= cfg.rtol * r0

    while not done(rnorm):
        if report.iterations >= cfg.max_iter:
            report.message = f"no convergence in {cfg.max_iter} iterations"
            break
        jac = assembler.jacobian(x)
        a, b = apply_dirichlet(jac, -r, dofs, 0.0)
        try:
            if ordering is None:
                ordering = fill_reducing_ordering(a)
            dx = sparse_lu_solve(a, b, ordering)
        except SingularSystemError as exc:
            raise SingularSystemError(
                f"{context} Newton iteration {report.iterations + 1}: {exc}".strip()
            ) from exc

        step = 1.0
        while True:
            xt = x + step * dx
            rt = assembler.residual(xt, rhs)
            rtn = float(np.linalg.norm(rt))
            if not cfg.damping or (np.isfinite(rtn) and rtn < rnorm):
                break
            step *= cfg.backtrack
            if step < cfg.min_step:
                break
        if cfg.damping and not (np.isfinite(rtn) and rtn < rnorm):
            report.message = "line search exhausted"
            break
        x, r, rnorm = xt, rt, rtn
        report.iterations += 1
        report.steps.append(step)
        report.residuals.append(rnorm)
        log.debug("%s it %d |R|=%.3e step=%g", context, report.iterations, rnorm, step)
        if not np.isfinite(rnorm):
            report.message = "residual became non-finite"
            break
    else:
        report.converged = True

    if report.converged:
        report.message = f"converged in {report.iterations} iterations"
    return MixedSolution.from_vector(x, pair), report


def prolong(
    coarse: MixedSolution,
    coarse_pair: MixedPair,
    fine_pair: MixedPair,
) -> MixedSolution:
    """Evaluate the coarse FE functions at the nodes of the red-refined mesh.

    Fine triangle ``4*t + k`` must lie inside coarse triangle ``t``.
    """
    cm: Triangulation = coarse_pair.mesh
    fm: Triangulation = fine_pair.mesh
    if fm.n_triangles != 4 * cm.n_triangles or fm.level != cm.level + 1:
        raise ValueError("fine mesh is not the red refinement of the coarse mesh")
    if not np.array_equal(fm.vertices[: cm.n_vertices], cm.vertices):
        raise ValueError("fine mesh does not extend the coarse vertex set")
    parent = np.arange(fm.n_triangles) // 4

    def transfer(coarse_space, fine_space, coeffs):
        fam = fine_space.family
        nodes = local_nodes(fam)
        # physical nodal points of each fine element, then parent reference coords
        origin = fm.vertices[fm.triangles[:, 0]]
        phys = origin[:, None, :] + np.einsum("tij,nj->tni", fm.jacobians, nodes)
        porigin = cm.vertices[cm.triangles[parent, 0]]
        ref = np.einsum("tij,tnj->tni", cm.inv_jacobians[parent], phys - porigin[:, None, :])
        vd = coarse_space.value_dim
        c = coeffs.reshape(vd, coarse_space.n_scalar)
        cdofs = coarse_space.cell_dofs[parent]  # (Mf, nlc)
        nlc = cdofs.shape[1]
        vals = np.empty((fm.n_triangles, len(nodes), vd))
        for n in range(len(nodes)):
            phi, _ = local_basis(coarse_space.family, ref[:, n])
            # phi: (Mf, nlc) evaluated at per-element points
            for comp in range(vd):
                vals[:, n, comp] = np.einsum("tl,tl->t", phi.reshape(-1, nlc), c[comp][cdofs])
        out = np.zeros((vd, fine_space.n_scalar))
        fd = fine_space.cell_dofs
        if fam == "P1c_bubble":
            nv = fm.n_vertices
            for comp in range(vd):
                out[comp, fd[:, :3].ravel()] = vals[:, :3, comp].ravel()
                lin = vals[:, :3, comp].mean(axis=1)
                out[comp, nv + np.arange(fm.n_triangles)] = vals[:, 3, comp] - lin
        else:
            for comp in range(vd):
                out[comp, fd.ravel()] = vals[:, :, comp].ravel()
        return out.reshape(-1)

    v = transfer(coarse_pair.velocity, fine_pair.velocity, coarse.velocity)
    q = transfer(coarse_pair.pressure, fine_pair.pressure, coarse.pressure)
    return MixedSolution(v, q, coarse.multiplier)
