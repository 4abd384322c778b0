"""Variable-exponent modulars, Luxemburg norms and the convergence-study error measures."""
from __future__ import annotations

import math

import numpy as np

from .exponent import StressLaw, f_map, p_conjugate
from .quadrature import map_to_mesh, rule
from .spaces import FeSpace, local_basis

ERROR_DEGREE = 10


def _pointwise_exponent(p, mesh, points):
    """Exponent at quadrature points: frozen (per triangle), constant or a field."""
    if callable(p):
        return np.asarray(p(points), dtype=float)
    p = np.asarray(p, dtype=float)
    if p.ndim == 0:
        return np.full(points.shape[:-1], float(p))
    return np.broadcast_to(p[:, None], points.shape[:-1])


def _values(f, points):
    vals = np.asarray(f(points), dtype=float)
    if vals.ndim > 2:  # vector/tensor valued: pointwise Euclidean/Frobenius norm
        vals = np.sqrt(np.sum(vals.reshape(vals.shape[:2] + (-1,)) ** 2, axis=-1))
    return np.abs(vals)


class ModularEvaluator:
    """Evaluates rho(f / lam) = sum_T int_T |f / lam|^p repeatedly on cached point data."""

    def __init__(self, p, f, mesh, degree: int = ERROR_DEGREE, elements=None):
        pts, w = map_to_mesh(rule(degree), mesh)
        expo = _pointwise_exponent(p, mesh, pts)
        vals = _values(f, pts)
        if elements is not None:
            idx = np.atleast_1d(elements)
            pts, w, expo, vals = pts[idx], w[idx], expo[idx], vals[idx]
        self.weights = w.ravel()
        self.expo = np.ascontiguousarray(expo).ravel()
        self.vals = vals.ravel()
        self.measure = float(self.weights.sum())

    def __call__(self, lam: float = 1.0) -> float:
        if lam <= 0:
            raise ValueError("lambda must be positive")
        return float(np.sum(self.weights * (self.vals / lam) ** self.expo))

    def luxemburg(self, rtol: float = 1e-10) -> float:
        """inf{lam > 0 : rho(f / lam) <= 1} by bisection."""
        if not np.any(self.vals * self.weights > 0):
            return 0.0
        # rho(f/lam) is continuous and strictly decreasing in lam
        l1 = float(np.sum(self.weights * self.vals))
        lo = l1 / (1.0 + self.measure)
        hi = max(1.0, self(1.0)) + 1.0
        while self(lo) <= 1.0:
            lo *= 0.5
        while self(hi) > 1.0:
            hi *= 2.0
        while hi - lo > rtol * hi:
            mid = 0.5 * (lo + hi)
            if self(mid) <= 1.0:
                hi = mid
            else:
                lo = mid
        return hi


def modular(p, f, mesh, degree: int = ERROR_DEGREE) -> float:
    """int_Omega |f|^p dx with p frozen per triangle, constant, or a field."""
    return ModularEvaluator(p, f, mesh, degree)()


def luxemburg_norm(p, f, mesh, degree: int = ERROR_DEGREE, elements=None) -> float:
    return ModularEvaluator(p, f, mesh, degree, elements).luxemburg()


def fe_values(space: FeSpace, coeffs, degree: int = ERROR_DEGREE):
    """Values (M, nq[, 2]) and gradients (M, nq[, 2], 2) of an FE function at quadrature points."""
    q = rule(degree)
    phi, dref = local_basis(space.family, q.points)
    dphi = space.physical_gradients(dref)
    c = np.asarray(coeffs, dtype=float).reshape(space.value_dim, space.n_scalar)
    loc = c[:, space.cell_dofs]  # (vd, M, nl)
    val = np.einsum("ctl,ql->tqc", loc, phi)
    grad = np.einsum("ctl,tqlj->tqcj", loc, dphi)
    if space.value_dim == 1:
        return val[..., 0], grad[..., 0, :]
    return val, grad


def error_velocity(law: StressLaw, p_h, velocity_space: FeSpace, v_h, exact_grad,
                   degree: int = ERROR_DEGREE) -> float:
    """|| F_h(Dv_h) - F_h(Dv) ||_2 with the frozen exponent ``p_h``."""
    mesh = velocity_space.mesh
    pts, w = map_to_mesh(rule(degree), mesh)
    _, grad_h = fe_values(velocity_space, v_h, degree)
    p = np.broadcast_to(np.asarray(p_h, dtype=float)[:, None], w.shape)
    diff = f_map(law, p, grad_h) - f_map(law, p, exact_grad(pts))
    return math.sqrt(float(np.sum(w * np.einsum("tqij,tqij->tq", diff, diff))))


def element_means(f, mesh, degree: int = ERROR_DEGREE) -> np.ndarray:
    """P0 projection: the mean of f over every triangle."""
    pts, w = map_to_mesh(rule(degree), mesh)
    return np.sum(w * f(pts), axis=1) / mesh.areas


def _localized_pressure_difference(pressure_space: FeSpace, q_h, q_exact, degree):
    mesh = pressure_space.mesh
    pts, w = map_to_mesh(rule(degree), mesh)
    mean = np.sum(w * q_exact(pts), axis=1) / mesh.areas
    qh, _ = fe_values(pressure_space, q_h, degree)
    return np.abs(qh - mean[:, None]), w


def error_pressure_localized(p_h, pressure_space: FeSpace, q_h, q_exact,
                             degree: int = ERROR_DEGREE) -> float:
    """|| q_h - P0 q ||_{L^{p'_h}(Omega)}, P0 the elementwise mean.

    Luxemburg norm with the frozen conjugate exponent; this is the quantity
    reported as e_q by the convergence study.
    """
    diff, _ = _localized_pressure_difference(pressure_space, q_h, q_exact, degree)
    pc = p_conjugate(np.broadcast_to(np.asarray(p_h, dtype=float), (pressure_space.mesh.n_triangles,)))
    return luxemburg_norm(pc, lambda x: diff, pressure_space.mesh, degree)


def error_pressure_element_sum(p_h, pressure_space: FeSpace, q_h, q_exact,
                               degree: int = ERROR_DEGREE) -> float:
    """sum_T || q_h - P0 q ||_{L^{p'_T}(T)}, an upper bound of the localized error.

    Summing element norms does not scale like a global norm: for smooth q it
    behaves like h^(2/p' - 1), so it is kept as a diagnostic only.
    """
    diff, w = _localized_pressure_difference(pressure_space, q_h, q_exact, degree)
    pc = p_conjugate(np.broadcast_to(np.asarray(p_h, dtype=float), (pressure_space.mesh.n_triangles,)))
    return float(np.sum(np.sum(w * diff ** pc[:, None], axis=1) ** (1.0 / pc)))


def eoc(errors, h=None) -> list[float | None]:
    """Experimental orders log(e_i/e_{i-1}) / log(h_i/h_{i-1}); the first entry is None.

    Without ``h``, mesh sizes halve from level to level.  Entries whose errors
    are not strictly positive are None.
    """
    errors = list(errors)
    if h is None:
        h = [2.0**-i for i in range(len(errors))]
    out: list[float | None] = [None]
    for i in range(1, len(errors)):
        e0, e1 = errors[i - 1], errors[i]
        if not (e0 > 0 and e1 > 0) or not (math.isfinite(e0) and math.isfinite(e1)):
            out.append(None)
            continue
        out.append(math.log(e1 / e0) / math.log(h[i] / h[i - 1]))
    return out


def theory_rate(case: int, quantity: str, alpha: float, beta: float, gamma: float,
                p_minus: float, p_plus: float | None = None) -> float:
    """Predicted convergence rate of e_v or e_q for Case 1 or Case 2 data."""
    if p_plus is None:
        p_plus = p_minus + 1.0
    if case == 1:
        rate_v = min(alpha, beta, gamma * min(1.0, p_conjugate(p_plus) / 2.0))
        if quantity == "velocity":
            return rate_v
        if quantity == "pressure":
            r_minus = min(2.0, p_minus)
            return 2.0 * rate_v / p_conjugate(r_minus)
    elif case == 2:
        if quantity in ("velocity", "pressure"):
            return min(alpha, beta, gamma)
    else:
        raise ValueError(f"case must be 1 or 2, got {case}")
    raise ValueError(f"quantity must be 'velocity' or 'pressure', got {quantity!r}")


def stability_quantity(p_h, pair, solution) -> float:
    """||q_h||_{p'_h} + ||Dv_h||_{p_h}, both Luxemburg norms with frozen exponents."""
    mesh = pair.mesh
    p_h = np.asarray(p_h, dtype=float)
    qh_coeffs = solution.pressure
    vh_coeffs = solution.velocity

    qvals, _ = fe_values(pair.pressure, qh_coeffs)
    _, vgrad = fe_values(pair.velocity, vh_coeffs)
    dv = 0.5 * (vgrad + np.swapaxes(vgrad, -1, -2))

    norm_q = luxemburg_norm(p_conjugate(p_h), lambda x: qvals, mesh)
    norm_dv = luxemburg_norm(p_h, lambda x: dv, mesh)
    return norm_q + norm_dv
