"""Manufactured-solution convergence studies and the electro-rheological example."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np

from . import norms
from .assembly import Assembler, MixedSolution, functional, load_vector, nonzero_on_boundary
from .exponent import ExponentField, StressLaw, academic_p, constant_p, freeze, stress
from .mesh import Triangulation, import_mesh, refine_red, unit_square, unit_square_initial
from .quadrature import map_to_mesh, rule
from .solver import NewtonConfig, NewtonReport, SingularSystemError, prolong, solve_newton
from .spaces import MixedPair, make_pair

log = logging.getLogger(__name__)

RHS_DEGREE = 10
EPS_SHIFT = 1e-4
MEAN_SHIFT_LEVEL = 8


@dataclass(frozen=True)
class ManufacturedCase:
    """Parameters of the singular manufactured solution on (0,1)^2."""

    alpha: float
    beta: float
    gamma: float
    p_minus: float
    case: int = 1
    delta: float = 1e-5
    mu0: float = 0.5
    eps_shift: float = EPS_SHIFT

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma"):
            val = getattr(self, name)
            if not 0 < val <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {val}")
        if self.p_minus <= 1:
            raise ValueError("p_minus must exceed 1")
        if self.case not in (1, 2):
            raise ValueError("case must be 1 or 2")

    @property
    def p_plus(self) -> float:
        return self.p_minus + 1.0

    @property
    def exponent(self) -> ExponentField:
        return academic_p(self.alpha, self.p_minus, self.p_plus)

    @property
    def law(self) -> StressLaw:
        return StressLaw(self.exponent, self.delta, self.mu0)

    def rho_v(self, x):
        p = self.exponent(x)
        return 2.0 * (self.beta - 1.0) / p + self.eps_shift

    def grad_rho_v(self, x):
        p = self.exponent(x)
        gp = self.exponent.grad(x)
        return (-2.0 * (self.beta - 1.0) / p**2)[..., None] * gp

    def rho_q(self, x):
        p = self.exponent(x)
        if self.case == 1:
            pc = p / (p - 1.0)
            return self.gamma - 2.0 / pc + self.eps_shift
        return self.rho_v(x) * (p - 2.0) / 2.0 + self.gamma - 1.0 + self.eps_shift

    def theory(self, quantity: str) -> float:
        return norms.theory_rate(self.case, quantity, self.alpha, self.beta, self.gamma,
                                 self.p_minus, self.p_plus)


def exact_velocity(c: ManufacturedCase, x):
    """v(x) = |x|^rho_v(x) (x2, -x1); v(0) = 0."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    with np.errstate(divide="ignore"):
        g = np.where(r > 0, r ** c.rho_v(x), 0.0)
    return g[..., None] * np.stack([x[..., 1], -x[..., 0]], axis=-1)


def exact_velocity_gradient(c: ManufacturedCase, x):
    """grad v with [..., i, j] = d_j v_i, including the log|x| grad(rho_v) term."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x, axis=-1)
    if np.any(r == 0):
        raise ValueError("velocity gradient is singular at the origin")
    rho = c.rho_v(x)
    g = r**rho
    dg = g[..., None] * (
        np.log(r)[..., None] * c.grad_rho_v(x) + (rho / r**2)[..., None] * x
    )
    w = np.stack([x[..., 1], -x[..., 0]], axis=-1)
    out = np.einsum("...i,...j->...ij", w, dg)
    out[..., 0, 1] += g
    out[..., 1, 0] -= g
    return out


@lru_cache(maxsize=None)
def _level_mesh(level: int) -> Triangulation:
    return unit_square(level)


def _rule_on(tris, q, f):
    """sum over triangles (K, 3, 2) of the degree-q rule applied to f."""
    jac = np.stack([tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]], axis=-1)
    pts = tris[:, None, 0, :] + np.einsum("tij,qj->tqi", jac, q.points)
    w = np.abs(np.linalg.det(jac))[:, None] * q.weights
    return float(np.sum(w * f(pts)))


def _graded_corner_integral(tri, q, f, depth: int = 40) -> float:
    """int_T f for a triangle whose first vertex is a point singularity of f.

    Red subdivision towards the singular vertex: the three children away
    from it use the plain rule, the corner child is refined again.
    """
    total = 0.0
    o, b, c = tri
    for _ in range(depth):
        mb, mc, mbc = 0.5 * (o + b), 0.5 * (o + c), 0.5 * (b + c)
        total += _rule_on(np.array([[mb, b, mbc], [mc, mbc, c], [mb, mbc, mc]]), q, f)
        b, c = mb, mc
    return total + _rule_on(np.array([[o, b, c]]), q, f)


def _mean_power(rho_q, level: int = MEAN_SHIFT_LEVEL, degree: int = RHS_DEGREE,
                chunk: int = 65536) -> float:
    mesh = _level_mesh(level)
    q = rule(degree)

    def f(x):
        return np.linalg.norm(x, axis=-1) ** rho_q(x)

    # |x|^rho_q is singular at the origin for rho_q < 0: the triangles
    # touching it get a graded rule
    tv = mesh.vertices[mesh.triangles]
    at_origin = np.all(tv == 0.0, axis=-1)
    corner = np.flatnonzero(at_origin.any(axis=1))
    total = 0.0
    for t in corner:
        k = int(np.argmax(at_origin[t]))
        total += _graded_corner_integral(np.roll(tv[t], -k, axis=0), q, f)
    regular = np.flatnonzero(~at_origin.any(axis=1))
    for start in range(0, len(regular), chunk):
        total += _rule_on(tv[regular[start:start + chunk]], q, f)
    return total  # |Omega| = 1


_MEAN_CACHE: dict[tuple, float] = {}


def compute_mean_shift(c: ManufacturedCase, level: int = MEAN_SHIFT_LEVEL) -> float:
    """Mean of |x|^rho_q(x) over (0,1)^2 (cached per case)."""
    key = (c, level)
    if key not in _MEAN_CACHE:
        _MEAN_CACHE[key] = _mean_power(c.rho_q, level)
    return _MEAN_CACHE[key]


def exact_pressure(c: ManufacturedCase, x, mean_shift: float | None = None):
    x = np.asarray(x, dtype=float)
    if mean_shift is None:
        mean_shift = compute_mean_shift(c)
    r = np.linalg.norm(x, axis=-1)
    with np.errstate(divide="ignore"):
        return r ** c.rho_q(x) - mean_shift


def consistency_rhs(c: ManufacturedCase, pair: MixedPair, convection: bool = True,
                    degree: int = RHS_DEGREE) -> np.ndarray:
    """L(z) = (S(x, Dv), Dz) + b(v, v, z) - (q, div z) for the exact (v, q).

    Every retained test function vanishes on the boundary, where the skew
    form and the convective form ([grad v] v, z) agree, so the boundary
    correction 1/2 ((v.n) v, z) on the boundary is identically zero and
    omitted.  The assertion below guards that premise.
    """
    touching = nonzero_on_boundary(pair.velocity)
    assert np.isin(touching, pair.velocity.scalar_boundary_dofs).all(), \
        "a non-Dirichlet velocity basis function does not vanish on the boundary"
    shift = compute_mean_shift(c)
    law = c.law
    p = c.exponent

    def tensor(x):
        g = exact_velocity_gradient(c, x)
        t = stress(law, p(x), g)
        if convection:
            v = exact_velocity(c, x)
            t = t - 0.5 * np.einsum("...i,...j->...ij", v, v)
        return t

    def vector(x):
        g = exact_velocity_gradient(c, x)
        v = exact_velocity(c, x)
        return 0.5 * np.einsum("...ij,...j->...i", g, v)

    def scalar(x):
        return -exact_pressure(c, x, shift)

    return functional(pair, degree, tensor=tensor,
                      vector=vector if convection else None, scalar=scalar)


# --- convergence study ----------------------------------------------------


@dataclass
class ErrorRecord:
    level: int
    h: float
    n_triangles: int
    e_v: float
    e_q: float
    eoc_v: float | None = None
    eoc_q: float | None = None
    newton_iterations: int = 0
    stability: float = float("nan")
    seconds: float = 0.0


@dataclass
class StudyResult:
    case: ManufacturedCase
    element: str
    records: list[ErrorRecord] = field(default_factory=list)
    theory_v: float = float("nan")
    theory_q: float = float("nan")
    failed: bool = False
    message: str = ""
    reports: list[NewtonReport] = field(default_factory=list)

    def eoc(self, quantity: str, level: int) -> float | None:
        rec = self.records[level]
        return rec.eoc_v if quantity == "velocity" else rec.eoc_q


def boundary_values(pair: MixedPair, c: ManufacturedCase) -> np.ndarray:
    return pair.velocity.interpolate(lambda x: exact_velocity(c, x))


def run_convergence_study(
    c: ManufacturedCase,
    element: str,
    levels: int = 6,
    cfg: NewtonConfig | None = None,
    convection: bool = True,
    on_level=None,
) -> StudyResult:
    """Solve on levels 0..``levels`` of the unit-square hierarchy and record errors."""
    cfg = cfg or NewtonConfig()
    result = StudyResult(c, element, theory_v=c.theory("velocity"), theory_q=c.theory("pressure"))
    law = c.law
    p = c.exponent
    shift = compute_mean_shift(c)
    grad_exact = lambda x: exact_velocity_gradient(c, x)  # noqa: E731
    q_exact = lambda x: exact_pressure(c, x, shift)  # noqa: E731

    mesh = unit_square_initial()
    prev_pair = prev_sol = None
    for level in range(levels + 1):
        t0 = time.perf_counter()
        if level > 0:
            mesh = refine_red(mesh)
        pair = make_pair(element, mesh)
        p_h = freeze(p, mesh)
        asm = Assembler(pair, law, p_h, convection=convection)
        rhs = consistency_rhs(c, pair, convection)
        g = boundary_values(pair, c)
        if prev_sol is None:
            u0 = MixedSolution.from_vector(asm.initial_vector(_pad(g, pair)), pair)
        else:
            u0 = prolong(prev_sol, prev_pair, pair)
            u0.velocity[asm.dirichlet_dofs] = g[asm.dirichlet_dofs]
        try:
            sol, report = solve_newton(asm, u0, rhs, cfg, context=f"level {level}:")
        except (SingularSystemError, FloatingPointError) as exc:
            result.failed = True
            result.message = f"Newton failed on level {level}: {exc}"
            log.warning(result.message)
            break
        result.reports.append(report)
        if not report.converged:
            result.failed = True
            result.message = f"Newton failed on level {level}: {report.message}"
            log.warning(result.message)
            break
        e_v = norms.error_velocity(law, p_h, pair.velocity, sol.velocity, grad_exact)
        e_q = norms.error_pressure_localized(p_h, pair.pressure, sol.pressure, q_exact)
        rec = ErrorRecord(
            level=level,
            h=mesh.h,
            n_triangles=mesh.n_triangles,
            e_v=e_v,
            e_q=e_q,
            newton_iterations=report.iterations,
            stability=norms.stability_quantity(p_h, pair, sol),
        )
        if result.records:
            last = result.records[-1]
            rec.eoc_v = norms.eoc([last.e_v, e_v], [last.h, rec.h])[1]
            rec.eoc_q = norms.eoc([last.e_q, e_q], [last.h, rec.h])[1]
        rec.seconds = time.perf_counter() - t0
        result.records.append(rec)
        log.info(
            "%s case %d p-=%g a=%g level %d: e_v=%.4e (eoc %s) e_q=%.4e (eoc %s) newton=%d %.1fs",
            element, c.case, c.p_minus, c.alpha, level, e_v, _fmt(rec.eoc_v), e_q,
            _fmt(rec.eoc_q), report.iterations, rec.seconds,
        )
        if on_level is not None:
            on_level(rec)
        prev_pair, prev_sol = pair, sol
    return result


def _pad(v, pair):
    x = np.zeros(pair.n_total)
    x[: pair.n_velocity] = v
    return x


def _fmt(x):
    return "-" if x is None else f"{x:.3f}"


# --- electro-rheological example ------------------------------------------

ELECTRODE = 5.0 / 8.0
ELECTRODE_RADIUS = 5.0 / 80.0
# the meshed electrodes are inscribed polygons, so points of the discrete domain
# may sit slightly inside a disc; only points clearly inside are rejected
ELECTRODE_TOL = 0.05
CHI_E = 1.0


def er_field_E(x):
    """Dipole field (x - a)/|x - a|^2 - (x + a)/|x + a|^2 with a = (5/8, 0)."""
    x = np.asarray(x, dtype=float)
    a = np.array([ELECTRODE, 0.0])
    dm = x - a
    dp = x + a
    rm = np.sum(dm**2, axis=-1)
    rp = np.sum(dp**2, axis=-1)
    rmin = (ELECTRODE_RADIUS * (1.0 - ELECTRODE_TOL)) ** 2
    if np.any(rm < rmin) or np.any(rp < rmin):
        raise ValueError("point inside an electrode")
    return dm / rm[..., None] - dp / rp[..., None]


def er_field_grad(x):
    """grad E with [..., i, j] = d_j E_i."""
    x = np.asarray(x, dtype=float)
    a = np.array([ELECTRODE, 0.0])
    eye = np.eye(2)
    out = np.zeros(x.shape[:-1] + (2, 2))
    for sign, center in ((1.0, a), (-1.0, -a)):
        d = x - center
        r2 = np.sum(d**2, axis=-1)[..., None, None]
        out += sign * (eye / r2 - 2.0 * np.einsum("...i,...j->...ij", d, d) / r2**2)
    return out


def er_material(t):
    """p_hat(t) = 2 + 2 / (1 + 10 t)."""
    return 2.0 + 2.0 / (1.0 + 10.0 * np.asarray(t, dtype=float))


def er_exponent(x, field: bool = True):
    if not field:
        return np.full(np.shape(x)[:-1], 4.0)
    return er_material(np.linalg.norm(er_field_E(x), axis=-1))


def er_force(x, field: bool = True):
    """f = f_hat + chi_E [grad E] E with f_hat(x) = (x2, 0)."""
    x = np.asarray(x, dtype=float)
    f = np.stack([x[..., 1], np.zeros(x.shape[:-1])], axis=-1)
    if field:
        e = er_field_E(x)
        f = f + CHI_E * np.einsum("...ij,...j->...i", er_field_grad(x), e)
    return f


def default_er_mesh_path() -> Path:
    return Path(str(resources.files("pxflow.data").joinpath("er_mesh.txt")))


@dataclass
class ERRun:
    field: bool
    pair: MixedPair
    p_h: np.ndarray
    solution: MixedSolution
    report: NewtonReport

    @property
    def max_speed(self) -> float:
        v = self.solution.velocity.reshape(2, -1)
        return float(np.max(np.hypot(v[0], v[1])))

    @property
    def pressure_mean(self) -> float:
        mesh = self.pair.mesh
        vals, _ = norms.fe_values(self.pair.pressure, self.solution.pressure, 4)
        pts, w = map_to_mesh(rule(4), mesh)
        return float(np.sum(w * vals) / np.sum(w))


def run_er_case(mesh: Triangulation, field: bool = True, cfg: NewtonConfig | None = None,
                delta: float = 1e-5, mu0: float = 0.5) -> ERRun:
    """Taylor-Hood solve on the electrode domain with homogeneous Dirichlet data.

    The Newton iteration starts from the solution with p = 2 (same forcing).
    """
    cfg = cfg or NewtonConfig()
    pair = make_pair("taylor-hood", mesh)
    p_h = er_exponent(mesh.barycenters, field)
    rhs = load_vector(pair, lambda x: er_force(x, field), 6)

    linear = Assembler(pair, StressLaw(constant_p(2.0), delta, mu0), 2.0)
    x0 = np.zeros(pair.n_total)
    start, rep0 = solve_newton(linear, x0, rhs, cfg, context="ER p=2 start:")
    if not rep0.converged:
        raise RuntimeError(f"ER initial p = 2 solve failed: {rep0.message}")

    p_field = ExponentField(lambda x: er_exponent(x, field), 2.0, 4.0)
    asm = Assembler(pair, StressLaw(p_field, delta, mu0), p_h)
    sol, report = solve_newton(asm, start, rhs, cfg, context=f"ER field={field}:")
    return ERRun(field, pair, p_h, sol, report)


def run_er_demo(mesh_path=None, output_dir=None, cfg: NewtonConfig | None = None,
                cases=(True, False)) -> dict:
    """Solve with and without the electric field; optionally write VTK files.

    ``cases`` selects the runs (True: with field); results are keyed the same way.
    """
    from .vtk import write_vtk

    path = Path(mesh_path) if mesh_path else default_er_mesh_path()
    if not path.exists():
        raise FileNotFoundError(f"ER mesh not found: {path}")
    mesh = import_mesh(path)
    runs = {flag: run_er_case(mesh, flag, cfg) for flag in cases}
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        for flag, run in runs.items():
            tag = "field" if flag else "nofield"
            write_vtk(out / f"er_velocity_{tag}.vtk", run.pair, run.solution, run.p_h,
                      fields=("velocity",))
            write_vtk(out / f"er_pressure_{tag}.vtk", run.pair, run.solution, run.p_h,
                      fields=("pressure",))
    return runs
