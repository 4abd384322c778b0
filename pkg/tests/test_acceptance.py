"""Acceptance gate: one PASS/FAIL line per criterion (printed in the pytest summary).

The level-6 studies take a few minutes in total; they are computed once per
module and shared by criteria 1, 3 and 6.
"""
import numpy as np
import pytest

from pxflow import norms
from pxflow.assembly import Assembler, convective_form, functional
from pxflow.cli import write_csv
from pxflow.exponent import StressLaw, academic_p, constant_p, f_map, freeze, stress, sym
from pxflow.experiments import ManufacturedCase, er_field_E, er_field_grad, run_convergence_study, run_er_demo
from pxflow.experiments import ELECTRODE, ELECTRODE_RADIUS
from pxflow.mesh import unit_square
from pxflow.solver import solve_newton
from pxflow.spaces import make_pair

pytestmark = pytest.mark.slow

LEVEL = 6
EOC_TOL = 0.05
THEORY_TOL = 1e-3
PRESSURE_SLACK = 0.05
GALERKIN_TOL = 1e-9
SKEW_TOL = 1e-12
FD_TOL = 1e-6
UNIT_BALL_TOL = 1e-6
LP_TOL = 1e-9
IDENTITY_TOL = 1e-12
STABILITY_FACTOR = 2.0
DIV_E_TOL = 1e-10

# (element, case, alpha = beta = gamma, p_minus) -> EOC_6(e_v) of the tables
TARGETS = {
    ("mini", 1, 1.0, 1.5): 0.823,
    ("mini", 1, 1.0, 2.0): 0.739,
    ("mini", 1, 1.0, 2.5): 0.692,
    ("mini", 2, 0.5, 2.0): 0.522,
    ("mini", 2, 0.5, 2.5): 0.502,
    ("taylor-hood", 1, 0.5, 2.0): 0.366,
}


def _label(key):
    el, case, a, pm = key
    return f"{el} case {case} a={a:g} p-={pm:g}"


@pytest.fixture(scope="module")
def studies():
    out = {}
    for key in TARGETS:
        el, case, a, pm = key
        out[key] = run_convergence_study(ManufacturedCase(a, a, a, pm, case), el, levels=LEVEL)
    return out


# --- criterion 1 ------------------------------------------------------------

@pytest.mark.parametrize("key", list(TARGETS))
def test_c1_velocity_eoc(studies, key, acceptance_log):
    res = studies[key]
    got = None if res.failed else res.records[LEVEL].eoc_v
    ok = got is not None and abs(got - TARGETS[key]) <= EOC_TOL
    shown = "failed: " + res.message if got is None else f"{got:.3f}"
    acceptance_log(f"C1 EOC_6(e_v) {_label(key)}", ok,
                   f"{shown} vs {TARGETS[key]:.3f} +- {EOC_TOL}")
    assert ok


# --- criterion 2 ------------------------------------------------------------

THEORY_ROWS = {
    ("velocity", 1, 1.0): [0.833, 0.786, 0.750, 0.722, 0.700, 0.682],
    ("velocity", 1, 0.5): [0.417, 0.393, 0.375, 0.361, 0.350, 0.341],
    ("pressure", 1, 1.0): [0.556, 0.673, 0.750, 0.722, 0.700, 0.682],
    ("pressure", 1, 0.5): [0.278, 0.337, 0.375, 0.361, 0.350, 0.341],
    ("velocity", 2, 1.0): [1.0] * 4,
    ("velocity", 2, 0.5): [0.5] * 4,
    ("pressure", 2, 1.0): [1.0] * 4,
    ("pressure", 2, 0.5): [0.5] * 4,
}


def test_c2_theory_rows(acceptance_log):
    worst = 0.0
    for (quantity, case, a), row in THEORY_ROWS.items():
        pms = [1.5, 1.75, 2.0, 2.25, 2.5, 2.75] if case == 1 else [2.0, 2.25, 2.5, 2.75]
        for pm, want in zip(pms, row):
            worst = max(worst, abs(norms.theory_rate(case, quantity, a, a, a, pm) - want))
    ok = worst <= THEORY_TOL
    acceptance_log("C2 theory rows (all tables)", ok, f"max deviation {worst:.2e} <= {THEORY_TOL}")
    assert ok


# --- criterion 3 ------------------------------------------------------------

@pytest.mark.parametrize("key", list(TARGETS))
def test_c3_pressure_eoc(studies, key, acceptance_log):
    res = studies[key]
    got = None if res.failed else res.records[LEVEL].eoc_q
    bound = res.theory_q - PRESSURE_SLACK
    ok = got is not None and got >= bound
    shown = "failed: " + res.message if got is None else f"{got:.3f}"
    acceptance_log(f"C3 EOC_6(e_q) {_label(key)}", ok, f"{shown} >= {bound:.3f}")
    assert ok


# --- criterion 4 ------------------------------------------------------------

def test_c4_galerkin_exactness(acceptance_log):
    def v(x):
        return np.stack([x[..., 0] ** 2, -2 * x[..., 0] * x[..., 1]], axis=-1)

    def grad(x):
        g = np.zeros(x.shape[:-1] + (2, 2))
        g[..., 0, 0] = 2 * x[..., 0]
        g[..., 1, 0] = -2 * x[..., 1]
        g[..., 1, 1] = -2 * x[..., 0]
        return g

    def q(x):
        return x[..., 0] + x[..., 1] - 1.0

    pair = make_pair("taylor-hood", unit_square(2))
    law = StressLaw(constant_p(2.0))
    asm = Assembler(pair, law, 2.0, convection=False)
    rhs = functional(pair, 10, tensor=lambda x: stress(law, 2.0, grad(x)), scalar=lambda x: -q(x))
    xi = np.zeros(pair.n_total)
    xi[: pair.n_velocity] = pair.velocity.interpolate(v)
    xi[pair.n_velocity: -1] = pair.pressure.interpolate(q)
    sol, rep = solve_newton(asm, asm.initial_vector(xi), rhs)
    err = np.abs(sol.to_vector() - xi).max()
    ok = rep.converged and rep.iterations == 1 and err <= GALERKIN_TOL
    acceptance_log("C4 Galerkin exactness", ok,
                   f"max error {err:.2e} <= {GALERKIN_TOL}, Newton iterations {rep.iterations}")
    assert ok


# --- criterion 5 ------------------------------------------------------------

def test_c5_property_suites(acceptance_log):
    rng = np.random.default_rng(5)
    results = {}

    pair = make_pair("taylor-hood", unit_square(2))
    worst = 0.0
    for _ in range(100):
        u, z = rng.standard_normal((2, pair.n_velocity))
        scale = np.abs(u).max() * np.abs(z).max() ** 2
        worst = max(worst, abs(convective_form(pair, u, z, z)) / scale)
    results["skew symmetry"] = (worst <= SKEW_TOL, f"{worst:.1e}")

    worst = 0.0
    for el in ("mini", "taylor-hood"):
        pr = make_pair(el, unit_square(2))
        p = academic_p(1.0, 2.5, 3.5)
        asm = Assembler(pr, StressLaw(p), freeze(p, pr.mesh))
        x = rng.standard_normal(pr.n_total)
        j = asm.jacobian(x)
        for _ in range(20):
            d = rng.standard_normal(pr.n_total)
            h = 1e-6
            fd = (asm.residual(x + h * d) - asm.residual(x - h * d)) / (2 * h)
            jd = j @ d
            jd[asm.dirichlet_dofs] = 0.0
            worst = max(worst, np.linalg.norm(jd - fd) / np.linalg.norm(jd))
    results["Jacobian vs FD"] = (worst <= FD_TOL, f"{worst:.1e}")

    mesh = unit_square(3)
    p_h = freeze(academic_p(1.0, 1.5, 2.5), mesh)
    f = lambda x: 1 + x[..., 0] * x[..., 1]  # noqa: E731
    ev = norms.ModularEvaluator(p_h, f, mesh)
    gap = abs(ev(ev.luxemburg()) - 1.0)
    results["Luxemburg unit ball"] = (gap <= UNIT_BALL_TOL, f"{gap:.1e}")

    g = lambda x: np.sin(3 * x[..., 0]) + x[..., 1] ** 2  # noqa: E731
    worst = 0.0
    for p in (1.5, 2.0, 3.75):
        lp = norms.modular(p, g, mesh) ** (1 / p)
        worst = max(worst, abs(norms.luxemburg_norm(p, g, mesh) / lp - 1))
    results["Luxemburg = L^p"] = (worst <= LP_TOL, f"{worst:.1e}")

    law = StressLaw(constant_p(2.0))
    a = 3 * rng.standard_normal((1000, 2, 2))
    b = 3 * rng.standard_normal((1000, 2, 2))
    p = rng.uniform(1.5, 3.5, 1000)
    lhs = np.einsum("nij,nij->n", stress(law, p, a), sym(a))
    fa = f_map(law, p, a)
    rhs = law.mu0 * np.einsum("nij,nij->n", fa, fa)
    worst = np.max(np.abs(lhs - rhs) / np.abs(rhs))
    results["S:A = mu0 |F|^2"] = (worst <= IDENTITY_TOL, f"{worst:.1e}")

    gap = np.einsum("nij,nij->n", stress(law, p, a) - stress(law, p, b), sym(a) - sym(b))
    results["monotonicity (1000 pairs)"] = (bool((gap >= 0).all()), f"min {gap.min():.2e}")

    for name, (ok, detail) in results.items():
        acceptance_log(f"C5 {name}", ok, detail)
    assert all(ok for ok, _ in results.values())


# --- criterion 6 ------------------------------------------------------------

@pytest.mark.parametrize("key", list(TARGETS))
def test_c6_stability(studies, key, acceptance_log):
    res = studies[key]
    vals = [r.stability for r in res.records]
    ok = len(vals) == LEVEL + 1 and max(vals) <= STABILITY_FACTOR * vals[2]
    acceptance_log(f"C6 stability {_label(key)}", ok,
                   f"max {max(vals):.4g} <= {STABILITY_FACTOR} x {vals[2]:.4g}")
    assert ok


# --- criterion 7 ------------------------------------------------------------

def test_c7_er_demo(acceptance_log):
    runs = run_er_demo()
    conv = runs[True].report.converged and runs[False].report.converged
    slower = runs[True].max_speed < runs[False].max_speed

    rng = np.random.default_rng(7)
    x = rng.uniform(-1, 1, size=(1000, 2))
    a = np.array([ELECTRODE, 0.0])
    keep = (np.linalg.norm(x - a, axis=1) > ELECTRODE_RADIUS) & \
           (np.linalg.norm(x + a, axis=1) > ELECTRODE_RADIUS)
    x = x[keep][:100]
    er_field_E(x)  # all samples lie in the domain
    div = np.abs(np.trace(er_field_grad(x), axis1=-2, axis2=-1)).max()
    ok = conv and slower and div <= DIV_E_TOL
    acceptance_log("C7 ER demo", ok,
                   f"converged {conv}, max|v_h| {runs[True].max_speed:.4g} (field) < "
                   f"{runs[False].max_speed:.4g} (no field): {slower}, max|div E| {div:.1e}")
    assert ok


# --- criterion 8 ------------------------------------------------------------

def test_c8_deterministic_csv(tmp_path, acceptance_log):
    c = ManufacturedCase(1.0, 1.0, 1.0, 2.0)
    blobs = []
    for i in range(2):
        path = tmp_path / f"run{i}.csv"
        write_csv(path, run_convergence_study(c, "mini", levels=4))
        blobs.append(path.read_bytes())
    ok = blobs[0] == blobs[1]
    acceptance_log("C8 byte-identical CSV", ok, f"{len(blobs[0])} bytes, identical {ok}")
    assert ok
