"""Variable power-law exponents and the stress laws built on them.

All tensor routines are vectorized over leading axes: a strain argument of
shape ``(..., 2, 2)`` is paired with an exponent broadcastable to ``(...)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

# strain magnitude below which the rank-one Jacobian term is dropped
EPS_STRAIN = 1e-12


def p_conjugate(p):
    """Hoelder conjugate p / (p - 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 1):
        raise ValueError("conjugate exponent needs p > 1")
    out = p / (p - 1.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ExponentField:
    """Exponent x -> p(x) with known bounds.

    ``func`` maps points of shape (..., 2) to values of shape (...).
    ``grad`` (optional) returns the gradient with shape (..., 2).
    """

    func: Callable[[np.ndarray], np.ndarray]
    p_minus: float
    p_plus: float
    alpha: float = 1.0
    grad: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.p_minus <= 1:
            raise ValueError("p_minus must exceed 1")
        if self.p_plus < self.p_minus:
            raise ValueError("p_plus must be >= p_minus")

    def __call__(self, x):
        return self.func(np.asarray(x, dtype=float))


def constant_p(p: float) -> ExponentField:
    return ExponentField(
        lambda x: np.full(np.shape(x)[:-1], float(p)),
        p,
        p,
        grad=lambda x: np.zeros(np.shape(x)),
    )


def academic_p(alpha: float, p_minus: float, p_plus: float) -> ExponentField:
    """p(x) = (1 - s) p_plus + s p_minus with s = |x|^alpha / 2^(alpha/2).

    Equals p_plus at the origin and p_minus at (1, 1).
    """
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    scale = 2.0 ** (alpha / 2.0)

    def func(x):
        r = np.linalg.norm(x, axis=-1)
        s = r**alpha / scale
        return (1.0 - s) * p_plus + s * p_minus

    def grad(x):
        r = np.linalg.norm(x, axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            ds_dr = alpha * r ** (alpha - 1.0) / scale
            g = (p_minus - p_plus) * ds_dr / r
        return g[..., None] * x

    return ExponentField(func, p_minus, p_plus, alpha, grad)


def freeze(p: ExponentField, mesh) -> np.ndarray:
    """Per-triangle exponent p(barycenter)."""
    return np.asarray(p(mesh.barycenters), dtype=float)


@dataclass(frozen=True)
class StressLaw:
    """S(x, A) = mu0 (delta + |A^sym|)^(p(x) - 2) A^sym."""

    exponent: ExponentField
    delta: float = 1e-5
    mu0: float = 0.5

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.mu0 <= 0:
            raise ValueError("mu0 must be positive")


def sym(a):
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def frob(a):
    return np.sqrt(np.einsum("...ij,...ij->...", a, a))


def _power(base, expo, amp):
    # base^expo * amp, with the 0^negative * 0 limit resolved to 0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = base**expo * amp
    return np.where(amp == 0, 0.0, out)


def stress(law: StressLaw, p, a):
    """Extra stress at exponent value(s) ``p`` (frozen or pointwise)."""
    d = sym(a)
    n = frob(d)
    p = np.asarray(p, dtype=float)
    fac = _power(law.delta + n, p - 2.0, np.ones_like(n))
    fac = np.where(n == 0, 0.0, fac)
    return law.mu0 * fac[..., None, None] * d


def f_map(law: StressLaw, p, a):
    """F(A) = (delta + |A^sym|)^((p-2)/2) A^sym."""
    d = sym(a)
    n = frob(d)
    p = np.asarray(p, dtype=float)
    fac = _power(law.delta + n, 0.5 * (p - 2.0), np.ones_like(n))
    fac = np.where(n == 0, 0.0, fac)
    return fac[..., None, None] * d


def f_star_map(law: StressLaw, p, a):
    """F*(A) = (delta^(p-1) + |A^sym|)^((p'-2)/2) A^sym."""
    d = sym(a)
    n = frob(d)
    p = np.asarray(p, dtype=float)
    pc = p / (p - 1.0)
    fac = _power(law.delta ** (p - 1.0) + n, 0.5 * (pc - 2.0), np.ones_like(n))
    fac = np.where(n == 0, 0.0, fac)
    return fac[..., None, None] * d


def stress_jacobian_coeffs(law: StressLaw, p, a):
    """Scalars (c1, c2) and D = A^sym with D_A S = c1 P_sym + c2 D (x) D."""
    d = sym(a)
    n = frob(d)
    p = np.asarray(p, dtype=float)
    base = law.delta + n
    with np.errstate(divide="ignore", invalid="ignore"):
        c1 = base ** (p - 2.0)
        c2 = np.where(n > EPS_STRAIN, (p - 2.0) * base ** (p - 3.0) / n, 0.0)
    if np.any(~np.isfinite(c1)):
        raise FloatingPointError("stress Jacobian undefined: delta = 0 and zero strain")
    return law.mu0 * c1, law.mu0 * c2, d


def stress_jacobian(law: StressLaw, p, a):
    """D_A S as a 4-tensor C[..., i, j, k, l] with dS_ij = C_ijkl dA_kl."""
    c1, c2, d = stress_jacobian_coeffs(law, p, a)
    eye = np.eye(2)
    psym = 0.5 * (
        np.einsum("ik,jl->ijkl", eye, eye) + np.einsum("il,jk->ijkl", eye, eye)
    )
    c1 = np.asarray(c1)[..., None, None, None, None]
    c2 = np.asarray(c2)[..., None, None, None, None]
    return c1 * psym + c2 * np.einsum("...ij,...kl->...ijkl", d, d)


def shifted_phi(p, delta, a, t):
    """Closed form (delta + a + t)^(p-2) t^2 of the shifted N-function."""
    t = np.asarray(t, dtype=float)
    return _power(delta + a + t, np.asarray(p, dtype=float) - 2.0, t**2)


def shifted_phi_conj(p, delta, a, t):
    """Closed form ((delta + a)^(p-1) + t)^(p'-2) t^2 of the conjugate."""
    p = np.asarray(p, dtype=float)
    t = np.asarray(t, dtype=float)
    pc = p / (p - 1.0)
    return _power((delta + a) ** (p - 1.0) + t, pc - 2.0, t**2)
