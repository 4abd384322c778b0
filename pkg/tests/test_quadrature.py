from math import factorial

import numpy as np
import pytest

from pxflow.mesh import Triangulation, unit_square, unit_square_initial
from pxflow.quadrature import MAX_DEGREE, integrate, map_to_element, map_to_mesh, rule


def monomial_integral(m, n, k):
    """Integral of l0^m l1^n l2^k over the reference triangle (area 1/2)."""
    return 2.0 * factorial(m) * factorial(n) * factorial(k) / factorial(m + n + k + 2) / 2.0


@pytest.mark.parametrize("degree", range(1, MAX_DEGREE + 1))
def test_monomial_exactness(degree):
    q = rule(degree)
    lam = q.barycentric
    for m in range(degree + 1):
        for n in range(degree + 1 - m):
            for k in range(degree + 1 - m - n):
                approx = q.weights @ (lam[:, 0] ** m * lam[:, 1] ** n * lam[:, 2] ** k)
                assert approx == pytest.approx(monomial_integral(m, n, k), rel=1e-13, abs=1e-15)


@pytest.mark.parametrize("degree", range(1, MAX_DEGREE + 1))
def test_positive_weights_inside_points(degree):
    q = rule(degree)
    assert (q.weights > 0).all()
    assert q.weights.sum() == pytest.approx(0.5, abs=1e-15)
    assert (q.barycentric >= -1e-14).all()


def test_centroid_rule():
    q = rule(1)
    assert len(q) == 1
    np.testing.assert_allclose(q.points[0], [1 / 3, 1 / 3])
    assert q.weights[0] == pytest.approx(0.5)


def test_factorial_oracle_example():
    q = rule(4)
    lam = q.barycentric
    assert q.weights @ (lam[:, 1] ** 2 * lam[:, 2] ** 2) == pytest.approx(1 / 180, rel=1e-14)


def test_degree_not_exceeded_silently():
    # degree-1 rule cannot integrate a quadratic
    q = rule(1)
    x = q.points[:, 0]
    assert q.weights @ x**2 != pytest.approx(1 / 12)


@pytest.mark.parametrize("degree", [0, 13, -1])
def test_unsupported_degree(degree):
    with pytest.raises(ValueError):
        rule(degree)


def test_reference_mapping_is_identity():
    m = Triangulation(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))
    q = rule(5)
    pts, w = map_to_element(q, m.geometry(0))
    np.testing.assert_allclose(pts, q.points)
    np.testing.assert_allclose(w, q.weights)


def test_mapped_weights_and_centroid(rng):
    for _ in range(10):
        v = rng.random((3, 2))
        if np.linalg.det(np.column_stack([v[1] - v[0], v[2] - v[0]])) < 0:
            v = v[[0, 2, 1]]
        m = Triangulation(v, np.array([[0, 1, 2]]))
        pts, w = map_to_element(rule(3), m.geometry(0))
        area = m.areas[0]
        assert w.sum() == pytest.approx(area, rel=1e-13)
        assert w @ pts[:, 0] == pytest.approx(area * v[:, 0].mean(), rel=1e-12)


def test_degenerate_element_rejected():
    m = Triangulation(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), np.array([[0, 1, 2]]))
    with pytest.raises(ValueError):
        map_to_element(rule(2), m.geometry(0))
    with pytest.raises(ValueError):
        map_to_mesh(rule(2), m)


def test_integrate_polynomial_on_square():
    m = unit_square(2)
    val = integrate(lambda x: x[..., 0] ** 3 * x[..., 1] ** 4, m, 7)
    assert val == pytest.approx(1 / 20, rel=1e-13)
    assert integrate(lambda x: np.ones(x.shape[:-1]), unit_square_initial(), 1) == pytest.approx(1.0)
