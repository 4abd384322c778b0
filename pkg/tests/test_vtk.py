import numpy as np
import pytest

from pxflow.assembly import MixedSolution
from pxflow.mesh import unit_square
from pxflow.spaces import make_pair
from pxflow.vtk import VTK_TRIANGLE, VTKFormatError, read_vtk, write_vtk


@pytest.mark.parametrize("element", ["mini", "taylor-hood"])
def test_round_trip(tmp_path, rng, element):
    pair = make_pair(element, unit_square(2))
    sol = MixedSolution(rng.standard_normal(pair.n_velocity), rng.standard_normal(pair.n_pressure))
    p_h = rng.uniform(1.5, 3.5, pair.mesh.n_triangles)
    path = write_vtk(tmp_path / "s.vtk", pair, sol, p_h)
    data = read_vtk(path)
    m = pair.mesh
    nv = m.n_vertices
    np.testing.assert_array_equal(data["points"][:, :2], m.vertices)
    np.testing.assert_array_equal(data["cells"], m.triangles)
    assert (data["cell_types"] == VTK_TRIANGLE).all()
    v = sol.velocity.reshape(2, -1)[:, :nv].T
    np.testing.assert_array_equal(data["point_data"]["velocity"][:, :2], v)
    np.testing.assert_array_equal(data["point_data"]["pressure"], sol.pressure[:nv])
    np.testing.assert_array_equal(data["cell_data"]["p_h"], p_h)


def test_vertex_values_are_nodal(tmp_path):
    # the first n_vertices scalar dofs must be the vertex values
    pair = make_pair("taylor-hood", unit_square(1))
    f = lambda x: np.stack([x[..., 0], x[..., 0] * x[..., 1]], axis=-1)  # noqa: E731
    g = lambda x: 1 - x[..., 1] ** 2  # noqa: E731
    sol = MixedSolution(pair.velocity.interpolate(f), pair.pressure.interpolate(g))
    data = read_vtk(write_vtk(tmp_path / "s.vtk", pair, sol))
    pts = pair.mesh.vertices
    np.testing.assert_allclose(data["point_data"]["velocity"][:, :2], f(pts), atol=1e-15)
    np.testing.assert_allclose(data["point_data"]["pressure"], g(pts), atol=1e-15)


def test_field_selection(tmp_path):
    pair = make_pair("mini", unit_square(1))
    sol = MixedSolution(np.zeros(pair.n_velocity), np.zeros(pair.n_pressure))
    data = read_vtk(write_vtk(tmp_path / "v.vtk", pair, sol, fields=("velocity",)))
    assert set(data["point_data"]) == {"velocity"}
    assert data["cell_data"] == {}


def test_bad_header(tmp_path):
    (tmp_path / "x.vtk").write_text("not a vtk file\nx\nASCII\n")
    with pytest.raises(VTKFormatError):
        read_vtk(tmp_path / "x.vtk")
