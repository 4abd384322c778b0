"""Conforming triangulations of polygonal 2D domains.

Vertices are stored as an ``(N_v, 2)`` float array, triangles as an
``(N_t, 3)`` int array in counterclockwise order.  Red refinement appends
edge midpoints after the existing vertices, so vertex ``i`` of a mesh is
vertex ``i`` of every refinement of it, and child ``4*t + k`` of a refined
mesh lies in parent triangle ``t``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np


class MeshError(ValueError):
    """Raised for invalid or non-conforming triangulations."""


class MeshParseError(MeshError):
    """Raised when a mesh file cannot be parsed."""

    def __init__(self, msg: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            msg = f"line {lineno}: {msg}"
        super().__init__(msg)


# local edge k is opposite local vertex k
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


@dataclass(frozen=True, eq=False)
class Triangulation:
    vertices: np.ndarray
    triangles: np.ndarray
    vertex_markers: np.ndarray | None = None
    level: int = 0
    _boundary_markers: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        t = np.ascontiguousarray(self.triangles, dtype=np.int64)
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "triangles", t)
        if self.vertex_markers is None:
            vm = np.zeros(len(v), dtype=np.int64)
            vm[np.unique(self.boundary_edges)] = 1
        else:
            vm = np.asarray(self.vertex_markers, dtype=np.int64)
        vm.setflags(write=False)
        object.__setattr__(self, "vertex_markers", vm)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    # --- topology -----------------------------------------------------

    @cached_property
    def _edge_data(self):
        tri = self.triangles
        local = tri[:, LOCAL_EDGES]  # (N_t, 3, 2)
        pairs = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(
            pairs, axis=0, return_inverse=True, return_counts=True
        )
        return edges, inverse.reshape(-1, 3), counts

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs in lexicographic order."""
        return self._edge_data[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """Global edge index of local edge k (opposite vertex k), shape (N_t, 3)."""
        return self._edge_data[1]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def boundary_edge_mask(self) -> np.ndarray:
        return self._edge_data[2] == 1

    @property
    def boundary_edges(self) -> np.ndarray:
        return self.edges[self.boundary_edge_mask]

    @cached_property
    def boundary_markers(self) -> np.ndarray:
        """Integer marker per boundary edge (same order as ``boundary_edges``)."""
        if self._boundary_markers is not None:
            return self._boundary_markers
        be = self.boundary_edges
        m = self.vertex_markers[be]
        # an edge between two differently marked boundary vertices keeps the
        # smaller nonzero marker; unmarked vertices default to 1
        m = np.where(m > 0, m, np.iinfo(np.int64).max)
        out = m.min(axis=1)
        out[out == np.iinfo(np.int64).max] = 1
        return out

    @cached_property
    def boundary_vertices(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    # --- geometry -----------------------------------------------------

    @cached_property
    def jacobians(self) -> np.ndarray:
        """Affine map matrices B_T with x = v0 + B_T @ xhat, shape (N_t, 2, 2)."""
        p = self.vertices[self.triangles]
        return np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)

    @cached_property
    def dets(self) -> np.ndarray:
        b = self.jacobians
        return b[:, 0, 0] * b[:, 1, 1] - b[:, 0, 1] * b[:, 1, 0]

    @cached_property
    def inv_jacobians(self) -> np.ndarray:
        b = self.jacobians
        d = self.dets
        inv = np.empty_like(b)
        inv[:, 0, 0] = b[:, 1, 1] / d
        inv[:, 1, 1] = b[:, 0, 0] / d
        inv[:, 0, 1] = -b[:, 0, 1] / d
        inv[:, 1, 0] = -b[:, 1, 0] / d
        return inv

    @property
    def areas(self) -> np.ndarray:
        return 0.5 * self.dets

    @cached_property
    def barycenters(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def diameters(self) -> np.ndarray:
        """h_T, the longest edge of each triangle."""
        p = self.vertices[self.triangles]
        lens = np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2)
        return lens.max(axis=1)

    @cached_property
    def inradii(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        perim = np.linalg.norm(p[:, [1, 2, 0]] - p, axis=2).sum(axis=1)
        return 2.0 * self.areas / perim

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    def chunkiness(self) -> float:
        """max_T h_T / rho_T."""
        return float((self.diameters / self.inradii).max())

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in degrees."""
        p = self.vertices[self.triangles]
        ang = []
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            c = np.einsum("ij,ij->i", a, b) / (
                np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1)
            )
            ang.append(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))
        return float(np.min(ang))

    def geometry(self, t: int) -> "ElementGeometry":
        return ElementGeometry(
            index=t,
            h=float(self.diameters[t]),
            barycenter=self.barycenters[t].copy(),
            area=float(self.areas[t]),
            origin=self.vertices[self.triangles[t, 0]].copy(),
            jacobian=self.jacobians[t].copy(),
        )

    def element_patch(self, t: int) -> set[int]:
        """All triangles sharing at least one vertex with triangle ``t``."""
        touching = np.isin(self.triangles, self.triangles[t]).any(axis=1)
        return set(np.flatnonzero(touching).tolist())

    # --- checks -------------------------------------------------------

    def conformity_problems(self) -> list[str]:
        problems = []
        if self.n_triangles == 0:
            return ["mesh has no triangles"]
        t = self.triangles
        if t.min() < 0 or t.max() >= self.n_vertices:
            return ["triangle references a nonexistent vertex"]
        if (self.dets <= 0).any():
            problems.append(
                f"{int((self.dets <= 0).sum())} triangles with nonpositive signed area"
            )
        counts = self._edge_data[2]
        if (counts > 2).any():
            problems.append(f"{int((counts > 2).sum())} edges shared by >2 triangles")
        # hanging nodes: a vertex lying in the interior of some edge
        e = self.edges
        a, b = self.vertices[e[:, 0]], self.vertices[e[:, 1]]
        bnd = self.boundary_edge_mask
        if bnd.any():
            # only boundary edges can hide a hanging node in a
            # vertex-to-vertex consistent mesh
            ea, eb = a[bnd], b[bnd]
            d = eb - ea
            L2 = np.einsum("ij,ij->i", d, d)
            for j in np.flatnonzero(L2 > 0):
                rel = self.vertices - ea[j]
                s = rel @ d[j] / L2[j]
                dist = np.abs(rel[:, 0] * d[j, 1] - rel[:, 1] * d[j, 0]) / np.sqrt(L2[j])
                inner = (s > 1e-12) & (s < 1 - 1e-12) & (dist < 1e-12 * np.sqrt(L2[j]))
                if inner.any():
                    problems.append("hanging vertex on an edge (non-conforming)")
                    break
        used = np.zeros(self.n_vertices, dtype=bool)
        used[t.ravel()] = True
        if not used.all():
            problems.append(f"{int((~used).sum())} vertices not used by any triangle")
        return problems

    def is_conforming(self) -> bool:
        return not self.conformity_problems()

    def validate(self) -> "Triangulation":
        problems = self.conformity_problems()
        if problems:
            raise MeshError("; ".join(problems))
        return self


@dataclass(frozen=True)
class ElementGeometry:
    index: int
    h: float
    barycenter: np.ndarray
    area: float
    origin: np.ndarray
    jacobian: np.ndarray


def unit_square_initial() -> Triangulation:
    """(0,1)^2 split along both diagonals into four triangles."""
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]])
    triangles = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
    return Triangulation(vertices, triangles)


def refine_red(m: Triangulation) -> Triangulation:
    """Split every triangle into four by connecting edge midpoints."""
    edges = m.edges
    mid = 0.5 * (m.vertices[edges[:, 0]] + m.vertices[edges[:, 1]])
    vertices = np.vstack([m.vertices, mid])
    nv = m.n_vertices
    t = m.triangles
    te = m.triangle_edges + nv  # midpoint vertex of the edge opposite local vertex k
    m0, m1, m2 = te[:, 0], te[:, 1], te[:, 2]  # m0 on (v1,v2), m1 on (v2,v0), m2 on (v0,v1)
    children = np.stack(
        [
            np.stack([t[:, 0], m2, m1], axis=1),
            np.stack([m2, t[:, 1], m0], axis=1),
            np.stack([m1, m0, t[:, 2]], axis=1),
            np.stack([m0, m1, m2], axis=1),
        ],
        axis=1,
    ).reshape(-1, 3)

    bmask = m.boundary_edge_mask
    markers = np.zeros(len(vertices), dtype=np.int64)
    markers[:nv] = m.vertex_markers
    bidx = np.flatnonzero(bmask)
    markers[nv + bidx] = m.boundary_markers
    return Triangulation(vertices, children, markers, level=m.level + 1)


def refine_red_n(m: Triangulation, n: int) -> Triangulation:
    for _ in range(n):
        m = refine_red(m)
    return m


def unit_square(level: int) -> Triangulation:
    return refine_red_n(unit_square_initial(), level)


# --- plain-text node/ele format ----------------------------------------


def export_mesh(m: Triangulation, path) -> None:
    lines = [f"{m.n_vertices} 2 0 1"]
    for i, ((x, y), mk) in enumerate(zip(m.vertices, m.vertex_markers)):
        lines.append(f"{i} {float(x)!r} {float(y)!r} {int(mk)}")
    lines.append(f"{m.n_triangles} 3 0")
    for i, (a, b, c) in enumerate(m.triangles):
        lines.append(f"{i} {a} {b} {c}")
    Path(path).write_text("\n".join(lines) + "\n")


def _data_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def import_mesh(path, validate: bool = True) -> Triangulation:
    it = _data_lines(Path(path).read_text())

    def header(expected_dim: int, section: str):
        try:
            lineno, tok = next(it)
        except StopIteration:
            raise MeshParseError(f"missing {section} header") from None
        try:
            n, dim = int(tok[0]), int(tok[1])
        except (ValueError, IndexError):
            raise MeshParseError(f"bad {section} header", lineno) from None
        if dim != expected_dim:
            raise MeshParseError(f"{section} header: expected {expected_dim}, got {dim}", lineno)
        return n, lineno

    nv, _ = header(2, "node")
    vertices = np.empty((nv, 2))
    markers = np.zeros(nv, dtype=np.int64)
    for k in range(nv):
        try:
            lineno, tok = next(it)
        except StopIteration:
            raise MeshParseError(f"expected {nv} vertex lines, got {k}") from None
        try:
            idx = int(tok[0])
            vertices[k] = float(tok[1]), float(tok[2])
            markers[k] = int(tok[3]) if len(tok) > 3 else 0
        except (ValueError, IndexError):
            raise MeshParseError("malformed vertex line", lineno) from None
        if idx != k:
            raise MeshParseError(f"vertex id {idx}, expected {k}", lineno)

    nt, _ = header(3, "element")
    triangles = np.empty((nt, 3), dtype=np.int64)
    for k in range(nt):
        try:
            lineno, tok = next(it)
        except StopIteration:
            raise MeshParseError(f"expected {nt} element lines, got {k}") from None
        try:
            idx = int(tok[0])
            triangles[k] = int(tok[1]), int(tok[2]), int(tok[3])
        except (ValueError, IndexError):
            raise MeshParseError("malformed element line", lineno) from None
        if idx != k:
            raise MeshParseError(f"element id {idx}, expected {k}", lineno)
    for lineno, _ in it:
        raise MeshParseError("trailing data after element section", lineno)

    if nt == 0:
        raise MeshError("mesh has no triangles")
    if validate and (triangles.min() < 0 or triangles.max() >= nv):
        raise MeshError("triangle references a nonexistent vertex")
    mesh = Triangulation(vertices, triangles, markers)
    return mesh.validate() if validate else mesh
