"""Legacy ASCII VTK (version 2.0) unstructured-grid output of mixed solutions.

Fields are written at mesh vertices, where every supported velocity and
pressure space is nodal; the frozen exponent goes out as cell data.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

VTK_TRIANGLE = 5


def write_vtk(path, pair, solution, p_h=None, fields=("velocity", "pressure"),
              title="pxflow solution") -> Path:
    mesh = pair.mesh
    nv = mesh.n_vertices
    path = Path(path)
    out = ["# vtk DataFile Version 2.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    out.append(f"POINTS {nv} double")
    out.extend(f"{float(x)!r} {float(y)!r} 0.0" for x, y in mesh.vertices)
    nt = mesh.n_triangles
    out.append(f"CELLS {nt} {4 * nt}")
    out.extend(f"3 {a} {b} {c}" for a, b, c in mesh.triangles)
    out.append(f"CELL_TYPES {nt}")
    out.extend([str(VTK_TRIANGLE)] * nt)

    out.append(f"POINT_DATA {nv}")
    if "velocity" in fields:
        v = np.asarray(solution.velocity).reshape(2, -1)[:, :nv]
        out.append("VECTORS velocity double")
        out.extend(f"{float(a)!r} {float(b)!r} 0.0" for a, b in v.T)
    if "pressure" in fields:
        q = np.asarray(solution.pressure)[:nv]
        out.append("SCALARS pressure double 1")
        out.append("LOOKUP_TABLE default")
        out.extend(repr(float(s)) for s in q)
    if p_h is not None:
        out.append(f"CELL_DATA {nt}")
        out.append("SCALARS p_h double 1")
        out.append("LOOKUP_TABLE default")
        out.extend(repr(float(s)) for s in np.broadcast_to(p_h, (nt,)))
    path.write_text("\n".join(out) + "\n")
    return path


class VTKFormatError(ValueError):
    pass


def read_vtk(path) -> dict:
    """Parse files written by :func:`write_vtk`.

    Returns a dict with ``points`` (N, 3), ``cells`` (M, 3), ``point_data``
    and ``cell_data`` (name -> array).
    """
    tokens = Path(path).read_text().split("\n")
    if not tokens[0].startswith("# vtk DataFile Version"):
        raise VTKFormatError("missing VTK header")
    if tokens[2].strip() != "ASCII":
        raise VTKFormatError("only ASCII files are supported")
    words = " ".join(tokens[3:]).split()
    pos = 0

    def take(n):
        nonlocal pos
        chunk = words[pos : pos + n]
        if len(chunk) < n:
            raise VTKFormatError("unexpected end of file")
        pos += n
        return chunk

    result = {"point_data": {}, "cell_data": {}}
    section = None
    count = {"POINT_DATA": 0, "CELL_DATA": 0}
    while pos < len(words):
        key = take(1)[0]
        if key == "DATASET":
            if take(1)[0] != "UNSTRUCTURED_GRID":
                raise VTKFormatError("only UNSTRUCTURED_GRID is supported")
        elif key == "POINTS":
            n, _ = take(2)
            result["points"] = np.array(take(3 * int(n)), dtype=float).reshape(-1, 3)
        elif key == "CELLS":
            n, size = map(int, take(2))
            raw = np.array(take(size), dtype=np.int64).reshape(n, -1)
            if (raw[:, 0] != 3).any():
                raise VTKFormatError("only triangle cells are supported")
            result["cells"] = raw[:, 1:]
        elif key == "CELL_TYPES":
            n = int(take(1)[0])
            result["cell_types"] = np.array(take(n), dtype=np.int64)
        elif key in count:
            section = "point_data" if key == "POINT_DATA" else "cell_data"
            count[key] = int(take(1)[0])
        elif key in ("VECTORS", "SCALARS"):
            if section is None:
                raise VTKFormatError(f"{key} outside a data section")
            name, _dtype = take(2)
            n = count["POINT_DATA" if section == "point_data" else "CELL_DATA"]
            if key == "VECTORS":
                result[section][name] = np.array(take(3 * n), dtype=float).reshape(n, 3)
            else:
                if words[pos] not in ("LOOKUP_TABLE",):
                    take(1)  # component count
                take(2)  # LOOKUP_TABLE default
                result[section][name] = np.array(take(n), dtype=float)
        else:
            raise VTKFormatError(f"unexpected keyword {key!r}")
    return result
