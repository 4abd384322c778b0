"""Regenerate src/pxflow/data/triangle_rules.json from basix (Xiao-Gimbutas rules).

Run once; the package reads the frozen JSON and does not import basix.
"""
import json
import pathlib

import basix

out = {}
for degree in range(1, 13):
    pts, wts = basix.make_quadrature(basix.CellType.triangle, degree)
    out[str(degree)] = {
        "points": [[float(x), float(y)] for x, y in pts],
        "weights": [float(w) for w in wts],
    }

target = pathlib.Path(__file__).resolve().parents[1] / "src" / "pxflow" / "data" / "triangle_rules.json"
target.write_text(json.dumps(out, indent=1))
print("wrote", target)
