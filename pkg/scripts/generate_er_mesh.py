"""Generate the shipped electrode-domain mesh (src/pxflow/data/er_mesh.txt).

Domain: (-1,1)^2 minus the discs of radius 5/80 centred at (+-5/8, 0).
Force-equilibrium smoothing in the style of DistMesh (Persson & Strang),
graded towards the electrodes.  Run once; the package only reads the file.

    python scripts/generate_er_mesh.py [--h0 0.01] [--grade 0.2] [--hmax 0.034]
"""
import argparse
import pathlib

import numpy as np
from scipy.spatial import Delaunay

from pxflow.mesh import Triangulation, export_mesh

C = 5.0 / 8.0
R = 5.0 / 80.0


def dist_holes(p):
    d1 = np.hypot(p[:, 0] - C, p[:, 1]) - R
    d2 = np.hypot(p[:, 0] + C, p[:, 1]) - R
    return np.minimum(d1, d2)


def signed_distance(p):
    box = np.max(np.abs(p), axis=1) - 1.0
    return np.maximum(box, -dist_holes(p))


def size(p, h0, grade, hmax):
    return np.minimum(h0 + grade * np.maximum(dist_holes(p), 0.0), hmax)


def distmesh(h0, grade, hmax, seed=0, iters=400):
    rng = np.random.default_rng(seed)
    geps = 1e-3 * h0
    deps = np.sqrt(np.finfo(float).eps) * h0
    # hexagonal start grid at the finest spacing, thinned by the size function
    xs = np.arange(-1.0, 1.0 + h0, h0)
    ys = np.arange(-1.0, 1.0 + h0, h0 * np.sqrt(3) / 2)
    X, Y = np.meshgrid(xs, ys)
    X[1::2] += h0 / 2
    p = np.column_stack([X.ravel(), Y.ravel()])
    p = p[signed_distance(p) < geps]
    r0 = 1.0 / size(p, h0, grade, hmax) ** 2
    p = p[rng.random(len(p)) < r0 / r0.max()]
    fixed = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    n_ring = [int(np.ceil(2 * np.pi * R / h0)) for _ in range(2)]
    for (cx, n) in zip((C, -C), n_ring):
        t = np.linspace(0, 2 * np.pi, n, endpoint=False)
        fixed = np.vstack([fixed, np.column_stack([cx + R * np.cos(t), R * np.sin(t)])])
    p = np.vstack([fixed, p[np.min(np.linalg.norm(p[:, None] - fixed[None], axis=2), axis=1) > 0.5 * h0]])
    nfix = len(fixed)

    old = np.inf
    for _ in range(iters):
        if np.max(np.linalg.norm(p - old, axis=1)) > 0.1 * h0:
            old = p.copy()
            tri = Delaunay(p).simplices
            cent = p[tri].mean(axis=1)
            tri = tri[signed_distance(cent) < -geps]
            bars = np.sort(np.vstack([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [0, 2]]]), axis=1)
            bars = np.unique(bars, axis=0)
        vec = p[bars[:, 0]] - p[bars[:, 1]]
        L = np.linalg.norm(vec, axis=1)
        hb = size(0.5 * (p[bars[:, 0]] + p[bars[:, 1]]), h0, grade, hmax)
        L0 = hb * 1.2 * np.sqrt(np.sum(L**2) / np.sum(hb**2))
        F = np.maximum(L0 - L, 0.0)
        Fv = (F / L)[:, None] * vec
        Ft = np.zeros_like(p)
        np.add.at(Ft, bars[:, 0], Fv)
        np.add.at(Ft, bars[:, 1], -Fv)
        Ft[:nfix] = 0.0
        p = p + 0.2 * Ft
        d = signed_distance(p)
        out = d > 0
        if out.any():
            q = p[out]
            gx = (signed_distance(q + [deps, 0]) - d[out]) / deps
            gy = (signed_distance(q + [0, deps]) - d[out]) / deps
            p[out] = q - np.column_stack([d[out] * gx, d[out] * gy]) / (gx**2 + gy**2)[:, None]
        move = np.max(np.linalg.norm(0.2 * Ft[d < -geps], axis=1)) if (d < -geps).any() else 0.0
        if move < 1e-3 * h0:
            break

    tri = Delaunay(p).simplices
    tri = tri[signed_distance(p[tri].mean(axis=1)) < -geps]
    used = np.unique(tri)
    remap = -np.ones(len(p), dtype=np.int64)
    remap[used] = np.arange(len(used))
    p = p[used]
    tri = remap[tri]
    a, b, c = p[tri[:, 0]], p[tri[:, 1]], p[tri[:, 2]]
    det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
    tri[det < 0] = tri[det < 0][:, [0, 2, 1]]
    return p, tri


def markers(p, boundary):
    mk = np.zeros(len(p), dtype=np.int64)
    b = np.asarray(boundary)
    outer = np.max(np.abs(p[b]), axis=1) > 1.0 - 1e-9
    mk[b[outer]] = 1
    mk[b[~outer & (p[b, 0] < 0)]] = 2
    mk[b[~outer & (p[b, 0] > 0)]] = 3
    return mk


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--h0", type=float, default=0.01)
    ap.add_argument("--grade", type=float, default=0.2)
    ap.add_argument("--hmax", type=float, default=0.034)
    ap.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parents[1]
                                         / "src" / "pxflow" / "data" / "er_mesh.txt"))
    args = ap.parse_args()
    p, tri = distmesh(args.h0, args.grade, args.hmax)
    m = Triangulation(p, tri)
    m = Triangulation(p, tri, markers(p, m.boundary_vertices))
    m.validate()
    export_mesh(m, args.out)
    print(f"{m.n_vertices} vertices, {m.n_triangles} triangles, h={m.h:.4g}, "
          f"min angle {m.min_angle():.1f} deg -> {args.out}")


if __name__ == "__main__":
    main()
