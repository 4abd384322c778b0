"""Command-line entry point: ``pxflow converge | er-demo | mesh-info``.

Exit codes: 0 success, 1 numerical failure (or a non-conforming mesh for
``mesh-info``), 2 usage or input error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .experiments import ManufacturedCase, run_convergence_study

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
ELEMENTS = ("mini", "taylor-hood")
DESK_LEVELS = 6
CSV_COLUMNS = ("level", "h", "e_v", "eoc_v", "e_q", "eoc_q", "theory_v", "theory_q")

log = logging.getLogger("pxflow")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class StudyConfig:
    element: str
    p_minus: float
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    case: int = 1
    levels: int = DESK_LEVELS
    delta: float = 1e-5
    mu0: float = 0.5
    output_dir: str = "."

    def validate(self, allow_large: bool = False) -> "StudyConfig":
        if self.element not in ELEMENTS:
            raise UsageError(f"unknown element {self.element!r} (choose from {', '.join(ELEMENTS)})")
        if self.case not in (1, 2):
            raise UsageError(f"case must be 1 or 2, got {self.case}")
        for name in ("alpha", "beta", "gamma"):
            val = getattr(self, name)
            if not (math.isfinite(val) and 0 < val <= 1):
                raise UsageError(f"{name} must lie in (0, 1], got {val}")
        if not (math.isfinite(self.p_minus) and self.p_minus > 1):
            raise UsageError(f"p-minus must be a finite number > 1, got {self.p_minus}")
        if not (math.isfinite(self.delta) and self.delta >= 0):
            raise UsageError(f"delta must be >= 0, got {self.delta}")
        if not (math.isfinite(self.mu0) and self.mu0 > 0):
            raise UsageError(f"mu0 must be > 0, got {self.mu0}")
        if self.levels < 0:
            raise UsageError(f"levels must be >= 0, got {self.levels}")
        if self.levels > DESK_LEVELS and not allow_large:
            raise UsageError(f"levels > {DESK_LEVELS} need --full")
        return self

    @property
    def case_data(self) -> ManufacturedCase:
        return ManufacturedCase(self.alpha, self.beta, self.gamma, self.p_minus, self.case,
                                delta=self.delta, mu0=self.mu0)

    @property
    def stem(self) -> str:
        return (f"converge_{self.element}_case{self.case}_p{self.p_minus:g}"
                f"_a{self.alpha:g}_b{self.beta:g}_g{self.gamma:g}")


# --- key=value config files -----------------------------------------------

_KEYS = {
    "element": str, "p_minus": float, "alpha": float, "beta": float, "gamma": float,
    "case": int, "levels": int, "delta": float, "mu0": float, "out": str,
}


def read_config_file(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment, dashes in keys are allowed."""
    out = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "p_minus":
            try:
                out[key] = [float(v) for v in value.replace(",", " ").split()]
            except ValueError:
                raise UsageError(f"{path}:{lineno}: bad value for p_minus: {value!r}") from None
            continue
        if key not in _KEYS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _KEYS[key](value)
        except ValueError:
            raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


# --- output ---------------------------------------------------------------


def _num(x) -> str:
    return "" if x is None else format(float(x), ".17g")


def csv_rows(result):
    for rec in result.records:
        yield [str(rec.level), _num(rec.h), _num(rec.e_v), _num(rec.eoc_v), _num(rec.e_q),
               _num(rec.eoc_q), _num(result.theory_v), _num(result.theory_q)]


def write_csv(path, result) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(csv_rows(result))


def format_table(cfg: StudyConfig, result) -> str:
    """Console table: one row per level, EOCs next to the errors, theory last."""
    def f(x, spec):
        return "-" if x is None else format(x, spec)

    head = (f"{cfg.element}, case {cfg.case}, p- = {cfg.p_minus:g}, "
            f"alpha = {cfg.alpha:g}, beta = {cfg.beta:g}, gamma = {cfg.gamma:g}")
    lines = [head, f"{'i':>3} {'h':>10} {'e_v':>11} {'EOC_v':>7} {'e_q':>11} {'EOC_q':>7}"]
    for rec in result.records:
        lines.append(f"{rec.level:>3} {rec.h:>10.4e} {rec.e_v:>11.4e} {f(rec.eoc_v, '.3f'):>7} "
                     f"{rec.e_q:>11.4e} {f(rec.eoc_q, '.3f'):>7}")
    lines.append(f"{'theory':>26} {result.theory_v:>7.3f} {'':>11} {result.theory_q:>7.3f}")
    if result.failed:
        lines.append(f"FAILED: {result.message}")
    return "\n".join(lines)


def _run_one(cfg: StudyConfig):
    out = Path(cfg.output_dir)
    path = out / f"{cfg.stem}.csv"
    result = run_convergence_study(cfg.case_data, cfg.element, cfg.levels)
    write_csv(path, result)
    return cfg, result, path


# --- sub-commands ---------------------------------------------------------


def cmd_converge(args) -> int:
    values = {}
    if args.config:
        values.update(read_config_file(args.config))
    for key in _KEYS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if "element" not in values:
        raise UsageError("--element is required")
    if "p_minus" not in values:
        raise UsageError("--p-minus is required")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    p_list = values.pop("p_minus")
    p_list = p_list if isinstance(p_list, list) else [p_list]
    out = values.pop("out", ".")
    configs = [StudyConfig(p_minus=float(p), output_dir=out, **values).validate(args.full)
               for p in p_list]
    Path(out).mkdir(parents=True, exist_ok=True)

    if args.jobs > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=min(args.jobs, len(configs))) as pool:
            done = list(pool.map(_run_one, configs))
    else:
        done = [_run_one(c) for c in configs]

    status = EXIT_OK
    for cfg, result, path in done:
        print(format_table(cfg, result))
        print(f"wrote {path}")
        if result.failed:
            status = EXIT_FAILURE
    return status


def cmd_er_demo(args) -> int:
    from .experiments import run_er_demo

    cases = (False,) if args.no_field else (True, False)
    try:
        runs = run_er_demo(args.mesh, args.out, cases=cases)
    except (OSError, ValueError) as exc:  # unreadable or unusable mesh
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    status = EXIT_OK
    for flag, run in runs.items():
        label = "field" if flag else "no field"
        p_lo, p_hi = float(run.p_h.min()), float(run.p_h.max())
        p_txt = f"p = {p_lo:g}" if p_lo == p_hi else f"p in [{p_lo:.4f}, {p_hi:.4f}]"
        print(f"{label:>8}: {p_txt}, max|v_h| = {run.max_speed:.6e}, "
              f"Newton {run.report.iterations} it ({run.report.message})")
        if not run.report.converged:
            status = EXIT_FAILURE
    if True in runs and False in runs:
        slower = runs[True].max_speed < runs[False].max_speed
        print(f"max|v_h| field {runs[True].max_speed:.6e} vs no field "
              f"{runs[False].max_speed:.6e}: {'slower' if slower else 'NOT slower'} with field")
    if args.out:
        print(f"VTK files written to {args.out}")
    return status


def cmd_mesh_info(args) -> int:
    from .mesh import MeshError, import_mesh

    try:
        mesh = import_mesh(args.file, validate=False)
    except (OSError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    problems = mesh.conformity_problems()
    print(f"file:      {args.file}")
    print(f"vertices:  {mesh.n_vertices}")
    print(f"triangles: {mesh.n_triangles}")
    try:
        print(f"max h:     {mesh.h:.6g}")
        print(f"min angle: {mesh.min_angle():.4g} deg")
    except (IndexError, ValueError, FloatingPointError):
        print("max h:     n/a")
        print("min angle: n/a")
    if problems:
        print("conformity: FAIL")
        for p in problems:
            print(f"  - {p}")
        return EXIT_FAILURE
    print("conformity: OK")
    return EXIT_OK


# --- parser ---------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="pxflow", description="p(x)-Navier-Stokes finite element studies")
    ap.add_argument("-v", "--verbose", action="count", default=0,
                    help="log progress (-v) or Newton iterations (-vv)")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("converge", help="manufactured-solution convergence study")
    c.add_argument("--element", choices=ELEMENTS)
    c.add_argument("--p-minus", dest="p_minus", type=float, nargs="+",
                   help="one or more lower exponents (one study each)")
    c.add_argument("--alpha", type=float)
    c.add_argument("--beta", type=float)
    c.add_argument("--gamma", type=float)
    c.add_argument("--case", type=int, choices=(1, 2))
    c.add_argument("--levels", type=int, help=f"finest level (default {DESK_LEVELS})")
    c.add_argument("--delta", type=float)
    c.add_argument("--mu0", type=float)
    c.add_argument("--out", help="output directory for the CSV files")
    c.add_argument("--config", help="key=value file; flags override its entries")
    c.add_argument("--jobs", type=int, default=1, help="parallel studies (one per p-minus)")
    c.add_argument("--full", action="store_true", help=f"allow levels > {DESK_LEVELS}")
    c.set_defaults(func=cmd_converge)

    e = sub.add_parser("er-demo", help="electro-rheological example")
    e.add_argument("--no-field", action="store_true", help="only the run without field")
    e.add_argument("--mesh", help="mesh file (default: bundled asset)")
    e.add_argument("--out", help="directory for the VTK files")
    e.set_defaults(func=cmd_er_demo)

    m = sub.add_parser("mesh-info", help="statistics and conformity check of a mesh file")
    m.add_argument("file")
    m.set_defaults(func=cmd_mesh_info)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        ap.print_usage(sys.stderr)
        print(f"pxflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
