"""Command-line front end: single solves, benchmark ladders, debug dumps.

Exit codes: 0 success, 1 configuration or I/O error, 2 solver
non-convergence. All output files are written atomically (temp + rename).
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import io
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .assembly import BoundarySpec, FaceCondition
from .driver import (
    DriverError,
    OracleRefusedError,
    SolveConfig,
    field_on_grid,
    full_grid_reference,
    solve_poisson,
)
from .geometry import (
    GEOMETRY_NAMES,
    GeometryError,
    make_geometry,
    patch_from_json,
    patch_to_json,
)
from .splines import Basis1D, KnotVector, SplineError, tabulate
from .tensor_train import load_tt, tt_info

CSV_COLUMNS = [
    "geometry",
    "p",
    "elems",
    "dofs",
    "l2_error",
    "cr_K",
    "cr_f",
    "cr_u",
    "t_assemble_s",
    "t_solve_s",
    "residual",
]
TIMING_COLUMNS = {"t_assemble_s", "t_solve_s"}


class ConfigError(ValueError):
    """Config file violates the documented schema."""


# ---------------------------------------------------------------------------
# strict config parsing

_RUN_KEYS = {
    "geometry",
    "geometry_params",
    "degree",
    "elements",
    "eps_cross",
    "eps_solve",
    "eps_round",
    "n_gauss",
    "rank_cap",
    "bc",
    "source",
    "analytic",
    "seed",
    "solver",
    "label",
}
_SOLVE_FILE_KEYS = {"output_dir", "seed", "runs"}
_BENCH_FILE_KEYS = {
    "output_dir",
    "seed",
    "degree",
    "elements",
    "geometries",
    "source",
    "eps_cross",
    "eps_solve",
    "eps_round",
    "rank_cap",
    "crossover",
}
_CROSSOVER_KEYS = {"geometry", "geometry_params", "degree", "elements", "source"}


def _reject_unknown(doc: dict, allowed: set, where: str):
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _parse_bc(doc) -> BoundarySpec:
    if not isinstance(doc, dict) or set(doc) - {"faces"}:
        raise ConfigError('bc must be {"faces": {...}}')
    faces = {}
    for key, spec in doc.get("faces", {}).items():
        try:
            axis_s, side_s = key.split(":")
            axis, side = int(axis_s), int(side_s)
        except ValueError as exc:
            raise ConfigError(f'bad face key {key!r}; use "axis:side"') from exc
        _reject_unknown(spec, {"type", "value"}, f"bc face {key}")
        kind = spec.get("type")
        if kind == "dirichlet":
            faces[(axis, side)] = FaceCondition("dirichlet", spec.get("value", 0.0))
        elif kind == "natural":
            if "value" in spec:
                raise ConfigError("natural faces take no value")
            faces[(axis, side)] = FaceCondition("natural")
        else:
            raise ConfigError(f"face type must be dirichlet or natural, got {kind!r}")
    try:
        return BoundarySpec(faces)
    except Exception as exc:
        raise ConfigError(str(exc)) from exc


def parse_run(doc: dict, default_seed: int | None = None) -> tuple[SolveConfig, str | None]:
    if not isinstance(doc, dict):
        raise ConfigError("each run must be an object")
    _reject_unknown(doc, _RUN_KEYS, "run")
    if "geometry" not in doc:
        raise ConfigError("run is missing the geometry name")
    kwargs = {k: v for k, v in doc.items() if k in _RUN_KEYS - {"bc", "label"}}
    if "bc" in doc:
        kwargs["bc"] = _parse_bc(doc["bc"])
    if default_seed is not None and "seed" not in doc:
        kwargs["seed"] = default_seed
    try:
        cfg = SolveConfig(**kwargs)
    except (DriverError, GeometryError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return cfg, doc.get("label")


def load_solve_file(path) -> tuple[list, Path, int]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    _reject_unknown(doc, _SOLVE_FILE_KEYS, "experiment file")
    if "runs" not in doc or not isinstance(doc["runs"], list) or not doc["runs"]:
        raise ConfigError("experiment file needs a non-empty runs list")
    seed = doc.get("seed", 0)
    runs = [parse_run(r, default_seed=seed) for r in doc["runs"]]
    return runs, Path(doc.get("output_dir", ".")), seed


# ---------------------------------------------------------------------------
# output helpers

def _atomic_write(path: Path, data: str | bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    with tempfile.NamedTemporaryFile(
        mode, dir=path.parent, prefix=f".{path.name}.", delete=False
    ) as fh:
        fh.write(data)
        tmp = fh.name
    os.replace(tmp, path)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".10g")
    return str(value)


def _compact(values) -> str:
    vals = list(values)
    return _fmt(vals[0]) if len(set(vals)) == 1 else "x".join(map(_fmt, vals))


def report_csv_row(rep, status: str | None = None) -> dict:
    row = {
        "geometry": rep.config.geometry,
        "p": _compact(rep.config.degree),
        "elems": _compact(rep.config.elements),
        "dofs": rep.dofs,
        "l2_error": rep.l2_error,
        "cr_K": rep.compression_K,
        "cr_f": rep.compression_f,
        "cr_u": rep.compression_u,
        "t_assemble_s": rep.timings.get("t_assemble_K_s", 0.0)
        + rep.timings.get("t_assemble_f_s", 0.0),
        "t_solve_s": rep.timings.get("t_solve_s", 0.0),
        "residual": rep.residual,
    }
    if status is not None:
        row["status"] = status
    return row


def write_csv(path: Path, rows: list, columns=None) -> None:
    columns = columns or (
        CSV_COLUMNS + (["status"] if any("status" in r for r in rows) else [])
    )
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row.get(k)) for k in columns})
    _atomic_write(path, buf.getvalue())


def _run_label(cfg: SolveConfig, label: str | None, used: set) -> str:
    base = label or (
        f"{cfg.geometry}_p{_compact(cfg.degree)}_e{_compact(cfg.elements)}"
    )
    name = base
    k = 1
    while name in used:
        name = f"{base}_{k}"
        k += 1
    used.add(name)
    return name


def _dump_field(cfg: SolveConfig, rep, m: int, path: Path) -> None:
    from .assembly import build_quadrature
    from .driver import solution_basis

    patch = make_geometry(cfg.geometry, cfg.geometry_params)
    bases = tuple(
        solution_basis(patch.bases[d], cfg.degree[d], cfg.elements[d])
        for d in range(3)
    )
    disc = build_quadrature(bases, cfg.n_gauss)
    ax = np.linspace(0.0, 1.0, m)
    vals = field_on_grid(disc, rep.u, [ax, ax, ax])
    from .geometry import GridEvaluator

    ev = GridEvaluator(patch, [ax, ax, ax])
    order = np.stack(
        [g.ravel(order="F") for g in np.meshgrid(*[np.arange(m)] * 3, indexing="ij")],
        axis=1,
    )
    pts = ev.points(order)
    u = vals.ravel(order="F")
    lines = [
        f"{x:.17g} {y:.17g} {z:.17g} {v:.17g}" for (x, y, z), v in zip(pts, u)
    ]
    _atomic_write(path, "\n".join(lines) + "\n")


def _execute_runs(runs, out_dir: Path, jobs: int, field_samples: int):
    """Run configs (optionally in parallel), write reports, return rows."""

    def one(item):
        cfg, label = item
        return solve_poisson(cfg)

    reports = []
    if jobs > 1 and len(runs) > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_solve_for_pool, [cfg for cfg, _ in runs]))
    else:
        reports = [one(item) for item in runs]

    used = set()
    rows = []
    ok_all = True
    for (cfg, label), rep in zip(runs, reports):
        name = _run_label(cfg, label, used)
        _atomic_write(out_dir / f"{name}.json", rep.to_json())
        if field_samples > 0:
            _dump_field(cfg, rep, field_samples, out_dir / f"{name}_field.txt")
        rows.append(report_csv_row(rep))
        ok_all = ok_all and rep.solver_converged
    return rows, reports, ok_all


def _solve_for_pool(cfg):
    return solve_poisson(cfg)


# ---------------------------------------------------------------------------
# subcommands

def cmd_solve(args) -> int:
    runs, out_dir, _ = load_solve_file(args.config)
    if args.out:
        out_dir = Path(args.out)
    if args.seed is not None:
        for cfg, _ in runs:
            cfg.seed = args.seed
    for cfg, _ in runs:
        if args.eps_cross is not None:
            cfg.eps_cross = args.eps_cross
        if args.eps_solve is not None:
            cfg.eps_solve = args.eps_solve
    rows, reports, ok = _execute_runs(runs, out_dir, args.jobs, args.field_samples)
    write_csv(out_dir / "experiment.csv", rows)
    return 0 if ok else 2


def load_bench_file(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    _reject_unknown(doc, _BENCH_FILE_KEYS, "bench file")
    doc.setdefault("output_dir", ".")
    doc.setdefault("seed", 0)
    doc.setdefault("degree", 2)
    doc.setdefault("elements", [8])
    doc.setdefault("geometries", [g for g in GEOMETRY_NAMES if g != "unit_cube"])
    doc.setdefault("source", "sin_pi_xyz")
    for g in doc["geometries"]:
        if g not in GEOMETRY_NAMES:
            raise ConfigError(f"unknown geometry {g!r}")
    if np.isscalar(doc["elements"]):
        doc["elements"] = [doc["elements"]]
    if "crossover" in doc:
        _reject_unknown(doc["crossover"], _CROSSOVER_KEYS, "crossover")
    return doc


def cmd_bench(args) -> int:
    doc = load_bench_file(args.config)
    out_dir = Path(args.out) if args.out else Path(doc["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    eps = {
        k: doc[k] for k in ("eps_cross", "eps_solve", "eps_round") if k in doc
    }
    rows = []
    n_ok = 0
    for geometry in doc["geometries"]:
        for elems in doc["elements"]:
            run = {
                "geometry": geometry,
                "degree": doc["degree"],
                "elements": elems,
                "source": doc["source"],
                "seed": doc["seed"],
                **eps,
            }
            if "rank_cap" in doc:
                run["rank_cap"] = doc["rank_cap"]
            try:
                cfg, _ = parse_run(run)
                rep = solve_poisson(cfg)
                status = "ok" if rep.solver_converged else "no-convergence"
                rows.append(report_csv_row(rep, status=status))
                _atomic_write(
                    out_dir / f"bench_{geometry}_e{elems}.json", rep.to_json()
                )
                n_ok += status == "ok"
            except Exception as exc:  # recorded, not fatal: bench carries on
                rows.append(
                    {
                        "geometry": geometry,
                        "p": _compact((doc["degree"],)),
                        "elems": elems,
                        "status": f"failed: {type(exc).__name__}",
                    }
                )
    write_csv(out_dir / "bench.csv", rows, CSV_COLUMNS + ["status"])

    if "crossover" in doc:
        summary = _crossover_study(doc, out_dir)
        _atomic_write(out_dir / "crossover.json", json.dumps(summary, indent=2))
    return 0 if n_ok >= 1 else 2


def _crossover_study(doc, out_dir) -> dict:
    import time

    cdoc = dict(doc["crossover"])
    ladder = cdoc.pop("elements", [4, 8, 16])
    if np.isscalar(ladder):
        ladder = [ladder]
    points = []
    largest = None
    for elems in ladder:
        run = {"elements": elems, "seed": doc["seed"], **cdoc}
        cfg, _ = parse_run(run)
        t0 = time.perf_counter()
        rep = solve_poisson(cfg)
        tt_time = time.perf_counter() - t0
        entry = {
            "elements": elems,
            "dofs": rep.dofs,
            "tt_time_s": tt_time,
            "tt_residual": rep.residual,
        }
        try:
            t0 = time.perf_counter()
            ref = full_grid_reference(cfg)
            entry["full_grid_time_s"] = time.perf_counter() - t0
            entry["status"] = "ok"
            diff = np.linalg.norm(rep.u.full().ravel() - ref.u)
            entry["u_rel_diff"] = float(diff / np.linalg.norm(ref.u))
            largest = entry
        except OracleRefusedError:
            entry["status"] = "oracle-refused"
        points.append(entry)
    summary = {"ladder": points}
    if largest is not None:
        summary["largest_oracle_dofs"] = largest["dofs"]
        summary["time_ratio_full_over_tt"] = (
            largest["full_grid_time_s"] / max(largest["tt_time_s"], 1e-9)
        )
    return summary


def cmd_dump(args) -> int:
    if args.what == "basis":
        if not args.knots:
            raise ConfigError("dump basis requires --knots")
        knots = np.array([float(x) for x in args.knots.split(",")])
        weights = None
        if args.weights:
            weights = np.array([float(x) for x in args.weights.split(",")])
        basis = Basis1D(KnotVector(knots, args.degree), weights)
        xs = np.linspace(knots[0], knots[-1], args.samples)
        V, _ = tabulate(basis, xs)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["xi"] + [f"N_{i}" for i in range(basis.n_basis)])
        for x, row in zip(xs, V):
            writer.writerow([_fmt(float(x))] + [_fmt(float(v)) for v in row])
        out = buf.getvalue()
    elif args.what == "geometry":
        if not args.name:
            raise ConfigError("dump geometry requires --name")
        params = json.loads(args.params) if args.params else {}
        out = patch_to_json(make_geometry(args.name, params))
    else:  # tt-info
        if not args.path:
            raise ConfigError("dump tt-info requires --path")
        out = json.dumps(tt_info(load_tt(args.path)), indent=2)
    if args.out:
        _atomic_write(Path(args.out), out)
    else:
        sys.stdout.write(out if out.endswith("\n") else out + "\n")
    return 0


# ---------------------------------------------------------------------------
# artifact schema checks

def _check_report(doc: dict):
    required = {
        "geometry": str,
        "degree": list,
        "elements": list,
        "seed": int,
        "dofs": int,
        "mode_sizes": list,
        "residual": float,
        "solver_converged": bool,
        "cross_converged": bool,
        "ranks_K": list,
        "ranks_f": list,
        "ranks_u": list,
        "compression_K": (int, float),
        "compression_f": (int, float),
        "compression_u": (int, float),
        "sweeps": int,
        "timings": dict,
    }
    for key, typ in required.items():
        if key not in doc:
            raise ConfigError(f"report is missing {key!r}")
        if not isinstance(doc[key], typ):
            raise ConfigError(f"report field {key!r} has the wrong type")
    if doc.get("l2_error") is not None and not isinstance(
        doc["l2_error"], (int, float)
    ):
        raise ConfigError("l2_error must be a number or null")


def _check_csv(text: str):
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise ConfigError("empty CSV")
    if header[: len(CSV_COLUMNS)] != CSV_COLUMNS or (
        len(header) > len(CSV_COLUMNS) and header[len(CSV_COLUMNS):] != ["status"]
    ):
        raise ConfigError(f"unexpected CSV header {header}")
    for row in reader:
        if len(row) != len(header):
            raise ConfigError("CSV row width mismatch")
        for col, val in zip(header, row):
            if col in ("dofs",) and val and "failed" not in row[-1]:
                int(val)
            elif col in ("l2_error", "cr_K", "cr_f", "cr_u", "residual") and val:
                float(val)


def _check_field(text: str):
    for ln, line in enumerate(text.strip().splitlines(), 1):
        parts = line.split()
        if len(parts) != 4:
            raise ConfigError(f"field dump line {ln} does not have 4 columns")
        for p in parts:
            float(p)


def check_artifact(path) -> str:
    """Validate one artifact; returns its detected kind or raises ConfigError."""
    path = Path(path)
    if path.suffix == ".csv":
        _check_csv(path.read_text())
        return "csv"
    if path.suffix == ".tt":
        load_tt(path)
        return "tt-container"
    if path.suffix == ".txt":
        _check_field(path.read_text())
        return "field-dump"
    if path.suffix == ".json":
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from exc
        if isinstance(doc, dict) and "runs" in doc:
            load_solve_file(path)
            return "experiment-config"
        if isinstance(doc, dict) and "control_points" in doc:
            try:
                patch_from_json(path.read_text())
            except (GeometryError, SplineError, KeyError) as exc:
                raise ConfigError(f"invalid patch JSON: {exc}") from exc
            return "geometry-patch"
        if isinstance(doc, dict) and "ladder" in doc:
            return "crossover-summary"
        if isinstance(doc, dict) and "residual" in doc:
            _check_report(doc)
            return "solve-report"
        if isinstance(doc, dict) and (
            "geometries" in doc or "crossover" in doc or "elements" in doc
        ):
            load_bench_file(path)
            return "bench-config"
        raise ConfigError("unrecognized JSON artifact")
    raise ConfigError(f"unknown artifact type for {path.name}")


def cmd_check(args) -> int:
    kind = check_artifact(args.path)
    print(f"{args.path}: valid {kind}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ttiga",
        description="Tensor-train isogeometric Poisson solver",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run the solves listed in a config file")
    p.add_argument("--config", required=True, help="experiment JSON file")
    p.add_argument("--out", help="output directory (overrides the file)")
    p.add_argument("--seed", type=int, help="override every run's seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel runs")
    p.add_argument("--field-samples", type=int, default=0, metavar="M",
                   help="dump the field on an M^3 parametric grid (0 = off)")
    p.add_argument("--eps-cross", type=float, help="override cross tolerance")
    p.add_argument("--eps-solve", type=float, help="override solver tolerance")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("bench", help="six-geometry ladder and crossover study")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("dump", help="debug dumps: basis CSV, geometry JSON, tt-info")
    p.add_argument("what", choices=["basis", "geometry", "tt-info"])
    p.add_argument("--knots", help="comma-separated knot vector (basis)")
    p.add_argument("--degree", type=int, default=2, help="basis degree")
    p.add_argument("--weights", help="comma-separated weights (basis)")
    p.add_argument("--samples", type=int, default=201, help="basis sample count")
    p.add_argument("--name", help="geometry name")
    p.add_argument("--params", help="geometry params as JSON")
    p.add_argument("--path", help="TT container path (tt-info)")
    p.add_argument("--out", help="write to file instead of stdout")
    p.set_defaults(fn=cmd_dump)

    p = sub.add_parser("check", help="validate an artifact against its schema")
    p.add_argument("path")
    p.set_defaults(fn=cmd_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, DriverError, GeometryError, SplineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
