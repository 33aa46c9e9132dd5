"""torqflow command line: oracle, torsion, flow and report."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import flow as F
from .config import RunConfig, load_config
from .errors import ConfigurationError, ConvexityLost, DomainError, SolverError, ValidationError
from .geometry import SupportProfile, boundary_points, read_profile_csv, write_profile_csv
from .mesh import triangulate
from .svg import line_plot, outline_plot, write_svg
from .torsion import (
    ball_oracle,
    dirichlet_identity_gap,
    boundary_hessian_checks,
    rigidity,
    rigidity_from_boundary,
    solve_torsion,
    write_field_csv,
    write_mesh_csv,
)

log = logging.getLogger("torqflow")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_SOLVER, EXIT_CONVEXITY, EXIT_NOT_CONVERGED = range(6)
EXIT_FOR_TERMINATION = {
    "converged": EXIT_OK,
    "max_steps": EXIT_NOT_CONVERGED,
    "monitor_violation": EXIT_NOT_CONVERGED,
    "convexity_lost": EXIT_CONVEXITY,
    "solver_failure": EXIT_SOLVER,
}
MONITOR_COLUMNS = ["step", "t", "dt", "lambda", "tq", "gamma", "residual", "min_h", "max_h", "min_b"]


class UsageError(Exception):
    pass


class ArtifactError(Exception):
    """A run directory is missing a file or holds a corrupt one."""


def _g(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def write_rows(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_g(x) for x in row])
    return path


def read_rows(path, header) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"missing file: {path.name}")
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != list(header):
            raise ValueError(f"expected header {','.join(header)}")
        out = []
        for r in rows[1:]:
            if len(r) != len(header):
                raise ValueError("ragged row")
            out.append({k: float(v) for k, v in zip(header, r)})
        return out
    except (ValueError, UnicodeDecodeError) as exc:
        raise ArtifactError(f"corrupt file: {path.name} ({exc})") from None


# -- oracle ---------------------------------------------------------------------------


def cmd_oracle(radius: float, dim: int, q: float, out_dir, samples: int = 101) -> dict:
    if not (radius > 0 and math.isfinite(radius)):
        raise UsageError("R must be a positive number")
    if dim < 2:
        raise UsageError("N (dimension) must be an integer >= 2")
    if not (q > 1 and math.isfinite(q)):
        raise UsageError("Q must exceed 1")
    ball = ball_oracle(radius, dim, q)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    r = np.linspace(0.0, radius, samples)
    u = np.asarray(ball.u(r), dtype=float)
    u[-1] = 0.0  # exact boundary condition, not the rounded closed form
    write_rows(out / "oracle_u.csv", ["r", "u"], zip(r, u))
    write_rows(
        out / "oracle_summary.csv",
        ["quantity", "value"],
        [("u0", ball.u0), ("grad_u_boundary", ball.grad_boundary), ("tq", ball.tq)],
    )
    print(f"u(0)        = {ball.u0:.15g}")
    print(f"|grad u|(R) = {ball.grad_boundary:.15g}")
    print(f"T_q         = {ball.tq:.15g}")
    return {"u0": ball.u0, "grad_boundary": ball.grad_boundary, "tq": ball.tq}


# -- torsion --------------------------------------------------------------------------


def cmd_torsion(cfg: RunConfig) -> int:
    p = cfg.profile()
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    mesh = triangulate(boundary_points(p, cfg.scheme).points, cfg.target_edge)
    recovery = cfg.flow.get("recovery", "flux")
    eps = cfg.flow.get("eps", 1e-8)
    try:
        fld = solve_torsion(mesh, cfg.q, eps=eps, recovery=recovery)
    except SolverError as exc:
        print(f"torsion solve failed: {exc} (residual {exc.residual:.3e} after {exc.iterations} iterations)")
        return EXIT_SOLVER
    tq_vol = rigidity(fld)
    tq_bdy = rigidity_from_boundary(p, fld, cfg.scheme) ** (cfg.q - 1.0)
    cross = abs(tq_bdy - tq_vol) / tq_vol
    gap = dirichlet_identity_gap(fld)
    chk = boundary_hessian_checks(fld, p, cfg.scheme)
    hess_i, hess_iii = chk.relative()

    write_field_csv(fld, out, p.thetas)
    write_mesh_csv(mesh, out)
    write_profile_csv(p, out / "profile.csv")
    write_rows(
        out / "boundary_hessian.csv",
        ["theta", "u_tt", "u_tn", "u_nn", "residual_i", "residual_ii", "residual_iii"],
        zip(p.thetas, chk.u_tt, chk.u_tn, chk.u_nn, chk.residual_i, chk.residual_ii, chk.residual_iii),
    )
    summary = [
        ("q", cfg.q),
        ("vertices", mesh.n_vertices),
        ("triangles", mesh.n_triangles),
        ("newton_iterations", fld.iterations),
        ("newton_residual", fld.residual),
        ("tq_volume", tq_vol),
        ("tq_boundary", tq_bdy),
        ("tq_relative_difference", cross),
        ("identity_gap", gap),
        ("hessian_i_max_relative", hess_i),
        ("hessian_iii_max_relative", hess_iii),
    ]
    write_rows(out / "torsion_summary.csv", ["quantity", "value"], summary)
    for k, v in summary:
        print(f"{k:24s} {_g(v) if isinstance(v, int) else f'{v:.10g}'}")

    c = cfg.checks
    failed = []
    if c.cross_check_tol is not None and not cross <= c.cross_check_tol:
        failed.append(f"T_q cross-check {cross:.3e} > {c.cross_check_tol}")
    if c.identity_tol is not None and not gap <= c.identity_tol:
        failed.append(f"identity gap {gap:.3e} > {c.identity_tol}")
    if c.hessian_tol is not None and not max(hess_i, hess_iii) <= c.hessian_tol:
        failed.append(f"boundary Hessian residual {max(hess_i, hess_iii):.3e} > {c.hessian_tol}")
    for msg in failed:
        print(f"check failed: {msg}")
    return EXIT_VALIDATION if failed else EXIT_OK


# -- flow -----------------------------------------------------------------------------


def _plots(rows, snapshots, final, out: Path, scheme: str = "fd") -> list[Path]:
    t = [r["t"] for r in rows]
    files = [
        write_svg(line_plot([("Gamma", t, [r["gamma"] for r in rows])], "Gamma versus t", "t", "Gamma"), out / "gamma.svg"),
        write_svg(line_plot([("T_q", t, [r["tq"] for r in rows])], "T_q versus t", "t", "T_q"), out / "tq.svg"),
        write_svg(
            line_plot([("residual", t, [r["residual"] for r in rows])], "Monge-Ampere residual", "t", "residual", logy=True),
            out / "residual.svg",
        ),
    ]
    picks = list(snapshots)
    if len(picks) > 7:
        idx = np.unique(np.linspace(0, len(picks) - 1, 7).round().astype(int))
        picks = [picks[i] for i in idx]
    if final is not None and (not picks or picks[-1][0] != final[0]):
        picks.append(final)
    curves = []
    for step, tt, prof in picks:
        try:
            curves.append((f"step {step} (t={tt:.3g})", boundary_points(prof, scheme).points))
        except DomainError:
            continue
    if curves:
        files.append(write_svg(outline_plot(curves, "Bodies along the flow"), out / "outlines.svg"))
    return files


def _summary_rows(rows, termination, extra=()):
    first, last = rows[0], rows[-1]
    return [
        ("termination", termination),
        ("steps", int(last["step"])),
        ("t_final", last["t"]),
        ("tq_initial", first["tq"]),
        ("tq_final", last["tq"]),
        ("gamma_initial", first["gamma"]),
        ("gamma_final", last["gamma"]),
        ("residual_initial", first["residual"]),
        ("residual_final", last["residual"]),
        *extra,
    ]


def cmd_flow(cfg: RunConfig) -> int:
    fc = cfg.flow_config()
    out = cfg.out_dir
    (out / "snapshots").mkdir(parents=True, exist_ok=True)
    for old in (out / "snapshots").glob("profile_*.csv"):
        old.unlink()
    extra = []
    if cfg.balance_translation:
        fc, bal = F.balanced_config(fc)
        print(f"initial body translated by ({bal.shift[0]:.6g}, {bal.shift[1]:.6g}), mismatch {bal.mismatch:.2e}")
        extra = [("shift_x", float(bal.shift[0])), ("shift_y", float(bal.shift[1]))]
    (out / "config.json").write_text(json.dumps(cfg.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_profile_csv(fc.initial, out / "initial_profile.csv")

    def progress(state, rep):
        if state.step % 25 == 0:
            log.info("step %d t=%.4g residual=%.3e gamma=%.8g", state.step, state.t, state.residual, state.gamma)

    try:
        traj = F.run(fc, snapshot_every=cfg.output.snapshot_every, callback=progress)
    except SolverError as exc:
        print(f"initial torsion solve failed: {exc}")
        return EXIT_SOLVER
    rows = [{k: r[k] for k in MONITOR_COLUMNS} for r in traj.log]
    write_rows(out / "monitor.csv", MONITOR_COLUMNS, ([r[k] for k in MONITOR_COLUMNS] for r in rows))
    for step, _, prof in traj.snapshots:
        write_profile_csv(prof, out / "snapshots" / f"profile_{step:05d}.csv")
    write_profile_csv(traj.final.profile, out / "final_profile.csv")
    flags = sum(not r.clear for r in traj.monitors)
    write_rows(out / "summary.csv", ["quantity", "value"], _summary_rows(rows, traj.termination, [*extra, ("monitor_flags", flags)]))
    if traj.message:
        (out / "diagnostics.txt").write_text(traj.message + "\n", encoding="utf-8")
    if cfg.output.plots:
        _plots(rows, traj.snapshots, (traj.final.step, traj.final.t, traj.final.profile), out, fc.scheme)
    last = rows[-1]
    print(f"termination {traj.termination} after {traj.steps} steps, t = {last['t']:.6g}, residual = {last['residual']:.3e}")
    if traj.message:
        print(traj.message)
    return EXIT_FOR_TERMINATION[traj.termination]


# -- report ---------------------------------------------------------------------------


@dataclass
class ReportBundle:
    summary: list
    files: list = field(default_factory=list)


def cmd_report(run_dir, out_dir=None) -> ReportBundle:
    """Rebuild the summary table and plots from a run directory without solving anything."""
    run = Path(run_dir)
    if not run.is_dir():
        raise ArtifactError(f"run directory not found: {run}")
    rows = read_rows(run / "monitor.csv", MONITOR_COLUMNS)
    if not rows:
        raise ArtifactError("corrupt file: monitor.csv (no rows)")
    summ_path = run / "summary.csv"
    if not summ_path.exists():
        raise ArtifactError("missing file: summary.csv")
    with summ_path.open(newline="", encoding="utf-8") as fh:
        recorded = {r[0]: r[1] for r in list(csv.reader(fh))[1:] if len(r) == 2}
    termination = recorded.get("termination", "unknown")
    scheme = "fd"
    if (run / "config.json").exists():
        try:
            scheme = json.loads((run / "config.json").read_text(encoding="utf-8")).get("scheme", "fd")
        except json.JSONDecodeError:
            raise ArtifactError("corrupt file: config.json") from None

    def load(path):
        try:
            return read_profile_csv(path)
        except (ConfigurationError, ValueError, IndexError) as exc:
            raise ArtifactError(f"corrupt file: {path.name} ({exc})") from None

    snaps = []
    for path in sorted((run / "snapshots").glob("profile_*.csv")):
        snaps.append((int(path.stem.split("_")[1]), path))
    step_t = {int(r["step"]): r["t"] for r in rows}
    snapshots = [(s, step_t.get(s, math.nan), load(p)) for s, p in snaps]
    if not (run / "final_profile.csv").exists():
        raise ArtifactError("missing file: final_profile.csv")
    final = (int(rows[-1]["step"]), rows[-1]["t"], load(run / "final_profile.csv"))

    out = Path(out_dir) if out_dir is not None else run / "report"
    out.mkdir(parents=True, exist_ok=True)
    summary = _summary_rows(rows, termination)
    lines = [f"{k:18s} {v if isinstance(v, str) else (str(v) if isinstance(v, int) else f'{v:.12g}')}" for k, v in summary]
    files = [run / "monitor.csv"]
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    files.append(out / "summary.txt")
    files += _plots(rows, snapshots, final, out, scheme)
    return ReportBundle(summary, files)


# -- entry point ----------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="torqflow", description="q-torsional rigidity Minkowski flow in the plane")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)
    o = sub.add_parser("oracle", help="closed-form ball solution")
    o.add_argument("R", type=float)
    o.add_argument("N", type=int, help="dimension")
    o.add_argument("Q", type=float)
    o.add_argument("--out", required=True)
    t = sub.add_parser("torsion", help="solve the torsion problem once and run the cross-checks")
    t.add_argument("config")
    f = sub.add_parser("flow", help="run the curvature flow")
    f.add_argument("config")
    r = sub.add_parser("report", help="summarise a run directory")
    r.add_argument("dir")
    r.add_argument("--out", default=None, help="output directory (default DIR/report)")
    return ap


def _threads() -> int:
    raw = os.environ.get("TORQFLOW_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"TORQFLOW_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError("TORQFLOW_THREADS must be a positive integer")
    return n


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # argparse: --help exits 0, bad usage exits 1
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    try:
        with threadpool_limits(limits=_threads()):
            if args.command == "oracle":
                cmd_oracle(args.R, args.N, args.Q, args.out)
                code = EXIT_OK
            elif args.command == "torsion":
                code = cmd_torsion(load_config(args.config))
            elif args.command == "flow":
                code = cmd_flow(load_config(args.config, require_flow=True))
            else:
                bundle = cmd_report(args.dir, args.out)
                for k, v in bundle.summary:
                    print(f"{k:18s} {v}")
                print("files:")
                for p in bundle.files:
                    print(f"  {p}")
                code = EXIT_OK
    except UsageError as exc:
        print(f"torqflow: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ArtifactError as exc:
        print(f"torqflow: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConfigurationError, ValidationError) as exc:
        print(f"torqflow: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConvexityLost as exc:
        print(f"torqflow: {exc}", file=sys.stderr)
        return EXIT_CONVEXITY
    except DomainError as exc:
        print(f"torqflow: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"torqflow: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    log.info("%s finished in %.2f s", args.command, time.perf_counter() - started)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
