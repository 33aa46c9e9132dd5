"""Mesh-refinement study of the torsion solver on the unit disk and the (1.2, 0.8) ellipse.

Writes convergence.csv and two SVG plots to the output directory (default
./study).  For the disk, errors are against the closed-form ball solution;
for the ellipse only the identity gap and the volume/boundary agreement of
T_q are available.

    python scripts/convergence_study.py --out study
"""

import argparse
import math
import time
from pathlib import Path

import numpy as np

from torqflow.cli import write_rows
from torqflow.geometry import boundary_points, disk, ellipse
from torqflow.mesh import triangulate
from torqflow.svg import line_plot, write_svg
from torqflow.torsion import ball_oracle, dirichlet_identity_gap, rigidity, rigidity_from_boundary, solve_torsion

LEVELS = ((64, 0.1), (128, 0.05), (256, 0.025), (512, 0.0125))


def study(qs, levels=LEVELS):
    rows = []
    for body in ("disk", "ellipse"):
        for q in qs:
            ball = ball_oracle(1.0, 2, q)
            for n, target in levels:
                p = disk(1.0, n) if body == "disk" else ellipse(1.2, 0.8, n)
                t0 = time.perf_counter()
                mesh = triangulate(boundary_points(p).points, target)
                fld = solve_torsion(mesh, q)
                elapsed = time.perf_counter() - t0
                tq = rigidity(fld)
                cross = abs(rigidity_from_boundary(p, fld) ** (q - 1) / tq - 1)
                if body == "disk":
                    u_err = abs(fld.u.max() / ball.u0 - 1)
                    g_err = float(np.max(np.abs(fld.grad_boundary / ball.grad_boundary - 1)))
                    tq_err = abs(tq / ball.tq - 1)
                else:
                    u_err = g_err = tq_err = math.nan
                rows.append(
                    [body, q, n, target, mesh.n_triangles, dirichlet_identity_gap(fld), cross, u_err, g_err, tq_err,
                     fld.iterations, elapsed]
                )
                print(f"{body:7s} q={q:<4} N={n:<4} {mesh.n_triangles:7d} tri  gap {rows[-1][5]:.2e}  "
                      f"cross {cross:.2e}  {elapsed:.2f} s")
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="study")
    ap.add_argument("--q", type=float, nargs="+", default=[1.5, 2.0, 3.0])
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = study(args.q)
    header = ["body", "q", "n", "target_edge", "triangles", "identity_gap", "tq_cross", "u0_error",
              "grad_error", "tq_error", "newton_iterations", "seconds"]
    write_rows(out / "convergence.csv", header, rows)

    def series(body, col):
        return [
            (f"{body} q={q}", [r[4] for r in rows if r[0] == body and r[1] == q],
             [r[col] for r in rows if r[0] == body and r[1] == q])
            for q in args.q
        ]

    write_svg(line_plot(series("disk", 5) + series("ellipse", 5), "Identity gap under refinement", "triangles", "gap",
                        logy=True), out / "identity_gap.svg")
    write_svg(line_plot(series("disk", 8), "Boundary gradient error on the unit disk", "triangles", "max rel. error",
                        logy=True), out / "gradient_error.svg")
    print(f"wrote {out / 'convergence.csv'}")


if __name__ == "__main__":
    main()
