"""q-Laplace torsion problem on a triangulated convex body.

The torsion function solves div(|grad u|^(q-2) grad u) = -1 with u = 0 on
the boundary.  It is computed with P1 finite elements as the minimiser of

    J(u) = sum_T area_T (|grad u_T|^2 + eps^2)^(q/2) / q  -  sum_v m_v u_v

(m the lumped mass, which for a unit load equals the consistent load
vector) by a damped Newton iteration.  All derived quantities used by the
flow (rigidity, boundary gradient, torsion measure) live here too.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from .errors import NumericalError, SolverError
from .geometry import SupportProfile, curvature, derivative, principal_radius
from .mesh import BodyMesh

DEFAULT_EPS = 1e-8
MAX_NEWTON = 200


class FEOperators:
    """Per-mesh P1 geometry: areas, basis gradients, lumped mass, sparsity."""

    def __init__(self, mesh: BodyMesh):
        self.mesh = mesh
        tri = mesh.triangles
        p = mesh.vertices[tri]
        x, y = p[..., 0], p[..., 1]
        det = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
        self.area = 0.5 * det
        # grad phi_k = (y_{k+1} - y_{k+2}, x_{k+2} - x_{k+1}) / det
        gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1) / det[:, None]
        gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1) / det[:, None]
        self.dphi = np.stack([gx, gy], axis=2)  # (T, 3, 2)
        nv = mesh.n_vertices
        self.mass = np.bincount(tri.ravel(), weights=np.repeat(self.area / 3.0, 3), minlength=nv)
        self.rows = np.repeat(tri, 3, axis=1).ravel()
        self.cols = np.tile(tri, (1, 3)).ravel()
        self.free = np.flatnonzero(mesh.interior_mask())
        # vertex <- triangle incidence, area weighted
        inc = sp.csr_matrix(
            (np.repeat(self.area, 3), (tri.ravel(), np.repeat(np.arange(len(tri)), 3))),
            shape=(nv, len(tri)),
        )
        self.recovery = sp.diags(1.0 / np.asarray(inc.sum(axis=1)).ravel()) @ inc

    def element_gradients(self, u) -> np.ndarray:
        return np.einsum("tk,tkd->td", u[self.mesh.triangles], self.dphi)

    def recovered_gradient(self, u) -> np.ndarray:
        """Nodal gradient: area-weighted mean of the element gradients around each vertex."""
        return self.recovery @ self.element_gradients(u)


@dataclass
class TorsionField:
    mesh: BodyMesh
    u: np.ndarray
    q: float
    grad_boundary: np.ndarray  # |grad u| at each angle node
    eps: float
    residual: float = 0.0
    iterations: int = 0
    ops: FEOperators | None = None

    def integral(self) -> float:
        return float(self.ops.mass @ self.u)


# -- energy ----------------------------------------------------------------------------


def _energy(ops, u, q, eps):
    g = ops.element_gradients(u)
    s = np.einsum("td,td->t", g, g) + eps * eps
    return float(np.sum(ops.area * s ** (q / 2.0)) / q - ops.mass @ u)


def _gradient(ops, u, q, eps):
    g = ops.element_gradients(u)
    s = np.einsum("td,td->t", g, g) + eps * eps
    a = s ** ((q - 2.0) / 2.0)
    local = (ops.area * a)[:, None] * np.einsum("td,tkd->tk", g, ops.dphi)
    return np.bincount(ops.mesh.triangles.ravel(), weights=local.ravel(), minlength=len(u)) - ops.mass


def _hessian(ops, u, q, eps):
    g = ops.element_gradients(u)
    s = np.einsum("td,td->t", g, g) + eps * eps
    a = s ** ((q - 2.0) / 2.0)
    gdphi = np.einsum("td,tkd->tk", g, ops.dphi)
    kk = np.einsum("tid,tjd->tij", ops.dphi, ops.dphi)
    local = a[:, None, None] * kk
    if q != 2.0:
        local += ((q - 2.0) * s ** ((q - 4.0) / 2.0))[:, None, None] * gdphi[:, :, None] * gdphi[:, None, :]
    local *= ops.area[:, None, None]
    nv = len(u)
    return sp.csr_matrix((local.ravel(), (ops.rows, ops.cols)), shape=(nv, nv))


def solver_tolerance(mesh: BodyMesh) -> float:
    return 1e-10 * math.sqrt(mesh.n_vertices)


def _poisson_start(ops, q, eps):
    """Solution of the linear problem, rescaled to minimise J along its ray."""
    k = _hessian(ops, np.zeros(ops.mesh.n_vertices), 2.0, 0.0)
    f = ops.free
    u = np.zeros(ops.mesh.n_vertices)
    u[f] = spla.spsolve(k[f][:, f].tocsc(), ops.mass[f])
    if q == 2.0:
        return u
    g = ops.element_gradients(u)
    grad_q = np.sum(ops.area * np.einsum("td,td->t", g, g) ** (q / 2.0))
    return u * (ops.mass @ u / grad_q) ** (1.0 / (q - 1.0))


def solve_torsion(
    mesh: BodyMesh,
    q: float,
    eps: float = DEFAULT_EPS,
    tol: float | None = None,
    max_iter: int = MAX_NEWTON,
    initial=None,
    ops: FEOperators | None = None,
    recovery: str = "flux",
) -> TorsionField:
    """Minimise the regularised q-Dirichlet energy with damped Newton steps.

    Raises SolverError (carrying the last residual) if the energy-gradient
    sup-norm on interior vertices does not drop below ``tol`` within
    ``max_iter`` iterations.
    """
    if not q > 1:
        raise ValueError(f"q must exceed 1, got {q}")
    q = float(q)
    ops = ops or FEOperators(mesh)
    tol = solver_tolerance(mesh) if tol is None else tol
    f = ops.free
    if initial is not None and len(initial) == mesh.n_vertices:
        u = np.array(initial, dtype=float)
        u[mesh.ring] = 0.0
    else:
        u = np.zeros(mesh.n_vertices) if q == 2.0 else _poisson_start(ops, q, eps)

    energy = _energy(ops, u, q, eps)
    res = np.inf
    for it in range(max_iter + 1):
        grad = _gradient(ops, u, q, eps)[f]
        res = float(np.max(np.abs(grad)))
        if res <= tol:
            break
        if it == max_iter:
            raise SolverError(
                f"Newton did not converge in {max_iter} iterations (residual {res:.3e}, tol {tol:.3e})",
                residual=res,
                iterations=it,
            )
        hess = _hessian(ops, u, q, eps)[f][:, f].tocsc()
        du = spla.spsolve(hess, -grad)
        slope = float(grad @ du)
        if not np.all(np.isfinite(du)) or slope >= 0:
            # indefinite or singular system: steepest descent in the lumped-mass metric
            du = -grad / ops.mass[f]
            slope = float(grad @ du)
        t = 1.0
        while True:
            trial = u.copy()
            trial[f] += t * du
            e_trial = _energy(ops, trial, q, eps)
            if e_trial <= energy + 1e-4 * t * slope:
                break
            if abs(e_trial - energy) <= 1e-13 * max(1.0, abs(energy)) and t == 1.0:
                # energy differences are at round-off level; accept the full step
                break
            t *= 0.5
            if t < 1e-12:
                raise SolverError(f"line search failed (residual {res:.3e})", residual=res, iterations=it)
        u, energy = trial, e_trial

    field = TorsionField(mesh, u, q, np.empty(0), eps, residual=res, iterations=it, ops=ops)
    field.grad_boundary = boundary_gradient(field, recovery)
    return field


def solve_poisson(mesh: BodyMesh) -> np.ndarray:
    """Independent linear solve of -Laplace u = 1 (cotangent stiffness, CG)."""
    tri = mesh.triangles
    p = mesh.vertices
    rows, cols, vals = [], [], []
    area = mesh.triangle_areas()
    for k in range(3):
        i, j, o = tri[:, (k + 1) % 3], tri[:, (k + 2) % 3], tri[:, k]
        e1, e2 = p[i] - p[o], p[j] - p[o]
        cot = np.einsum("td,td->t", e1, e2) / (2.0 * area)
        w = 0.5 * cot
        rows += [i, j, i, j]
        cols += [j, i, i, j]
        vals += [-w, -w, w, w]
    k = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(len(p),) * 2)
    load = np.zeros(len(p))
    np.add.at(load, tri.ravel(), np.repeat(area / 3.0, 3))
    free = np.flatnonzero(mesh.interior_mask())
    a = k[free][:, free]
    sol, info = spla.cg(a, load[free], rtol=1e-14, atol=0.0, maxiter=20 * len(free))
    if info != 0:
        raise SolverError("conjugate gradients did not converge", iterations=info)
    u = np.zeros(len(p))
    u[free] = sol
    return u


# -- derived quantities --------------------------------------------------------------------


def rigidity(field: TorsionField) -> float:
    """T_q = (integral of u)^(q-1)."""
    return field.integral() ** (field.q - 1.0)


def boundary_gradient(field: TorsionField, method: str = "flux") -> np.ndarray:
    """|grad u| at every angle node.

    ``flux`` reads the boundary flux |grad u|^(q-1) off the discrete
    equation's residual at the boundary vertices (the reaction of the
    Dirichlet constraint) and divides by the boundary length each vertex
    carries.  ``average`` takes the area-weighted mean of the element
    gradients touching the vertex; it is first order and biased low by about
    the depth of the first element layer.
    """
    mesh = field.mesh
    if method == "flux":
        reaction = _gradient(field.ops, field.u, field.q, field.eps)[mesh.ring]
        ring = mesh.vertices[mesh.ring]
        edge = np.linalg.norm(np.roll(ring, -1, axis=0) - ring, axis=1)
        flux = -reaction / (0.5 * (edge + np.roll(edge, 1)))
        flux = flux[np.searchsorted(mesh.ring, mesh.boundary)]
        if not np.all(np.isfinite(flux)) or flux.min() <= 0:
            raise NumericalError("boundary flux vanishes at some node")
        mag = flux ** (1.0 / (field.q - 1.0))
    elif method == "average":
        g = field.ops.recovered_gradient(field.u)[mesh.boundary]
        mag = np.hypot(g[:, 0], g[:, 1])
    else:
        raise ValueError(f"unknown gradient recovery {method!r}")
    if not np.all(np.isfinite(mag)) or mag.min() <= 0:
        raise NumericalError("recovered boundary gradient vanishes at some node")
    return mag


def dirichlet_identity_gap(field: TorsionField) -> float:
    """Relative gap between the integrals of |grad u|^q and u.

    The gradient is the recovered (continuous, nodal-averaged) field,
    integrated with the edge-midpoint rule; u is integrated exactly.  The raw
    element gradients satisfy the identity exactly at the discrete minimiser,
    so they would not measure anything.
    """
    ops = field.ops
    gn = ops.recovered_gradient(field.u)
    tri = field.mesh.triangles
    total = np.zeros(len(tri))
    for a, b in ((0, 1), (1, 2), (2, 0)):
        mid = 0.5 * (gn[tri[:, a]] + gn[tri[:, b]])
        total += np.hypot(mid[:, 0], mid[:, 1]) ** field.q
    lhs = float(np.sum(ops.area * total / 3.0))
    rhs = field.integral()
    return abs(lhs - rhs) / rhs


def torsion_measure(field: TorsionField, p: SupportProfile, scheme: str = "fd") -> np.ndarray:
    """mu_i = |grad u|_i^q b_i dtheta."""
    return field.grad_boundary**field.q * principal_radius(p, scheme) * p.dtheta


def rigidity_factor(q: float, n: int = 2) -> float:
    return (q - 1.0) / (q + n * (q - 1.0))


def rigidity_from_boundary(p: SupportProfile, field: TorsionField, scheme: str = "fd") -> float:
    """Boundary estimate of T_q^(1/(q-1)) from the support function and torsion measure."""
    return rigidity_factor(field.q) * float(np.sum(p.values * torsion_measure(field, p, scheme)))


# -- exact solution on balls ---------------------------------------------------------------


@dataclass(frozen=True)
class BallSolution:
    radius: float
    dim: int
    q: float
    u: Callable
    du: Callable
    grad_boundary: float
    tq: float

    @property
    def u0(self) -> float:
        return self.u(0.0)


def ball_oracle(radius: float, dim: int, q: float) -> BallSolution:
    """Radial torsion function of the ball B_R in R^dim.

    u(r) = ((q-1)/q) dim^(-1/(q-1)) (R^beta - r^beta), beta = q/(q-1).
    The closures use only arithmetic operators so they accept mpmath numbers.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    if int(dim) != dim or dim < 2:
        raise ValueError("dimension must be an integer >= 2")
    if not q > 1:
        raise ValueError("q must exceed 1")
    dim = int(dim)
    beta = q / (q - 1.0)
    c = (q - 1.0) / q * dim ** (-1.0 / (q - 1.0))

    def u(r):
        return c * (radius**beta - r**beta)

    def du(r):
        return -c * beta * r ** (beta - 1.0)

    sphere = 2.0 * math.pi ** (dim / 2.0) / math.gamma(dim / 2.0)
    integral = sphere * c * radius ** (beta + dim) * beta / (dim * (beta + dim))
    return BallSolution(
        float(radius), dim, float(q), u, du, (radius / dim) ** (1.0 / (q - 1.0)), integral ** (q - 1.0)
    )


# -- boundary Hessian identities -------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryHessianCheck:
    u_tt: np.ndarray
    u_tn: np.ndarray
    u_nn: np.ndarray
    residual_i: np.ndarray
    residual_ii: np.ndarray
    residual_iii: np.ndarray
    scale_i: np.ndarray  # |K |grad u||
    scale_iii: np.ndarray  # ||grad u| - |grad u|^(2-q)|

    def relative(self):
        return (
            float(np.max(self.residual_i / self.scale_i)),
            float(np.max(self.residual_iii / self.scale_iii)),
        )


def _local_hessians(mesh, u, nodes, frames, radius):
    """Cubic least-squares fits of u around ``nodes`` in the given (tangent, normal) frames."""
    tree = cKDTree(mesh.vertices)
    out = np.empty((len(nodes), 3))
    for k, (v, (tau, nu)) in enumerate(zip(nodes, frames)):
        idx = np.array(tree.query_ball_point(mesh.vertices[v], radius[k]))
        d = mesh.vertices[idx] - mesh.vertices[v]
        s, t = d @ tau, d @ nu
        basis = np.column_stack([np.ones_like(s), s, t, s * s, s * t, t * t, s**3, s * s * t, s * t * t, t**3])
        coef, *_ = np.linalg.lstsq(basis, u[idx], rcond=None)
        out[k] = 2.0 * coef[3], coef[4], 2.0 * coef[5]
    return out


def boundary_hessian_checks(
    field: TorsionField, p: SupportProfile, scheme: str = "fd", fit_radius: float | None = None
) -> BoundaryHessianCheck:
    """Residuals of the boundary Hessian identities at each angle node (planar form).

    (i)   u_tt = -K |grad u|
    (ii)  u_tn = -K d|grad u|/dtheta
    (iii) (q-1) u_nn = |grad u| - |grad u|^(2-q)
    with t the unit tangent, n the outward normal and K the boundary curvature.
    """
    mesh = field.mesh
    th = p.thetas
    nu = np.column_stack([np.cos(th), np.sin(th)])
    tau = np.column_stack([-np.sin(th), np.cos(th)])
    if fit_radius is None:
        ring = mesh.vertices[mesh.ring]
        spacing = np.mean(np.linalg.norm(np.roll(ring, -1, axis=0) - ring, axis=1))
        fit_radius = 6.0 * spacing
    radii = np.full(p.n, fit_radius)
    hes = _local_hessians(mesh, field.u, mesh.boundary, zip(tau, nu), radii)
    kappa = curvature(p, scheme)
    g = field.grad_boundary
    q = field.q
    rhs_i = -kappa * g
    rhs_ii = -kappa * derivative(g, 1, scheme)
    rhs_iii = g - g ** (2.0 - q)
    return BoundaryHessianCheck(
        u_tt=hes[:, 0],
        u_tn=hes[:, 1],
        u_nn=hes[:, 2],
        residual_i=np.abs(hes[:, 0] - rhs_i),
        residual_ii=np.abs(hes[:, 1] - rhs_ii),
        residual_iii=np.abs((q - 1.0) * hes[:, 2] - rhs_iii),
        scale_i=np.abs(rhs_i),
        scale_iii=np.abs(rhs_iii),
    )


# -- export ----------------------------------------------------------------------------------


def _write_rows(path, header, rows):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([f"{x:.17g}" if isinstance(x, float) else x for x in row])
    return Path(path)


def write_field_csv(field: TorsionField, out_dir, thetas=None):
    """Writes field.csv (x,y,u per vertex) and boundary_gradient.csv (theta,grad_u)."""
    out_dir = Path(out_dir)
    v = field.mesh.vertices
    f1 = _write_rows(out_dir / "field.csv", ["x", "y", "u"], ((float(a), float(b), float(c)) for (a, b), c in zip(v, field.u)))
    if thetas is None:
        thetas = 2.0 * np.pi * np.arange(len(field.grad_boundary)) / len(field.grad_boundary)
    f2 = _write_rows(
        out_dir / "boundary_gradient.csv",
        ["theta", "grad_u"],
        ((float(t), float(g)) for t, g in zip(thetas, field.grad_boundary)),
    )
    return [f1, f2]


def write_mesh_csv(mesh: BodyMesh, out_dir):
    out_dir = Path(out_dir)
    f1 = _write_rows(out_dir / "vertices.csv", ["x", "y"], ((float(a), float(b)) for a, b in mesh.vertices))
    f2 = _write_rows(out_dir / "triangles.csv", ["i", "j", "k"], (tuple(int(x) for x in t) for t in mesh.triangles))
    return [f1, f2]
