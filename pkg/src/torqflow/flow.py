"""Normalised Gauss curvature flow of the support function.

Per node the flow reads

    dh/dt = -lambda f h kappa / (|grad u|^q phi(h)) + h,

with u the torsion function of the current body, evaluated on the boundary,
and lambda the ratio of sum |grad u|^q h b to sum h f / phi(h).  Each step
freezes |grad u|, integrates h with explicit Euler sub-steps below the
parabolic stability limit, re-solves the torsion problem and, by default,
rescales to restore the initial T_q exactly.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, ConvexityLost, NumericalError, SolverError
from .geometry import (
    SupportProfile,
    boundary_points,
    curvature,
    derivative,
    principal_radius,
    validate_support,
)
from .mesh import MeshTemplate
from .orlicz import DensitySpec, OrliczFunction, make_density, make_phi, phi_hat
from .torsion import DEFAULT_EPS, FEOperators, TorsionField, rigidity, solve_torsion, torsion_measure

log = logging.getLogger(__name__)

SUBSTEP_SAFETY = 0.8  # fraction of the explicit parabolic stability limit
TERMINATIONS = ("converged", "max_steps", "convexity_lost", "solver_failure", "monitor_violation")
DIM = 2


@dataclass
class FlowConfig:
    q: float
    phi: dict | OrliczFunction
    density: dict | DensitySpec | float
    initial: SupportProfile
    target_edge: float = 0.05
    dt_max: float = 0.02
    cfl: float = 0.1
    rescale_tq: bool = True
    residual_tol: float = 1e-2
    sustain: int = 5
    max_steps: int = 5000
    scheme: str = "fd"
    eps: float = DEFAULT_EPS
    recovery: str = "flux"
    tq_tol: float = 1e-6
    gamma_slack: float = 1e-8
    bound: float = 1e3
    monitors_fatal: bool = False
    degenerate_ratio: float = 1e-3

    def __post_init__(self):
        if not self.q > 1:
            raise ConfigurationError(f"q must exceed 1, got {self.q}")
        for name in ("target_edge", "dt_max", "cfl", "residual_tol", "eps", "tq_tol", "gamma_slack", "degenerate_ratio"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.bound <= 1:
            raise ConfigurationError("bound must exceed 1")
        if self.sustain < 1 or self.max_steps < 0:
            raise ConfigurationError("sustain must be >= 1 and max_steps >= 0")
        if not isinstance(self.initial, SupportProfile):
            self.initial = SupportProfile(self.initial)
        rep = validate_support(self.initial, self.scheme)
        if not rep.passed:
            raise ConfigurationError(
                f"initial body is not strictly convex around the origin (min h {rep.min_h:.3g}, min b {rep.min_b:.3g})"
            )
        self.phi = make_phi(self.phi)
        self.density = make_density(self.density, self.initial.n)


class FlowProblem:
    """Objects derived once from a config and shared by every state of a run."""

    def __init__(self, config: FlowConfig):
        self.config = config
        self.q = float(config.q)
        self.phi: OrliczFunction = config.phi
        self.density: DensitySpec = config.density
        self.n = config.initial.n
        self.f = np.asarray(self.density(config.initial.thetas), dtype=float)
        self.template = MeshTemplate(boundary_points(config.initial, config.scheme).points, config.target_edge)
        self.tq0 = math.nan
        self.min_h0 = float(config.initial.values.min())
        self.min_b0 = float(principal_radius(config.initial, config.scheme).min())

    def solve(self, profile: SupportProfile, initial=None) -> TorsionField:
        cfg = self.config
        mesh = self.template.apply(boundary_points(profile, cfg.scheme).points)
        return solve_torsion(mesh, self.q, eps=cfg.eps, initial=initial, ops=FEOperators(mesh), recovery=cfg.recovery)


@dataclass
class FlowState:
    t: float
    profile: SupportProfile
    field: TorsionField
    lam: float
    tq: float
    gamma: float
    residual: float
    problem: FlowProblem = field(repr=False)
    dt: float = 0.0
    step: int = 0
    substeps: int = 0

    @property
    def min_b(self) -> float:
        return float(principal_radius(self.profile, self.problem.config.scheme).min())


@dataclass
class MonitorReport:
    tq_drift: float
    dgamma: float
    tq_flag: bool
    gamma_flag: bool
    h_flag: bool
    lambda_flag: bool

    @property
    def clear(self) -> bool:
        return not (self.tq_flag or self.gamma_flag or self.h_flag or self.lambda_flag)


@dataclass
class Trajectory:
    log: list
    snapshots: list  # (step, t, SupportProfile)
    termination: str
    final: FlowState | None
    message: str = ""
    monitors: list = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.log) - 1


# -- per-state quantities ---------------------------------------------------------------


def _scheme(state):
    return state.problem.config.scheme


def lambda_factor(state: FlowState) -> float:
    p, prob = state.profile, state.problem
    g = state.field.grad_boundary
    b = principal_radius(p, _scheme(state))
    num = float(np.sum(g**prob.q * p.values * b) * p.dtheta)
    den = float(np.sum(p.values * prob.f / prob.phi(p.values)) * p.dtheta)
    if not (math.isfinite(num) and math.isfinite(den)) or num <= 0 or den <= 0:
        raise NumericalError(f"normalisation sums are degenerate ({num!r}, {den!r})")
    return num / den


def velocity(state: FlowState) -> np.ndarray:
    p, prob = state.profile, state.problem
    h = p.values
    kappa = curvature(p, _scheme(state))
    g = state.field.grad_boundary
    return -state.lam * prob.f * h * kappa / (g**prob.q * prob.phi(h)) + h


def gamma(state: FlowState) -> float:
    p, prob = state.profile, state.problem
    return float(np.sum(prob.f * phi_hat(prob.phi, p.values)) * p.dtheta)


def ma_residual(state: FlowState) -> float:
    p, prob = state.profile, state.problem
    b = principal_radius(p, _scheme(state))
    lhs = prob.phi(p.values) * state.field.grad_boundary**prob.q * b / state.lam
    return float(np.max(np.abs(lhs - prob.f) / prob.f))


def make_state(problem: FlowProblem, profile: SupportProfile, t: float = 0.0, field_=None, initial_u=None) -> FlowState:
    fld = field_ if field_ is not None else problem.solve(profile, initial_u)
    state = FlowState(t, profile, fld, math.nan, rigidity(fld), math.nan, math.nan, problem)
    state.lam = lambda_factor(state)
    state.gamma = gamma(state)
    state.residual = ma_residual(state)
    return state


def initial_state(config: FlowConfig) -> FlowState:
    problem = FlowProblem(config)
    state = make_state(problem, config.initial)
    problem.tq0 = state.tq
    return state


# -- time stepping -----------------------------------------------------------------------


def choose_dt(state: FlowState, v, config: FlowConfig) -> float:
    rate = np.max(np.abs(v) / state.profile.values)
    return config.dt_max if rate == 0 else min(config.dt_max, config.cfl / rate)


def _frozen_velocity(h, g, prob: FlowProblem, scheme: str):
    """Velocity and curvature-diffusion coefficient with |grad u| held fixed."""
    b = derivative(h, 2, scheme) + h
    if b.min() <= 0:
        return None, None, float(b.min())
    ph = prob.phi(h)
    lam = np.sum(g**prob.q * h * b) / np.sum(h * prob.f / ph)
    shrink = lam * prob.f * h / (g**prob.q * ph * b)
    return h - shrink, shrink / b, float(b.min())


def _stable_substep(diff, n, scheme):
    # largest eigenvalue of -(d^2/dtheta^2) on the grid
    top = (2.0 * n / (2.0 * np.pi)) ** 2 if scheme == "fd" else (n / 2.0) ** 2
    return SUBSTEP_SAFETY * 2.0 / (top * float(diff.max()))


def integrate_frozen(state: FlowState, dt: float, config: FlowConfig):
    """Advance h over ``dt`` with |grad u| frozen at the state's boundary values.

    The curvature term makes the evolution diffusive in h, so explicit Euler
    needs sub-steps below the parabolic stability bound.  lambda is
    re-evaluated on every sub-step, which keeps the sub-step increment
    orthogonal to the frozen torsion measure and keeps Gamma non-increasing.
    Returns (h, number of sub-steps).
    """
    prob = state.problem
    g = state.field.grad_boundary
    h = state.profile.values.copy()
    n = len(h)
    elapsed, count = 0.0, 0
    while elapsed < dt * (1.0 - 1e-12):
        v, diff, min_b = _frozen_velocity(h, g, prob, config.scheme)
        if v is None:
            raise ConvexityLost(f"convexity lost at t = {state.t + elapsed:.6g} (min b {min_b:.3e})", snapshot=state)
        delta = min(dt - elapsed, _stable_substep(diff, n, config.scheme))
        h = h + delta * v
        elapsed += delta
        count += 1
        if h.min() <= 0:
            raise ConvexityLost(f"origin left the body at t = {state.t + elapsed:.6g}", snapshot=state)
    return h, count


def step(state: FlowState, config: FlowConfig, dt: float | None = None) -> FlowState:
    """Advance by one torsion-solve interval, re-solve, and optionally restore T_q."""
    prob = state.problem
    v = velocity(state)
    if dt is None:
        dt = choose_dt(state, v, config)
    h, substeps = integrate_frozen(state, dt, config)
    new = SupportProfile(h)
    rep = validate_support(new, config.scheme)
    if not rep.passed:
        raise ConvexityLost(
            f"convexity lost at t = {state.t + dt:.6g} (min h {rep.min_h:.3e}, min b {rep.min_b:.3e})", snapshot=state
        )
    if rep.min_h < config.degenerate_ratio * prob.min_h0:
        raise ConvexityLost(f"origin approaching the boundary (min h {rep.min_h:.3e})", snapshot=state)

    fld = prob.solve(new, state.field.u)
    if config.rescale_tq:
        if not math.isfinite(prob.tq0):
            prob.tq0 = state.tq
        s = (prob.tq0 / rigidity(fld)) ** (1.0 / (prob.q + DIM * (prob.q - 1.0)))
        new = SupportProfile(new.values * s)
        fld = prob.solve(new, fld.u * s ** (prob.q / (prob.q - 1.0)))
    out = make_state(prob, new, state.t + dt, fld)
    out.dt = dt
    out.substeps = substeps
    out.step = state.step + 1
    return out


def monitor_check(prev: FlowState, nxt: FlowState, config: FlowConfig) -> MonitorReport:
    drift = abs(nxt.tq - prev.tq) / prev.tq
    dgamma = nxt.gamma - prev.gamma
    # phi_hat is fixed only up to a constant, so |Gamma| alone can be 0 at a
    # perfectly generic state; the dilation derivative sum f h/phi(h) is not
    p, prob = prev.profile, prev.problem
    scale = max(abs(prev.gamma), float(np.sum(prob.f * p.values / prob.phi(p.values)) * p.dtheta))
    c = config.bound
    h = nxt.profile.values
    return MonitorReport(
        tq_drift=drift,
        dgamma=dgamma,
        tq_flag=drift > config.tq_tol,
        gamma_flag=dgamma > config.gamma_slack * scale,
        h_flag=bool(h.min() < 1.0 / c or h.max() > c),
        lambda_flag=not (1.0 / c <= nxt.lam <= c),
    )


def log_row(state: FlowState) -> dict:
    h = state.profile.values
    return {
        "step": state.step,
        "t": state.t,
        "dt": state.dt,
        "lambda": state.lam,
        "tq": state.tq,
        "gamma": state.gamma,
        "residual": state.residual,
        "min_h": float(h.min()),
        "max_h": float(h.max()),
        "min_b": state.min_b,
    }


def run(config: FlowConfig, snapshot_every: int = 0, callback=None, state: FlowState | None = None) -> Trajectory:
    """Iterate ``step`` until the residual stays below tolerance or the budget runs out.

    Convergence needs ``config.sustain`` consecutive states under
    ``residual_tol``; a run whose states have all been under tolerance from
    the start (a fixed point) is accepted after one confirming step.
    """
    state = state or initial_state(config)
    rows = [log_row(state)]
    snaps = [(0, 0.0, state.profile)]
    reports = []
    streak = 1 if state.residual <= config.residual_tol else 0
    termination, message = "max_steps", ""

    def converged():
        return streak >= config.sustain or (streak == len(rows) and len(rows) >= 2)

    while True:
        if converged():
            termination = "converged"
            break
        if state.step >= config.max_steps:
            break
        try:
            nxt = step(state, config)
        except ConvexityLost as exc:
            termination, message = "convexity_lost", str(exc)
            break
        except (SolverError, NumericalError) as exc:
            termination, message = "solver_failure", str(exc)
            break
        rep = monitor_check(state, nxt, config)
        reports.append(rep)
        if not rep.clear:
            log.warning("monitor flags at step %d: %s", nxt.step, rep)
        state = nxt
        rows.append(log_row(state))
        if snapshot_every and state.step % snapshot_every == 0:
            snaps.append((state.step, state.t, state.profile))
        streak = streak + 1 if state.residual <= config.residual_tol else 0
        if callback is not None:
            callback(state, rep)
        if config.monitors_fatal and not rep.clear:
            termination, message = "monitor_violation", f"monitor flags at step {state.step}"
            break

    if snaps[-1][0] != state.step:
        snaps.append((state.step, state.t, state.profile))
    return Trajectory(rows, snaps, termination, state, message, reports)


def with_overrides(config: FlowConfig, **kw) -> FlowConfig:
    return replace(config, **kw)


# -- translation balancing ---------------------------------------------------------------


@dataclass
class BalanceResult:
    shift: np.ndarray  # translation (x, y) applied to the initial body
    mismatch: float  # |first velocity mode| at the horizon
    iterations: int
    evaluations: int


def _translated(p: SupportProfile, shift) -> SupportProfile:
    th = p.thetas
    return SupportProfile(p.values + shift[0] * np.cos(th) + shift[1] * np.sin(th))


def _first_mode(config: FlowConfig, shift, horizon: float) -> np.ndarray:
    cfg = replace(config, initial=_translated(config.initial, shift))
    state = initial_state(cfg)
    while state.t < horizon * (1.0 - 1e-12):
        state = step(state, cfg, dt=min(choose_dt(state, velocity(state), cfg), horizon - state.t))
    c = np.fft.rfft(velocity(state))[1] * 2.0 / state.profile.n
    return np.array([c.real, -c.imag])


def _safe_mode(config, shift, horizon):
    try:
        return _first_mode(config, shift, horizon)
    except ConvexityLost:
        return None


def balance_translation(
    config: FlowConfig,
    horizons=(0.5, 1.0, 2.0),
    tol: float = 1e-5,
    max_iter: int = 12,
    probe: float = 1e-3,
) -> BalanceResult:
    """Translate the initial body so the flow does not run away along x or y.

    Translations of a fixed point are an unstable mode of the flow whenever
    phi grows: near a centred disk the cos/sin components of v grow at the
    rate h phi'(h)/phi(h), so a generic start drifts until the origin reaches
    the boundary.  This shoots on the initial translation,
    driving the first Fourier mode of the velocity at the horizon to zero with
    Newton steps (finite-difference Jacobian, halving on failure).  Short
    horizons are solved first and continued to the longest one.  The flow
    itself is unchanged.
    """
    shift = np.zeros(2)
    evals, it = 0, 0
    mismatch = math.inf
    for horizon in horizons:
        F0 = _first_mode(config, shift, horizon)
        evals += 1
        final = horizon == horizons[-1]
        for _ in range(max_iter):
            if final and np.linalg.norm(F0) <= tol:
                break
            jac = np.empty((2, 2))
            for k in range(2):
                e = np.zeros(2)
                e[k] = probe
                jac[:, k] = (_first_mode(config, shift + e, horizon) - F0) / probe
                evals += 1
            try:
                delta = -np.linalg.solve(jac, F0)
            except np.linalg.LinAlgError as exc:
                raise NumericalError("translation Jacobian is singular") from exc
            limit = 0.5 * float(config.initial.values.min())
            if np.linalg.norm(delta) > limit:
                delta *= limit / np.linalg.norm(delta)
            for _halve in range(8):
                F1 = _safe_mode(config, shift + delta, horizon)
                evals += 1
                if F1 is not None and np.linalg.norm(F1) < np.linalg.norm(F0):
                    break
                delta *= 0.5
            else:
                raise NumericalError(f"translation balancing stalled at horizon {horizon}")
            shift, F0 = shift + delta, F1
            it += 1
            log.info("balance h=%g iteration %d: shift %s, mismatch %.3e", horizon, it, shift, np.linalg.norm(F0))
            if not final:
                break  # one Newton step per intermediate horizon is enough
        mismatch = float(np.linalg.norm(F0))
    return BalanceResult(shift, mismatch, it, evals)


def balanced_config(config: FlowConfig, **kw) -> tuple[FlowConfig, BalanceResult]:
    res = balance_translation(config, **kw)
    return replace(config, initial=_translated(config.initial, res.shift)), res
