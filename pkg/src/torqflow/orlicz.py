"""Orlicz functions, densities on the circle and the Orlicz mixed rigidity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from .errors import ValidationError
from .geometry import SupportProfile, angle_grid
from .torsion import TorsionField, rigidity_factor, torsion_measure


@dataclass(frozen=True)
class OrliczFunction:
    """phi with its derivative and an antiderivative of 1/phi.

    ``hat`` is the antiderivative of 1/phi vanishing at ``hat_base``: 0 when
    the integral of 1/phi converges at 0, otherwise 1.
    """

    kind: str
    params: dict
    eval: Callable
    deriv: Callable
    hat_base: float
    convex: bool
    hat: Callable = field(repr=False, default=None)

    def __call__(self, s):
        return self.eval(s)

    def spec(self) -> dict:
        return {"kind": self.kind, **self.params}


def _power(p):
    if not p > 0:
        raise ValueError(f"power exponent must be positive, got {p}")
    base = 0.0 if p < 1 else 1.0
    if p == 1:
        hat = np.log
    elif p < 1:
        def hat(s):
            return np.power(s, 1.0 - p) / (1.0 - p)
    else:
        def hat(s):
            return (np.power(s, 1.0 - p) - 1.0) / (1.0 - p)
    return OrliczFunction(
        "power",
        {"p": float(p)},
        lambda s: np.power(s, p),
        lambda s: p * np.power(s, p - 1.0),
        base,
        p >= 1,
        hat,
    )


def _quad_hat(phi, base, breaks=()):
    """Antiderivative of 1/phi from ``base`` by adaptive quadrature.

    ``breaks`` are points where phi is less smooth (table knots); the
    integral is accumulated between them once so that every evaluation only
    integrates a smooth piece.
    """
    def piece(a, b):
        return quad(lambda z: 1.0 / phi(z), a, b, epsabs=1e-14, epsrel=1e-13, limit=200)[0]

    nodes = np.unique(np.concatenate([[base], [b for b in breaks if b > 0]]))
    cum = np.concatenate([[0.0], np.cumsum([piece(a, b) for a, b in zip(nodes[:-1], nodes[1:])])])
    cum -= cum[np.searchsorted(nodes, base)]

    def one(si):
        k = min(max(np.searchsorted(nodes, si, side="right") - 1, 0), len(nodes) - 1)
        return cum[k] + piece(nodes[k], si)

    def hat(s):
        s_arr = np.asarray(s, dtype=float)
        out = np.array([one(si) for si in s_arr.ravel()])
        return out.reshape(s_arr.shape) if s_arr.ndim else float(out[0])
    return hat


def _exponential(a):
    if not a > 0:
        raise ValueError(f"exponential rate must be positive, got {a}")

    def phi(s):
        return np.expm1(a * s) + s

    # phi(s) ~ (a + 1) s near 0, so the integral of 1/phi diverges there
    return OrliczFunction(
        "exponential",
        {"a": float(a)},
        phi,
        lambda s: a * np.exp(a * s) + 1.0,
        1.0,
        True,
        _quad_hat(phi, 1.0),
    )


def _tabulated(s_knots, phi_knots):
    s_knots = np.asarray(s_knots, dtype=float)
    phi_knots = np.asarray(phi_knots, dtype=float)
    if s_knots.shape != phi_knots.shape or s_knots.size < 2:
        raise ValidationError("tabulated phi needs matching s and phi arrays with at least two knots")
    if np.any(np.diff(s_knots) <= 0) or s_knots[0] < 0:
        raise ValidationError("tabulated phi knots must be non-negative and strictly increasing")
    if np.any(np.diff(phi_knots) <= 0) or phi_knots[0] < 0 or (s_knots[0] > 0 and phi_knots[0] <= 0):
        raise ValidationError("tabulated phi must be positive and strictly increasing")
    interp = PchipInterpolator(s_knots, phi_knots, extrapolate=True)
    dinterp = interp.derivative()
    lo, hi = s_knots[0], s_knots[-1]
    slope_lo = float(dinterp(lo))
    slope_hi = float(dinterp(hi))

    def phi(s):
        s = np.asarray(s, dtype=float)
        # linear continuation outside the table keeps phi positive and increasing
        out = np.where(s < lo, phi_knots[0] + slope_lo * (s - lo), interp(np.clip(s, lo, hi)))
        out = np.where(s > hi, phi_knots[-1] + slope_hi * (s - hi), out)
        return out if out.ndim else float(out)

    def dphi(s):
        s = np.asarray(s, dtype=float)
        out = np.where(s < lo, slope_lo, np.where(s > hi, slope_hi, dinterp(np.clip(s, lo, hi))))
        return out if out.ndim else float(out)

    base = 0.0 if (lo == 0 and phi_knots[0] > 0) else 1.0
    convex = bool(np.all(np.diff(np.diff(phi_knots) / np.diff(s_knots)) >= 0))
    return OrliczFunction(
        "tabulated",
        {"s": s_knots.tolist(), "phi": phi_knots.tolist()},
        phi,
        dphi,
        base,
        convex,
        _quad_hat(phi, base, s_knots),
    )


def make_phi(spec) -> OrliczFunction:
    """Build an Orlicz function from a tagged record, e.g. {"kind": "power", "p": 1.0}."""
    if isinstance(spec, OrliczFunction):
        return spec
    kind = spec.get("kind")
    if kind == "power":
        return _power(float(spec["p"]))
    if kind == "exponential":
        return _exponential(float(spec["a"]))
    if kind == "tabulated":
        return _tabulated(spec["s"], spec["phi"])
    raise ValueError(f"unknown phi kind {kind!r}")


def phi_hat(phi: OrliczFunction, s):
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0):
        raise ValueError("phi_hat is defined for positive arguments only")
    return phi.hat(s)


# -- densities --------------------------------------------------------------------------


@dataclass(frozen=True)
class DensitySpec:
    """f(theta) = a0 + sum_k cos_k cos(k theta) + sin_k sin(k theta)."""

    a0: float
    cos: tuple = ()
    sin: tuple = ()
    min_value: float = float("nan")

    def __call__(self, theta):
        return eval_density(self, theta)

    def spec(self) -> dict:
        return {"kind": "fourier", "a0": self.a0, "cos": list(self.cos), "sin": list(self.sin)}


def _fourier_sum(a0, cos, sin, theta):
    theta = np.asarray(theta, dtype=float)
    out = np.full(theta.shape, float(a0))
    for k, c in enumerate(cos, start=1):
        out = out + c * np.cos(k * theta)
    for k, s in enumerate(sin, start=1):
        out = out + s * np.sin(k * theta)
    return out


def make_density(spec, n: int = 256) -> DensitySpec:
    """Validate positivity on a 4x oversampled grid and freeze the coefficients."""
    if isinstance(spec, DensitySpec):
        return spec
    if isinstance(spec, (int, float)):
        spec = {"kind": "fourier", "a0": float(spec)}
    if spec.get("kind", "fourier") != "fourier":
        raise ValueError(f"unknown density kind {spec.get('kind')!r}")
    a0 = float(spec.get("a0", 1.0))
    cos = tuple(float(c) for c in spec.get("cos", ()))
    sin = tuple(float(s) for s in spec.get("sin", ()))
    order = max(len(cos), len(sin))
    grid = angle_grid(4 * max(n, 2 * order + 1))
    fmin = float(_fourier_sum(a0, cos, sin, grid).min())
    if not fmin > 0:
        raise ValidationError(f"density is not positive (minimum {fmin:.4g} on the check grid)")
    return DensitySpec(a0, cos, sin, fmin)


def eval_density(f: DensitySpec, theta):
    out = _fourier_sum(f.a0, f.cos, f.sin, theta)
    return out if out.ndim else float(out)


# -- mixed rigidity ------------------------------------------------------------------------


def mixed_rigidity(
    k_profile: SupportProfile,
    k_field: TorsionField,
    l_profile: SupportProfile,
    phi: OrliczFunction,
    q: float | None = None,
    scheme: str = "fd",
) -> float:
    """Orlicz mixed q-torsional rigidity of K and L.

    ((q-1)/(n(q-1)+q)) sum_i phi(h_L/h_K) h_K mu_i, with mu the torsion measure of K.
    """
    if k_profile.n != l_profile.n:
        raise ValueError("K and L must live on the same angle grid")
    q = k_field.q if q is None else q
    if not math.isclose(q, k_field.q):
        raise ValueError("q does not match the torsion field")
    mu = torsion_measure(k_field, k_profile, scheme)
    hk = k_profile.values
    return rigidity_factor(q) * float(np.sum(phi(l_profile.values / hk) * hk * mu))
