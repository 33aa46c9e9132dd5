"""Support-function calculus for planar convex bodies.

A body is stored as samples of its support function h on the uniform grid
theta_i = 2*pi*i/N.  Everything else (boundary points, curvature, radial
function, area) is derived from those samples with periodic differences,
either second-order central differences (default) or trigonometric
interpolation ("spectral").
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DomainError

SCHEMES = ("fd", "spectral")


def angle_grid(n: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(n) / n


@dataclass(frozen=True)
class SupportProfile:
    """Samples of h(theta) at theta_i = 2*pi*i/N."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim != 1:
            raise ConfigurationError("support values must be a 1-D array")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def thetas(self) -> np.ndarray:
        return angle_grid(self.n)

    @property
    def dtheta(self) -> float:
        return 2.0 * np.pi / self.n

    @classmethod
    def from_function(cls, func, n: int = 256) -> "SupportProfile":
        return cls(np.asarray(func(angle_grid(n)), dtype=float))


@dataclass(frozen=True)
class ConvexityReport:
    min_b: float
    min_h: float
    passed: bool


@dataclass(frozen=True)
class BoundaryPolygon:
    points: np.ndarray  # (N, 2)
    normals: np.ndarray  # (N, 2), the unit grid directions x(theta_i)
    lengths: np.ndarray  # ds_i = b_i * dtheta


@dataclass(frozen=True)
class RadialProfile:
    angles: np.ndarray  # unwrapped, strictly increasing
    radii: np.ndarray


# -- periodic differentiation ------------------------------------------------


def _check_scheme(scheme):
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown differentiation scheme {scheme!r}")


def derivative(values, order: int = 1, scheme: str = "fd") -> np.ndarray:
    """Periodic derivative of grid samples on [0, 2*pi)."""
    _check_scheme(scheme)
    v = np.asarray(values, dtype=float)
    n = v.size
    if scheme == "fd":
        dt = 2.0 * np.pi / n
        vp, vm = np.roll(v, -1), np.roll(v, 1)
        if order == 1:
            return (vp - vm) / (2.0 * dt)
        if order == 2:
            return (vp - 2.0 * v + vm) / dt**2
        raise ValueError("fd scheme supports orders 1 and 2")
    k = np.fft.rfftfreq(n, d=1.0 / n)
    mult = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        # the Nyquist mode has no odd derivative on a real grid
        mult[-1] = 0.0
    return np.fft.irfft(mult * np.fft.rfft(v), n=n)


def principal_radius(p: SupportProfile, scheme: str = "fd") -> np.ndarray:
    """b = h'' + h, the discrete radius of curvature."""
    return derivative(p.values, 2, scheme) + p.values


# -- operations ----------------------------------------------------------------


def _check_grid(p: SupportProfile):
    if p.n < 16 or p.n % 2:
        raise ConfigurationError(f"grid size must be even and >= 16, got {p.n}")


def validate_support(p: SupportProfile, scheme: str = "fd") -> ConvexityReport:
    _check_grid(p)
    b = principal_radius(p, scheme)
    min_b = float(b.min())
    min_h = float(p.values.min())
    return ConvexityReport(min_b, min_h, bool(min_h > 0 and min_b > 0))


def _require_convex(p, scheme):
    rep = validate_support(p, scheme)
    if not rep.passed:
        raise DomainError(
            f"profile is not a strictly convex body around the origin "
            f"(min h = {rep.min_h:.3e}, min b = {rep.min_b:.3e})"
        )
    return rep


def boundary_points(p: SupportProfile, scheme: str = "fd") -> BoundaryPolygon:
    """X(theta) = h x(theta) + h'(theta) x_perp(theta) at every grid node."""
    _require_convex(p, scheme)
    th = p.thetas
    normals = np.column_stack([np.cos(th), np.sin(th)])
    tangents = np.column_stack([-np.sin(th), np.cos(th)])
    dh = derivative(p.values, 1, scheme)
    pts = p.values[:, None] * normals + dh[:, None] * tangents
    lengths = principal_radius(p, scheme) * p.dtheta
    return BoundaryPolygon(pts, normals, lengths)


def curvature(p: SupportProfile, scheme: str = "fd") -> np.ndarray:
    _check_grid(p)
    b = principal_radius(p, scheme)
    if np.any(b <= 0):
        raise DomainError(f"convexity lost: min b = {b.min():.3e}")
    return 1.0 / b


def radial_profile(p: SupportProfile, scheme: str = "fd") -> RadialProfile:
    _check_grid(p)
    if p.values.min() <= 0:
        raise DomainError("origin is not interior (min h <= 0)")
    th = p.thetas
    dh = derivative(p.values, 1, scheme)
    x = p.values * np.cos(th) - dh * np.sin(th)
    y = p.values * np.sin(th) + dh * np.cos(th)
    xi = np.unwrap(np.arctan2(y, x))
    # one monotone turn around the origin
    if np.any(np.diff(xi) <= 0) or xi[-1] - xi[0] >= 2.0 * np.pi:
        raise DomainError("boundary is not star-shaped about the origin")
    return RadialProfile(xi, np.hypot(x, y))


def area(p: SupportProfile, scheme: str = "fd") -> float:
    """(1/2) sum h_i b_i dtheta."""
    _require_convex(p, scheme)
    return float(0.5 * np.sum(p.values * principal_radius(p, scheme)) * p.dtheta)


def shoelace_area(points) -> float:
    pts = np.asarray(points, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def rescale(p: SupportProfile, s: float) -> SupportProfile:
    if not s > 0:
        raise ValueError(f"scale factor must be positive, got {s}")
    return SupportProfile(p.values * s)


def resample(p: SupportProfile, n: int) -> SupportProfile:
    """Trigonometric interpolation of h onto an n-point grid (n >= p.n)."""
    if n < p.n:
        raise ValueError("resample only refines the grid")
    c = np.fft.rfft(p.values)
    if p.n % 2 == 0:
        c[-1] *= 0.5  # split the Nyquist mode evenly between +/- frequencies
    return SupportProfile(np.fft.irfft(c, n) * (n / p.n))


# -- built-in bodies -------------------------------------------------------------


def disk(radius: float = 1.0, n: int = 256, center=(0.0, 0.0)) -> SupportProfile:
    cx, cy = center
    th = angle_grid(n)
    return SupportProfile(radius + cx * np.cos(th) + cy * np.sin(th))


def ellipse(a: float, b: float, n: int = 256) -> SupportProfile:
    th = angle_grid(n)
    return SupportProfile(np.sqrt((a * np.cos(th)) ** 2 + (b * np.sin(th)) ** 2))


def fourier_body(a0: float, cos=(), sin=(), n: int = 256) -> SupportProfile:
    th = angle_grid(n)
    h = np.full(n, float(a0))
    for k, c in enumerate(cos, start=1):
        h += c * np.cos(k * th)
    for k, s in enumerate(sin, start=1):
        h += s * np.sin(k * th)
    return SupportProfile(h)


# -- CSV -------------------------------------------------------------------------


def write_profile_csv(p: SupportProfile, path) -> Path:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["theta", "h"])
        for th, h in zip(p.thetas, p.values):
            w.writerow([f"{th:.17g}", f"{h:.17g}"])
    return path


def read_profile_csv(path) -> SupportProfile:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["theta", "h"]:
        raise ConfigurationError(f"{path.name}: expected header 'theta,h'")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    p = SupportProfile(data[:, 1])
    if not np.allclose(data[:, 0], p.thetas, atol=1e-12):
        raise ConfigurationError(f"{path.name}: angles are not the uniform grid")
    return p
