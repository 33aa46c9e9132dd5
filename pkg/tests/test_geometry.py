import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from torqflow.errors import ConfigurationError, DomainError
from torqflow.geometry import (
    SupportProfile,
    angle_grid,
    area,
    boundary_points,
    curvature,
    derivative,
    disk,
    ellipse,
    fourier_body,
    principal_radius,
    radial_profile,
    read_profile_csv,
    resample,
    rescale,
    shoelace_area,
    validate_support,
    write_profile_csv,
)


def small_fourier_bodies():
    """Random bodies 1 + small higher modes (convex by construction)."""
    coef = st.floats(-0.08, 0.08, allow_nan=False)
    return st.tuples(
        st.lists(coef, min_size=4, max_size=4),
        st.lists(coef, min_size=4, max_size=4),
        st.floats(-0.4, 0.4),
        st.floats(-0.4, 0.4),
    ).map(
        lambda t: fourier_body(
            1.0,
            [t[2], *(c / k**2 for k, c in enumerate(t[0], start=2))],
            [t[3], *(c / k**2 for k, c in enumerate(t[1], start=2))],
            128,
        )
    )


# -- differentiation -------------------------------------------------------------


def test_fd_derivatives_are_second_order():
    errs = []
    for n in (64, 128, 256):
        th = angle_grid(n)
        f = np.exp(np.sin(th))
        d2 = (np.cos(th) ** 2 - np.sin(th)) * f
        errs.append(np.max(np.abs(derivative(f, 2) - d2)))
    assert errs[0] / errs[1] > 3.8 and errs[1] / errs[2] > 3.8


def test_spectral_derivative_exact_on_trig_polynomial():
    th = angle_grid(32)
    f = 1 + 0.3 * np.cos(3 * th) - 0.2 * np.sin(5 * th)
    d1 = -0.9 * np.sin(3 * th) - 1.0 * np.cos(5 * th)
    d2 = -2.7 * np.cos(3 * th) + 5.0 * np.sin(5 * th)
    assert np.allclose(derivative(f, 1, "spectral"), d1, atol=1e-12)
    assert np.allclose(derivative(f, 2, "spectral"), d2, atol=1e-11)


def test_unknown_scheme_rejected():
    with pytest.raises(ConfigurationError):
        derivative(np.ones(16), 1, "cubic")


# -- validate_support ----------------------------------------------------------------


def test_validate_circle_and_translation_mode():
    rep = validate_support(SupportProfile(np.ones(64)))
    assert rep.passed and rep.min_b == pytest.approx(1.0)
    th = angle_grid(64)
    rep = validate_support(SupportProfile(1 + 0.5 * np.cos(th)))
    assert rep.passed
    # the FD second difference of cos is -cos times (sin(dt/2)/(dt/2))^2, so b is 1 to O(dt^2)
    assert rep.min_b == pytest.approx(1.0, abs=2e-3)


def test_validate_ellipse_min_b():
    rep = validate_support(ellipse(1.2, 0.8, 256))
    assert rep.passed
    assert rep.min_b == pytest.approx(0.8**2 / 1.2, rel=1e-3)


@pytest.mark.parametrize("n", [15, 14, 8])
def test_grid_size_violation(n):
    with pytest.raises(ConfigurationError):
        validate_support(SupportProfile(np.ones(n)))


def test_validate_reports_failure():
    th = angle_grid(64)
    rep = validate_support(SupportProfile(1 + 0.2 * np.cos(6 * th)))
    assert not rep.passed and rep.min_b < 0


# -- boundary points, curvature, radial profile --------------------------------------


def test_boundary_points_circle_and_translate():
    p = SupportProfile(np.ones(64))
    bp = boundary_points(p)
    th = p.thetas
    assert np.allclose(bp.points, np.column_stack([np.cos(th), np.sin(th)]), atol=1e-14)
    bp = boundary_points(SupportProfile(1 + 0.5 * np.cos(th)), "spectral")
    assert np.allclose(np.hypot(bp.points[:, 0] - 0.5, bp.points[:, 1]), 1.0, atol=1e-12)


def test_boundary_points_on_ellipse_spectral():
    a, b = 1.2, 0.8
    pts = boundary_points(ellipse(a, b, 256), "spectral").points
    assert np.max(np.abs(pts[:, 0] ** 2 / a**2 + pts[:, 1] ** 2 / b**2 - 1)) < 1e-10


def test_boundary_points_reject_nonconvex():
    th = angle_grid(64)
    with pytest.raises(DomainError):
        boundary_points(SupportProfile(1 + 0.2 * np.cos(6 * th)))


def test_curvature_examples():
    assert np.allclose(curvature(SupportProfile(np.full(32, 2.0))), 0.5)
    th = angle_grid(256)
    assert np.allclose(curvature(SupportProfile(1 + 0.5 * np.cos(th)), "spectral"), 1.0, atol=1e-12)
    assert curvature(ellipse(1.2, 0.8, 256), "spectral")[0] == pytest.approx(1.2 / 0.8**2, rel=1e-10)


def test_curvature_raises_on_convexity_loss():
    th = angle_grid(64)
    with pytest.raises(DomainError):
        curvature(SupportProfile(1 + 0.2 * np.cos(6 * th)))


def test_radial_profile_examples():
    assert np.allclose(radial_profile(SupportProfile(np.full(32, 3.0))).radii, 3.0)
    th = angle_grid(64)
    rp = radial_profile(SupportProfile(1 + 0.5 * np.cos(th)))
    assert rp.radii[0] == pytest.approx(1.5)
    assert np.all(np.diff(rp.angles) > 0)


def test_radial_profile_requires_interior_origin():
    th = angle_grid(64)
    with pytest.raises(DomainError):
        radial_profile(SupportProfile(0.5 + 0.8 * np.cos(th)))


# -- area, rescale ------------------------------------------------------------------------


def test_area_examples():
    assert area(SupportProfile(np.ones(64))) == pytest.approx(math.pi)
    assert area(ellipse(1.2, 0.8, 256)) == pytest.approx(math.pi * 1.2 * 0.8, rel=1e-3)
    assert area(ellipse(1.2, 0.8, 256), "spectral") == pytest.approx(math.pi * 1.2 * 0.8, rel=1e-12)


def test_area_matches_shoelace_at_second_order():
    gaps = []
    for n in (64, 128, 256):
        p = ellipse(1.2, 0.8, n)
        gaps.append(abs(area(p) - shoelace_area(boundary_points(p).points)))
    assert gaps[0] / gaps[1] >= 3 and gaps[1] / gaps[2] >= 3


def test_rescale():
    p = SupportProfile(np.ones(32))
    assert np.allclose(rescale(p, 2.0).values, 2.0)
    assert np.array_equal(rescale(p, 1.0).values, p.values)
    e = ellipse(1.2, 0.8, 128)
    assert area(rescale(e, 1.7)) == pytest.approx(1.7**2 * area(e), rel=1e-12)
    with pytest.raises(ValueError):
        rescale(p, 0.0)
    with pytest.raises(ValueError):
        rescale(p, -1.0)


def test_profile_values_read_only():
    p = disk(1.0, 32)
    with pytest.raises(ValueError):
        p.values[0] = 3.0


# -- properties ------------------------------------------------------------------------


@given(small_fourier_bodies())
def test_support_reconstruction_from_boundary(p):
    bp = boundary_points(p, "spectral")
    assert np.max(np.abs(np.sum(bp.points * bp.normals, axis=1) - p.values)) < 1e-10


@given(small_fourier_bodies())
def test_radial_identity(p):
    rp = radial_profile(p, "spectral")
    dh = derivative(p.values, 1, "spectral")
    assert np.max(np.abs(rp.radii**2 - (p.values**2 + dh**2))) < 1e-8


@given(small_fourier_bodies(), st.floats(0.2, 5.0))
def test_curvature_scales_inversely(p, s):
    assert np.allclose(curvature(rescale(p, s)), curvature(p) / s, rtol=1e-12)


@given(small_fourier_bodies())
def test_fd_area_close_to_shoelace(p):
    assert area(p) == pytest.approx(shoelace_area(boundary_points(p).points), rel=1e-3)


@given(small_fourier_bodies())
def test_principal_radius_linear(p):
    th = p.thetas
    shifted = SupportProfile(p.values + 0.1 * np.cos(th) - 0.05 * np.sin(th))
    assert np.allclose(principal_radius(shifted, "spectral"), principal_radius(p, "spectral"), atol=1e-12)


# -- csv --------------------------------------------------------------------------------


def test_profile_csv_roundtrip(tmp_path):
    p = ellipse(1.2, 0.8, 64)
    path = write_profile_csv(p, tmp_path / "p.csv")
    text = path.read_bytes()
    assert text.startswith(b"theta,h\n") and b"\r" not in text
    q = read_profile_csv(path)
    assert np.array_equal(q.values, p.values)


def test_profile_csv_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n0,1\n")
    with pytest.raises(ConfigurationError):
        read_profile_csv(path)


def test_resample_exact_on_trig_polynomial():
    th = angle_grid(64)
    p = SupportProfile(1 + 0.2 * np.cos(3 * th) - 0.1 * np.sin(7 * th))
    q = resample(p, 256)
    th2 = angle_grid(256)
    assert np.allclose(q.values, 1 + 0.2 * np.cos(3 * th2) - 0.1 * np.sin(7 * th2), atol=1e-14)
    assert np.allclose(resample(p, 64).values, p.values, atol=1e-15)
    with pytest.raises(ValueError):
        resample(p, 32)
