import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from torqflow.errors import ValidationError
from torqflow.geometry import SupportProfile, boundary_points, disk, ellipse
from torqflow.mesh import MeshTemplate
from torqflow.orlicz import eval_density, make_density, make_phi, mixed_rigidity, phi_hat
from torqflow.torsion import rigidity, rigidity_from_boundary, solve_torsion

from conftest import solved

KINDS = [
    {"kind": "power", "p": 1.0},
    {"kind": "power", "p": 0.5},
    {"kind": "power", "p": 2.0},
    # a * 100 stays moderate: for a = 0.7, phi(100) ~ e^70 and phi_hat is flat to
    # machine precision there, so no float64 difference quotient resolves 1/phi
    {"kind": "exponential", "a": 0.05},
    {"kind": "tabulated", "s": [0.0, 0.5, 1.0, 2.0, 4.0], "phi": [0.1, 0.4, 1.0, 2.5, 6.0]},
]


@pytest.mark.parametrize("spec", KINDS, ids=lambda s: s["kind"] + str(s.get("p", "")))
def test_hat_derivative_is_reciprocal(spec):
    phi = make_phi(spec)
    s = np.logspace(-2, 2, 50)
    step = 1e-5 * s
    d = (phi_hat(phi, s + step) - phi_hat(phi, s - step)) / (2 * step)
    assert np.max(np.abs(d * phi(s) - 1)) <= 1e-6


@pytest.mark.parametrize("spec", KINDS, ids=lambda s: s["kind"] + str(s.get("p", "")))
def test_hat_vanishes_at_base(spec):
    phi = make_phi(spec)
    if phi.hat_base > 0:
        assert phi_hat(phi, phi.hat_base) == pytest.approx(0.0, abs=1e-14)
    else:
        assert phi_hat(phi, 1e-12) == pytest.approx(0.0, abs=1e-5)


def test_base_points():
    assert make_phi({"kind": "power", "p": 1.0}).hat_base == 1.0
    assert make_phi({"kind": "power", "p": 0.5}).hat_base == 0.0
    assert make_phi({"kind": "exponential", "a": 1.0}).hat_base == 1.0


def test_hat_examples():
    assert phi_hat(make_phi({"kind": "power", "p": 1.0}), 2.0) == pytest.approx(math.log(2))
    assert phi_hat(make_phi({"kind": "power", "p": 0.5}), 4.0) == pytest.approx(4.0)


def test_hat_rejects_nonpositive():
    phi = make_phi({"kind": "power", "p": 1.0})
    for s in (0.0, -1.0):
        with pytest.raises(ValueError):
            phi_hat(phi, s)


def test_phi_parameter_errors():
    for spec in ({"kind": "power", "p": 0.0}, {"kind": "power", "p": -1}, {"kind": "exponential", "a": 0}):
        with pytest.raises(ValueError):
            make_phi(spec)
    with pytest.raises(ValueError):
        make_phi({"kind": "cubic"})


def test_tabulated_validation():
    with pytest.raises(ValidationError):
        make_phi({"kind": "tabulated", "s": [0, 1, 2], "phi": [0.1, 0.5, 0.4]})
    with pytest.raises(ValidationError):
        make_phi({"kind": "tabulated", "s": [0, 2, 1], "phi": [0.1, 0.5, 0.9]})
    with pytest.raises(ValidationError):
        make_phi({"kind": "tabulated", "s": [0, 1], "phi": [0.1]})


def test_convexity_recorded_not_enforced():
    assert make_phi({"kind": "power", "p": 2.0}).convex
    assert not make_phi({"kind": "power", "p": 0.5}).convex


def test_derivatives_consistent():
    for spec in KINDS:
        phi = make_phi(spec)
        s = np.linspace(0.3, 3.7, 23)
        fd = (phi(s + 1e-6) - phi(s - 1e-6)) / 2e-6
        assert np.allclose(phi.deriv(s), fd, rtol=1e-5)


# -- densities ----------------------------------------------------------------------------


def test_density_examples():
    one = make_density({"kind": "fourier", "a0": 1.0})
    assert np.all(eval_density(one, np.linspace(0, 6, 13)) == 1.0)
    f = make_density({"kind": "fourier", "a0": 1.0, "cos": [0.3]})
    assert eval_density(f, 0.0) == pytest.approx(1.3)
    assert f.min_value == pytest.approx(0.7, rel=1e-6)
    with pytest.raises(ValidationError):
        make_density({"kind": "fourier", "a0": 1.0, "cos": [-1.2]})


def test_density_from_scalar():
    assert eval_density(make_density(2.5), 1.0) == 2.5
    with pytest.raises(ValidationError):
        make_density(0.0)


@given(st.lists(st.floats(-0.2, 0.2), min_size=1, max_size=8), st.lists(st.floats(-0.2, 0.2), max_size=8))
def test_small_densities_accepted(cos, sin):
    f = make_density({"a0": 2.0, "cos": cos, "sin": sin})
    assert f.min_value > 0


# -- mixed rigidity --------------------------------------------------------------------------


def test_mixed_with_itself_is_rigidity():
    p, f = solved("disk", 2.0)
    phi = make_phi({"kind": "power", "p": 1.0})
    m = mixed_rigidity(p, f, p, phi)
    assert m == pytest.approx(rigidity_from_boundary(p, f))
    assert m == pytest.approx(math.pi / 8, rel=0.02)


@pytest.mark.parametrize("power", [0.5, 1.0, 2.0])
def test_mixed_homogeneity(power):
    p, f = solved("ellipse", 3.0)
    phi = make_phi({"kind": "power", "p": power})
    base = mixed_rigidity(p, f, p, phi)
    scaled = mixed_rigidity(p, f, SupportProfile(1.7 * p.values), phi)
    assert scaled == pytest.approx(1.7**power * base, rel=1e-12)


def test_mixed_is_first_variation():
    """d/dt T^(1/(q-1))(K + tL) at t = 0 equals ((q + n(q-1))/(q-1)) times the mixed value."""
    q, t = 2.0, 1e-3
    k, l = disk(1.0, 256), ellipse(1.2, 0.8, 256)
    tpl = MeshTemplate(boundary_points(k).points, 0.05)

    def tilde(profile):
        return rigidity(solve_torsion(tpl.apply(boundary_points(profile).points), q)) ** (1 / (q - 1))

    plus = tilde(SupportProfile(k.values + t * l.values))
    minus = tilde(SupportProfile(k.values - t * l.values))
    fd = (plus - minus) / (2 * t)
    kf = solve_torsion(tpl.apply(boundary_points(k).points), q)
    m = mixed_rigidity(k, kf, l, make_phi({"kind": "power", "p": 1.0}))
    assert fd / ((q + 2 * (q - 1)) / (q - 1)) == pytest.approx(m, rel=0.05)


def test_mixed_grid_mismatch():
    p, f = solved("disk", 2.0)
    with pytest.raises(ValueError):
        mixed_rigidity(p, f, disk(1.0, 128), make_phi({"kind": "power", "p": 1.0}))
    with pytest.raises(ValueError):
        mixed_rigidity(p, f, p, make_phi({"kind": "power", "p": 1.0}), q=3.0)
