"""Shape-function geometry: closed forms, ray integrals, invariances."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sojourn import geometry
from sojourn.errors import NonInteriorOrigin, RayResolutionFailure
from oracles import ray_integral_brute, shape_function_brute

RNG = np.random.default_rng(7)

ANALYTIC_EULER_TOL = 1e-10
FD_EULER_TOL = 1e-5
HOMOGENEITY_TOL = 1e-8
CLOSED_VS_RAY_TOL = 1e-8
BRUTE_TOL = 2e-3

angles = st.floats(0.0, 2 * np.pi, allow_nan=False)
radii = st.floats(0.2, 5.0, allow_nan=False)
scales = st.floats(0.1, 10.0, allow_nan=False)


def point(theta, r):
    return r * np.array([np.cos(theta), np.sin(theta)])


def closed_form_domains():
    return [geometry.ball(2), geometry.superellipse(), geometry.star()]


# ---------------------------------------------------------------------------
# pinned closed-form values


def test_ball_shape_function_is_minus_log():
    dom = geometry.ball(2)
    g = geometry.shape_function(dom)
    pts = RNG.normal(size=(50, 2))
    assert np.allclose(g(pts), -np.log(np.linalg.norm(pts, axis=-1)), atol=1e-13)
    assert np.allclose(g.gradient(np.array([2.0, 0.0])), [-0.5, 0.0], atol=1e-14)


def test_ball_1d_interval():
    dom = geometry.ball(1)
    g = geometry.shape_function(dom)
    assert abs(float(g(np.array([0.5]))) - np.log(2.0)) < 1e-14
    assert abs(float(geometry.r_sigma(dom, np.array([-0.25]))) - np.log(4.0)) < 1e-12


def test_superellipse_pinned_values():
    dom = geometry.superellipse()
    g = geometry.shape_function(dom)
    x = np.array([1.0, 1.0])
    assert abs(float(g(x)) + 0.25 * np.log(2.0)) < 1e-14
    assert np.allclose(g.gradient(x), [-0.5, -0.5], atol=1e-14)


def test_star_pinned_values():
    dom = geometry.star()
    g = geometry.shape_function(dom)
    assert abs(float(g(np.array([1.0, 0.0])))) < 1e-14
    # on unit vectors G reduces to -0.5 ln(cos(2t)^8 + sin(2t)^8)
    theta = np.linspace(0.05, 2 * np.pi, 17)
    u = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    expected = -0.5 * np.log(np.cos(2 * theta) ** 8 + np.sin(2 * theta) ** 8)
    assert np.allclose(g(u), expected, atol=1e-12)


# ---------------------------------------------------------------------------
# ray integral against closed forms and brute force


@pytest.mark.parametrize("dom", closed_form_domains(), ids=lambda d: d.label)
def test_r_sigma_matches_closed_form(dom):
    g = geometry.shape_function(dom)
    for _ in range(100):
        x = point(RNG.uniform(0, 2 * np.pi), RNG.uniform(0.3, 3.0))
        r_based = 0.5 * (geometry.r_sigma(dom, x) + geometry.r_sigma(dom, -x))
        closed = float(g(x))
        assert abs(r_based - closed) <= CLOSED_VS_RAY_TOL * max(1.0, abs(closed))


@pytest.mark.parametrize("dom", closed_form_domains(), ids=lambda d: d.label)
def test_ray_integral_brute_force(dom):
    for theta, r in [(0.3, 0.7), (1.1, 1.4), (2.0, 2.8), (4.4, 0.4)]:
        x = point(theta, r)
        assert abs(geometry.r_sigma(dom, x) - ray_integral_brute(dom, x)) < BRUTE_TOL


def annulus_union_domain():
    # two mu-intervals along every ray: |x| < 0.8 or 1.0 < |x| < 1.3
    def ind(pts):
        r = np.linalg.norm(pts, axis=-1)
        return (r < 0.8) | ((r > 1.0) & (r < 1.3))

    return geometry.from_indicator(ind, dimension=2, bounding_radius=1.4,
                                   label="ball-plus-shell")


def test_indicator_multiple_intervals():
    dom = annulus_union_domain()
    x = np.array([0.5, 0.2])
    nx = np.linalg.norm(x)
    expected = np.log(0.8 / nx) + np.log(1.3 / 1.0)
    assert abs(geometry.r_sigma(dom, x) - expected) < 1e-9
    assert abs(geometry.r_sigma(dom, x) - ray_integral_brute(dom, x)) < BRUTE_TOL
    intervals = geometry.ray_intervals(dom, x / nx)
    assert len(intervals) == 2
    assert abs(intervals[0][1] - 0.8) < 1e-9
    assert abs(intervals[1][0] - 1.0) < 1e-9
    assert abs(intervals[1][1] - 1.3) < 1e-9


def test_indicator_presentation_matches_radial():
    radial = geometry.superellipse()

    def ind(pts):
        return pts[..., 0] ** 4 + pts[..., 1] ** 4 < 1.0

    boxy = geometry.from_indicator(ind, dimension=2, bounding_radius=1.3)
    g_r = geometry.shape_function(radial)
    g_i = geometry.shape_function(boxy)
    for _ in range(10):
        x = point(RNG.uniform(0, 2 * np.pi), RNG.uniform(0.4, 2.0))
        assert abs(float(g_r(x)) - float(g_i(x))) < 1e-9


def test_brute_oracle_on_indicator_shape():
    dom = annulus_union_domain()
    x = point(0.9, 1.7)
    assert abs(shape_function_brute(dom, x)
               - float(geometry.shape_function(dom)(x))) < BRUTE_TOL


# ---------------------------------------------------------------------------
# invariances (property-based)


@settings(max_examples=60, deadline=None)
@given(theta=angles, r=radii, t=scales)
def test_homogeneity_closed_forms(theta, r, t):
    for dom in closed_form_domains():
        g = geometry.shape_function(dom)
        x = point(theta, r)
        lhs = float(g(t * x))
        rhs = float(g(x)) - np.log(t)
        assert abs(lhs - rhs) < HOMOGENEITY_TOL * max(1.0, abs(rhs))


@settings(max_examples=60, deadline=None)
@given(theta=angles, r=radii)
def test_euler_relation_analytic(theta, r):
    for dom in closed_form_domains():
        g = geometry.shape_function(dom)
        x = point(theta, r)
        assert abs(float(x @ g.gradient(x)) + 1.0) < ANALYTIC_EULER_TOL


@settings(max_examples=60, deadline=None)
@given(theta=angles, r=radii, t=scales)
def test_gradient_homogeneity_analytic(theta, r, t):
    for dom in closed_form_domains():
        g = geometry.shape_function(dom)
        x = point(theta, r)
        assert np.allclose(t * g.gradient(t * x), g.gradient(x),
                           rtol=1e-9, atol=1e-10)


def test_laplacian_homogeneity_analytic():
    for dom in closed_form_domains():
        g = geometry.shape_function(dom)
        for _ in range(20):
            x = point(RNG.uniform(0, 2 * np.pi), RNG.uniform(0.3, 2.0))
            t = RNG.uniform(0.2, 4.0)
            assert abs(t ** 2 * float(g.laplacian(t * x)) - float(g.laplacian(x))) \
                < 1e-8 * max(1.0, abs(float(g.laplacian(x))))


def wobble_domain():
    def profile(u):
        u = np.asarray(u)
        theta = np.arctan2(u[..., 1], u[..., 0])
        return 1.0 + 0.25 * np.cos(4.0 * theta)

    return geometry.from_radial_profile(profile, dimension=2,
                                        bounding_radius=1.3, label="wobble")


def test_euler_relation_fd():
    g = geometry.shape_function(wobble_domain())
    assert not g.analytic
    for _ in range(25):
        x = point(RNG.uniform(0, 2 * np.pi), RNG.uniform(0.3, 2.5))
        assert abs(float(x @ g.gradient(x)) + 1.0) < FD_EULER_TOL


def test_fd_gradient_matches_analytic():
    for dom in closed_form_domains():
        g = geometry.shape_function(dom)
        num = geometry._fd_gradient(g, 2)
        for _ in range(10):
            x = point(RNG.uniform(0, 2 * np.pi), RNG.uniform(0.4, 2.0))
            assert np.allclose(num(x), g.gradient(x), rtol=1e-6, atol=1e-7)


def test_fd_laplacian_matches_analytic():
    for dom in closed_form_domains():
        g = geometry.shape_function(dom)
        num = geometry._fd_laplacian(g, 2)
        for _ in range(10):
            x = point(RNG.uniform(0, 2 * np.pi), RNG.uniform(0.4, 2.0))
            assert abs(float(num(x)) - float(g.laplacian(x))) \
                < 1e-5 * max(1.0, abs(float(g.laplacian(x))))


def test_g_depends_only_on_symmetrised_set():
    def lopsided(u):
        u = np.asarray(u)
        theta = np.arctan2(u[..., 1], u[..., 0])
        return np.exp(0.3 * np.cos(theta) + 0.1 * np.sin(2 * theta))

    def symmetrised(u):
        return np.sqrt(lopsided(u) * lopsided(-np.asarray(u)))

    d1 = geometry.from_radial_profile(lopsided, 2, 2.0, label="lopsided")
    d2 = geometry.from_radial_profile(symmetrised, 2, 2.0, label="even part")
    g1 = geometry.shape_function(d1)
    g2 = geometry.shape_function(d2)
    pts = RNG.normal(size=(30, 2))
    assert np.allclose(g1(pts), g2(pts), atol=1e-12)


# ---------------------------------------------------------------------------
# assumption checks


def test_symmetric_domains_pass():
    for dom in closed_form_domains():
        rep = geometry.check_assumption_sigma(dom, n_directions=32)
        assert rep.passed
        assert rep.max_defect < 1e-9


def test_shifted_ball_fails_symmetry():
    def ind(pts):
        pts = np.asarray(pts)
        return (pts[..., 0] - 0.3) ** 2 + pts[..., 1] ** 2 < 1.0

    dom = geometry.from_indicator(ind, 2, bounding_radius=1.5, label="shifted")
    rep = geometry.check_assumption_sigma(dom, n_directions=16)
    assert rep.origin_interior
    assert not rep.symmetric
    assert rep.max_defect > 0.1


def test_origin_not_interior_raises():
    def ind(pts):
        pts = np.asarray(pts)
        return (pts[..., 0] - 2.0) ** 2 + pts[..., 1] ** 2 < 1.0

    dom = geometry.from_indicator(ind, 2, bounding_radius=3.5, label="far")
    with pytest.raises(NonInteriorOrigin):
        geometry.r_sigma(dom, np.array([1.0, 0.0]))
    rep = geometry.check_assumption_sigma(dom, n_directions=8)
    assert not rep.origin_interior


def test_unbounded_beyond_bounding_radius_raises():
    def ind(pts):
        return np.ones(np.asarray(pts).shape[:-1], dtype=bool)

    dom = geometry.from_indicator(ind, 2, bounding_radius=1.0, label="leaky")
    with pytest.raises(RayResolutionFailure):
        geometry.ray_intervals(dom, np.array([1.0, 0.0]))


# ---------------------------------------------------------------------------
# rescaled boundary


def test_tilde_boundary_is_level_set():
    for dom in closed_form_domains():
        g = geometry.shape_function(dom)
        for r in (0.5, 1.0, 3.0):
            curve = geometry.tilde_boundary(dom, r, n_samples=64)
            assert np.allclose(g(curve), -np.log(r), atol=1e-12)


def test_tilde_boundary_of_ball_is_circle():
    curve = geometry.tilde_boundary(geometry.ball(2), 2.5, n_samples=128)
    assert np.allclose(np.linalg.norm(curve, axis=-1), 2.5, atol=1e-13)


def test_field_orthogonal_to_tilde_boundary():
    assert geometry.tilde_orthogonality_residual(geometry.ball(2), 1.0) < 1e-12
    assert geometry.tilde_orthogonality_residual(geometry.superellipse(), 1.0) < 1e-4
    assert geometry.tilde_orthogonality_residual(geometry.star(), 2.0) < 1e-3
