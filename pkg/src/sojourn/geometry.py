"""Star-shaped neighbourhoods of the origin and their shape functions.

A bounded open set Sigma containing 0 enters only through the ray integral

    R(x) = lim_{eps->0} ( int_eps^oo dmu/mu 1_Sigma(mu x) + ln eps ),

which for a set star-shaped with radial profile rho collapses to
ln rho(x/|x|) - ln|x|, and in general is a finite sum of log interval
ratios along the ray.  The even part G(x) = (R(x) + R(-x))/2 is the shape
function: log-homogeneous, G(tx) = G(x) - ln t for t > 0, with Euler
relation x . grad G(x) = -1 away from the origin.  Everything downstream
(dilation field, flow, generator) consumes G only through value, gradient
and Laplacian, bundled in ShapeFunction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NonInteriorOrigin, RayResolutionFailure

# Ray-scan defaults.  Features thinner than bounding_radius/RAY_SAMPLES along a
# ray are invisible to the interval detector; widen ray_samples if the domain
# is that filigree.
RAY_SAMPLES = 4096
BISECT_RTOL = 1e-12
GRAD_STEP = 1e-5
LAP_STEP = 1e-4


@dataclass(frozen=True)
class DomainModel:
    """Bounded open neighbourhood of the origin.

    kind "radial": star-shaped, radial_profile maps unit vectors (..., d) to
    boundary distances.  kind "indicator": arbitrary, indicator maps points
    (..., d) to booleans; bounding_radius must enclose the set.
    closed_form marks shapes whose G has an analytic expression.
    """

    dimension: int
    kind: str
    bounding_radius: float
    label: str = "domain"
    radial_profile: Callable[[np.ndarray], np.ndarray] | None = None
    indicator: Callable[[np.ndarray], np.ndarray] | None = None
    closed_form: str | None = None
    ray_samples: int = RAY_SAMPLES

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.kind not in ("radial", "indicator"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "radial" and self.radial_profile is None:
            raise ValueError("radial domain needs a radial_profile")
        if self.kind == "indicator" and self.indicator is None:
            raise ValueError("indicator domain needs an indicator")
        if not (self.bounding_radius > 0 and np.isfinite(self.bounding_radius)):
            raise ValueError("bounding_radius must be positive and finite")

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Indicator of Sigma on an array of points (..., d)."""
        pts = np.asarray(points, dtype=float)
        if pts.shape[-1] != self.dimension:
            raise ValueError("point dimension mismatch")
        if self.kind == "indicator":
            return np.asarray(self.indicator(pts), dtype=bool)
        norms = np.linalg.norm(pts, axis=-1)
        out = np.zeros(norms.shape, dtype=bool)
        inside = norms < self.bounding_radius
        origin = norms == 0.0
        out |= origin
        sel = inside & ~origin
        if np.any(sel):
            units = pts[sel] / norms[sel][..., None]
            out[sel] = norms[sel] < np.asarray(self.radial_profile(units), dtype=float)
        return out


# ---------------------------------------------------------------------------
# Built-in shapes


def ball(dimension: int = 2) -> DomainModel:
    """Unit ball; in d=1 the interval (-1, 1).  G(x) = -ln|x|."""

    def profile(u):
        u = np.asarray(u, dtype=float)
        return np.ones(u.shape[:-1])

    return DomainModel(
        dimension=dimension,
        kind="radial",
        bounding_radius=1.0,
        label="ball",
        radial_profile=profile,
        closed_form="ball",
    )


def superellipse() -> DomainModel:
    """Quartic superellipse {x1^4 + x2^4 < 1}.  G(x) = -ln(x1^4+x2^4)/4."""

    def profile(u):
        u = np.asarray(u, dtype=float)
        return (u[..., 0] ** 4 + u[..., 1] ** 4) ** -0.25

    return DomainModel(
        dimension=2,
        kind="radial",
        bounding_radius=2.0 ** 0.25 * 1.000001,
        label="superellipse",
        radial_profile=profile,
        closed_form="superellipse",
    )


def star() -> DomainModel:
    """Eight-lobed star with profile [cos(2t)^8 + sin(2t)^8]^(-1/2)."""

    def profile(u):
        u = np.asarray(u, dtype=float)
        c2 = u[..., 0] ** 2 - u[..., 1] ** 2          # cos(2t) on unit vectors
        s2 = 2.0 * u[..., 0] * u[..., 1]              # sin(2t)
        return (c2 ** 8 + s2 ** 8) ** -0.5

    return DomainModel(
        dimension=2,
        kind="radial",
        bounding_radius=8.0 ** 0.5 * 1.000001,
        label="star",
        radial_profile=profile,
        closed_form="star",
    )


def from_radial_profile(profile, dimension, bounding_radius, label="radial") -> DomainModel:
    return DomainModel(
        dimension=dimension,
        kind="radial",
        bounding_radius=bounding_radius,
        label=label,
        radial_profile=profile,
    )


def from_indicator(indicator, dimension, bounding_radius, label="indicator",
                   ray_samples=RAY_SAMPLES) -> DomainModel:
    return DomainModel(
        dimension=dimension,
        kind="indicator",
        bounding_radius=bounding_radius,
        label=label,
        indicator=indicator,
        ray_samples=ray_samples,
    )


# ---------------------------------------------------------------------------
# Ray integral


def _check_origin_interior(domain: DomainModel):
    probe = np.zeros(domain.dimension)
    if not bool(np.asarray(domain.contains(probe))):
        raise NonInteriorOrigin(f"origin not inside domain {domain.label!r}")


def ray_intervals(domain: DomainModel, direction: np.ndarray) -> list[tuple[float, float]]:
    """mu-intervals where mu*u lies in Sigma, for a unit direction u.

    The first interval starts at 0 (origin interior).  Crossings are located
    by scanning ray_samples points up to just past the bounding radius and
    bisecting each sign change to relative tolerance BISECT_RTOL.
    """
    u = np.asarray(direction, dtype=float)
    nu = np.linalg.norm(u)
    if nu == 0:
        raise ValueError("direction must be nonzero")
    u = u / nu

    if domain.kind == "radial":
        rho = float(np.asarray(domain.radial_profile(u)))
        if not (rho > 0 and np.isfinite(rho)):
            raise RayResolutionFailure(f"profile not positive along {u}")
        return [(0.0, rho)]

    _check_origin_interior(domain)
    mu_max = domain.bounding_radius * 1.05
    n = domain.ray_samples
    mu = np.linspace(mu_max / n, mu_max, n)
    inside = np.asarray(domain.contains(mu[:, None] * u), dtype=bool)
    if inside[-1]:
        raise RayResolutionFailure(
            f"domain {domain.label!r} extends past its bounding radius along {u}")
    if not inside[0]:
        # origin is interior but the first sample already left the set: the
        # innermost component is thinner than the scan step
        raise RayResolutionFailure("innermost mu-interval below scan resolution")

    def bisect(lo, hi, want_inside_left):
        # invariant: contains(lo*u) == want_inside_left != contains(hi*u)
        while hi - lo > BISECT_RTOL * hi:
            mid = 0.5 * (lo + hi)
            if bool(np.asarray(domain.contains(mid * u))) == want_inside_left:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    intervals = []
    entry = 0.0
    state = True
    prev = mu[0]
    for i in range(1, n):
        if inside[i] != state:
            cross = bisect(prev, mu[i], state)
            if state:
                intervals.append((entry, cross))
            else:
                entry = cross
            state = inside[i]
        prev = mu[i]
    if state:
        intervals.append((entry, mu[-1]))
    return intervals


def r_sigma(domain: DomainModel, x: np.ndarray) -> float:
    """Ray integral R(x): the ln(eps) regularisation cancels against the
    innermost interval, leaving ln(b1/|x|) + sum ln(bi/ai)."""
    x = np.asarray(x, dtype=float)
    nx = np.linalg.norm(x)
    if nx == 0:
        raise ValueError("R is undefined at the origin")
    _check_origin_interior(domain)
    intervals = ray_intervals(domain, x / nx)
    # scale: 1_Sigma(mu x) = 1_Sigma((mu |x|) u)
    total = math.log(intervals[0][1] / nx)
    for a, b in intervals[1:]:
        total += math.log(b / a)
    return total


# ---------------------------------------------------------------------------
# Closed-form shape functions


def _g_ball(pts):
    r2 = np.sum(pts * pts, axis=-1)
    return -0.5 * np.log(r2)


def _grad_ball(pts):
    r2 = np.sum(pts * pts, axis=-1)
    return -pts / r2[..., None]


def _lap_ball(pts, dimension):
    r2 = np.sum(pts * pts, axis=-1)
    return (2.0 - dimension) / r2


def _g_superellipse(pts):
    sq = pts * pts
    s = sq[..., 0] * sq[..., 0] + sq[..., 1] * sq[..., 1]
    return -0.25 * np.log(s)


# np.power takes a slow scalar path on negative bases, so odd powers of
# signed coordinates are spelled as products throughout


def _grad_superellipse(pts):
    sq = pts * pts
    s = sq[..., 0] * sq[..., 0] + sq[..., 1] * sq[..., 1]
    return -(sq * pts) / s[..., None]


def _lap_superellipse(pts):
    sq = pts * pts
    q = sq * sq
    s = q[..., 0] + q[..., 1]
    six = q[..., 0] * sq[..., 0] + q[..., 1] * sq[..., 1]
    return -3.0 * (sq[..., 0] + sq[..., 1]) / s + 4.0 * six / (s * s)


def _star_pieces(pts):
    x1, x2 = pts[..., 0], pts[..., 1]
    a = x1 * x1 - x2 * x2
    c = x1 * x2
    a2, c2 = a * a, c * c
    a4, c4 = a2 * a2, c2 * c2
    a8, c8 = a4 * a4, c4 * c4
    b = a8 + 256.0 * c8
    a7 = a4 * a2 * a
    c7 = c4 * c2 * c
    a6 = a4 * a2
    c6 = c4 * c2
    return x1, x2, a6, c6, a7, c7, b


def _g_star(pts):
    r2 = np.sum(pts * pts, axis=-1)
    b = _star_pieces(pts)[-1]
    return 3.5 * np.log(r2) - 0.5 * np.log(b)


def _grad_star(pts):
    r2 = np.sum(pts * pts, axis=-1)
    x1, x2, a6, c6, a7, c7, b = _star_pieces(pts)
    db1 = 16.0 * x1 * a7 + 2048.0 * x2 * c7
    db2 = -16.0 * x2 * a7 + 2048.0 * x1 * c7
    out = np.empty_like(pts)
    out[..., 0] = 7.0 * x1 / r2 - 0.5 * db1 / b
    out[..., 1] = 7.0 * x2 / r2 - 0.5 * db2 / b
    return out


def _lap_star(pts):
    # G = 3.5 ln r^2 - 0.5 ln B; the first term is harmonic in d=2
    r2 = np.sum(pts * pts, axis=-1)
    x1, x2, a6, c6, a7, c7, b = _star_pieces(pts)
    db1 = 16.0 * x1 * a7 + 2048.0 * x2 * c7
    db2 = -16.0 * x2 * a7 + 2048.0 * x1 * c7
    lap_b = 56.0 * r2 * (4.0 * a6 + 256.0 * c6)
    return -0.5 * (lap_b / b - (db1 * db1 + db2 * db2) / (b * b))


# ---------------------------------------------------------------------------
# ShapeFunction bundle


@dataclass(frozen=True)
class ShapeFunction:
    """Callable bundle (value, gradient, laplacian) for a domain's G."""

    domain: DomainModel
    _value: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _gradient: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    _laplacian: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    analytic: bool = False

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self._value(np.asarray(points, dtype=float))

    def gradient(self, points: np.ndarray) -> np.ndarray:
        return self._gradient(np.asarray(points, dtype=float))

    def laplacian(self, points: np.ndarray) -> np.ndarray:
        return self._laplacian(np.asarray(points, dtype=float))


def _numeric_value(domain: DomainModel):
    if domain.kind == "radial":
        profile = domain.radial_profile

        def value(pts):
            nrm = np.linalg.norm(pts, axis=-1)
            if np.any(nrm == 0):
                raise ValueError("G is undefined at the origin")
            units = pts / nrm[..., None]
            rp = np.asarray(profile(units), dtype=float)
            rm = np.asarray(profile(-units), dtype=float)
            return 0.5 * (np.log(rp) + np.log(rm)) - np.log(nrm)

        return value

    def value(pts):
        pts = np.asarray(pts, dtype=float)
        flat = pts.reshape(-1, domain.dimension)
        out = np.array([0.5 * (r_sigma(domain, p) + r_sigma(domain, -p)) for p in flat])
        return out.reshape(pts.shape[:-1])

    return value


def _fd_gradient(value, dimension):
    def gradient(pts):
        pts = np.asarray(pts, dtype=float)
        nrm = np.linalg.norm(pts, axis=-1)[..., None]
        out = np.empty(pts.shape)
        for j in range(dimension):
            h = GRAD_STEP * nrm[..., 0]
            e = np.zeros(dimension)
            e[j] = 1.0
            out[..., j] = (value(pts + h[..., None] * e) - value(pts - h[..., None] * e)) / (2.0 * h)
        return out

    return gradient


def _fd_laplacian(value, dimension):
    def laplacian(pts):
        pts = np.asarray(pts, dtype=float)
        nrm = np.linalg.norm(pts, axis=-1)
        h = LAP_STEP * nrm
        centre = value(pts)
        acc = np.zeros(pts.shape[:-1])
        for j in range(dimension):
            e = np.zeros(dimension)
            e[j] = 1.0
            acc += value(pts + h[..., None] * e) + value(pts - h[..., None] * e) - 2.0 * centre
        return acc / h ** 2

    return laplacian


def shape_function(domain: DomainModel) -> ShapeFunction:
    """Build the (value, gradient, laplacian) bundle, analytic when known."""
    if domain.closed_form == "ball":
        d = domain.dimension
        return ShapeFunction(domain, _g_ball, _grad_ball,
                             lambda pts: _lap_ball(pts, d), analytic=True)
    if domain.closed_form == "superellipse":
        return ShapeFunction(domain, _g_superellipse, _grad_superellipse,
                             _lap_superellipse, analytic=True)
    if domain.closed_form == "star":
        return ShapeFunction(domain, _g_star, _grad_star, _lap_star, analytic=True)
    value = _numeric_value(domain)
    return ShapeFunction(domain, value, _fd_gradient(value, domain.dimension),
                         _fd_laplacian(value, domain.dimension), analytic=False)


def g_sigma(domain: DomainModel, x: np.ndarray) -> np.ndarray:
    """Shape function G(x) = (R(x) + R(-x))/2."""
    return shape_function(domain)(x)


def grad_g(domain: DomainModel, x: np.ndarray) -> np.ndarray:
    """Gradient of G; central differences when no closed form is known."""
    return shape_function(domain).gradient(x)


# ---------------------------------------------------------------------------
# Assumption checks


@dataclass(frozen=True)
class SymmetryReport:
    """Per-direction symmetry defects int dmu [1(mu u) - 1(-mu u)]."""

    directions: np.ndarray
    defects: np.ndarray
    max_defect: float
    origin_interior: bool
    bounded: bool
    tolerance: float

    @property
    def symmetric(self) -> bool:
        return self.max_defect <= self.tolerance

    @property
    def passed(self) -> bool:
        return self.symmetric and self.origin_interior and self.bounded


def _direction_set(domain: DomainModel, n_directions: int, rng) -> np.ndarray:
    d = domain.dimension
    if d == 1:
        return np.array([[1.0]])
    if d == 2:
        theta = np.linspace(0.0, np.pi, n_directions, endpoint=False)
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    rng = np.random.default_rng(rng)
    vecs = rng.standard_normal((n_directions, d))
    return vecs / np.linalg.norm(vecs, axis=-1, keepdims=True)


def check_assumption_sigma(domain: DomainModel, n_directions: int = 64,
                           tolerance: float = 1e-9, rng=0) -> SymmetryReport:
    """Verify Sigma is a bounded open neighbourhood of 0 with vanishing
    symmetry defect along sampled directions (antipodal pairs)."""
    try:
        _check_origin_interior(domain)
        origin_interior = True
    except NonInteriorOrigin:
        origin_interior = False

    dirs = _direction_set(domain, n_directions, rng)
    defects = np.empty(len(dirs))
    bounded = True
    for i, u in enumerate(dirs):
        try:
            plus = ray_intervals(domain, u)
            minus = ray_intervals(domain, -u)
        except (RayResolutionFailure, NonInteriorOrigin):
            bounded = False
            defects[i] = np.inf
            continue
        defects[i] = abs(sum(b - a for a, b in plus) - sum(b - a for a, b in minus))
    return SymmetryReport(
        directions=dirs,
        defects=defects,
        max_defect=float(np.max(defects)) if len(defects) else 0.0,
        origin_interior=origin_interior,
        bounded=bounded,
        tolerance=tolerance,
    )


# ---------------------------------------------------------------------------
# Rescaled boundary and field orthogonality


def tilde_boundary(domain: DomainModel, radius: float, n_samples: int = 2048) -> np.ndarray:
    """Closed polyline of the rescaled boundary {r e^{G(u)} u} in d=2.

    This curve is the level set {G = -ln r}: G(r e^{G(u)} u) = -ln r by
    log-homogeneity.
    """
    if domain.dimension != 2:
        raise ValueError("tilde boundary polylines are a d=2 construct")
    g = shape_function(domain)
    theta = np.linspace(0.0, 2.0 * np.pi, n_samples, endpoint=False)
    units = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    scale = radius * np.exp(g(units))
    return scale[:, None] * units


def tilde_orthogonality_residual(domain: DomainModel, radius: float = 1.0,
                                 n_samples: int = 2048) -> float:
    """Max |cos angle| between grad G and the numerical tangent of the
    rescaled boundary.  Zero means the dilation field crosses it normally
    (the field is -grad G times a positive scalar, so the symbol drops out).
    """
    curve = tilde_boundary(domain, radius, n_samples)
    g = shape_function(domain)
    grad = g.gradient(curve)
    tangent = np.roll(curve, -1, axis=0) - np.roll(curve, 1, axis=0)
    num = np.abs(np.sum(grad * tangent, axis=-1))
    den = np.linalg.norm(grad, axis=-1) * np.linalg.norm(tangent, axis=-1)
    return float(np.max(num / den))
