"""Anisotropic dilation fields and their flows.

The field F(x) = -grad G(x) f(x^2/2) dilates along the shape function G
instead of radially.  Its flow xi_t (d/dt xi = -F(xi), xi_0 = x) has a
scalar first integral: by the Euler relation, d(xi^2)/dt = -2 f(xi^2/2),
so for t < 0 the implicit formula

    2 t + int_{x^2}^{xi_t^2} du / f(u/2) = 0

pins |xi_t| independently of the direction.  The Jacobian eta_t =
det(grad xi_t) obeys d ln(eta)/dt = -div F(xi_t); for the ball with
f(u) = 2u the flow is exactly e^{-t} x with eta_t = e^{-dt}.

Admissible symbols vanish at 0 and are positive on (0, oo).  The linear
symbol f(u) = 2u is only regular enough at the origin for the ball; the
family f_g(u) = 2 u^3 / (u^2 + g) is regular for every shape and recovers
the linear symbol as g -> 0 on any energy shell away from 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .errors import (OriginSingularity, QuadratureFailure, StepBudgetExceeded,
                     StepUnderflow)
from .geometry import DomainModel, ShapeFunction, shape_function

FLOW_DT = 1e-3
FLOW_BUDGET = 1_000_000


@dataclass(frozen=True)
class Symbol:
    """Dilation speed f as a function of kinetic energy u = x^2/2."""

    kind: str                       # "linear" | "gamma" | "custom"
    gamma: float = 0.0
    fn: Callable[[np.ndarray], np.ndarray] | None = None
    dfn: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.kind not in ("linear", "gamma", "custom"):
            raise ValueError(f"unknown symbol kind {self.kind!r}")
        if self.kind == "gamma" and not self.gamma > 0:
            raise ValueError("gamma symbol needs gamma > 0")
        if self.kind == "custom" and (self.fn is None or self.dfn is None):
            raise ValueError("custom symbol needs fn and dfn")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "linear":
            return 2.0 * u
        if self.kind == "gamma":
            return 2.0 * u ** 3 / (u ** 2 + self.gamma)
        return np.asarray(self.fn(u), dtype=float)

    def derivative(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "linear":
            return np.full(u.shape, 2.0)
        if self.kind == "gamma":
            return (2.0 * u ** 4 + 6.0 * self.gamma * u ** 2) / (u ** 2 + self.gamma) ** 2
        return np.asarray(self.dfn(u), dtype=float)

    @property
    def label(self) -> str:
        if self.kind == "linear":
            return "f=2u"
        if self.kind == "gamma":
            return f"f_gamma({self.gamma:g})"
        return "custom"


def linear_symbol() -> Symbol:
    return Symbol(kind="linear")


def gamma_symbol(gamma: float) -> Symbol:
    return Symbol(kind="gamma", gamma=gamma)


@dataclass(frozen=True)
class VectorFieldF:
    """F(x) = -grad G(x) f(x^2/2) for a domain and symbol."""

    shape: ShapeFunction
    symbol: Symbol

    @property
    def domain(self) -> DomainModel:
        return self.shape.domain

    @property
    def regular_at_origin(self) -> bool:
        # the linear symbol only cancels the gradient blow-up for -ln|x|
        return self.symbol.kind != "linear" or self.domain.closed_form == "ball"

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return field_eval(self, points)

    def divergence(self, points: np.ndarray) -> np.ndarray:
        """div F = -lap G f(x^2/2) + f'(x^2/2), using x . grad G = -1."""
        pts = np.asarray(points, dtype=float)
        flat = pts.reshape(-1, pts.shape[-1])
        u = 0.5 * np.sum(flat * flat, axis=-1)
        out = np.empty(len(flat))
        origin = u == 0.0
        live = ~origin
        if np.any(live):
            out[live] = (-self.shape.laplacian(flat[live]) * self.symbol(u[live])
                         + self.symbol.derivative(u[live]))
        if np.any(origin):
            out[origin] = _divergence_at_origin(self)
        return out.reshape(pts.shape[:-1])


def vector_field(domain: DomainModel, symbol: Symbol) -> VectorFieldF:
    return VectorFieldF(shape=shape_function(domain), symbol=symbol)


def _divergence_at_origin(fld: VectorFieldF) -> float:
    if fld.symbol.kind == "gamma":
        return 0.0  # f ~ u^3 kills the 1/x^2 Laplacian blow-up; f'(0) = 0
    if fld.symbol.kind == "linear" and fld.domain.closed_form == "ball":
        return float(fld.domain.dimension)
    raise OriginSingularity(
        f"divergence of F at 0 undefined for symbol {fld.symbol.label} on "
        f"domain {fld.domain.label!r}")


def field_eval(fld: VectorFieldF, points: np.ndarray) -> np.ndarray:
    """Evaluate F; raises OriginSingularity at x = 0 when the symbol/domain
    pair is not regular there (use a gamma symbol instead)."""
    pts = np.asarray(points, dtype=float)
    flat = pts.reshape(-1, pts.shape[-1])
    r2 = np.sum(flat * flat, axis=-1)
    origin = r2 == 0.0
    if np.any(origin) and not fld.regular_at_origin:
        raise OriginSingularity(
            f"F undefined at 0 for symbol {fld.symbol.label} on domain "
            f"{fld.domain.label!r}; use a gamma symbol")
    # regular cases extend continuously by 0 (ball+linear gives F = x)
    out = np.zeros_like(flat)
    live = ~origin
    if np.any(live):
        p = flat[live]
        out[live] = -fld.shape.gradient(p) * fld.symbol(0.5 * r2[live])[:, None]
    return out.reshape(pts.shape)


# ---------------------------------------------------------------------------
# Flow integration


@dataclass(frozen=True)
class FlowResult:
    """Endpoint of the flow plus the log-Jacobian along it."""

    xi: np.ndarray
    log_eta: np.ndarray
    t: float
    dt: float
    n_steps: int

    @property
    def eta(self) -> np.ndarray:
        return np.exp(self.log_eta)


def integrate_flow(fld: VectorFieldF, x0: np.ndarray, t: float,
                   dt: float = FLOW_DT, budget: int = FLOW_BUDGET) -> FlowResult:
    """Fixed-step RK4 for d/ds (xi, ln eta) = (-F(xi), -div F(xi)).

    x0 may be a single point (d,) or a batch (..., d); the batch is advanced
    in lockstep.  dt is shrunk to divide t exactly.
    """
    x0 = np.asarray(x0, dtype=float)
    if t == 0.0:
        return FlowResult(xi=x0.copy(), log_eta=np.zeros(x0.shape[:-1]),
                          t=0.0, dt=dt, n_steps=0)
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = max(1, int(math.ceil(abs(t) / dt - 1e-12)))
    if n > budget:
        raise StepBudgetExceeded(f"flow needs {n} steps, budget {budget}")
    h = t / n
    if abs(h) < 1e-15 * abs(t):
        raise StepUnderflow("flow step underflowed")

    xi = x0.copy()
    log_eta = np.zeros(x0.shape[:-1])
    if np.all(np.sum(x0 * x0, axis=-1) > 0.0):
        # away from the fixed point at 0 (which the flow never reaches in
        # finite time) both right-hand sides reduce to closed-form lattice
        # arithmetic; skip the origin bookkeeping of field_eval
        grad = fld.shape.gradient
        lap = fld.shape.laplacian
        f, fp = fld.symbol, fld.symbol.derivative

        def rhs(p):
            u = 0.5 * np.sum(p * p, axis=-1)
            fu = f(u)
            return grad(p) * fu[..., None], lap(p) * fu - fp(u)
    else:
        def rhs(p):
            return -fld(p), -fld.divergence(p)

    for _ in range(n):
        k1x, k1e = rhs(xi)
        k2x, k2e = rhs(xi + 0.5 * h * k1x)
        k3x, k3e = rhs(xi + 0.5 * h * k2x)
        k4x, k4e = rhs(xi + h * k3x)
        xi = xi + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        log_eta = log_eta + (h / 6.0) * (k1e + 2.0 * k2e + 2.0 * k3e + k4e)
    return FlowResult(xi=xi, log_eta=log_eta, t=t, dt=abs(h), n_steps=n)


def scalar_energy_flow(symbol: Symbol, u0, t: float, dt: float = FLOW_DT) -> np.ndarray:
    """Advance u_t = xi_t^2 by its direction-free reduction du/dt = -2 f(u/2).

    The Euler relation makes d(xi^2)/dt = 2 xi . (-F(xi)) = -2 f(xi^2 / 2)
    for every admissible shape, so squared momenta flow independently of
    direction.
    """
    u = np.asarray(u0, dtype=float).copy()
    if t == 0.0:
        return u
    n = max(1, int(math.ceil(abs(t) / dt - 1e-12)))
    h = t / n
    for _ in range(n):
        k1 = -2.0 * symbol(0.5 * u)
        k2 = -2.0 * symbol(0.5 * (u + 0.5 * h * k1))
        k3 = -2.0 * symbol(0.5 * (u + 0.5 * h * k2))
        k4 = -2.0 * symbol(0.5 * (u + h * k3))
        u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return u


def implicit_residual(symbol: Symbol, x: np.ndarray, xi: np.ndarray, t: float) -> float:
    """Residual of 2t + int_{x^2}^{xi^2} du / f(u/2) (t < 0 branch).

    Adaptive quadrature; the symbol must stay positive on the integration
    range, else QuadratureFailure.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    a = float(np.sum(x * x))
    b = float(np.sum(xi * xi))
    if a <= 0.0 or b <= 0.0:
        raise QuadratureFailure("implicit formula needs x != 0 and xi != 0")
    lo, hi = (a, b) if a <= b else (b, a)
    probes = np.linspace(lo, hi, 64)
    if np.any(symbol(0.5 * probes) <= 0.0):
        raise QuadratureFailure(f"symbol {symbol.label} vanishes inside [{lo}, {hi}]")
    val, err = quad(lambda u: 1.0 / float(symbol(0.5 * u)), a, b,
                    epsabs=1e-13, epsrel=1e-12, limit=200)
    if not np.isfinite(val) or err > 1e-8 * max(1.0, abs(val)):
        raise QuadratureFailure(f"quadrature error {err:g} too large")
    return 2.0 * t + val


# ---------------------------------------------------------------------------
# Decay-bound probe


@dataclass(frozen=True)
class DecayProbeReport:
    """Sharpest constant C with <xi_t(x)> <= (1 + e^{-C t}) <x> on the samples.

    t < 0 samples bound C from below (growth side); t >= 0 samples are
    checked directly since the flow contracts.  violations lists (i, j)
    sample indices that fail with the returned constant.
    """

    constant: float
    ratios: np.ndarray
    times: np.ndarray
    violations: list
    n_samples: int


def decay_bound_probe(fld: VectorFieldF, points: np.ndarray, times: np.ndarray,
                      dt: float = FLOW_DT) -> DecayProbeReport:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    ts = np.asarray(times, dtype=float)
    if not (np.any(ts < 0) and np.any(ts > 0)):
        raise ValueError("probe times must include both signs")

    bracket = np.sqrt(1.0 + np.sum(pts * pts, axis=-1))
    ratios = np.empty((len(ts), len(pts)))
    for i, t in enumerate(ts):
        res = integrate_flow(fld, pts, float(t), dt=dt)
        ratios[i] = np.sqrt(1.0 + np.sum(res.xi * res.xi, axis=-1)) / bracket

    # growth side: need e^{C|t|} >= ratio - 1, i.e. C >= ln(ratio-1)/|t|
    constant = 0.0
    for i, t in enumerate(ts):
        if t >= 0:
            continue
        excess = ratios[i] - 1.0
        live = excess > 0
        if np.any(live):
            constant = max(constant, float(np.max(np.log(excess[live]) / (-t))))
    constant = max(constant, 1e-12)

    violations = []
    for i, t in enumerate(ts):
        bound = 1.0 + np.exp(-constant * t)
        for j in range(len(pts)):
            if ratios[i, j] > bound * (1.0 + 1e-12):
                violations.append((i, j))
    return DecayProbeReport(constant=constant, ratios=ratios, times=ts,
                            violations=violations, n_samples=ratios.size)
