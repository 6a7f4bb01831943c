"""Cross-module invariant suites with machine-readable results.

Each suite evaluates the runtime identities of one module on a configured
scenario and returns rows of (suite, check, status, value, bound).  Failures
are data, not exceptions: a failed identity produces a failing row and the
caller decides what to do with it.  Only an invalid configuration raises.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dilation, geometry, scattering, spectral
from .config import ExperimentConfig
from .timedelay import (VirialOperator, extrapolate_tau, region_weights,
                        wigner_rhs)

GEOMETRY_CLOSED_FORM_TOL = 1e-8
HOMOGENEITY_TOL = 1e-8
EULER_TOL = 1e-8
ORTHOGONALITY_TOL = 1e-3
BALL_LINEAR_FLOW_TOL = 1e-8
GROUP_LAW_TOL = 1e-6
IMPLICIT_TOL = 1e-6
OPERATOR_TOL = 1e-5
REFINEMENT_FACTOR = 2.0
ISOMETRY_TOL = 1e-6
INVERSION_TOL = 1e-5
# the two intertwining legs traverse different horizon lengths, so their
# Strang splitting errors do not cancel; the defect scales with dt^2 and
# sits near 1e-5 on the coarse 2d production lattice (3.8e-8 in 1d)
INTERTWINING_TOL = 5e-5
LEAKAGE_TOL = 1e-4
HERMITICITY_TOL = 1e-8
REALITY_TOL = 1e-4
EXTRAPOLATION_TOL = 1e-6


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    value: float
    bound: float
    note: str = ""

    @property
    def status(self) -> str:
        return "pass" if self.passed else "fail"

    def row(self) -> list:
        return [self.suite, self.name, self.status, float(self.value),
                float(self.bound), self.note]


TABLE_HEADER = ["suite", "check", "status", "value", "bound", "note"]


def _upper(suite, name, value, bound, note="") -> CheckResult:
    value = float(value)
    return CheckResult(suite, name, value <= bound, value, bound, note)


def _sample_points(domain, rng, count, lo=0.5, hi=2.0) -> np.ndarray:
    d = domain.dimension
    vecs = rng.standard_normal((count, d))
    units = vecs / np.linalg.norm(vecs, axis=-1, keepdims=True)
    return units * rng.uniform(lo, hi, size=(count, 1))


def _l2(grid, values) -> float:
    return float(np.sqrt(grid.volume_element * np.sum(np.abs(values) ** 2)))


# ---------------------------------------------------------------------------
# geometry


def geometry_suite(config: ExperimentConfig) -> list[CheckResult]:
    domain = config.domain.build()
    rng = np.random.default_rng(config.seed)
    out = []

    report = geometry.check_assumption_sigma(domain, rng=config.seed)
    out.append(CheckResult("geometry", "assumption-symmetry", report.passed,
                           report.max_defect, report.tolerance,
                           "bounded symmetric neighbourhood of 0"))

    pts = _sample_points(domain, rng, 20)
    closed = geometry.g_sigma(domain, pts)
    numeric_domain = geometry.from_indicator(domain.contains,
                                             domain.dimension,
                                             domain.bounding_radius,
                                             label="requadrature")
    numeric = geometry.g_sigma(numeric_domain, pts)
    rel = np.max(np.abs(numeric - closed) / np.maximum(np.abs(closed), 1.0))
    out.append(_upper("geometry", "closed-form-vs-quadrature", rel,
                      GEOMETRY_CLOSED_FORM_TOL,
                      "ray-integral G against the closed form"))

    scales = np.array([0.5, 2.0, 3.0])
    worst = 0.0
    for t in scales:
        shift = geometry.g_sigma(domain, t * pts) - closed + math.log(t)
        worst = max(worst, float(np.max(np.abs(shift))))
    out.append(_upper("geometry", "log-homogeneity", worst, HOMOGENEITY_TOL,
                      "G(t x) = G(x) - ln t"))

    grad = geometry.grad_g(domain, pts)
    euler = np.max(np.abs(np.sum(pts * grad, axis=-1) + 1.0))
    out.append(_upper("geometry", "euler-relation", euler, EULER_TOL,
                      "x . grad G = -1"))

    if domain.dimension == 2:
        ortho = geometry.tilde_orthogonality_residual(domain, 1.0)
        out.append(_upper("geometry", "tilde-orthogonality", ortho,
                          ORTHOGONALITY_TOL,
                          "grad G is normal to the rescaled boundary"))
    return out


# ---------------------------------------------------------------------------
# flow


def _window_momenta(config: ExperimentConfig, rng, count=8) -> np.ndarray:
    d = config.grid.dimension
    window = config.window.build()
    lo = math.sqrt(2.0 * window.e_min) * 1.05
    hi = math.sqrt(2.0 * window.e_max) * 0.95
    vecs = rng.standard_normal((count, d))
    units = vecs / np.linalg.norm(vecs, axis=-1, keepdims=True)
    return units * rng.uniform(lo, hi, size=(count, 1))


def flow_suite(config: ExperimentConfig) -> list[CheckResult]:
    rng = np.random.default_rng(config.seed + 1)
    domain = config.domain.build()
    symbol = config.symbol.build()
    fld = dilation.vector_field(domain, symbol)
    pts = _window_momenta(config, rng)
    out = []

    ball_fld = dilation.vector_field(geometry.ball(config.grid.dimension),
                                     dilation.linear_symbol())
    worst = 0.0
    for t in (-0.8, 0.5, 1.2):
        res = dilation.integrate_flow(ball_fld, pts, t)
        worst = max(worst, float(np.max(np.abs(res.xi - math.exp(-t) * pts))))
    out.append(_upper("flow", "ball-linear-exponential", worst,
                      BALL_LINEAR_FLOW_TOL, "xi_t(x) = exp(-t) x"))

    s, t = 0.45, 0.7
    direct = dilation.integrate_flow(fld, pts, s + t).xi
    stage = dilation.integrate_flow(fld, pts, t).xi
    composed = dilation.integrate_flow(fld, stage, s).xi
    out.append(_upper("flow", "group-law",
                      float(np.max(np.abs(direct - composed))),
                      GROUP_LAW_TOL, "xi_{s+t} = xi_s o xi_t"))

    worst = 0.0
    for x in pts:
        for tt in (-0.6, 0.9):
            xi = dilation.integrate_flow(fld, x, tt).xi
            worst = max(worst, abs(dilation.implicit_residual(symbol, x, xi,
                                                              tt)))
    out.append(_upper("flow", "implicit-formula", worst, IMPLICIT_TOL,
                      "2t + int du/f(u/2) = 0 along the flow"))

    probe = dilation.decay_bound_probe(fld, pts,
                                       np.array([-1.0, -0.4, 0.5, 1.1]))
    out.append(CheckResult("flow", "decay-bound",
                           not probe.violations and
                           math.isfinite(probe.constant),
                           float(len(probe.violations)), 0.0,
                           f"sharpest constant {probe.constant:.3g}"))
    return out


# ---------------------------------------------------------------------------
# spectral operators


def operator_suite(config: ExperimentConfig) -> list[CheckResult]:
    grid = config.grid.build()
    window = config.window.build()
    domain = config.domain.build()
    symbol = config.symbol.build()
    fld = dilation.vector_field(domain, symbol)
    psi = config.packet.build(grid, window)
    out = []

    out.append(_upper("operator", "generator-commutator",
                      spectral.gen_com_residual(psi, fld), OPERATOR_TOL,
                      "i[H0, D] = f(H0) on a windowed state"))

    out.append(_upper("operator", "group-commutator",
                      spectral.group_com_residual(psi, fld, 0.3),
                      OPERATOR_TOL, "free conjugation of D at t = 0.3"))

    t = 0.25
    energies = grid.kinetic_energies()
    inner = spectral.multiplier_apply(
        spectral.w_group_apply(psi, fld, -t, flow_dt=1e-3), energies)
    lhs = spectral.w_group_apply(inner, fld, t, flow_dt=1e-3)
    flowed = dilation.scalar_energy_flow(symbol, 2.0 * energies.ravel(),
                                         t).reshape(energies.shape)
    rhs = spectral.multiplier_apply(psi, 0.5 * flowed)
    out.append(_upper("operator", "h0-conjugation",
                      _l2(grid, lhs.values - rhs.values), OPERATOR_TOL,
                      "e^{itD} H0 e^{-itD} = xi_t(P)^2 / 2"))

    # the anisotropic interpolation error this studies vanishes identically
    # in one dimension, so the refinement probe is a fixed planar case
    probe_dom = geometry.superellipse()
    probe_sym = dilation.gamma_symbol(0.2)
    probe_fld = dilation.vector_field(probe_dom, probe_sym)
    probe_win = spectral.EnergyWindow(0.8, 4.5)
    residuals = {}
    for n in (64, 128):
        g = spectral.Grid(2, n, 42.5)
        p = spectral.window_filter(
            spectral.gaussian_packet(g, (-6.0, 0.0), (2.1, 0.7), 4.0),
            probe_win).normalized()
        residuals[n] = spectral.gen_com_residual(p, probe_fld)
    ratio = residuals[64] / max(residuals[128], 1e-300)
    out.append(CheckResult("operator", "refinement-halving",
                           ratio >= REFINEMENT_FACTOR, float(ratio),
                           REFINEMENT_FACTOR,
                           "halving the spacing cuts the commutator "
                           "residual at least in half"))

    rejected = 0
    try:
        dilation.gamma_symbol(0.0)
    except ValueError:
        rejected += 1
    try:
        dilation.Symbol(kind="affine")
    except (ValueError, TypeError):
        rejected += 1
    out.append(CheckResult("operator", "symbol-rejection", rejected == 2,
                           float(rejected), 2.0,
                           "inadmissible symbols rejected at construction "
                           "(expected failures)"))
    return out


# ---------------------------------------------------------------------------
# scattering


def scattering_suite(config: ExperimentConfig) -> list[CheckResult]:
    setup = config.build_setup()
    psi = config.build_state(setup)
    grid = setup.grid
    out = []

    chi = scattering.wave_operator(setup, psi, -1)
    out.append(_upper("scattering", "wave-operator-isometry",
                      abs(chi.norm() - 1.0), ISOMETRY_TOL,
                      "|| W_- psi || = || psi ||"))

    s_psi = scattering.s_apply(setup, psi)
    out.append(_upper("scattering", "s-unitarity",
                      abs(s_psi.norm() - 1.0), ISOMETRY_TOL,
                      "|| S psi || = || psi ||"))

    back = scattering.s_apply(setup, s_psi, adjoint=True)
    out.append(_upper("scattering", "s-adjoint-inversion",
                      _l2(grid, back.values - psi.values), INVERSION_TOL,
                      "S* S = 1 on windowed states"))

    t_shift = 2.0
    free_then_wave = scattering.wave_operator(
        setup, scattering.propagate(setup, psi, t_shift, full=False), -1)
    wave_then_full = scattering.propagate(setup, chi, t_shift, full=True)
    out.append(_upper("scattering", "intertwining",
                      _l2(grid, free_then_wave.values - wave_then_full.values),
                      INTERTWINING_TOL,
                      "W_- e^{-itH0} = e^{-itH} W_-"))

    # probe the prepared scattering state: a raw packet resting near the
    # bump is not an asymptotic configuration and radiates a switch-on halo
    leak = scattering.window_leakage(setup, chi,
                                     float(config.sojourn.time_extent))
    out.append(_upper("scattering", "window-inertness", leak, LEAKAGE_TOL,
                      "settled out-of-window mass of the full evolution "
                      "of W_- psi"))
    return out


# ---------------------------------------------------------------------------
# time delay


def delay_suite(config: ExperimentConfig) -> list[CheckResult]:
    setup = config.build_setup()
    psi = config.build_state(setup)
    domain = config.domain.build()
    symbol = config.symbol.build()
    fld = dilation.vector_field(domain, symbol)
    out = []

    virial = VirialOperator(setup, fld, symbol)
    pair = psi.inner(virial(psi))
    out.append(_upper("delay", "virial-hermiticity",
                      abs(pair.imag) / psi.norm() ** 2, HERMITICITY_TOL,
                      "Im <psi, V psi> vanishes"))

    diag: dict = {}
    wigner_rhs(setup, fld, setup.window, psi, diagnostics=diag)
    out.append(_upper("delay", "wigner-reality",
                      float(diag["wigner"]["flagged"]), 0.0,
                      f"imag ratio {diag['wigner']['ratio']:.3e}; the hard "
                      f"bound {REALITY_TOL:g} is enforced inside wigner_rhs"))

    tau, _ = extrapolate_tau([(r, 3.0 + 1.0 / r)
                              for r in (4.0, 8.0, 16.0, 32.0)])
    out.append(_upper("delay", "extrapolation-recovery", abs(tau - 3.0),
                      EXTRAPOLATION_TOL, "1/r model recovered exactly"))

    r0 = float(config.sojourn.radii[0])
    direct = region_weights(setup.grid, domain, r0)
    predilated = geometry.from_indicator(
        lambda p: domain.contains(p / r0), domain.dimension,
        r0 * domain.bounding_radius, label="predilated")
    rescaled = region_weights(setup.grid, predilated, 1.0)
    out.append(_upper("delay", "mask-scaling-covariance",
                      float(np.max(np.abs(direct - rescaled))), 0.0,
                      "dilating the region equals pre-dilating the domain"))
    return out


SUITES = {
    "geometry": geometry_suite,
    "flow": flow_suite,
    "operator": operator_suite,
    "scattering": scattering_suite,
    "delay": delay_suite,
}


def run_suites(config: ExperimentConfig, names=None) -> list[CheckResult]:
    chosen = tuple(names) if names is not None else tuple(SUITES)
    unknown = sorted(set(chosen) - set(SUITES))
    if unknown:
        raise ValueError(f"unknown suites {unknown}")
    results = []
    for name in chosen:
        results.extend(SUITES[name](config))
    return results


def all_passed(results) -> bool:
    return all(r.passed for r in results)
