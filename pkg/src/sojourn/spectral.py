"""Periodic grids, wavefunctions, and momentum-multiplier operators.

The free Hamiltonian H0 = P^2/2, functions f(H0), the anisotropic generator
D = (F(P).Q + Q.F(P))/2 and its unitary group all act here.  States live on
uniform periodic grids [-L, L)^d with power-of-two points per axis; momenta
are the FFT dual lattice.  The continuum-normalised spectrum carries the
e^{i k L} alignment phase so it can be interpolated smoothly; pure
multipliers skip the phase since it cancels.

Hygiene rules: windowed states keep their spectrum inside a declared energy
window, and any state whose amplitude in the outer 10% of the box exceeds
1e-8 of its peak triggers a BoundaryContamination warning.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from .dilation import VectorFieldF, integrate_flow, scalar_energy_flow
from .errors import (BoundaryContamination, EmptyWindow, InterpolationOutOfBand,
                     WindowViolation)

BOUNDARY_FRACTION = 0.1
BOUNDARY_RELATIVE_AMPLITUDE = 1e-8
WINDOW_MASS_TOL = 1e-8
OVERSAMPLE = 4
INTERP_POINTS = 6
SUPPORT_FLOOR = 1e-14
MATERIAL_FLOOR = 1e-8

_SNAPSHOT_HEADER = struct.Struct("<3d")


def _fftn(a):
    return sfft.fftn(a)


def _ifftn(a):
    return sfft.ifftn(a)


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [-box, box)^dimension.

    n points per axis (power of two); spacing h = 2 box / n; dual lattice
    k in (pi/box) * {-n/2 .. n/2 - 1} in FFT order.
    """

    dimension: int
    n: int
    box: float

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError("grid dimension must be 1 or 2")
        if self.n < 4 or (self.n & (self.n - 1)) != 0:
            raise ValueError("points per axis must be a power of two >= 4")
        if not self.box > 0:
            raise ValueError("box half-width must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 * self.box / self.n

    @property
    def volume_element(self) -> float:
        return self.spacing ** self.dimension

    @property
    def k_max(self) -> float:
        return np.pi / self.spacing

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dimension

    def position_axis(self) -> np.ndarray:
        return -self.box + self.spacing * np.arange(self.n)

    def momentum_axis(self) -> np.ndarray:
        return 2.0 * np.pi * sfft.fftfreq(self.n, d=self.spacing)

    def position_meshes(self) -> tuple:
        ax = self.position_axis()
        return tuple(np.meshgrid(*([ax] * self.dimension), indexing="ij", sparse=True))

    def momentum_meshes(self) -> tuple:
        ax = self.momentum_axis()
        return tuple(np.meshgrid(*([ax] * self.dimension), indexing="ij", sparse=True))

    def kinetic_energies(self) -> np.ndarray:
        ks = self.momentum_meshes()
        return 0.5 * sum(k ** 2 for k in ks)

    def momentum_points(self) -> np.ndarray:
        """Dual lattice as a flat (n^d, d) array, FFT order."""
        ks = np.meshgrid(*([self.momentum_axis()] * self.dimension), indexing="ij")
        return np.stack([k.ravel() for k in ks], axis=-1)

    def refined(self) -> "Grid":
        """Same box, half the spacing."""
        return Grid(self.dimension, 2 * self.n, self.box)

    def widened(self) -> "Grid":
        """Same spacing, double the box (halves the momentum spacing)."""
        return Grid(self.dimension, 2 * self.n, 2.0 * self.box)


@lru_cache(maxsize=32)
def _boundary_mask(grid: Grid) -> np.ndarray:
    ax = np.abs(grid.position_axis()) > (1.0 - BOUNDARY_FRACTION) * grid.box
    if grid.dimension == 1:
        return ax
    return ax[:, None] | ax[None, :]


@dataclass(frozen=True)
class WaveFunction:
    """Complex amplitudes on a grid; norm uses the lattice measure h^d."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.complex128)
        if v.shape != self.grid.shape:
            raise ValueError(f"values shape {v.shape} != grid shape {self.grid.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def norm(self) -> float:
        return float(np.sqrt(self.grid.volume_element * np.sum(np.abs(self.values) ** 2)))

    def inner(self, other: "WaveFunction") -> complex:
        if other.grid != self.grid:
            raise ValueError("grid mismatch")
        return complex(self.grid.volume_element * np.sum(np.conj(self.values) * other.values))

    def normalized(self) -> "WaveFunction":
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalise the zero state")
        return WaveFunction(self.grid, self.values / n)

    def density(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def boundary_amplitude_ratio(self) -> float:
        peak = float(np.max(np.abs(self.values)))
        if peak == 0:
            return 0.0
        outer = float(np.max(np.abs(self.values[_boundary_mask(self.grid)])))
        return outer / peak


def check_boundary(psi: WaveFunction, context: str = "") -> float:
    """Warn (BoundaryContamination) when the outer 10% of the box carries
    more than 1e-8 of the peak amplitude."""
    ratio = psi.boundary_amplitude_ratio()
    if ratio > BOUNDARY_RELATIVE_AMPLITUDE:
        warnings.warn(
            f"boundary amplitude ratio {ratio:.3e} exceeds "
            f"{BOUNDARY_RELATIVE_AMPLITUDE:.0e}"
            + (f" ({context})" if context else ""),
            BoundaryContamination, stacklevel=2)
    return ratio


# ---------------------------------------------------------------------------
# transforms and multipliers


def _alignment_phase(grid: Grid, conj: bool = False) -> np.ndarray:
    # e^{+i k L} per axis maps FFT output to samples of the continuum
    # transform of a state supported on [-L, L)
    k = grid.momentum_axis()
    ph = np.exp((-1j if conj else 1j) * grid.box * k)
    if grid.dimension == 1:
        return ph
    return ph[:, None] * ph[None, :]


def spectrum(psi: WaveFunction) -> np.ndarray:
    """Continuum-normalised momentum amplitudes on the FFT lattice."""
    g = psi.grid
    scale = (g.spacing / np.sqrt(2.0 * np.pi)) ** g.dimension
    return scale * _fftn(psi.values) * _alignment_phase(g)


def from_spectrum(grid: Grid, spec: np.ndarray) -> WaveFunction:
    scale = (np.sqrt(2.0 * np.pi) / grid.spacing) ** grid.dimension
    return WaveFunction(grid, scale * _ifftn(spec * _alignment_phase(grid, conj=True)))


def multiplier_apply(psi: WaveFunction, multiplier) -> WaveFunction:
    """Apply m(P): multiplier is an array on the FFT lattice or a callable
    of the momentum meshes."""
    g = psi.grid
    m = multiplier(*g.momentum_meshes()) if callable(multiplier) else multiplier
    return WaveFunction(g, _ifftn(np.asarray(m) * _fftn(psi.values)))


def free_propagator(grid: Grid, t: float) -> np.ndarray:
    return np.exp(-1j * t * grid.kinetic_energies())


def gaussian_packet(grid: Grid, center, momentum, sigma) -> WaveFunction:
    """Normalised Gaussian with |psi|^2 standard deviation sigma per axis."""
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.dimension,))
    k0 = np.broadcast_to(np.asarray(momentum, dtype=float), (grid.dimension,))
    s = np.broadcast_to(np.asarray(sigma, dtype=float), (grid.dimension,))
    xs = grid.position_meshes()
    phase = sum(k0[j] * xs[j] for j in range(grid.dimension))
    quad = sum((xs[j] - c[j]) ** 2 / (4.0 * s[j] ** 2) for j in range(grid.dimension))
    vals = np.exp(-quad + 1j * phase)
    return WaveFunction(grid, vals).normalized()


def position_moments(psi: WaveFunction) -> tuple:
    """Mean and variance per axis of the position density."""
    g = psi.grid
    rho = psi.density()
    w = rho / np.sum(rho)
    xs = g.position_meshes()
    mean = np.array([float(np.sum(w * xs[j])) for j in range(g.dimension)])
    var = np.array([float(np.sum(w * (xs[j] - mean[j]) ** 2)) for j in range(g.dimension)])
    return mean, var


# ---------------------------------------------------------------------------
# energy windows


def _bump(u: np.ndarray) -> np.ndarray:
    """Smooth bump equal to 1 at u = 0 and 0 for |u| >= 1."""
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape)
    inside = np.abs(u) < 1.0
    ui = u[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ui * ui))
    return out


@dataclass(frozen=True)
class EnergyWindow:
    """Smooth window on kinetic energy: 1 on [e_min+m, e_max-m], 0 outside
    (e_min, e_max), with m = margin_fraction * (e_max - e_min)."""

    e_min: float
    e_max: float
    margin_fraction: float = 0.15

    def __post_init__(self):
        if not (0.0 < self.e_min < self.e_max):
            raise ValueError("need 0 < e_min < e_max")
        if not (0.0 < self.margin_fraction < 0.5):
            raise ValueError("margin_fraction must sit in (0, 0.5)")

    @property
    def margin(self) -> float:
        return self.margin_fraction * (self.e_max - self.e_min)

    def eta(self, energies: np.ndarray) -> np.ndarray:
        e = np.asarray(energies, dtype=float)
        m = self.margin
        lo, hi = self.e_min + m, self.e_max - m
        out = np.ones(e.shape)
        out[(e <= self.e_min) | (e >= self.e_max)] = 0.0
        rise = (e > self.e_min) & (e < lo)
        out[rise] = _bump((e[rise] - lo) / m)
        fall = (e > hi) & (e < self.e_max)
        out[fall] = _bump((e[fall] - hi) / m)
        return out

    def multiplier(self, grid: Grid) -> np.ndarray:
        return self.eta(grid.kinetic_energies())

    def support(self, grid: Grid) -> np.ndarray:
        return self.multiplier(grid) > 0.0


EMPTY_WINDOW_RATIO = 1e-8


def window_filter(psi: WaveFunction, window: EnergyWindow) -> WaveFunction:
    """Project onto the window: eta(H0) psi.  Idempotent on states whose
    spectrum sits inside the plateau.  Raises EmptyWindow when the filtered
    norm falls below 1e-8 of the input norm."""
    out = multiplier_apply(psi, window.multiplier(psi.grid))
    if out.norm() < EMPTY_WINDOW_RATIO * psi.norm():
        raise EmptyWindow(
            f"window ({window.e_min}, {window.e_max}) removes the state: "
            f"filtered norm ratio {out.norm() / max(psi.norm(), 1e-300):.3e}")
    return out


def window_violation(psi: WaveFunction, window: EnergyWindow) -> float:
    """Relative L2 mass outside the window support."""
    g = psi.grid
    spec = _fftn(psi.values)
    off = ~window.support(g)
    total = float(np.sum(np.abs(spec) ** 2))
    if total == 0:
        return 0.0
    return float(np.sqrt(np.sum(np.abs(spec[off]) ** 2) / total))


def require_windowed(psi: WaveFunction, window: EnergyWindow, tol: float = WINDOW_MASS_TOL):
    bad = window_violation(psi, window)
    if bad > tol:
        raise WindowViolation(f"relative off-window mass {bad:.3e} > {tol:.0e}")


def f_h0_power(psi: WaveFunction, symbol, power: float, window: EnergyWindow) -> WaveFunction:
    """Apply f(H0)^power for power in {1, 1/2, -1/2}, masked to the window
    support (the state must be windowed, so the mask is harmless and keeps
    negative powers finite)."""
    if power not in (1.0, 0.5, -0.5):
        raise ValueError("power must be one of 1, 1/2, -1/2")
    g = psi.grid
    require_windowed(psi, window)
    sup = window.support(g)
    f_vals = np.asarray(symbol(g.kinetic_energies()), dtype=float)
    mult = np.zeros(g.shape)
    mult[sup] = f_vals[sup] ** power
    return multiplier_apply(psi, mult)


# ---------------------------------------------------------------------------
# anisotropic generator D and its group


def field_multipliers(grid: Grid, field: VectorFieldF) -> list[np.ndarray]:
    """F_j(P) on the dual lattice; the origin gets the continuous-extension
    value 0 (windowed states carry no mass there)."""
    pts = grid.momentum_points()
    r2 = np.sum(pts * pts, axis=-1)
    vals = np.zeros_like(pts)
    live = r2 > 0
    vals[live] = field(pts[live])
    return [vals[:, j].reshape(grid.shape) for j in range(grid.dimension)]


class DSigmaOperator:
    """D = (F(P).Q + Q.F(P))/2 with F(P) a Fourier multiplier per axis."""

    def __init__(self, grid: Grid, field: VectorFieldF):
        self.grid = grid
        self.field = field
        self._f_mult = field_multipliers(grid, field)
        self._xs = grid.position_meshes()

    def __call__(self, psi: WaveFunction, check: bool = True) -> WaveFunction:
        if check:
            check_boundary(psi, "d_sigma_apply")
        g = self.grid
        out = np.zeros(g.shape, dtype=complex)
        for j in range(g.dimension):
            xj = self._xs[j]
            fj = self._f_mult[j]
            out += 0.5 * _ifftn(fj * _fftn(xj * psi.values))
            out += 0.5 * xj * _ifftn(fj * _fftn(psi.values))
        return WaveFunction(g, out)


def d_sigma_apply(psi: WaveFunction, field: VectorFieldF) -> WaveFunction:
    return DSigmaOperator(psi.grid, field)(psi)


def group_com_residual(psi: WaveFunction, field: VectorFieldF, t: float) -> float:
    """|| e^{-itH0} D e^{itH0} psi - D psi + t f(H0) psi || for normalised psi."""
    psi = psi.normalized()
    g = psi.grid
    d_op = DSigmaOperator(g, field)
    energies = g.kinetic_energies()
    up = multiplier_apply(psi, np.exp(1j * t * energies))
    conj = multiplier_apply(d_op(up, check=False), np.exp(-1j * t * energies))
    f_psi = multiplier_apply(psi, np.asarray(field.symbol(energies)))
    resid = conj.values - d_op(psi, check=False).values + t * f_psi.values
    return float(np.sqrt(g.volume_element * np.sum(np.abs(resid) ** 2)))


def gen_com_residual(psi: WaveFunction, field: VectorFieldF) -> float:
    """|| i[H0, D] psi - f(H0) psi || for normalised psi."""
    psi = psi.normalized()
    g = psi.grid
    d_op = DSigmaOperator(g, field)
    energies = g.kinetic_energies()
    h0 = lambda w: multiplier_apply(w, energies)
    comm = 1j * (h0(d_op(psi, check=False)).values - d_op(h0(psi), check=False).values)
    f_psi = multiplier_apply(psi, np.asarray(field.symbol(energies)))
    resid = comm - f_psi.values
    return float(np.sqrt(g.volume_element * np.sum(np.abs(resid) ** 2)))


# ---------------------------------------------------------------------------
# the group W_t = e^{itD} via flowed momenta


def _lagrange_weights(frac: np.ndarray, points: int) -> np.ndarray:
    """Weights of local Lagrange interpolation at offset frac in [0, 1) from
    the stencil midpoint node; nodes sit at integers -(p/2-1) .. p/2."""
    offsets = np.arange(points) - (points // 2 - 1)
    w = np.ones((len(frac), points))
    for i, oi in enumerate(offsets):
        for jj, oj in enumerate(offsets):
            if i == jj:
                continue
            w[:, i] *= (frac - oj) / (oi - oj)
    return w


def _fine_spectrum(psi: WaveFunction, oversample: int) -> tuple:
    """Zero-pad in position to oversample the spectrum; returns the fftshifted
    fine spectrum and its momentum axis (monotone)."""
    g = psi.grid
    nfine = oversample * g.n
    big = np.zeros((nfine,) * g.dimension, dtype=complex)
    off = (nfine - g.n) // 2
    sl = tuple(slice(off, off + g.n) for _ in range(g.dimension))
    big[sl] = psi.values
    bigbox = oversample * g.box
    kf = 2.0 * np.pi * sfft.fftfreq(nfine, d=g.spacing)
    phase1 = np.exp(1j * bigbox * kf)
    scale = (g.spacing / np.sqrt(2.0 * np.pi)) ** g.dimension
    spec = scale * _fftn(big)
    if g.dimension == 1:
        spec *= phase1
    else:
        spec *= phase1[:, None] * phase1[None, :]
    spec = sfft.fftshift(spec)
    axis = sfft.fftshift(kf)
    return spec, axis


def _interp_fine(spec: np.ndarray, axis: np.ndarray, targets: np.ndarray,
                 points: int) -> np.ndarray:
    """Separable local Lagrange interpolation of the fine spectrum."""
    dk = axis[1] - axis[0]
    nfine = len(axis)
    d = targets.shape[-1]
    idx = []
    wts = []
    for j in range(d):
        pos = (targets[:, j] - axis[0]) / dk
        base = np.floor(pos).astype(np.int64) - (points // 2 - 1)
        if np.any(base < 0) or np.any(base + points > nfine):
            raise InterpolationOutOfBand(
                "flowed momenta left the resolved band; shrink |t| or refine")
        frac = pos - np.floor(pos)
        idx.append(base)
        wts.append(_lagrange_weights(frac, points))
    if d == 1:
        out = np.zeros(len(targets), dtype=complex)
        for a in range(points):
            out += wts[0][:, a] * spec[idx[0] + a]
        return out
    out = np.zeros(len(targets), dtype=complex)
    for a in range(points):
        row = idx[0] + a
        for b in range(points):
            out += wts[0][:, a] * wts[1][:, b] * spec[row, idx[1] + b]
    return out


def w_group_apply(psi: WaveFunction, field: VectorFieldF, t: float,
                  flow_dt: float = 2e-3, oversample: int = OVERSAMPLE,
                  interp_points: int = INTERP_POINTS,
                  window: EnergyWindow | None = None) -> WaveFunction:
    """Apply W_t = e^{itD}: in momentum space (W_t psi)(k) =
    sqrt(eta_t(k)) psihat(xi_t(k)), with xi the field's flow and eta its
    Jacobian.  The spectrum is oversampled by zero-padding and interpolated
    with a local Lagrange stencil at the flowed momenta; only the lattice
    band the output can occupy is flowed.

    A window, when given, asserts that the input is supported in it (chained
    applications move the support, so pass it only on the first leg).
    """
    g = psi.grid
    if t == 0.0:
        return WaveFunction(g, psi.values.copy())
    if window is not None:
        require_windowed(psi, window)
    pts = g.momentum_points()
    r2 = np.sum(pts * pts, axis=-1)
    zero_row = r2 == 0

    # output support: k with xi_t(k) inside the input's occupied band, which
    # pulls back through the direction-free scalar flow of u = |k|^2
    spec0 = spectrum(psi).ravel()
    amp = np.abs(spec0)
    peak = float(amp.max())
    if peak == 0.0:
        return WaveFunction(g, psi.values.copy())
    occ = r2[amp > SUPPORT_FLOOR * peak]
    band = scalar_energy_flow(field.symbol, [occ.min(), occ.max()], -t,
                              dt=flow_dt)
    material = r2[amp > MATERIAL_FLOOR * peak]
    mat_hi = scalar_energy_flow(field.symbol, material.max(), -t, dt=flow_dt)
    if mat_hi > g.k_max ** 2:
        raise InterpolationOutOfBand(
            "spectral support flows past the lattice band; shrink |t| or "
            "refine the grid")
    lo = float(band[0]) * (1.0 - 1e-9)
    hi = min(float(band[1]) * (1.0 + 1e-9), g.k_max ** 2)
    live = (r2 >= lo) & (r2 <= hi) & ~zero_row

    flow = integrate_flow(field, pts[live], t, dt=flow_dt)
    spec_fine, axis = _fine_spectrum(psi, oversample)
    interp = _interp_fine(spec_fine, axis, np.atleast_2d(flow.xi), interp_points)

    out_spec = np.zeros(g.n ** g.dimension, dtype=complex)
    out_spec[live] = np.sqrt(flow.eta) * interp
    # k = 0 is a fixed point of the flow; weight it by its exact Jacobian
    # when the field extends there (windowed states carry no mass at zero
    # momentum, so the else branch only keeps the formal identity value)
    if field.regular_at_origin:
        div0 = float(field.divergence(np.zeros((1, g.dimension)))[0])
        out_spec[zero_row] = np.exp(-0.5 * t * div0) * spec0[zero_row]
    else:
        out_spec[zero_row] = spec0[zero_row]
    return from_spectrum(g, out_spec.reshape(g.shape))


# ---------------------------------------------------------------------------
# binary snapshots


def save_snapshot(path, psi: WaveFunction):
    """Header: little-endian float64 (dimension, points_per_axis,
    box_half_width); payload: interleaved re/im float64, row-major."""
    g = psi.grid
    with open(path, "wb") as fh:
        fh.write(_SNAPSHOT_HEADER.pack(float(g.dimension), float(g.n), g.box))
        inter = np.empty(2 * psi.values.size)
        flat = psi.values.ravel()
        inter[0::2] = flat.real
        inter[1::2] = flat.imag
        fh.write(inter.astype("<f8").tobytes())


def load_snapshot(path) -> WaveFunction:
    with open(path, "rb") as fh:
        dim, n, box = _SNAPSHOT_HEADER.unpack(fh.read(_SNAPSHOT_HEADER.size))
        grid = Grid(int(dim), int(n), box)
        raw = np.frombuffer(fh.read(), dtype="<f8")
    if raw.size != 2 * grid.n ** grid.dimension:
        raise ValueError("snapshot payload size mismatch")
    vals = raw[0::2] + 1j * raw[1::2]
    return WaveFunction(grid, vals.reshape(grid.shape))
