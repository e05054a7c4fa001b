"""
Coefficient pairs, gauge transforms and the grid differential operators.

The convection-diffusion operator is

    L_{A,q} u = du/dt - sum_j (d_j + A_j)^2 u + q u
              = du/dt - lap u - 2 A.grad u - (div A) u - (A.A) u + q u,

so for complex ``A`` the zeroth-order term carries the plain (non-conjugated)
square ``A.A``.  That product is used everywhere in this package, including the
effective potential ``q# = -div A - A.A + q``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .grid import SpaceTimeGrid

__all__ = [
    "CoefficientPair",
    "GaugeFunction",
    "bump",
    "bump_deriv",
    "grad",
    "div",
    "laplacian",
    "effective_potential",
    "effective_difference",
    "gauge_transform",
    "gauge_solution",
    "synth_pair",
    "make_gauge",
    "gradient_field",
    "rotational_field",
    "fourier_oracle",
]

BUMP_POWER = 6.0


def bump(s, p: float = BUMP_POWER):
    """C-infinity bump exp(p - p/(1 - s^2)) on (-1, 1), peak value 1, zero outside."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    out[inside] = np.exp(p - p / (1.0 - si * si))
    return out


def bump_deriv(s, p: float = BUMP_POWER):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = np.abs(s) < 1.0
    si = s[inside]
    d = 1.0 - si * si
    out[inside] = np.exp(p - p / d) * (-2.0 * p * si / (d * d))
    return out


def _spatial_axes(field: np.ndarray, n: int) -> tuple:
    return tuple(range(field.ndim - n, field.ndim))


def grad(f: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    """Second-order gradient over the trailing spatial axes (one-sided at the boundary)."""
    axes = _spatial_axes(f, grid.n)
    parts = np.gradient(f, *grid.spacing, axis=axes, edge_order=2)
    if grid.n == 1:
        parts = [parts]
    return np.stack(parts)


def div(F: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    out = np.zeros(F.shape[1:], dtype=np.result_type(F, float))
    for j in range(grid.n):
        axis = F.ndim - 1 - grid.n + j
        out += np.gradient(F[j], grid.spacing[j], axis=axis, edge_order=2)
    return out


def _second_derivative(f: np.ndarray, h: float, axis: int) -> np.ndarray:
    f = np.moveaxis(f, axis, -1)
    out = np.empty_like(f)
    out[..., 1:-1] = (f[..., 2:] - 2.0 * f[..., 1:-1] + f[..., :-2]) / h**2
    out[..., 0] = (2.0 * f[..., 0] - 5.0 * f[..., 1] + 4.0 * f[..., 2] - f[..., 3]) / h**2
    out[..., -1] = (2.0 * f[..., -1] - 5.0 * f[..., -2] + 4.0 * f[..., -3] - f[..., -4]) / h**2
    return np.moveaxis(out, -1, axis)


def laplacian(f: np.ndarray, grid: SpaceTimeGrid) -> np.ndarray:
    """Three-point Laplacian in the interior, four-point one-sided at the boundary."""
    f = np.asarray(f)
    out = np.zeros(f.shape, dtype=np.result_type(f, float))
    for j, axis in enumerate(_spatial_axes(f, grid.n)):
        out += _second_derivative(f, grid.spacing[j], axis)
    return out


@dataclass(frozen=True)
class CoefficientPair:
    """Convection field ``A`` (n, nt+1, *shape) and density ``q`` (nt+1, *shape)."""

    grid: SpaceTimeGrid
    A: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        g = self.grid
        A = np.asarray(self.A, dtype=complex)
        q = np.asarray(self.q, dtype=complex)
        if A.shape != (g.n,) + g.field_shape:
            raise ValueError(f"A has shape {A.shape}, expected {(g.n,) + g.field_shape}")
        if q.shape != g.field_shape:
            raise ValueError(f"q has shape {q.shape}, expected {g.field_shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(q))):
            raise ValueError("coefficient samples must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "q", q)

    @classmethod
    def zero(cls, grid: SpaceTimeGrid) -> "CoefficientPair":
        return cls(grid, grid.zeros(grid.n), grid.zeros())

    @property
    def is_zero(self) -> bool:
        return not (np.any(self.A) or np.any(self.q))

    @property
    def time_independent(self) -> bool:
        return bool(np.all(self.A == self.A[:, :1]) and np.all(self.q == self.q[:1]))

    def scale(self) -> float:
        """Sup norm of the coefficients, used to make tolerances relative."""
        return float(max(np.abs(self.A).max(initial=0.0), np.abs(self.q).max(initial=0.0)))

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.grid.fingerprint().encode())
        h.update(np.ascontiguousarray(self.A).tobytes())
        h.update(np.ascontiguousarray(self.q).tobytes())
        return h.hexdigest()[:16]

    def __sub__(self, other: "CoefficientPair") -> "CoefficientPair":
        return CoefficientPair(self.grid, self.A - other.A, self.q - other.q)

    def __add__(self, other: "CoefficientPair") -> "CoefficientPair":
        return CoefficientPair(self.grid, self.A + other.A, self.q + other.q)


@dataclass(frozen=True)
class GaugeFunction:
    """A gauge Psi with its spatial gradient and time derivative.

    With ``check=True`` the boundary conditions Psi = d_nu Psi = 0 on the
    lateral boundary are enforced.
    """

    grid: SpaceTimeGrid
    psi: np.ndarray
    grad_psi: np.ndarray
    dt_psi: np.ndarray
    check: bool = True

    TRACE_TOL = 1e-12
    NORMAL_TOL = 1e-10

    def __post_init__(self):
        g = self.grid
        for name, arr, shape in (("psi", self.psi, g.field_shape),
                                 ("grad_psi", self.grad_psi, (g.n,) + g.field_shape),
                                 ("dt_psi", self.dt_psi, g.field_shape)):
            arr = np.asarray(arr, dtype=complex)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            object.__setattr__(self, name, arr)
        if self.check:
            trace, normal = self.boundary_traces()
            if trace > self.TRACE_TOL or normal > self.NORMAL_TOL:
                raise ValueError(
                    f"gauge must vanish with its normal derivative on the boundary "
                    f"(max |psi| = {trace:.2e}, max |d_nu psi| = {normal:.2e})")

    @classmethod
    def from_samples(cls, grid: SpaceTimeGrid, psi: np.ndarray, check: bool = True):
        """Gauge whose derivatives are taken by finite differences."""
        psi = np.asarray(psi, dtype=complex)
        dt = np.gradient(psi, grid.dt, axis=0, edge_order=2)
        return cls(grid, psi, grad(psi, grid), dt, check=check)

    @classmethod
    def zero(cls, grid: SpaceTimeGrid) -> "GaugeFunction":
        return cls(grid, grid.zeros(), grid.zeros(grid.n), grid.zeros())

    def boundary_traces(self) -> tuple:
        mask = self.grid.boundary_mask
        trace = float(np.abs(self.psi[:, mask]).max(initial=0.0))
        normal = 0.0
        for face in self.grid.partition.faces:
            idx = (slice(None),) + face.index(self.grid.n)
            normal = max(normal, float(np.abs(self.grad_psi[face.axis][idx]).max(initial=0.0)))
        return trace, normal

    def __neg__(self) -> "GaugeFunction":
        return GaugeFunction(self.grid, -self.psi, -self.grad_psi, -self.dt_psi, check=False)


def effective_potential(pair: CoefficientPair) -> np.ndarray:
    """q# = -div A - A.A + q."""
    A = pair.A
    return -div(A, pair.grid) - np.einsum("j...,j...->...", A, A) + pair.q


def effective_difference(pair1: CoefficientPair, pair2: CoefficientPair) -> np.ndarray:
    """q# = q#_2 - q#_1 as it enters the integral identity."""
    return effective_potential(pair2) - effective_potential(pair1)


def gauge_transform(pair: CoefficientPair, gauge: GaugeFunction) -> CoefficientPair:
    """(A, q) -> (A + grad Psi, q + dPsi/dt)."""
    if gauge.psi.shape != pair.q.shape:
        raise ValueError("gauge and coefficient pair live on different grids")
    return CoefficientPair(pair.grid, pair.A + gauge.grad_psi, pair.q + gauge.dt_psi)


def gauge_solution(u: np.ndarray, gauge) -> np.ndarray:
    """exp(-Psi) u; ``gauge`` may be a GaugeFunction or a plain array."""
    psi = gauge.psi if isinstance(gauge, GaugeFunction) else np.asarray(gauge)
    return np.exp(-psi) * u


def _separable_bump(grid: SpaceTimeGrid, center, radius, with_grad: bool = False):
    x = grid.mesh()
    s = [(x[j] - center[j]) / radius[j] for j in range(grid.n)]
    vals = [bump(sj) for sj in s]
    b = np.prod(vals, axis=0)
    if not with_grad:
        return b
    g = []
    for j in range(grid.n):
        others = np.prod([vals[k] for k in range(grid.n) if k != j], axis=0) if grid.n > 1 else 1.0
        g.append(bump_deriv(s[j]) / radius[j] * others)
    return b, np.stack(g)


def _random_bump_params(rng, n: int, margin: float, rmin: float = 0.25, rmax: float = 0.4):
    radius = rng.uniform(rmin, rmax, size=n)
    radius = np.minimum(radius, 0.5 - margin)
    lo = margin + radius
    hi = 1.0 - margin - radius
    center = lo + (hi - lo) * rng.uniform(size=n)
    return center, radius


def _time_profile(rng, times, T):
    a, b = rng.uniform(0.2, 0.6, size=2)
    ph = rng.uniform(0, 2 * np.pi)
    return 1.0 + a * np.sin(2 * np.pi * times / T + ph) + b * np.cos(np.pi * times / T)


def _random_field(grid, rng, amplitude, margin, n_bumps, complex_values, time_dependent):
    out = grid.zeros()
    for _ in range(n_bumps):
        center, radius = _random_bump_params(rng, grid.n, margin)
        coef = rng.normal() + (1j * rng.normal() if complex_values else 0.0)
        prof = _time_profile(rng, grid.times, grid.T) if time_dependent else np.ones(grid.nt + 1)
        out += coef * prof.reshape((-1,) + (1,) * grid.n) * _separable_bump(grid, center, radius)
    return amplitude * out


def synth_pair(grid: SpaceTimeGrid, seed: int = 0, amplitude: float = 1.0,
               margin: float = 0.1, n_bumps: int = 2, complex_values: bool = True,
               time_dependent: bool = True, convection: bool = True,
               density: bool = True) -> CoefficientPair:
    """Reproducible smooth coefficient pair supported at distance >= margin from the boundary."""
    if margin <= 0 or margin >= 0.5:
        raise ValueError(f"support margin must lie in (0, 1/2), got {margin}")
    rng = np.random.default_rng(seed)
    A = grid.zeros(grid.n)
    if convection:
        for j in range(grid.n):
            A[j] = _random_field(grid, rng, amplitude, margin, n_bumps, complex_values,
                                 time_dependent)
    q = (_random_field(grid, rng, amplitude, margin, n_bumps, complex_values, time_dependent)
         if density else grid.zeros())
    return CoefficientPair(grid, A, q)


def make_gauge(grid: SpaceTimeGrid, seed: int = 0, amplitude: float = 1.0,
               margin: float = 0.05, complex_values: bool = False,
               center=None, radius=None) -> GaugeFunction:
    """Psi = amplitude * (beta(x) gamma(t))^2 with beta an interior bump.

    Squaring the bump makes both Psi and its normal derivative vanish on the
    lateral boundary; the derivatives are evaluated analytically.
    """
    rng = np.random.default_rng(seed)
    c, r = _random_bump_params(rng, grid.n, margin, 0.38, 0.45)
    center = c if center is None else np.asarray(center, dtype=float)
    radius = r if radius is None else np.broadcast_to(np.asarray(radius, dtype=float), (grid.n,))
    coef = amplitude * (1.0 + (0.5j if complex_values else 0.0))
    w = rng.uniform(0.5, 1.5) * np.pi / grid.T
    ph = rng.uniform(0, 2 * np.pi)
    t = grid.times
    gam = 1.0 + 0.5 * np.sin(w * t + ph)
    dgam = 0.5 * w * np.cos(w * t + ph)
    b, gb = _separable_bump(grid, center, radius, with_grad=True)
    tshape = (-1,) + (1,) * grid.n
    g2 = (gam**2).reshape(tshape)
    psi = coef * g2 * b**2
    grad_psi = coef * g2[None] * (2.0 * b * gb)[:, None]
    dt_psi = coef * (2.0 * gam * dgam).reshape(tshape) * b**2
    return GaugeFunction(grid, psi, grad_psi, dt_psi)


def gradient_field(gauge: GaugeFunction) -> np.ndarray:
    return gauge.grad_psi


def rotational_field(grid: SpaceTimeGrid, amplitude: float = 1.0, center=None,
                     radius: float = 0.3, plane=(0, 1)) -> np.ndarray:
    """Swirl field amplitude * beta(x) * (-(x_k - c_k), x_j - c_j) in the (j, k) plane.

    Its curl is non-zero wherever the bump is; used as a gauge-breaking difference.
    """
    center = np.full(grid.n, 0.5) if center is None else np.asarray(center, dtype=float)
    x = grid.mesh()
    b = _separable_bump(grid, center, np.full(grid.n, radius))
    j, k = plane
    F = np.zeros((grid.n,) + grid.shape, dtype=complex)
    F[j] = -(x[k] - center[k]) / radius * b
    F[k] = (x[j] - center[j]) / radius * b
    A = np.broadcast_to(F[:, None], (grid.n,) + grid.field_shape)
    return amplitude * A.copy()


def fourier_oracle(field: np.ndarray, grid: SpaceTimeGrid, xis, t_index: int | None = None) -> np.ndarray:
    """Trapezoidal quadrature of int f(x) exp(i x.xi) dx for each row of ``xis``.

    ``field`` is either spatial (``grid.shape``) or a space-time field, in which
    case ``t_index`` selects the slice (all slices are returned when it is None).
    """
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    f = np.asarray(field)
    if f.shape == grid.field_shape and t_index is not None:
        f = f[t_index]
    if f.shape == grid.shape:
        return _fourier_spatial(f, grid, xis)
    return np.stack([_fourier_spatial(fk, grid, xis) for fk in f], axis=-1)


def _fourier_spatial(f, grid, xis):
    n = grid.n
    w = []
    for ax in grid.axes:
        wa = np.full(len(ax), ax[1] - ax[0])
        wa[0] *= 0.5
        wa[-1] *= 0.5
        w.append(wa)
    E = np.exp(1j * xis[:, n - 1, None] * grid.axes[n - 1][None]) * w[n - 1]
    g = np.einsum("...c,kc->k...", f, E)
    for j in range(n - 2, -1, -1):
        E = np.exp(1j * xis[:, j, None] * grid.axes[j][None]) * w[j]
        g = np.einsum("k...b,kb->k...", g, E)
    return g
