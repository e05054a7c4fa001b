"""
Complex geometrical optics probes for the reflected box geometry.

A probe fixes a frequency ``xi``, an orthonormal frame (mu1, mu2) orthogonal to
it with mu2 tangential to the reflecting plane, a semiclassical parameter ``h``
and a smooth time bump ``m``.  From it we build

    u~(t, x) = exp((x . zeta) eta(t) / h) (m(t) exp(Phi(t, x)) + r(t, x))

on the extended domain O, where zeta is zeta2 (solution role) or zeta1 (adjoint
role), eta(t) = sin(h^(2/5) (T - t)^2) and Phi solves the planar transport
equation d . (grad Phi + G) = 0.  The remainder r is defined through an
auxiliary boundary value problem on O, and the special solution on the box is
the antisymmetrized field u~ - u~*, which vanishes on x_n = 0.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.special import j0

from .fields import CoefficientPair, grad
from .forward import DEFAULT_TOL, solve_adjoint, solve_forward
from .grid import ExtendedGrid, SpaceTimeGrid, extend_coefficients, reflect_field, restrict_to_box

log = logging.getLogger(__name__)

__all__ = [
    "TimeBump",
    "CGOProbe",
    "Phase",
    "TransportSolution",
    "SpecialSolution",
    "choose_frame",
    "frame_violation",
    "build_phase",
    "solve_transport",
    "build_analytic_part",
    "compute_remainder",
    "assemble_reflected",
    "special_solution",
    "probe_transport",
    "extend_pair",
    "semiclassical_norm",
    "exp_floor",
    "DEFAULT_H_SWEEP",
]

DEFAULT_H_SWEEP = (0.4, 0.3, 0.2, 0.15, 0.1)
FRAME_TOL = 1e-12
EXP_LIMIT = 700.0


def choose_frame(xi, allow_zero: bool = True) -> tuple:
    """Orthonormal (mu1, mu2) orthogonal to ``xi`` with mu2_n = 0 and mu1_n != 0.

    mu2 lives in the span of the two largest tangential components of xi and
    mu1 is the unit vector orthogonal to both xi and mu2 in that 3-space.  The
    zero frequency gets the canonical frame (e_n, e_1) when ``allow_zero``.
    """
    xi = np.asarray(xi, dtype=float)
    n = xi.size
    if n < 3:
        raise ValueError(f"frames need n >= 3, got n={n}")
    size = float(np.linalg.norm(xi))
    if size == 0.0:
        if not allow_zero:
            raise ValueError("zero frequency has no distinguished frame")
        mu1 = np.zeros(n)
        mu1[-1] = 1.0
        mu2 = np.zeros(n)
        mu2[0] = 1.0
        return mu1, mu2
    tang = xi[:-1]
    if np.linalg.norm(tang) <= 1e-14 * size:
        raise ValueError("degenerate frequency: hyperplane-normal xi excluded")
    order = np.argsort(-np.abs(tang), kind="stable")
    a, b = sorted(int(j) for j in order[:2])
    mu2 = np.zeros(n)
    mu2[a], mu2[b] = xi[b], -xi[a]
    mu2 /= np.linalg.norm(mu2)
    mu1 = np.zeros(n)
    rho = xi[a] ** 2 + xi[b] ** 2
    mu1[a], mu1[b], mu1[-1] = xi[-1] * xi[a], xi[-1] * xi[b], -rho
    mu1 /= np.linalg.norm(mu1)
    return mu1, mu2


def frame_violation(xi, mu1, mu2) -> float:
    """Largest violation among the six frame constraints (scaled by |xi| where relevant)."""
    xi = np.asarray(xi, dtype=float)
    s = max(1.0, float(np.linalg.norm(xi)))
    vals = [mu1 @ mu2, (xi @ mu1) / s, (xi @ mu2) / s,
            np.linalg.norm(mu1) - 1.0, np.linalg.norm(mu2) - 1.0, mu2[-1]]
    bad = max(abs(float(v)) for v in vals)
    if mu1[-1] == 0.0:
        bad = max(bad, 1.0)
    return bad


@dataclass(frozen=True)
class TimeBump:
    """m(t) = exp(-1/(s(1-s))), s = (t - t0 + w)/(2w), supported on (t0 - w, t0 + w)."""

    t0: float
    width: float

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError(f"bump width must be positive, got {self.width}")

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        s = (t - self.t0 + self.width) / (2.0 * self.width)
        out = np.zeros_like(s)
        inside = (s > 0) & (s < 1)
        si = s[inside]
        out[inside] = np.exp(-1.0 / (si * (1.0 - si)))
        return out

    def check_support(self, T: float):
        if self.t0 - self.width <= 0 or self.t0 + self.width >= T:
            raise ValueError(
                f"bump support ({self.t0 - self.width:g}, {self.t0 + self.width:g}) "
                f"must lie inside (0, {T:g})")


@dataclass(frozen=True)
class CGOProbe:
    """Frequency, frame, semiclassical parameter and time bump of one probe.

    ``sign`` records the orientation of mu2: the (+) probe uses the frame from
    :func:`choose_frame`, the (-) probe replaces mu2 by -mu2.
    """

    xi: np.ndarray
    mu1: np.ndarray
    mu2: np.ndarray
    h: float
    bump: TimeBump
    T: float
    sign: int = 1

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError(f"h must be positive, got {self.h}")
        if self.h ** 1.2 * float(self.xi @ self.xi) / 4.0 >= 1.0:
            raise ValueError(
                f"h too large for |xi| = {np.linalg.norm(self.xi):.4g}: "
                f"need h^(6/5)|xi|^2/4 < 1")
        bad = frame_violation(self.xi, self.mu1, self.mu2)
        if bad > FRAME_TOL:
            raise ValueError(f"frame constraints violated by {bad:.2e}")
        self.bump.check_support(self.T)

    @classmethod
    def create(cls, xi, h: float, bump: TimeBump, T: float, sign: int = 1) -> "CGOProbe":
        xi = np.asarray(xi, dtype=float)
        mu1, mu2 = choose_frame(xi)
        if sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {sign}")
        return cls(xi, mu1, sign * mu2, float(h), bump, float(T), sign)

    @property
    def n(self) -> int:
        return self.xi.size

    @property
    def c(self) -> float:
        return math.sqrt(1.0 - self.h ** 1.2 * float(self.xi @ self.xi) / 4.0)

    def to_dict(self) -> dict:
        return {"xi": self.xi.tolist(), "mu1": self.mu1.tolist(), "mu2": self.mu2.tolist(),
                "h": self.h, "t0": self.bump.t0, "width": self.bump.width,
                "T": self.T, "sign": self.sign}


@dataclass(frozen=True)
class Phase:
    """Linear phases of a probe: zeta2 . x = phi + i psi_plus, zeta1 . x = -phi + i psi_minus."""

    probe: CGOProbe
    zeta2: np.ndarray
    zeta1: np.ndarray

    @property
    def h(self) -> float:
        return self.probe.h

    def eta(self, t) -> np.ndarray:
        p = self.probe
        return np.sin(p.h ** 0.4 * (p.T - np.asarray(t, dtype=float)) ** 2)

    def zeta(self, role: str) -> np.ndarray:
        if role == "solution":
            return self.zeta2
        if role == "adjoint":
            return self.zeta1
        raise ValueError(f"role must be 'solution' or 'adjoint', got {role!r}")

    def grad_phi(self) -> np.ndarray:
        return self.probe.mu2.copy()

    def grad_psi(self, sign: int) -> np.ndarray:
        p = self.probe
        return sign * p.h ** 0.6 * p.xi / 2.0 + p.c * p.mu1

    def eikonal_residuals(self) -> dict:
        gphi = self.grad_phi()
        out = {}
        for s, tag in ((1, "plus"), (-1, "minus")):
            gpsi = self.grad_psi(s)
            out[f"norm_{tag}"] = float(gpsi @ gpsi - gphi @ gphi)
            out[f"dot_{tag}"] = float(gphi @ gpsi)
        return out

    def cross_frequencies(self) -> tuple:
        """xi_plus and xi_minus: (xi', +-(2/h^(3/5)) c mu1_n)."""
        p = self.probe
        k = 2.0 * p.c * p.mu1[-1] / p.h ** 0.6
        xp = p.xi.copy()
        xm = p.xi.copy()
        xp[-1], xm[-1] = k, -k
        return xp, xm

    def exponent(self, times, points, role: str) -> np.ndarray:
        """(x . zeta) eta(t) / h on a space-time grid; ``points`` has shape (n, *shape)."""
        z = self.zeta(role)
        lin = np.tensordot(z, points, axes=1)
        eta = self.eta(times).reshape((-1,) + (1,) * lin.ndim)
        return lin[None] * eta / self.h

    def combinations(self, x: np.ndarray) -> dict:
        """The four summed exponents (per unit eta) at points ``x`` of shape (m, n).

        Each entry holds the value computed from the zeta vectors and the value
        predicted by the closed forms with xi, xi_plus and xi_minus.
        """
        p = self.probe
        h = p.h
        xs = x.copy()
        xs[:, -1] *= -1.0
        z2, z1c = self.zeta2, np.conj(self.zeta1)
        xp, xm = self.cross_frequencies()
        lin = 2.0 * p.mu2[-1] * x[:, -1] / h
        s = h ** 0.4
        return {
            "direct": ((x @ z2 + x @ z1c) / h, 1j * (x @ p.xi) / s),
            "plus": ((x @ z2 + xs @ z1c) / h, 1j * (x @ xp) / s + lin),
            "mirror": ((xs @ z2 + xs @ z1c) / h, 1j * (xs @ p.xi) / s),
            "minus": ((xs @ z2 + x @ z1c) / h, 1j * (x @ xm) / s - lin),
        }


def build_phase(probe: CGOProbe) -> Phase:
    h = probe.h
    c = probe.c
    half = h ** 0.6 * probe.xi / 2.0
    zeta2 = probe.mu2 + 1j * (half + c * probe.mu1)
    zeta1 = -probe.mu2 + 1j * (-half + c * probe.mu1)
    return Phase(probe, zeta2, zeta1)


@dataclass
class TransportSolution:
    """Phi on the extended grid with its residual diagnostics.

    ``residual`` is the sup norm of d . (grad Phi + G) over the grid with the
    derivative taken spectrally on the padded Cauchy grid; ``residual_fd`` uses
    second-order central differences on the grid itself.
    """

    Phi: np.ndarray
    direction: np.ndarray
    residual: float
    residual_fd: float
    method: str
    meta: dict = field(default_factory=dict)
    residual_field: np.ndarray | None = None


def _direction_frame(d) -> tuple:
    d = np.asarray(d, dtype=complex)
    eR, eI = d.real, d.imag
    if abs(np.linalg.norm(eR) - 1) > 1e-12 or abs(np.linalg.norm(eI) - 1) > 1e-12 \
            or abs(eR @ eI) > 1e-12:
        raise ValueError("transport direction must be e_R + i e_I with orthonormal e_R, e_I")
    return d, eR, eI


def _slice_is_constant(gs: np.ndarray) -> bool:
    ref = gs.reshape(gs.shape[0], -1)[:, :1]
    flat = gs.reshape(gs.shape[0], -1)
    return bool(np.abs(flat - ref).max(initial=0.0) <= 1e-14 * max(1.0, np.abs(ref).max()))


class _CauchyPlan:
    """Padded FFT grid and truncated Cauchy multiplier for one direction."""

    def __init__(self, grid: SpaceTimeGrid, eR, eI, support: np.ndarray, margin: int = 2):
        h = np.asarray(grid.spacing)
        lo, hi = np.asarray(grid.lower), np.asarray(grid.upper)
        if support.any():
            idx = np.nonzero(support)
            slo = np.array([grid.axes[j][idx[j].min()] for j in range(grid.n)])
            shi = np.array([grid.axes[j][idx[j].max()] for j in range(grid.n)])
        else:
            slo, shi = lo, hi
        # farthest grid point from the support, an upper bound for every in-plane distance
        far = np.maximum(np.abs(hi - slo), np.abs(shi - lo))
        self.R = float(np.linalg.norm(far)) + 2.0 * float(h.max())
        ext = hi - lo
        sizes = [sfft.next_fast_len(int(math.ceil((ext[j] + self.R) / h[j])) + 1 + margin)
                 for j in range(grid.n)]
        self.shape = tuple(sizes)
        self.grid_shape = grid.shape
        ks = np.meshgrid(*[2 * np.pi * sfft.fftfreq(m, d) for m, d in zip(sizes, h)],
                         indexing="ij", sparse=True)
        kR = sum(e * k for e, k in zip(eR, ks))
        kI = sum(e * k for e, k in zip(eI, ks))
        kp = np.sqrt(kR ** 2 + kI ** 2)
        denom = kR + 1j * kI
        with np.errstate(divide="ignore", invalid="ignore"):
            mult = 1j * (1.0 - j0(self.R * kp)) / denom
        mult[kp == 0] = 0.0
        self.mult = mult
        self.dmult = 1j * denom

    def solve(self, g: np.ndarray) -> tuple:
        pad = np.zeros(self.shape, dtype=complex)
        window = tuple(slice(0, s) for s in self.grid_shape)
        pad[window] = g
        gh = sfft.fftn(pad)
        ph = self.mult * gh
        Phi = sfft.ifftn(ph)[window]
        res = (sfft.ifftn(self.dmult * ph) + pad)[window]
        return Phi, res


def solve_transport(G: np.ndarray, grid: SpaceTimeGrid, direction, tol: float = 1e-6,
                    margin: int = 2) -> TransportSolution:
    """Solve d . (grad Phi + G) = 0 slice by slice.

    ``G`` is a vector field (n, nt+1, *shape) on ``grid``.  A spatially constant
    slice a gets the exact solution Phi = -a . x.  Otherwise the slice must
    vanish near the edge of the grid; it is extended by zero and Phi is the
    truncated planar Cauchy transform of -d . G / 2, computed by FFT on a
    zero-padded grid large enough that no periodic image interferes.
    """
    d, eR, eI = _direction_frame(direction)
    G = np.asarray(G, dtype=complex)
    if G.shape != (grid.n,) + grid.field_shape:
        raise ValueError(f"G has shape {G.shape}, expected {(grid.n,) + grid.field_shape}")
    g = np.tensordot(d, G, axes=1)
    Phi = np.zeros(grid.field_shape, dtype=complex)
    if not np.any(g):
        return TransportSolution(Phi, d, 0.0, 0.0, "zero", residual_field=grid.zeros())
    pts = grid.points()
    support = np.any(np.abs(g) > 0, axis=0)
    plan = None
    res_field = grid.zeros()
    methods = set()
    constant_slices = all(_slice_is_constant(G[:, k]) for k in range(G.shape[1]))
    static = bool(np.all(G == G[:, :1]))
    todo = [0] if static else range(grid.nt + 1)
    for k in todo:
        if constant_slices:
            a = G[:, k].reshape(grid.n, -1)[:, 0]
            Phi[k] = -np.tensordot(a, pts, axes=1)
            methods.add("constant")
            continue
        edge = float(np.abs(g[k][grid.boundary_mask]).max(initial=0.0))
        if edge > 1e-12 * max(1.0, float(np.abs(g[k]).max())):
            raise ValueError(
                f"transport field must vanish on the grid boundary (max |d.G| there = {edge:.2e})")
        if plan is None:
            plan = _CauchyPlan(grid, eR, eI, support, margin)
        Phi[k], res_field[k] = plan.solve(g[k])
        methods.add("cauchy-fft")
    if static:
        Phi[:] = Phi[0]
        res_field[:] = res_field[0]
    # second-order finite-difference residual on the grid interior
    gp = grad(Phi, grid)
    fd = np.tensordot(d, gp + G, axes=1)
    res_fd = float(np.abs(fd[(slice(None),) + grid.interior]).max(initial=0.0))
    if "constant" in methods:
        # linear Phi: central differences are exact up to rounding
        res_field = fd
    res_spec = float(np.abs(res_field).max(initial=0.0))
    if res_spec > tol:
        log.warning("transport residual %.3e exceeds tolerance %.1e", res_spec, tol)
    meta = {"radius": plan.R if plan else None, "padded_shape": plan.shape if plan else None}
    return TransportSolution(Phi, d, res_spec, res_fd, "+".join(sorted(methods)), meta, res_field)


def exp_floor(diam: float, T: float, limit: float = EXP_LIMIT) -> float:
    """Smallest h for which diam * max|eta| / h stays below ``limit``."""
    lo, hi = 1e-12, 10.0
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        eta = min(1.0, math.sin(min(mid ** 0.4 * T * T, math.pi / 2)))
        if diam * eta / mid > limit:
            lo = mid
        else:
            hi = mid
    return hi


def build_analytic_part(phase: Phase, Phi: np.ndarray | None, grid: SpaceTimeGrid,
                        role: str) -> np.ndarray:
    """exp((x . zeta) eta / h) m(t) exp(Phi) sampled on ``grid``."""
    probe = phase.probe
    pts = grid.points()
    z = phase.zeta(role)
    real_lin = np.abs(np.tensordot(z.real, pts, axes=1)).max()
    eta_max = float(np.abs(phase.eta(grid.times)).max())
    bound = real_lin * eta_max / probe.h
    if Phi is not None:
        bound += float(np.abs(Phi.real).max(initial=0.0))
    if bound > EXP_LIMIT:
        floor = exp_floor(float(real_lin), probe.T)
        raise ValueError(f"exponent {bound:.1f} overflows; h must stay above about {floor:.3g}")
    m = probe.bump(grid.times).reshape((-1,) + (1,) * grid.n)
    E = phase.exponent(grid.times, pts, role)
    amp = m if Phi is None else m * np.exp(Phi)
    return np.exp(E) * amp


def extend_pair(pair: CoefficientPair, ext: ExtendedGrid | None = None) -> CoefficientPair:
    """The coefficient pair on the extended domain (even/odd reflection)."""
    ext = ExtendedGrid.from_box(pair.grid) if ext is None else ext
    A, q = extend_coefficients(pair.A, pair.q, pair.grid)
    return CoefficientPair(ext.grid, A, q)


def semiclassical_norm(r: np.ndarray, grid: SpaceTimeGrid, h: float) -> float:
    """(int |r|^2 + h^2 |grad r|^2 dx dt)^(1/2) by the trapezoidal rule."""
    gr = grad(r, grid)
    dens = np.abs(r) ** 2 + h * h * np.sum(np.abs(gr) ** 2, axis=0)
    return float(np.sqrt(grid.integrate(dens).real))


def compute_remainder(phase: Phase, pair_ext: CoefficientPair, analytic: np.ndarray,
                      role: str, tol: float = DEFAULT_TOL) -> tuple:
    """Solve on O with Dirichlet data equal to the analytic part; return (u_full, r, ||r||).

    In the solution role the solve starts from zero initial data; in the
    adjoint role it runs backward from zero terminal data.
    """
    grid = pair_ext.grid
    if not np.all(np.isfinite(analytic)):
        raise ValueError("analytic part is not finite")
    if role == "solution":
        full = solve_forward(pair_ext, analytic, tol=tol)
    elif role == "adjoint":
        full = solve_adjoint(pair_ext, analytic, tol=tol)
    else:
        raise ValueError(f"role must be 'solution' or 'adjoint', got {role!r}")
    E = phase.exponent(grid.times, grid.points(), role)
    m = phase.probe.bump(grid.times).reshape((-1,) + (1,) * grid.n)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(m != 0, analytic * np.exp(-E), 0.0)
    r = np.exp(-E) * full - a
    return full, r, semiclassical_norm(r, grid, phase.h)


def assemble_reflected(tilde: np.ndarray, n: int | None = None) -> tuple:
    """(u~ - u~*) restricted to the box, together with the two restricted terms."""
    direct = restrict_to_box(tilde)
    mirror = restrict_to_box(reflect_field(tilde))
    return direct - mirror, direct, mirror


@dataclass
class SpecialSolution:
    """A reflected special solution and the pieces it was built from."""

    probe: CGOProbe
    role: str
    field: np.ndarray          # assembled u~ - u~* on the box
    direct: np.ndarray         # u~ restricted to the box
    mirror: np.ndarray         # u~* restricted to the box
    transport: TransportSolution | None
    remainder_norm: float | None = None
    analytic: np.ndarray | None = None
    remainder: np.ndarray | None = None

    def gamma0_trace(self) -> float:
        return float(np.abs(self.field[..., 0]).max())


def _transport_input(pair_ext: CoefficientPair, phase: Phase, role: str) -> tuple:
    p = phase.probe
    if role == "solution":
        return pair_ext.A, p.mu2 + 1j * p.mu1
    return -np.conj(pair_ext.A), -p.mu2 + 1j * p.mu1


def probe_transport(pair_ext: CoefficientPair, probe: CGOProbe, role: str,
                    tol: float = 1e-6) -> TransportSolution:
    """Transport solution Phi_2 (solution role) or Phi_1 (adjoint role) for a probe."""
    G, d = _transport_input(pair_ext, build_phase(probe), role)
    return solve_transport(G, pair_ext.grid, d, tol=tol)


def special_solution(pair: CoefficientPair, probe: CGOProbe, role: str,
                     tol: float = DEFAULT_TOL, transport_tol: float = 1e-6,
                     keep: bool = False, pair_ext: CoefficientPair | None = None,
                     Phi: np.ndarray | None = None) -> SpecialSolution:
    """Build the reflected special solution of ``pair`` (solution or adjoint role).

    ``Phi`` overrides the amplitude exponent (the transport solve is skipped);
    this is how a factor g with d . grad g = 0 is folded into the amplitude.
    """
    phase = build_phase(probe)
    if pair_ext is None:
        pair_ext = extend_pair(pair)
    if Phi is None:
        tr = probe_transport(pair_ext, probe, role, tol=transport_tol)
        expo = tr.Phi if tr.method != "zero" else None
    else:
        tr, expo = None, Phi
    a = build_analytic_part(phase, expo, pair_ext.grid, role)
    full, r, rn = compute_remainder(phase, pair_ext, a, role, tol=tol)
    fieldv, direct, mirror = assemble_reflected(full)
    return SpecialSolution(probe, role, fieldv, direct, mirror, tr, rn,
                           a if keep else None, r if keep else None)
