"""
Crank-Nicolson solver for the convection-diffusion IBVP, its adjoint, and the
Dirichlet-to-Neumann simulator.

Written as a first-order system in time,

    du/dt = lap u + 2 A.grad u + (div A + A.A - q) u + F,

the scheme advances the interior unknowns with the trapezoidal rule while the
boundary nodes carry the Dirichlet data.  Each step solves

    (I - dt/2 M^{k+1}) U^{k+1} = (I + dt/2 M^k) u^k + dt/2 (boundary + source terms).

The stencil operator is applied matrix-free.  The constant-coefficient part
``I - dt/2 lap`` is diagonal in the discrete sine basis, which gives an exact
solver for the pure heat equation and a preconditioner for GMRES otherwise.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
import scipy.sparse.linalg as spla

from .fields import CoefficientPair, div
from .grid import Face, SpaceTimeGrid

log = logging.getLogger(__name__)

__all__ = [
    "SolverError",
    "DirichletDatum",
    "DNRecord",
    "DNDataset",
    "CrankNicolson",
    "solve_forward",
    "solve_adjoint",
    "neumann_trace",
    "dn_apply",
    "build_dataset",
    "apply_operator",
    "apply_adjoint_operator",
    "boundary_inner",
    "boundary_norm",
    "face_patch_probe",
    "smooth_ramp",
]

DEFAULT_TOL = 1e-10


class SolverError(RuntimeError):
    """Linear solve failed to reach the requested residual."""


def smooth_ramp(t, rise: float):
    """C-infinity ramp from 0 (t <= 0) to 1 (t >= rise)."""
    t = np.asarray(t, dtype=float)
    s = np.clip(t / rise, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


@dataclass
class DirichletDatum:
    """Boundary values on the whole space-time grid (interior entries are ignored).

    ``local=True`` declares the datum admissible for the local DN map: it must
    vanish on the inaccessible face Gamma_0 at every time.
    """

    grid: SpaceTimeGrid
    values: np.ndarray
    local: bool = False
    label: str = ""
    params: dict = field(default_factory=dict)

    TOL = 1e-12

    def __post_init__(self):
        v = np.array(self.values, dtype=complex)
        if v.shape != self.grid.field_shape:
            raise ValueError(f"datum shape {v.shape} != grid field shape {self.grid.field_shape}")
        v[(slice(None),) + self.grid.interior] = 0.0
        self.values = v
        scale = max(1.0, float(np.abs(v).max(initial=0.0)))
        init = float(np.abs(v[0]).max(initial=0.0))
        if init > self.TOL * scale:
            raise ValueError(f"Dirichlet datum violates f(0, x) = 0 (max |f(0)| = {init:.2e})")
        if self.local:
            bad = self.gamma0_violation()
            if bad > self.TOL * scale:
                raise ValueError(
                    f"local datum must vanish on Gamma_0 (max |f| there = {bad:.2e})")

    def gamma0_violation(self) -> float:
        return float(np.abs(self.values[:, self.grid.partition.gamma0]).max(initial=0.0))

    @property
    def support_mask(self) -> np.ndarray:
        return np.any(self.values != 0, axis=0) & self.grid.boundary_mask


@dataclass
class DNRecord:
    input: DirichletDatum
    output: dict
    mode: str
    meta: dict = field(default_factory=dict)


@dataclass
class DNDataset:
    records: list
    pair_fingerprint: str
    grid_fingerprint: str
    mode: str = "local"

    def __len__(self):
        return len(self.records)

    def fingerprint(self) -> str:
        import hashlib
        h = hashlib.sha256()
        h.update(self.pair_fingerprint.encode())
        h.update(self.grid_fingerprint.encode())
        h.update(self.mode.encode())
        for rec in self.records:
            h.update(np.ascontiguousarray(rec.input.values).tobytes())
        return h.hexdigest()[:16]


def _interior_slices(n: int, axis: int, shift: int) -> tuple:
    idx = [slice(1, -1)] * n
    idx[axis] = slice(1 + shift, None if shift == 1 else -1 + shift)
    return tuple(idx)


class CrankNicolson:
    """Time stepper for du/dt = lap u + 2 B.grad u + c u + F on a fixed grid.

    ``B`` (n, nt+1, *shape) and ``c`` (nt+1, *shape) are the convection and
    reaction samples; either may be None for the pure heat equation.
    """

    def __init__(self, grid: SpaceTimeGrid, B=None, c=None, tol: float = DEFAULT_TOL,
                 maxiter: int = 50):
        self.grid = grid
        self.B = None if B is None or not np.any(B) else np.asarray(B, dtype=complex)
        self.c = None if c is None or not np.any(c) else np.asarray(c, dtype=complex)
        self.tol = tol
        self.maxiter = maxiter
        self.iterations = []
        n = grid.n
        dt = grid.dt
        lam = np.zeros(grid.interior_shape)
        for j, h in enumerate(grid.spacing):
            m = grid.shape[j] - 2
            k = np.arange(1, m + 1)
            ev = -4.0 / h**2 * np.sin(np.pi * k / (2 * (m + 1)))**2
            shape = [1] * n
            shape[j] = m
            lam = lam + ev.reshape(shape)
        self._symbol = 1.0 - 0.5 * dt * lam

    @property
    def is_heat(self) -> bool:
        return self.B is None and self.c is None

    def heat_solve(self, r: np.ndarray) -> np.ndarray:
        axes = tuple(range(self.grid.n))
        return sfft.idstn(sfft.dstn(r, type=1, axes=axes) / self._symbol, type=1, axes=axes)

    def apply(self, u: np.ndarray, k: int) -> np.ndarray:
        """Interior values of M^k u for a full spatial array ``u``."""
        g = self.grid
        inner = g.interior
        ui = u[inner]
        out = np.zeros(g.interior_shape, dtype=complex)
        for j, h in enumerate(g.spacing):
            up = u[_interior_slices(g.n, j, 1)]
            dn = u[_interior_slices(g.n, j, -1)]
            out += (up - 2.0 * ui + dn) / h**2
            if self.B is not None:
                out += self.B[j, k][inner] * (up - dn) / (2.0 * h)
        if self.c is not None:
            out += self.c[k][inner] * ui
        return out

    def _lhs(self, U: np.ndarray, k: int) -> np.ndarray:
        full = np.zeros(self.grid.shape, dtype=complex)
        full[self.grid.interior] = U
        return U - 0.5 * self.grid.dt * self.apply(full, k)

    def _step_solve(self, rhs: np.ndarray, k: int, guess: np.ndarray) -> np.ndarray:
        if self.is_heat:
            return self.heat_solve(rhs)
        shape = self.grid.interior_shape
        size = int(np.prod(shape))
        op = spla.LinearOperator((size, size), dtype=complex,
                                 matvec=lambda x: self._lhs(x.reshape(shape), k).ravel())
        pre = spla.LinearOperator((size, size), dtype=complex,
                                  matvec=lambda x: self.heat_solve(x.reshape(shape)).ravel())
        b = rhs.ravel()
        bnorm = np.linalg.norm(b)
        if bnorm == 0.0:
            return np.zeros(shape, dtype=complex)
        x = guess.ravel()
        its = 0
        for _ in range(4):
            x, info = spla.gmres(op, b, x0=x, rtol=0.1 * self.tol, atol=0.0, restart=30,
                                 maxiter=self.maxiter, M=pre)
            res = np.linalg.norm(b - op.matvec(x)) / bnorm
            its += 1
            if res <= self.tol:
                break
        else:
            raise SolverError(
                f"GMRES stalled at relative residual {res:.2e} after {its} restarts (step {k})")
        self.iterations.append(its)
        return x.reshape(shape)

    def solve(self, boundary: np.ndarray, source: np.ndarray | None = None) -> np.ndarray:
        """March from u(0) = 0 with Dirichlet data ``boundary`` (full space-time array)."""
        g = self.grid
        inner = g.interior
        dt = g.dt
        u = np.zeros(g.field_shape, dtype=complex)
        bmask = g.boundary_mask
        u[:, bmask] = boundary[:, bmask]
        u[0][inner] = 0.0
        for k in range(g.nt):
            rhs = u[k][inner] + 0.5 * dt * self.apply(u[k], k)
            edge = np.zeros(g.shape, dtype=complex)
            edge[bmask] = u[k + 1][bmask]
            rhs += 0.5 * dt * self.apply(edge, k + 1)
            if source is not None:
                rhs += 0.5 * dt * (source[k][inner] + source[k + 1][inner])
            u[k + 1][inner] = self._step_solve(rhs, k + 1, u[k][inner])
        return u


def _reaction(pair: CoefficientPair) -> np.ndarray:
    A = pair.A
    return div(A, pair.grid) + np.einsum("j...,j...->...", A, A) - pair.q


def _boundary_array(grid, f):
    if f is None:
        return grid.zeros()
    if isinstance(f, DirichletDatum):
        return f.values
    return np.asarray(f, dtype=complex)


def solve_forward(pair: CoefficientPair, f=None, source=None, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Solve L_{A,q} u = source, u(0) = 0, u = f on the lateral boundary."""
    grid = pair.grid
    data = _boundary_array(grid, f)
    if np.abs(data[0][grid.boundary_mask]).max(initial=0.0) > 1e-12 * max(1.0, np.abs(data).max()):
        raise ValueError("Dirichlet data must vanish at t = 0")
    if pair.is_zero:
        solver = CrankNicolson(grid, tol=tol)
    else:
        solver = CrankNicolson(grid, 2.0 * pair.A, _reaction(pair), tol=tol)
    return solver.solve(data, source)


def solve_adjoint(pair: CoefficientPair, g=None, source=None, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Solve L*_{A,q} v = source backward from v(T) = 0 with v = g on the boundary.

    L* = -d/dt - sum_j (d_j - conj(A_j))^2 + conj(q).  In reversed time this is
    the forward problem with convection -conj(A) and density conj(q).
    """
    grid = pair.grid
    data = _boundary_array(grid, g)[::-1]
    if np.abs(data[0][grid.boundary_mask]).max(initial=0.0) > 1e-12 * max(1.0, np.abs(data).max()):
        raise ValueError("adjoint boundary data must vanish at t = T")
    rev = CoefficientPair(grid, -np.conj(pair.A[:, ::-1]), np.conj(pair.q[::-1]))
    src = None if source is None else np.asarray(source)[::-1]
    v = solve_forward(rev, data, src, tol=tol)
    return v[::-1].copy()


def apply_operator(pair: CoefficientPair, u: np.ndarray) -> np.ndarray:
    """Discrete L_{A,q} u at interior nodes (second-order in space and time)."""
    grid = pair.grid
    from .fields import grad, laplacian
    ut = np.gradient(u, grid.dt, axis=0, edge_order=2)
    gu = grad(u, grid)
    Lu = ut - laplacian(u, grid) - 2.0 * np.einsum("j...,j...->...", pair.A, gu) \
        - _reaction(pair) * u
    return Lu


def apply_adjoint_operator(pair: CoefficientPair, v: np.ndarray) -> np.ndarray:
    """Discrete L*_{A,q} v = -v_t - lap v + 2 conj(A).grad v - (div B + B.B - conj q) v, B = -conj(A)."""
    grid = pair.grid
    from .fields import grad, laplacian
    B = -np.conj(pair.A)
    vt = np.gradient(v, grid.dt, axis=0, edge_order=2)
    gv = grad(v, grid)
    c = div(B, grid) + np.einsum("j...,j...->...", B, B) - np.conj(pair.q)
    return -vt - laplacian(v, grid) - 2.0 * np.einsum("j...,j...->...", B, gv) - c * v


def neumann_trace(u: np.ndarray, pair: CoefficientPair, faces=None) -> dict:
    """d_nu u + 2 (nu.A) u on each requested face, one-sided second order."""
    grid = pair.grid
    faces = grid.partition.faces if faces is None else faces
    out = {}
    for face in faces:
        out[face.name] = _face_conormal(u, pair.A, grid, face)
    return out


def _face_conormal(u, A, grid: SpaceTimeGrid, face: Face) -> np.ndarray:
    h = grid.spacing[face.axis]
    ax = face.axis + 1
    um = np.moveaxis(u, ax, 1)
    if face.side < 0:
        du = -(-3.0 * um[:, 0] + 4.0 * um[:, 1] - um[:, 2]) / (2.0 * h)
        trace = um[:, 0]
        a = np.moveaxis(A[face.axis], ax, 1)[:, 0]
    else:
        du = (3.0 * um[:, -1] - 4.0 * um[:, -2] + um[:, -3]) / (2.0 * h)
        trace = um[:, -1]
        a = np.moveaxis(A[face.axis], ax, 1)[:, -1]
    return du + 2.0 * face.side * a * trace


def _face_weights(grid: SpaceTimeGrid, face: Face) -> np.ndarray:
    w = np.ones(())
    for j, ax in enumerate(grid.axes):
        if j == face.axis:
            continue
        wa = np.full(len(ax), ax[1] - ax[0])
        wa[0] *= 0.5
        wa[-1] *= 0.5
        w = np.multiply.outer(w, wa)
    return w


def _weighted_sum(tw, values, w):
    return np.sum(tw.reshape((-1,) + (1,) * w.ndim) * values * w)


def _face_values(field: np.ndarray, face: Face) -> np.ndarray:
    return np.moveaxis(field, face.axis + 1, 1)[:, 0 if face.side < 0 else -1]


def boundary_inner(traces: dict, v: np.ndarray, grid: SpaceTimeGrid) -> complex:
    """sum over faces of int int g conj(v) dS dt (trapezoidal), for the faces in ``traces``."""
    tw = grid.time_weights()
    total = 0.0 + 0.0j
    for face in grid.partition.faces:
        if face.name not in traces:
            continue
        vf = _face_values(v, face)
        total += _weighted_sum(tw, traces[face.name] * np.conj(vf), _face_weights(grid, face))
    return complex(total)


def boundary_norm(traces: dict, grid: SpaceTimeGrid) -> float:
    """Discrete l2(Sigma) norm of face traces."""
    tw = grid.time_weights()
    total = 0.0
    for face in grid.partition.faces:
        if face.name not in traces:
            continue
        total += float(_weighted_sum(tw, np.abs(traces[face.name])**2,
                                     _face_weights(grid, face)).real)
    return float(np.sqrt(total))


def dn_apply(pair: CoefficientPair, f: DirichletDatum, restrict: str = "local",
             tol: float = DEFAULT_TOL) -> DNRecord:
    """Apply the (local) DN map to ``f``.

    In local mode the datum must vanish on Gamma_0 and the output is read on
    every face except the bottom one.
    """
    grid = pair.grid
    if restrict not in ("full", "local"):
        raise ValueError(f"restrict must be 'full' or 'local', got {restrict!r}")
    if restrict == "local":
        bad = f.gamma0_violation()
        if bad > DirichletDatum.TOL * max(1.0, float(np.abs(f.values).max())):
            raise ValueError(f"datum is not supported in Gamma (max |f| on Gamma_0 = {bad:.2e})")
        faces = grid.partition.accessible_faces()
    else:
        faces = grid.partition.faces
    u = solve_forward(pair, f, tol=tol)
    out = neumann_trace(u, pair, faces)
    meta = {"grid": grid.fingerprint(), "pair": pair.fingerprint(), "tol": tol}
    return DNRecord(f, out, restrict, meta)


def _dn_task(args):
    pair, f, restrict, tol = args
    return dn_apply(pair, f, restrict, tol)


def build_dataset(pair: CoefficientPair, probes, restrict: str = "local",
                  tol: float = DEFAULT_TOL, workers: int = 1) -> DNDataset:
    """DN records for each probe, in probe order."""
    probes = list(probes)
    tasks = [(pair, f, restrict, tol) for f in probes]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            records = list(ex.map(_dn_task, tasks))
    else:
        records = [_dn_task(t) for t in tasks]
    return DNDataset(records, pair.fingerprint(), pair.grid.fingerprint(), restrict)


def face_patch_probe(grid: SpaceTimeGrid, face: Face | str, center=None, width: float = 0.35,
                     omega: float = 2 * np.pi, phase: float = 0.0, rise: float | None = None,
                     local: bool = True) -> DirichletDatum:
    """Smooth bump on one face times a ramped oscillation in time.

    The patch is centred at ``center`` (tangential coordinates) and kept away
    from the face edges so the datum vanishes on every other face.
    """
    from .fields import bump
    if isinstance(face, str):
        face = next(fc for fc in grid.partition.faces if fc.name == face)
    n = grid.n
    tang = [j for j in range(n) if j != face.axis]
    center = np.full(len(tang), 0.5) if center is None else np.asarray(center, dtype=float)
    rise = 0.3 * grid.T if rise is None else rise
    x = grid.mesh()
    prof = np.ones(grid.shape)
    for c, j in zip(center, tang):
        prof = prof * bump((x[j] - c) / width)
    mask = np.zeros(grid.shape, dtype=bool)
    mask[face.index(n)] = True
    prof = np.where(mask, prof, 0.0)
    t = grid.times
    tf = smooth_ramp(t, rise) * np.exp(1j * (omega * t + phase))
    vals = tf.reshape((-1,) + (1,) * n) * prof[None]
    params = {"face": face.name, "center": center.tolist(), "width": width,
              "omega": omega, "phase": phase, "rise": rise}
    return DirichletDatum(grid, vals, local=local, label=f"patch-{face.name}", params=params)
