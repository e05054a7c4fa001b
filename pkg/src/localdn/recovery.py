"""
Integral identity, Fourier samples, gauge reconstruction and verdicts.

Conventions.  For two pairs the identity reads

    int_Q (2 A . grad u2 + q# u2) conj(v) dx dt = - int_{Sigma#} (L1 f - L2 f) conj(v) dS dt,

with A = A1 - A2, q# = q#_2 - q#_1, u2 a special solution of pair 2, v an
adjoint special solution of pair 1 and f = u2 on the lateral boundary.  Samples
are reported for the differences A_diff = A2 - A1 and q2 - q1, so that a gauge
pair has A_diff = grad Psi.

Normalisation.  With m the time bump, s(t) = (T - t)^2 and Fourier transforms
taken over the extended domain O with kernel exp(i x . xi),

    convection:  -h^(3/5) I(h) / (2 W_c)  ->  int W_c(t) d . A_diff^(t, xi s(t)) dt / int W_c,
    density:              I(h) / W_d      ->  int W_d(t) q_diff^(t, xi s(t)) dt / int W_d,

where W_c = m^2 s, W_d = m^2 and d = mu2 + i mu1.  The sample is attributed
to the effective frequency xi_eff = xi * s_bar, s_bar the W-weighted mean of s.

Two modes are supported.  In ``oracle`` mode both pairs are known, special
solutions are built for the true coefficients and the boundary side of the
identity is evaluated (the interior side is kept as a diagnostic).  In ``born`` mode only the background pair 1 is known;
the special solutions are those of the background and pair 2 enters only
through its (simulated) local DN map.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from .cgo import (CGOProbe, TimeBump, build_phase, choose_frame, extend_pair, probe_transport,
                  special_solution)
from .fields import (CoefficientPair, GaugeFunction, _fourier_spatial, effective_difference,
                     grad)
from .forward import DEFAULT_TOL, DirichletDatum, boundary_inner, boundary_norm, dn_apply, \
    face_patch_probe, neumann_trace
from .grid import ExtendedGrid, SpaceTimeGrid, extend_coefficients, extend_even

log = logging.getLogger(__name__)

__all__ = [
    "IdentityEvaluation",
    "SamplingPlan",
    "SampleRecord",
    "FourierSampleSet",
    "GaugeReconstruction",
    "Tolerances",
    "Budget",
    "VerdictReport",
    "evaluate_identity",
    "xi_lattice",
    "extract_convection_samples",
    "extract_density_samples",
    "assemble_curl",
    "mollified_transform",
    "reconstruct_gauge",
    "regauge",
    "invert_fourier",
    "gauge_equivalence_verdict",
    "richardson",
    "coefficient_l1_scale",
    "relative_l2",
    "curl_oracle",
    "decide",
]


@dataclass
class IdentityEvaluation:
    interior: complex
    boundary: complex
    gap: float            # |interior - boundary| / max(|interior|, |boundary|, floor)
    magnitude: float      # int |2 A . grad u2 + q# u2| |v|, a natural size for the identity
    meta: dict = field(default_factory=dict)

    @property
    def relative_value(self) -> float:
        return abs(self.interior) / self.magnitude if self.magnitude > 0 else 0.0


def _check_same_grid(pair1: CoefficientPair, pair2: CoefficientPair):
    if pair1.grid.fingerprint() != pair2.grid.fingerprint():
        raise ValueError("pairs live on different grids (metadata mismatch)")


def _interior_value(pair1, pair2, u2, v) -> tuple:
    grid = pair1.grid
    A = pair1.A - pair2.A
    qs = effective_difference(pair1, pair2)
    integrand = 2.0 * np.einsum("j...,j...->...", A, grad(u2, grid)) + qs * u2
    val = grid.integrate(integrand * np.conj(v))
    mag = grid.integrate(np.abs(integrand) * np.abs(v)).real
    return val, mag


def evaluate_identity(pair1: CoefficientPair, pair2: CoefficientPair, probe: CGOProbe,
                      source: str = "oracle", tol: float = DEFAULT_TOL,
                      u2=None, v=None) -> IdentityEvaluation:
    """Both sides of the integral identity for one probe.

    ``source='oracle'`` reads L2 f off the special solution itself (it solves the
    pair-2 equation); ``source='dataset'`` simulates both DN maps by forward
    solves, exactly as measured data would be produced.
    """
    _check_same_grid(pair1, pair2)
    if source not in ("oracle", "dataset"):
        raise ValueError(f"source must be 'oracle' or 'dataset', got {source!r}")
    grid = pair1.grid
    if u2 is None:
        u2 = special_solution(pair2, probe, "solution", tol=tol).field
    if v is None:
        v = special_solution(pair1, probe, "adjoint", tol=tol).field
    interior, mag = _interior_value(pair1, pair2, u2, v)
    f = DirichletDatum(grid, u2, local=True, label="special-solution trace")
    faces = grid.partition.accessible_faces()
    L1 = dn_apply(pair1, f, "local", tol).output
    if source == "oracle":
        L2 = neumann_trace(u2, pair2, faces)
    else:
        L2 = dn_apply(pair2, f, "local", tol).output
    diff = {k: L1[k] - L2[k] for k in L1}
    boundary = -boundary_inner(diff, v, grid)
    floor = 1e-300
    gap = abs(interior - boundary) / max(abs(interior), abs(boundary), floor)
    meta = {"probe": probe.to_dict(), "source": source, "grid": grid.fingerprint(),
            "dn_difference": boundary_norm(diff, grid)}
    return IdentityEvaluation(complex(interior), complex(boundary), float(gap), float(mag), meta)


# ---------------------------------------------------------------------------
# sampling plan and lattice

def xi_lattice(kmax: float = 4.0, spacing: float = np.pi, n: int = 3, half: bool = False) -> np.ndarray:
    """Integer multiples of ``spacing`` with |xi| <= kmax * spacing.

    ``half=True`` keeps one representative of each +-xi pair (first non-zero
    component positive) together with xi = 0.
    """
    r = int(math.floor(kmax))
    axes = [np.arange(-r, r + 1)] * n
    K = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    K = K[np.sum(K * K, axis=1) <= kmax * kmax + 1e-9]
    if half:
        keep = []
        for k in K:
            nz = np.nonzero(k)[0]
            keep.append(nz.size == 0 or k[nz[0]] > 0)
        K = K[np.array(keep)]
    return K.astype(float) * spacing


@dataclass(frozen=True)
class SamplingPlan:
    """Time bump, h-sweep rule and extrapolation settings for Fourier sampling."""

    T: float = 1.0
    t0: float = 0.15
    width: float = 0.1
    h_fractions: tuple = (0.8, 0.55, 0.35)
    h_cap: float = 0.3
    fit_threshold: float = 0.1
    tol: float = DEFAULT_TOL

    @property
    def bump(self) -> TimeBump:
        return TimeBump(self.t0, self.width)

    def weights(self, grid: SpaceTimeGrid, kind: str) -> np.ndarray:
        t = grid.times
        m = self.bump(t)
        w = grid.time_weights() * m * m
        return w * (self.T - t) ** 2 if kind == "convection" else w

    def s_bar(self, grid: SpaceTimeGrid, kind: str) -> float:
        w = self.weights(grid, kind)
        return float(np.sum(w * (self.T - grid.times) ** 2) / np.sum(w))

    def h_sweep(self, xi_probe) -> tuple:
        size = float(np.linalg.norm(xi_probe))
        hmax = self.h_cap if size == 0 else min(self.h_cap / 0.8, (2.0 / size) ** (5.0 / 3.0))
        return tuple(min(self.h_cap, f * hmax) for f in self.h_fractions)


def richardson(hs, values) -> tuple:
    """Least-squares fit v(h) = a + b h^(2/5); returns (a, relative fit residual)."""
    hs = np.asarray(hs, dtype=float)
    values = np.asarray(values, dtype=complex)
    X = np.stack([np.ones_like(hs), hs ** 0.4], axis=1)
    coef, *_ = np.linalg.lstsq(X.astype(complex), values, rcond=None)
    fit = X @ coef
    scale = max(float(np.abs(values).max(initial=0.0)), 1e-300)
    res = float(np.linalg.norm(fit - values) / (np.sqrt(len(values)) * scale))
    return complex(coef[0]), res


@dataclass
class SampleRecord:
    kind: str                  # "convection" or "density"
    xi_eff: np.ndarray
    xi_probe: np.ndarray
    sign: int
    hs: tuple
    raw: np.ndarray
    value: complex
    fit_residual: float
    confident: bool
    oracle: complex | None = None
    t0: float = 0.0
    interior: np.ndarray | None = None   # oracle mode: same normalisation, interior side


@dataclass
class FourierSampleSet:
    """Extrapolated samples on a frequency lattice.

    ``splus``/``sminus`` hold the convection samples for the (+mu2) and (-mu2)
    probes, ``density`` the density samples.  Entries at frequencies with
    xi' = 0 are filled by interpolation and flagged.
    """

    xis: np.ndarray
    t0: float
    mu1: np.ndarray
    mu2: np.ndarray
    splus: np.ndarray | None = None
    sminus: np.ndarray | None = None
    density: np.ndarray | None = None
    P: np.ndarray | None = None
    confidence: np.ndarray | None = None
    interpolated: np.ndarray | None = None
    records: list = field(default_factory=list)
    oracle: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def transverse(self) -> np.ndarray:
        """The part of A_diff^ orthogonal to xi: (mu2 . A^) mu2 + (mu1 . A^) mu1."""
        if self.P is not None:
            return self.P
        return _transverse(self.splus, self.sminus, self.mu1, self.mu2)

    def to_rows(self) -> list:
        rows = []
        for rec in self.records:
            for h, val in zip(rec.hs, rec.raw):
                rows.append(_row(rec, h, val))
            rows.append(_row(rec, 0.0, rec.value))
        return rows


def _row(rec: SampleRecord, h, val) -> dict:
    row = {f"xi{j + 1}": float(x) for j, x in enumerate(rec.xi_eff)}
    row.update({"t0": float(rec.t0), "kind": rec.kind, "sign": rec.sign, "h": float(h),
                "real": float(np.real(val)), "imag": float(np.imag(val)),
                "confidence": float(rec.fit_residual)})
    return row


# ---------------------------------------------------------------------------
# per-probe identity values (run in worker processes)

_STATE: dict = {}


def _init_worker(state: dict):
    _STATE.clear()
    _STATE.update(state)


def _born_value(background: CoefficientPair, measured: CoefficientPair, probe: CGOProbe,
                tol: float) -> complex:
    grid = background.grid
    ext = _STATE.get("background_ext")
    u0 = special_solution(background, probe, "solution", tol=tol, pair_ext=ext).field
    v = special_solution(background, probe, "adjoint", tol=tol, pair_ext=ext).field
    f = DirichletDatum(grid, u0, local=True)
    faces = grid.partition.accessible_faces()
    L1 = neumann_trace(u0, background, faces)
    L2 = dn_apply(measured, f, "local", tol).output
    return -boundary_inner({k: L1[k] - L2[k] for k in L1}, v, grid)


def _boundary_value(pair1, pair2, u2, v, tol) -> complex:
    """-<L1 f - L2 f, v> on the accessible faces with f = u2 on the boundary."""
    grid = pair1.grid
    f = DirichletDatum(grid, u2, local=True)
    L1 = dn_apply(pair1, f, "local", tol).output
    L2 = neumann_trace(u2, pair2, grid.partition.accessible_faces())
    return -boundary_inner({k: L1[k] - L2[k] for k in L1}, v, grid)


def _oracle_value(pair1, pair2, probe, kind, tol) -> tuple:
    """Identity value with the true special solutions, plus the amplitude factor.

    The boundary side is used as the sample value: for DN-equal pairs it
    vanishes up to solver accuracy, while the interior side only vanishes
    through discrete cancellations.  The interior side is returned as well.

    For density samples the solution amplitude is m exp(-conj(Phi_1)), i.e.
    exp(Phi_2) times g = exp(-(conj(Phi_1) + Phi_2)); the residual of
    d . grad g is returned alongside.
    """
    ext1 = _STATE.get("pair1_ext") or extend_pair(pair1)
    ext2 = _STATE.get("pair2_ext") or extend_pair(pair2)
    vs = special_solution(pair1, probe, "adjoint", tol=tol, pair_ext=ext1)
    tr1 = vs.transport
    if kind == "density":
        tr2 = probe_transport(ext2, probe, "solution")
        g_res = float(np.abs(tr2.residual_field - np.conj(tr1.residual_field)
                             + np.tensordot(tr2.direction, ext1.A - ext2.A, axes=1)).max())
        us = special_solution(pair2, probe, "solution", tol=tol, pair_ext=ext2,
                              Phi=-np.conj(tr1.Phi))
        amp = np.ones(ext1.grid.field_shape)
    else:
        us = special_solution(pair2, probe, "solution", tol=tol, pair_ext=ext2)
        amp = np.exp(np.conj(tr1.Phi) + us.transport.Phi)
        g_res = None
    interior, _ = _interior_value(pair1, pair2, us.field, vs.field)
    val = _boundary_value(pair1, pair2, us.field, vs.field, tol)
    return val, amp, g_res, interior


def _sample_task(task):
    kind, xi_probe, sign, h = task
    plan: SamplingPlan = _STATE["plan"]
    probe = CGOProbe.create(xi_probe, h, plan.bump, plan.T, sign)
    grid = _STATE["pair1"].grid
    W = float(np.sum(plan.weights(grid, kind)))
    if _STATE["mode"] == "born":
        val = _born_value(_STATE["pair1"], _STATE["pair2"], probe, plan.tol)
        extra = None
    else:
        val, amp, g_res, interior = _oracle_value(_STATE["pair1"], _STATE["pair2"], probe, kind,
                                                  plan.tol)
        scale = -h ** 0.6 / (2.0 * W) if kind == "convection" else 1.0 / W
        extra = (_oracle_sample(probe, amp, kind), _oracle_sample(probe, None, kind), g_res,
                 complex(scale * interior))
    if kind == "convection":
        out = -h ** 0.6 * val / (2.0 * W)
    else:
        out = val / W
    return complex(out), extra


def _oracle_sample(probe: CGOProbe, amp: np.ndarray, kind: str) -> complex:
    """Mollified transform of the weighted difference field for one probe (oracle mode)."""
    plan: SamplingPlan = _STATE["plan"]
    ext: ExtendedGrid = _STATE["ext"]
    if kind == "convection":
        d = probe.mu2 + 1j * probe.mu1
        F = np.tensordot(d, _STATE["A_diff_ext"], axes=1)
    else:
        F = _STATE["q_diff_ext"]
    if amp is not None:
        F = F * amp
    w = plan.weights(ext.box, kind)
    return complex(mollified_transform(F, ext.grid, probe.xi[None], w, plan.T)[0])


def _run_tasks(tasks, state, workers):
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                 initargs=(state,)) as ex:
            return list(ex.map(_sample_task, tasks, chunksize=1))
    _init_worker(state)
    try:
        return [_sample_task(t) for t in tasks]
    finally:
        _STATE.clear()


def mollified_transform(F: np.ndarray, grid: SpaceTimeGrid, xis, weights, T: float) -> np.ndarray:
    """sum_t w(t) F^(t, xi (T - t)^2) / sum_t w(t) with F^ = int F exp(i x . xi) dx."""
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    weights = np.asarray(weights, dtype=float)
    total = np.zeros(len(xis), dtype=complex)
    for k in np.nonzero(weights)[0]:
        s = (T - grid.times[k]) ** 2
        total += weights[k] * _fourier_spatial(F[k], grid, xis * s)
    return total / weights.sum()


def _lattice_plan(xis_eff, s_bar, half: bool):
    """Split the lattice into computed points, mirrored points and interpolated points."""
    K = len(xis_eff)
    key = {tuple(np.round(x / np.pi, 6)): i for i, x in enumerate(xis_eff)}
    degenerate = np.linalg.norm(xis_eff[:, :-1], axis=1) == 0
    source = np.arange(K)
    conj = np.zeros(K, dtype=bool)
    if half:
        for i, x in enumerate(xis_eff):
            if degenerate[i]:
                continue
            nz = np.nonzero(x)[0]
            if x[nz[0]] < 0:
                j = key.get(tuple(np.round(-x / np.pi, 6)))
                if j is not None:
                    source[i], conj[i] = j, True
    compute = [i for i in range(K) if not degenerate[i] and source[i] == i]
    return compute, source, conj, degenerate


def _interpolate_degenerate(values: np.ndarray, xis: np.ndarray, degenerate: np.ndarray,
                            spacing: float) -> np.ndarray:
    """Fill xi' = 0 entries by 1-D interpolation along the first axis."""
    out = values.copy()
    index = {tuple(np.round(x / spacing, 6)): i for i, x in enumerate(xis)}
    for i in np.nonzero(degenerate)[0]:
        nb = []
        for s in (1, -1):
            y = xis[i].copy()
            y[0] += s * spacing
            j = index.get(tuple(np.round(y / spacing, 6)))
            if j is not None and not degenerate[j]:
                nb.append(values[j])
        out[i] = np.mean(nb, axis=0) if nb else np.nan
    return out


def _prepare_state(pair1, pair2, plan, mode):
    _check_same_grid(pair1, pair2)
    if mode not in ("born", "oracle"):
        raise ValueError(f"mode must be 'born' or 'oracle', got {mode!r}")
    state = {"pair1": pair1, "pair2": pair2, "plan": plan, "mode": mode}
    if mode == "born":
        state["background_ext"] = extend_pair(pair1)
    else:
        ext = ExtendedGrid.from_box(pair1.grid)
        state["ext"] = ext
        state["pair1_ext"] = extend_pair(pair1, ext)
        state["pair2_ext"] = extend_pair(pair2, ext)
        A_ext, q_ext = extend_coefficients(pair2.A - pair1.A, pair2.q - pair1.q, pair1.grid)
        state["A_diff_ext"] = A_ext
        state["q_diff_ext"] = extend_even(effective_difference(pair1, pair2), pair1.grid)
    return state


def _extract(kind, pair1, pair2, xis_eff, plan, mode, workers, half):
    grid = pair1.grid
    if abs(grid.T - plan.T) > 1e-12:
        raise ValueError(f"sampling plan T={plan.T} differs from grid T={grid.T}")
    xis_eff = np.atleast_2d(np.asarray(xis_eff, dtype=float))
    s_bar = plan.s_bar(grid, kind)
    compute, source, conj, degenerate = _lattice_plan(xis_eff, s_bar, half)
    signs = (1, -1) if kind == "convection" else (1,)
    tasks = []
    for i in compute:
        xp = xis_eff[i] / s_bar
        for sg in signs:
            tasks.extend((kind, xp, sg, h) for h in plan.h_sweep(xp))
    state = _prepare_state(pair1, pair2, plan, mode)
    t_start = time.perf_counter()
    results = _run_tasks(tasks, state, workers)
    elapsed = time.perf_counter() - t_start

    K, n = xis_eff.shape
    mu1 = np.zeros((K, n))
    mu2 = np.zeros((K, n))
    for i in range(K):
        mu1[i], mu2[i] = choose_frame(np.zeros(n) if degenerate[i] else xis_eff[i] / s_bar)
    vals = {sg: np.full(K, np.nan + 0j) for sg in signs}
    orc = {sg: np.full(K, np.nan + 0j) for sg in signs}
    plain = {sg: np.full(K, np.nan + 0j) for sg in signs}
    conf = np.zeros(K)
    records = []
    g_res = 0.0
    pos = 0
    for i in compute:
        hs = plan.h_sweep(xis_eff[i] / s_bar)
        for sg in signs:
            chunk = results[pos:pos + len(hs)]
            pos += len(hs)
            raw = np.array([c[0] for c in chunk])
            value, res = richardson(hs, raw)
            oracle_val = None
            interior = None
            if chunk[0][1] is not None:
                interior = np.array([c[1][3] for c in chunk])
                oracle_val = complex(np.mean([c[1][0] for c in chunk]))
                orc[sg][i] = oracle_val
                plain[sg][i] = chunk[0][1][1]
                if chunk[0][1][2] is not None:
                    g_res = max(g_res, max(c[1][2] for c in chunk))
            vals[sg][i] = value
            conf[i] = max(conf[i], res)
            records.append(SampleRecord(kind, xis_eff[i], xis_eff[i] / s_bar, sg, hs, raw, value,
                                        res, res <= plan.fit_threshold, oracle_val, plan.t0, interior))

    # -xi from xi: density samples are conjugate, directional samples are minus
    # conjugate because the frame at -xi is (mu1, -mu2)
    flip = (lambda z: np.conj(z)) if kind == "density" else (lambda z: -np.conj(z))
    for i in range(K):
        if source[i] != i:
            j = source[i]
            conf[i] = conf[j]
            for sg in signs:
                for arr in (vals, orc, plain):
                    arr[sg][i] = flip(arr[sg][j])
    sset = FourierSampleSet(xis_eff, plan.t0, mu1, mu2, confidence=conf,
                            interpolated=degenerate.copy(), records=records)
    sset.meta = {"mode": mode, "kind": kind, "s_bar": s_bar, "tasks": len(tasks),
                 "seconds": elapsed, "workers": workers, "half": half,
                 "g_residual": g_res if mode == "oracle" and kind == "density" else None}
    spacing = _spacing(xis_eff)
    if kind == "convection":
        sset.splus, sset.sminus = vals[1], vals[-1]
        P = _transverse(vals[1], vals[-1], mu1, mu2)
        sset.P = _interpolate_degenerate(P, xis_eff, degenerate, spacing)
        if mode == "oracle":
            sset.oracle = {"splus": orc[1], "sminus": orc[-1],
                           "splus_plain": plain[1], "sminus_plain": plain[-1]}
            sset.oracle["P"] = _interpolate_degenerate(_transverse(orc[1], orc[-1], mu1, mu2),
                                                       xis_eff, degenerate, spacing)
    else:
        sset.density = _interpolate_degenerate(vals[1], xis_eff, degenerate, spacing)
        if mode == "oracle":
            sset.oracle = {"density": _interpolate_degenerate(orc[1], xis_eff, degenerate, spacing),
                           "density_plain": plain[1]}
    return sset


def _transverse(splus, sminus, mu1, mu2) -> np.ndarray:
    """(mu2 . A^) mu2 + (mu1 . A^) mu1 from the directional samples."""
    a2 = 0.5 * (splus - sminus)
    a1 = (splus + sminus) / (2j)
    return a2[:, None] * mu2 + a1[:, None] * mu1


def _spacing(xis: np.ndarray) -> float:
    nz = np.abs(xis[xis != 0])
    return float(nz.min()) if nz.size else 1.0


def extract_convection_samples(pair1: CoefficientPair, pair2: CoefficientPair, xis_eff,
                               plan: SamplingPlan | None = None, mode: str = "born",
                               workers: int = 1, half: bool = False) -> FourierSampleSet:
    """Directional convection samples s_+- on the lattice ``xis_eff``.

    In born mode ``pair1`` is the known background and ``pair2`` is used only
    through DN data.  ``half=True`` computes one of each +-xi pair and fills
    the other by conjugation, which is valid for real-valued differences.
    """
    plan = SamplingPlan(T=pair1.grid.T) if plan is None else plan
    return _extract("convection", pair1, pair2, xis_eff, plan, mode, workers, half)


def extract_density_samples(pair1: CoefficientPair, pair2: CoefficientPair, xis_eff,
                            plan: SamplingPlan | None = None, mode: str = "born",
                            workers: int = 1, half: bool = False,
                            gauge: "GaugeReconstruction | None" = None,
                            regauge_tol: float = 1e-6) -> FourierSampleSet:
    """Density samples after the convection step.

    With ``gauge`` given, pair 1 is first replaced by the regauged pair
    (A1 + A_diff, q1 + dPsi/dt) and the transform of dPsi/dt is added back, so
    the samples approximate q2 - q1.
    """
    plan = SamplingPlan(T=pair1.grid.T) if plan is None else plan
    base = pair1
    if gauge is not None:
        base = regauge(pair1, pair2, gauge)
        mismatch = float(np.abs(base.A - pair2.A).max(initial=0.0))
        if mismatch > regauge_tol * max(1.0, pair2.scale()):
            raise ValueError(f"regauged convection differs from A2 by {mismatch:.2e}")
    sset = _extract("density", base, pair2, xis_eff, plan, mode, workers, half)
    if gauge is not None:
        grid = pair1.grid
        ext = ExtendedGrid.from_box(grid)
        w = plan.weights(grid, "density")
        s_bar = sset.meta["s_bar"]
        dpsi = extend_even(gauge.dt_psi, grid)
        part = mollified_transform(dpsi, ext.grid, sset.xis / s_bar, w, plan.T)
        sset.meta["identity_part"] = sset.density.copy()
        sset.density = sset.density + part
        if "density" in sset.oracle:
            sset.oracle["density"] = sset.oracle["density"] + part
    return sset


def assemble_curl(samples: FourierSampleSet) -> dict:
    """c_jk(xi) = xi_j P_k - xi_k P_j with P the transverse part of A_diff^."""
    if samples.splus is None or samples.sminus is None:
        raise ValueError("curl assembly needs both s+ and s- samples")
    P = samples.transverse()
    xi = samples.xis
    n = xi.shape[1]
    out = {}
    missing = []
    for j in range(n):
        for k in range(j + 1, n):
            c = xi[:, j] * P[:, k] - xi[:, k] * P[:, j]
            if np.any(np.isnan(c)):
                missing.append((j, k))
            out[(j, k)] = c
    if missing:
        log.warning("curl entries with missing frame coverage: %s", missing)
    return out


def curl_oracle(pair1: CoefficientPair, pair2: CoefficientPair, xis_eff, plan: SamplingPlan,
                s_bar: float | None = None) -> dict:
    """i times the mollified transform of d_j A_k - d_k A_j for A_diff = A2 - A1.

    The derivative is taken by finite differences on the extended grid before
    the quadrature, so this is independent of the sample pipeline.
    """
    grid = pair1.grid
    ext = ExtendedGrid.from_box(grid)
    A_ext, _ = extend_coefficients(pair2.A - pair1.A, pair2.q - pair1.q, grid)
    w = plan.weights(grid, "convection")
    s_bar = plan.s_bar(grid, "convection") if s_bar is None else s_bar
    xis = np.atleast_2d(np.asarray(xis_eff, dtype=float)) / s_bar
    n = grid.n
    out = {}
    for j in range(n):
        for k in range(j + 1, n):
            dAk = np.gradient(A_ext[k], ext.grid.spacing[j], axis=j + 1, edge_order=2)
            dAj = np.gradient(A_ext[j], ext.grid.spacing[k], axis=k + 1, edge_order=2)
            out[(j, k)] = 1j * mollified_transform(dAk - dAj, ext.grid, xis, w, plan.T)
    return out


def relative_l2(a, b) -> float:
    """||a - b|| / ||b|| over all finite entries (dicts are stacked)."""
    if isinstance(a, dict):
        a = np.concatenate([np.ravel(a[k]) for k in sorted(a)])
        b = np.concatenate([np.ravel(b[k]) for k in sorted(b)])
    a, b = np.ravel(a), np.ravel(b)
    ok = np.isfinite(a) & np.isfinite(b)
    nb = np.linalg.norm(b[ok])
    return float(np.linalg.norm(a[ok] - b[ok]) / nb) if nb > 0 else float(np.linalg.norm(a[ok]))


# ---------------------------------------------------------------------------
# gauge potential

@dataclass
class GaugeReconstruction:
    psi: np.ndarray
    dt_psi: np.ndarray
    grad_residual: float      # max |A_diff - grad Psi|
    path_residual: float      # max |Psi(order 1) - Psi(order 2)|
    boundary_trace: float     # max |Psi| on the lateral boundary
    grid: SpaceTimeGrid | None = None

    def gauge_function(self, A_diff: np.ndarray | None = None) -> GaugeFunction:
        g = self.grid
        gp = grad(self.psi, g) if A_diff is None else np.asarray(A_diff, dtype=complex)
        return GaugeFunction(g, self.psi, gp, self.dt_psi, check=False)


def _path_integral(A: np.ndarray, grid: SpaceTimeGrid, order) -> np.ndarray:
    """Line integral of A from the lower corner along axis-aligned legs in ``order``."""
    n = grid.n
    psi = np.zeros(A.shape[1:], dtype=complex)
    for k, ax in enumerate(order):
        later = order[k + 1:]
        idx = [slice(None)] * (n + 1)
        for b in later:
            idx[b + 1] = slice(0, 1)
        comp = A[ax][tuple(idx)]
        leg = sum(part * cumulative_simpson(fn(comp), dx=grid.spacing[ax], axis=ax + 1, initial=0.0)
                  for part, fn in ((1.0, np.real), (1j, np.imag)))
        psi = psi + leg
    return psi


def reconstruct_gauge(A_diff: np.ndarray, grid: SpaceTimeGrid, tol: float = 1e-3) -> GaugeReconstruction:
    """Psi with grad Psi = A_diff, anchored at the lower corner of the box.

    Two path orders are compared; their disagreement measures the curl of
    A_diff and is the path-independence diagnostic.
    """
    A_diff = np.asarray(A_diff, dtype=complex)
    if A_diff.shape != (grid.n,) + grid.field_shape:
        raise ValueError(f"A_diff has shape {A_diff.shape}, expected {(grid.n,) + grid.field_shape}")
    order = tuple(range(grid.n))
    p1 = _path_integral(A_diff, grid, order)
    p2 = _path_integral(A_diff, grid, order[::-1])
    psi = 0.5 * (p1 + p2)
    path_res = float(np.abs(p1 - p2).max(initial=0.0))
    gres = float(np.abs(grad(psi, grid) - A_diff)[(slice(None), slice(None)) + grid.interior]
                 .max(initial=0.0))
    dt_psi = np.gradient(psi, grid.dt, axis=0, edge_order=2)
    trace = float(np.abs(psi[:, grid.boundary_mask]).max(initial=0.0))
    return GaugeReconstruction(psi, dt_psi, gres, path_res, trace, grid)


def regauge(pair1: CoefficientPair, pair2: CoefficientPair, gauge: GaugeReconstruction) -> CoefficientPair:
    """(A1 + A_diff, q1 + dPsi/dt): the convection step has identified A_diff with grad Psi."""
    _check_same_grid(pair1, pair2)
    return CoefficientPair(pair1.grid, pair2.A.copy(), pair1.q + gauge.dt_psi)


# ---------------------------------------------------------------------------
# Fourier synthesis

def invert_fourier(samples: np.ndarray, xis: np.ndarray, grid: SpaceTimeGrid,
                   taper: float = 0.0) -> np.ndarray:
    """Truncated Fourier synthesis f(x) = (dxi / 2 pi)^n sum w(xi) f^(xi) exp(-i x . xi).

    ``taper`` in [0, 1) is the fraction of the band over which a raised-cosine
    window falls from 1 to 0 (0 means a sharp cut-off).
    """
    xis = np.atleast_2d(np.asarray(xis, dtype=float))
    samples = np.asarray(samples, dtype=complex)
    if not 0.0 <= taper < 1.0:
        raise ValueError(f"taper must lie in [0, 1), got {taper}")
    keys = {tuple(np.round(x, 9)) for x in xis}
    if any(tuple(np.round(-x, 9)) not in keys for x in xis):
        raise ValueError("frequency lattice must be symmetric under xi -> -xi")
    spacing = _spacing(xis)
    r = np.linalg.norm(xis, axis=1)
    rmax = r.max() if r.size else 0.0
    w = np.ones_like(r)
    if taper > 0 and rmax > 0:
        r0 = (1.0 - taper) * rmax
        band = r > r0
        w[band] = 0.5 * (1.0 + np.cos(np.pi * (r[band] - r0) / (rmax - r0 + spacing)))
    coef = samples * w * (spacing / (2 * np.pi)) ** grid.n
    ok = np.isfinite(coef)
    out = np.zeros(samples.shape[1:] + grid.shape, dtype=complex) if samples.ndim > 1 \
        else np.zeros(grid.shape, dtype=complex)
    x = grid.mesh()
    for xi, c, good in zip(xis, coef, ok):
        if not np.all(good):
            continue
        phase = np.exp(-1j * sum(xi[j] * x[j] for j in range(grid.n)))
        out += np.multiply.outer(c, phase) if np.ndim(c) else c * phase
    return out


# ---------------------------------------------------------------------------
# verdict

@dataclass(frozen=True)
class Tolerances:
    curl: float = 1e-2          # curl samples / (|xi| * L1 coefficient scale)
    density: float = 1e-2       # density samples / L1 coefficient scale
    path: float = 1e-3          # path residual relative to the convection scale
    distinct_factor: float = 10.0

    def halved(self) -> "Tolerances":
        return Tolerances(self.curl / 2, self.density / 2, self.path / 2, self.distinct_factor)


@dataclass(frozen=True)
class Budget:
    max_frequencies: int = 6
    seconds: float = 3600.0


@dataclass
class VerdictReport:
    verdict: str
    evidence: dict
    tolerances: Tolerances
    mode: str
    gauge: GaugeReconstruction | None = None
    curl: dict | None = None
    samples: FourierSampleSet | None = None
    density: FourierSampleSet | None = None
    notes: list = field(default_factory=list)

    def summary(self) -> dict:
        return {"verdict": self.verdict, "mode": self.mode,
                "tolerances": self.tolerances.__dict__, "evidence": self.evidence,
                "notes": self.notes}


def verdict_subset(max_frequencies: int, spacing: float = np.pi) -> np.ndarray:
    """A small symmetric-free set of in-plane and oblique frequencies for verdicts."""
    base = np.array([[1, 0, 0], [0, 1, 0], [1, 1, 0], [1, 0, 1], [0, 1, 1], [1, 1, 1],
                     [2, 0, 0], [0, 2, 0], [2, 1, 0], [1, 2, 0]], dtype=float)
    return base[:max_frequencies] * spacing


def _decide(values: dict, tol: Tolerances) -> str:
    limits = {"curl": tol.curl, "density": tol.density, "path": tol.path}
    present = {k: v for k, v in values.items() if k in limits and v is not None}
    if any(v > tol.distinct_factor * limits[k] for k, v in present.items()):
        return "distinct"
    if present and all(v <= limits[k] for k, v in present.items()):
        return "gauge-equivalent"
    return "inconclusive"


def decide(evidence: dict, tol: Tolerances) -> str:
    """Verdict from stored evidence; re-run with other tolerances for the monotonicity check."""
    if evidence.get("budget_exhausted"):
        return "inconclusive"
    if _decide({k: evidence.get(k) for k in ("curl", "path", "density")}, tol) == "distinct":
        return "distinct"
    first = _decide({"curl": evidence.get("curl"), "path": evidence.get("path")}, tol)
    if first != "gauge-equivalent":
        return first
    if evidence.get("density") is None:
        return "inconclusive"
    return _decide({"curl": evidence.get("curl"), "path": evidence.get("path"),
                    "density": evidence.get("density")}, tol)


def gauge_equivalence_verdict(pair1: CoefficientPair, pair2: CoefficientPair,
                              mode: str = "oracle", budget: Budget | None = None,
                              tolerances: Tolerances | None = None,
                              plan: SamplingPlan | None = None, workers: int = 1,
                              xis_eff=None) -> VerdictReport:
    """End-to-end pipeline: DN differences, curl samples, Psi, density samples, verdict."""
    _check_same_grid(pair1, pair2)
    budget = Budget() if budget is None else budget
    tol = Tolerances() if tolerances is None else tolerances
    plan = SamplingPlan(T=pair1.grid.T) if plan is None else plan
    grid = pair1.grid
    t_start = time.perf_counter()
    evidence: dict = {}
    notes = []

    # 1. DN differences over face-patch probes
    faces = grid.partition.accessible_faces()
    dn = []
    for face in faces:
        f = face_patch_probe(grid, face)
        r1 = dn_apply(pair1, f, "local", plan.tol).output
        r2 = dn_apply(pair2, f, "local", plan.tol).output
        num = boundary_norm({k: r1[k] - r2[k] for k in r1}, grid)
        den = max(boundary_norm(r1, grid), 1e-300)
        dn.append(num / den)
    evidence["dn_relative"] = [float(x) for x in dn]

    # 2. curl samples on the budgeted frequency set
    xis = verdict_subset(budget.max_frequencies) if xis_eff is None else np.asarray(xis_eff)
    ref = max(coefficient_l1_scale(pair1), coefficient_l1_scale(pair2), 1e-300)
    samples = extract_convection_samples(pair1, pair2, xis, plan, mode, workers)
    curl = assemble_curl(samples)
    knorm = np.maximum(np.linalg.norm(xis, axis=1), 1e-300)
    per_xi = np.nanmax(np.abs(np.stack(list(curl.values()))), axis=0) / knorm
    evidence["curl"] = float(np.nanmax(per_xi)) / ref
    evidence["curl_max_abs"] = float(np.nanmax(np.abs(np.stack(list(curl.values())))))
    evidence["reference_scale"] = ref

    # 3. gauge potential
    if mode == "oracle":
        A_diff = pair2.A - pair1.A
    else:
        A_diff = _born_convection_estimate(samples, grid)
        notes.append("born mode: gradient part of A_diff is invisible to boundary data; "
                     "Psi is built from the band-limited transverse estimate")
    gauge = reconstruct_gauge(A_diff, grid)
    a_scale = max(float(np.abs(A_diff).max(initial=0.0)), float(np.abs(pair1.A).max(initial=0.0)),
                  float(np.abs(pair2.A).max(initial=0.0)), 1e-300)
    evidence["path"] = gauge.path_residual / a_scale
    evidence["psi_boundary"] = gauge.boundary_trace
    elapsed = time.perf_counter() - t_start
    density = None
    if _decide({"curl": evidence["curl"], "path": evidence["path"]}, tol) == "gauge-equivalent":
        if elapsed > budget.seconds:
            evidence["budget_exhausted"] = True
            notes.append(f"budget of {budget.seconds:.0f} s exhausted before the density step")
        else:
            g = gauge if mode == "oracle" else None
            density = extract_density_samples(pair1, pair2, xis, plan, mode, workers, gauge=g)
            part = density.meta.get("identity_part", density.density)
            evidence["density"] = float(np.nanmax(np.abs(part))) / ref
            evidence["g_residual"] = density.meta.get("g_residual")
    evidence["seconds"] = time.perf_counter() - t_start
    verdict = decide(evidence, tol)
    return VerdictReport(verdict, evidence, tol, mode, gauge, curl, samples, density, notes)


def coefficient_l1_scale(pair: CoefficientPair) -> float:
    """Largest spatial L1 norm over time slices of any A component or of q, on O.

    Fourier samples of a field are bounded by this norm, which makes it the
    natural reference for sample-based evidence.
    """
    g = pair.grid
    parts = [g.integrate_space(np.abs(pair.q)).max(initial=0.0)]
    parts += [g.integrate_space(np.abs(a)).max(initial=0.0) for a in pair.A]
    return 2.0 * float(max(parts))


def _born_convection_estimate(samples: FourierSampleSet, grid: SpaceTimeGrid) -> np.ndarray:
    """Band-limited transverse A_diff from samples (symmetric completion by conjugation)."""
    P = samples.transverse()
    xis = samples.xis
    full_x = np.concatenate([xis, -xis])
    full_p = np.concatenate([P, np.conj(P)])
    keys, sel = set(), []
    for i, x in enumerate(full_x):
        k = tuple(np.round(x, 9))
        if k not in keys:
            keys.add(k)
            sel.append(i)
    ext = ExtendedGrid.from_box(grid)
    field_ext = invert_fourier(full_p[sel], full_x[sel], ext.grid)
    field_box = field_ext[..., (field_ext.shape[-1] - 1) // 2:]
    A = np.broadcast_to(field_box[:, None], (grid.n,) + grid.field_shape)
    return np.real(A).astype(complex)
