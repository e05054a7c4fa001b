"""
Verification studies shared by the command line runner, the demos and the tests.

Each study returns plain dictionaries (rows for CSV ledgers plus a summary) so
the caller decides how to report them.
"""

from __future__ import annotations

import time

import numpy as np

from .cgo import (DEFAULT_H_SWEEP, CGOProbe, TimeBump, build_phase, choose_frame, frame_violation,
                  special_solution)
from .fields import CoefficientPair, gauge_transform, make_gauge, synth_pair
from .forward import DEFAULT_TOL, boundary_norm, dn_apply, face_patch_probe, solve_forward
from .grid import build_grid
from .recovery import evaluate_identity

__all__ = ["manufactured_case", "forward_convergence", "gauge_check", "frame_lattice",
           "cgo_invariants", "remainder_sweep", "identity_study", "fit_slope"]

GAUGE_FACES = ("x1-", "x1+", "x2-", "x2+", "x3+")


def fit_slope(x, y) -> tuple:
    """Least-squares slope of log y against log x and the rms residual of the fit."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    coef = np.polyfit(lx, ly, 1)
    res = float(np.sqrt(np.mean((np.polyval(coef, lx) - ly) ** 2)))
    return float(coef[0]), res


def manufactured_case(grid, complex_coefficients: bool = False):
    """(pair, exact solution, source) for u = (1 - exp(-t)) exp(a . x).

    In the complex case A = (1 + t)(alpha sin(pi x2), beta x1, gamma x1 x2) is
    divergence free and q = kappa (1 + x1 x2 x3), so the source is explicit.
    """
    a = np.array([0.7, -0.4 + 0.3j, 0.5])
    if complex_coefficients:
        alpha, beta, gamma, kappa = 0.6 + 0.2j, -0.5 + 0.4j, 0.3 - 0.3j, 1.0 + 0.5j
    else:
        alpha = beta = gamma = kappa = 0.0
    expo = lambda x: np.exp(a[0] * x[0] + a[1] * x[1] + a[2] * x[2])
    u_ex = grid.sample(lambda t, x: (1 - np.exp(-t)) * expo(x))
    A = np.stack([grid.sample(lambda t, x: (1 + t) * alpha * np.sin(np.pi * x[1])),
                  grid.sample(lambda t, x: (1 + t) * beta * x[0]),
                  grid.sample(lambda t, x: (1 + t) * gamma * x[0] * x[1])])
    q = grid.sample(lambda t, x: kappa * (1 + x[0] * x[1] * x[2]))
    ut = grid.sample(lambda t, x: np.exp(-t) * expo(x))
    AA = np.einsum("j...,j...->...", A, A)
    Agrad = sum(A[j] * a[j] for j in range(3)) * u_ex
    source = ut - (a @ a) * u_ex - 2 * Agrad - AA * u_ex + q * u_ex
    return CoefficientPair(grid, A, q), u_ex, source


def forward_convergence(levels=(8, 16, 32), complex_coefficients: bool = False,
                        T: float = 1.0, tol: float = 1e-12) -> dict:
    """Refinement study in space and time together (nt equal to the cell count)."""
    if len(levels) < 3:
        raise ValueError("need >= 3 levels for a convergence study")
    rows = []
    for cells in levels:
        g = build_grid(cells + 1, nt=cells, T=T)
        pair, u_ex, src = manufactured_case(g, complex_coefficients)
        t0 = time.perf_counter()
        u = solve_forward(pair, u_ex, src, tol=tol)
        err = float(np.abs(u - u_ex).max())
        rows.append({"cells": cells, "nt": cells, "h": 1.0 / cells, "error": err,
                     "seconds": time.perf_counter() - t0})
    errs = np.array([r["error"] for r in rows])
    orders = np.log2(errs[:-1] / errs[1:]).tolist()
    slope, _ = fit_slope([r["h"] for r in rows], errs)
    return {"rows": rows, "orders": orders, "fitted_order": slope}


def gauge_check(levels=(13, 25), nts=(16, 32), seed: int = 1, gauge_seed: int = 2,
                amplitude: float = 1.0, gauge_amplitude: float = 0.1, faces=GAUGE_FACES,
                zero_gauge: bool = False, tol: float = DEFAULT_TOL) -> dict:
    """DN differences between (A, q) and its gauge transform at two grid levels."""
    rows, diffs, info = [], {}, {}
    for N, nt in zip(levels, nts):
        g = build_grid(N, nt=nt)
        p = synth_pair(g, seed=seed, amplitude=amplitude, margin=0.1)
        G = make_gauge(g, seed=gauge_seed, amplitude=0.0 if zero_gauge else gauge_amplitude,
                       center=[0.5] * g.n, radius=0.45)
        p2 = gauge_transform(p, G)
        info[N] = {"scale": p.scale(), "grad_psi": float(np.abs(G.grad_psi).max()),
                   "dt_psi": float(np.abs(G.dt_psi).max()),
                   "coefficient_distance": float(max(np.abs(p2.A - p.A).max(),
                                                     np.abs(p2.q - p.q).max()))}
        d = []
        for face in faces:
            f = face_patch_probe(g, face)
            r1 = dn_apply(p, f, "local", tol).output
            r2 = dn_apply(p2, f, "local", tol).output
            num = boundary_norm({k: r1[k] - r2[k] for k in r1}, g)
            d.append(num)
            rows.append({"nodes": N, "nt": nt, "probe": face, "dn_difference": num,
                         "dn_norm": boundary_norm(r1, g)})
        diffs[N] = np.array(d)
    ratios = (diffs[levels[0]] / np.maximum(diffs[levels[1]], 1e-300)).tolist()
    return {"rows": rows, "ratios": ratios, "info": info}


def frame_lattice(count: int = 100, seed: int = 0, radius: float = 3.4) -> np.ndarray:
    """Random frequencies with xi' != 0 plus a few structured ones.

    The default radius keeps every probe admissible for h = 0.4, the largest
    value of the default sweep (h^(6/5) |xi|^2 / 4 < 1).
    """
    rng = np.random.default_rng(seed)
    fixed = [[np.pi, 0, 0], [0, 2.0, 2.0], [1.5, 1.5, 1.5], [0.5, 0, 3.0]]
    xs = list(fixed)
    while len(xs) < count:
        x = rng.uniform(-radius, radius, size=3)
        if np.linalg.norm(x) <= radius and np.linalg.norm(x[:2]) > 1e-3:
            xs.append(x)
    return np.array(xs[:count])


def cgo_invariants(xis, hs=DEFAULT_H_SWEEP, n_points: int = 1000, seed: int = 0,
                   T: float = 1.0) -> dict:
    """Eikonal, frame and exponent-algebra checks over a probe lattice."""
    rng = np.random.default_rng(seed)
    bump = TimeBump(0.5, 0.35)
    rows = []
    worst = {"frame": 0.0, "eikonal": 0.0, "exponent": 0.0}
    monotone = True
    for xi in np.atleast_2d(xis):
        mu1, mu2 = choose_frame(xi)
        fv = frame_violation(xi, mu1, mu2)
        cross = []
        for h in hs:
            probe = CGOProbe.create(xi, h, bump, T)
            ph = build_phase(probe)
            eik = max(abs(v) for v in ph.eikonal_residuals().values())
            x = rng.uniform(-1, 1, size=(n_points, 3))
            combos = ph.combinations(x)
            ex = 0.0
            for computed, closed in combos.values():
                scale = max(1.0, float(np.abs(closed).max()))
                ex = max(ex, float(np.abs(computed - closed).max()) / scale)
            xp, xm = ph.cross_frequencies()
            cross.append(min(np.linalg.norm(xp), np.linalg.norm(xm)))
            worst["eikonal"] = max(worst["eikonal"], eik)
            worst["exponent"] = max(worst["exponent"], ex)
            rows.append({"xi1": xi[0], "xi2": xi[1], "xi3": xi[2], "h": h, "frame": fv,
                         "eikonal": eik, "exponent": ex, "cross_freq": cross[-1]})
        worst["frame"] = max(worst["frame"], fv)
        monotone &= bool(np.all(np.diff(cross) > 0))
    return {"rows": rows, "worst": worst, "cross_monotone": monotone}


def remainder_sweep(pair: CoefficientPair, xi, hs=DEFAULT_H_SWEEP, role: str = "solution",
                    bump: TimeBump | None = None, T: float = 1.0, tol: float = DEFAULT_TOL) -> dict:
    """Semiclassical remainder norms over an h-sweep and the fitted log-log slope."""
    bump = TimeBump(0.5, 0.35) if bump is None else bump
    rows = []
    for h in hs:
        probe = CGOProbe.create(np.asarray(xi, float), h, bump, T)
        t0 = time.perf_counter()
        S = special_solution(pair, probe, role, tol=tol)
        rows.append({"h": h, "role": role, "remainder": S.remainder_norm,
                     "gamma0": S.gamma0_trace(),
                     "terminal": float(np.abs(S.field[-1]).max()) if role == "adjoint" else 0.0,
                     "transport_residual": S.transport.residual if S.transport else 0.0,
                     "seconds": time.perf_counter() - t0})
    slope, res = fit_slope(hs, [r["remainder"] for r in rows])
    return {"rows": rows, "slope": slope, "fit_residual": res}


def identity_study(levels=((13, 32), (25, 64)), xi=(np.pi, 0.0, 0.0), h: float = 0.2,
                   seed: int = 1, seed2: int = 2, amplitude: float = 0.5,
                   gauge_amplitude: float = 0.1, tol: float = DEFAULT_TOL) -> dict:
    """Identity values for identical, gauge-related and generic pairs per grid level."""
    rows = []
    bump = TimeBump(0.3, 0.2)
    for N, nt in levels:
        g = build_grid(N, nt=nt)
        p1 = synth_pair(g, seed=seed, amplitude=amplitude)
        G = make_gauge(g, seed=seed2 + 1, amplitude=gauge_amplitude,
                       center=[0.5] * g.n, radius=0.45)
        cases = {"identical": p1, "gauge": gauge_transform(p1, G),
                 "generic": synth_pair(g, seed=seed2, amplitude=amplitude)}
        probe = CGOProbe.create(np.asarray(xi, float), h, bump, g.T)
        for name, p2 in cases.items():
            ev = evaluate_identity(p1, p2, probe, source="oracle", tol=tol)
            rows.append({"nodes": N, "nt": nt, "case": name,
                         "interior_re": ev.interior.real, "interior_im": ev.interior.imag,
                         "boundary_re": ev.boundary.real, "boundary_im": ev.boundary.imag,
                         "gap": ev.gap, "magnitude": ev.magnitude,
                         "relative_value": ev.relative_value})
    return {"rows": rows}
