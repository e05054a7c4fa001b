"""
Command line runner.

    localdn forward-convergence|gauge-check|cgo-verify|identity-verify|recover
            --config <file.yaml> --out <dir> [--mode oracle|born] [--workers N]

Every command writes ``manifest.json`` into the output directory, also when a
check fails.  Exit codes: 0 success, 2 a check failed (details in the
manifest), 3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback
from pathlib import Path

import numpy as np

from . import recovery as rec
from . import studies
from .config import ConfigError, ExperimentConfig, load_config
from .fields import CoefficientPair, gauge_transform, make_gauge, rotational_field, synth_pair
from .grid import build_grid
from .io import RunManifest, dump_fields
from .io import write_csv as _write_csv

log = logging.getLogger("localdn")

EXIT_OK, EXIT_CHECK, EXIT_INTERNAL = 0, 2, 3

COMMANDS = ("forward-convergence", "gauge-check", "cgo-verify", "identity-verify", "recover")


def write_csv(path, rows):
    """CSV ledger without wall-clock columns, so checksums are reproducible."""
    return _write_csv(path, [{k: v for k, v in r.items() if k != "seconds"} for r in rows])


class CheckFailed(Exception):
    """A verification criterion was not met; the manifest carries the evidence."""


def build_pairs(cfg: ExperimentConfig, grid=None):
    """(pair1, pair2, truth) for the configured scenario; ``truth`` may hold the gauge."""
    c = cfg.coefficients
    grid = build_grid(cfg.grid.nodes, cfg.grid.nt, cfg.grid.T) if grid is None else grid
    p1 = synth_pair(grid, seed=c.seed, amplitude=c.amplitude, complex_values=c.complex_values,
                    time_dependent=c.time_dependent)
    truth = {}
    if c.scenario == "identical":
        p2 = p1
    elif c.scenario == "gauge":
        G = make_gauge(grid, seed=c.gauge_seed, amplitude=c.gauge_amplitude)
        p2 = gauge_transform(p1, G)
        truth["gauge"] = G
    elif c.scenario == "rotational":
        p2 = CoefficientPair(grid, p1.A + rotational_field(grid, c.difference_amplitude), p1.q)
    elif c.scenario == "generic":
        p2 = synth_pair(grid, seed=c.seed2, amplitude=c.amplitude,
                        complex_values=c.complex_values, time_dependent=c.time_dependent)
    else:  # born: small real perturbation of the background
        d = synth_pair(grid, seed=c.seed2, amplitude=c.difference_amplitude,
                       complex_values=False, time_dependent=c.time_dependent)
        p2 = p1 + d
    return p1, p2, truth


def _plan(cfg: ExperimentConfig) -> rec.SamplingPlan:
    p = cfg.probes
    return rec.SamplingPlan(T=cfg.grid.T, t0=p.t0, width=p.width,
                            h_fractions=tuple(p.h_fractions), h_cap=p.h_cap,
                            fit_threshold=cfg.recovery.fit_threshold, tol=cfg.solver.tol)


def _xis(cfg: ExperimentConfig) -> np.ndarray:
    p = cfg.probes
    if p.xis is not None:
        return np.asarray(p.xis, dtype=float)
    return rec.xi_lattice(p.kmax, p.spacing)


def cmd_forward_convergence(cfg, out: Path, man: RunManifest) -> dict:
    levels = tuple(cfg.grid.levels)
    if len(levels) < 3:
        raise CheckFailed(f"need >= 3 levels for a convergence study, got {len(levels)}")
    report, failed = {}, []
    for case, cplx in (("real", False), ("complex", True)):
        with man.stage(case):
            res = studies.forward_convergence(levels, cplx, T=cfg.grid.T)
        man.add_file(write_csv(out / f"convergence_{case}.csv",
                               [dict(r, case=case) for r in res["rows"]]))
        report[case] = {"orders": res["orders"], "fitted_order": res["fitted_order"]}
        if abs(res["fitted_order"] - 2.0) > 0.3:
            failed.append(f"{case}: fitted order {res['fitted_order']:.3f} outside 2 +- 0.3")
    man.report.update(report)
    if failed:
        raise CheckFailed("; ".join(failed))
    return report


def _gauge_levels(cfg):
    half = max(cfg.grid.nodes // 2, 4)
    return (half + 1, 2 * half + 1), (max(cfg.grid.nt // 4, 2), max(cfg.grid.nt // 2, 4))


def cmd_gauge_check(cfg, out: Path, man: RunManifest) -> dict:
    levels, nts = _gauge_levels(cfg)
    c = cfg.coefficients
    with man.stage("dn_differences"):
        res = studies.gauge_check(levels, nts, seed=c.seed, gauge_seed=c.gauge_seed,
                                  amplitude=max(c.amplitude, 1e-12),
                                  gauge_amplitude=c.gauge_amplitude,
                                  zero_gauge=c.gauge_amplitude == 0, tol=cfg.solver.tol)
    man.add_file(write_csv(out / "gauge_check.csv", res["rows"]))
    ratios = np.asarray(res["ratios"])
    orders = np.log2(ratios)
    fine = res["info"][levels[1]]
    report = {"levels": list(levels), "ratios": ratios.tolist(), "orders": orders.tolist(),
              "coefficients": res["info"],
              "coefficient_distance": fine["coefficient_distance"],
              "dn_difference_fine": max(r["dn_difference"] for r in res["rows"]
                                        if r["nodes"] == levels[1])}
    man.report.update(report)
    if c.gauge_amplitude != 0 and np.any(orders < cfg.solver.min_order):
        raise CheckFailed(f"DN-difference decay order {orders.min():.2f} below "
                          f"{cfg.solver.min_order}")
    return report


def cmd_cgo_verify(cfg, out: Path, man: RunManifest) -> dict:
    failed = []
    with man.stage("invariants"):
        inv = studies.cgo_invariants(studies.frame_lattice(cfg.probes.n_lattice),
                                     hs=tuple(cfg.probes.h_sweep), T=cfg.grid.T)
    man.add_file(write_csv(out / "cgo_invariants.csv", inv["rows"]))
    for key, val in inv["worst"].items():
        if val > cfg.solver.frame_tol:
            failed.append(f"{key} residual {val:.2e} > {cfg.solver.frame_tol:.0e}")
    if not inv["cross_monotone"]:
        failed.append("|xi_pm| not increasing along the h-sweep")
    grid = build_grid(cfg.grid.nodes, cfg.grid.nt, cfg.grid.T)
    pair, _, _ = build_pairs(cfg, grid)
    xi = np.asarray(cfg.probes.xis[0] if cfg.probes.xis else [1.5, 1.0, 1.0], dtype=float)
    report = {"invariants": inv["worst"], "cross_monotone": inv["cross_monotone"]}
    rows = []
    for role in ("solution", "adjoint"):
        with man.stage(f"remainder_{role}"):
            rs = studies.remainder_sweep(pair, xi, tuple(cfg.probes.h_sweep), role, T=cfg.grid.T,
                                         tol=cfg.solver.tol)
        rows += rs["rows"]
        report[f"slope_{role}"] = rs["slope"]
        report[f"fit_residual_{role}"] = rs["fit_residual"]
        if rs["slope"] < cfg.solver.min_slope:
            failed.append(f"{role} remainder slope {rs['slope']:.3f} < {cfg.solver.min_slope}")
        g0 = max(r["gamma0"] for r in rs["rows"])
        report[f"gamma0_{role}"] = g0
        if g0 > cfg.solver.gamma0_tol:
            failed.append(f"{role} trace on Gamma_0 {g0:.2e}")
    man.add_file(write_csv(out / "remainder.csv", rows))
    man.report.update(report)
    if failed:
        raise CheckFailed("; ".join(failed))
    return report


def cmd_identity_verify(cfg, out: Path, man: RunManifest) -> dict:
    half = max(cfg.grid.nodes // 2, 4)
    levels = ((half + 1, max(cfg.grid.nt // 2, 2)), (2 * half + 1, cfg.grid.nt))
    c = cfg.coefficients
    with man.stage("identity"):
        res = studies.identity_study(levels, seed=c.seed, seed2=c.seed2, amplitude=c.amplitude,
                                     gauge_amplitude=c.gauge_amplitude, tol=cfg.solver.tol)
    man.add_file(write_csv(out / "identity.csv", res["rows"]))
    rows = res["rows"]
    by = {(r["nodes"], r["case"]): r for r in rows}
    coarse, fine = levels[0][0], levels[1][0]
    gauge_ratio = by[(coarse, "gauge")]["relative_value"] / max(by[(fine, "gauge")]["relative_value"], 1e-300)
    ident = max(abs(complex(r["interior_re"], r["interior_im"])) for r in rows if r["case"] == "identical")
    gap = by[(fine, "generic")]["gap"]
    report = {"identical_max": ident, "gauge_ratio": gauge_ratio, "generic_gap": gap}
    man.report.update(report)
    failed = []
    if gap > cfg.solver.identity_gap:
        failed.append(f"generic gap {gap:.3f} > {cfg.solver.identity_gap}")
    if gauge_ratio < 3.0:
        failed.append(f"gauge identity value decays by {gauge_ratio:.2f} < 3 per doubling")
    if failed:
        raise CheckFailed("; ".join(failed))
    return report


def cmd_recover(cfg, out: Path, man: RunManifest) -> dict:
    grid = build_grid(cfg.grid.nodes, cfg.grid.nt, cfg.grid.T)
    p1, p2, truth = build_pairs(cfg, grid)
    r = cfg.recovery
    tol = rec.Tolerances(r.curl_tol, r.density_tol, r.path_tol, r.distinct_factor)
    budget = rec.Budget(r.max_frequencies, r.budget_seconds)
    xis = np.asarray(cfg.probes.xis, dtype=float) if cfg.probes.xis is not None else None
    with man.stage("verdict"):
        rep = rec.gauge_equivalence_verdict(p1, p2, cfg.mode, budget, tol, _plan(cfg),
                                            cfg.workers, xis)
    man.add_file(write_csv(out / "convection_samples.csv", rep.samples.to_rows()))
    curl_rows = []
    for (j, k), vals in rep.curl.items():
        for xi, v in zip(rep.samples.xis, vals):
            curl_rows.append({"xi1": xi[0], "xi2": xi[1], "xi3": xi[2], "j": j + 1, "k": k + 1,
                              "real": v.real, "imag": v.imag})
    man.add_file(write_csv(out / "curl.csv", curl_rows))
    fields = {"psi": rep.gauge.psi, "dt_psi": rep.gauge.dt_psi}
    if rep.density is not None:
        man.add_file(write_csv(out / "density_samples.csv", rep.density.to_rows()))
        fields["density_xis"] = rep.density.xis
        fields["density_samples"] = rep.density.density
    report = rep.summary()
    if "gauge" in truth:
        G = truth["gauge"]
        report["psi_relative_error"] = float(np.linalg.norm(rep.gauge.psi - G.psi)
                                             / max(np.linalg.norm(G.psi), 1e-300))
        fields["psi_true"] = G.psi
    fields["q_difference"] = p2.q - p1.q
    man.add_file(dump_fields(out / "fields.npz", **fields))
    man.report.update(report)
    return report


HANDLERS = {"forward-convergence": cmd_forward_convergence, "gauge-check": cmd_gauge_check,
            "cgo-verify": cmd_cgo_verify, "identity-verify": cmd_identity_verify,
            "recover": cmd_recover}


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="localdn", description=__doc__.strip().splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, type=Path)
    ap.add_argument("--out", required=True, type=Path)
    ap.add_argument("--mode", choices=("oracle", "born"), default=None)
    ap.add_argument("--workers", type=int, default=None)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    man = RunManifest(args.command, "", out)
    code = EXIT_OK
    try:
        cfg = load_config(args.config)
        if args.mode is not None:
            cfg.mode = args.mode
        if args.workers is not None:
            cfg.workers = args.workers
        cfg.validate()
        man.config_fingerprint = cfg.fingerprint()
        man.report["config"] = cfg.to_dict()
        HANDLERS[args.command](cfg, out, man)
        man.status = "ok"
    except (CheckFailed, ConfigError) as exc:
        man.status = "failed"
        man.report["failure"] = str(exc)
        print(f"{args.command}: FAILED: {exc}", file=sys.stderr)
        code = EXIT_CHECK
    except Exception as exc:  # noqa: BLE001 - every crash still leaves a manifest
        man.status = "error"
        man.report["error"] = f"{type(exc).__name__}: {exc}"
        man.report["traceback"] = traceback.format_exc()
        print(f"{args.command}: internal error: {exc}", file=sys.stderr)
        code = EXIT_INTERNAL
    man.write()
    if code == EXIT_OK:
        print(f"{args.command}: ok ({out / 'manifest.json'})")
    return code


if __name__ == "__main__":
    sys.exit(main())
