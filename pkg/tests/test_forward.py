import numpy as np
import pytest

from localdn.fields import CoefficientPair, gauge_transform, make_gauge, synth_pair
from localdn.forward import (DirichletDatum, apply_adjoint_operator, apply_operator, boundary_inner,
                             build_dataset, dn_apply, face_patch_probe, neumann_trace,
                             solve_adjoint, solve_forward)
from localdn.grid import build_grid
from localdn.studies import forward_convergence, manufactured_case


@pytest.fixture(scope="module")
def grid():
    return build_grid(11, nt=10)


def test_heat_equation_is_second_order():
    res = forward_convergence((6, 12, 24))
    assert all(1.7 < o < 2.3 for o in res["orders"])


def test_manufactured_complex_small_error():
    g = build_grid(17, nt=16)
    pair, u_ex, src = manufactured_case(g, complex_coefficients=True)
    u = solve_forward(pair, u_ex, src, tol=1e-12)
    assert np.abs(u - u_ex).max() < 5e-3 * np.abs(u_ex).max()


def test_zero_data_gives_zero(grid):
    u = solve_forward(synth_pair(grid, seed=0))
    assert np.abs(u).max() == 0


def test_forward_rejects_incompatible_initial_data(grid):
    f = np.ones(grid.field_shape)
    with pytest.raises(ValueError, match="t = 0"):
        solve_forward(CoefficientPair.zero(grid), f)


def test_adjoint_duality(grid):
    """<L u, v> = <u, L* v> for u(0)=0, v(T)=0 and zero boundary values."""
    pair = synth_pair(grid, seed=2, amplitude=0.5)
    rng = np.random.default_rng(0)
    F = np.zeros(grid.field_shape, dtype=complex)
    G = np.zeros(grid.field_shape, dtype=complex)
    inner = (slice(1, None),) + grid.interior
    F[inner] = rng.normal(size=F[inner].shape)
    G[(slice(0, -1),) + grid.interior] = rng.normal(size=G[(slice(0, -1),) + grid.interior].shape)
    u = solve_forward(pair, None, F)
    v = solve_adjoint(pair, None, G)
    assert abs(v[-1]).max() == 0
    lhs = grid.integrate(F * np.conj(v))
    rhs = grid.integrate(u * np.conj(G))
    assert abs(lhs - rhs) < 0.05 * abs(lhs)


def test_operator_residual_small():
    g = build_grid(17, nt=32)
    pair = synth_pair(g, seed=1, amplitude=0.5)
    f = face_patch_probe(g, "x1+")
    u = solve_forward(pair, f)
    r = apply_operator(pair, u)[(slice(2, -2),) + g.interior]
    assert np.abs(r).max() < 0.1 * np.abs(u).max() / g.dt
    v = solve_adjoint(pair, f.values[::-1])
    r2 = apply_adjoint_operator(pair, v)[(slice(2, -2),) + g.interior]
    assert np.isfinite(r2).all()


def test_datum_validation(grid):
    vals = np.zeros(grid.field_shape)
    vals[3][grid.partition.gamma0] = 1.0
    with pytest.raises(ValueError, match="Gamma_0"):
        DirichletDatum(grid, vals, local=True)
    DirichletDatum(grid, vals, local=False)
    vals[0][grid.boundary_mask] = 1.0
    with pytest.raises(ValueError, match="f\\(0, x\\)"):
        DirichletDatum(grid, vals)


def test_local_dn_output_faces(grid):
    pair = synth_pair(grid, seed=0)
    f = face_patch_probe(grid, "x2-")
    rec = dn_apply(pair, f)
    assert set(rec.output) == {fc.name for fc in grid.partition.accessible_faces()}
    full = dn_apply(pair, f, "full")
    assert "x3-" in full.output
    with pytest.raises(ValueError):
        dn_apply(pair, f, "partial")


def test_dn_map_is_linear(grid):
    pair = synth_pair(grid, seed=4)
    f1 = face_patch_probe(grid, "x1-")
    f2 = face_patch_probe(grid, "x3+", omega=3.0)
    both = DirichletDatum(grid, f1.values + 2j * f2.values, local=True)
    a, b, c = (dn_apply(pair, f).output for f in (f1, f2, both))
    for k in a:
        np.testing.assert_allclose(c[k], a[k] + 2j * b[k], atol=1e-8 * np.abs(c[k]).max())


def test_gauge_pair_dn_maps_nearly_equal():
    g = build_grid(13, nt=16)
    p = synth_pair(g, seed=1, margin=0.1)
    G = make_gauge(g, seed=2, amplitude=0.1, center=[0.5] * 3, radius=0.45)
    p2 = gauge_transform(p, G)
    f = face_patch_probe(g, "x1+")
    r1, r2 = dn_apply(p, f).output, dn_apply(p2, f).output
    num = sum(np.linalg.norm(r1[k] - r2[k]) for k in r1)
    den = sum(np.linalg.norm(r1[k]) for k in r1)
    assert num < 1e-2 * den
    assert np.abs(G.grad_psi).max() > 0.1


def _flux_gap(N, nt):
    g = build_grid(N, nt=nt)
    pair = CoefficientPair.zero(g)
    u = solve_forward(pair, face_patch_probe(g, "x1+"))
    tr = neumann_trace(u, pair, g.partition.faces)
    return abs(boundary_inner(tr, np.ones(g.field_shape), g) - g.integrate_space(u[-1]))


def test_flux_balance_for_heat_equation():
    """int_Omega u(T) equals the total normal flux; the discrete gap shrinks at second order."""
    assert _flux_gap(11, 20) / _flux_gap(21, 40) > 3.0


def test_build_dataset_deterministic(grid):
    pair = synth_pair(grid, seed=0)
    probes = [face_patch_probe(grid, n) for n in ("x1-", "x2+")]
    d1 = build_dataset(pair, probes)
    d2 = build_dataset(pair, probes, workers=2)
    assert d1.fingerprint() == d2.fingerprint()
    for a, b in zip(d1.records, d2.records):
        for k in a.output:
            np.testing.assert_array_equal(a.output[k], b.output[k])
