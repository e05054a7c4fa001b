import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from localdn.cgo import (CGOProbe, TimeBump, assemble_reflected, build_phase, choose_frame,
                         extend_pair, frame_violation, probe_transport, solve_transport,
                         special_solution)
from localdn.fields import CoefficientPair, synth_pair
from localdn.grid import ExtendedGrid, build_grid

BUMP = TimeBump(0.5, 0.35)

nonzero_tangential = st.tuples(st.floats(-4, 4), st.floats(-4, 4), st.floats(-4, 4)).filter(
    lambda x: np.hypot(x[0], x[1]) > 1e-2)


@given(nonzero_tangential)
@settings(max_examples=200, deadline=None)
def test_frame_constraints(xi):
    mu1, mu2 = choose_frame(xi)
    assert frame_violation(xi, mu1, mu2) <= 1e-12
    assert mu2[-1] == 0 and abs(mu1[-1]) > 0


def test_frame_special_cases():
    mu1, mu2 = choose_frame([0.0, 0.0, 0.0])
    np.testing.assert_array_equal(mu1, [0, 0, 1])
    np.testing.assert_array_equal(mu2, [1, 0, 0])
    with pytest.raises(ValueError, match="degenerate"):
        choose_frame([0.0, 0.0, 2.0])
    with pytest.raises(ValueError, match="n >= 3"):
        choose_frame([1.0, 1.0])


def test_probe_guards():
    with pytest.raises(ValueError, match="h too large"):
        CGOProbe.create([10.0, 0, 0], 0.4, BUMP, 1.0)
    with pytest.raises(ValueError, match="inside"):
        CGOProbe.create([1.0, 0, 0], 0.1, TimeBump(0.9, 0.2), 1.0)
    with pytest.raises(ValueError, match="sign"):
        CGOProbe.create([1.0, 0, 0], 0.1, BUMP, 1.0, sign=2)
    p = CGOProbe.create([1.0, 0.5, 0.2], 0.1, BUMP, 1.0, sign=-1)
    q = CGOProbe.create([1.0, 0.5, 0.2], 0.1, BUMP, 1.0, sign=1)
    np.testing.assert_array_equal(p.mu2, -q.mu2)


@given(nonzero_tangential, st.sampled_from([0.4, 0.3, 0.2, 0.15, 0.1]))
@settings(max_examples=100, deadline=None)
def test_eikonal_and_exponents(xi, h):
    xi = np.asarray(xi) * 0.45
    probe = CGOProbe.create(xi, h, BUMP, 1.0)
    ph = build_phase(probe)
    assert max(abs(v) for v in ph.eikonal_residuals().values()) <= 1e-12
    x = np.random.default_rng(0).uniform(-1, 1, size=(50, 3))
    for computed, closed in ph.combinations(x).values():
        assert np.abs(computed - closed).max() <= 1e-12 * max(1.0, np.abs(closed).max())


def test_cross_frequency_grows_as_h_decreases():
    norms = []
    for h in (0.4, 0.3, 0.2, 0.15, 0.1):
        xp, xm = build_phase(CGOProbe.create([1.0, 1.0, 1.0], h, BUMP, 1.0)).cross_frequencies()
        norms.append(np.linalg.norm(xp))
        np.testing.assert_allclose(xp[:2], xm[:2])
    assert np.all(np.diff(norms) > 0)


def test_bump_support_and_peak():
    t = np.linspace(0, 1, 1001)
    m = BUMP(t)
    assert m[(t <= 0.15) | (t >= 0.85)].max() == 0
    assert m.max() == pytest.approx(np.exp(-4), rel=1e-6)


def _gaussian_case(N):
    g = build_grid(N, nt=1)
    ext = ExtendedGrid.from_box(g).grid
    x = ext.mesh()
    s = 0.06
    r2 = (x[0] - 0.5) ** 2 + (x[1] - 0.5) ** 2 + x[2] ** 2
    gauss = np.exp(-r2 / (2 * s * s))
    G = ext.zeros(3)
    G[0] = gauss[None]
    return ext, G


def test_transport_constant_field_exact():
    g = build_grid(9, nt=2)
    G = g.zeros(3)
    G[0] += 0.3
    G[2] += -0.2j
    d = np.array([0, 1, 0]) + 1j * np.array([0, 0, 1])
    tr = solve_transport(G, g, d)
    assert tr.residual <= 1e-10
    assert tr.method == "constant"


def test_transport_residuals_and_refinement():
    d = np.array([1.0, 0.0, 0.0]) + 1j * np.array([0.0, 1.0, 0.0])
    res = []
    for N in (33, 65):
        ext, G = _gaussian_case(N)
        tr = solve_transport(G, ext, d)
        assert tr.residual <= 1e-6
        res.append(tr.residual_fd)
    assert res[0] / res[1] > 3.0


def test_transport_rejects_field_on_boundary():
    g = build_grid(9, nt=1)
    G = g.zeros(3)
    G[0, :, 0, 4, 4] = 1.0
    G[0, :, 4, 4, 4] = 2.0
    with pytest.raises(ValueError, match="vanish"):
        solve_transport(G, g, np.array([1, 0, 0]) + 1j * np.array([0, 1, 0]))


def test_transport_direction_validated():
    g = build_grid(9, nt=1)
    with pytest.raises(ValueError, match="orthonormal"):
        solve_transport(g.zeros(3), g, np.array([1, 0, 0]) + 1j * np.array([1, 0, 0]))


def test_reflected_solution_vanishes_on_gamma0():
    g = build_grid(13, nt=16)
    pair = synth_pair(g, seed=3, amplitude=0.3)
    probe = CGOProbe.create([1.5, 1.0, 1.0], 0.3, BUMP, 1.0)
    u = special_solution(pair, probe, "solution")
    v = special_solution(pair, probe, "adjoint")
    assert u.gamma0_trace() <= 1e-12 and v.gamma0_trace() <= 1e-12
    assert np.abs(v.field[-1]).max() == 0
    assert np.abs(u.field[0]).max() == 0
    assert u.remainder_norm is not None and np.isfinite(u.remainder_norm)


def test_assemble_reflected_antisymmetry():
    g = build_grid(7, nt=2)
    ext = ExtendedGrid.from_box(g).grid
    f = np.random.default_rng(0).normal(size=ext.field_shape)
    field, direct, mirror = assemble_reflected(f)
    assert np.abs(field[..., 0]).max() == 0
    np.testing.assert_allclose(field, direct - mirror)


def test_probe_transport_roles():
    g = build_grid(13, nt=4)
    pair = synth_pair(g, seed=1, amplitude=0.3)
    ext = extend_pair(pair)
    probe = CGOProbe.create([1.0, 0.5, 0.5], 0.2, BUMP, 1.0)
    t2 = probe_transport(ext, probe, "solution")
    t1 = probe_transport(ext, probe, "adjoint")
    np.testing.assert_allclose(t2.direction, probe.mu2 + 1j * probe.mu1)
    np.testing.assert_allclose(t1.direction, -probe.mu2 + 1j * probe.mu1)
    assert t1.residual_field.shape == ext.grid.field_shape


def test_zero_coefficients_skip_transport():
    g = build_grid(9, nt=8)
    probe = CGOProbe.create([1.0, 0.5, 0.5], 0.3, BUMP, 1.0)
    s = special_solution(CoefficientPair.zero(g), probe, "solution")
    assert s.transport.method == "zero"
