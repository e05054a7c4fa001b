import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from localdn.fields import (CoefficientPair, GaugeFunction, effective_difference, fourier_oracle,
                            gauge_transform, grad, laplacian, make_gauge, rotational_field,
                            synth_pair)
from localdn.grid import (ExtendedGrid, build_grid, extend_coefficients, extend_even, extend_odd,
                          reflect_field, reflect_point, restrict_to_box)


@pytest.fixture(scope="module")
def grid():
    return build_grid(9, nt=8)


def test_grid_shapes(grid):
    assert grid.shape == (9, 9, 9)
    assert grid.field_shape == (9, 9, 9, 9)
    assert grid.spacing == pytest.approx((0.125,) * 3)
    assert grid.integrate(np.ones(grid.field_shape)) == pytest.approx(1.0)


def test_grid_guards():
    with pytest.raises(ValueError, match="resolution"):
        build_grid(3)
    with pytest.raises(ValueError):
        build_grid(8, nt=0)


def test_partition(grid):
    part = grid.partition
    assert not (part.gamma0 & part.gamma).any()
    assert ((part.gamma0 | part.gamma) == grid.boundary_mask).all()
    assert part.bottom.name == "x3-"
    assert len(part.accessible_faces()) == 5
    # edges of the bottom face belong to Gamma
    assert part.gamma[0, 0, 0] and not part.gamma0[0, 0, 0]


def test_extension_roundtrip(grid):
    rng = np.random.default_rng(0)
    f = rng.normal(size=grid.field_shape)
    e = extend_even(f, grid)
    assert e.shape[-1] == 2 * grid.shape[-1] - 1
    np.testing.assert_array_equal(restrict_to_box(e), f)
    np.testing.assert_array_equal(reflect_field(e), e)
    f[..., 0] = 0
    o = extend_odd(f, grid)
    np.testing.assert_array_equal(reflect_field(o), -o)
    f[..., 0] = 1.0
    with pytest.raises(ValueError, match="vanishing trace"):
        extend_odd(f, grid)


def test_extended_grid(grid):
    ext = ExtendedGrid.from_box(grid)
    assert ext.grid.axes[-1][0] == -1.0 and ext.grid.axes[-1][-1] == 1.0
    assert ext.offset == grid.shape[-1] - 1
    assert ext.reflect_index(ext.offset) == ext.offset
    np.testing.assert_allclose(reflect_point([0.1, 0.2, 0.3]), [0.1, 0.2, -0.3])


@given(st.integers(0, 10_000))
@settings(max_examples=10, deadline=None)
def test_reflection_is_involution(seed):
    g = build_grid(5, nt=2)
    f = np.random.default_rng(seed).normal(size=g.field_shape)
    e = extend_even(f, g)
    np.testing.assert_array_equal(reflect_field(reflect_field(e)), e)


def test_synth_pair_reproducible_and_supported(grid):
    a = synth_pair(grid, seed=5)
    b = synth_pair(grid, seed=5)
    assert a.fingerprint() == b.fingerprint()
    assert synth_pair(grid, seed=6).fingerprint() != a.fingerprint()
    assert np.abs(a.A[:, :, grid.boundary_mask]).max() == 0
    assert np.abs(a.q[:, grid.boundary_mask]).max() == 0
    with pytest.raises(ValueError):
        synth_pair(grid, margin=0.6)


def test_gauge_boundary_conditions(grid):
    G = make_gauge(grid, seed=1)
    t, nrm = G.boundary_traces()
    assert t <= 1e-12 and nrm <= 1e-10
    with pytest.raises(ValueError, match="vanish"):
        GaugeFunction.from_samples(grid, np.ones(grid.field_shape))


def _gauge_fd_errors(N):
    g = build_grid(N, nt=16)
    G = make_gauge(g, seed=2, amplitude=0.1)
    inner = (slice(None), slice(None)) + g.interior
    e_grad = np.abs(grad(G.psi, g) - G.grad_psi)[inner].max()
    p2 = gauge_transform(CoefficientPair.zero(g), G)
    # q#_2 - q#_1 = dPsi/dt - lap Psi - |grad Psi|^2 for a zero background
    expect = G.dt_psi - laplacian(G.psi, g) - np.sum(G.grad_psi ** 2, axis=0)
    e_q = np.abs(effective_difference(CoefficientPair.zero(g), p2) - expect)[inner[1:]].max()
    return e_grad, e_q


def test_gauge_derivatives_converge_second_order():
    coarse, fine = _gauge_fd_errors(17), _gauge_fd_errors(33)
    assert coarse[0] / fine[0] > 3.0
    assert coarse[1] / fine[1] > 3.0


def test_gauge_transform_shifts_coefficients(grid):
    p = synth_pair(grid, seed=1)
    G = make_gauge(grid, seed=0, amplitude=0.1)
    p2 = gauge_transform(p, G)
    np.testing.assert_allclose(p2.A - p.A, G.grad_psi, atol=1e-14)
    np.testing.assert_allclose(p2.q - p.q, G.dt_psi, atol=1e-14)


def test_fourier_oracle_gaussian():
    g = build_grid(41, nt=1)
    x = g.mesh()
    s = 0.08
    f = np.exp(-sum((xi - 0.5) ** 2 for xi in x) / (2 * s * s))
    xis = np.array([[0.0, 0.0, 0.0], [3.0, -2.0, 1.0]])
    got = fourier_oracle(f, g, xis)
    exact = (2 * np.pi * s * s) ** 1.5 * np.exp(-0.5 * s * s * np.sum(xis ** 2, axis=1)) \
        * np.exp(1j * xis @ np.full(3, 0.5))
    np.testing.assert_allclose(got, exact, rtol=1e-6)


def test_rotational_field_has_curl(grid):
    A = rotational_field(grid, amplitude=1.0)
    c = np.gradient(A[1, 0], grid.spacing[0], axis=0) - np.gradient(A[0, 0], grid.spacing[1], axis=1)
    assert np.abs(c).max() > 1.0


def test_coefficient_pair_validation(grid):
    with pytest.raises(ValueError, match="shape"):
        CoefficientPair(grid, np.zeros((2,) + grid.field_shape), grid.zeros())
    bad = grid.zeros()
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(ValueError, match="finite"):
        CoefficientPair(grid, grid.zeros(3), bad)


def test_extend_coefficients_parity(grid):
    p = synth_pair(grid, seed=3)
    A, q = extend_coefficients(p.A, p.q, grid)
    np.testing.assert_array_equal(reflect_field(A[0]), A[0])
    np.testing.assert_array_equal(reflect_field(A[2]), -A[2])
    np.testing.assert_array_equal(reflect_field(q), q)
