"""
Space-time grids for the box domain, its mirror image and the extended domain.

The physical domain is the unit box (0, 1)^n whose face x_n = 0 lies on the
reflecting hyperplane.  That face (minus its edges) is the inaccessible part
Gamma_0 of the boundary; every other boundary node belongs to Gamma.  The
extended domain O = (0, 1)^(n-1) x (-1, 1) is the union of the box and its
mirror image; the two share the node layer x_n = 0.

Field arrays follow one layout throughout the package: a scalar field is an
array of shape ``(nt + 1, N_1, ..., N_n)`` and a vector field carries a
leading component axis, ``(n, nt + 1, N_1, ..., N_n)``.  Purely spatial arrays
drop the time axis.  All extension and reflection helpers act on the trailing
``n`` axes so they work for every one of these layouts.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "SpaceTimeGrid",
    "Face",
    "BoundaryPartition",
    "ExtendedGrid",
    "build_grid",
    "reflect_point",
    "extend_even",
    "extend_odd",
    "extend_coefficients",
    "restrict_to_box",
    "reflect_field",
]

ODD_TRACE_TOL = 1e-12


@dataclass(frozen=True)
class SpaceTimeGrid:
    """Uniform tensor-product grid on a box times the interval [0, T].

    Attributes:
        axes: 1D node coordinates per spatial axis (boundary nodes included).
        T: time horizon.
        nt: number of time steps; there are ``nt + 1`` time levels.
    """

    axes: tuple
    T: float
    nt: int

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError(f"time horizon must be positive, got T={self.T}")
        if self.nt < 1:
            raise ValueError(f"need at least one time step, got nt={self.nt}")
        for ax in self.axes:
            if len(ax) < 4:
                raise ValueError(
                    f"resolution too small: {len(ax)} nodes on an axis (need >= 4)")

    @property
    def n(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple:
        return tuple(len(ax) for ax in self.axes)

    @property
    def field_shape(self) -> tuple:
        return (self.nt + 1,) + self.shape

    @property
    def spacing(self) -> tuple:
        return tuple(float(ax[1] - ax[0]) for ax in self.axes)

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @cached_property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt + 1)

    @property
    def lower(self) -> tuple:
        return tuple(float(ax[0]) for ax in self.axes)

    @property
    def upper(self) -> tuple:
        return tuple(float(ax[-1]) for ax in self.axes)

    def mesh(self) -> tuple:
        """Spatial coordinate arrays, each of shape ``self.shape``."""
        return tuple(np.meshgrid(*self.axes, indexing="ij"))

    def points(self) -> np.ndarray:
        """Spatial coordinates stacked on a leading axis, shape ``(n, *shape)``."""
        return np.stack(self.mesh())

    def zeros(self, components: int | None = None) -> np.ndarray:
        shape = self.field_shape if components is None else (components,) + self.field_shape
        return np.zeros(shape, dtype=complex)

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func(t, x)`` on all space-time nodes.

        ``x`` is the tuple of coordinate arrays; ``t`` is broadcast along a
        leading axis.  The return value is complex with shape ``field_shape``.
        """
        x = tuple(c[None] for c in self.mesh())
        t = self.times.reshape((-1,) + (1,) * self.n)
        out = np.asarray(func(t, x), dtype=complex)
        return np.broadcast_to(out, self.field_shape).copy()

    @cached_property
    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        for axis in range(self.n):
            idx = [slice(None)] * self.n
            idx[axis] = 0
            mask[tuple(idx)] = True
            idx[axis] = -1
            mask[tuple(idx)] = True
        return mask

    @property
    def interior(self) -> tuple:
        return (slice(1, -1),) * self.n

    @property
    def interior_shape(self) -> tuple:
        return tuple(s - 2 for s in self.shape)

    def quadrature_weights(self) -> np.ndarray:
        """Tensor-product trapezoidal weights for the spatial box."""
        w = np.ones(())
        for ax in self.axes:
            wa = np.full(len(ax), ax[1] - ax[0])
            wa[0] *= 0.5
            wa[-1] *= 0.5
            w = np.multiply.outer(w, wa)
        return w

    def time_weights(self) -> np.ndarray:
        w = np.full(self.nt + 1, self.dt)
        w[0] *= 0.5
        w[-1] *= 0.5
        return w

    def integrate(self, field: np.ndarray) -> complex:
        """Trapezoidal space-time integral of a scalar field."""
        tw = self.time_weights().reshape((-1,) + (1,) * self.n)
        return complex(np.sum(tw * field * self.quadrature_weights()))

    def integrate_space(self, field: np.ndarray) -> np.ndarray:
        """Spatial trapezoidal integral over the trailing ``n`` axes."""
        w = self.quadrature_weights()
        return np.tensordot(field, w, axes=self.n)

    @cached_property
    def partition(self) -> "BoundaryPartition":
        return BoundaryPartition.for_grid(self)

    def refined(self, factor: int = 2, time_factor: int | None = None) -> "SpaceTimeGrid":
        """Grid with the mesh width divided by ``factor`` (nodes are nested)."""
        tf = factor if time_factor is None else time_factor
        axes = tuple(np.linspace(ax[0], ax[-1], factor * (len(ax) - 1) + 1)
                     for ax in self.axes)
        return SpaceTimeGrid(axes, self.T, self.nt * tf)

    def fingerprint(self) -> str:
        import hashlib
        h = hashlib.sha256()
        h.update(np.asarray(self.shape, dtype=np.int64).tobytes())
        for ax in self.axes:
            h.update(np.ascontiguousarray(ax, dtype=np.float64).tobytes())
        h.update(np.asarray([self.T, self.nt], dtype=np.float64).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class Face:
    """One face of the box: the nodes with ``x[axis]`` at its lower or upper end."""

    axis: int
    side: int  # -1 for the lower end, +1 for the upper end

    @property
    def name(self) -> str:
        return f"x{self.axis + 1}{'-' if self.side < 0 else '+'}"

    def index(self, n: int) -> tuple:
        idx = [slice(None)] * n
        idx[self.axis] = 0 if self.side < 0 else -1
        return tuple(idx)

    def normal(self, n: int) -> np.ndarray:
        nu = np.zeros(n)
        nu[self.axis] = self.side
        return nu


@dataclass(frozen=True)
class BoundaryPartition:
    """Split of the boundary nodes into Gamma_0 (open bottom face) and Gamma.

    Edge and corner nodes of the bottom face belong to Gamma, so Dirichlet
    data supported in Gamma can reach up to, but not onto, Gamma_0.
    """

    faces: tuple
    gamma0: np.ndarray
    gamma: np.ndarray

    @classmethod
    def for_grid(cls, grid: SpaceTimeGrid) -> "BoundaryPartition":
        n = grid.n
        faces = tuple(Face(axis, side) for axis in range(n) for side in (-1, 1))
        gamma0 = np.zeros(grid.shape, dtype=bool)
        inner = [slice(1, -1)] * n
        inner[n - 1] = 0
        gamma0[tuple(inner)] = True
        gamma = grid.boundary_mask & ~gamma0
        return cls(faces, gamma0, gamma)

    @property
    def bottom(self) -> Face:
        return next(f for f in self.faces if f.axis == len(self.faces) // 2 - 1 and f.side < 0)

    def accessible_faces(self) -> tuple:
        """Faces on which local Neumann data is read (all but the bottom face)."""
        bottom = self.bottom
        return tuple(f for f in self.faces if f != bottom)


@dataclass(frozen=True)
class ExtendedGrid:
    """The extended domain O = box union mirrored box, sharing the x_n = 0 layer."""

    box: SpaceTimeGrid
    grid: SpaceTimeGrid

    @classmethod
    def from_box(cls, box: SpaceTimeGrid) -> "ExtendedGrid":
        if abs(box.axes[-1][0]) != 0.0:
            raise ValueError("box grid must have its last axis starting at x_n = 0")
        last = box.axes[-1]
        ext = np.concatenate([-last[:0:-1], last])
        axes = box.axes[:-1] + (ext,)
        return cls(box, SpaceTimeGrid(axes, box.T, box.nt))

    @property
    def offset(self) -> int:
        """Index of the x_n = 0 layer along the last axis of O."""
        return self.box.shape[-1] - 1

    def reflect_index(self, j: int) -> int:
        return 2 * self.offset - j

    def restrict(self, field: np.ndarray) -> np.ndarray:
        return restrict_to_box(field, self.box.n)


def build_grid(nodes=24, nt: int = 64, T: float = 1.0, n: int = 3) -> SpaceTimeGrid:
    """Grid on (0, 1)^n with ``nodes`` points per axis (int or sequence)."""
    if np.isscalar(nodes):
        nodes = (int(nodes),) * n
    nodes = tuple(int(k) for k in nodes)
    if len(nodes) != n:
        raise ValueError(f"expected {n} node counts, got {len(nodes)}")
    if min(nodes) < 4:
        raise ValueError(f"resolution too small: {min(nodes)} nodes (need >= 4)")
    if T <= 0 or nt < 1:
        raise ValueError("non-positive time horizon or step count")
    axes = tuple(np.linspace(0.0, 1.0, k) for k in nodes)
    return SpaceTimeGrid(axes, float(T), int(nt))


def reflect_point(x) -> np.ndarray:
    """Mirror a point (or an array of points, last axis = coordinates) in x_n = 0."""
    y = np.array(x, dtype=float, copy=True)
    y[..., -1] = -y[..., -1]
    return y


def _check_box_shape(field, grid: SpaceTimeGrid):
    if grid is not None and tuple(field.shape[-grid.n:]) != grid.shape:
        raise ValueError(
            f"field shape {field.shape} does not match grid shape {grid.shape}")


def extend_even(field: np.ndarray, grid: SpaceTimeGrid | None = None) -> np.ndarray:
    """Even extension across x_n = 0 (last array axis)."""
    field = np.asarray(field)
    _check_box_shape(field, grid)
    mirror = np.flip(field, axis=-1)[..., :-1]
    return np.concatenate([mirror, field], axis=-1)


def extend_odd(field: np.ndarray, grid: SpaceTimeGrid | None = None,
               tol: float = ODD_TRACE_TOL) -> np.ndarray:
    """Odd extension across x_n = 0; the field must vanish on that layer."""
    field = np.asarray(field)
    _check_box_shape(field, grid)
    trace = np.abs(field[..., 0])
    worst = float(trace.max()) if trace.size else 0.0
    if worst > tol:
        raise ValueError(
            f"odd extension requires vanishing trace on x_n = 0 (max |f| = {worst:.3e})")
    body = field.copy()
    body[..., 0] = 0.0
    mirror = -np.flip(body, axis=-1)[..., :-1]
    return np.concatenate([mirror, body], axis=-1)


def extend_coefficients(A: np.ndarray, q: np.ndarray, grid: SpaceTimeGrid | None = None):
    """Extend (A, q) to O: tangential components and q evenly, A_n oddly."""
    A = np.asarray(A)
    comps = [extend_even(A[j], grid) for j in range(A.shape[0] - 1)]
    comps.append(extend_odd(A[-1], grid))
    return np.stack(comps), extend_even(q, grid)


def restrict_to_box(field: np.ndarray, n: int | None = None) -> np.ndarray:
    """Restriction of a field on O to the box (upper half along the last axis)."""
    m = field.shape[-1]
    return field[..., (m - 1) // 2:]


def reflect_field(field: np.ndarray) -> np.ndarray:
    """f*(x) = f(x*) for a field sampled on the (symmetric) extended grid."""
    return np.flip(field, axis=-1)
