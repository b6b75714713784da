"""Uniform grids, complex fields on them, background potentials and link phases.

Natural grids put sites on cell corners including the boundary
(``spacing = side/(n-1)``).  Periodic grids are cell-centred: ``n`` sites per
axis at ``-side/2 + (i + 1/2)*spacing`` with ``spacing = side/n``, so that the
plaquette centres include the corners of the fundamental cell.

Axis ``d`` of every value array corresponds to the coordinate ``x_{d+1}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# Background field beta = curl F.
BETA = (0.0, 0.0, 1.0)


def potential_A0(p):
    """Symmetric-gauge potential ``(-x2/2, x1/2)`` with unit curl in the plane."""
    p = np.asarray(p, dtype=float)
    return np.stack([-0.5 * p[1], 0.5 * p[0]])


def potential_F(p):
    """Three-dimensional potential ``(-x2/2, x1/2, 0)``; ``curl F = (0, 0, 1)``."""
    p = np.asarray(p, dtype=float)
    return np.stack([-0.5 * p[1], 0.5 * p[0], np.zeros_like(p[0])])


def fixed_sum(values) -> float:
    """Deterministic reduction.

    numpy reduces a contiguous 1-D array with a fixed pairwise tree, so the
    result does not depend on how many workers produced ``values``.
    """
    return float(np.sum(np.ascontiguousarray(values).ravel()))


@dataclass(frozen=True)
class UniformGrid:
    dim: int
    n: int
    side: float
    origin: tuple
    periodic: bool = False

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {self.dim}")
        if self.n < 2:
            raise ValueError(f"need n >= 2 sites per axis, got {self.n}")
        if not self.side > 0:
            raise ValueError(f"side must be positive, got {self.side}")
        if len(self.origin) != self.dim:
            raise ValueError("origin length does not match dim")
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def spacing(self) -> float:
        return self.side / self.n if self.periodic else self.side / (self.n - 1)

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def size(self) -> int:
        return self.n ** self.dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    def axis_coords(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.spacing * np.arange(self.n)

    def coords(self) -> list:
        """Site coordinates as ``dim`` broadcast-ready arrays."""
        return np.meshgrid(*[self.axis_coords(d) for d in range(self.dim)],
                           indexing="ij", sparse=True)

    def edge_shape(self, axis: int) -> tuple:
        shape = list(self.shape)
        if not self.periodic:
            shape[axis] -= 1
        return tuple(shape)

    def _trapezoid(self) -> np.ndarray:
        w = np.ones(self.n)
        if not self.periodic:
            w[0] = w[-1] = 0.5
        return w

    def site_weights(self) -> np.ndarray:
        """Quadrature weights (trapezoidal or uniform), in units of cell volume."""
        w1 = self._trapezoid()
        w = w1
        for _ in range(self.dim - 1):
            w = np.multiply.outer(w, w1)
        return w

    def edge_weights(self, axis: int) -> np.ndarray:
        """Weights of the edges along ``axis``: trapezoidal across, midpoint along."""
        w1 = self._trapezoid()
        along = np.ones(self.edge_shape(axis)[axis])
        factors = [along if d == axis else w1 for d in range(self.dim)]
        w = factors[0]
        for f in factors[1:]:
            w = np.multiply.outer(w, f)
        return w

    def edge_midpoints(self, axis: int) -> list:
        mids = []
        for d in range(self.dim):
            c = self.axis_coords(d)
            if d == axis:
                c = c[: self.edge_shape(axis)[axis]] + 0.5 * self.spacing
            mids.append(c)
        return np.meshgrid(*mids, indexing="ij", sparse=True)

    def contains(self, point) -> bool:
        lo = np.asarray(self.origin)
        extent = self.spacing * (self.n - 1)
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= lo - 1e-12 * self.side) and np.all(p <= lo + extent + 1e-12 * self.side))

    def nearest_index(self, point) -> tuple:
        p = np.asarray(point, dtype=float)
        idx = np.rint((p - np.asarray(self.origin)) / self.spacing).astype(int)
        return tuple(int(i) for i in np.clip(idx, 0, self.n - 1))


def square_grid(n: int, side: float = 1.0, periodic: bool = False, center=(0.0, 0.0)) -> UniformGrid:
    return _centered_grid(2, n, side, periodic, center)


def cube_grid(n: int, side: float = 1.0, periodic: bool = False, center=(0.0, 0.0, 0.0)) -> UniformGrid:
    return _centered_grid(3, n, side, periodic, center)


def _centered_grid(dim, n, side, periodic, center):
    spacing = side / n if periodic else side / (n - 1)
    shift = 0.5 * spacing if periodic else 0.0
    origin = tuple(float(c) - 0.5 * side + shift for c in center)
    return UniformGrid(dim=dim, n=n, side=float(side), origin=origin, periodic=periodic)


@dataclass(frozen=True)
class Natural:
    """Free (Neumann) boundary: the field is an arbitrary H^1 function."""

    def token(self) -> str:
        return "natural"


@dataclass(frozen=True)
class MagneticPeriodic:
    """Stored values are one period cell of a magnetic-periodic field.

    ``h_ex`` is the total flux through the transverse face of the cell.  The
    extension obeys ``u(x + L e1) = exp(i h_ex x2 / (2L)) u(x)`` and
    ``u(x + L e2) = exp(-i h_ex x1 / (2L)) u(x)``; for the unit square these are
    the defining relations of the space ``E_{h_ex}``.
    """

    h_ex: float

    def token(self) -> str:
        return f"periodic {self.h_ex!r}"


@dataclass(frozen=True)
class ComplexField:
    grid: UniformGrid
    values: np.ndarray
    bc: object = field(default_factory=Natural)

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=complex)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if isinstance(self.bc, MagneticPeriodic) != self.grid.periodic:
            raise ValueError("MagneticPeriodic boundary condition requires a periodic grid and vice versa")

    def with_values(self, values) -> "ComplexField":
        return ComplexField(self.grid, values, self.bc)

    @property
    def modulus(self) -> np.ndarray:
        return np.abs(self.values)


def wrap_phases(grid: UniformGrid, bc, axis: int):
    """Raw phase of the magnetic-translation factor on wrap edges along ``axis``.

    Returns an array of the edge shape that is zero except on the last slice,
    or ``None`` when there are no wrap edges.
    """
    if not isinstance(bc, MagneticPeriodic) or axis > 1:
        return None
    L = grid.side
    out = np.zeros(grid.edge_shape(axis))
    last = [slice(None)] * grid.dim
    last[axis] = -1
    other = 1 - axis
    x_other = grid.axis_coords(other)
    sign = 1.0 if axis == 0 else -1.0
    phase = sign * bc.h_ex * x_other / (2.0 * L)
    shape = [1] * (grid.dim - 1)
    # after removing `axis`, the `other` coordinate sits at position 0
    shape[0] = grid.n
    out[tuple(last)] = np.broadcast_to(phase.reshape(shape), out[tuple(last)].shape)
    return out


@dataclass(frozen=True)
class LinkPhases:
    """Per-edge phases ``theta[d]``; one array per axis, edge-shaped."""

    grid: UniformGrid
    theta: tuple
    coupling: float = 1.0

    def __post_init__(self):
        th = tuple(np.ascontiguousarray(t, dtype=float) for t in self.theta)
        if len(th) != self.grid.dim:
            raise ValueError("need one phase array per axis")
        for d, t in enumerate(th):
            if t.shape != self.grid.edge_shape(d):
                raise ValueError(f"axis {d}: phase shape {t.shape} != {self.grid.edge_shape(d)}")
            if not np.all(np.isfinite(t)):
                raise ValueError("link phases must be finite")
            t.setflags(write=False)
        object.__setattr__(self, "theta", th)

    def shifted(self, dchi: Sequence) -> "LinkPhases":
        return LinkPhases(self.grid, tuple(t + d for t, d in zip(self.theta, dchi)), self.coupling)


def link_phases(grid: UniformGrid, potential: Callable, coupling: float) -> LinkPhases:
    """Midpoint-rule line integrals ``coupling * spacing * A(mid) . e_d``.

    Exact for potentials that are affine along each edge.
    """
    s = grid.spacing
    theta = []
    for d in range(grid.dim):
        mids = grid.edge_midpoints(d)
        a = potential(np.array(np.broadcast_arrays(*mids)))[d]
        theta.append(coupling * s * np.broadcast_to(a, grid.edge_shape(d)))
    return LinkPhases(grid, tuple(theta), float(coupling))


def background_links(grid: UniformGrid, coupling: float) -> LinkPhases:
    """Links of ``coupling * A0`` (2D) or ``coupling * F`` (3D)."""
    return link_phases(grid, potential_A0 if grid.dim == 2 else potential_F, coupling)


def zero_links(grid: UniformGrid, coupling: float = 1.0) -> LinkPhases:
    return LinkPhases(grid, tuple(np.zeros(grid.edge_shape(d)) for d in range(grid.dim)), coupling)


def plaquette_flux(links: LinkPhases, axes=(0, 1)) -> np.ndarray:
    """Oriented sum of link phases around each plaquette in the ``axes`` plane."""
    a, b = axes
    ta, tb = links.theta[a], links.theta[b]
    if links.grid.periodic:
        return ta + np.roll(tb, -1, axis=a) - np.roll(ta, -1, axis=b) - tb
    ta_lo = _take(ta, b, slice(None, -1))
    ta_hi = _take(ta, b, slice(1, None))
    tb_lo = _take(tb, a, slice(None, -1))
    tb_hi = _take(tb, a, slice(1, None))
    return ta_lo + tb_hi - ta_hi - tb_lo


def _take(arr, axis, sl):
    idx = [slice(None)] * arr.ndim
    idx[axis] = sl
    return arr[tuple(idx)]


def uniform_field(grid: UniformGrid, value: complex = 1.0, bc=None) -> ComplexField:
    bc = bc if bc is not None else Natural()
    return ComplexField(grid, np.full(grid.shape, value, dtype=complex), bc)


# -- field dumps --------------------------------------------------------------

def format_real(x: float) -> str:
    return f"{float(x):.17g}"


def write_field(path, u: ComplexField, comment: str | None = None) -> None:
    """Text dump; ``comment`` becomes a leading ``# ...`` line that readers skip."""
    g = u.grid
    header = [str(g.dim), str(g.n), format_real(g.side)] + [format_real(o) for o in g.origin]
    if isinstance(u.bc, MagneticPeriodic):
        header += ["periodic", format_real(u.bc.h_ex)]
    else:
        header.append("natural")
    flat = u.values.ravel()
    lines = [f"# {comment}"] if comment else []
    lines += ["GLFIELD 1", " ".join(header)]
    lines += [f"{z.real:.17g} {z.imag:.17g}" for z in flat]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_field(path) -> ComplexField:
    with open(path, encoding="utf-8") as fh:
        line = fh.readline()
        while line.startswith("#"):
            line = fh.readline()
        magic = line.split()
        if magic != ["GLFIELD", "1"]:
            raise ValueError(f"{path}: not a GLFIELD 1 dump")
        head = fh.readline().split()
        dim, n, side = int(head[0]), int(head[1]), float(head[2])
        origin = tuple(float(v) for v in head[3:3 + dim])
        rest = head[3 + dim:]
        if rest[0] == "periodic":
            bc = MagneticPeriodic(float(rest[1]))
        else:
            bc = Natural()
        data = np.loadtxt(fh, ndmin=2)
    grid = UniformGrid(dim, n, side, origin, periodic=isinstance(bc, MagneticPeriodic))
    values = (data[:, 0] + 1j * data[:, 1]).reshape(grid.shape)
    return ComplexField(grid, values, bc)
