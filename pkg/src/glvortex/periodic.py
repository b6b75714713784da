"""Magnetic-periodic fields: flux quantisation and magnetic translations."""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .grids import ComplexField, MagneticPeriodic, UniformGrid, square_grid

TWO_PI = 2.0 * math.pi


class UnquantizedFluxError(ValueError):
    """Raised when a magnetic-periodic construction needs ``h_ex`` in 2*pi*Z."""


@dataclass(frozen=True)
class PeriodicCellSpec:
    h_ex: float
    n: int

    @property
    def flux_quanta(self) -> int:
        return int(round(self.h_ex / TWO_PI))

    @property
    def quantized_h_ex(self) -> float:
        return TWO_PI * self.flux_quanta

    @property
    def defect(self) -> float:
        return consistency_defect(self.h_ex)

    def grid(self) -> UniformGrid:
        return square_grid(self.n, periodic=True)

    def bc(self) -> MagneticPeriodic:
        return MagneticPeriodic(self.quantized_h_ex)


def quantize_flux(h_ex: float) -> float:
    """Nearest value of the form ``2 pi k`` with ``k >= 0``."""
    if h_ex < 0:
        raise ValueError(f"h_ex must be nonnegative, got {h_ex}")
    return TWO_PI * round(h_ex / TWO_PI)


def consistency_defect(h_ex: float) -> float:
    """``|exp(i h_ex) - 1|``: the commutator phase of the two unit translations."""
    if h_ex < 0:
        raise ValueError(f"h_ex must be nonnegative, got {h_ex}")
    return abs(cmath.exp(1j * h_ex) - 1.0)


def _require_quantized(bc: MagneticPeriodic, tol: float = 1e-9):
    if consistency_defect(bc.h_ex) > tol * max(1.0, bc.h_ex):
        raise UnquantizedFluxError(
            f"flux {bc.h_ex} is not a multiple of 2*pi; no nonzero magnetic-periodic field exists")


def extended_values(u: ComplexField, index) -> np.ndarray:
    """Values of the magnetic-periodic extension at arbitrary site indices.

    ``index`` is a tuple of integer arrays (one per axis, broadcastable).  The
    image of stored site ``x`` under ``p`` periods along x1 and ``q`` along x2
    is ``exp(i F (p (x2 + q L) - q x1) / (2L)) u(x)``, with ``F`` the cell flux.
    """
    if not isinstance(u.bc, MagneticPeriodic):
        raise ValueError("extension needs a MagneticPeriodic field")
    grid = u.grid
    n, L, flux = grid.n, grid.side, u.bc.h_ex
    idx = [np.asarray(i) for i in index]
    p, i0 = np.divmod(idx[0], n)
    q, j0 = np.divmod(idx[1], n)
    rest = [np.mod(i, n) for i in idx[2:]]
    x1 = grid.origin[0] + grid.spacing * i0
    x2 = grid.origin[1] + grid.spacing * j0
    phase = flux * (p * (x2 + q * L) - q * x1) / (2.0 * L)
    return np.exp(1j * phase) * u.values[(i0, j0, *rest)]


def covariant_wrap(u: ComplexField, offset) -> ComplexField:
    """Magnetic translation by ``offset`` grid steps (in x1, x2).

    Returns ``w(x) = exp(-i c A(a) . x) u(x + a)`` with ``a = offset * spacing``
    and ``c`` the coupling of the cell (flux / L^2).  The result stays in the
    same magnetic-periodic space only when the flux through the parallelogram
    spanned by ``a`` and a period is a multiple of 2 pi, i.e. when
    ``flux_quanta * k / n`` is an integer for both components; other offsets
    are rejected.  Full periods (``k = n``) act as the identity.
    """
    if not isinstance(u.bc, MagneticPeriodic):
        raise ValueError("covariant_wrap needs a MagneticPeriodic field")
    _require_quantized(u.bc)
    grid = u.grid
    k1, k2 = (int(o) for o in offset)
    q = int(round(u.bc.h_ex / TWO_PI))
    if (q * k1) % grid.n or (q * k2) % grid.n:
        raise ValueError(
            f"offset {offset} does not commute with the period translations "
            f"({q} flux quanta on {grid.n} sites); allowed steps are multiples of "
            f"{grid.n // math.gcd(q, grid.n)}")
    s = grid.spacing
    c = u.bc.h_ex / grid.side ** 2
    a1, a2 = k1 * s, k2 * s
    idx = np.indices(grid.shape)
    shifted = [idx[0] + k1, idx[1] + k2] + [idx[d] for d in range(2, grid.dim)]
    vals = extended_values(u, tuple(shifted))
    x = grid.coords()
    # A(a) . x with A the symmetric-gauge potential
    chi = -c * (-0.5 * a2 * x[0] + 0.5 * a1 * x[1])
    return u.with_values(np.exp(1j * chi) * vals)
