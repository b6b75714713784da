"""Explicit square vortex-lattice test configuration on the unit square.

The unit square is split into ``N^2`` cells of side ``1/N``, each carrying one
vortex.  In each cell the phase gradient is ``-grad^perp h + c0 A0`` where
``h`` solves the Neumann problem ``-Lap h + c0 = 2 pi delta_{a0}`` with zero
mean, and the modulus is the linear core profile ``min(1, |x - a0|/eps)``.

Discretisation: the order parameter lives on the cell-centred periodic grid
of the unit square; ``h`` lives on the dual lattice (plaquette centres),
where it is solved with a vertex-centred 5-point stencil and mirror ghosts.
The phase difference across a primal edge is then the difference of ``h``
between the two plaquettes adjacent to that edge, so the circulation around
a plaquette is exactly ``-s^2 Lap h``: ``2 pi`` at the vortex and
``-c0 s^2`` elsewhere.

The Neumann problem only has a solution when ``c0 = 2 pi N^2``; the applied
``h_ex`` generally differs, and the mismatch ``h_ex - c0`` is carried on every
edge as an extra ``A0`` phase when the energy is evaluated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from .energy import EnergyBreakdown, GL2DParams, energy_2d
from .grids import (ComplexField, LinkPhases, MagneticPeriodic, background_links, fixed_sum,
                    link_phases, potential_A0, square_grid)
from .periodic import TWO_PI


class CellSolveError(RuntimeError):
    pass


def choose_N(h_ex: float) -> int:
    """Largest positive integer with ``N <= sqrt(h_ex / 2 pi) < N + 1``."""
    if not h_ex >= TWO_PI * (1.0 - 1e-12):
        raise ValueError(f"h_ex = {h_ex} < 2 pi: no positive N exists")
    r = math.sqrt(h_ex / TWO_PI)
    N = int(math.floor(r + 1e-12))
    return max(N, 1)


@dataclass(frozen=True)
class VortexLatticeConfig:
    """Square lattice of ``N^2`` vortices in the unit square.

    ``n`` is the number of order-parameter sites per axis on the unit square;
    each cell then spans ``cell_grid_n = n / N`` sites, which must be even so
    that the vortex centres fall on plaquette centres.
    """

    h_ex: float
    eps: float
    n: int
    N: int = 0

    def __post_init__(self):
        if not (self.h_ex > 0 and self.eps > 0):
            raise ValueError("h_ex and eps must be positive")
        if self.N == 0:
            object.__setattr__(self, "N", choose_N(self.h_ex))
        if self.n % (2 * self.N):
            raise ValueError(f"n = {self.n} must be divisible by 2N = {2 * self.N}")
        if not self.eps < 0.5 * self.cell_side:
            raise ValueError(f"eps = {self.eps} must be below half the cell side {0.5 * self.cell_side}")

    @property
    def cell_side(self) -> float:
        return 1.0 / self.N

    @property
    def cell_grid_n(self) -> int:
        return self.n // self.N

    @property
    def compatible_field(self) -> float:
        return TWO_PI * self.N ** 2

    @property
    def centers(self) -> np.ndarray:
        """Vortex centres ``a_j``, lexicographic, as an (N^2, 2) array.

        Centres sit at ``(k + 1/2)/N`` modulo 1: the gauge origin is then a
        cell corner, which puts the lattice in the untwisted magnetic-periodic
        space for every ``N``.
        """
        c1 = np.mod((np.arange(self.N) + 0.5) / self.N + 0.5, 1.0) - 0.5
        c1 = np.sort(c1)
        return np.array([(a, b) for a in c1 for b in c1])

    @property
    def a0(self) -> np.ndarray:
        return self.centers[0]

    def grid(self):
        return square_grid(self.n, periodic=True)


@dataclass(frozen=True)
class CellSolution:
    """Zero-mean Neumann solution on the dual nodes of one cell.

    ``h`` has ``cell_grid_n + 1`` nodes per axis, node ``(m/2, m/2)`` being the
    vortex centre.
    """

    h: np.ndarray
    spacing: float
    compat_field: float
    source_total: float
    residual: float
    source_flux: float = TWO_PI

    @property
    def m(self) -> int:
        return self.h.shape[0] - 1

    def trapezoid_mean(self) -> float:
        w = np.ones(self.m + 1)
        w[0] = w[-1] = 0.5
        W = np.multiply.outer(w, w)
        return fixed_sum(W * self.h) / fixed_sum(W)

    def dirichlet_outside(self, radius: float) -> float:
        """Discrete ``int_{K0 minus B(a0, radius)} |grad h|^2`` on the dual edges."""
        h, s, m = self.h, self.spacing, self.m
        total = 0.0
        c = 0.5 * m * s
        coords = np.arange(m + 1) * s - c
        wt = np.ones(m + 1)
        wt[0] = wt[-1] = 0.5
        # edges along axis 0: midpoints at (coords[:-1] + s/2, coords)
        d0 = (h[1:, :] - h[:-1, :]) ** 2
        x = coords[:-1, None] + 0.5 * s
        y = coords[None, :]
        keep = (x ** 2 + y ** 2) >= radius ** 2
        total += fixed_sum(np.where(keep, d0 * wt[None, :], 0.0))
        d1 = (h[:, 1:] - h[:, :-1]) ** 2
        x = coords[:, None]
        y = coords[None, :-1] + 0.5 * s
        keep = (x ** 2 + y ** 2) >= radius ** 2
        total += fixed_sum(np.where(keep, d1 * wt[:, None], 0.0))
        return total


def _neumann_eigenvalues(m: int) -> np.ndarray:
    lam = 2.0 - 2.0 * np.cos(np.pi * np.arange(m + 1) / m)
    return lam[:, None] + lam[None, :]


def _apply_neumann(h: np.ndarray) -> np.ndarray:
    """``4 h - sum of neighbours`` with mirror ghosts (``s^2 * -Lap``)."""
    p = np.pad(h, 1, mode="reflect")
    return 4.0 * h - p[2:, 1:-1] - p[:-2, 1:-1] - p[1:-1, 2:] - p[1:-1, :-2]


def solve_cell_potential(config: VortexLatticeConfig, cell_grid_n: int | None = None) -> CellSolution:
    m = config.cell_grid_n if cell_grid_n is None else int(cell_grid_n)
    if m < 16 or m % 2:
        raise ValueError(f"cell_grid_n must be even and >= 16, got {m}")
    s = config.cell_side / m
    c0 = config.compatible_field
    # s^2 * source at each dual node; the delta carries 2 pi on the centre node
    rhs = np.full((m + 1, m + 1), -c0 * s * s)
    rhs[m // 2, m // 2] += TWO_PI
    w = np.ones(m + 1)
    w[0] = w[-1] = 0.5
    source_total = fixed_sum(np.multiply.outer(w, w) * rhs)
    if abs(source_total) > 1e-12 * TWO_PI:
        raise CellSolveError(f"discrete source does not integrate to zero: {source_total}")
    coef = dctn(rhs, type=1)
    lam = _neumann_eigenvalues(m)
    lam[0, 0] = 1.0
    coef = coef / lam
    coef[0, 0] = 0.0
    h = idctn(coef, type=1)
    resid = float(np.max(np.abs(_apply_neumann(h) - rhs)))
    if resid > 1e-10 * float(np.max(np.abs(rhs))):
        raise CellSolveError(f"Neumann solve residual {resid} too large")
    return CellSolution(h=h, spacing=s, compat_field=c0, source_total=source_total, residual=resid)


def _dual_potential(sol: CellSolution, config: VortexLatticeConfig) -> np.ndarray:
    """Periodic extension of ``h`` to all ``n x n`` dual nodes of the unit square.

    Dual node ``i`` sits at ``-1/2 + i/n``.
    """
    n, m = config.n, sol.m
    if n != config.N * m:
        raise ValueError("cell solution does not match the lattice grid")
    i0 = int(round((config.a0[0] + 0.5) * n))
    j0 = int(round((config.a0[1] + 0.5) * n))
    cell = sol.h[:m, :m]
    ii = np.mod(np.arange(n) - i0 + m // 2, m)
    jj = np.mod(np.arange(n) - j0 + m // 2, m)
    return cell[np.ix_(ii, jj)]


def phase_differences(sol: CellSolution, config: VortexLatticeConfig) -> tuple:
    """Edge integrals of ``-grad^perp h`` on the primal periodic grid."""
    H = _dual_potential(sol, config)
    Hs = np.roll(H, -1, axis=0)  # H[i+1, j]
    omega0 = np.roll(Hs, -1, axis=1) - Hs  # H[i+1, j+1] - H[i+1, j]
    omega1 = np.roll(H, -1, axis=1) - np.roll(Hs, -1, axis=1)  # H[i, j+1] - H[i+1, j+1]
    return omega0, omega1


def phase_link_field(sol: CellSolution, config: VortexLatticeConfig) -> LinkPhases:
    """Edge integrals of ``-grad^perp h + c0 A0`` (the phase gradient)."""
    grid = config.grid()
    unit = link_phases(grid, potential_A0, 1.0)
    omega = phase_differences(sol, config)
    theta = tuple(w + sol.compat_field * t for w, t in zip(omega, unit.theta))
    return LinkPhases(grid, theta, sol.compat_field)


def profile_rho(grid, center, eps: float, period: float | None = None) -> np.ndarray:
    """``min(1, |x - center| / eps)``, optionally with cell-periodic distance."""
    x = grid.coords()
    d2 = 0.0
    for k in range(2):
        dx = x[k] - center[k]
        if period is not None:
            dx = np.mod(dx + 0.5 * period, period) - 0.5 * period
        d2 = d2 + dx * dx
    return np.minimum(1.0, np.sqrt(d2) / eps)


@dataclass(frozen=True)
class LatticeConfiguration:
    """The assembled test field in (modulus, covariant edge phase) form."""

    config: VortexLatticeConfig
    solution: CellSolution
    rho: np.ndarray
    covariant_phase: tuple
    energy: EnergyBreakdown
    cell_energy: EnergyBreakdown

    @property
    def total(self) -> float:
        return self.energy.total


def _edge_energy(rho, phases, grid):
    kin = 0.0
    for d in range(2):
        head = np.roll(rho, -1, axis=d)
        a = head * np.exp(1j * phases[d]) - rho
        kin = kin + (a.real ** 2 + a.imag ** 2)
    return kin


def assemble_and_energy(config: VortexLatticeConfig, cell_grid_n: int | None = None) -> LatticeConfiguration:
    sol = solve_cell_potential(config, cell_grid_n)
    grid = config.grid()
    rho = profile_rho(grid, config.a0, config.eps, period=config.cell_side)
    unit = link_phases(grid, potential_A0, 1.0)
    omega = phase_differences(sol, config)
    mismatch = sol.compat_field - config.h_ex
    phases = tuple(w + mismatch * t for w, t in zip(omega, unit.theta))
    s2 = grid.spacing ** 2
    pot_density = (0.5 / config.eps ** 2) * (1.0 - rho ** 2) ** 2 * s2
    kin_density = _edge_energy(rho, phases, grid)
    energy = EnergyBreakdown.from_parts(fixed_sum(kin_density), fixed_sum(pot_density))
    # one cell: sites whose coordinates fall in the cell around a0, edges leaving them
    x = grid.coords()
    half = 0.5 * config.cell_side
    inside = np.ones(grid.shape, dtype=bool)
    for k in range(2):
        d = np.mod(x[k] - config.a0[k] + 0.5, 1.0) - 0.5
        inside = inside & (np.abs(d) < half)
    cell_kin = fixed_sum(np.where(inside, kin_density, 0.0))
    cell_pot = fixed_sum(np.where(inside, pot_density, 0.0))
    N2 = config.N ** 2
    cell_energy = EnergyBreakdown.from_parts(N2 * cell_kin, N2 * cell_pot)
    return LatticeConfiguration(config, sol, rho, phases, energy, cell_energy)


def lattice_field(config: VortexLatticeConfig, cell_grid_n: int | None = None) -> ComplexField:
    """Site values ``rho exp(i phi)`` of the lattice, for use as an initial guess.

    The phase is accumulated along a spanning tree (row 0, then columns), which
    is consistent modulo 2 pi because the phase 1-form is closed away from the
    vortex plaquettes, where it circulates by exactly 2 pi.  The result lies in
    the magnetic-periodic space of flux ``2 pi N^2``.
    """
    sol = solve_cell_potential(config, cell_grid_n)
    grid = config.grid()
    links = phase_link_field(sol, config)
    t0, t1 = links.theta
    phi = np.zeros(grid.shape)
    phi[1:, 0] = np.cumsum(t0[:-1, 0])
    phi[:, 1:] = phi[:, :1] + np.cumsum(t1[:, :-1], axis=1)
    rho = profile_rho(grid, config.a0, config.eps, period=config.cell_side)
    return ComplexField(grid, rho * np.exp(1j * phi), MagneticPeriodic(sol.compat_field))


def lattice_upper_bound(config: VortexLatticeConfig, C: float = 12.0) -> float:
    """``N^2 (2 pi ln(1/(eps sqrt(h_ex))) + C)``."""
    return config.N ** 2 * (TWO_PI * math.log(1.0 / (config.eps * math.sqrt(config.h_ex))) + C)


def check_energy_of_field(u: ComplexField, config: VortexLatticeConfig) -> EnergyBreakdown:
    """Energy of a materialised lattice field with ``h_ex`` links (for cross-checks)."""
    links = background_links(u.grid, u.bc.h_ex)
    return energy_2d(u, links, GL2DParams(u.bc.h_ex, config.eps))
