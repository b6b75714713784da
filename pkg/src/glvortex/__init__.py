"""Discrete Ginzburg-Landau energies, vortex-lattice test fields and
ground-state asymptotics for type-II superconductors in a constant field."""
from __future__ import annotations

from .energy import (EnergyBreakdown, GForm, GL2DParams, GL3DParams, E0Form, PlanarForm,
                     energy_2d, energy_3d, energy_gradient, gl_residual, vorticity)
from .grids import (ComplexField, LinkPhases, MagneticPeriodic, Natural, UniformGrid,
                    background_links, cube_grid, link_phases, square_grid)
from .minimize import MinimizeOptions, MinimizeResult, minimize_2d, minimize_3d
from .vortex_lattice import VortexLatticeConfig, assemble_and_energy

__version__ = "0.1.0"

__all__ = [
    "ComplexField", "E0Form", "EnergyBreakdown", "GForm", "GL2DParams", "GL3DParams",
    "LinkPhases", "MagneticPeriodic", "MinimizeOptions", "MinimizeResult", "Natural",
    "PlanarForm", "UniformGrid", "VortexLatticeConfig", "assemble_and_energy",
    "background_links", "cube_grid", "energy_2d", "energy_3d", "energy_gradient",
    "gl_residual", "link_phases", "minimize_2d", "minimize_3d", "square_grid", "vorticity",
]
