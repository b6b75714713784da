from __future__ import annotations

import math

import numpy as np
import pytest

from glvortex.energy import plaquette_winding
from glvortex.grids import background_links, square_grid
from glvortex.vortex_lattice import (VortexLatticeConfig, assemble_and_energy, check_energy_of_field,
                                     choose_N, lattice_field, lattice_upper_bound, phase_differences,
                                     profile_rho, solve_cell_potential)

H8 = 8 * math.pi


@pytest.mark.parametrize("h,N", [(2 * math.pi, 1), (H8, 2), (2 * math.pi * 8.99, 2),
                                 (2 * math.pi * 9, 3), (100.0, 3)])
def test_choose_N(h, N):
    assert choose_N(h) == N


def test_choose_N_rejects_weak_fields():
    with pytest.raises(ValueError):
        choose_N(6.0)


def test_config_validation():
    with pytest.raises(ValueError):
        VortexLatticeConfig(H8, 0.05, 66)  # not divisible by 2N
    with pytest.raises(ValueError):
        VortexLatticeConfig(H8, 0.3, 64)  # core wider than half a cell
    cfg = VortexLatticeConfig(H8, 0.05, 64)
    assert cfg.N == 2 and cfg.cell_grid_n == 32 and cfg.cell_side == 0.5
    assert cfg.compatible_field == pytest.approx(H8)


def test_centres_form_a_square_lattice():
    cfg = VortexLatticeConfig(2 * math.pi * 9, 0.02, 96)
    c = cfg.centers
    assert c.shape == (9, 2)
    assert np.all((c >= -0.5) & (c < 0.5))
    # odd N: a cell corner sits at the gauge origin, so centres are offset by half a cell
    assert sorted(set(np.round(c[:, 0], 12))) == pytest.approx([-0.5, -1 / 6, 1 / 6])
    even = VortexLatticeConfig(H8, 0.05, 64).centers
    assert sorted(set(np.round(even[:, 0], 12))) == pytest.approx([-0.25, 0.25])


def test_cell_solution_properties():
    cfg = VortexLatticeConfig(H8, 0.05, 64)
    sol = solve_cell_potential(cfg)
    assert sol.trapezoid_mean() == pytest.approx(0.0, abs=1e-12)
    assert abs(sol.source_total) < 1e-12
    assert sol.residual < 1e-10
    # the square cell has the symmetries of the square
    np.testing.assert_allclose(sol.h, sol.h.T, atol=1e-12)
    np.testing.assert_allclose(sol.h, sol.h[::-1, :], atol=1e-12)


def test_cell_solve_rejects_small_grids():
    cfg = VortexLatticeConfig(H8, 0.05, 64)
    with pytest.raises(ValueError):
        solve_cell_potential(cfg, cell_grid_n=8)


def test_dirichlet_energy_grows_like_point_vortex():
    # outside small discs the Green's function dominates: 2 pi ln(r2 / r1)
    cfg = VortexLatticeConfig(H8, 0.05, 1024)
    sol = solve_cell_potential(cfg)
    d1 = sol.dirichlet_outside(0.01)
    d2 = sol.dirichlet_outside(0.04)
    assert d1 - d2 == pytest.approx(2 * math.pi * math.log(4.0), rel=0.02)


def test_lattice_field_has_one_vortex_per_cell():
    cfg = VortexLatticeConfig(H8, 0.05, 64)
    u = lattice_field(cfg)
    w = plaquette_winding(u, background_links(u.grid, u.bc.h_ex))
    assert w.n_indeterminate == 0
    assert w.total == pytest.approx(cfg.N ** 2, abs=1e-9)
    hits = np.argwhere(np.abs(w.values) > 0.5)
    assert len(hits) == cfg.N ** 2
    s = u.grid.spacing
    corners = -0.5 + (hits + 1) * s  # plaquette centre of cell-centred sites
    found = {tuple(np.round(p, 9)) for p in corners}
    expected = {tuple(np.round(c, 9)) for c in cfg.centers}
    assert found == expected


def test_phase_differences_circulate_two_pi_at_centres():
    cfg = VortexLatticeConfig(H8, 0.05, 64)
    w0, w1 = phase_differences(solve_cell_potential(cfg), cfg)
    circ = w0 + np.roll(w1, -1, 0) - np.roll(w0, -1, 1) - w1
    background = -cfg.compatible_field / cfg.n ** 2
    vortex = np.abs(circ - background) > 1.0
    assert np.count_nonzero(vortex) == cfg.N ** 2
    np.testing.assert_allclose(circ[vortex], 2 * math.pi + background, atol=1e-9)
    np.testing.assert_allclose(circ[~vortex], background, atol=1e-9)


def test_compatible_field_energy_matches_materialised_field():
    cfg = VortexLatticeConfig(H8, 0.05, 128)
    lat = assemble_and_energy(cfg)
    e = check_energy_of_field(lattice_field(cfg), cfg)
    assert e.total == pytest.approx(lat.total, rel=1e-10)
    assert lat.cell_energy.total == pytest.approx(lat.total, rel=1e-10)


def test_incompatible_field_keeps_cell_periodicity_of_modulus():
    cfg = VortexLatticeConfig(30.0, 0.05, 128)
    lat = assemble_and_energy(cfg)
    m = cfg.cell_grid_n
    np.testing.assert_allclose(lat.rho, np.roll(lat.rho, m, axis=0))
    assert lat.total > 0


def test_upper_bound_holds_on_coarse_grid():
    cfg = VortexLatticeConfig(H8, 0.05, 128)
    assert assemble_and_energy(cfg).total <= lattice_upper_bound(cfg)


def test_profile_rho():
    g = square_grid(8, periodic=True)
    rho = profile_rho(g, (0.0, 0.0), 0.25)
    assert rho.max() == 1.0
    assert rho.min() == pytest.approx(math.hypot(1 / 16, 1 / 16) / 0.25)
    wrapped = profile_rho(g, (0.5, 0.5), 0.25, period=1.0)
    assert wrapped[0, 0] == pytest.approx(math.hypot(1 / 16, 1 / 16) / 0.25)
