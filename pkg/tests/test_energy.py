from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glvortex import energy
from glvortex.energy import (E0Form, EnergyBreakdown, GForm, GL2DParams, GL3DParams, PlanarForm,
                             energy_2d, energy_3d, energy_density_field, energy_gradient,
                             gl_residual, integrate, normalizer, operator_for, plaquette_winding,
                             split_inequality_check, vorticity)
from glvortex.grids import (ComplexField, LinkPhases, MagneticPeriodic, Natural, background_links,
                            cube_grid, square_grid, uniform_field)


def random_field(g, rng, bc=None):
    return ComplexField(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape), bc or Natural())


def test_uniform_field_closed_form():
    # u = 1: kinetic energy is h^2 times the integral of |A0|^2 over K, which is 1/24
    h = 10.0
    g = square_grid(257)
    e = energy_2d(uniform_field(g), background_links(g, h), GL2DParams(h, 0.1))
    assert e.potential == 0.0
    assert e.total == pytest.approx(h ** 2 / 24, rel=1e-4)


def test_zero_field_is_pure_condensation():
    g = square_grid(9)
    e = energy_2d(uniform_field(g, 0.0), background_links(g, 3.0), GL2DParams(3.0, 0.5))
    assert e.kinetic == 0.0
    assert e.potential == pytest.approx(1.0 / (2 * 0.25))


def test_3d_zero_field_potential():
    g = cube_grid(5, side=2.0)
    e = energy_3d(uniform_field(g, 0.0), background_links(g, 1.0), GForm(0.3))
    assert e.potential == pytest.approx(0.5 * 8.0)


def test_breakdown_json_round_trip():
    e = EnergyBreakdown.from_parts(0.1, 1 / 3)
    assert EnergyBreakdown.from_json(e.to_json()) == e


@pytest.mark.parametrize("bad", [dict(h_ex=-1.0, eps=0.1), dict(h_ex=1.0, eps=0.0),
                                 dict(h_ex=float("nan"), eps=0.1)])
def test_params_validation(bad):
    with pytest.raises(ValueError):
        GL2DParams(**bad)


def test_from_kappa_H():
    p = GL3DParams.from_kappa_H(100.0, 10.0, 3.0)
    assert p.b == pytest.approx(0.1) and p.R == 3.0


def test_coupling_mismatch_is_rejected():
    g = square_grid(8)
    with pytest.raises(ValueError):
        energy_2d(uniform_field(g), background_links(g, 2.0), GL2DParams(3.0, 0.1))


def test_periodic_flux_mismatch_is_rejected():
    g = square_grid(8, periodic=True)
    u = uniform_field(g, bc=MagneticPeriodic(4 * math.pi))
    with pytest.raises(ValueError):
        energy_2d(u, background_links(g, 2 * math.pi), GL2DParams(2 * math.pi, 0.1))


def _fd_check(op, u, rng, h=1e-6):
    g = op.gradient(u)
    for _ in range(6):
        idx = tuple(rng.integers(0, n) for n in u.shape)
        for unit in (1.0, 1j):
            du = np.zeros_like(u)
            du[idx] = unit * h
            fd = (op.energy(u + du) - op.energy(u - du)) / (2 * h)
            analytic = g[idx].real if unit == 1.0 else g[idx].imag
            assert fd == pytest.approx(analytic, rel=1e-5, abs=1e-7)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.booleans())
def test_gradient_matches_finite_differences_2d(seed, periodic):
    rng = np.random.default_rng(seed)
    g = square_grid(6, periodic=periodic)
    h = 2 * math.pi if periodic else 3.7
    u = random_field(g, rng, MagneticPeriodic(h) if periodic else None)
    op = operator_for(u, background_links(g, h), PlanarForm(h, 0.3))
    _fd_check(op, u.values, rng)


def test_gradient_matches_finite_differences_3d():
    rng = np.random.default_rng(3)
    g = cube_grid(5, side=2.0)
    u = random_field(g, rng)
    op = operator_for(u, background_links(g, 1.0), GForm(0.2))
    _fd_check(op, u.values, rng)


def test_energy_gradient_wraps_field():
    g = square_grid(6)
    u = uniform_field(g)
    grad = energy_gradient(u, background_links(g, 2.0), GL2DParams(2.0, 0.2))
    assert isinstance(grad, ComplexField) and grad.grid == g


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_gauge_invariance(seed):
    rng = np.random.default_rng(seed)
    for g in (square_grid(10), cube_grid(6)):
        links = background_links(g, 2.5)
        u = random_field(g, rng)
        chi = rng.normal(size=g.shape) * 3
        dchi = [np.diff(chi, axis=d) for d in range(g.dim)]
        form = E0Form(1.25, 2.0)
        e1 = operator_for(u, links, form).energy(u.values)
        u2 = u.with_values(u.values * np.exp(1j * chi))
        e2 = operator_for(u2, links.shifted(dchi), form).energy(u2.values)
        assert abs(e1 - e2) <= 1e-12 * e1


def test_gl_residual_vanishes_at_superconducting_state():
    g = square_grid(9)
    assert gl_residual(uniform_field(g), background_links(g, 0.0), 2.0, 1e-300 / 2.0) == 0.0


def test_residual_scales_gradient():
    rng = np.random.default_rng(0)
    g = square_grid(8)
    u = random_field(g, rng)
    op = operator_for(u, background_links(g, 2.0), E0Form(2.0, 1.0))
    res = op.residual(u.values)
    grad = op.gradient(u.values)
    np.testing.assert_allclose(res * 2 * op.site_w * g.cell_volume, grad, rtol=1e-12)


def test_normalizer():
    assert normalizer(100.0, 10.0) == pytest.approx(1000 * math.log(math.sqrt(10)))
    with pytest.raises(ValueError):
        normalizer(1.0, 2.0)


def test_density_integrates_to_energy():
    rng = np.random.default_rng(4)
    g = cube_grid(6, side=1.5)
    kappa, H = 4.0, 1.5
    links = background_links(g, kappa * H)
    u = random_field(g, rng)
    dens = energy_density_field(u, links, kappa, H)
    e = operator_for(u, links, E0Form(kappa, H)).energy(u.values)
    assert integrate(g, dens) == pytest.approx(e / normalizer(kappa, H), rel=1e-12)


def _vortex(g, center=(0.0, 0.0), sign=1):
    x, y = g.coords()
    z = (x - center[0]) + sign * 1j * (y - center[1])
    return ComplexField(g, z / np.abs(z), Natural())


@pytest.mark.parametrize("sign", [1, -1])
def test_single_vortex_winding(sign):
    g = square_grid(20)  # even n: no site at the origin
    w = plaquette_winding(_vortex(g, sign=sign), background_links(g, 0.0))
    assert w.total == pytest.approx(sign, abs=1e-12)
    assert np.nansum(np.abs(w.values)) == pytest.approx(1.0, abs=1e-12)
    assert w.n_indeterminate == 0


def test_winding_is_gauge_invariant_and_flags_zeros():
    rng = np.random.default_rng(2)
    g = square_grid(21)  # odd n: the origin is a site
    u = _vortex(g, center=(0.013, 0.021))
    links = background_links(g, 5.0)
    chi = rng.normal(size=g.shape)
    w1 = plaquette_winding(u, links)
    w2 = plaquette_winding(u.with_values(u.values * np.exp(1j * chi)),
                           links.shifted([np.diff(chi, axis=d) for d in range(2)]))
    np.testing.assert_allclose(w1.values, w2.values, atol=1e-12)
    v = u.values.copy()
    v[10, 10] = 0.0
    assert plaquette_winding(u.with_values(v), links).n_indeterminate == 4


def test_periodic_winding_counts_flux_quanta():
    rng = np.random.default_rng(5)
    q = 3
    h = 2 * math.pi * q
    g = square_grid(16, periodic=True)
    u = random_field(g, rng, MagneticPeriodic(h))
    w = plaquette_winding(u, background_links(g, h))
    assert w.n_indeterminate == 0
    assert w.total == pytest.approx(q, abs=1e-9)


def test_3d_vorticity_of_uniform_state():
    g = cube_grid(6)
    c = 2.0
    v = vorticity(uniform_field(g), background_links(g, c))
    # the current of the superconducting state carries the full applied curl
    np.testing.assert_allclose(v.current[2], 1.0, rtol=1e-2)
    np.testing.assert_allclose(v.current[0], 0.0, atol=1e-12)
    np.testing.assert_allclose(v.field[2], 1.0, rtol=1e-12)
    np.testing.assert_allclose(v.field[0], 0.0, atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.05, 0.95))
def test_split_inequality_holds(seed, delta):
    rng = np.random.default_rng(seed)
    g = cube_grid(5)
    f_links = background_links(g, 2.0)
    a_links = LinkPhases(g, tuple(t + rng.normal(size=t.shape) for t in f_links.theta), 2.0)
    chk = split_inequality_check(random_field(g, rng), a_links, f_links, delta, 2.0)
    assert chk.holds
    assert chk.worst_sharp_margin >= -1e-12


def test_split_inequality_rejects_bad_delta():
    g = cube_grid(4)
    links = background_links(g, 1.0)
    with pytest.raises(ValueError):
        split_inequality_check(uniform_field(g), links, links, 1.0, 1.0)


def test_mask_restricts_energy():
    g = cube_grid(5)
    u = uniform_field(g, 0.0)
    mask = np.zeros(g.shape, dtype=bool)
    mask[1:4, 1:4, 1:4] = True
    full = energy_3d(u, background_links(g, 1.0), GForm(0.5)).potential
    part = energy.energy_3d(u, background_links(g, 1.0), GForm(0.5), subgrid=mask).potential
    assert 0 < part < full
