from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glvortex.energy import GL2DParams, energy_2d
from glvortex.grids import ComplexField, MagneticPeriodic, background_links, square_grid
from glvortex.periodic import (TWO_PI, PeriodicCellSpec, UnquantizedFluxError, consistency_defect,
                               covariant_wrap, extended_values, quantize_flux)


def random_periodic(n, q, seed=0):
    rng = np.random.default_rng(seed)
    g = square_grid(n, periodic=True)
    vals = rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)
    return ComplexField(g, vals, MagneticPeriodic(TWO_PI * q))


def test_quantize_flux():
    assert quantize_flux(8 * math.pi) == pytest.approx(8 * math.pi)
    assert quantize_flux(25.0) == pytest.approx(8 * math.pi)
    assert quantize_flux(0.1) == 0.0
    with pytest.raises(ValueError):
        quantize_flux(-1.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1e4))
def test_quantized_flux_has_no_defect(h):
    assert consistency_defect(quantize_flux(h)) < 1e-9


def test_defect_of_unquantized_flux():
    assert consistency_defect(math.pi) == pytest.approx(2.0)


def test_cell_spec():
    spec = PeriodicCellSpec(25.0, 32)
    assert spec.flux_quanta == 4
    assert spec.quantized_h_ex == pytest.approx(8 * math.pi)
    assert spec.bc() == MagneticPeriodic(spec.quantized_h_ex)
    assert spec.grid().periodic and spec.grid().n == 32
    assert spec.defect > 0


def test_extension_obeys_translation_relations():
    u = random_periodic(8, 3)
    g = u.grid
    n, L, h = g.n, g.side, u.bc.h_ex
    i, j = np.indices(g.shape)
    x1 = g.origin[0] + g.spacing * i
    x2 = g.origin[1] + g.spacing * j
    e1 = extended_values(u, (i + n, j))
    np.testing.assert_allclose(e1, np.exp(1j * h * x2 / (2 * L)) * u.values, atol=1e-13)
    e2 = extended_values(u, (i, j + n))
    np.testing.assert_allclose(e2, np.exp(-1j * h * x1 / (2 * L)) * u.values, atol=1e-13)


def test_extension_is_path_independent_for_quantized_flux():
    u = random_periodic(6, 2, seed=1)
    i, j = np.indices(u.grid.shape)
    n = u.grid.n
    both = extended_values(u, (i + n, j + n))
    # translate along x1 first, then x2, using a shifted copy as the new cell
    first = u.with_values(extended_values(u, (i + n, j)))
    x1 = u.grid.origin[0] + u.grid.spacing * (i + n)
    L, h = u.grid.side, u.bc.h_ex
    via = np.exp(-1j * h * x1 / (2 * L)) * first.values
    np.testing.assert_allclose(both, via, atol=1e-12)


@pytest.mark.parametrize("offset", [(4, 0), (0, 4), (8, 12), (16, 16)])
def test_magnetic_translation_preserves_energy(offset):
    q, n = 4, 16
    u = random_periodic(n, q, seed=2)
    links = background_links(u.grid, u.bc.h_ex)
    p = GL2DParams(u.bc.h_ex, 0.2)
    e1 = energy_2d(u, links, p).total
    w = covariant_wrap(u, offset)
    assert w.bc == u.bc
    assert energy_2d(w, links, p).total == pytest.approx(e1, rel=1e-12)


def test_full_period_is_identity():
    u = random_periodic(10, 3, seed=3)
    np.testing.assert_allclose(covariant_wrap(u, (10, 0)).values, u.values, atol=1e-12)
    np.testing.assert_allclose(covariant_wrap(u, (0, 10)).values, u.values, atol=1e-12)


def test_incommensurate_offset_is_rejected():
    u = random_periodic(16, 4)
    with pytest.raises(ValueError, match="commute"):
        covariant_wrap(u, (1, 0))


def test_unquantized_flux_is_rejected():
    g = square_grid(8, periodic=True)
    u = ComplexField(g, np.ones(g.shape), MagneticPeriodic(3.0))
    with pytest.raises(UnquantizedFluxError):
        covariant_wrap(u, (0, 0))


def test_natural_field_has_no_extension():
    g = square_grid(4)
    u = ComplexField(g, np.ones(g.shape))
    with pytest.raises(ValueError):
        extended_values(u, (np.arange(4), np.arange(4)))
