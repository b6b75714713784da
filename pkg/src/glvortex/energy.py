"""Discrete Ginzburg-Landau energies with link variables.

The kinetic term uses covariant forward differences
``D_e u = u(y) exp(-i theta_e) - u(x)`` on each edge ``e = (x -> y)``, which
makes the discrete energy exactly gauge invariant.  On magnetic-periodic
grids the head of a wrap edge is the image of a stored site, so the transport
factor on that edge also carries the magnetic-translation phase.

All three functionals handled here share one shape::

    E(u) = k * sum_e w_e s^(dim-2) |D_e u|^2  +  g * sum_x w_x s^dim (1 - |u|^2)^2

with ``(k, g)`` = ``(1, 1/(2 eps^2))`` for the planar energy,
``(b, 1/2)`` for the cube energy ``G`` and ``(1, kappa^2/2)`` for the local
energy ``E_0``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .grids import (ComplexField, LinkPhases, MagneticPeriodic, UniformGrid,
                    fixed_sum, format_real, wrap_phases)

INDETERMINATE_MODULUS = 1e-12


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    potential: float
    total: float

    @classmethod
    def from_parts(cls, kinetic: float, potential: float) -> "EnergyBreakdown":
        return cls(float(kinetic), float(potential), float(kinetic) + float(potential))

    def to_json(self) -> str:
        return ('{"kinetic": %s, "potential": %s, "total": %s}'
                % (format_real(self.kinetic), format_real(self.potential), format_real(self.total)))

    @classmethod
    def from_json(cls, text: str) -> "EnergyBreakdown":
        d = json.loads(text)
        return cls(d["kinetic"], d["potential"], d["total"])


@dataclass(frozen=True)
class GL2DParams:
    h_ex: float
    eps: float

    def __post_init__(self):
        _check_positive(h_ex=self.h_ex, eps=self.eps, allow_zero=("h_ex",))


@dataclass(frozen=True)
class GL3DParams:
    b: float
    R: float

    def __post_init__(self):
        _check_positive(b=self.b, R=self.R)

    @classmethod
    def from_kappa_H(cls, kappa: float, H: float, R: float) -> "GL3DParams":
        _check_positive(kappa=kappa, H=H)
        return cls(H / kappa, R)


@dataclass(frozen=True)
class GForm:
    """``b |(grad - iF) u|^2 + (1/2)(1 - |u|^2)^2``, links at coupling 1."""

    b: float

    coupling = 1.0

    @property
    def kinetic_coef(self):
        return self.b

    @property
    def potential_coef(self):
        return 0.5


@dataclass(frozen=True)
class E0Form:
    """``|(grad - i kappa H A) psi|^2 + (kappa^2/2)(1 - |psi|^2)^2``."""

    kappa: float
    H: float

    @property
    def coupling(self):
        return self.kappa * self.H

    kinetic_coef = 1.0

    @property
    def potential_coef(self):
        return 0.5 * self.kappa ** 2


@dataclass(frozen=True)
class PlanarForm:
    """``|(grad - i h_ex A0) u|^2 + (1/(2 eps^2))(1 - |u|^2)^2``."""

    h_ex: float
    eps: float

    @property
    def coupling(self):
        return self.h_ex

    kinetic_coef = 1.0

    @property
    def potential_coef(self):
        return 0.5 / self.eps ** 2


def _check_positive(allow_zero=(), **values):
    for name, v in values.items():
        ok = (v >= 0) if name in allow_zero else (v > 0)
        if not (ok and math.isfinite(v)):
            raise ValueError(f"{name} must be positive and finite, got {v}")


def _slice(axis, sl, ndim):
    idx = [slice(None)] * ndim
    idx[axis] = sl
    return tuple(idx)


class GLOperator:
    """Energy, gradient and per-edge quantities for one (grid, links, form).

    Transport factors are precomputed, so repeated evaluation during a
    minimisation only costs array arithmetic.
    """

    def __init__(self, grid: UniformGrid, links: LinkPhases, kinetic_coef: float,
                 potential_coef: float, bc=None, mask=None):
        if links.grid != grid:
            raise ValueError("link phases were built on a different grid")
        if grid.periodic and not isinstance(bc, MagneticPeriodic):
            raise ValueError("periodic grid requires a MagneticPeriodic boundary condition")
        self.grid = grid
        self.links = links
        self.bc = bc
        self.k = float(kinetic_coef)
        self.g = float(potential_coef)
        s = grid.spacing
        self.kin_scale = self.k * s ** (grid.dim - 2)
        self.pot_scale = self.g * s ** grid.dim
        self.site_w = grid.site_weights()
        self.edge_w = [grid.edge_weights(d) for d in range(grid.dim)]
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != grid.shape:
                raise ValueError(f"mask shape {mask.shape} != grid shape {grid.shape}")
            m = mask.astype(float)
            self.site_w = self.site_w * m
            for d in range(grid.dim):
                self.edge_w[d] = self.edge_w[d] * self._tail(m, d) * self._head(m, d)
        self.theta_eff = []
        self.transport = []
        for d in range(grid.dim):
            th = np.array(links.theta[d])
            wp = wrap_phases(grid, bc, d)
            if wp is not None:
                th = th - wp
            self.theta_eff.append(th)
            self.transport.append(np.exp(-1j * th))
        self.back_transport = [np.conj(t) for t in self.transport]

    def _tail(self, u, d):
        if self.grid.periodic:
            return u
        return u[_slice(d, slice(None, -1), u.ndim)]

    def _head(self, u, d):
        if self.grid.periodic:
            return np.roll(u, -1, axis=d)
        return u[_slice(d, slice(1, None), u.ndim)]

    def differences(self, u: np.ndarray, d: int) -> np.ndarray:
        return self.transport[d] * self._head(u, d) - self._tail(u, d)

    def edge_kinetic(self, u: np.ndarray, d: int) -> np.ndarray:
        """Weighted kinetic contribution of each edge along axis ``d``."""
        a = self.differences(u, d)
        return self.kin_scale * self.edge_w[d] * (a.real ** 2 + a.imag ** 2)

    def site_potential(self, u: np.ndarray) -> np.ndarray:
        r = 1.0 - (u.real ** 2 + u.imag ** 2)
        return self.pot_scale * self.site_w * r * r

    def breakdown(self, u: np.ndarray) -> EnergyBreakdown:
        kin = 0.0
        for d in range(self.grid.dim):
            kin += fixed_sum(self.edge_kinetic(u, d))
        pot = fixed_sum(self.site_potential(u))
        return EnergyBreakdown.from_parts(kin, pot)

    def energy(self, u: np.ndarray) -> float:
        return self.breakdown(u).total

    def gradient(self, u: np.ndarray) -> np.ndarray:
        """``dE/dRe(u) + i dE/dIm(u)`` at every site."""
        return self.energy_and_gradient(u)[1]

    def energy_and_gradient(self, u: np.ndarray):
        grid = self.grid
        mod2 = u.real ** 2 + u.imag ** 2
        r = 1.0 - mod2
        pw = self.pot_scale * self.site_w
        pot = fixed_sum(pw * r * r)
        grad = (-4.0 * pw * r) * u
        kin = 0.0
        for d in range(grid.dim):
            a = self.differences(u, d)
            cw = self.kin_scale * self.edge_w[d]
            kin += fixed_sum(cw * (a.real ** 2 + a.imag ** 2))
            ca = (2.0 * cw) * a
            back = self.back_transport[d] * ca
            if grid.periodic:
                grad -= ca
                grad += np.roll(back, 1, axis=d)
            else:
                grad[_slice(d, slice(None, -1), u.ndim)] -= ca
                grad[_slice(d, slice(1, None), u.ndim)] += back
        return EnergyBreakdown.from_parts(kin, pot), grad

    def residual(self, u: np.ndarray) -> np.ndarray:
        """Pointwise discrete residual of the first GL equation.

        Equals the energy gradient divided by twice the quadrature volume of
        each site; sites with zero weight (outside a mask) are reported as 0.
        """
        grad = self.gradient(u)
        vol = 2.0 * self.site_w * self.grid.cell_volume
        out = np.zeros(grad.shape, dtype=complex)
        np.divide(grad, vol, out=out, where=vol > 0)
        return out


def operator_for(u: ComplexField, links: LinkPhases, form, mask=None) -> GLOperator:
    if not math.isclose(links.coupling, form.coupling, rel_tol=1e-12, abs_tol=1e-300):
        raise ValueError(f"links built with coupling {links.coupling}, form expects {form.coupling}")
    if isinstance(u.bc, MagneticPeriodic):
        expected = links.coupling * u.grid.side ** 2
        if not math.isclose(expected, u.bc.h_ex, rel_tol=1e-9):
            raise ValueError(f"field carries flux {u.bc.h_ex} but links give {expected}")
    return GLOperator(u.grid, links, form.kinetic_coef, form.potential_coef, u.bc, mask)


def energy_2d(u: ComplexField, links: LinkPhases, params: GL2DParams) -> EnergyBreakdown:
    if u.grid.dim != 2:
        raise ValueError("energy_2d needs a 2D field")
    return operator_for(u, links, PlanarForm(params.h_ex, params.eps)).breakdown(u.values)


def energy_3d(u: ComplexField, links: LinkPhases, form, subgrid=None) -> EnergyBreakdown:
    if u.grid.dim != 3:
        raise ValueError("energy_3d needs a 3D field")
    return operator_for(u, links, form, mask=subgrid).breakdown(u.values)


def _form_for(u: ComplexField, form):
    if isinstance(form, GL2DParams):
        return PlanarForm(form.h_ex, form.eps)
    return form


def energy_gradient(u: ComplexField, links: LinkPhases, form) -> ComplexField:
    op = operator_for(u, links, _form_for(u, form))
    return u.with_values(op.gradient(u.values))


def gl_residual(u: ComplexField, links: LinkPhases, kappa: float, H: float) -> float:
    """Max-norm of the discrete residual of ``-(grad - i kappa H A)^2 psi = kappa^2 (1-|psi|^2) psi``."""
    op = operator_for(u, links, E0Form(kappa, H))
    return float(np.max(np.abs(op.residual(u.values))))


def normalizer(kappa: float, H: float) -> float:
    """``kappa H ln sqrt(kappa/H)``, with the log evaluated as ``0.5 ln(kappa/H)``."""
    if not kappa > H > 0:
        raise ValueError(f"need kappa > H > 0 for a positive normalizer, got kappa={kappa}, H={H}")
    return kappa * H * 0.5 * math.log(kappa / H)


def energy_density_field(psi: ComplexField, links: LinkPhases, kappa: float, H: float) -> np.ndarray:
    """Local energy density divided by ``kappa H ln sqrt(kappa/H)``.

    Each edge's kinetic energy is split equally between its endpoints, so the
    weighted integral of the density reproduces ``E_0 / normalizer``.
    """
    norm = normalizer(kappa, H)
    op = operator_for(psi, links, E0Form(kappa, H))
    u = psi.values
    site_energy = op.site_potential(u)
    for d in range(psi.grid.dim):
        ek = 0.5 * op.edge_kinetic(u, d)
        if psi.grid.periodic:
            site_energy = site_energy + ek + np.roll(ek, 1, axis=d)
        else:
            site_energy = site_energy.copy()
            site_energy[_slice(d, slice(None, -1), u.ndim)] += ek
            site_energy[_slice(d, slice(1, None), u.ndim)] += ek
    vol = op.site_w * psi.grid.cell_volume
    out = np.zeros(u.shape)
    np.divide(site_energy, vol, out=out, where=vol > 0)
    return out / norm


def integrate(grid: UniformGrid, density: np.ndarray) -> float:
    return fixed_sum(grid.site_weights() * density) * grid.cell_volume


def _wrap(x):
    """Map angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - x, 2.0 * np.pi)


def _plaquette_sum(op: GLOperator, per_edge, a: int, b: int):
    """Oriented circulation of an edge quantity around the (a, b) plaquettes."""
    ea, eb = per_edge[a], per_edge[b]
    if op.grid.periodic:
        return ea + np.roll(eb, -1, axis=a) - np.roll(ea, -1, axis=b) - eb
    nd = ea.ndim
    ea_lo = ea[_slice(b, slice(None, -1), nd)]
    ea_hi = ea[_slice(b, slice(1, None), nd)]
    eb_lo = eb[_slice(a, slice(None, -1), nd)]
    eb_hi = eb[_slice(a, slice(1, None), nd)]
    return ea_lo + eb_hi - ea_hi - eb_lo


def _corner_modulus_ok(op: GLOperator, u: np.ndarray, a: int, b: int):
    ok = np.abs(u) >= INDETERMINATE_MODULUS
    if op.grid.periodic:
        return ok & np.roll(ok, -1, a) & np.roll(ok, -1, b) & np.roll(np.roll(ok, -1, a), -1, b)
    nd = u.ndim
    lo_a, hi_a = _slice(a, slice(None, -1), nd), _slice(a, slice(1, None), nd)
    o00 = ok[lo_a][_slice(b, slice(None, -1), nd)]
    o10 = ok[hi_a][_slice(b, slice(None, -1), nd)]
    o01 = ok[lo_a][_slice(b, slice(1, None), nd)]
    o11 = ok[hi_a][_slice(b, slice(1, None), nd)]
    return o00 & o10 & o01 & o11


def _covariant_phase(op: GLOperator, u: np.ndarray, d: int):
    return np.angle(np.conj(op._tail(u, d)) * op.transport[d] * op._head(u, d))


@dataclass(frozen=True)
class Winding:
    """Per-plaquette winding numbers; NaN where a corner modulus vanishes."""

    values: np.ndarray
    indeterminate: np.ndarray

    @property
    def total(self) -> float:
        return float(np.nansum(self.values))

    @property
    def n_indeterminate(self) -> int:
        return int(np.count_nonzero(self.indeterminate))


def plaquette_winding(psi: ComplexField, links: LinkPhases, axes=(0, 1)) -> Winding:
    """Phase winding of ``psi`` around every plaquette in the ``axes`` plane.

    (sum of wrapped covariant phase differences + wrapped link flux) / 2 pi.
    """
    op = GLOperator(psi.grid, links, 1.0, 0.0, psi.bc)
    u = psi.values
    a, b = axes
    cov = {d: _covariant_phase(op, u, d) for d in (a, b)}
    circ = _plaquette_sum(op, cov, a, b)
    flux = _wrap(_plaquette_sum(op, {d: op.theta_eff[d] for d in (a, b)}, a, b))
    w = (circ + flux) / (2.0 * np.pi)
    bad = ~_corner_modulus_ok(op, u, a, b)
    w = np.where(bad, np.nan, w)
    return Winding(w, bad)


@dataclass(frozen=True)
class Vorticity3D:
    """Plaquette vorticity ``curl j + curl A`` for the three plaquette orientations.

    ``current[k]`` and ``field[k]`` hold the two parts for plaquettes normal to
    axis ``k``; ``total[k]`` is their sum.
    """

    current: tuple
    field: tuple

    @property
    def total(self) -> tuple:
        return tuple(c + f for c, f in zip(self.current, self.field))


_PLANES = {0: (1, 2), 1: (2, 0), 2: (0, 1)}


def vorticity(psi: ComplexField, links: LinkPhases):
    """Vorticity diagnostic.

    2D fields return a :class:`Winding`; 3D fields return a
    :class:`Vorticity3D` built from the supercurrent
    ``j = -Im(conj(psi) (grad - i c A) psi) / c`` (discretised per edge) and
    the link curl ``flux / (c s^2)``.  For ``psi = 1`` the current part equals
    ``curl A``, so both parts contribute equally.
    """
    if psi.grid.dim == 2:
        return plaquette_winding(psi, links)
    op = GLOperator(psi.grid, links, 1.0, 0.0, psi.bc)
    u = psi.values
    c = links.coupling
    s = psi.grid.spacing
    current, fieldpart = [], []
    for k in range(3):
        a, b = _PLANES[k]
        j = {d: -np.imag(np.conj(op._tail(u, d)) * op.transport[d] * op._head(u, d)) / c for d in (a, b)}
        current.append(_plaquette_sum(op, j, a, b) / s ** 2)
        flux = _wrap(_plaquette_sum(op, {d: op.theta_eff[d] for d in (a, b)}, a, b))
        fieldpart.append(flux / (c * s ** 2))
    return Vorticity3D(tuple(current), tuple(fieldpart))


@dataclass(frozen=True)
class SplitCheck:
    holds: bool
    worst_margin: float
    worst_sharp_margin: float


def split_inequality_check(u: ComplexField, a_links: LinkPhases, f_links: LinkPhases,
                           delta: float, coupling: float) -> SplitCheck:
    """Edgewise check of ``|D_a u|^2 >= (1-delta)|D_F u|^2 - 2/delta (c s)^2 |a-F|^2 |u|^2``.

    ``|a - F|`` on an edge is the phase difference divided by ``c * s``, so the
    last term is ``2/delta * (theta_a - theta_F)^2 * |u(head)|^2``.  The sharp
    margin uses the constant ``1/delta - 1`` in place of ``2/delta``.
    """
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    if a_links.grid != f_links.grid or a_links.grid != u.grid:
        raise ValueError("fields and links must share one grid")
    op_a = GLOperator(u.grid, a_links, 1.0, 0.0, u.bc)
    op_f = GLOperator(u.grid, f_links, 1.0, 0.0, u.bc)
    vals = u.values
    worst, worst_sharp = math.inf, math.inf
    for d in range(u.grid.dim):
        da = np.abs(op_a.differences(vals, d)) ** 2
        df = np.abs(op_f.differences(vals, d)) ** 2
        dtheta = a_links.theta[d] - f_links.theta[d]
        head = np.abs(op_a._head(vals, d)) ** 2
        y2 = dtheta ** 2 * head
        margin = da - ((1.0 - delta) * df - (2.0 / delta) * y2)
        sharp = da - ((1.0 - delta) * df - (1.0 / delta - 1.0) * y2)
        worst = min(worst, float(margin.min()))
        worst_sharp = min(worst_sharp, float(sharp.min()))
    # rounding on |D|^2 ~ O(1) values
    return SplitCheck(worst >= -1e-12, worst, worst_sharp)
