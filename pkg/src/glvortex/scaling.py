"""Exact reductions and parameter schedules.

* the planar energy on the unit square and the cube energy ``G`` on
  ``Q_R = (-R/2, R/2)^3`` are related by an x3-invariant lift;
* ``(kappa, H)`` determine the cell scales ``b, ell, lambda, delta, R,
  h_ex, eps`` used to build bulk test fields;
* bulk domains are tiled by lattice cubes anchored at the origin;
* an affine gauge shift centred at a point makes the link data agree with
  ``F`` there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .energy import GForm, PlanarForm, energy_2d, energy_3d, GL2DParams
from .grids import (ComplexField, LinkPhases, MagneticPeriodic, Natural,
                    background_links, cube_grid, square_grid)


def params_2d_from_3d(b: float, R: float) -> tuple:
    """``(h_ex, eps) = (R^2, sqrt(b)/R)``."""
    if not (b > 0 and R > 0):
        raise ValueError(f"b and R must be positive, got b={b}, R={R}")
    return R * R, math.sqrt(b) / R


@dataclass(frozen=True)
class ParamSchedule:
    kappa: float
    H: float
    b: float
    ell: float
    lam: float
    delta: float
    R: float
    h_ex: float
    eps: float

    @property
    def regime(self) -> dict:
        """Finite-size proxies for ``ln kappa / kappa << H << kappa``."""
        return {"H_kappa_over_ln_kappa": self.H * self.kappa / math.log(self.kappa),
                "kappa_over_H": self.kappa / self.H}

    @property
    def cell_side(self) -> float:
        """Physical side of one period cell, ``1/(ell sqrt(kappa H))``."""
        return 1.0 / (self.ell * math.sqrt(self.kappa * self.H))

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("kappa", "H", "b", "ell", "lam", "delta", "R", "h_ex", "eps")}
        d["regime"] = self.regime
        return d


def schedule_from_kappaH(kappa: float, H: float) -> ParamSchedule:
    if not kappa > 1.0:
        raise ValueError(f"kappa must exceed 1 (ln kappa > 0), got {kappa}")
    if not H > 0:
        raise ValueError(f"H must be positive, got {H}")
    kh = kappa * H
    b = H / kappa
    ell = (kh / math.log(kappa)) ** 0.25 / math.sqrt(kh)
    lam = math.sqrt(0.5 * math.log(kappa / H)) / math.sqrt(kh) if kappa > H else float("nan")
    R = ell * math.sqrt(kh)
    return ParamSchedule(kappa=kappa, H=H, b=b, ell=ell, lam=lam, delta=math.sqrt(ell),
                         R=R, h_ex=1.0 / ell ** 2, eps=math.sqrt(b) * ell)


# -- domains -----------------------------------------------------------------

@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[0, sides[0]] x [0, sides[1]] x [0, sides[2]]``."""

    sides: tuple

    @property
    def volume(self) -> float:
        return float(np.prod(self.sides))


@dataclass(frozen=True)
class Ball:
    """Ball of the given radius centred at the origin."""

    radius: float

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radius ** 3


DomainSpec = Box | Ball


@dataclass(frozen=True)
class Tiling:
    ell: float
    n_interior: int
    n_meeting_boundary: int
    centers: np.ndarray = field(repr=False)

    @property
    def n_covering(self) -> int:
        return self.n_interior + self.n_meeting_boundary


def cube_tiling(domain, ell: float, tol: float = 1e-12) -> Tiling:
    """Count lattice cubes ``prod [k_i ell, (k_i + 1) ell]`` against a domain.

    Interior cubes lie in the closed domain; boundary cubes meet its interior
    without lying inside.  Centres of the interior cubes are returned in
    lexicographic order.  ``tol`` absorbs rounding in the comparisons.
    """
    if not ell > 0:
        raise ValueError(f"ell must be positive, got {ell}")
    if isinstance(domain, Box):
        lo_hi = [(0.0, float(s)) for s in domain.sides]
    elif isinstance(domain, Ball):
        r = float(domain.radius)
        lo_hi = [(-r, r)] * 3
    else:
        raise TypeError(f"unsupported domain {domain!r}")
    ranges = [np.arange(math.floor(lo / ell) - 1, math.ceil(hi / ell) + 1) for lo, hi in lo_hi]
    K = np.meshgrid(*ranges, indexing="ij")
    lo = [k * ell for k in K]
    hi = [(k + 1) * ell for k in K]
    scale = tol * max(1.0, max(abs(v) for pair in lo_hi for v in pair))
    if isinstance(domain, Box):
        inside = np.ones(K[0].shape, dtype=bool)
        meets = np.ones(K[0].shape, dtype=bool)
        for a, b, (L0, L1) in zip(lo, hi, lo_hi):
            inside &= (a >= L0 - scale) & (b <= L1 + scale)
            meets &= (b > L0 + scale) & (a < L1 - scale)
    else:
        far = sum(np.maximum(a * a, b * b) for a, b in zip(lo, hi))
        near = sum(np.where(a > 0, a * a, np.where(b < 0, b * b, 0.0)) for a, b in zip(lo, hi))
        r2 = domain.radius ** 2
        inside = far <= r2 + scale
        meets = near < r2 - scale
    boundary = meets & ~inside
    centers = np.stack([(a[inside] + b[inside]) * 0.5 for a, b in zip(lo, hi)], axis=1)
    return Tiling(ell, int(inside.sum()), int(boundary.sum()), centers)


def extrapolated_cube_count(domain, cell_side: float) -> float:
    """Leading-order cube count ``|D| / cell_side^3``.

    The interior and covering counts bracket this value and both approach it
    as ``cell_side -> 0``; it is the count used to extend a per-cell energy to
    a whole domain.
    """
    return domain.volume / cell_side ** 3


# -- 2D <-> 3D ----------------------------------------------------------------

def lift_2d_to_3d(u2d: ComplexField, R: float, n3: int | None = None) -> ComplexField:
    """x3-invariant lift ``u(x) = u2d(x_perp / R)`` on a grid of ``Q_R``.

    The 3D grid has ``n3`` sites per axis and the same kind (natural or
    periodic) as the 2D grid; its transverse sites must be a subset of the
    2D sites after scaling by ``R``.
    """
    g2 = u2d.grid
    if g2.dim != 2 or abs(g2.side - 1.0) > 1e-15:
        raise ValueError("lift expects a field on the unit square")
    n3 = g2.n if n3 is None else int(n3)
    step = _subsample_step(g2, n3)
    vals = u2d.values[::step, ::step]
    g3 = cube_grid(n3, side=R, periodic=g2.periodic)
    if g2.periodic:
        if step != 1:
            raise ValueError("periodic lift needs n3 equal to the 2D grid size")
        bc = MagneticPeriodic(u2d.bc.h_ex)
    else:
        bc = Natural()
    return ComplexField(g3, np.repeat(vals[:, :, None], n3, axis=2), bc)


def _subsample_step(g2, n3: int) -> int:
    if g2.periodic:
        if g2.n % n3:
            raise ValueError(f"3D grid {n3} does not subsample the periodic 2D grid {g2.n}")
        return g2.n // n3
    if n3 < 2 or (g2.n - 1) % (n3 - 1):
        raise ValueError(f"3D grid {n3} does not subsample the natural 2D grid {g2.n}")
    return (g2.n - 1) // (n3 - 1)


@dataclass(frozen=True)
class ScalingCheck:
    lhs: float
    rhs: float
    rel_error: float


def check_scaling_identity(u2d: ComplexField, b: float, R: float, n3: int | None = None) -> ScalingCheck:
    """``G_{Q_R}(lift u) = b R E^2D(u)`` with ``h_ex = R^2`` and ``eps = sqrt(b)/R``.

    Both sides use matching quadrature: the right-hand side is evaluated on
    the 2D sites that the 3D grid actually samples.
    """
    h_ex, eps = params_2d_from_3d(b, R)
    if isinstance(u2d.bc, MagneticPeriodic) and not math.isclose(u2d.bc.h_ex, h_ex, rel_tol=1e-12):
        raise ValueError(f"periodic field carries flux {u2d.bc.h_ex}, expected R^2 = {h_ex}")
    u3 = lift_2d_to_3d(u2d, R, n3)
    lhs = energy_3d(u3, background_links(u3.grid, 1.0), GForm(b)).total
    step = _subsample_step(u2d.grid, u3.grid.n)
    if step == 1:
        u2 = u2d
    else:
        u2 = ComplexField(square_grid(u3.grid.n), u2d.values[::step, ::step], u2d.bc)
    rhs = b * R * energy_2d(u2, background_links(u2.grid, h_ex), GL2DParams(h_ex, eps)).total
    rel = abs(lhs - rhs) / max(abs(rhs), 1e-300)
    return ScalingCheck(lhs, rhs, rel)


# -- gauge shift ----------------------------------------------------------------

def potential_at(links: LinkPhases, point) -> np.ndarray:
    """Potential at the site nearest ``point``, read back from the link phases.

    Each component averages the phases of the (at most two) edges along that
    axis adjacent to the site, divided by ``coupling * spacing``.
    """
    grid = links.grid
    idx = grid.nearest_index(point)
    c, s = links.coupling, grid.spacing
    out = np.zeros(grid.dim)
    for d in range(grid.dim):
        th = links.theta[d]
        vals = []
        for k in (idx[d] - 1, idx[d]):
            if grid.periodic or 0 <= k < th.shape[d]:
                j = list(idx)
                j[d] = k % th.shape[d]
                vals.append(th[tuple(j)])
        out[d] = np.mean(vals) / (c * s)
    return out


@dataclass(frozen=True)
class GaugeShift:
    u: ComplexField
    links: LinkPhases
    shift: np.ndarray  # A(x_j) - F(x_j)


def gauge_shift(psi: ComplexField, a_links: LinkPhases, f_links: LinkPhases, x_j, coupling: float) -> GaugeShift:
    """Affine gauge change making the link data match ``F`` at ``x_j``.

    With ``phi(x) = (A(x_j) - F(x_j)) . x`` this returns
    ``u = exp(-i c phi) psi`` and links ``theta_A - c d(phi)``; every
    energy evaluated with the new pair equals the old one exactly.
    """
    grid = psi.grid
    if a_links.grid != grid or f_links.grid != grid:
        raise ValueError("fields and links must share one grid")
    if not grid.contains(x_j):
        raise ValueError(f"point {tuple(x_j)} lies outside the grid")
    if not (math.isclose(a_links.coupling, coupling) and math.isclose(f_links.coupling, coupling)):
        raise ValueError("link couplings do not match")
    shift = potential_at(a_links, x_j) - potential_at(f_links, x_j)
    if grid.periodic and np.any(shift != 0.0):
        raise ValueError("gauge_shift with a nonzero shift needs a natural grid")
    x = grid.coords()
    phi = sum(shift[d] * x[d] for d in range(grid.dim))
    phi = np.broadcast_to(phi, grid.shape)
    s = grid.spacing
    # phi is affine, so its edge differences are the constant shift[d] * s; on
    # periodic wrap edges the same constant keeps the head an image of the tail
    dphi = [np.full(grid.edge_shape(d), shift[d] * s) for d in range(grid.dim)]
    theta = tuple(t - coupling * dp for t, dp in zip(a_links.theta, dphi))
    u = psi.with_values(np.exp(-1j * coupling * phi) * psi.values)
    return GaugeShift(u, LinkPhases(grid, theta, coupling), shift)


def link_deviation(links: LinkPhases, reference: LinkPhases, center, radius: float) -> float:
    """Max of ``|theta - theta_ref| / (c s)`` over edges with midpoint within ``radius`` of ``center``."""
    grid = links.grid
    c, s = links.coupling, grid.spacing
    worst = 0.0
    for d in range(grid.dim):
        mids = grid.edge_midpoints(d)
        r2 = sum((m - p) ** 2 for m, p in zip(mids, center))
        sel = np.broadcast_to(r2 <= radius * radius, grid.edge_shape(d))
        diff = np.abs(links.theta[d] - reference.theta[d]) / (c * s)
        if sel.any():
            worst = max(worst, float(diff[sel].max()))
    return worst


# -- upper bound ----------------------------------------------------------------

@dataclass(frozen=True)
class UpperBound:
    value: float
    n_cubes: float
    leading_term: float
    per_cube: float


def upper_bound_prediction(schedule: ParamSchedule, domain, mp_value: float, count: str = "covering") -> UpperBound:
    """``N * m_p / (ell sqrt(kappa H))`` for the bulk test field.

    Cubes have side ``1/(ell sqrt(kappa H))`` (one period cell of the rescaled
    field).  ``count`` selects ``covering``, ``interior`` or ``extrapolated``
    (``|D| / cell_side^3``).  The closed-form leading term
    ``|D| kappa H ln sqrt(kappa/H)`` is reported alongside.
    """
    if mp_value < 0:
        raise ValueError("mp_value must be nonnegative")
    side = schedule.cell_side
    if count == "extrapolated":
        n = extrapolated_cube_count(domain, side)
    else:
        t = cube_tiling(domain, side)
        n = {"covering": t.n_covering, "interior": t.n_interior}[count]
    per_cube = mp_value / (schedule.ell * math.sqrt(schedule.kappa * schedule.H))
    lead = domain.volume * schedule.kappa * schedule.H * 0.5 * math.log(schedule.kappa / schedule.H)
    return UpperBound(n * per_cube, n, lead, per_cube)
