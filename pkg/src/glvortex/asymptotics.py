"""Leading-order laws, the f(b) estimator and the convergence-study harness.

Every law is checked at desk scale as a ratio ``measured / predicted`` whose
trend along a schedule is the falsifiable content; no equality is asserted.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq
from scipy.stats import kendalltau

from .energy import GL2DParams, GL3DParams, energy_density_field, integrate, vorticity
from .grids import background_links
from .minimize import InitField, MinimizeOptions, minimize_2d, minimize_3d
from .periodic import TWO_PI, quantize_flux
from .scaling import Box, cube_tiling, extrapolated_cube_count, lift_2d_to_3d, schedule_from_kappaH

KENDALL_THRESHOLD = 0.8


def predicted_C0(kappa: float, H: float, volume: float = 1.0) -> float:
    """``|D| kappa H ln sqrt(kappa/H)``."""
    if not (H > 0 and kappa >= H):
        raise ValueError(f"need kappa >= H > 0, got kappa={kappa}, H={H}")
    return volume * kappa * H * 0.5 * math.log(kappa / H)


def predicted_m0(h_ex: float, eps: float) -> float:
    """``h_ex ln(1/(eps sqrt(h_ex)))``."""
    if not (h_ex > 0 and eps > 0):
        raise ValueError("h_ex and eps must be positive")
    t = eps * math.sqrt(h_ex)
    if not t <= 1.0:
        raise ValueError(f"eps sqrt(h_ex) = {t} must not exceed 1")
    return -h_ex * math.log(t)


def predicted_M0(b: float, R: float) -> float:
    """``R^3 b ln(1/sqrt(b))``."""
    if not (0 < b < 1 and R > 0):
        raise ValueError(f"need 0 < b < 1 and R > 0, got b={b}, R={R}")
    return R ** 3 * b * (-0.5 * math.log(b))


def _check_b(b: float):
    if not 0 < b < 1:
        raise ValueError(f"b must lie in (0, 1), got {b}")


def f_asymptotic(b: float) -> float:
    """``(b/2) ln(1/sqrt(b)) = -(b/4) ln b``."""
    _check_b(b)
    return -0.25 * b * math.log(b)


def ss02_bracket(b: float) -> tuple:
    """``(b - b^2/2, (b/2) ln(1/sqrt(b)))``: the small-b lower and upper terms."""
    _check_b(b)
    return b - 0.5 * b * b, f_asymptotic(b)


def crossover_b() -> float:
    """The ``b*`` in (0, 1) where ``b - b^2/2`` meets ``(b/2) ln(1/sqrt(b))``."""
    # divide by b: 1 - b/2 = -ln(b)/4
    return brentq(lambda b: 1.0 - 0.5 * b + 0.25 * math.log(b), 1e-300, 0.999, xtol=1e-300, rtol=1e-15)


B_STAR = crossover_b()


@dataclass(frozen=True)
class AsymptoticReport:
    law: str
    point: dict
    measured: float
    predicted: float
    grid: int = 0
    converged: bool = True
    seed: int = 0
    flags: dict = field(default_factory=dict)
    ok: bool = True
    error: str = ""

    @property
    def ratio(self) -> float:
        if self.predicted > 0 and math.isfinite(self.measured):
            return self.measured / self.predicted
        return math.nan


def snapped_R(b: float, R: float | None = None) -> tuple:
    """``R`` with ``R^2`` moved to the nearest nonzero multiple of ``2 pi``.

    Without an explicit ``R`` the target is ``R = 1/b``.
    """
    R0 = 1.0 / b if R is None else R
    h = max(quantize_flux(R0 * R0), TWO_PI)
    return math.sqrt(h), R0


def f_estimate(b: float, R: float | None, grid_n: int, opts: MinimizeOptions | None = None) -> AsymptoticReport:
    """``b m_p(R^2, sqrt(b)/R) / (2 R^2)`` against ``f_asymptotic(b)``.

    ``R`` is snapped so ``R^2`` is flux-quantised; the report keeps both the
    requested and the snapped value, the (unknown-constant) ``C/R`` budget of
    the finite-cell estimate, and the zero-field bound ``1/4``.
    """
    _check_b(b)
    Rq, R0 = snapped_R(b, R)
    h = Rq * Rq
    eps = math.sqrt(b) / Rq
    res = minimize_2d(GL2DParams(h, eps), "periodic", grid_n, opts)
    measured = b * res.energy.total / (2.0 * h)
    lo, hi = ss02_bracket(b)
    flags = {"R_requested": R0, "R": Rq, "h_ex": h, "eps": eps, "inv_R": 1.0 / Rq,
             "zero_field_bound": 0.25, "below_crossover": b < B_STAR,
             "bracket_lower": lo, "bracket_upper": hi, "bracket_ordered": lo <= hi}
    return AsymptoticReport("f", {"b": b}, measured, f_asymptotic(b), grid_n, res.converged,
                            res.seed, flags)


# -- studies --------------------------------------------------------------------

def kendall_toward_one(scales, ratios) -> float:
    """Kendall concordance between ``scale`` and ``|ratio - 1|``.

    Scales are ordered so that later points are deeper in the asymptotic
    regime; a value of +1 means the distance to 1 shrinks monotonically.
    """
    scales, ratios = list(scales), list(ratios)
    if len(scales) != len(ratios):
        raise ValueError("need one scale per ratio")
    if len(ratios) < 2:
        return math.nan
    dist = [abs(r - 1.0) for r in ratios]
    tau = kendalltau(scales, dist).statistic
    return float(-tau)


@dataclass(frozen=True)
class StudyTable:
    law: str
    reports: tuple

    @property
    def ratios(self) -> list:
        return [r.ratio for r in self.reports]

    @property
    def concordance(self) -> float:
        ok = [r.ratio for r in self.reports if r.ok]
        return kendall_toward_one(range(len(ok)), ok)

    @property
    def final_ratio(self) -> float:
        ok = [r.ratio for r in self.reports if r.ok]
        return ok[-1] if ok else math.nan

    @property
    def monotone(self) -> bool:
        ok = [r.ratio for r in self.reports if r.ok]
        return len(ok) >= 4 and self.concordance >= KENDALL_THRESHOLD


def _study_point(law: str, point: dict, grid_n: int, opts):
    try:
        if law in ("m0", "mp"):
            bc = "natural" if law == "m0" else "periodic"
            p = GL2DParams(point["h_ex"], point["eps"])
            res = minimize_2d(p, bc, grid_n, opts)
            pred = predicted_m0(res.flux if law == "mp" else p.h_ex, p.eps)
            return AsymptoticReport(law, dict(point), res.energy.total, pred, grid_n, res.converged, res.seed,
                                    {"h_ex_used": res.flux, "max_modulus": res.max_modulus,
                                     "residual": res.residual})
        if law == "f":
            return f_estimate(point["b"], point.get("R"), grid_n, opts)
        if law == "M0":
            from .energy import GL3DParams
            from .minimize import minimize_3d
            res = minimize_3d(GL3DParams(point["b"], point["R"]), grid_n, opts)
            return AsymptoticReport(law, dict(point), res.energy.total, predicted_M0(point["b"], point["R"]),
                                    grid_n, res.converged, res.seed, {})
        if law == "C0":
            rep = bulk_energy_estimate(point["kappa"], point["H"], grid_n, opts)
            return rep
        raise ValueError(f"unknown law {law!r}")
    except (ValueError, ArithmeticError) as exc:
        return AsymptoticReport(law, dict(point), math.nan, math.nan, grid_n, False, 0, {}, False, str(exc))


def convergence_study(law: str, points, grids, opts: MinimizeOptions | None = None, jobs: int = 1) -> StudyTable:
    """Evaluate ``law`` at each point (ordered from shallow to deep).

    ``grids`` is one grid size per point or a single size for all.  Failing
    points are recorded with ``ok = False`` and the study carries on.
    """
    points = [dict(p) for p in points]
    if isinstance(grids, int):
        grids = [grids] * len(points)
    grids = list(grids)
    if len(grids) != len(points):
        raise ValueError("need one grid size per point")
    args = ([law] * len(points), points, grids, [opts] * len(points))
    if jobs > 1 and len(points) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(points))) as pool:
            reports = list(pool.map(_study_point, *args))
    else:
        reports = [_study_point(*a) for a in zip(*args)]
    return StudyTable(law, tuple(reports))


# -- bulk (3D) estimate -------------------------------------------------------------

@dataclass(frozen=True)
class BulkSetup:
    """Period cell of the bulk test field for a ``(kappa, H)`` point.

    In cube units (coupling 1) the cell is ``Q_R`` with ``R^2 = h_q``, the
    flux-quantised ``1/ell^2``; the planar problem has ``h_ex = h_q`` and
    ``eps = sqrt(b)/R``.  Physically the cell has side ``R/sqrt(kappa H)``.
    """

    kappa: float
    H: float
    b: float
    ell: float
    h_q: float

    @property
    def R(self) -> float:
        return math.sqrt(self.h_q)

    @property
    def eps(self) -> float:
        return math.sqrt(self.b) / self.R

    @property
    def cell_side(self) -> float:
        return self.R / math.sqrt(self.kappa * self.H)

    def energy_per_cell(self, G: float) -> float:
        """Physical local energy of one cell from its ``G`` value."""
        return G * math.sqrt(self.kappa) * self.H ** -1.5


def bulk_setup(kappa: float, H: float) -> BulkSetup:
    s = schedule_from_kappaH(kappa, H)
    h_q = max(quantize_flux(s.h_ex), TWO_PI)
    return BulkSetup(kappa, H, s.b, s.ell, h_q)


def bulk_energy_estimate(kappa: float, H: float, grid_n: int, opts: MinimizeOptions | None = None,
                         volume: float = 1.0, jobs: int = 1) -> AsymptoticReport:
    """Ground-state energy per volume from one periodic cell, extended to ``volume``.

    A planar periodic minimiser is lifted to the cube ``Q_R`` and used as the
    initial guess of the 3D minimisation; the resulting cell energy is scaled
    to physical units and multiplied by the extrapolated cube count
    ``volume / cell_side^3``.
    """
    st = bulk_setup(kappa, H)
    opts = opts or MinimizeOptions()
    r2 = minimize_2d(GL2DParams(st.h_q, st.eps), "periodic", grid_n, replace(opts, jobs=jobs))
    u3 = lift_2d_to_3d(r2.field, st.R)
    r3 = minimize_3d(GL3DParams(st.b, st.R), grid_n, replace(opts, init=InitField(u3, "lifted_2d"), restarts=1),
                     bc="periodic")
    side = (volume ** (1.0 / 3.0))
    box = Box((side, side, side))
    n_cells = extrapolated_cube_count(box, st.cell_side)
    tiles = cube_tiling(box, st.cell_side)
    per_cell = st.energy_per_cell(r3.energy.total)
    measured = n_cells * per_cell
    flags = {"h_q": st.h_q, "R": st.R, "eps": st.eps, "b": st.b, "cell_side": st.cell_side,
             "n_cells": n_cells, "n_interior": tiles.n_interior, "n_covering": tiles.n_covering,
             "G_cell": r3.energy.total, "E2D": r2.energy.total, "per_cell": per_cell,
             "max_modulus": r3.max_modulus, "residual": r3.residual, "iterations_3d": r3.iterations}
    return AsymptoticReport("C0", {"kappa": kappa, "H": H}, measured, predicted_C0(kappa, H, volume),
                            grid_n, r3.converged and r2.converged, r2.seed, flags)


# -- density and vorticity diagnostics ------------------------------------------------------------

@dataclass(frozen=True)
class CorollaryReport:
    density_l1_deviation: float
    density_mean: float
    vorticity_per_area: float
    flux_quanta_per_cell: float


def corollary_diagnostics(psi, kappa: float, H: float, links=None) -> CorollaryReport:
    """Energy-density and vorticity diagnostics of a 3D field at ``A = F``.

    ``psi`` is given in physical units with links at coupling ``kappa H``.
    Reports the L1 deviation of the normalised density from 1 (averaged over
    the grid), and the third vorticity component averaged over the
    transverse plaquettes of the middle slice (expected to approach 1).
    """
    grid = psi.grid
    links = links or background_links(grid, kappa * H)
    dens = energy_density_field(psi, links, kappa, H)
    volume = grid.side ** 3
    mean = integrate(grid, dens) / volume
    l1 = integrate(grid, np.abs(dens - 1.0)) / volume
    vort = vorticity(psi, links)
    mid = vort.total[2].shape[2] // 2
    v3 = vort.total[2][:, :, mid]
    per_area = float(np.mean(v3))
    flux_cell = kappa * H * grid.side ** 2 / TWO_PI
    return CorollaryReport(float(l1), float(mean), per_area, flux_cell)
