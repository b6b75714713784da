"""Gradient-descent minimisation of the discrete energies.

The optimiser is steepest descent in the quadrature-weighted metric with a
two-point (Barzilai-Borwein) step and step halving whenever the energy would
increase, so accepted iterates have non-increasing energy.  Restarts from
random phase fields guard against vortex-number local minima; the best run
is reported.

Every run is a deterministic sequence of array operations, so results do not
depend on whether restarts execute serially or in worker processes.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.fft import dctn, fftn, idctn, ifftn

from .energy import (EnergyBreakdown, GForm, GL2DParams, GL3DParams, GLOperator,
                     PlanarForm)
from .grids import (ComplexField, MagneticPeriodic, Natural, background_links,
                    cube_grid, fixed_sum, square_grid)
from .periodic import TWO_PI, extended_values, quantize_flux
from .scaling import lift_2d_to_3d
from .vortex_lattice import VortexLatticeConfig, choose_N, lattice_field

SEED_STRIDE = 1


class ResolutionError(ValueError):
    """The grid does not resolve the core or the intervortex distance."""


# -- initial guesses -----------------------------------------------------------

@dataclass(frozen=True)
class Uniform1:
    def token(self) -> str:
        return "uniform1"


@dataclass(frozen=True)
class RandomPhase:
    seed: int = 0

    def token(self) -> str:
        return f"random_phase({self.seed})"


@dataclass(frozen=True)
class VortexLattice:
    def token(self) -> str:
        return "vortex_lattice"


@dataclass(frozen=True)
class InitField:
    field: ComplexField = field(repr=False)
    label: str = "field"

    def token(self) -> str:
        return self.label


@dataclass(frozen=True)
class MinimizeOptions:
    max_iter: int = 20000
    tol_grad: float = 1e-6
    tol_energy: float = 1e-12
    step_rule: str = "adaptive"
    init: object = None  # None: vortex lattice when admissible, else random phase
    restarts: int = 3
    seed: int = 0
    jobs: int = 1
    stall_window: int = 10
    metric: str = "sobolev"

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not (self.tol_grad > 0 and self.tol_energy > 0):
            raise ValueError("tolerances must be positive")
        if self.step_rule not in ("adaptive", "fixed"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.metric not in ("sobolev", "l2"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    def as_dict(self) -> dict:
        init = self.init.token() if self.init is not None else "auto"
        return {"max_iter": self.max_iter, "tol_grad": self.tol_grad, "tol_energy": self.tol_energy,
                "step_rule": self.step_rule, "metric": self.metric, "init": init, "restarts": self.restarts,
                "seed": self.seed}


@dataclass(frozen=True)
class RunRecord:
    index: int
    seed: int
    init: str
    total: float
    iterations: int
    converged: bool
    grad_norm: float
    stop: str
    max_modulus: float = 0.0
    residual: float = 0.0


@dataclass(frozen=True)
class MinimizeResult:
    field: ComplexField
    energy: EnergyBreakdown
    iterations: int
    converged: bool
    grad_norm: float
    best_of: int
    seed: int
    residual: float
    max_modulus: float
    runs: tuple = ()
    flux: float = 0.0

    def as_dict(self) -> dict:
        return {"energy": {"kinetic": self.energy.kinetic, "potential": self.energy.potential,
                           "total": self.energy.total},
                "iterations": self.iterations, "converged": self.converged,
                "grad_norm": self.grad_norm, "best_of": self.best_of, "seed": self.seed,
                "residual": self.residual, "max_modulus": self.max_modulus, "flux": self.flux,
                "runs": [r.__dict__ for r in self.runs]}


# -- the descent loop ------------------------------------------------------------

@dataclass
class Descent:
    values: np.ndarray
    energy: EnergyBreakdown
    iterations: int
    converged: bool
    grad_norm: float
    stop: str
    history: list = field(default_factory=list)


def _dot(a: np.ndarray, b: np.ndarray) -> float:
    return fixed_sum(a.real * b.real + a.imag * b.imag)


class SobolevMetric:
    """Shifted-Laplacian metric ``P = W ((2k/s^2) L + tau)``.

    ``W`` holds the site quadrature volumes and ``L`` is the unit 5/7-point
    Laplacian with periodic (FFT) or mirror (DCT-I) boundary handling, which
    matches the weighted edge sums of the kinetic term.  ``tau`` is the scale
    of the potential Hessian.  Preconditioning removes the grid stiffness, so
    the step count no longer grows with the resolution.
    """

    def __init__(self, op: GLOperator):
        grid = op.grid
        self.periodic = grid.periodic
        self.W = op.site_w * grid.cell_volume
        n = grid.n
        if self.periodic:
            lam1 = 2.0 - 2.0 * np.cos(TWO_PI * np.arange(n) / n)
        else:
            lam1 = 2.0 - 2.0 * np.cos(np.pi * np.arange(n) / (n - 1))
        lam = 0.0
        for d in range(grid.dim):
            shape = [1] * grid.dim
            shape[d] = n
            lam = lam + lam1.reshape(shape)
        tau = 4.0 * op.g + 1e-300
        self.symbol = 2.0 * op.k / grid.spacing ** 2 * lam + tau

    def solve(self, g: np.ndarray) -> np.ndarray:
        r = g / self.W
        if self.periodic:
            return ifftn(fftn(r) / self.symbol)
        return idctn(dctn(r, type=1) / self.symbol, type=1)


class EuclideanMetric:
    """Plain quadrature-weighted metric ``P = W`` (steepest descent in L^2)."""

    def __init__(self, op: GLOperator):
        self.W = op.site_w * op.grid.cell_volume
        self.alpha0 = op.grid.spacing ** 2 / (4.0 * op.grid.dim * op.k + 1e-300)

    def solve(self, g: np.ndarray) -> np.ndarray:
        return self.alpha0 * g / self.W


def descend(op: GLOperator, u0: np.ndarray, opts: MinimizeOptions, record: bool = False) -> Descent:
    """Monotone two-point-step preconditioned gradient descent from ``u0``.

    The search direction is ``-P^{-1} g`` in the chosen metric; the two-point
    step is ``<s, y> / <y, P^{-1} y>`` and is halved until the energy does not
    increase.  Convergence: ``max |g_x| / w_x <= tol_grad`` where ``w_x`` is
    the relative quadrature weight of site ``x`` (1 in the interior), which
    bounds the plain gradient max-norm by the same tolerance.  The run also
    stops, without being marked converged, when the relative energy decrease
    over ``stall_window`` iterations falls below ``tol_energy``.
    """
    w = op.site_w
    metric = SobolevMetric(op) if opts.metric == "sobolev" else EuclideanMetric(op)
    u = np.array(u0, dtype=complex)
    E, g = op.energy_and_gradient(u)
    p = metric.solve(g)
    alpha = 1.0
    hist = [E.total]
    stop = "max_iter"
    it = 0
    for it in range(1, opts.max_iter + 1):
        gn = float(np.max(np.abs(g) / w))
        if gn <= opts.tol_grad:
            stop = "tol_grad"
            it -= 1
            break
        step = alpha
        while True:
            trial = u - step * p
            E_new, g_new = op.energy_and_gradient(trial)
            if E_new.total <= E.total:
                break
            step *= 0.5
            if step < 1e-14:
                break
        if E_new.total > E.total:
            stop = "line_search"
            it -= 1
            break
        p_new = metric.solve(g_new)
        if opts.step_rule == "adaptive":
            s = trial - u
            sy = _dot(s, g_new - g)
            yz = _dot(g_new - g, p_new - p)
            alpha = sy / yz if (sy > 0 and yz > 0) else 2.0 * step
        else:
            alpha = 1.0
        u, E, g, p = trial, E_new, g_new, p_new
        hist.append(E.total)
        if len(hist) > opts.stall_window:
            old = hist[-1 - opts.stall_window]
            if old - E.total <= opts.tol_energy * max(abs(E.total), 1e-300):
                stop = "stalled"
                break
    gn = float(np.max(np.abs(g) / w))
    return Descent(u, E, it, gn <= opts.tol_grad, float(np.max(np.abs(g))), stop,
                   hist if record else [])


# -- problem setup ------------------------------------------------------------

@dataclass(frozen=True)
class Problem:
    """Grid, boundary condition, links and form of one minimisation problem."""

    grid: object
    bc: object
    coupling: float
    form: object
    eps: float  # core length used for lattice initial guesses (2D units)

    def operator(self) -> GLOperator:
        links = background_links(self.grid, self.coupling)
        return GLOperator(self.grid, links, self.form.kinetic_coef, self.form.potential_coef, self.bc)


def _resolved(spacing: float, core: float, flux_density: float, what: str):
    limit = core / 4.0
    if flux_density > 0:
        limit = min(limit, math.sqrt(TWO_PI / flux_density) / 4.0)
    if spacing > limit * (1 + 1e-12):
        raise ResolutionError(
            f"{what}: spacing {spacing:.6g} exceeds {limit:.6g} (a quarter of the core length "
            f"or of the intervortex distance)")


def _bc_kind(bc) -> str:
    if isinstance(bc, str):
        if bc not in ("natural", "periodic"):
            raise ValueError(f"unknown boundary condition {bc!r}")
        return bc
    return "periodic" if isinstance(bc, MagneticPeriodic) else "natural"


def problem_2d(params: GL2DParams, bc, grid_n: int) -> Problem:
    kind = _bc_kind(bc)
    periodic = kind == "periodic"
    h = quantize_flux(params.h_ex) if periodic else params.h_ex
    grid = square_grid(grid_n, periodic=periodic)
    _resolved(grid.spacing, params.eps, h, "minimize_2d")
    return Problem(grid, MagneticPeriodic(h) if periodic else Natural(), h, PlanarForm(h, params.eps), params.eps)


def problem_3d(params: GL3DParams, bc, grid_n: int) -> Problem:
    kind = _bc_kind(bc)
    periodic = kind == "periodic"
    R = params.R
    if periodic:
        R = math.sqrt(quantize_flux(R * R))
        if R == 0:
            raise ValueError("periodic cube needs R^2 >= pi so that one flux quantum fits")
    grid = cube_grid(grid_n, side=R, periodic=periodic)
    # in cube units the core length is sqrt(b) and the field is 1
    _resolved(grid.spacing, math.sqrt(params.b), 1.0, "minimize_3d")
    bc_obj = MagneticPeriodic(R * R) if periodic else Natural()
    return Problem(grid, bc_obj, 1.0, GForm(params.b), math.sqrt(params.b) / R)


def _random_phase(problem: Problem, seed: int, kmax: int = 4) -> np.ndarray:
    """Smooth random complex field with random phase, modulus at most 1.

    A random Fourier series with wave numbers ``|k| <= kmax`` (per unit side)
    sampled at the grid sites; the field is the same function of position on
    every grid, so its content does not depend on the resolution.
    """
    grid = problem.grid
    rng = np.random.default_rng(seed)
    ks = [k for k in np.ndindex(*(2 * kmax + 1,) * grid.dim)]
    ks = np.array(ks) - kmax
    ks = ks[np.sum(ks * ks, axis=1) <= kmax * kmax]
    coef = rng.normal(size=len(ks)) + 1j * rng.normal(size=len(ks))
    x = grid.coords()
    f = np.zeros(grid.shape, dtype=complex)
    for c, k in zip(coef, ks):
        arg = sum(TWO_PI * k[d] * x[d] / grid.side for d in range(grid.dim))
        f = f + c * np.exp(1j * arg)
    return f / np.max(np.abs(f))


def _lattice_values(problem: Problem) -> np.ndarray:
    grid = problem.grid
    if not isinstance(problem.bc, MagneticPeriodic):
        raise ValueError("the vortex-lattice initial guess needs a periodic cell")
    h = problem.bc.h_ex
    N = choose_N(h)
    if not math.isclose(h, TWO_PI * N * N, rel_tol=1e-12):
        raise ValueError(f"flux {h} is not 2 pi N^2; the square lattice does not fit")
    eps = min(problem.eps, 0.49 / N)
    u2 = lattice_field(VortexLatticeConfig(h, eps, grid.n))
    if grid.dim == 2:
        return u2.values
    return lift_2d_to_3d(u2, grid.side).values


def lattice_admissible(problem: Problem) -> bool:
    if not isinstance(problem.bc, MagneticPeriodic) or problem.bc.h_ex < TWO_PI * (1 - 1e-12):
        return False
    h = problem.bc.h_ex
    N = int(math.floor(math.sqrt(h / TWO_PI) + 1e-12))
    return math.isclose(h, TWO_PI * N * N, rel_tol=1e-12) and problem.grid.n % (2 * N) == 0


def _same_bc(a, b) -> bool:
    # fluxes built as R*R and as 2 pi q may differ in the last bits
    if isinstance(a, MagneticPeriodic) and isinstance(b, MagneticPeriodic):
        return math.isclose(a.h_ex, b.h_ex, rel_tol=1e-12)
    return a == b


def initial_values(problem: Problem, init, seed: int) -> np.ndarray:
    if init is None:
        init = VortexLattice() if lattice_admissible(problem) else RandomPhase(seed)
    if isinstance(init, Uniform1):
        return np.ones(problem.grid.shape, dtype=complex)
    if isinstance(init, RandomPhase):
        return _random_phase(problem, init.seed)
    if isinstance(init, VortexLattice):
        return _lattice_values(problem)
    if isinstance(init, InitField):
        f = init.field
        if f.grid != problem.grid or not _same_bc(f.bc, problem.bc):
            raise ValueError("initial field lives on a different grid or boundary condition")
        return np.array(f.values)
    raise TypeError(f"unknown initial guess {init!r}")


def _init_for_restart(opts: MinimizeOptions, k: int):
    seed = opts.seed + SEED_STRIDE * k
    if k == 0:
        return opts.init, seed
    return RandomPhase(seed), seed


def _run_one(problem: Problem, opts: MinimizeOptions, k: int):
    init, seed = _init_for_restart(opts, k)
    if init is None and not lattice_admissible(problem):
        init = RandomPhase(seed)
    label = init.token() if init is not None else "vortex_lattice"
    u0 = initial_values(problem, init, seed)
    op = problem.operator()
    d = descend(op, u0, opts)
    res = float(np.max(np.abs(op.residual(d.values))))
    rec = RunRecord(k, seed, label, d.energy.total, d.iterations, d.converged, d.grad_norm, d.stop,
                    float(np.max(np.abs(d.values))), res)
    return rec, d


def _solve(problem: Problem, opts: MinimizeOptions) -> MinimizeResult:
    ks = range(opts.restarts)
    if opts.jobs > 1 and opts.restarts > 1:
        with ProcessPoolExecutor(max_workers=min(opts.jobs, opts.restarts)) as pool:
            outs = list(pool.map(_run_one, [problem] * opts.restarts, [opts] * opts.restarts, ks))
    else:
        outs = [_run_one(problem, opts, k) for k in ks]
    records = tuple(r for r, _ in outs)
    best = min(range(len(outs)), key=lambda i: (outs[i][0].total, outs[i][0].seed))
    rec, d = outs[best]
    u = ComplexField(problem.grid, d.values, problem.bc)
    return MinimizeResult(u, d.energy, d.iterations, d.converged, d.grad_norm, rec.index, rec.seed,
                          rec.residual, rec.max_modulus, records, problem.coupling)


def minimize_2d(params: GL2DParams, bc, grid_n: int, opts: MinimizeOptions | None = None) -> MinimizeResult:
    """Best local minimiser of the planar energy over the given restarts.

    ``bc`` is ``"natural"`` or ``"periodic"`` (or a boundary-condition
    object).  Periodic runs use the flux-quantised ``h_ex``, reported as
    ``result.flux``.
    """
    return _solve(problem_2d(params, bc, grid_n), opts or MinimizeOptions())


def minimize_3d(params: GL3DParams, grid_n: int, opts: MinimizeOptions | None = None,
                bc="natural") -> MinimizeResult:
    """Best local minimiser of ``G`` on ``Q_R`` (``R`` snapped so ``R^2`` is quantised if periodic)."""
    return _solve(problem_3d(params, bc, grid_n), opts or MinimizeOptions(init=Uniform1()))


# -- matched grids ---------------------------------------------------------------

def restrict_to_natural(u: ComplexField) -> ComplexField:
    """Restriction of a magnetic-periodic field to the closed unit square.

    The periodic grid (``n`` cell-centred sites) and the natural grid
    (``n + 1`` corner sites) share the spacing ``1/n``; the natural sites are
    the periodic ones shifted by ``c = (-s/2, -s/2)``.  Extended values are
    relabelled onto the natural grid and multiplied by the gauge factor that
    absorbs the constant ``A0(c)`` difference between the two link sets, so
    the natural energy of the result equals the periodic energy of ``u``.
    """
    if not isinstance(u.bc, MagneticPeriodic) or u.grid.dim != 2:
        raise ValueError("restriction expects a 2D magnetic-periodic field")
    n = u.grid.n
    h = u.bc.h_ex
    s = u.grid.spacing
    idx = np.indices((n + 1, n + 1))
    vals = extended_values(u, (idx[0], idx[1]))
    nat = square_grid(n + 1)
    x = nat.coords()
    # periodic links sample A0 at y + d, d = (s/2, s/2): theta_p = theta_q + h s A0(d).e
    chi = h * (0.25 * s * x[0] - 0.25 * s * x[1])
    return ComplexField(nat, np.exp(1j * chi) * vals, Natural())


@dataclass(frozen=True)
class RefineReport:
    grids: tuple
    totals: tuple
    proxies: tuple
    results: tuple = field(repr=False, default=())

    @property
    def final(self) -> float:
        return self.totals[-1]

    @property
    def proxy(self) -> float:
        return self.proxies[-1]

    @property
    def proxies_decrease(self) -> bool:
        return all(b <= a for a, b in zip(self.proxies, self.proxies[1:]))


def refine_estimate(estimator: str, params, grids, opts: MinimizeOptions | None = None) -> RefineReport:
    """Run an estimator (``m0``, ``mp`` or ``M0``) along a grid schedule."""
    grids = tuple(int(n) for n in grids)
    if len(grids) < 2:
        raise ValueError("refinement needs at least two grids")
    results = []
    for n in grids:
        if estimator == "m0":
            results.append(minimize_2d(params, "natural", n, opts))
        elif estimator == "mp":
            results.append(minimize_2d(params, "periodic", n, opts))
        elif estimator == "M0":
            results.append(minimize_3d(params, n, opts))
        else:
            raise ValueError(f"unknown estimator {estimator!r}")
    totals = tuple(r.energy.total for r in results)
    proxies = tuple(abs(b - a) for a, b in zip(totals, totals[1:]))
    return RefineReport(grids, totals, proxies, tuple(results))
