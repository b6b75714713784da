"""Command-line front end.

Every run is described by a flat configuration dictionary (flags, optionally
preloaded from a ``key = value`` file).  Result artifacts embed the config and
a SHA-256 hash of it; wall-clock data goes to a separate ``meta.json`` so the
result files are byte-identical across reruns and job counts.

Exit status: 0 success, 1 failed invariant (``verify``), 2 invalid input,
3 non-convergence (artifacts are still written), 4 output not writable.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import asymptotics, energy, grids, minimize, periodic, scaling, vortex_lattice
from .grids import format_real

EXIT_OK, EXIT_INVARIANT, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_IO = 0, 1, 2, 3, 4

# options that never change results and are kept out of the hash
_RUNTIME_KEYS = {"out", "jobs", "config", "emit_fields", "command"}


class OutputError(OSError):
    pass


# -- formatting -----------------------------------------------------------------

def _encode(obj):
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return format_real(x) if math.isfinite(x) else json.dumps(str(x))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def dumps(obj) -> str:
    """JSON with every float written to 17 significant digits."""
    return _encode(obj)


def config_hash(config: dict) -> str:
    canon = dumps({k: config[k] for k in sorted(config)})
    return hashlib.sha256(canon.encode()).hexdigest()


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment.  Keys may use ``-`` or ``_``."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}: expected 'key = value', got {raw.strip()!r}")
            k, v = (t.strip() for t in line.split("=", 1))
            out[k.replace("-", "_")] = v
    return out


# -- artifact writing -------------------------------------------------------------

class Artifacts:
    def __init__(self, out: str | None, config: dict, command: str):
        self.out = Path(out) if out else None
        self.config = config
        self.hash = config_hash(config)
        self.command = command
        if self.out is not None:
            try:
                self.out.mkdir(parents=True, exist_ok=True)
                probe = self.out / ".write_probe"
                probe.write_text("")
                probe.unlink()
            except OSError as exc:
                raise OutputError(f"cannot write to {self.out}: {exc}") from exc

    def _atomic(self, name: str, text: str):
        if self.out is None:
            return
        path = self.out / name
        tmp = path.with_name(path.name + ".tmp")
        try:
            tmp.write_text(text, encoding="utf-8")
            os.replace(tmp, path)
        except OSError as exc:
            raise OutputError(f"cannot write {path}: {exc}") from exc

    def json(self, name: str, payload: dict) -> str:
        doc = {"config_hash": self.hash, "config": self.config}
        doc.update(payload)
        text = dumps(doc) + "\n"
        self._atomic(name, text)
        return text

    def csv(self, name: str, header: list, rows: list):
        lines = [f"# config {self.hash}", ",".join(header)]
        for row in rows:
            lines.append(",".join(_csv_cell(v) for v in row))
        self._atomic(name, "\n".join(lines) + "\n")

    def text(self, name: str, body: str):
        self._atomic(name, f"# config {self.hash}\n" + body)

    def field(self, name: str, u):
        if self.out is None:
            return
        try:
            grids.write_field(self.out / name, u, comment=f"config {self.hash}")
        except OSError as exc:
            raise OutputError(str(exc)) from exc

    def meta(self, started: float, jobs: int):
        self._atomic("meta.json", dumps({"config_hash": self.hash, "command": self.command,
                                         "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
                                         "elapsed_s": time.time() - started, "jobs": jobs}) + "\n")


def _csv_cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format_real(v)
    return str(v)


# -- option helpers -----------------------------------------------------------------

def _floats(text) -> list:
    if isinstance(text, (int, float)):
        return [float(text)]
    return [float(t) for t in str(text).split(",") if t.strip()]


def _ints(text) -> list:
    if isinstance(text, int):
        return [text]
    return [int(t) for t in str(text).split(",") if t.strip()]


def _opts(cfg: dict, jobs: int) -> minimize.MinimizeOptions:
    init = {"auto": None, "uniform1": minimize.Uniform1(), "lattice": minimize.VortexLattice(),
            "random": minimize.RandomPhase(int(cfg["seed"]))}.get(cfg["init"])
    if cfg["init"] not in ("auto", "uniform1", "lattice", "random"):
        raise ValueError(f"unknown init {cfg['init']!r}")
    return minimize.MinimizeOptions(max_iter=int(cfg["max_iter"]), tol_grad=float(cfg["tol_grad"]),
                                    tol_energy=float(cfg["tol_energy"]), step_rule=cfg["step_rule"],
                                    metric=cfg["metric"], init=init, restarts=int(cfg["restarts"]),
                                    seed=int(cfg["seed"]), jobs=jobs)


def _add_minimize_flags(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--max-iter", type=int, default=20000)
    p.add_argument("--tol-grad", type=float, default=1e-6)
    p.add_argument("--tol-energy", type=float, default=1e-12)
    p.add_argument("--step-rule", choices=["adaptive", "fixed"], default="adaptive")
    p.add_argument("--metric", choices=["sobolev", "l2"], default="sobolev")
    p.add_argument("--init", choices=["auto", "uniform1", "lattice", "random"], default="auto")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="glvortex", description="Ginzburg-Landau vortex-lattice energies")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value file; flags given explicitly override it")
        p.add_argument("--out", help="output directory for artifacts")
        p.add_argument("--jobs", type=int, default=None, help="worker processes (default: $GLVORTEX_JOBS or 1)")
        p.add_argument("--emit-fields", action="store_true", help="also write field dumps")

    p = sub.add_parser("energy", help="energy of a field")
    common(p)
    p.add_argument("--dim", type=int, choices=[2, 3], default=2)
    p.add_argument("--h-ex", type=float, default=0.0)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--b", type=float, default=0.5)
    p.add_argument("--R", type=float, default=1.0)
    p.add_argument("--n", type=int, default=64)
    p.add_argument("--bc", choices=["natural", "periodic"], default="natural")
    p.add_argument("--field", help="GLFIELD dump to evaluate (default: u = 1)")

    p = sub.add_parser("minimize2d", help="minimise the planar energy")
    common(p)
    p.add_argument("--h-ex", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--bc", choices=["natural", "periodic"], default="periodic")
    _add_minimize_flags(p)

    p = sub.add_parser("minimize3d", help="minimise the cube energy G")
    common(p)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--R", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--bc", choices=["natural", "periodic"], default="natural")
    _add_minimize_flags(p)

    p = sub.add_parser("lattice", help="vortex-lattice test configuration")
    common(p)
    p.add_argument("--h-ex", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--n", type=int, required=True)

    p = sub.add_parser("schedule", help="derived scales for (kappa, H)")
    common(p)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--H", type=float, required=True)

    p = sub.add_parser("tile", help="cube tiling counts")
    common(p)
    p.add_argument("--domain", choices=["box", "ball"], default="box")
    p.add_argument("--sides", default="1,1,1")
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--ell", type=float, required=True)
    p.add_argument("--centers", action="store_true", help="write interior cube centres as CSV")

    p = sub.add_parser("fofb", help="estimate f(b) from a periodic cell")
    common(p)
    p.add_argument("--b", type=float, required=True)
    p.add_argument("--R", type=float, default=None)
    p.add_argument("--n", type=int, required=True)
    _add_minimize_flags(p)

    p = sub.add_parser("study", help="ratio-to-prediction study along a schedule")
    common(p)
    p.add_argument("--law", choices=["m0", "mp", "f", "M0", "C0"], required=True)
    p.add_argument("--h-ex", default=None)
    p.add_argument("--eps", default=None)
    p.add_argument("--b", default=None)
    p.add_argument("--R", default=None)
    p.add_argument("--kappa", default=None)
    p.add_argument("--H", default=None)
    p.add_argument("--n", default="128", help="grid size, or one per point")
    _add_minimize_flags(p)

    p = sub.add_parser("verify", help="run the exact-invariant suite")
    common(p)
    p.add_argument("--seed", type=int, default=0)
    return ap


def _file_argv(parser, command: str, path) -> list:
    """Translate a ``key = value`` file into flags for ``command``."""
    sub = _subparser(parser, command)
    actions = {a.dest: a for a in sub._actions if a.option_strings}
    argv = []
    for k, v in read_config_file(path).items():
        act = actions.get(k)
        if act is None or k in ("config", "out", "jobs"):
            raise ValueError(f"unknown config key {k!r}")
        if isinstance(act, argparse._StoreTrueAction):
            if v.lower() in ("1", "true", "yes"):
                argv.append(act.option_strings[0])
        else:
            argv += [act.option_strings[0], v]
    return argv


def _subparser(parser, name):
    for a in parser._actions:
        if isinstance(a, argparse._SubParsersAction):
            return a.choices[name]
    raise KeyError(name)


def _config(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in _RUNTIME_KEYS}


# -- subcommands ---------------------------------------------------------------------

def _cmd_energy(cfg, art, jobs):
    if cfg["field"]:
        u = grids.read_field(cfg["field"])
    elif cfg["dim"] == 2:
        g = grids.square_grid(cfg["n"], periodic=cfg["bc"] == "periodic")
        h = periodic.quantize_flux(cfg["h_ex"]) if g.periodic else cfg["h_ex"]
        bc = grids.MagneticPeriodic(h) if g.periodic else grids.Natural()
        u = grids.uniform_field(g, 1.0, bc)
    else:
        R = cfg["R"]
        if cfg["bc"] == "periodic":
            R = math.sqrt(periodic.quantize_flux(R * R))
        g = grids.cube_grid(cfg["n"], side=R, periodic=cfg["bc"] == "periodic")
        bc = grids.MagneticPeriodic(R * R) if g.periodic else grids.Natural()
        u = grids.uniform_field(g, 1.0, bc)
    if u.grid.dim == 2:
        h = u.bc.h_ex if isinstance(u.bc, grids.MagneticPeriodic) else cfg["h_ex"]
        e = energy.energy_2d(u, grids.background_links(u.grid, h), energy.GL2DParams(h, cfg["eps"]))
    else:
        e = energy.energy_3d(u, grids.background_links(u.grid, 1.0), energy.GForm(cfg["b"]))
    return art.json("energy.json", {"energy": _breakdown(e)}), EXIT_OK


def _breakdown(e) -> dict:
    return {"kinetic": e.kinetic, "potential": e.potential, "total": e.total}


def _cmd_minimize2d(cfg, art, jobs):
    res = minimize.minimize_2d(energy.GL2DParams(cfg["h_ex"], cfg["eps"]), cfg["bc"], cfg["n"], _opts(cfg, jobs))
    if art.out is not None and cfg.get("emit_fields"):
        art.field("field.txt", res.field)
    text = art.json("minimize2d.json", {"result": res.as_dict()})
    return text, EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _cmd_minimize3d(cfg, art, jobs):
    res = minimize.minimize_3d(energy.GL3DParams(cfg["b"], cfg["R"]), cfg["n"], _opts(cfg, jobs), bc=cfg["bc"])
    if art.out is not None and cfg.get("emit_fields"):
        art.field("field.txt", res.field)
    text = art.json("minimize3d.json", {"result": res.as_dict()})
    return text, EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _cmd_lattice(cfg, art, jobs):
    conf = vortex_lattice.VortexLatticeConfig(cfg["h_ex"], cfg["eps"], cfg["n"])
    lc = vortex_lattice.assemble_and_energy(conf)
    payload = {"N": conf.N, "cell_grid_n": conf.cell_grid_n, "compatible_field": conf.compatible_field,
               "energy": _breakdown(lc.energy), "cell_energy": _breakdown(lc.cell_energy),
               "upper_bound_C12": vortex_lattice.lattice_upper_bound(conf, 12.0),
               "centers": [list(c) for c in conf.centers]}
    if cfg.get("emit_fields"):
        h = lc.solution.h
        art.text("cell_h.txt", "\n".join(" ".join(format_real(v) for v in row) for row in h) + "\n")
        rows = zip(lc.rho.ravel(), lc.covariant_phase[0].ravel(), lc.covariant_phase[1].ravel())
        art.text("rho_theta.txt", "".join(f"{format_real(r)} {format_real(a)} {format_real(b)}\n"
                                           for r, a, b in rows))
    return art.json("lattice.json", payload), EXIT_OK


def _cmd_schedule(cfg, art, jobs):
    s = scaling.schedule_from_kappaH(cfg["kappa"], cfg["H"])
    return art.json("schedule.json", {"schedule": s.as_dict()}), EXIT_OK


def _cmd_tile(cfg, art, jobs):
    if cfg["domain"] == "box":
        dom = scaling.Box(tuple(_floats(cfg["sides"])))
    else:
        dom = scaling.Ball(cfg["radius"])
    t = scaling.cube_tiling(dom, cfg["ell"])
    if cfg["centers"]:
        art.csv("centers.csv", ["x1", "x2", "x3"], [list(c) for c in t.centers])
    payload = {"volume": dom.volume, "n_interior": t.n_interior, "n_meeting_boundary": t.n_meeting_boundary,
               "n_covering": t.n_covering, "interior_volume": t.n_interior * cfg["ell"] ** 3}
    return art.json("tile.json", payload), EXIT_OK


def _report_dict(r) -> dict:
    return {"law": r.law, "point": r.point, "grid": r.grid, "measured": r.measured, "predicted": r.predicted,
            "ratio": r.ratio, "converged": r.converged, "seed": r.seed, "ok": r.ok, "error": r.error,
            "flags": r.flags}


def _cmd_fofb(cfg, art, jobs):
    rep = asymptotics.f_estimate(cfg["b"], cfg["R"], cfg["n"], _opts(cfg, jobs))
    text = art.json("fofb.json", {"report": _report_dict(rep)})
    return text, EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


_STUDY_KEYS = {"m0": ("h_ex", "eps"), "mp": ("h_ex", "eps"), "f": ("b",), "M0": ("b", "R"), "C0": ("kappa", "H")}


def study_points(law: str, cfg: dict) -> list:
    keys = _STUDY_KEYS[law]
    lists = {}
    for k in keys:
        if cfg.get(k) is None:
            raise ValueError(f"study --law {law} needs --{k.replace('_', '-')}")
        lists[k] = _floats(cfg[k])
    n = max(len(v) for v in lists.values())
    for k, v in lists.items():
        if len(v) == 1:
            lists[k] = v * n
        elif len(v) != n:
            raise ValueError("parameter lists must have equal length or length 1")
    return [{k: lists[k][i] for k in keys} for i in range(n)]


def _cmd_study(cfg, art, jobs):
    law = cfg["law"]
    pts = study_points(law, cfg)
    ns = _ints(cfg["n"])
    grids_ = ns * len(pts) if len(ns) == 1 else ns
    table = asymptotics.convergence_study(law, pts, grids_, _opts(cfg, 1), jobs=jobs)
    keys = _STUDY_KEYS[law]
    rows = [[r.law] + [r.point[k] for k in keys] + [r.grid, r.measured, r.predicted, r.ratio, r.converged, r.seed]
            for r in table.reports]
    art.csv(f"study_{law}.csv", ["law", *keys, "grid", "measured", "predicted", "ratio", "converged", "seed"], rows)
    scale_key = keys[-1] if law in ("m0", "mp") else keys[0]
    art.text(f"study_{law}_ratio.txt", "".join(f"{format_real(r.point[scale_key])} {format_real(r.ratio)}\n"
                                               for r in table.reports))
    payload = {"reports": [_report_dict(r) for r in table.reports], "concordance": table.concordance,
               "final_ratio": table.final_ratio}
    text = art.json(f"study_{law}.json", payload)
    ok = all(r.converged for r in table.reports)
    return text, EXIT_OK if ok else EXIT_NOT_CONVERGED


def run_invariants(seed: int = 0) -> list:
    """Fast exact-identity checks; returns ``(name, passed, detail)`` triples."""
    rng = np.random.default_rng(seed)
    out = []

    def rnd(g):
        return rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape)

    # gauge invariance, 2D and 3D
    for g in (grids.square_grid(16), grids.cube_grid(8)):
        links = grids.background_links(g, 3.0)
        u = grids.ComplexField(g, rnd(g), grids.Natural())
        chi = rng.normal(size=g.shape)
        dchi = [np.diff(chi, axis=d) for d in range(g.dim)]
        form = energy.E0Form(1.5, 2.0)
        e1 = energy.operator_for(u, links, form).energy(u.values)
        u2 = u.with_values(u.values * np.exp(1j * chi))
        e2 = energy.operator_for(u2, links.shifted(dchi), form).energy(u2.values)
        rel = abs(e1 - e2) / e1
        out.append((f"gauge_invariance_{g.dim}d", rel <= 1e-12, rel))
    # dimensional reduction
    g = grids.square_grid(17)
    u = grids.ComplexField(g, rnd(g), grids.Natural())
    chk = scaling.check_scaling_identity(u, 0.04, 10.0)
    out.append(("scaling_identity", chk.rel_error <= 1e-12, chk.rel_error))
    # magnetic translation invariance
    h = 2 * math.pi * 4
    g = grids.square_grid(16, periodic=True)
    u = grids.ComplexField(g, rnd(g), grids.MagneticPeriodic(h))
    links = grids.background_links(g, h)
    p = energy.GL2DParams(h, 0.1)
    e1 = energy.energy_2d(u, links, p).total
    e2 = energy.energy_2d(periodic.covariant_wrap(u, (4, 4)), links, p).total
    rel = abs(e1 - e2) / e1
    out.append(("magnetic_translation", rel <= 1e-12, rel))
    # tiling
    t = scaling.cube_tiling(scaling.Box((1.0, 1.0, 1.0)), 0.25)
    out.append(("box_tiling", t.n_interior == 64, t.n_interior))
    # splitting inequality
    g = grids.cube_grid(8)
    f_links = grids.background_links(g, 2.0)
    a_links = grids.LinkPhases(g, tuple(t + 0.3 * rng.normal(size=t.shape) for t in f_links.theta), 2.0)
    sc = energy.split_inequality_check(grids.ComplexField(g, rnd(g), grids.Natural()), a_links, f_links, 0.5, 2.0)
    out.append(("split_inequality", sc.holds, sc.worst_margin))
    return out


def _cmd_verify(cfg, art, jobs):
    checks = run_invariants(cfg["seed"])
    payload = {"checks": [{"name": n, "passed": bool(ok), "detail": d} for n, ok, d in checks]}
    text = art.json("verify.json", payload)
    return text, EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_INVARIANT


_COMMANDS = {"energy": _cmd_energy, "minimize2d": _cmd_minimize2d, "minimize3d": _cmd_minimize3d,
             "lattice": _cmd_lattice, "schedule": _cmd_schedule, "tile": _cmd_tile, "fofb": _cmd_fofb,
             "study": _cmd_study, "verify": _cmd_verify}


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("GLVORTEX_JOBS", "1")))
    except ValueError:
        return 1


def _config_path(argv: list):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        path = _config_path(argv)
        if path and argv and argv[0] in _COMMANDS:
            # file values first, so explicit flags override them
            argv = [argv[0]] + _file_argv(parser, argv[0], path) + argv[1:]
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    jobs = args.jobs if args.jobs is not None else default_jobs()
    started = time.time()
    try:
        cfg = _config(args)
        cfg_run = dict(cfg, emit_fields=True) if args.emit_fields else cfg
        art = Artifacts(args.out, cfg, args.command)
        text, status = _COMMANDS[args.command](cfg_run, art, jobs)
        art.meta(started, jobs)
    except OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    sys.stdout.write(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
