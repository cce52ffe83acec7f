"""Command line drivers, run configuration and file output.

Subcommands::

    nematic-sav run --config run.json [--scheme S] [--dt DT] [--t-final T] [--out DIR]
    nematic-sav mms --mode temporal|spatial --scheme S --levels N [--out DIR]
    nematic-sav cauchy --levels N --scheme S [--out DIR]
    nematic-sav cpu-compare --config run.json [--out DIR]

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 invariant violation (including an aborted energy audit).
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .energy import CSV_COLUMNS
from .errors import ConfigError, ConvergenceError, FirstStepError, InvariantViolation, NematicError
from .mesh import build_rect_mesh
from .problems import DEFAULTS, initial_fields
from .simulation import min_director_norm, n_steps, simulate
from .space import evaluate_points
from .state import SCHEMES, Discretization, SimParams
from .sparse import DEFAULT_MAXIT, DEFAULT_TOL

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EXAMPLES = tuple(DEFAULTS)
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INVARIANT = 0, 2, 3, 4


# --------------------------------------------------------------------- config

@dataclass
class RunConfig:
    """One simulation run.  Missing physics entries take the example defaults."""

    example: str = "smooth"
    scheme: str = "pcsav"
    physics: dict = field(default_factory=dict)
    time: dict = field(default_factory=dict)
    mesh: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    audit: str = "warn"
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version!r}")
        if self.example not in EXAMPLES:
            raise ConfigError(f"example must be one of {EXAMPLES}, got {self.example!r}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.audit not in ("warn", "abort", "off"):
            raise ConfigError(f"audit must be warn, abort or off, got {self.audit!r}")
        ex = DEFAULTS[self.example]
        phys = {"nu": ex["nu"], "lambda": ex["lam"], "gamma": ex["gamma"], "epsilon": ex["eps"], "T": ex["T"]}
        phys.update(self.physics)
        self.physics = phys
        tm = {"dt": 0.001, "t_final": 0.1}
        tm.update(self.time)
        self.time = tm
        if self.physics["T"] is None:
            self.physics["T"] = self.time["t_final"]
        ms = {"nx": 32, "ny": None, "domain": list(ex["domain"])}
        ms.update(self.mesh)
        if ms["ny"] is None:
            ms["ny"] = ms["nx"]
        self.mesh = ms
        sv = {"tol": DEFAULT_TOL, "maxit": DEFAULT_MAXIT}
        sv.update(self.solver)
        self.solver = sv
        out = {"dir": "out", "field_stride": 0, "energy_stride": 1}
        out.update(self.output)
        self.output = out
        self._validate()

    def _validate(self):
        for key in ("nu", "lambda", "gamma", "epsilon", "T"):
            _positive(self.physics[key], f"physics.{key}")
        _positive(self.time["dt"], "time.dt")
        _positive(self.time["t_final"], "time.t_final")
        if not self.time["dt"] < self.time["t_final"] + 1e-15:
            raise ConfigError("time.dt must not exceed time.t_final")
        n_steps(self.time["t_final"], self.time["dt"])
        for key in ("nx", "ny"):
            if not isinstance(self.mesh[key], int) or self.mesh[key] < 1:
                raise ConfigError(f"mesh.{key} must be a positive integer")
        if len(self.mesh["domain"]) != 4:
            raise ConfigError("mesh.domain must be [x0, x1, y0, y1]")
        for key in ("field_stride", "energy_stride"):
            if not isinstance(self.output[key], int) or self.output[key] < 0:
                raise ConfigError(f"output.{key} must be a non-negative integer")

    def params(self):
        ph = self.physics
        forcing = None
        if self.example == "mms":
            from .mms import forcing as mms_forcing

            coeffs = dict(nu=ph["nu"], lam=ph["lambda"], gamma=ph["gamma"])
            forcing = lambda t, x, y: mms_forcing(t, x, y, coeffs)  # noqa: E731
        return SimParams(nu=ph["nu"], lam=ph["lambda"], gamma=ph["gamma"], eps=ph["epsilon"],
                         dt=self.time["dt"], T=ph["T"], scheme=self.scheme,
                         tol=self.solver["tol"], maxit=self.solver["maxit"], forcing=forcing)

    def discretization(self):
        mesh = build_rect_mesh(tuple(self.mesh["domain"]), self.mesh["nx"], self.mesh["ny"])
        return Discretization(mesh, tol=self.solver["tol"], maxit=self.solver["maxit"])

    def as_dict(self):
        return asdict(self)


def _positive(v, name):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v <= 0:
        raise ConfigError(f"{name} must be a positive number, got {v!r}")


def config_from_dict(data):
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    known = set(RunConfig.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    return RunConfig(**copy.deepcopy(data))


def load_config(path):
    try:
        with open(path, encoding="utf-8") as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return config_from_dict(data)


# --------------------------------------------------------------------- output

def atomic_write(path, body, mode="w"):
    """Write ``path`` through ``body(file)`` into a temporary file, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as f:
            body(f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_energy_csv(path, records):
    def body(f):
        w = csv.writer(f)
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow([repr(v) if isinstance(v, float) else v for v in r.as_row()])
    atomic_write(path, body)


def write_json(path, data):
    atomic_write(path, lambda f: f.write(json.dumps(data, indent=2, sort_keys=True) + "\n"))


def nodal_velocity(state):
    """P2-nodal velocity ``u* - ∇psi`` with ``∇psi`` averaged over the cells around each node."""
    disc = state.disc
    V = disc.V
    gpsi = disc.p1_grads(state.psi)[:, 0, :]  # constant per cell: (ne, 2)
    cells = V.cell_dofs
    acc = np.zeros((disc.n, 2))
    cnt = np.zeros(disc.n)
    for j in range(cells.shape[1]):
        np.add.at(acc, cells[:, j], gpsi)
        np.add.at(cnt, cells[:, j], 1.0)
    return state.u - (acc / cnt[:, None]).T


def nodal_pressure(state):
    """Pressure on the P2 nodes (vertices, then edge midpoints by averaging)."""
    mesh = state.disc.mesh
    p = state.p
    return np.concatenate([p, 0.5 * (p[mesh.edges[:, 0]] + p[mesh.edges[:, 1]])])


def vtk_text(state):
    """Legacy ASCII VTK of one state; P2 cells are split into four linear triangles."""
    disc = state.disc
    V = disc.V
    pts = V.node_coords
    c = V.cell_dofs  # vertices 0..2, edge k joins vertices k, k+1 -> node 3+k
    sub = np.concatenate([
        np.stack([c[:, 0], c[:, 3], c[:, 5]], axis=1),
        np.stack([c[:, 3], c[:, 1], c[:, 4]], axis=1),
        np.stack([c[:, 5], c[:, 4], c[:, 2]], axis=1),
        np.stack([c[:, 3], c[:, 4], c[:, 5]], axis=1),
    ])
    d = state.d
    u = nodal_velocity(state)
    p = nodal_pressure(state)
    out = ["# vtk DataFile Version 3.0", f"nematic director t={state.t!r}", "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {len(pts)} double"]
    out += [f"{x!r} {y!r} 0.0" for x, y in pts]
    out.append(f"CELLS {len(sub)} {4 * len(sub)}")
    out += [f"3 {a} {b} {e}" for a, b, e in sub]
    out.append(f"CELL_TYPES {len(sub)}")
    out += ["5"] * len(sub)
    out.append(f"POINT_DATA {len(pts)}")
    for name, vec in (("d", d), ("u", u)):
        out.append(f"VECTORS {name} double")
        out += [f"{a!r} {b!r} 0.0" for a, b in vec.T]
    for name, sc in (("p", p), ("abs_d", np.hypot(d[0], d[1])), ("abs_u", np.hypot(u[0], u[1]))):
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += [repr(float(v)) for v in sc]
    return "\n".join(out) + "\n"


def write_vtk(path, state):
    text = vtk_text(state)
    atomic_write(path, lambda f: f.write(text))


# ----------------------------------------------------------------------- run

def run(config, out_dir=None):
    """Run one configured simulation and write its artifacts; returns the summary."""
    out = out_dir or config.output["dir"]
    params = config.params()
    disc = config.discretization()
    d0, u0 = initial_fields(config.example, disc)
    stride = config.output["field_stride"]

    def on_step(state):
        if stride and state.n % stride == 0:
            write_vtk(os.path.join(out, f"fields_{state.n:06d}.vtk"), state)

    result = simulate(disc, d0, u0, params, config.time["t_final"], audit=config.audit, on_step=on_step)
    es = config.output["energy_stride"] or 1
    rows = [r for r in result.records if r.step % es == 0 or r is result.records[-1]]
    write_energy_csv(os.path.join(out, "energy.csv"), rows)
    dmin, where = min_director_norm(result.state)
    last = result.records[-1]
    summary = {
        "example": config.example,
        "scheme": config.scheme,
        "steps": result.state.n,
        "t_final": result.state.t,
        "final_energy": {k: getattr(last, k) for k in ("W_kin", "W_ela", "W_pen", "W", "W_tilde", "W_star")},
        "s": last.s,
        "min_director_norm": dmin,
        "min_director_node": [float(where[0]), float(where[1])],
        "audit_failures": result.audit_failures,
        "wall_clock_seconds": result.seconds,
    }
    if config.example == "mms":
        from .mms import error_norms

        summary["errors"] = asdict(error_norms(result.state, result.state.t))
    write_json(os.path.join(out, "summary.json"), summary)
    write_json(os.path.join(out, "config.json"), config.as_dict())
    logger.info("run finished: %d steps in %.2fs, min |d| = %.4f", result.state.n, result.seconds, dmin)
    return summary, result


# -------------------------------------------------------------------- cauchy

CAUCHY_T = 0.1


def cauchy_mesh_cells(level):
    """Cells per side of level ``l`` (diagonal ``h_l = 2√2 / (5·2^(l-1))`` on [-1, 1]²)."""
    return 5 * 2 ** (level - 1)


def cauchy_dt(level):
    """``Δt = 0.005 h_l / (2√2)``."""
    return 0.005 / cauchy_mesh_cells(level)


def _cauchy_run(level, scheme, t_final, eps=None):
    ex = DEFAULTS["smooth"]
    nc = cauchy_mesh_cells(level)
    cfg = RunConfig(example="smooth", scheme=scheme,
                    physics={} if eps is None else {"epsilon": eps},
                    time={"dt": cauchy_dt(level), "t_final": t_final},
                    mesh={"nx": nc, "ny": nc, "domain": list(ex["domain"])}, audit="off")
    disc = cfg.discretization()
    d0, u0 = initial_fields("smooth", disc)
    res = simulate(disc, d0, u0, cfg.params(), t_final, audit="off", energy=False)
    return res.state


def cauchy_difference(coarse, fine):
    """``(‖∇d_f - ∇d_c‖, ‖∇u_f - ∇u_c‖, ‖p_f - p_c‖)`` on the fine quadrature points.

    The coarse solution is evaluated as a finite element function at the
    fine points; pressures are compared after removing their means.
    """
    fd = fine.disc
    pts = fd.xq.reshape(-1, 2)
    shape = fd.xq.shape[:2]
    cd = coarse.disc
    _, gdc = evaluate_points(cd.V, coarse.d, pts)
    _, guc = evaluate_points(cd.V, coarse.u, pts)
    pc, _ = evaluate_points(cd.Q, coarse.p, pts)
    gdc = gdc.reshape(2, *shape, 2)
    guc = guc.reshape(2, *shape, 2)
    pc = pc.reshape(shape)
    pf = fd.p1_values(fine.p)
    ep = (pf - fd.integrate(pf) / fd.area) - (pc - fd.integrate(pc) / fd.area)
    return (math.sqrt(fd.integrate(np.sum((fd.grads(fine.d) - gdc) ** 2, axis=(0, -1)))),
            math.sqrt(fd.integrate(np.sum((fd.grads(fine.u) - guc) ** 2, axis=(0, -1)))),
            math.sqrt(fd.integrate(ep**2)))


CAUCHY_COLUMNS = ["level", "h", "dt", "diff_grad_d", "rate_grad_d", "diff_grad_u", "rate_grad_u",
                  "diff_p", "rate_p"]


def cauchy_study(levels=3, scheme="pcsav", t_final=CAUCHY_T, eps=None):
    """Cauchy differences between levels ``l`` and ``l+1`` for ``l = 1..levels``.

    Solves on ``levels + 1`` nested meshes; returns a list of rows with
    :data:`CAUCHY_COLUMNS`.
    """
    if levels < 2:
        raise ConfigError("a Cauchy study needs at least 2 difference levels")
    states = []
    for lev in range(1, levels + 2):
        t0 = time.perf_counter()
        states.append(_cauchy_run(lev, scheme, t_final, eps))
        logger.info("cauchy level %d solved in %.1fs", lev, time.perf_counter() - t0)
    diffs = np.array([cauchy_difference(states[i], states[i + 1]) for i in range(levels)])
    rows = []
    for i in range(levels):
        lev = i + 1
        row = [lev, 2.0 * math.sqrt(2.0) / cauchy_mesh_cells(lev), cauchy_dt(lev)]
        for k in range(3):
            rate = float("nan") if i == 0 else math.log2(diffs[i - 1, k] / diffs[i, k])
            row += [float(diffs[i, k]), rate]
        rows.append(row)
    return rows


def write_table(path, columns, rows):
    def body(f):
        w = csv.writer(f)
        w.writerow(columns)
        w.writerows(rows)
    atomic_write(path, body)


# ---------------------------------------------------------------- cpu compare

def cpu_compare(config, out_dir=None):
    """Run both schemes on the same configuration; returns the timing report."""
    report = {}
    finals = {}
    lengths = {}
    for scheme in SCHEMES:
        cfg = copy.deepcopy(config)
        cfg.scheme = scheme
        params = cfg.params()
        disc = cfg.discretization()
        d0, u0 = initial_fields(cfg.example, disc)
        res = simulate(disc, d0, u0, params, cfg.time["t_final"], audit=cfg.audit)
        report[f"{scheme}_seconds"] = res.seconds
        finals[scheme] = res.records[-1].W_tilde
        lengths[scheme] = len(res.records)
        if out_dir:
            write_energy_csv(os.path.join(out_dir, f"energy_{scheme}.csv"), res.records)
    report["ratio"] = report["pcsav-ect_seconds"] / report["pcsav_seconds"]
    report["W_tilde"] = finals
    report["W_tilde_rel_diff"] = abs(finals["pcsav"] - finals["pcsav-ect"]) / abs(finals["pcsav"])
    report["records"] = lengths
    if out_dir:
        write_json(os.path.join(out_dir, "cpu_compare.json"), report)
    return report


# ----------------------------------------------------------------------- main

def build_parser():
    parser = argparse.ArgumentParser(prog="nematic-sav", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one configured simulation")
    p.add_argument("--config", required=True)
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--dt", type=float)
    p.add_argument("--t-final", type=float)
    p.add_argument("--nx", type=int)
    p.add_argument("--audit", choices=("warn", "abort", "off"))
    p.add_argument("--out")

    p = sub.add_parser("mms", help="manufactured-solution convergence table")
    p.add_argument("--mode", choices=("temporal", "spatial"), default="temporal")
    p.add_argument("--scheme", choices=SCHEMES, default="pcsav")
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--out", default="out")

    p = sub.add_parser("cauchy", help="Cauchy-difference study of the smooth example")
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--scheme", choices=SCHEMES, default="pcsav")
    p.add_argument("--out", default="out")

    p = sub.add_parser("cpu-compare", help="time both schemes on one configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    return parser


def _apply_overrides(config, args):
    data = config.as_dict()
    if args.scheme:
        data["scheme"] = args.scheme
    if args.dt is not None:
        data["time"]["dt"] = args.dt
    if args.t_final is not None:
        data["time"]["t_final"] = args.t_final
    if args.nx is not None:
        data["mesh"]["nx"] = data["mesh"]["ny"] = args.nx
    if args.audit:
        data["audit"] = args.audit
    return config_from_dict(data)


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            config = _apply_overrides(load_config(args.config), args)
            summary, _ = run(config, args.out)
            print(json.dumps(summary, indent=2, sort_keys=True))
        elif args.command == "mms":
            from .mms import convergence_study

            table = convergence_study(args.mode, args.scheme, args.levels)
            path = os.path.join(args.out, f"mms_{args.mode}_{args.scheme}.csv")
            table.write_csv(path)
            _print_table(table.columns, table.rows)
        elif args.command == "cauchy":
            rows = cauchy_study(args.levels, args.scheme)
            write_table(os.path.join(args.out, f"cauchy_{args.scheme}.csv"), CAUCHY_COLUMNS, rows)
            _print_table(CAUCHY_COLUMNS, rows)
        elif args.command == "cpu-compare":
            report = cpu_compare(load_config(args.config), args.out)
            print(json.dumps(report, indent=2, sort_keys=True))
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (ConvergenceError, FirstStepError) as exc:
        logger.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except InvariantViolation as exc:
        logger.error("invariant violation: %s", exc)
        return EXIT_INVARIANT
    except NematicError as exc:
        logger.error("%s", exc)
        return EXIT_SOLVER
    return EXIT_OK


def _print_table(columns, rows):
    print(",".join(columns))
    for r in rows:
        print(",".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in r))


if __name__ == "__main__":
    sys.exit(main())
