"""``perron-lab`` command line front end.

Exit codes: 0 all assertions pass, 2 assertion failure, 3 solver failure,
4 configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .capacity import PsiConstructionError, estimate_capacity
from .config import ConfigError, ExperimentConfig, make_data
from .dirichlet import SolverError, solve_dirichlet
from .experiments import ExperimentResult, run_experiment, write_outputs
from .mesh import build_mesh, rectangle_mesh
from .obstacle import InfeasibleObstacle, ObstacleSpec, solve_obstacle
from .oracle import brute_force_obstacle, eval_closed_form, ClosedForm, walk_on_spheres
from .parallel import thread_count
from .perron import perron_sandwich

EXIT_OK, EXIT_ASSERT, EXIT_SOLVER, EXIT_CONFIG = 0, 2, 3, 4

log = logging.getLogger("perron_lab")


def _mesh(cfg):
    return build_mesh(cfg.domain_descriptor(), cfg.mesh_levels[0])


def _node_rows(mesh, **fields):
    rows = []
    for i, (x, y) in enumerate(mesh.nodes):
        r = {"node_id": i, "x": float(x), "y": float(y)}
        for k, v in fields.items():
            r[k] = v[i].item() if hasattr(v[i], "item") else v[i]
        rows.append(r)
    return rows


def cmd_solve(cfg, res):
    m = _mesh(cfg)
    rep = solve_dirichlet(m, cfg.operator_spec(), cfg.boundary_data(), cfg.tol)
    res.tables["solve"] = _node_rows(m, u=rep.solution)
    res.notes.append(f"iterations={rep.iterations} residual={rep.final_residual_norm:.3e} "
                     f"energy={rep.energy_value!r}")
    res.check("converged", "dirichlet: residual <= tol", True)


def _read_nodal_csv(path, n):
    vals = np.full(n, np.nan)
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            v = row.get("psi", row.get("value"))
            vals[int(row["node_id"])] = -np.inf if v in ("-inf", "") else float(v)
    if np.any(np.isnan(vals)):
        raise ConfigError("obstacle CSV does not cover every node")
    return vals


def cmd_obstacle(cfg, res):
    m = _mesh(cfg)
    ob = cfg.options.get("obstacle", {"id": "bump"})
    if "csv" in ob:
        psi = _read_nodal_csv(ob["csv"], m.n_nodes)
    else:
        psi = m.interpolate(make_data(ob))
    f = m.interpolate(cfg.boundary_data())
    rep = solve_obstacle(m, cfg.operator_spec(), ObstacleSpec(psi, f), cfg.tol)
    res.tables["obstacle"] = _node_rows(m, u=rep.solution, active=rep.active.astype(int))
    res.check("kkt", "obstacle: complementarity", rep.kkt_violation <= 10 * (cfg.tol or 1e-6),
              f"violation {rep.kkt_violation:.3e}")


def cmd_capacity(cfg, res):
    spec = cfg.operator_spec()
    rows = []
    sets = cfg.options.get("sets", [{"id": "point", "points": [[0.0, 0.0]]}])
    for s in sets:
        side = float(s.get("box_side", 4.0))
        c = np.asarray(s.get("center", [0.0, 0.0]), dtype=float)
        for h in cfg.mesh_levels:
            n = int(round(side / h))
            box = rectangle_mesh(c[0] - side / 2, c[1] - side / 2, c[0] + side / 2, c[1] + side / 2, n, n)
            pts = np.asarray(s["points"], dtype=float)
            est = estimate_capacity(box, spec, box.find_nodes(pts), cfg.tol)
            rows.append({"set_id": s["id"], "h": h, "box_side": side, "value": est.value})
    res.tables["capacity"] = rows


def cmd_perron(cfg, res):
    spec = cfg.operator_spec()
    pert = cfg.perturbation_spec()
    rows = []
    for lvl, h in enumerate(cfg.mesh_levels):
        m = build_mesh(cfg.domain_descriptor(), h)
        rep = perron_sandwich(m, spec, cfg.boundary_data(), pert, cfg.K, cfg.tol)
        rows += rep.rows(lvl)
        res.check(f"sandwich level {lvl}", "perron: l_j <= Hf <= u_j, u_j nonincreasing", rep.ok,
                  "; ".join(rep.violations))
    res.tables["perron"] = rows


def cmd_oracle(cfg, res, which):
    if which == "closed-form":
        form = ClosedForm.from_dict(cfg.options["form"])
        pts = np.asarray(cfg.options["points"], dtype=float)
        res.tables["closed_form"] = [{"x": float(x), "y": float(y), "value": float(eval_closed_form(form, [x, y]))}
                                     for x, y in pts]
    elif which == "wos":
        dom = cfg.domain_descriptor()
        f = cfg.boundary_data()
        n = int(cfg.options.get("samples", 100_000))
        rows = []
        for x, y in cfg.options["points"]:
            est, se = walk_on_spheres(dom, f, [x, y], n, cfg.seed)
            rows.append({"x": float(x), "y": float(y), "estimate": est, "stderr": se})
        res.tables["wos"] = rows
    elif which == "bf-obstacle":
        m = _mesh(cfg)
        psi = m.interpolate(make_data(cfg.options.get("obstacle", {"id": "bump"})))
        u = brute_force_obstacle(m, psi, m.interpolate(cfg.boundary_data()))
        res.tables["bf_obstacle"] = _node_rows(m, u=u)
    else:
        raise ConfigError(f"unknown oracle {which!r}")


def build_parser():
    ap = argparse.ArgumentParser(prog="perron-lab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("solve", "obstacle", "capacity", "perron", "experiment"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
    p = sub.add_parser("oracle")
    p.add_argument("which", choices=["wos", "closed-form", "bf-obstacle"])
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        thread_count()
        cfg = ExperimentConfig.load(args.config)
        cfg.validate(need_experiment=args.command == "experiment")
    except (ConfigError, ValueError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg.out)
    if args.command == "experiment":
        try:
            res = run_experiment(cfg, out)
        except (ConfigError, KeyError) as err:
            print(f"config error: {err}", file=sys.stderr)
            return EXIT_CONFIG
        except (SolverError, PsiConstructionError, InfeasibleObstacle, ArithmeticError) as err:
            print(f"solver failure: {err}", file=sys.stderr)
            return EXIT_SOLVER
    else:
        res = ExperimentResult(args.command)
        handler = {"solve": cmd_solve, "obstacle": cmd_obstacle, "capacity": cmd_capacity,
                   "perron": cmd_perron}.get(args.command)
        try:
            if handler is None:
                cmd_oracle(cfg, res, args.which)
            else:
                handler(cfg, res)
        except (ConfigError, KeyError, TypeError) as err:
            print(f"config error: {err}", file=sys.stderr)
            return EXIT_CONFIG
        except (SolverError, PsiConstructionError, InfeasibleObstacle) as err:
            write_outputs(res, out, cfg, status="solver-failure")
            print(f"solver failure: {err}", file=sys.stderr)
            return EXIT_SOLVER
        except ValueError as err:
            print(f"config error: {err}", file=sys.stderr)
            return EXIT_CONFIG
        write_outputs(res, out, cfg)
    for a in res.assertions:
        print(f"{'PASS' if a.passed else 'FAIL'}  {a.name}  [{a.invariant}]  {a.detail}")
    return EXIT_OK if res.passed else EXIT_ASSERT


if __name__ == "__main__":
    sys.exit(main())
