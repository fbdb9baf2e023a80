"""Command line runner: ``solver <task> --config run.json [--out dir]``.

The config is a JSON document with blocks ``domain``, ``region_k``,
``potentials``, ``nonlinearity``, ``solver`` and optional ``rho``,
``count``, ``k`` and ``output``.  Every task first checks the structural
conditions and refuses to solve when one fails, unless ``--force``.

Exit codes: 0 success, 2 config or IO error, 3 hypothesis failure,
4 solver non-convergence, 5 internal error or theory violation.
"""

import argparse
import json
import logging
import os
import platform
import sys
from dataclasses import fields

import numpy as np
import scipy
import scipy.io
import scipy.sparse as sp

from . import __version__
from .assembly import assemble, restrict_to_complement
from .errors import (
    ConditionViolated,
    ConfigError,
    DomainError,
    EmptyProblemError,
    RayRangeError,
    SolverError,
)
from .functional import ProblemContext, gn_exponents
from .geometry import DomainSpec, RegionK, build_grid, check_condition_C, check_condition_N, k_mask
from .nonlinearity import (
    NonlinearitySpec,
    PowerBranch,
    SaturatingBranch,
    ZeroBranch,
    load_node_table,
    verify_conditions,
)
from .solvers import (
    SolverConfig,
    mountain_pass,
    multi_solve,
    nehari_solve,
    normalized_multi,
    normalized_solve,
)
from .spectral import condition_A, hardy_constant_boundary, hardy_constant_origin

log = logging.getLogger("hardysolve")

TASKS = ("verify", "hardy", "spectrum", "solve", "multi", "normalized", "normalized-multi")
EXIT_OK, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_SOLVER, EXIT_INTERNAL = 0, 2, 3, 4, 5

DEFAULTS = {
    "domain": {"variant": "ball", "radius": 1.0, "dimension": 3, "resolution": 100},
    "region_k": {"variant": "annulus", "r_lo": 0.0, "r_hi": 0.5},
    "potentials": {"mu": 0.0, "nu": 0.0, "lambda": 1.0},
    "nonlinearity": {"on_k": {"family": "power", "p": 4.0, "gamma": 1.0, "odd": True},
                     "off_k": {"family": "saturating", "theta": 0.5, "u0": 1.0}},
    "solver": {},
    "rho": 1.0,
    "count": 3,
    "k": 6,
    "output": {"dir": "out", "prefix": "solution"},
}


# ------------------------------------------------------------------ config

def _merge(defaults, given):
    out = dict(defaults)
    out.update(given or {})
    return out


def normalize_config(raw):
    """Fill defaults so the result alone reproduces the run."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - set(DEFAULTS) - {"task"}
    if unknown:
        raise ConfigError(f"unknown config blocks {sorted(unknown)}")
    cfg = {key: _merge(val, raw.get(key)) if isinstance(val, dict) else raw.get(key, val)
           for key, val in DEFAULTS.items()}
    # the domain and nonlinearity blocks replace rather than merge when the variant changes
    for key in ("domain", "region_k"):
        if key in raw and raw[key].get("variant", DEFAULTS[key]["variant"]) != DEFAULTS[key]["variant"]:
            cfg[key] = dict(raw[key])
    if "nonlinearity" in raw:
        cfg["nonlinearity"] = dict(raw["nonlinearity"])
    if "task" in raw:
        cfg["task"] = raw["task"]
    return cfg


def _domain(block):
    variant = block.get("variant")
    if variant == "ball":
        return DomainSpec.ball(block.get("radius", 1.0), block.get("dimension", 3))
    if variant == "box":
        return DomainSpec.box(block["bounds"])
    raise ConfigError(f"unknown domain variant {variant!r}")


def _region(block):
    variant = block.get("variant", "empty")
    if variant == "annulus":
        return RegionK.annulus(block["r_lo"], block["r_hi"])
    if variant == "box":
        return RegionK.sub_box(block["bounds"])
    if variant == "empty":
        return RegionK.empty()
    raise ConfigError(f"unknown region variant {variant!r}")


def _coefficient(block, name, size, base_dir):
    table = block.get(f"{name}_table")
    if table is not None:
        path = table if os.path.isabs(table) else os.path.join(base_dir, table)
        return load_node_table(path, size)
    return float(block.get(name, 1.0 if name == "gamma" else 0.5))


def _branch(block, size, base_dir):
    family = block.get("family")
    if family == "power":
        if "p" not in block:
            raise ConfigError("power branch needs an exponent p")
        return PowerBranch(float(block["p"]), _coefficient(block, "gamma", size, base_dir),
                           positive_part=not block.get("odd", True))
    if family == "saturating":
        return SaturatingBranch(_coefficient(block, "theta", size, base_dir), float(block.get("u0", 1.0)))
    if family == "zero":
        return ZeroBranch()
    raise ConfigError(f"unknown nonlinearity family {family!r}")


def _nonlinearity(block, size, base_dir):
    preset = block.get("preset")
    if preset == "zero":
        return NonlinearitySpec.zero()
    if preset == "pure_power":
        return NonlinearitySpec.pure_power(float(block.get("p", 4.0)), float(block.get("gamma", 1.0)))
    if preset == "mixed_default":
        return NonlinearitySpec.mixed_default(float(block.get("p", 4.0)), float(block.get("gamma", 1.0)))
    if preset is not None:
        raise ConfigError(f"unknown nonlinearity preset {preset!r}")
    try:
        return NonlinearitySpec(_branch(block["on_k"], size, base_dir), _branch(block["off_k"], size, base_dir))
    except KeyError as exc:
        raise ConfigError(f"nonlinearity block needs {exc}") from exc


def _solver_config(block):
    known = {f.name for f in fields(SolverConfig)}
    extra = set(block) - known - {"method"}
    if extra:
        raise ConfigError(f"unknown solver fields {sorted(extra)}")
    return SolverConfig(**{k: v for k, v in block.items() if k in known})


class Problem:
    """Everything built from a normalized config."""

    def __init__(self, cfg, base_dir="."):
        self.cfg = cfg
        dom = cfg["domain"]
        if "resolution" not in dom:
            raise ConfigError("domain block needs a resolution")
        self.domain = _domain(dom)
        self.grid = build_grid(self.domain, dom["resolution"])
        self.region = _region(cfg["region_k"])
        self.in_k = k_mask(self.grid, self.region)
        self.ops = assemble(self.grid)
        pot = cfg["potentials"]
        self.mu = float(pot.get("mu", 0.0))
        self.nu = float(pot.get("nu", 0.0))
        self.lam = pot.get("lambda")
        self.spec = _nonlinearity(cfg["nonlinearity"], self.grid.size, base_dir)
        self.solver = _solver_config(cfg["solver"])
        self.method = cfg["solver"].get("method", "mountain_pass")
        if self.method not in ("mountain_pass", "nehari"):
            raise ConfigError(f"unknown solve method {self.method!r}")

    def context(self, lam=None):
        lam = self.lam if lam is None else lam
        return ProblemContext(self.ops, self.spec, float(lam or 0.0), self.mu, self.nu, self.in_k)


# -------------------------------------------------------------- conditions

def check_conditions(problem, task):
    """Run every applicable check; returns (report, list of failed gating clauses)."""
    report, failed = {}, []
    c = check_condition_C(problem.domain)
    report["C"] = {"holds": c.holds, "reason": c.reason}
    if not c.holds:
        failed.append("C")

    try:
        margin = check_condition_N(problem.mu, problem.nu, problem.grid.dimension)
        report["N"] = {"margin": margin, "holds": margin > 0}
        if margin <= 0:
            failed.append("N")
    except ConditionViolated as exc:
        report["N"] = {"holds": False, "reason": str(exc), "clause": exc.clause}
        failed.append("N")

    normalized = task.startswith("normalized")
    checks = verify_conditions(problem.spec, problem.grid, problem.in_k)
    report["F"] = {name: chk.to_dict() for name, chk in checks.items()}
    if not normalized and not problem.spec.is_zero:
        failed.extend(name for name, chk in checks.items() if not chk.passed)

    if problem.lam is not None and not normalized and "N" not in failed:
        lam = float(problem.lam)
        report["lambda>=0"] = {"holds": lam >= 0}
        if task in ("solve", "multi") and lam < 0:
            failed.append("lambda>=0")
        theta = problem.spec.theta_values(problem.in_k)
        try:
            rep_a, spec_a = condition_A(problem.ops, problem.in_k, problem.mu, problem.nu, theta, lam)
            report["A"] = dict(rep_a.to_dict(), holds=rep_a.satisfied,
                               eigenvalues=spec_a.eigenvalues.tolist())
            if not rep_a.satisfied:
                failed.append("A")
        except EmptyProblemError:
            report["A"] = {"holds": True, "reason": "K covers the domain: vacuous"}

    p = problem.spec.exponent
    if p is not None:
        gn = gn_exponents(p, problem.grid.dimension)
        report["mass_subcritical"] = dict(gn.to_dict(), holds=gn.subcritical)
        if normalized and not gn.subcritical:
            failed.append("mass-subcritical")
    return report, failed


# ------------------------------------------------------------------ output

def _versions():
    return {"hardysolve": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def emit_solution(report, grid, path):
    """Write node coordinates, u, d(x) and |x| as CSV."""
    u = np.asarray(report.u)
    if grid.radial:
        cols = [grid.coords, u, grid.dist_boundary, grid.dist_origin]
        header = "r,u,d,abs_x"
    else:
        cols = [grid.coords[:, 0], grid.coords[:, 1], grid.coords[:, 2], u,
                grid.dist_boundary, grid.dist_origin]
        header = "x,y,z,u,d,abs_x"
    np.savetxt(path, np.column_stack(cols), delimiter=",", header=header, comments="", fmt="%.17g")


def write_summary(path, summary):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_jsonable(summary), fh, indent=2)
        fh.write("\n")


def export_matrices(problem, out_dir):
    """Stiffness, mass and potential matrices in Matrix Market format."""
    ops = problem.ops
    mats = {"L": ops.L, "M": sp.diags(ops.mass), "P_origin": sp.diags(ops.origin),
            "P_boundary": sp.diags(ops.boundary)}
    for name, mat in mats.items():
        scipy.io.mmwrite(os.path.join(out_dir, f"{name}.mtx"), sp.coo_matrix(mat))


def write_iterates(path, reports):
    with open(path, "w", encoding="utf-8") as fh:
        for i, rep in enumerate(reports):
            for entry in rep.log:
                fh.write(json.dumps(_jsonable(dict(entry, solution=i))) + "\n")


# ------------------------------------------------------------------- tasks

def _run_solver(problem, task):
    if task == "solve":
        ctx = problem.context()
        rep = (mountain_pass if problem.method == "mountain_pass" else nehari_solve)(ctx, problem.solver)
        return [rep]
    if task == "multi":
        return multi_solve(problem.context(), problem.solver, count=int(problem.cfg["count"]))
    ctx = problem.context(lam=0.0)
    rho = float(problem.cfg["rho"])
    if task == "normalized":
        return [normalized_solve(ctx, problem.solver, rho=rho)]
    return normalized_multi(ctx, problem.solver, rho=rho, count=int(problem.cfg["count"]))


def run(task, config_path, out_dir=None, force=False, log_iterates=False, matrices=False):
    """Execute one task; returns the process exit code."""
    summary = {"task": task, "versions": _versions()}
    try:
        with open(config_path, encoding="utf-8") as fh:
            raw = json.load(fh)
        cfg = normalize_config(raw)
        summary["config"] = cfg
        out_dir = out_dir or cfg["output"].get("dir", "out")
        prefix = cfg["output"].get("prefix", "solution")
        os.makedirs(out_dir, exist_ok=True)
        problem = Problem(cfg, base_dir=os.path.dirname(os.path.abspath(config_path)))
    except (OSError, json.JSONDecodeError, ConfigError, DomainError, TypeError, KeyError) as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    summary_path = os.path.join(out_dir, "summary.json")

    def finish(code, **extra):
        summary.update(extra, exit_code=code)
        try:
            write_summary(summary_path, summary)
        except OSError as exc:
            log.error("cannot write summary: %s", exc)
            return EXIT_CONFIG
        return code

    try:
        if matrices:
            export_matrices(problem, out_dir)
        report, failed = check_conditions(problem, task)
        summary["conditions"] = report
        summary["failed_conditions"] = failed
        if failed and not (force and task not in ("verify", "hardy", "spectrum")):
            log.error("hypotheses fail: %s", ", ".join(failed))
            return finish(EXIT_HYPOTHESIS)
        if failed:
            log.warning("hypotheses fail (%s); continuing because of --force", ", ".join(failed))

        if task == "verify":
            return finish(EXIT_OK)
        if task == "hardy":
            hardy = {"origin": hardy_constant_origin(problem.ops),
                     "boundary": hardy_constant_boundary(problem.ops),
                     "origin_reference": (problem.grid.dimension - 2) ** 2 / 4, "boundary_reference": 0.25}
            return finish(EXIT_OK, hardy=hardy)
        if task == "spectrum":
            theta = problem.spec.theta_values(problem.in_k)
            lam = float(problem.lam or 0.0)
            rep_a, spec_a = condition_A(problem.ops, problem.in_k, problem.mu, problem.nu, theta, lam,
                                        k=int(problem.cfg["k"]))
            ops_r = restrict_to_complement(problem.ops, problem.in_k)
            return finish(EXIT_OK, spectrum=dict(spec_a.to_dict(), condition_A=rep_a.to_dict(),
                                                 unknowns=ops_r.size))

        reports = _run_solver(problem, task)
        expected = int(problem.cfg["count"]) if task in ("multi", "normalized-multi") else 1
        ok = len(reports) == expected and all(r.converged for r in reports)
        summary["solutions"] = [r.summary() for r in reports]
        summary["energies"] = [r.energy for r in reports]
        if ok or force:
            multi = task in ("multi", "normalized-multi")
            for i, rep in enumerate(reports):
                name = f"{prefix}_{i}.csv" if multi else f"{prefix}.csv"
                emit_solution(rep, problem.grid, os.path.join(out_dir, name))
        if log_iterates:
            write_iterates(os.path.join(out_dir, "iterates.jsonl"), reports)
        if not ok:
            log.error("solver did not converge (%d of %d solutions)", sum(r.converged for r in reports), expected)
            return finish(EXIT_SOLVER)
        return finish(EXIT_OK)
    except ConditionViolated as exc:
        log.error("hypothesis failure: %s", exc)
        return finish(EXIT_HYPOTHESIS, error=str(exc), clause=exc.clause)
    except (SolverError, RayRangeError) as exc:
        log.error("solver failure: %s", exc)
        return finish(EXIT_SOLVER, error=str(exc))
    except OSError as exc:
        log.error("IO error: %s", exc)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - mapped to the internal exit code
        log.exception("internal error")
        return finish(EXIT_INTERNAL, error=f"{type(exc).__name__}: {exc}")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="solver", description=__doc__.splitlines()[0])
    parser.add_argument("task", choices=TASKS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=None, help="output directory (default: config output.dir)")
    parser.add_argument("--force", action="store_true", help="solve and write files despite failed checks")
    parser.add_argument("--log-iterates", action="store_true", help="write iterates.jsonl")
    parser.add_argument("--export-matrices", action="store_true", help="write L, M, P_origin, P_boundary as .mtx")
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    return run(args.task, args.config, args.out, args.force, args.log_iterates, args.export_matrices)


if __name__ == "__main__":
    sys.exit(main())
