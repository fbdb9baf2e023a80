"""Critical points of J0 on the mass sphere sum w u^2 = rho."""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import HypothesisError, PreconditionError
from ..functional import (
    energy_J0,
    gn_exponents,
    gradient_J0,
    lagrange_lambda,
    stationarity_residual,
    tangent_gradient_J0,
)
from .common import Deflation, SolutionReport, SolverConfig, backtrack, disjoint_seeds, positive_bump


def check_mass_subcritical(ctx):
    p = ctx.spec.exponent
    if p is None:
        return None
    gn = gn_exponents(p, ctx.ops.grid.dimension)
    if not gn.subcritical:
        raise HypothesisError(f"p = {p:g} >= 2 + 4/N = {gn.mass_critical:g}: mass-supercritical",
                              clause="mass-subcritical")
    return gn


class _Sphere:
    """Mass sphere, optionally intersected with M-orthogonal complements."""

    def __init__(self, ctx, rho, orth=()):
        self.ctx = ctx
        self.rho = rho
        self.w = ctx.weights
        basis = []
        for v in orth:
            v = np.asarray(v, dtype=float).copy()
            for b in basis:
                v -= np.sum(self.w * v * b) * b
            v /= np.sqrt(np.sum(self.w * v * v))
            basis.append(v)
        self.basis = basis

    def retract(self, u):
        for b in self.basis:
            u = u - np.sum(self.w * u * b) * b
        return u * np.sqrt(self.rho / np.sum(self.w * u * u))

    def tangent(self, u, g):
        """B0-orthogonal projection of g onto the tangent space at u."""
        if not self.basis:
            return tangent_gradient_J0(self.ctx, u, grad=g)
        normals = [self.w * u] + [self.w * b for b in self.basis]
        Z = np.column_stack([self.ctx.solve(nv, "B0") for nv in normals])
        C = np.column_stack(normals)
        alpha = np.linalg.solve(C.T @ Z, C.T @ g)
        return g - Z @ alpha


def normalized_solve(ctx, cfg=SolverConfig(), rho=1.0, seed=None, orth=()):
    """Projected Sobolev-gradient descent for J0 on the mass sphere.

    Steps go along minus the tangent gradient with Armijo backtracking and
    are followed by exact renormalization to mass ``rho``, so every iterate
    has mass rho up to round-off and J0 never increases.  ``orth`` adds
    M-orthogonality constraints against the given functions.
    """
    if not rho > 0:
        raise PreconditionError("rho must be positive")
    check_mass_subcritical(ctx)
    sphere = _Sphere(ctx, rho, orth)
    seed_name = "given"
    if seed is None:
        seed = positive_bump(ctx.ops.grid)
        seed_name = "positive_bump"
    u = sphere.retract(np.asarray(seed, dtype=float))
    energy = energy_J0(ctx, u)

    log, converged, drift = [], False, 0.0
    res = np.inf
    it = 0
    for it in range(1, cfg.max_iter + 1):
        drift = max(drift, abs(ctx.mass_of(u) - rho) / rho)
        t = sphere.tangent(u, gradient_J0(ctx, u))
        res = ctx.norm(t, "B0")
        if res <= cfg.tol:
            converged = True
            log.append({"iteration": it, "energy": energy, "residual": res, "step": 0.0, "mass_drift": drift})
            break
        s, val = backtrack(lambda a: energy_J0(ctx, sphere.retract(u - a * t)), energy, res ** 2, cfg)
        log.append({"iteration": it, "energy": energy, "residual": res, "step": s, "mass_drift": drift})
        if s == 0.0:
            break
        u, energy = sphere.retract(u - s * t), val

    return _report(ctx, u, res, it, converged, seed_name, "normalized_descent", log,
                   {"mass_drift": drift, "rho": rho}, cfg)


def _report(ctx, u, res, its, converged, seed, method, log, diag, cfg):
    return SolutionReport(
        u=u, energy=energy_J0(ctx, u), cerami_residual=res,
        nehari_residual=float("nan"), multiplier=lagrange_lambda(ctx, u),
        iterations=its, converged=converged, seed=seed, method=method, log=log,
        diagnostics=dict(diag, stationarity=stationarity_residual(ctx, u)),
        config=cfg.to_dict())


def normalized_newton(ctx, u0, rho, deflation, cfg=SolverConfig()):
    """Deflated Newton on (u, lambda) for grad J0 + lambda M u = 0, mass rho.

    Every iterate is rescaled to mass rho.  Convergence is judged on the
    tangent-gradient norm.
    """
    w = ctx.weights
    n = ctx.size
    sphere = _Sphere(ctx, rho)
    u = sphere.retract(np.asarray(u0, dtype=float))
    lam = lagrange_lambda(ctx, u)
    log, converged, drift = [], False, 0.0

    def residual(v, lm):
        r1 = ctx.B0 @ v - w * ctx.f(v) + lm * w * v
        r2 = 0.5 * (np.sum(w * v * v) - rho)
        return r1, r2

    def merit(v, lm):
        r1, r2 = residual(v, lm)
        return deflation.value(v) * np.sqrt(ctx.norm(ctx.solve(r1, "B0"), "B0") ** 2 + r2 ** 2)

    res = np.inf
    it = 0
    for it in range(1, cfg.newton_max_iter + 1):
        drift = max(drift, abs(ctx.mass_of(u) - rho) / rho)
        res = ctx.norm(tangent_gradient_J0(ctx, u), "B0")
        if res <= cfg.tol:
            converged = True
            log.append({"iteration": it, "energy": energy_J0(ctx, u), "residual": res, "step": 0.0,
                        "mass_drift": drift})
            break
        r1, r2 = residual(u, lam)
        wu = (w * u)[:, None]
        jac = sp.bmat([[ctx.B0 - sp.diags(w * ctx.df(u)) + lam * sp.diags(w), sp.csc_matrix(wu)],
                       [sp.csc_matrix(wu.T), None]], format="csc")
        d = -spla.spsolve(jac, np.concatenate([r1, [r2]]))
        if not np.all(np.isfinite(d)):
            break
        du, dl = d[:n], d[n]
        if deflation.solutions:
            denom = 1.0 - float(deflation.grad_log(u) @ du)
            if abs(denom) > 1e-12:
                du, dl = du / denom, dl / denom
        m0 = merit(u, lam)
        s = 1.0
        for _ in range(cfg.max_backtracks):
            if merit(sphere.retract(u + s * du), lam + s * dl) < (1 - cfg.armijo * s) * m0:
                break
            s *= cfg.shrink
        else:
            s = 0.0
        log.append({"iteration": it, "energy": energy_J0(ctx, u), "residual": res, "step": s,
                    "mass_drift": drift})
        if s == 0.0:
            break
        u = sphere.retract(u + s * du)
        lam = lagrange_lambda(ctx, u)
    return u, converged, it, log, drift


def normalized_multi(ctx, cfg=SolverConfig(), rho=1.0, count=2):
    """Up to ``count`` distinct normalized solutions from disjoint-support seeds.

    Seed j first descends on the sphere intersected with the M-orthogonal
    complement of the solutions already found; the result is then polished
    by deflated Newton on the full constrained problem.
    """
    if not ctx.spec.odd:
        raise HypothesisError("multiplicity needs an odd nonlinearity", clause="odd")
    check_mass_subcritical(ctx)
    seeds = disjoint_seeds(ctx.ops.grid, count, rho)
    deflation = Deflation(lambda v: ctx.B0 @ v, cfg.deflation_power, cfg.deflation_shift)
    found, failures = [], []
    for j, seed in enumerate(seeds):
        rep = normalized_solve(ctx, cfg, rho, seed=seed, orth=[r.u for r in found])
        rep.seed = f"disjoint_seed_{j}"
        if found:
            u, ok, its, log, drift = normalized_newton(ctx, rep.u, rho, deflation, cfg)
            rep = _report(ctx, u, ctx.norm(tangent_gradient_J0(ctx, u), "B0"), rep.iterations + its,
                          ok, f"disjoint_seed_{j}", "normalized_descent+newton", rep.log + log,
                          {"mass_drift": max(drift, rep.diagnostics["mass_drift"]), "rho": rho}, cfg)
        if not rep.converged or not _distinct(ctx, rep.u, found, cfg):
            failures.append(j)
            continue
        found.append(rep)
        deflation.add(rep.u)
    found.sort(key=lambda r: r.energy)
    if len(found) < count:
        for rep in found:
            rep.diagnostics["partial"] = f"found {len(found)} of {count}; failed seeds {failures}"
    return found


def _distinct(ctx, u, found, cfg):
    if not found:
        return True
    scale = max([ctx.norm(u, "B0")] + [ctx.norm(r.u, "B0") for r in found])
    tol = cfg.separation_rel * scale
    return all(ctx.norm(u - r.u, "B0") > tol and ctx.norm(u + r.u, "B0") > tol for r in found)
