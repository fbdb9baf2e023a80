"""Critical points of the unconstrained energy J."""

import numpy as np
import scipy.optimize as so
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import HypothesisError, PreconditionError, RayRangeError
from ..functional import (
    cerami_residual,
    derivative_along,
    energy_J,
    euclidean_gradient,
    gradient_B,
    j1_radius,
    ray_max,
    smooth_directions,
)
from .common import Deflation, SolutionReport, SolverConfig, backtrack as _backtrack, k_seeds


def _require_nonnegative_lambda(ctx):
    if ctx.lam < 0:
        raise HypothesisError(f"lambda = {ctx.lam} < 0", clause="lambda>=0")


def _level_bracket(ctx, u_level, extra, seed=0):
    dirs = smooth_directions(ctx, seed=seed, extra=extra)
    r, inf = j1_radius(ctx, dirs, r0=0.5 * ctx.norm(u_level))
    return {"r": r, "sphere_inf": inf}


def _segment_max(ctx, a, b):
    res = so.minimize_scalar(lambda s: -energy_J(ctx, a + s * (b - a)), bounds=(0.0, 1.0),
                             method="bounded", options={"xatol": 1e-12})
    return res.x, -res.fun


def _path_max(ctx, path, energies):
    """Locate the maximum of J over the polyline and make it a node.

    Segments next to the highest node, and any segment whose midpoint
    beats every node, are searched by bounded 1-D maximization.  Returns
    the (possibly extended) path, its energies and the max-node index.
    """
    j = int(np.argmax(energies))
    top = energies[j]
    cand = {i for i in (j - 1, j) if 0 <= i < len(path) - 1}
    for i in range(len(path) - 1):
        if i not in cand and energy_J(ctx, 0.5 * (path[i] + path[i + 1])) > top:
            cand.add(i)
    best = (top, None, None)
    for i in sorted(cand):
        s, val = _segment_max(ctx, path[i], path[i + 1])
        if val > best[0] and 1e-9 < s < 1 - 1e-9:
            best = (val, i, s)
    if best[1] is None:
        return path, energies, j
    val, i, s = best
    point = path[i] + s * (path[i + 1] - path[i])
    path = path[: i + 1] + [point] + path[i + 1:]
    energies = np.insert(energies, i + 1, val)
    return path, energies, i + 1


def _reparametrize(ctx, path, n):
    """Resample the polyline to ``n`` nodes evenly spaced in B-arclength."""
    seg = np.array([ctx.norm(path[i + 1] - path[i]) for i in range(len(path) - 1)])
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = np.linspace(0.0, cum[-1], n)
    out = [path[0]]
    for t in targets[1:-1]:
        i = min(int(np.searchsorted(cum, t, side="right")) - 1, len(seg) - 1)
        lam = (t - cum[i]) / seg[i] if seg[i] > 0 else 0.0
        out.append((1 - lam) * path[i] + lam * path[i + 1])
    out.append(path[-1])
    return out


def mountain_pass(ctx, cfg=SolverConfig(), seed=None):
    """Path-deformation mountain-pass search.

    A discrete path from 0 to a negative-energy endpoint on a K-supported
    ray is deformed by moving its highest node along -grad J (B-metric,
    Armijo backtracking) until that node's Cerami residual drops below
    ``cfg.tol``.  If the residual stops improving for ``cfg.stall_window``
    steps, the best node is refined by Newton's method and accepted when
    its energy stays within ``cfg.polish_drift`` of the path level.
    """
    _require_nonnegative_lambda(ctx)
    seed_name = "given"
    if seed is None:
        seed = k_seeds(ctx.ops.grid, ctx.in_k, 1)[0]
        seed_name = "k_seed_0"
    seed = np.asarray(seed, dtype=float)
    prof = ray_max(ctx, seed)

    t_end = 2.0 * prof.t_star
    while energy_J(ctx, t_end * seed) >= 0:
        t_end *= 2.0
        if t_end > 1e8:
            raise RayRangeError("no negative-energy endpoint along the seed ray")
    end = t_end * seed

    n = cfg.path_nodes
    path = [(i / (n - 1)) * end for i in range(n)]
    energies = np.array([energy_J(ctx, p) for p in path])

    log, converged = [], False
    diagnostics = {}
    best = (np.inf, None, None)
    since_best = 0
    it = 0
    for it in range(1, cfg.max_iter + 1):
        path, energies, j = _path_max(ctx, path, energies)
        u = path[j]
        g = gradient_B(ctx, u)
        gnorm = ctx.norm(g)
        unorm = ctx.norm(u)
        res = (1 + unorm) * gnorm
        if unorm > cfg.norm_cap:
            diagnostics["norm_cap"] = "iterate norm exceeded cap; check condition (A)"
            break
        if res < best[0]:
            best, since_best = (res, u.copy(), float(energies[j])), 0
        else:
            since_best += 1
        if res <= cfg.tol:
            log.append({"iteration": it, "energy": float(energies[j]), "residual": res, "step": 0.0})
            converged = True
            break
        if since_best >= cfg.stall_window:
            diagnostics["deformation_stalled"] = f"no residual decrease in {cfg.stall_window} steps"
            break
        step, val = _backtrack(lambda s: energy_J(ctx, u - s * g), energies[j], gnorm ** 2, cfg)
        log.append({"iteration": it, "energy": float(energies[j]), "residual": res, "step": step})
        if step == 0.0:
            diagnostics["stalled"] = "line search failed"
            break
        path[j] = u - step * g
        energies[j] = val
        if len(path) >= 2 * n:
            path = _reparametrize(ctx, path, n)
            energies = np.array([energy_J(ctx, p) for p in path])

    res, u, level = best
    diagnostics["path_level"] = level
    diagnostics["path_residual"] = res
    if not converged and u is not None and "norm_cap" not in diagnostics:
        # local Newton refinement of the best path point
        v, ok, its, nlog = deflated_newton(ctx, u, Deflation(lambda x: ctx.B @ x), cfg)
        log.extend(dict(e, iteration=it + e["iteration"], phase="newton") for e in nlog)
        it += its
        if ok:
            e_v = energy_J(ctx, v)
            if abs(e_v - level) <= cfg.polish_drift * (1 + abs(level)):
                u, level, converged = v, e_v, True
            else:
                diagnostics["polish_rejected"] = f"Newton moved the level from {level:.8g} to {e_v:.8g}"
    diagnostics["morse_index"] = morse_index(ctx, u)
    bracket = _level_bracket(ctx, u, extra=[seed, u], seed=cfg.seed)
    bracket["q_ray_level"] = prof.j_max
    if not bracket["sphere_inf"] <= level:
        diagnostics["level_chain"] = "sampled sphere infimum exceeds the attained level"
    return SolutionReport(
        u=u, energy=level, cerami_residual=cerami_residual(ctx, u),
        nehari_residual=derivative_along(ctx, u, u), level_bracket=bracket,
        iterations=it, converged=converged, seed=seed_name,
        method="mountain_pass", log=log, diagnostics=diagnostics, config=cfg.to_dict())


def morse_index(ctx, u, k=4):
    """Number of negative eigenvalues of the Hessian of J at u (M-metric)."""
    from ..spectral import smallest_eigenpairs

    hess = (ctx.B - sp.diags(ctx.weights * ctx.df(u))).tocsc()
    k = min(k, ctx.size)
    vals = smallest_eigenpairs(hess, ctx.weights, k, tol=1e-6).eigenvalues
    return int(np.sum(vals < 0))


def nehari_solve(ctx, cfg=SolverConfig(), q_mask=None, seed=None):
    """Minimize J over the Nehari set within the subspace Q of functions
    vanishing off ``q_mask`` (defaults to the K-mask).

    Each step normalizes to the ray maximizer, then takes an Armijo step
    along the Q-restricted gradient and re-normalizes.  The Cerami residual
    is measured in Q, so for Q smaller than the whole space the result is a
    critical point of J restricted to Q.
    """
    _require_nonnegative_lambda(ctx)
    q_mask = ctx.in_k if q_mask is None else np.asarray(q_mask, dtype=bool)
    if not q_mask.any():
        raise PreconditionError("Q-mask is empty")
    seed_name = "given"
    if seed is None:
        seed = k_seeds(ctx.ops.grid, q_mask, 1)[0]
        seed_name = "k_seed_0"
    seed = np.asarray(seed, dtype=float)
    if np.any(seed[~q_mask] != 0):
        raise PreconditionError("seed is not supported in Q")
    if not np.any(seed):
        raise PreconditionError("seed vanishes")

    prof = ray_max(ctx, seed)
    u = prof.t_star * seed
    energy = prof.j_max
    first_level = energy
    log, converged, diagnostics = [], False, {}
    res = np.inf
    it = 0
    for it in range(1, cfg.max_iter + 1):
        g = gradient_B(ctx, u, mask=q_mask)
        gnorm = ctx.norm(g)
        unorm = ctx.norm(u)
        res = (1 + unorm) * gnorm
        if unorm > cfg.norm_cap:
            diagnostics["norm_cap"] = "iterate norm exceeded cap; check condition (A)"
            break
        if res <= cfg.tol:
            log.append({"iteration": it, "energy": energy, "residual": res, "step": 0.0})
            converged = True
            break

        cache = {}

        def trial(s):
            try:
                p = ray_max(ctx, u - s * g)
            except RayRangeError:
                return np.inf
            cache[s] = p.t_star * (u - s * g)
            return p.j_max

        step, val = _backtrack(trial, energy, gnorm ** 2, cfg)
        log.append({"iteration": it, "energy": energy, "residual": res, "step": step})
        if step == 0.0:
            diagnostics["stalled"] = "line search failed"
            break
        u, energy = cache[step], val

    bracket = _level_bracket(ctx, u, extra=[seed, u], seed=cfg.seed)
    bracket["q_ray_level"] = energy
    bracket["seed_ray_level"] = first_level
    return SolutionReport(
        u=u, energy=float(energy), cerami_residual=res,
        nehari_residual=derivative_along(ctx, u, u), level_bracket=bracket,
        iterations=it, converged=converged, seed=seed_name, method="nehari",
        log=log, diagnostics=diagnostics, config=cfg.to_dict())


def _nodal_pieces(ctx, u):
    sign = np.sign(u)
    if ctx.ops.grid.radial:
        # contiguous runs of constant sign are the nodal domains
        cuts = np.flatnonzero(np.diff(sign) != 0) + 1
        pieces = np.split(np.arange(u.size), cuts)
    else:
        pieces = [np.flatnonzero(sign > 0), np.flatnonzero(sign < 0)]
    return [idx for idx in pieces if idx.size and np.any(u[idx])]


def _nehari_scale(ctx, part):
    """t > 0 with J'(t part)(part) = 0, or None if the ray never turns down."""
    a = ctx.inner(part, part)
    w = ctx.weights

    def phi(t):
        return t * a - float(np.sum(w * ctx.f(t * part) * part))

    lo, hi = 1.0, 1.0
    while phi(lo) <= 0:
        lo *= 0.5
        if lo < 1e-8:
            return None
    while phi(hi) >= 0:
        hi *= 2.0
        if hi > 1e8:
            return None
    return so.brentq(phi, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)


def nodal_scale(ctx, u):
    """Scale each nodal domain of ``u`` to its own Nehari point."""
    u = np.asarray(u, dtype=float)
    out = u.copy()
    for idx in _nodal_pieces(ctx, u):
        part = np.zeros_like(u)
        part[idx] = u[idx]
        t = _nehari_scale(ctx, part)
        if t is not None:
            out[idx] = t * u[idx]
    return out


def nodal_descent(ctx, u0, cfg=SolverConfig(), switch=1e-2, max_iter=200):
    """Gradient descent on the nodal Nehari set, keeping the nodal count.

    Each step goes along -grad J and rescales every nodal domain to its
    Nehari point; steps that create or destroy nodal domains are shortened.
    Stops once the relative Cerami residual falls below ``switch``; the
    result is meant as a Newton starting point.
    """
    u = nodal_scale(ctx, u0)
    count = len(_nodal_pieces(ctx, u))
    energy = energy_J(ctx, u)
    for _ in range(max_iter):
        g = gradient_B(ctx, u)
        gnorm = ctx.norm(g)
        if (1 + ctx.norm(u)) * gnorm <= switch * (1 + abs(energy)):
            break

        def trial(s):
            v = nodal_scale(ctx, u - s * g)
            if len(_nodal_pieces(ctx, v)) != count:
                return np.inf
            return energy_J(ctx, v)

        step, val = _backtrack(trial, energy, gnorm ** 2, cfg)
        if step == 0.0:
            break
        u, energy = nodal_scale(ctx, u - step * g), val
    return u


def deflated_newton(ctx, u0, deflation, cfg=SolverConfig()):
    """Newton's method on grad J = 0 with multiplicative deflation.

    The merit function is m(u) * ||grad_B J(u)||_B; convergence is judged
    on the undeflated Cerami residual.
    """
    u = np.asarray(u0, dtype=float).copy()
    w = ctx.weights
    log, converged = [], False

    def merit(v):
        return deflation.value(v) * ctx.norm(gradient_B(ctx, v))

    res = cerami_residual(ctx, u)
    it = 0
    for it in range(1, cfg.newton_max_iter + 1):
        res = cerami_residual(ctx, u)
        if not np.isfinite(res) or ctx.norm(u) > cfg.norm_cap:
            break
        if res <= cfg.tol:
            converged = True
            log.append({"iteration": it, "energy": energy_J(ctx, u), "residual": res, "step": 0.0})
            break
        jac = (ctx.B - sp.diags(w * ctx.df(u))).tocsc()
        try:
            d = -spla.spsolve(jac, euclidean_gradient(ctx, u))
        except RuntimeError:
            break
        if not np.all(np.isfinite(d)):
            break
        d = deflation.scale_step(u, d)
        m0 = merit(u)
        s = 1.0
        for _ in range(cfg.max_backtracks):
            if merit(u + s * d) < (1 - cfg.armijo * s) * m0:
                break
            s *= cfg.shrink
        else:
            s = 0.0
        log.append({"iteration": it, "energy": energy_J(ctx, u), "residual": res, "step": s})
        if s == 0.0:
            break
        u = u + s * d
    return u, converged, it, log


def multi_solve(ctx, cfg=SolverConfig(), count=3, q_mask=None):
    """Up to ``count`` distinct critical points for an odd nonlinearity.

    The first comes from the Nehari solve in Q; later ones from deflated
    Newton runs started from K-supported seeds of increasing oscillation,
    first relaxed by nodal Nehari descent.  Solutions are returned in nondecreasing energy order.
    """
    if not ctx.spec.odd:
        raise HypothesisError("multiplicity search needs an odd nonlinearity", clause="odd")
    _require_nonnegative_lambda(ctx)
    q_mask = ctx.in_k if q_mask is None else np.asarray(q_mask, dtype=bool)
    deflation = Deflation(lambda v: ctx.B @ v, cfg.deflation_power, cfg.deflation_shift)
    seeds = k_seeds(ctx.ops.grid, q_mask, count + cfg.extra_seeds)

    first = nehari_solve(ctx, cfg, q_mask=q_mask, seed=seeds[0])
    first.seed = "k_seed_0"
    if first.converged and cerami_residual(ctx, first.u) > cfg.tol:
        u, ok, its, log = deflated_newton(ctx, first.u, deflation, cfg)
        first = _newton_report(ctx, u, ok, its, log, "k_seed_0+newton", cfg)
    found = [first] if first.converged else []
    failures = [] if first.converged else ["k_seed_0"]
    if found:
        deflation.add(found[0].u)

    for j in range(1, len(seeds)):
        if len(found) >= count:
            break
        u0 = nodal_descent(ctx, seeds[j], cfg)
        u, ok, its, log = deflated_newton(ctx, u0, deflation, cfg)
        if not ok or not _distinct(ctx, u, found, cfg):
            failures.append(f"k_seed_{j}")
            continue
        found.append(_newton_report(ctx, u, ok, its, log, f"k_seed_{j}", cfg))
        deflation.add(u)

    found.sort(key=lambda rep: rep.energy)
    if len(found) < count:
        for rep in found:
            rep.diagnostics["partial"] = f"found {len(found)} of {count}; failed seeds {failures}"
    return found


def _distinct(ctx, u, found, cfg):
    if not found:
        return True
    scale = max([ctx.norm(u)] + [ctx.norm(rep.u) for rep in found])
    tol = cfg.separation_rel * scale
    return all(ctx.norm(u - rep.u) > tol and ctx.norm(u + rep.u) > tol for rep in found)


def _newton_report(ctx, u, converged, its, log, seed, cfg):
    return SolutionReport(
        u=u, energy=energy_J(ctx, u), cerami_residual=cerami_residual(ctx, u),
        nehari_residual=derivative_along(ctx, u, u), iterations=its,
        converged=converged, seed=seed, method="deflated_newton", log=log,
        config=cfg.to_dict())
