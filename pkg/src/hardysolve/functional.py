"""Energy functionals, their gradients and ray profiles.

Grid functions are plain float arrays over all grid nodes.  The
unconstrained energy is J(u) = B(u,u)/2 - sum_i w_i F(x_i, u_i); the
normalized problem uses J0, the same expression with lambda = 0, restricted
to the sphere sum_i w_i u_i^2 = rho.  Gradients are Riesz representatives
in the B-inner product (B0 for J0), computed with a cached sparse LU.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.optimize as so
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConditionViolated, CoercivityError, DomainError, RayRangeError
from .geometry import check_condition_N

RAY_RANGE = (1e-3, 1e3)
RAY_SAMPLES = 61


@dataclass(eq=False)
class ProblemContext:
    ops: object
    spec: object
    lam: float
    mu: float
    nu: float
    in_k: np.ndarray
    _lu_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.in_k = np.asarray(self.in_k, dtype=bool)
        if self.in_k.shape != (self.ops.size,):
            raise ValueError("K-mask does not match the grid")
        self.margin = check_condition_N(self.mu, self.nu, self.ops.grid.dimension)
        if self.margin <= 0:
            raise ConditionViolated(f"mu/(N-2)^2 + nu >= 1/4 (margin {self.margin:.3g})", clause="N")

    @property
    def weights(self):
        return self.ops.mass

    @property
    def size(self):
        return self.ops.size

    @cached_property
    def B(self):
        return self.ops.b_matrix(self.lam, self.mu, self.nu).tocsc()

    @cached_property
    def B0(self):
        return self.ops.b_matrix(0.0, self.mu, self.nu).tocsc()

    def solver(self, which="B", mask=None):
        """Cached direct solver for B (or B0), optionally on the nodes in ``mask``."""
        key = (which, None if mask is None else np.packbits(mask).tobytes())
        if key not in self._lu_cache:
            A = self.B if which == "B" else self.B0
            if mask is not None:
                idx = np.flatnonzero(mask)
                A = A[idx][:, idx].tocsc()
            try:
                self._lu_cache[key] = spla.splu(A)
            except RuntimeError as exc:
                raise CoercivityError(f"factorization of {which} failed: {exc}") from exc
        return self._lu_cache[key]

    def solve(self, rhs, which="B", mask=None):
        lu = self.solver(which, mask)
        if mask is None:
            return lu.solve(rhs)
        out = np.zeros_like(rhs)
        out[mask] = lu.solve(rhs[mask])
        return out

    def f(self, u):
        return self.spec.f(u, self.in_k)

    def F(self, u):
        return self.spec.F(u, self.in_k)

    def df(self, u):
        return self.spec.df(u, self.in_k)

    def inner(self, u, v, which="B"):
        A = self.B if which == "B" else self.B0
        return float(u @ (A @ v))

    def norm(self, u, which="B"):
        b = self.inner(u, u, which)
        if b < 0:
            raise CoercivityError(f"negative quadratic form {b:.3e}")
        return float(np.sqrt(b))

    def mass_of(self, u):
        return float(np.sum(self.weights * u * u))


# ----------------------------------------------------------- unconstrained J

def nonlinear_I(ctx, u):
    return float(np.sum(ctx.weights * ctx.F(u)))


def nonlinear_dI(ctx, u, v):
    return float(np.sum(ctx.weights * ctx.f(u) * v))


def energy_J(ctx, u):
    u = np.asarray(u, dtype=float)
    return 0.5 * ctx.inner(u, u) - nonlinear_I(ctx, u)


def derivative_along(ctx, u, v):
    """J'(u)(v) = B(u,v) - sum w f(u) v."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return ctx.inner(u, v) - nonlinear_dI(ctx, u, v)


def euclidean_gradient(ctx, u):
    return ctx.B @ u - ctx.weights * ctx.f(u)


def gradient_B(ctx, u, mask=None):
    """Riesz representative g of J'(u): B(g, v) = J'(u)(v) for all v.

    With ``mask`` the representative is taken in the subspace of grid
    functions vanishing off the mask.
    """
    u = np.asarray(u, dtype=float)
    if mask is None:
        return u - ctx.solve(ctx.weights * ctx.f(u))
    return ctx.solve(euclidean_gradient(ctx, u), mask=mask)


def cerami_residual(ctx, u, mask=None, grad=None):
    """(1 + ||u||) ||J'(u)||, both norms in the B-geometry."""
    g = gradient_B(ctx, u, mask) if grad is None else grad
    return (1.0 + ctx.norm(u)) * ctx.norm(g)


def nehari_residual(ctx, u):
    return derivative_along(ctx, u, u)


@dataclass
class RayProfile:
    t: np.ndarray
    values: np.ndarray
    t_star: float
    plateau: tuple
    j_max: float
    plateau_detected: bool = False


def ray_max(ctx, u, t_range=RAY_RANGE, samples=RAY_SAMPLES, plateau_tol=None):
    """Maximize t -> J(t u) over t > 0.

    Log-spaced scan, golden-section refinement inside the bracketing
    samples, then a root polish of t -> J'(tu)(u).  Raises RayRangeError
    when the scan maximum sits at either end of the range.
    """
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        raise RayRangeError("ray through zero")
    ts = np.logspace(np.log10(t_range[0]), np.log10(t_range[1]), samples)
    vals = np.array([energy_J(ctx, t * u) for t in ts])
    i = int(np.argmax(vals))
    if i == samples - 1:
        raise RayRangeError("J(tu) still increasing at the end of the scan range")
    if i == 0:
        raise RayRangeError("J(tu) decreasing from the start of the scan range")

    a, b, c = ts[i - 1], ts[i], ts[i + 1]
    t_star = so.golden(lambda t: -energy_J(ctx, t * u), brack=(a, b, c), tol=1e-10)

    def dphi(t):
        return derivative_along(ctx, t * u, u)

    da, dc = dphi(a), dphi(c)
    if da > 0 > dc:
        t_star = so.brentq(dphi, a, c, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    j_max = energy_J(ctx, t_star * u)

    tol = 1e-10 * (1 + abs(j_max)) if plateau_tol is None else plateau_tol

    def edge(lo, hi, inside_hi):
        # bisection for the boundary of {t : J(tu) >= j_max - tol}
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            inside = energy_J(ctx, mid * u) >= j_max - tol
            if inside == inside_hi:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-14 * hi:
                break
        return hi

    t_min = edge(a, t_star, True)
    t_max = edge(c, t_star, True)
    delta = 1e-4
    curv = abs(dphi(t_star * (1 + delta)) - dphi(t_star * (1 - delta))) / (2 * delta * t_star)
    expected = 2 * np.sqrt(2 * tol / curv) if curv > 0 else 0.0
    plateau = curv == 0 or (t_max - t_min) > 10 * expected
    if plateau:
        t_star = 0.5 * (t_min + t_max)
        j_max = energy_J(ctx, t_star * u)
    return RayProfile(ts, vals, float(t_star), (float(t_min), float(t_max)), float(j_max), bool(plateau))


def ray_phi(ctx, u, t):
    """(t^2-1)/2 I'(u)(u) - I(tu) + I(u); nonpositive under (F4)."""
    return 0.5 * (t * t - 1) * nonlinear_dI(ctx, u, u) - nonlinear_I(ctx, t * u) + nonlinear_I(ctx, u)


def sphere_infimum(ctx, r, directions):
    """Smallest sampled J over ||u|| = r along the given directions."""
    vals = [energy_J(ctx, r * d / ctx.norm(d)) for d in directions if np.any(d)]
    return float(min(vals))


def smooth_directions(ctx, count=24, seed=0, extra=()):
    """Low-mode directions for sampling the small sphere.

    Lowest eigenvectors of (B, M), random combinations of them, and any
    ``extra`` functions (e.g. K-supported seeds or computed solutions).
    """
    from .spectral import smallest_eigenpairs

    k = min(8, ctx.size)
    vecs = smallest_eigenpairs(ctx.B, ctx.weights, k, tol=1e-6, sigma=-1.0).eigenvectors
    rng = np.random.default_rng(seed)
    dirs = [vecs[:, j] for j in range(k)] + [-vecs[:, 0]]
    for _ in range(max(0, count - len(dirs))):
        dirs.append(vecs @ (rng.standard_normal(k) / (1 + np.arange(k))))
    dirs.extend(np.asarray(e, dtype=float) for e in extra)
    return dirs


def j1_radius(ctx, directions, r0=1.0, shrink=0.5, max_halvings=60):
    """Largest r = r0 * shrink^j with positive sampled sphere infimum."""
    r = r0
    for _ in range(max_halvings):
        inf = sphere_infimum(ctx, r, directions)
        if inf > 0:
            return r, inf
        r *= shrink
    raise RayRangeError("no radius with positive sampled sphere infimum")


# --------------------------------------------------------------- normalized J0

def energy_J0(ctx, u):
    u = np.asarray(u, dtype=float)
    return 0.5 * ctx.inner(u, u, "B0") - nonlinear_I(ctx, u)


def derivative_J0(ctx, u, v):
    return ctx.inner(u, v, "B0") - nonlinear_dI(ctx, u, v)


def gradient_J0(ctx, u):
    """B0-Riesz representative of J0'(u)."""
    return u - ctx.solve(ctx.weights * ctx.f(u), "B0")


def mass_riesz(ctx, u):
    """B0-Riesz representative of v -> sum w u v (the sphere normal)."""
    return ctx.solve(ctx.weights * u, "B0")


def tangent_gradient_J0(ctx, u, grad=None):
    """Gradient of J0 projected onto the tangent space of the mass sphere.

    The projection is B0-orthogonal, along the B0-Riesz image of the
    sphere normal, so the result is M-orthogonal to u and still a descent
    direction.
    """
    g = gradient_J0(ctx, u) if grad is None else grad
    z = mass_riesz(ctx, u)
    wu = ctx.weights * u
    alpha = float(g @ wu) / float(z @ wu)
    return g - alpha * z


def lagrange_lambda(ctx, u):
    """Multiplier -J0'(u)(u)/rho of the mass constraint."""
    rho = ctx.mass_of(u)
    if rho <= 0:
        raise DomainError("zero mass: multiplier undefined")
    return -derivative_J0(ctx, u, u) / rho


def stationarity_residual(ctx, u):
    """B0-norm of grad J0(u) + lambda * (B0-Riesz of M u)."""
    lam = lagrange_lambda(ctx, u)
    return ctx.norm(gradient_J0(ctx, u) + lam * mass_riesz(ctx, u), "B0")


@dataclass(frozen=True)
class GNExponents:
    delta_p: float
    delta_p_times_p: float
    mass_critical: float
    subcritical: bool

    def to_dict(self):
        return {"delta_p": self.delta_p, "delta_p_times_p": self.delta_p_times_p,
                "mass_critical": self.mass_critical, "subcritical": self.subcritical}


def gn_exponents(p, N):
    """Gagliardo-Nirenberg exponent N(1/2 - 1/p) and the mass-critical power 2 + 4/N."""
    if not p > 2:
        raise DomainError(f"p must exceed 2, got {p}")
    delta = N * (0.5 - 1.0 / p)
    crit = 2.0 + 4.0 / N
    return GNExponents(delta, N * (p / 2.0 - 1.0), crit, p < crit)
