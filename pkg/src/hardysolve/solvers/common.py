"""Configuration, reports, seeds and the deflation operator."""

from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError

ROUNDOFF = 1e-13


@dataclass(frozen=True)
class SolverConfig:
    max_iter: int = 2000
    step0: float = 1.0
    shrink: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 50
    tol: float = 1e-7
    path_nodes: int = 21
    seed: int = 0
    separation_rel: float = 1e-3
    extra_seeds: int = 4
    norm_cap: float = 1e6
    newton_max_iter: int = 60
    deflation_power: float = 2.0
    deflation_shift: float = 1.0
    stall_window: int = 50
    polish_drift: float = 1e-3

    def __post_init__(self):
        if self.tol <= 0 or self.step0 <= 0 or not 0 < self.shrink < 1 or self.armijo <= 0:
            raise ConfigError("tolerances, step and shrink factor must be positive (shrink < 1)")
        if self.path_nodes < 11:
            raise ConfigError("path needs at least 11 nodes")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be positive")

    def to_dict(self):
        return asdict(self)


@dataclass
class SolutionReport:
    u: np.ndarray
    energy: float
    cerami_residual: float
    nehari_residual: float
    level_bracket: dict = field(default_factory=dict)
    multiplier: float = None
    iterations: int = 0
    converged: bool = False
    seed: str = ""
    method: str = ""
    log: list = field(default_factory=list, repr=False)
    diagnostics: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def summary(self):
        """JSON-ready dict without the field values and the iterate log."""
        out = {
            "method": self.method,
            "energy": self.energy,
            "cerami_residual": self.cerami_residual,
            "nehari_residual": self.nehari_residual,
            "level_bracket": self.level_bracket,
            "multiplier": self.multiplier,
            "iterations": self.iterations,
            "converged": self.converged,
            "seed": self.seed,
            "diagnostics": self.diagnostics,
            "solver_config": self.config,
        }
        return out


def _unit(s):
    return np.clip(s, 0.0, 1.0)


def k_seeds(grid, mask, count):
    """``count`` seeds supported on ``mask`` with 0, 1, 2, ... sign changes.

    Radial grids use cos((j+1/2) pi s) when the mask reaches the center and
    sin((j+1) pi s) otherwise, with s in [0, 1] across the masked radii.
    Box grids oscillate along the first axis of the masked bounding box.
    """
    mask = np.asarray(mask, dtype=bool)
    seeds = []
    if grid.radial:
        r = grid.coords
        h = grid.spacing[0]
        lo = r[mask].min() - h / 2
        hi = r[mask].max() + h / 2
        s = _unit((r - lo) / (hi - lo))
        centered = lo <= 1e-12
        for j in range(count):
            v = np.cos((j + 0.5) * np.pi * s) if centered else np.sin((j + 1) * np.pi * s)
            seeds.append(np.where(mask, v, 0.0))
        return seeds

    x = grid.coords
    pts = x[mask]
    lo = pts.min(axis=0) - np.array(grid.spacing) / 2
    hi = pts.max(axis=0) + np.array(grid.spacing) / 2
    s = _unit((x - lo) / (hi - lo))
    base = np.sin(np.pi * s[:, 1]) * np.sin(np.pi * s[:, 2])
    for j in range(count):
        v = np.sin((j + 1) * np.pi * s[:, 0]) * base
        seeds.append(np.where(mask, v, 0.0))
    return seeds


def disjoint_seeds(grid, count, rho):
    """``count`` mass-rho bumps with pairwise disjoint supports.

    Radial grids split [0, R] into concentric shells, boxes into slabs
    along the first axis.
    """
    if grid.radial:
        coord = grid.coords / grid.domain.radius
    else:
        (a, b) = grid.domain.bounds[0]
        coord = (grid.coords[:, 0] - a) / (b - a)
    edges = np.linspace(0.0, 1.0, count + 1)
    seeds = []
    for j in range(count):
        lo, hi = edges[j], edges[j + 1]
        inside = (coord > lo) & (coord < hi)
        if not inside.any():
            raise ConfigError(f"grid too coarse for {count} disjoint seeds")
        s = (coord - lo) / (hi - lo)
        v = np.where(inside, np.sin(np.pi * s), 0.0)
        if not grid.radial:
            v = v * _box_transverse(grid)
        v = v * np.sqrt(rho / np.sum(grid.weights * v * v))
        seeds.append(v)
    return seeds


def _box_transverse(grid):
    out = np.ones(grid.size)
    for axis in (1, 2):
        a, b = grid.domain.bounds[axis]
        out *= np.sin(np.pi * (grid.coords[:, axis] - a) / (b - a))
    return out


def positive_bump(grid):
    """Smooth positive function vanishing at the boundary."""
    if grid.radial:
        return np.cos(0.5 * np.pi * grid.coords / grid.domain.radius)
    out = np.ones(grid.size)
    for axis, (a, b) in enumerate(grid.domain.bounds):
        out *= np.sin(np.pi * (grid.coords[:, axis] - a) / (b - a))
    return out


class Deflation:
    """Multiplicative deflation against found solutions and their negatives.

    m(u) = prod_j (||u - u_j||^-p + shift) (||u + u_j||^-p + shift), with
    norms taken through ``inner(a, b)`` (a quadratic form) and ``apply(a)``
    (the matrix of that form applied to a vector).
    """

    def __init__(self, apply, power=2.0, shift=1.0):
        self.apply = apply
        self.power = power
        self.shift = shift
        self.solutions = []

    def add(self, u):
        self.solutions.append(np.asarray(u, dtype=float).copy())

    def _terms(self, u):
        for uj in self.solutions:
            for diff in (u - uj, u + uj):
                Ad = self.apply(diff)
                yield diff, Ad, float(diff @ Ad)

    def value(self, u):
        m = 1.0
        for _, _, a2 in self._terms(u):
            if a2 <= 0:
                return np.inf
            m *= a2 ** (-self.power / 2) + self.shift
        return m

    def grad_log(self, u):
        """Gradient of log m(u) (Euclidean coordinates)."""
        g = np.zeros_like(u, dtype=float)
        for _, Ad, a2 in self._terms(u):
            fac = a2 ** (-self.power / 2) + self.shift
            g -= self.power * a2 ** (-self.power / 2 - 1) * Ad / fac
        return g

    def scale_step(self, u, step):
        """Deflated Newton step from the undeflated one (Sherman-Morrison)."""
        if not self.solutions:
            return step
        denom = 1.0 - float(self.grad_log(u) @ step)
        if abs(denom) < 1e-12:
            return step
        return step / denom


def backtrack(fun, f0, slope, cfg):
    """Armijo backtracking along a fixed direction; ``slope`` > 0 is the
    predicted decrease rate.  Returns (step, value) or (0, f0).

    Near convergence the predicted decrease falls below the round-off of
    the energy itself, so there ties within ROUNDOFF * (1 + |f0|) count.
    """
    s = cfg.step0
    slack = ROUNDOFF * (1.0 + abs(f0))
    for _ in range(cfg.max_backtracks):
        val = fun(s)
        if val <= f0 - cfg.armijo * s * slope:
            return s, val
        if cfg.armijo * s * slope < slack and val <= f0 + slack:
            return s, val
        s *= cfg.shrink
    return 0.0, f0
