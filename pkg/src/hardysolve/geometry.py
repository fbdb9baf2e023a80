"""Domains, the superlinearity region K and cell-centered grids.

Two convex domains are supported: a ball of radius R in dimension N >= 3,
treated in the radially symmetric subspace (1-D grid in r), and an
axis-aligned box in R^3 with a full tensor grid.  Nodes are cell centers,
so no node sits on the origin or on the boundary.
"""

from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np

from .errors import ConditionViolated, ConfigError, DomainError, ResolutionError

MIN_RESOLUTION = 8


def sphere_area(N):
    """Surface area of the unit sphere in R^N."""
    return 2.0 * pi ** (N / 2) / gamma(N / 2)


@dataclass(frozen=True)
class DomainSpec:
    kind: str  # "ball" or "box"
    dimension: int
    radius: float = None
    bounds: tuple = None

    def __post_init__(self):
        if self.dimension < 3:
            raise ConfigError(f"dimension must be >= 3, got {self.dimension}")
        if self.kind == "ball":
            if self.radius is None or not self.radius > 0:
                raise ConfigError("ball radius must be positive")
        elif self.kind == "box":
            if self.dimension != 3:
                raise ConfigError("box domains are three-dimensional")
            if self.bounds is None or len(self.bounds) != 3:
                raise ConfigError("box needs three (a, b) intervals")
            for a, b in self.bounds:
                if not a < 0 < b:
                    raise ConfigError(f"origin must lie strictly inside, got [{a}, {b}]")
        else:
            raise ConfigError(f"unknown domain kind {self.kind!r}")

    @classmethod
    def ball(cls, radius=1.0, dimension=3):
        return cls("ball", int(dimension), radius=float(radius))

    @classmethod
    def box(cls, bounds):
        bounds = tuple((float(a), float(b)) for a, b in bounds)
        return cls("box", 3, bounds=bounds)

    @property
    def volume(self):
        if self.kind == "ball":
            return sphere_area(self.dimension) * self.radius ** self.dimension / self.dimension
        return float(np.prod([b - a for a, b in self.bounds]))

    def to_dict(self):
        if self.kind == "ball":
            return {"variant": "ball", "radius": self.radius, "dimension": self.dimension}
        return {"variant": "box", "bounds": [list(ab) for ab in self.bounds]}


@dataclass(frozen=True)
class RegionK:
    kind: str  # "annulus", "box" or "empty"
    r_lo: float = None
    r_hi: float = None
    bounds: tuple = None

    def __post_init__(self):
        if self.kind == "annulus":
            if not 0 <= self.r_lo < self.r_hi:
                raise ConfigError(f"annulus needs 0 <= r_lo < r_hi, got ({self.r_lo}, {self.r_hi})")
        elif self.kind == "box":
            if self.bounds is None or any(not a < b for a, b in self.bounds):
                raise ConfigError("sub-box needs intervals with a < b")
        elif self.kind != "empty":
            raise ConfigError(f"unknown region kind {self.kind!r}")

    @classmethod
    def annulus(cls, r_lo, r_hi):
        return cls("annulus", r_lo=float(r_lo), r_hi=float(r_hi))

    @classmethod
    def sub_box(cls, bounds):
        return cls("box", bounds=tuple((float(a), float(b)) for a, b in bounds))

    @classmethod
    def empty(cls):
        return cls("empty")

    @property
    def has_interior(self):
        return self.kind != "empty"

    def to_dict(self):
        if self.kind == "annulus":
            return {"variant": "annulus", "r_lo": self.r_lo, "r_hi": self.r_hi}
        if self.kind == "box":
            return {"variant": "box", "bounds": [list(ab) for ab in self.bounds]}
        return {"variant": "empty"}


@dataclass(frozen=True, eq=False)
class Grid:
    """Cell-centered grid.

    For a ball ``coords`` is the 1-D array of radii; for a box it is an
    ``(n, 3)`` array of points in C order over ``shape``.
    """

    domain: DomainSpec
    resolution: int
    coords: np.ndarray
    weights: np.ndarray
    dist_origin: np.ndarray
    dist_boundary: np.ndarray
    spacing: tuple
    shape: tuple = field(default=None)

    @property
    def radial(self):
        return self.domain.kind == "ball"

    @property
    def size(self):
        return self.weights.size

    @property
    def dimension(self):
        return self.domain.dimension


def cell_centers(a, b, m):
    """The m cell centers of a uniform partition of [a, b]."""
    h = (b - a) / m
    return a + (np.arange(m) + 0.5) * h


def distance_to_boundary(domain, point):
    """Distance from ``point`` to the complement of the domain.

    For a ball ``point`` may be a full coordinate vector or a scalar radius.
    """
    x = np.atleast_1d(np.asarray(point, dtype=float))
    tol = 1e-14
    if domain.kind == "ball":
        r = float(np.linalg.norm(x))
        if r > domain.radius * (1 + tol):
            raise DomainError(f"|x| = {r} lies outside the ball of radius {domain.radius}")
        return max(domain.radius - r, 0.0)
    if x.size != 3:
        raise DomainError("box points need three coordinates")
    gaps = [min(xi - a, b - xi) for xi, (a, b) in zip(x, domain.bounds)]
    d = min(gaps)
    if d < -tol:
        raise DomainError(f"point {x.tolist()} lies outside the box")
    return max(d, 0.0)


@dataclass(frozen=True)
class ConditionReport:
    holds: bool
    reason: str


def check_condition_C(domain):
    """Superharmonicity of the boundary distance; true for convex domains."""
    if domain.kind == "ball":
        return ConditionReport(True, "ball is convex, so d is concave and -Laplace(d) >= 0")
    return ConditionReport(True, "box is convex, so d is concave and -Laplace(d) >= 0")


def check_condition_N(mu, nu, N):
    """Coercivity margin 1/4 - mu/(N-2)^2 - nu.

    The condition holds iff the margin is strictly positive.  Negative
    parameters or N < 3 raise rather than returning a margin.
    """
    if N < 3:
        raise ConditionViolated(f"N = {N} < 3", clause="N>=3")
    if mu < 0:
        raise ConditionViolated(f"mu = {mu} < 0", clause="mu>=0")
    if nu < 0:
        raise ConditionViolated(f"nu = {nu} < 0", clause="nu>=0")
    return 0.25 - mu / (N - 2) ** 2 - nu


def coercivity_factor(mu, nu, N):
    """Lower bound factor 1 - 4 mu/(N-2)^2 - 4 nu in B(u,u) >= factor*|grad u|^2."""
    return 4.0 * check_condition_N(mu, nu, N)


def build_grid(domain, resolution):
    """Cell-centered grid with ``resolution`` cells per radius or per axis."""
    resolution = int(resolution)
    if resolution < MIN_RESOLUTION:
        raise ConfigError(f"resolution must be >= {MIN_RESOLUTION}, got {resolution}")

    if domain.kind == "ball":
        R, N = domain.radius, domain.dimension
        h = R / resolution
        r = cell_centers(0.0, R, resolution)
        w = sphere_area(N) * r ** (N - 1) * h
        return Grid(domain, resolution, r, w, r.copy(), R - r, (h,), (resolution,))

    axes = [cell_centers(a, b, resolution) for a, b in domain.bounds]
    hs = tuple((b - a) / resolution for a, b in domain.bounds)
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=1)
    lo = np.array([a for a, _ in domain.bounds])
    hi = np.array([b for _, b in domain.bounds])
    dist_b = np.minimum(pts - lo, hi - pts).min(axis=1)
    dist_o = np.linalg.norm(pts, axis=1)
    if dist_o.min() <= 0:
        raise ConfigError("a cell center falls on the origin; change the resolution")
    n = pts.shape[0]
    w = np.full(n, float(np.prod(hs)))
    return Grid(domain, resolution, pts, w, dist_o, dist_b, hs,
                (resolution,) * 3)


def k_mask(grid, region):
    """Boolean mask of nodes lying in the interior of ``region``."""
    if region.kind == "empty":
        return np.zeros(grid.size, dtype=bool)

    dom = grid.domain
    if region.kind == "annulus":
        if dom.kind == "ball" and region.r_hi > dom.radius * (1 + 1e-12):
            raise DomainError("annulus extends beyond the ball")
        r = grid.dist_origin
        mask = (r > region.r_lo) & (r < region.r_hi)
    else:
        if grid.radial:
            raise ConfigError("a sub-box region needs a box domain")
        for (a, b), (lo, hi) in zip(region.bounds, dom.bounds):
            if a < lo - 1e-12 or b > hi + 1e-12:
                raise DomainError("sub-box extends beyond the domain")
        x = grid.coords
        mask = np.ones(grid.size, dtype=bool)
        for axis, (a, b) in enumerate(region.bounds):
            mask &= (x[:, axis] > a) & (x[:, axis] < b)

    if not mask.any():
        raise ResolutionError(f"no grid node inside region {region.to_dict()}; refine the grid")
    return mask
