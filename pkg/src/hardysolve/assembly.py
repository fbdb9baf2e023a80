"""Sparse discrete operators and the quadratic form B.

All matrices act on values at interior (cell-center) nodes; the
homogeneous Dirichlet condition is built in by elimination.  ``L`` is the
stiffness matrix, i.e. ``u @ L @ u`` approximates the Dirichlet integral,
and the diagonal matrices carry quadrature weights, so every quadratic
form here approximates the corresponding integral.
"""

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .errors import CoercivityError, EmptyProblemError, PreconditionError
from .geometry import sphere_area


@dataclass(frozen=True, eq=False)
class OperatorSet:
    L: sp.csr_matrix
    mass: np.ndarray          # diagonal of M
    origin: np.ndarray        # diagonal of P_origin: w / |x|^2
    boundary: np.ndarray      # diagonal of P_boundary: w / d^2
    grid: object
    index: np.ndarray         # grid node of each unknown

    @property
    def size(self):
        return self.mass.size

    @property
    def M(self):
        return sp.diags(self.mass, format="csr")

    @property
    def P_origin(self):
        return sp.diags(self.origin, format="csr")

    @property
    def P_boundary(self):
        return sp.diags(self.boundary, format="csr")

    def T(self, theta):
        """Diagonal matrix of w * Theta at the unknowns.

        ``theta`` is a scalar, a table over the unknowns, or a table over
        all grid nodes.
        """
        return sp.diags(self.mass * self.node_values(theta), format="csr")

    def node_values(self, values):
        values = np.asarray(values, dtype=float)
        if values.ndim == 0:
            return np.full(self.size, float(values))
        if values.size == self.size:
            return values
        if values.size == self.grid.size:
            return values[self.index]
        raise PreconditionError(f"table of length {values.size} fits neither "
                                f"{self.size} unknowns nor {self.grid.size} nodes")

    def b_matrix(self, lam, mu, nu):
        """Matrix of B: L + lam M - mu P_origin - nu P_boundary."""
        diag = lam * self.mass - mu * self.origin - nu * self.boundary
        return (self.L + sp.diags(diag)).tocsr()


def _radial_stiffness(grid):
    R, N = grid.domain.radius, grid.domain.dimension
    m = grid.resolution
    h = grid.spacing[0]
    om = sphere_area(N)
    faces = (np.arange(1, m)) * h
    flux = om * faces ** (N - 1) / h
    diag = np.zeros(m)
    diag[:-1] += flux
    diag[1:] += flux
    # Dirichlet at r = R sits half a cell beyond the last center
    diag[-1] += om * R ** (N - 1) / (h / 2)
    return sp.diags([-flux, diag, -flux], [-1, 0, 1], format="csr")


def _dirichlet_1d(m, h):
    main = np.full(m, 2.0)
    main[0] = main[-1] = 3.0
    off = -np.ones(m - 1)
    return sp.diags([off, main, off], [-1, 0, 1]) / h


def _box_stiffness(grid):
    m = grid.resolution
    hx, hy, hz = grid.spacing
    eye = sp.identity(m, format="csr")
    kx, ky, kz = (_dirichlet_1d(m, h) for h in (hx, hy, hz))
    L = (hy * hz * sp.kron(sp.kron(kx, eye), eye)
         + hx * hz * sp.kron(sp.kron(eye, ky), eye)
         + hx * hy * sp.kron(sp.kron(eye, eye), kz))
    return L.tocsr()


def assemble(grid):
    """Stiffness, mass and singular-potential operators on ``grid``."""
    L = _radial_stiffness(grid) if grid.radial else _box_stiffness(grid)
    L = ((L + L.T) * 0.5).tocsr()
    w = grid.weights
    return OperatorSet(
        L=L,
        mass=w.copy(),
        origin=w / grid.dist_origin ** 2,
        boundary=w / grid.dist_boundary ** 2,
        grid=grid,
        index=np.arange(grid.size),
    )


def bilinear_B(ops, lam, mu, nu, u, v):
    """B(u, v) = u^T (L + lam M - mu P_origin - nu P_boundary) v."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    pot = lam * ops.mass - mu * ops.origin - nu * ops.boundary
    return float(u @ (ops.L @ v) + np.sum(pot * u * v))


def norm_B(ops, lam, mu, nu, u):
    b = bilinear_B(ops, lam, mu, nu, u, u)
    if b < 0:
        raise CoercivityError(f"B(u,u) = {b:.3e} < 0; check condition (N) and lambda")
    return float(np.sqrt(b))


def restrict_to_complement(ops, mask):
    """Operators on the unknowns outside ``mask`` (zero Dirichlet data on it)."""
    mask = np.asarray(mask, dtype=bool)
    if mask.size == ops.grid.size and ops.size != ops.grid.size:
        mask = mask[ops.index]
    if mask.size != ops.size:
        raise PreconditionError("mask does not match the operator size")
    keep = np.flatnonzero(~mask)
    if keep.size == 0:
        raise EmptyProblemError("mask covers every node; nothing left outside K")
    if keep.size == ops.size:
        return ops
    L = ops.L[keep][:, keep].tocsr()
    return replace(ops, L=L, mass=ops.mass[keep], origin=ops.origin[keep],
                   boundary=ops.boundary[keep], index=ops.index[keep])
