"""Generalized symmetric eigenproblems: Hardy constants, the singular
operator on the complement of K and the non-resonance condition (A)."""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import restrict_to_complement
from .errors import InconclusiveError, PreconditionError, SolverError, TheoryViolation

DENSE_LIMIT = 2000


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray      # columns, M-orthonormal
    residuals: np.ndarray
    theta_sup: float = 0.0
    condition_A_margin: float = None
    index: np.ndarray = field(default=None, repr=False)

    @property
    def k(self):
        return self.eigenvalues.size

    def to_dict(self):
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "residuals": self.residuals.tolist(),
            "theta_sup": self.theta_sup,
            "condition_A_margin": self.condition_A_margin,
        }


def _diag_of(M):
    if sp.issparse(M):
        off = M - sp.diags(M.diagonal())
        if off.count_nonzero():
            raise PreconditionError("mass matrix must be diagonal")
        return np.asarray(M.diagonal(), dtype=float)
    M = np.asarray(M, dtype=float)
    if M.ndim == 2:
        if np.count_nonzero(M - np.diag(np.diag(M))):
            raise PreconditionError("mass matrix must be diagonal")
        return np.diag(M).copy()
    return M


def smallest_eigenpairs(A, M, k, tol=1e-8, sigma=None, seed=0):
    """k smallest eigenpairs of A v = lam M v with M diagonal positive.

    Dimensions up to ``DENSE_LIMIT`` use a dense symmetric solve of the
    scaled matrix D^-1/2 A D^-1/2; larger problems use shift-invert
    Lanczos around ``sigma`` (which should lie below the spectrum).
    """
    m = _diag_of(M)
    n = m.size
    if A.shape != (n, n):
        raise PreconditionError(f"A has shape {A.shape}, M has size {n}")
    if k < 1:
        raise PreconditionError("k must be >= 1")
    if np.any(m <= 0):
        raise PreconditionError("mass diagonal must be positive")
    k = min(k, n)
    s = 1.0 / np.sqrt(m)

    if n <= DENSE_LIMIT or k >= n - 1:
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        C = s[:, None] * dense * s[None, :]
        C = 0.5 * (C + C.T)
        vals, Y = sla.eigh(C, subset_by_index=[0, k - 1])
        vecs = s[:, None] * Y
    else:
        A = sp.csc_matrix(A)
        if sigma is None:
            C = sp.diags(s) @ A @ sp.diags(s)
            radius = np.asarray(abs(C).sum(axis=1)).ravel() - np.abs(C.diagonal())
            sigma = float(np.min(C.diagonal() - radius)) - 1.0
        rng = np.random.default_rng(seed)
        try:
            vals, vecs = spla.eigsh(A, k=k, M=sp.diags(m, format="csc"), sigma=sigma,
                                    which="LM", v0=rng.standard_normal(n), tol=tol * 1e-3)
        except spla.ArpackNoConvergence as exc:
            raise SolverError("shift-invert Lanczos did not converge",
                              residuals=getattr(exc, "eigenvalues", None)) from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
        vecs = vecs / np.sqrt(np.sum(m[:, None] * vecs ** 2, axis=0))

    Mv = m[:, None] * vecs
    res = np.linalg.norm(A @ vecs - Mv * vals[None, :], axis=0) / np.linalg.norm(Mv, axis=0)
    if np.any(res > tol):
        raise SolverError(f"eigenpair residuals {res.max():.2e} exceed tol {tol:.1e}",
                          residuals=res)
    return SpectrumReport(np.asarray(vals), vecs, res)


def hardy_constant_origin(ops, tol=1e-8):
    """Smallest eigenvalue of the pencil (L, P_origin)."""
    return float(smallest_eigenpairs(ops.L, ops.origin, 1, tol=tol, sigma=0.0).eigenvalues[0])


def hardy_constant_boundary(ops, tol=1e-8):
    """Smallest eigenvalue of the pencil (L, P_boundary)."""
    return float(smallest_eigenpairs(ops.L, ops.boundary, 1, tol=tol, sigma=0.0).eigenvalues[0])


def operator_A(ops_restricted, mu, nu, theta):
    """Matrix of the singular Schroedinger operator L - mu P_o - nu P_b - T."""
    th = ops_restricted.node_values(theta)
    diag = mu * ops_restricted.origin + nu * ops_restricted.boundary + ops_restricted.mass * th
    return (ops_restricted.L - sp.diags(diag)).tocsr(), th


def spectrum_A(ops_restricted, mu, nu, theta, k=6, tol=1e-8):
    """k smallest eigenvalues of the singular operator on the complement of K.

    Raises TheoryViolation if the first eigenvalue drops to -|Theta|_inf,
    which the continuum theory forbids.
    """
    A, th = operator_A(ops_restricted, mu, nu, theta)
    theta_sup = float(np.max(np.abs(th))) if th.size else 0.0
    rep = smallest_eigenpairs(A, ops_restricted.mass, k, tol=tol, sigma=-theta_sup - 1.0)
    rep.theta_sup = theta_sup
    rep.index = ops_restricted.index
    if rep.eigenvalues[0] <= -theta_sup - 1e-10 * (1.0 + theta_sup):
        raise TheoryViolation(f"lambda_1 = {rep.eigenvalues[0]:.6g} <= -|Theta|_inf = {-theta_sup:.6g}")
    return rep


@dataclass(frozen=True)
class ConditionAReport:
    margin: float
    satisfied: bool
    sufficient: bool
    tol: float
    lambda_1: float

    def to_dict(self):
        return {"margin": self.margin, "satisfied": self.satisfied,
                "sufficient_lambda_ge_theta_sup": self.sufficient, "tol": self.tol,
                "lambda_1": self.lambda_1}


def check_condition_A(lam, spectrum, tol=None, n_total=None):
    """Distance of -lam from the computed spectrum.

    ``n_total`` is the full dimension; when all eigenvalues are known the
    check is conclusive regardless of where -lam falls.
    """
    if tol is None:
        tol = 1e-3 * (1.0 + abs(lam))
    vals = spectrum.eigenvalues
    sufficient = lam >= spectrum.theta_sup
    complete = n_total is not None and spectrum.k >= n_total
    if not (sufficient or complete) and vals[-1] <= -lam:
        raise InconclusiveError(f"computed eigenvalues stop at {vals[-1]:.6g} <= -lambda; widen k")
    margin = float(np.min(np.abs(vals + lam)))
    spectrum.condition_A_margin = margin
    return ConditionAReport(margin, margin > tol, sufficient, tol, float(vals[0]))


def condition_A(ops, mask, mu, nu, theta, lam, k=6, tol=None):
    """Restrict to the complement of K, widen k as needed and check (A)."""
    ops_r = restrict_to_complement(ops, mask)
    n = ops_r.size
    while True:
        rep = spectrum_A(ops_r, mu, nu, theta, k=min(k, n))
        try:
            return check_condition_A(lam, rep, tol=tol, n_total=n), rep
        except InconclusiveError:
            if k >= n:
                raise
            k *= 2
