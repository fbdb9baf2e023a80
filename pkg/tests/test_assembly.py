import numpy as np
import pytest
import scipy.linalg as sla

from hardysolve.assembly import assemble, bilinear_B, norm_B, restrict_to_complement
from hardysolve.errors import CoercivityError, EmptyProblemError
from hardysolve.geometry import DomainSpec, RegionK, build_grid, coercivity_factor, k_mask
from hardysolve.spectral import smallest_eigenpairs

from oracles import radial_dirichlet_eigenvalues


def _dense_pencil(A, M):
    return sla.eigh(A.toarray(), np.diag(M), eigvals_only=True)


def test_symmetry(ball_ops, box_ops):
    for ops in (ball_ops, box_ops):
        L = ops.L.toarray()
        assert np.max(np.abs(L - L.T)) <= 1e-12
        assert np.all(ops.mass > 0) and np.all(ops.origin > 0) and np.all(ops.boundary > 0)


def test_radial_first_eigenvalue():
    ops = assemble(build_grid(DomainSpec.ball(1.0, 3), 200))
    lam = smallest_eigenpairs(ops.L, ops.mass, 1).eigenvalues[0]
    ref = radial_dirichlet_eigenvalues(1)[0]
    assert ref == pytest.approx(np.pi ** 2, rel=1e-8)
    assert lam == pytest.approx(ref, rel=1e-2)


def test_box_first_eigenvalue():
    ops = assemble(build_grid(DomainSpec.box([(-1, 1)] * 3), 16))
    lam = smallest_eigenpairs(ops.L, ops.mass, 1).eigenvalues[0]
    assert lam == pytest.approx(3 * np.pi ** 2 / 4, rel=3e-2)


def test_bilinear_reduces_to_dirichlet_energy(ball_ops, rng):
    u, v = rng.standard_normal((2, ball_ops.size))
    assert bilinear_B(ball_ops, 0, 0, 0, u, v) == pytest.approx(u @ (ball_ops.L @ v))
    assert bilinear_B(ball_ops, 1.3, 0.1, 0.05, u, v) == pytest.approx(bilinear_B(ball_ops, 1.3, 0.1, 0.05, v, u))


@pytest.mark.parametrize("mu,nu", [(0.1, 0.1), (0.2, 0.0), (0.0, 0.2)])
def test_norm_equivalence(ball_ops, box_ops, rng, mu, nu):
    fac = coercivity_factor(mu, nu, 3)
    for ops in (ball_ops, box_ops):
        for _ in range(10):
            u = rng.standard_normal(ops.size)
            lu = u @ (ops.L @ u)
            b = bilinear_B(ops, 0.7, mu, nu, u, u)
            assert fac * lu <= b + 1e-10 * lu
            assert b <= lu + 0.7 * np.sum(ops.mass * u * u) + 1e-10 * lu


def test_norm_examples(ball_ops, rng):
    u = rng.standard_normal(ball_ops.size)
    assert norm_B(ball_ops, 0, 0, 0, np.zeros_like(u)) == 0.0
    for t in (-3.0, 0.5, 2.0):
        assert norm_B(ball_ops, 1, 0.1, 0.1, t * u) == pytest.approx(abs(t) * norm_B(ball_ops, 1, 0.1, 0.1, u))
    direct = np.sqrt(u @ (ball_ops.L @ u) + np.sum(ball_ops.mass * u * u))
    assert norm_B(ball_ops, 1, 0, 0, u) == pytest.approx(direct)


def test_norm_detects_indefinite(ball_ops, rng):
    u = rng.standard_normal(ball_ops.size)
    with pytest.raises(CoercivityError):
        norm_B(ball_ops, -1e4, 0, 0, u)


def test_restrict_examples(ball_ops, ball_grid):
    assert restrict_to_complement(ball_ops, np.zeros(ball_ops.size, bool)) is ball_ops
    with pytest.raises(EmptyProblemError):
        restrict_to_complement(ball_ops, np.ones(ball_ops.size, bool))


def test_restrict_domain_monotonicity():
    g = build_grid(DomainSpec.ball(1.0, 3), 100)
    ops = assemble(g)
    mask = k_mask(g, RegionK.annulus(0.4, 0.6))
    ops_r = restrict_to_complement(ops, mask)
    assert ops_r.size == g.size - mask.sum()
    full = _dense_pencil(ops.L, ops.mass)[:5]
    part = _dense_pencil(ops_r.L, ops_r.mass)[:5]
    assert np.all(part >= full - 1e-9)


def test_discrete_hardy_bounds_hold_with_margin(ball_ops, rng):
    # Rayleigh quotients against the potentials never drop below the continuum constants
    for _ in range(20):
        u = rng.standard_normal(ball_ops.size)
        lu = u @ (ball_ops.L @ u)
        assert lu >= 0.25 * np.sum(ball_ops.origin * u * u)
        assert lu >= 0.25 * np.sum(ball_ops.boundary * u * u)


def test_theta_matrix(ball_ops):
    th = np.linspace(0, 1, ball_ops.size)
    T = ball_ops.T(th)
    assert np.allclose(T.diagonal(), ball_ops.mass * th)
    assert np.allclose(ball_ops.T(0.5).diagonal(), 0.5 * ball_ops.mass)
