import numpy as np
import pytest
import scipy.sparse as sp

from hardysolve.assembly import assemble, restrict_to_complement
from hardysolve.errors import InconclusiveError, SolverError
from hardysolve.geometry import DomainSpec, RegionK, build_grid, k_mask
from hardysolve.spectral import (
    check_condition_A,
    condition_A,
    hardy_constant_boundary,
    hardy_constant_origin,
    smallest_eigenpairs,
    spectrum_A,
)

from oracles import radial_dirichlet_eigenvalues


def test_trivial_pencils():
    M = np.array([1.0, 2.0, 3.0])
    rep = smallest_eigenpairs(sp.diags(M).tocsr(), M, 3)
    assert np.allclose(rep.eigenvalues, 1.0)
    rep = smallest_eigenpairs(sp.diags([1.0, 2.0, 3.0]).tocsr(), np.ones(3), 2)
    assert np.allclose(rep.eigenvalues, [1.0, 2.0])
    assert np.all(np.diff(rep.eigenvalues) >= 0)


def test_radial_spectrum_against_shooting():
    ops = assemble(build_grid(DomainSpec.ball(1.0, 3), 200))
    rep = smallest_eigenpairs(ops.L, ops.mass, 3)
    ref = radial_dirichlet_eigenvalues(3)
    assert np.allclose(ref, (np.arange(1, 4) * np.pi) ** 2, rtol=1e-8)
    assert np.allclose(rep.eigenvalues, ref, rtol=1e-2)
    assert max(rep.residuals) <= 1e-8


def test_iterative_path_matches_dense():
    # 14^3 = 2744 unknowns is above the dense limit
    ops = assemble(build_grid(DomainSpec.box([(-1, 1)] * 3), 14))
    rep = smallest_eigenpairs(ops.L, ops.mass, 2)
    assert rep.eigenvalues[0] == pytest.approx(3 * np.pi ** 2 / 4, rel=3e-2)
    assert max(rep.residuals) <= 1e-8


def test_residual_guard():
    A = sp.diags([1.0, 2.0, 3.0]).tocsr()
    with pytest.raises(SolverError):
        smallest_eigenpairs(A, np.ones(3), 1, tol=-1.0)


def test_hardy_constants_ball():
    ops = assemble(build_grid(DomainSpec.ball(1.0, 3), 100))
    assert hardy_constant_origin(ops) >= 0.25
    assert hardy_constant_boundary(ops) >= 0.25
    ops5 = assemble(build_grid(DomainSpec.ball(1.0, 5), 100))
    assert hardy_constant_origin(ops5) >= 2.25


def test_hardy_refinement_decreases():
    vals_o, vals_b = [], []
    for m in (50, 100, 200):
        ops = assemble(build_grid(DomainSpec.ball(1.0, 3), m))
        vals_o.append(hardy_constant_origin(ops))
        vals_b.append(hardy_constant_boundary(ops))
    for vals in (vals_o, vals_b):
        assert all(v >= 0.25 for v in vals)
        assert vals[0] > vals[1] > vals[2]


def test_hardy_boundary_box():
    ops = assemble(build_grid(DomainSpec.box([(-1, 1)] * 3), 10))
    assert hardy_constant_boundary(ops) >= 0.25


@pytest.fixture(scope="module")
def annulus_setup():
    g = build_grid(DomainSpec.ball(1.0, 3), 100)
    ops = assemble(g)
    mask = k_mask(g, RegionK.annulus(0.4, 0.6))
    return g, ops, mask, restrict_to_complement(ops, mask)


def test_spectrum_A_positive_without_potentials(annulus_setup):
    *_, ops_r = annulus_setup
    rep = spectrum_A(ops_r, 0, 0, 0.0)
    assert rep.eigenvalues[0] > 0
    assert rep.theta_sup == 0


def test_spectrum_A_bound(annulus_setup):
    *_, ops_r = annulus_setup
    rep = spectrum_A(ops_r, 0.1, 0.1, 0.5)
    assert rep.eigenvalues[0] > -0.5
    assert rep.theta_sup == pytest.approx(0.5)


@pytest.mark.parametrize("c", [0.3, 2.0, 17.5])
def test_spectrum_A_shift_covariance(annulus_setup, c):
    *_, ops_r = annulus_setup
    base = spectrum_A(ops_r, 0.1, 0.05, 0.0).eigenvalues
    shifted = spectrum_A(ops_r, 0.1, 0.05, c).eigenvalues
    assert np.max(np.abs(shifted - (base - c))) <= 1e-12 * max(1.0, np.abs(base).max())


def test_domain_monotonicity_in_K():
    g = build_grid(DomainSpec.ball(1.0, 3), 100)
    ops = assemble(g)
    small = k_mask(g, RegionK.annulus(0.45, 0.55))
    large = k_mask(g, RegionK.annulus(0.3, 0.7))
    l_small = spectrum_A(restrict_to_complement(ops, small), 0.1, 0.1, 0.5).eigenvalues[0]
    l_large = spectrum_A(restrict_to_complement(ops, large), 0.1, 0.1, 0.5).eigenvalues[0]
    assert l_large >= l_small - 1e-10


def test_condition_A_examples(annulus_setup):
    *_, ops_r = annulus_setup
    rep = spectrum_A(ops_r, 0.1, 0.1, 0.5)
    ok = check_condition_A(1.5, rep)
    assert ok.satisfied and ok.sufficient
    resonant = check_condition_A(-rep.eigenvalues[0], rep)
    assert resonant.margin == pytest.approx(0.0, abs=1e-9) and not resonant.satisfied
    rep0 = spectrum_A(ops_r, 0, 0, 0.0)
    plain = check_condition_A(0.0, rep0)
    assert plain.margin == pytest.approx(rep0.eigenvalues[0]) and plain.satisfied


def test_condition_A_inconclusive(annulus_setup):
    *_, ops_r = annulus_setup
    rep = spectrum_A(ops_r, 0, 0, 0.0, k=2)
    with pytest.raises(InconclusiveError):
        check_condition_A(-1e4, rep, n_total=ops_r.size)


def test_condition_A_widens_k(annulus_setup):
    g, ops, mask, _ = annulus_setup
    rep, spec = condition_A(ops, mask, 0, 0, 0.0, -300.0, k=2)
    assert spec.eigenvalues[-1] > 300.0
    assert rep.margin > 0
