import numpy as np
import pytest

from hardysolve.assembly import assemble
from hardysolve.errors import ConfigError, HypothesisError, PreconditionError, RayRangeError
from hardysolve.functional import ProblemContext, derivative_along, energy_J, energy_J0
from hardysolve.geometry import DomainSpec, RegionK, build_grid, k_mask
from hardysolve.nonlinearity import NonlinearitySpec
from hardysolve.solvers import (
    Deflation,
    SolverConfig,
    disjoint_seeds,
    k_seeds,
    mountain_pass,
    multi_solve,
    nehari_solve,
    normalized_multi,
    normalized_solve,
)
from hardysolve.spectral import smallest_eigenpairs

from oracles import radial_cubic_solutions

CFG = SolverConfig(tol=1e-8)


@pytest.fixture(scope="module")
def grid():
    return build_grid(DomainSpec.ball(1.0, 3), 100)


@pytest.fixture(scope="module")
def ops(grid):
    return assemble(grid)


@pytest.fixture(scope="module")
def full(grid):
    return np.ones(grid.size, bool)


@pytest.fixture(scope="module")
def power_ctx(ops, full):
    return ProblemContext(ops, NonlinearitySpec.pure_power(4.0), 0.0, 0.0, 0.0, full)


@pytest.fixture(scope="module")
def mp_power(power_ctx):
    return mountain_pass(power_ctx, CFG)


@pytest.fixture(scope="module")
def nehari_power(power_ctx):
    return nehari_solve(power_ctx, CFG)


def test_config_validation():
    with pytest.raises(ConfigError):
        SolverConfig(path_nodes=5)
    with pytest.raises(ConfigError):
        SolverConfig(tol=0.0)
    assert SolverConfig().to_dict()["armijo"] == 1e-4


def test_mountain_pass_matches_nehari(mp_power, nehari_power):
    assert mp_power.converged and nehari_power.converged
    assert mp_power.cerami_residual <= 1e-8
    assert mp_power.energy == pytest.approx(nehari_power.energy, rel=1e-4)
    assert np.all(mp_power.u * np.sign(mp_power.u[0]) > 0)
    assert mp_power.diagnostics["morse_index"] == 1


def test_level_chain(mp_power, nehari_power):
    br = mp_power.level_bracket
    assert 0 < br["sphere_inf"] <= mp_power.energy <= nehari_power.level_bracket["q_ray_level"] * (1 + 1e-6)


def test_nehari_membership(mp_power, nehari_power, power_ctx):
    for rep in (mp_power, nehari_power):
        nrm2 = power_ctx.inner(rep.u, rep.u)
        assert abs(derivative_along(power_ctx, rep.u, rep.u)) <= 1e-8 * (1 + nrm2)


def test_descent_logs_monotone(nehari_power, mp_power):
    e = [r["energy"] for r in nehari_power.log]
    assert np.all(np.diff(e) <= 1e-12 * (1 + np.abs(e[:-1])))


def test_mountain_pass_without_geometry(ops, full):
    ctx = ProblemContext(ops, NonlinearitySpec.zero(), 0.0, 0.0, 0.0, full)
    with pytest.raises(RayRangeError):
        mountain_pass(ctx, CFG)


def test_negative_lambda_rejected(ops, full):
    ctx = ProblemContext(ops, NonlinearitySpec.pure_power(4.0), -1.0, 0.0, 0.0, full)
    with pytest.raises(HypothesisError):
        mountain_pass(ctx, CFG)


def test_mixed_example_mountain_pass(ops, grid):
    mask = k_mask(grid, RegionK.annulus(0.3, 0.6))
    ctx = ProblemContext(ops, NonlinearitySpec.mixed_default(), 1.0, 0.1, 0.1, mask)
    rep = mountain_pass(ctx)
    assert rep.converged and rep.cerami_residual <= 1e-7
    assert 0 < rep.level_bracket["sphere_inf"] <= rep.energy


def test_nehari_rejects_seed_off_Q(ops, grid):
    mask = k_mask(grid, RegionK.annulus(0.3, 0.6))
    ctx = ProblemContext(ops, NonlinearitySpec.mixed_default(), 1.0, 0.1, 0.1, mask)
    with pytest.raises(PreconditionError):
        nehari_solve(ctx, CFG, seed=np.ones(grid.size))


def test_nehari_level_grows_as_K_shrinks(ops, grid):
    levels = []
    for r_lo, r_hi in ((0.25, 0.65), (0.3, 0.6), (0.35, 0.55)):
        mask = k_mask(grid, RegionK.annulus(r_lo, r_hi))
        ctx = ProblemContext(ops, NonlinearitySpec.mixed_default(), 1.0, 0.1, 0.1, mask)
        rep = nehari_solve(ctx, CFG)
        assert rep.converged
        levels.append(rep.energy)
    assert levels[0] < levels[1] < levels[2]


def test_determinism(power_ctx, nehari_power):
    again = nehari_solve(power_ctx, CFG)
    assert again.energy == nehari_power.energy
    assert again.iterations == nehari_power.iterations


def test_k_seeds_oscillation(grid, full):
    seeds = k_seeds(grid, full, 3)
    for j, s in enumerate(seeds):
        assert np.sum(np.diff(np.sign(s[np.abs(s) > 1e-12])) != 0) == j
    mask = k_mask(grid, RegionK.annulus(0.3, 0.6))
    assert np.all(k_seeds(grid, mask, 2)[1][~mask] == 0)


def test_multi_solve_against_shooting(power_ctx, grid, nehari_power):
    sols = multi_solve(power_ctx, CFG, count=3)
    assert len(sols) == 3
    energies = [s.energy for s in sols]
    assert energies[0] < energies[1] < energies[2]
    assert energies[0] == pytest.approx(nehari_power.energy, rel=1e-10)
    refs = radial_cubic_solutions(grid.coords, 3)
    for rep, ref in zip(sols, refs):
        u = rep.u * np.sign(rep.u[0])
        err = np.sqrt(np.sum(grid.weights * (u - ref) ** 2) / np.sum(grid.weights * ref ** 2))
        assert err < 1e-2
    for i in range(3):
        for j in range(i):
            d = min(power_ctx.norm(sols[i].u - sols[j].u), power_ctx.norm(sols[i].u + sols[j].u))
            assert d > 1e-3 * max(power_ctx.norm(s.u) for s in sols)


def test_multi_single_is_nehari(power_ctx, nehari_power):
    (rep,) = multi_solve(power_ctx, CFG, count=1)
    assert rep.energy == pytest.approx(nehari_power.energy, rel=1e-10)


def test_multi_requires_odd(ops, full):
    from hardysolve.nonlinearity import PowerBranch
    spec = NonlinearitySpec(PowerBranch(4.0, positive_part=True), PowerBranch(4.0, positive_part=True))
    ctx = ProblemContext(ops, spec, 0.0, 0.0, 0.0, full)
    with pytest.raises(HypothesisError):
        multi_solve(ctx, CFG, count=2)


def test_deflation_values():
    d = Deflation(lambda v: v, power=2.0, shift=1.0)
    u = np.array([1.0, 0.0])
    assert d.value(u) == 1.0
    d.add(u)
    assert d.value(u) == np.inf
    assert d.value(-u) == np.inf
    v = np.array([0.0, 1.0])
    # ||v-u||^2 = ||v+u||^2 = 2
    assert d.value(v) == pytest.approx(1.5 * 1.5)
    h = 1e-6
    e = np.array([1.0, 0.3])
    fd = (np.log(d.value(v + h * e)) - np.log(d.value(v - h * e))) / (2 * h)
    assert d.grad_log(v) @ e == pytest.approx(fd, rel=1e-6)


# ------------------------------------------------------------ normalized


@pytest.fixture(scope="module")
def linear_ctx(ops, grid):
    return ProblemContext(ops, NonlinearitySpec.zero(), 0.0, 0.0, 0.0, np.zeros(grid.size, bool))


def test_normalized_linear_limit(linear_ctx, ops, grid):
    rep = normalized_solve(linear_ctx, CFG, rho=1.0)
    eig = smallest_eigenpairs(ops.L, ops.mass, 2)
    phi = eig.eigenvectors[:, 0]
    phi = phi * np.sign(phi[0]) / np.sqrt(np.sum(grid.weights * phi ** 2))
    u = rep.u * np.sign(rep.u[0])
    assert rep.converged
    assert np.sqrt(np.sum(grid.weights * (u - phi) ** 2)) < 1e-2
    assert rep.multiplier == pytest.approx(-eig.eigenvalues[0], rel=1e-2)
    assert max(e["mass_drift"] for e in rep.log) <= 1e-10
    assert rep.diagnostics["stationarity"] <= 1e-7


def test_normalized_multi_linear(linear_ctx, ops):
    sols = normalized_multi(linear_ctx, CFG, rho=1.0, count=2)
    eig = smallest_eigenpairs(ops.L, ops.mass, 2).eigenvalues
    assert len(sols) == 2
    assert sols[0].multiplier == pytest.approx(-eig[0], rel=2e-2)
    assert sols[1].multiplier == pytest.approx(-eig[1], rel=2e-2)


def test_disjoint_seeds_orthogonal(grid):
    seeds = disjoint_seeds(grid, 3, 2.0)
    for i, s in enumerate(seeds):
        assert np.sum(grid.weights * s * s) == pytest.approx(2.0)
        for t in seeds[:i]:
            assert np.sum(grid.weights * s * t) == 0.0


def test_normalized_mixed_example(ops, grid):
    mask = k_mask(grid, RegionK.annulus(0.3, 0.6))
    ctx = ProblemContext(ops, NonlinearitySpec.mixed_default(p=3.0), 0.0, 0.1, 0.1, mask)
    rep = normalized_solve(ctx, CFG, rho=1.0)
    assert rep.converged
    e = [r["energy"] for r in rep.log]
    assert np.all(np.diff(e) <= 1e-12 * (1 + np.abs(e[:-1])))
    assert abs(np.sum(grid.weights * rep.u ** 2) - 1.0) <= 1e-10
    assert rep.energy == pytest.approx(energy_J0(ctx, rep.u))
    single = normalized_multi(ctx, CFG, rho=1.0, count=1)
    assert single[0].converged


def test_normalized_supercritical_rejected(power_ctx):
    with pytest.raises(HypothesisError) as info:
        normalized_solve(power_ctx, CFG)
    assert info.value.clause == "mass-subcritical"
