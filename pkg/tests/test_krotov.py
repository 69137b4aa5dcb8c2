import numpy as np
import pytest

from cfcayley.errors import ParameterError, ShapeError, UsageError
from cfcayley.integrators import propagate
from cfcayley.krotov import (
    CostWeights,
    KrotovSettings,
    backward_propagate,
    cost,
    fidelity,
    gradient,
    krotov_optimize,
    make_reference_target,
    penalty,
    pmp_residual,
    terminal_adjoint,
)
from cfcayley.models import (
    ControlField,
    ControlledHamiltonian,
    Grid1D,
    TimeGrid,
    gaussian_state,
    gpe_model,
    lattice_model,
    norm,
    synthetic_model,
)

E = np.eye(8, dtype=complex)


def eight_level():
    return synthetic_model(8, seed=0), E[0], E[3]


def random_unit(rng, n):
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def random_control(seed, grid):
    rng = np.random.default_rng(seed)
    return ControlField(rng.uniform(-1.0, 1.0, (1, grid.n_steps)), grid)


def trajectories(h, u, psi0, target, scheme="CFC4"):
    traj = propagate(scheme, h, psi0, u.grid, u, store_trajectory=True)
    adj = backward_propagate(scheme, h, u, terminal_adjoint(traj[-1], target))
    return traj, adj


# ---------------------------------------------------------------- cost pieces


def test_fidelity_identical_orthogonal_and_phase():
    rng = np.random.default_rng(0)
    psi = random_unit(rng, 6)
    assert fidelity(psi, psi) == pytest.approx(1.0, abs=1e-12)
    assert fidelity(E[0], E[1]) == 0.0
    assert fidelity(np.exp(0.7j) * psi, psi) == pytest.approx(1.0, abs=1e-12)


def test_fidelity_uses_grid_weight():
    grid = Grid1D(-10.0, 10.0, 128)
    psi = gaussian_state(grid, 0.0, 2.0)
    assert fidelity(psi, psi, grid.dx) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ShapeError):
        fidelity(psi, psi[:-1], grid.dx)


def test_cost_examples():
    grid = TimeGrid(0.0, 1.0, 10)
    zero = ControlField(np.zeros((1, 10)), grid)
    w = CostWeights((1.0,))
    assert cost(zero, w, 1.0) == 0.0
    assert cost(zero, w, 0.0) == 0.5
    ones = ControlField(np.ones((1, 10)), grid)
    assert penalty(ones, CostWeights((2.0,))) == pytest.approx(1.0, abs=1e-15)
    assert cost(ones, CostWeights((2.0,)), 0.6) == pytest.approx(1.2, abs=1e-15)


def test_cost_weights_validation():
    with pytest.raises(ParameterError):
        CostWeights((0.0,))
    with pytest.raises(ParameterError):
        CostWeights((1.0, -2.0))
    assert CostWeights(3).alpha == (3.0,)
    with pytest.raises(ShapeError):
        penalty(ControlField(np.zeros((1, 4)), TimeGrid(0, 1, 4)), CostWeights((1.0, 1.0)))


def test_settings_validation():
    with pytest.raises(ParameterError):
        KrotovSettings(epsilon=0.0)
    with pytest.raises(ParameterError):
        KrotovSettings(max_iterations=0)
    with pytest.raises(ParameterError):
        KrotovSettings(update="newton")
    with pytest.raises(ValueError):
        KrotovSettings(scheme="RK45")


# ---------------------------------------------------------------- adjoint


def test_terminal_adjoint_examples():
    assert not np.any(terminal_adjoint(E[0], E[1]))
    np.testing.assert_array_equal(terminal_adjoint(E[2], E[2]), E[2])
    rng = np.random.default_rng(1)
    for _ in range(20):
        a, b = random_unit(rng, 8), random_unit(rng, 8)
        lam = terminal_adjoint(a, b)
        assert np.linalg.norm(lam) == pytest.approx(abs(np.vdot(b, a)), abs=1e-14)
        assert np.linalg.norm(lam) <= 1.0 + 1e-15


@pytest.mark.parametrize("scheme", ["CN", "CFC4", "CayleyMagnus4", "CFExp4"])
def test_backward_then_forward_returns_terminal_adjoint(scheme):
    h, _, _ = eight_level()
    grid = TimeGrid(0.0, 3.0, 60)
    u = random_control(2, grid)
    lam_T = random_unit(np.random.default_rng(3), 8)
    adj = backward_propagate(scheme, h, u, lam_T)
    again = propagate(scheme, h, adj[0], grid, u)
    np.testing.assert_allclose(again, lam_T, atol=1e-10)


def test_adjoint_of_zero_hamiltonian_is_constant():
    h = ControlledHamiltonian(np.zeros((3, 3), dtype=complex), (np.zeros((3, 3)),))
    grid = TimeGrid(0.0, 1.0, 10)
    lam = np.array([0.6, 0.8j, 0.0])
    adj = backward_propagate("CFC4", h, ControlField(np.ones((1, 10)), grid), lam)
    assert all(np.array_equal(a, lam) for a in adj)


def test_adjoint_norm_is_conserved():
    h, _, _ = eight_level()
    grid = TimeGrid(0.0, 10.0, 500)
    lam_T = 0.37 * random_unit(np.random.default_rng(4), 8)
    adj = backward_propagate("CFC4", h, random_control(5, grid), lam_T)
    norms = np.linalg.norm(adj, axis=1)
    assert np.max(np.abs(norms - 0.37)) <= 1e-11


def test_backward_rejects_nonlinear_model():
    grid = Grid1D(-4.0, 4.0, 16)
    with pytest.raises(UsageError):
        backward_propagate("CFC4", gpe_model(grid, 1.0), None, np.ones(16, dtype=complex))


# ---------------------------------------------------------------- gradient and residual


def diagonal_problem():
    # control commutes with the drift and psi0 is an eigenvector: u = 0 is stationary
    h = ControlledHamiltonian(np.diag([0.0, 1.0, 2.5]).astype(complex), (np.diag([1.0, -1.0, 0.5]),))
    grid = TimeGrid(0.0, 2.0, 20)
    psi0 = np.array([1.0, 0.0, 0.0], dtype=complex)
    target = propagate("CFC4", h, psi0, grid, ControlField(np.zeros((1, 20)), grid))
    return h, grid, psi0, target


def test_residual_vanishes_at_trivial_stationary_point():
    h, grid, psi0, target = diagonal_problem()
    u = ControlField(np.zeros((1, 20)), grid)
    traj, adj = trajectories(h, u, psi0, target)
    assert pmp_residual(h, u, traj, adj, CostWeights((1.0,))) <= 1e-15


@pytest.mark.parametrize("scheme", ["CN", "CFC4"])
def test_gradient_matches_central_differences(scheme):
    h, psi0, target = eight_level()
    grid = TimeGrid(0.0, 2.0, 4000)
    w = CostWeights((0.5,))
    u = ControlField.from_function(lambda t: 0.5 * np.sin(t) ** 2, grid)
    traj, adj = trajectories(h, u, psi0, target, scheme)
    g = gradient(h, u, w, traj, adj)

    def J(samples):
        v = ControlField(samples, grid)
        return cost(v, w, fidelity(propagate(scheme, h, psi0, grid, v), target))

    rng = np.random.default_rng(6)
    for _ in range(3):
        du = rng.standard_normal(u.samples.shape)
        eps = 1e-5
        fd = (J(u.samples + eps * du) - J(u.samples - eps * du)) / (2 * eps)
        assert abs(np.sum(g * du) - fd) <= 1e-4 * abs(fd)


# ---------------------------------------------------------------- optimizer


def test_optimal_start_stops_after_one_iteration():
    h, grid, psi0, target = diagonal_problem()
    run = krotov_optimize(h, ControlField(np.zeros((1, 20)), grid), psi0, target, CostWeights((1.0,)))
    assert run.converged and run.stop_reason == "fidelity"
    assert run.iterations == 1
    assert run.final_fidelity >= 1.0 - 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_cost_is_monotone_from_random_start(seed):
    h, psi0, target = eight_level()
    grid = TimeGrid(0.0, 10.0, 100)
    run = krotov_optimize(h, random_control(seed, grid), psi0, target, CostWeights((0.1,)))
    assert np.all(np.diff(run.costs) <= 1e-10)
    assert run.converged
    assert run.final_fidelity > run.records[0].fidelity
    assert abs(norm(run.final_state) - 1.0) <= 1e-10


def test_safeguard_is_exercised_on_eight_level_model():
    h, psi0, target = eight_level()
    grid = TimeGrid(0.0, 10.0, 100)
    run = krotov_optimize(h, random_control(0, grid), psi0, target, CostWeights((0.1,)))
    assert sum(r.damped_steps for r in run.records) > 0


def test_global_phase_of_target_is_irrelevant():
    h, psi0, target = eight_level()
    grid = TimeGrid(0.0, 10.0, 100)
    u0 = random_control(7, grid)
    w = CostWeights((0.1,))
    a = krotov_optimize(h, u0, psi0, target, w)
    b = krotov_optimize(h, u0, psi0, np.exp(1.3j) * target, w)
    assert a.iterations == b.iterations
    np.testing.assert_allclose(a.costs, b.costs, atol=1e-10)
    np.testing.assert_allclose([r.fidelity for r in a.records],
                               [r.fidelity for r in b.records], atol=1e-10)
    np.testing.assert_allclose(a.controls.samples, b.controls.samples, atol=1e-10)


def test_additive_update_decreases_infidelity():
    h, psi0, target = eight_level()
    grid = TimeGrid(0.0, 10.0, 100)
    u0 = ControlField.from_function(lambda t: 0.1 * np.sin(t) ** 2, grid)
    run = krotov_optimize(h, u0, psi0, target, CostWeights((0.1,)),
                          KrotovSettings(update="additive", max_iterations=15))
    infid = 1.0 - np.array([r.fidelity for r in run.records])
    assert np.all(np.diff(infid) <= 1e-10)
    assert run.final_fidelity > 0.9


def test_max_iterations_reported():
    h, psi0, target = eight_level()
    grid = TimeGrid(0.0, 10.0, 100)
    run = krotov_optimize(h, random_control(1, grid), psi0, target, CostWeights((0.05,)),
                          KrotovSettings(max_iterations=2, epsilon=1e-12))
    assert not run.converged and run.stop_reason == "max_iterations"
    assert run.iterations == 2 and len(run.records) == 3


def test_optimizer_input_errors():
    h, psi0, target = eight_level()
    grid = TimeGrid(0.0, 1.0, 10)
    with pytest.raises(ShapeError):
        krotov_optimize(h, ControlField(np.zeros((2, 10)), grid), psi0, target, CostWeights((1.0, 1.0)))
    g = Grid1D(-4.0, 4.0, 16)
    with pytest.raises(UsageError):
        krotov_optimize(gpe_model(g, 1.0), ControlField(np.zeros((1, 10)), grid),
                        gaussian_state(g, 0.0, 1.0), gaussian_state(g, 0.0, 1.0), CostWeights((1.0,)))


@pytest.mark.slow
def test_residual_small_and_decreasing_at_convergence():
    h, psi0, target = eight_level()
    grid = TimeGrid(0.0, 10.0, 400)
    w = CostWeights((0.05,))
    u0 = ControlField.from_function(lambda t: 0.1 * np.sin(t) ** 2, grid)
    run = krotov_optimize(h, u0, psi0, target, w, KrotovSettings(epsilon=1e-8, max_iterations=200))
    assert run.converged
    res = []
    for rec in run.records[-4:]:
        u = ControlField(rec.controls, grid)
        traj, adj = trajectories(h, u, psi0, target)
        res.append(pmp_residual(h, u, traj, adj, w))
    assert res[-1] <= 1e-3
    assert np.all(np.diff(res) < 0)


# ---------------------------------------------------------------- reference target


def test_reference_target_is_deterministic_and_normalized():
    grid = Grid1D(-20.0, 20.0, 128)
    h = lattice_model(grid)
    psi0 = gaussian_state(grid, 0.0, 2.0)
    tg = TimeGrid(0.0, 2.0, 100)
    a = make_reference_target(h, "CFC4", psi0, tg)
    b = make_reference_target(h, "CFC4", psi0, tg)
    assert np.array_equal(a, b)
    assert abs(norm(a, grid.dx) - 1.0) <= 1e-10


def test_reference_targets_of_fourth_order_schemes_agree():
    h, psi0, _ = eight_level()
    tg = TimeGrid(0.0, 10.0, 400)
    a = make_reference_target(h, "CFC4", psi0, tg)
    b = make_reference_target(h, "CayleyMagnus4", psi0, tg)
    assert np.linalg.norm(a - b) <= 1e-6
