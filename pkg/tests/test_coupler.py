import numpy as np
import pytest

from app.core.errors import ConfigInvalid
from app.fem.mesh import build_mesh
from app.models.schemas import SolverBlock
from app.services.coupler import Coupler, energy_audit, measured_norms, norm_lp_lr
from app.services.heat_solver import HeatSolver, assemble_source
from app.services.materials import ExponentSet, FlowKind
from app.services.problem import ProblemData, TimeGrid

from tests.conftest import make_material


def _traction(t, X, N):
    return np.tile([0.5, 0.1], (X.shape[0], 1))


def _warm(X):
    return np.ones(X.shape[0])


def test_norm_examples():
    mesh = build_mesh((2.0, 1.0), (3, 2), "x1=0")
    grid = TimeGrid(T=2.0, n_steps=4)
    exps = ExponentSet(p=3.0, r=2.5)
    theta = np.full((5, mesh.n_vertices), 2.0)
    assert norm_lp_lr(mesh, theta, exps, grid) == pytest.approx(2.0 * 2.0 ** (1 / 2.5) * 2.0 ** (1 / 3.0))
    assert norm_lp_lr(mesh, np.zeros_like(theta), exps, grid) == 0.0


def test_norm_ignores_initial_node():
    mesh = build_mesh((1.0, 1.0), (2, 2), "x1=0")
    grid = TimeGrid(T=2.0, n_steps=2)
    theta = np.zeros((3, mesh.n_vertices))
    theta[0] = 50.0
    theta[1] = 1.0
    assert norm_lp_lr(mesh, theta, ExponentSet(), grid) == pytest.approx(1.0)


def test_decoupled_run_matches_standalone_heat(square4, tight_solver):
    theta0 = lambda X: np.cos(np.pi * X[:, 0])
    data = ProblemData.zero(2, g=_traction, theta0=theta0)
    material = make_material(c=0.0, flow=FlowKind.NONE, mu_C=1.0)
    coupler = Coupler(square4, material, data, tight_solver)
    grid = TimeGrid(T=0.2, n_steps=4)
    state, report = coupler.picard_solve(grid)
    assert report.converged and report.status == "converged"
    assert report.outer_iterations <= 2
    assert all(t.dilatation == 0.0 and t.plastic == 0.0 for t in state.heat_terms)

    # temperature never reaches the mechanics, so one heat sweep over the mechanical history reproduces θ
    heat = HeatSolver(square4, material, data)
    zeros_e = np.zeros((square4.n_elements, 2, 2))
    theta = theta0(square4.vertices)
    for n in range(1, grid.n_steps + 1):
        source, _ = assemble_source(square4, material, theta, state.u_dot(n), zeros_e, state.sigma[n])
        theta = heat.heat_step(theta, source.values, float(grid.times[n]), grid.dt)
        np.testing.assert_allclose(state.theta[n], theta, atol=1e-12)


def test_apply_T_is_deterministic(square4):
    data = ProblemData.zero(2, g=_traction, theta0=_warm)
    coupler = Coupler(square4, make_material(mu_C=1.0), data)
    grid = TimeGrid(T=0.2, n_steps=3)
    theta_star = np.ones((4, square4.n_vertices))
    a = coupler.apply_T(theta_star, grid)
    b = coupler.apply_T(theta_star, grid)
    for field in ("u", "eps_p", "sigma", "theta"):
        assert np.array_equal(getattr(a, field), getattr(b, field))


def test_weak_coupling_contracts(square4, tight_solver):
    data = ProblemData.zero(2, g=_traction, theta0=_warm)
    coupler = Coupler(square4, make_material(mu_C=1.0, c=0.1), data, tight_solver)
    grid = TimeGrid(T=0.4, n_steps=4)
    state, report = coupler.picard_solve(grid)
    assert report.converged
    assert report.ball_bounded
    deltas = report.deltas
    assert all(b < a for a, b in zip(deltas, deltas[1:]))
    assert coupler.self_consistency(state, grid) <= tight_solver.outer_tol
    assert state.theta.shape == (5, square4.n_vertices)
    norms = measured_norms(coupler, state)
    assert len(norms["sigma_Lq"]) == 5 and norms["u_dot_L2"][0] == 0.0


def test_window_splitting_covers_the_whole_grid(square4):
    data = ProblemData.zero(2, g=_traction, theta0=_warm)
    solver = SolverBlock(outer_tol=1e-14, max_outer=1, max_window_splits=3)
    coupler = Coupler(square4, make_material(mu_C=1.0, c=0.1), data, solver)
    grid = TimeGrid(T=0.4, n_steps=8)
    state, report = coupler.picard_solve(grid)
    assert report.status == "not-converged"
    assert report.windows == 8
    assert report.outer_iterations == 1 + 2 + 4 + 8
    assert state.theta.shape == (9, square4.n_vertices)
    np.testing.assert_allclose(state.times, grid.times)


def test_invalid_exponents_rejected(square4):
    coupler = Coupler(square4, make_material(q=2.0), ProblemData.zero(2))
    with pytest.raises(ConfigInvalid) as exc:
        coupler.picard_solve(TimeGrid(T=1.0, n_steps=2))
    assert any("q > 2" in v for v in exc.value.violations)


def test_bad_damping_rejected(square4):
    solver = SolverBlock.model_construct(**{**SolverBlock().model_dump(), "omega": 1.5})
    coupler = Coupler(square4, make_material(), ProblemData.zero(2), solver)
    with pytest.raises(ConfigInvalid):
        coupler.picard_solve(TimeGrid(T=1.0, n_steps=2))


def test_energy_audit_zero_data(square4):
    coupler = Coupler(square4, make_material(), ProblemData.zero(2))
    grid = TimeGrid(T=0.5, n_steps=4)
    state, _ = coupler.picard_solve(grid)
    np.testing.assert_allclose(energy_audit(coupler, state), 0.0, atol=1e-14)


def _audit_peak(flow, c, n_steps, solver):
    mesh = build_mesh((1.0, 1.0), (4, 4), "x1=0")
    data = ProblemData.zero(2, g=_traction, theta0=_warm)
    coupler = Coupler(mesh, make_material(mu_C=1.0, c=c, flow=flow), data, solver)
    state, report = coupler.picard_solve(TimeGrid(T=0.5, n_steps=n_steps))
    assert report.converged
    return float(np.abs(energy_audit(coupler, state)).max())


@pytest.mark.parametrize("flow,c", [(FlowKind.NONE, 0.0), (FlowKind.LINEAR, 0.1)])
def test_energy_residual_first_order_in_dt(flow, c, tight_solver):
    coarse = _audit_peak(flow, c, 8, tight_solver)
    fine = _audit_peak(flow, c, 16, tight_solver)
    assert coarse > 0.0
    assert coarse / fine >= 2.0 / 1.5
