"""Outer temperature fixed point: θ* -> mechanics -> heat -> θ, damped Picard over time windows."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from app.core.errors import ConfigInvalid
from app.fem.mesh import MeshPartition, sym_grad
from app.fem.norms import element_lq, vertex_lq
from app.fem.tensor import ddot_arr
from app.models.schemas import HeatTermNorms, InnerIterReport, PicardReport, SolverBlock
from app.services.heat_solver import HeatSolver, assemble_source
from app.services.logger import get_logger, residual_trail
from app.services.materials import ExponentSet, MaterialModel, validate
from app.services.mech_solver import MechSolver
from app.services.problem import ProblemData, TimeGrid, VerificationHooks, initial_displacement

log = get_logger(__name__)

DIVERGENCE_FACTOR = 1e6


@dataclass
class SimState:
    """Histories at every time node of the run."""
    times: np.ndarray
    u: np.ndarray         # (N+1, n_vertices, d)
    eps_p: np.ndarray     # (N+1, n_elements, d, d)
    sigma: np.ndarray     # (N+1, n_elements, d, d)
    theta: np.ndarray     # (N+1, n_vertices)
    inner: List[InnerIterReport] = field(default_factory=list)
    heat_terms: List[HeatTermNorms] = field(default_factory=list)

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def u_dot(self, n: int) -> np.ndarray:
        if n == 0:
            return np.zeros_like(self.u[0])
        return (self.u[n] - self.u[n - 1]) / (self.times[n] - self.times[n - 1])

    def end(self) -> "SimState":
        return SimState(self.times[-1:], self.u[-1:], self.eps_p[-1:], self.sigma[-1:], self.theta[-1:])

    @staticmethod
    def concat(parts: List["SimState"]) -> "SimState":
        first = parts[0]
        out = SimState(first.times, first.u, first.eps_p, first.sigma, first.theta,
                       list(first.inner), list(first.heat_terms))
        for p in parts[1:]:
            out.times = np.concatenate([out.times, p.times[1:]])
            out.u = np.concatenate([out.u, p.u[1:]])
            out.eps_p = np.concatenate([out.eps_p, p.eps_p[1:]])
            out.sigma = np.concatenate([out.sigma, p.sigma[1:]])
            out.theta = np.concatenate([out.theta, p.theta[1:]])
            out.inner += p.inner
            out.heat_terms += p.heat_terms
        return out


def norm_lp_lr(mesh: MeshPartition, theta: np.ndarray, exponents: ExponentSet, grid: TimeGrid) -> float:
    """(Σ_{n≥1} dt·‖θ̄(t_n)‖_{L^r}^p)^{1/p} with θ̄ the element means."""
    theta = np.asarray(theta, dtype=float)
    p, r = exponents.p, exponents.r
    spatial = np.array([vertex_lq(mesh, theta[n], r) for n in range(1, theta.shape[0])])
    return float((grid.dt * np.sum(spatial ** p)) ** (1.0 / p))


class Coupler:
    def __init__(self, mesh: MeshPartition, material: MaterialModel, data: ProblemData,
                 solver: Optional[SolverBlock] = None, hooks: Optional[VerificationHooks] = None):
        self.mesh = mesh
        self.material = material
        self.data = data
        self.solver = solver or SolverBlock()
        self.hooks = hooks or VerificationHooks()
        self.mech = MechSolver(mesh, material, data, self.solver, self.hooks)
        self.heat = HeatSolver(mesh, material, data, self.solver, self.hooks)

    def initial_state(self) -> SimState:
        mesh = self.mesh
        u0 = initial_displacement(mesh, self.data)
        eps_p0 = np.asarray(self.data.eps_p0(mesh.centroids), dtype=float)
        theta0 = np.asarray(self.data.theta0(mesh.vertices), dtype=float)
        sigma0 = self.mech.initial_stress(u0, eps_p0, theta0)
        return SimState(np.zeros(1), u0[None], eps_p0[None], sigma0[None], theta0[None])

    def apply_T(self, theta_star: np.ndarray, grid: TimeGrid, start: Optional[SimState] = None) -> SimState:
        """Mechanics over the window with θ* frozen, then heat driven by the resulting dissipation."""
        start = start or self.initial_state()
        times = grid.times
        mech = self.mech.run(times, theta_star, start.u[-1], start.eps_p[-1])
        n = grid.n_steps
        theta = np.zeros((n + 1, self.mesh.n_vertices))
        theta[0] = start.theta[-1]
        terms: List[HeatTermNorms] = []
        for k in range(n):
            dt = float(times[k + 1] - times[k])
            u_dot = (mech.u[k + 1] - mech.u[k]) / dt
            rate = (mech.eps_p[k + 1] - mech.eps_p[k]) / dt
            source, norms = assemble_source(self.mesh, self.material, theta_star[k + 1], u_dot, rate,
                                            mech.sigma[k + 1])
            theta[k + 1] = self.heat.heat_step(theta[k], source.values, float(times[k + 1]), dt)
            terms.append(norms)
        mech.sigma[0] = start.sigma[-1]
        return SimState(times, mech.u, mech.eps_p, mech.sigma, theta, mech.reports, terms)

    def _picard_window(self, grid: TimeGrid, start: SimState, report: PicardReport) -> Tuple[SimState, bool]:
        exps = self.material.exponents
        omega, tol = self.solver.omega, self.solver.outer_tol
        theta_star = np.repeat(start.theta[-1][None], grid.n_steps + 1, axis=0)
        state = None
        first_delta = None
        for k in range(1, self.solver.max_outer + 1):
            state = self.apply_T(theta_star, grid, start)
            delta = norm_lp_lr(self.mesh, state.theta - theta_star, exps, grid)
            report.outer_iterations += 1
            report.deltas.append(delta)
            report.norms.append(norm_lp_lr(self.mesh, state.theta, exps, grid))
            log.debug(f"window t0={grid.t0:.4g} outer {k}: delta={delta:.3e}")
            if not np.isfinite(delta) or not np.all(np.isfinite(state.theta)):
                report.status = "diverged"
                return state, False
            first_delta = delta if first_delta is None else first_delta
            if delta <= tol:
                return state, True
            if first_delta > 0.0 and delta > DIVERGENCE_FACTOR * first_delta:
                report.status = "diverged"
                return state, False
            theta_star = (1.0 - omega) * theta_star + omega * state.theta
            theta_star[0] = start.theta[-1]
        return state, False

    def _solve_span(self, grid: TimeGrid, start: SimState, report: PicardReport, splits_left: int):
        state, ok = self._picard_window(grid, start, report)
        if ok or report.status == "diverged" or splits_left == 0 or grid.n_steps < 2:
            return [state], ok
        log.warning(f"outer iteration stalled on [{grid.t0:.4g}, {grid.t0 + grid.T:.4g}]; splitting the window")
        half = grid.n_steps // 2
        first, ok1 = self._solve_span(grid.window(0, half), start, report, splits_left - 1)
        if report.status == "diverged":
            return first, False
        second, ok2 = self._solve_span(grid.window(half, grid.n_steps), first[-1].end(), report, splits_left - 1)
        return first + second, ok1 and ok2

    def picard_solve(self, grid: TimeGrid) -> Tuple[SimState, PicardReport]:
        violations = validate(self.material.exponents)
        if violations:
            raise ConfigInvalid([f"exponents: {v}" for v in violations])
        if not 0.0 < self.solver.omega <= 1.0:
            raise ConfigInvalid([f"solver: damping ω must lie in (0, 1], got {self.solver.omega}"])
        report = PicardReport()
        parts, ok = self._solve_span(grid, self.initial_state(), report, self.solver.max_window_splits)
        state = SimState.concat(parts)
        report.windows = len(parts)
        report.converged = ok
        if ok:
            report.status = "converged"
        elif report.status != "diverged":
            report.status = "not-converged"
        head = [n for n in report.norms[:3] if np.isfinite(n)]
        report.ball_bounded = bool(head) and all(n <= 2.0 * max(head) for n in report.norms if np.isfinite(n))
        log.info(f"picard {report.status}: {report.outer_iterations} outer iterations over {report.windows} window(s), "
                 f"delta {residual_trail(report.deltas)}")
        return state, report

    def self_consistency(self, state: SimState, grid: TimeGrid) -> float:
        """‖T(θ) − θ‖ in L^p(L^r) for a converged single-window history."""
        again = self.apply_T(state.theta, grid)
        return norm_lp_lr(self.mesh, again.theta - state.theta, self.material.exponents, grid)


def elastic_energy(mesh: MeshPartition, material: MaterialModel, u: np.ndarray, eps_p: np.ndarray) -> float:
    e = sym_grad(mesh, u) - eps_p
    return 0.5 * float(mesh.volumes @ ddot_arr(material.D.with_dim(mesh.dim).apply_array(e), e))


def energy_audit(coupler: Coupler, state: SimState) -> np.ndarray:
    """Per-step residual of d/dt[½∫D(ε−εp):(ε−εp) + ∫θ] = ∫b·u̇ + ∫g·u̇ + κ∫h + ∫ε̇p:(C(ε(u̇)) − φ𝕀)."""
    mesh, mat = coupler.mesh, coupler.material
    C = mat.C.with_dim(mesh.dim)
    heat, mech = coupler.heat, coupler.mech
    out = np.zeros(state.n_steps)
    energy = elastic_energy(mesh, mat, state.u[0], state.eps_p[0])
    for n in range(1, state.n_steps + 1):
        t, dt = float(state.times[n]), float(state.times[n] - state.times[n - 1])
        u_dot = state.u_dot(n)
        rate = (state.eps_p[n] - state.eps_p[n - 1]) / dt
        eps_dot = sym_grad(mesh, u_dot)
        phi = mech.phi(state.theta[n])
        new_energy = elastic_energy(mesh, mat, state.u[n], state.eps_p[n])
        lhs = (new_energy - energy) / dt + (heat.weights @ (state.theta[n] - state.theta[n - 1])) / dt
        work = float(mech.external_load(t) @ u_dot.ravel())
        flux = float(heat.boundary_flux(t).sum())
        coupling = ddot_arr(rate, C.apply_array(eps_dot)) - phi * np.trace(rate, axis1=1, axis2=2)
        out[n - 1] = lhs - (work + flux + float(mesh.volumes @ coupling))
        energy = new_energy
    return out


def measured_norms(coupler: Coupler, state: SimState) -> dict:
    mesh, q = coupler.mesh, coupler.material.exponents.q
    return {
        "sigma_Lq": [element_lq(mesh, s, q) for s in state.sigma],
        "eps_p_Lq": [element_lq(mesh, e, q) for e in state.eps_p],
        "u_dot_L2": [vertex_lq(mesh, state.u_dot(n), 2.0) for n in range(state.n_steps + 1)],
    }
