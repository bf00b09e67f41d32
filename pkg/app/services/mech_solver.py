"""Viscoelastic-plastic time stepping for a frozen temperature history.

Per step the plastic strain is found by fixed-point iteration:
εp* -> u (backward-Euler Kelvin–Voigt solve) -> σ -> εp_prev + dt·Λ(σ, θ*).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from app.core.errors import InnerIterationError
from app.fem.assembly import (
    EliminatedSystem, assemble_body_load, element_dofs, assemble_pressure_load, assemble_stiffness,
    assemble_tensor_load, assemble_traction, strain_operator, vertex_dofs,
)
from app.fem.mesh import MeshPartition, sym_grad
from app.fem.norms import element_lq
from app.models.schemas import InnerIterReport, SolverBlock
from app.services.logger import get_logger, residual_trail
from app.services.materials import MaterialModel, lambda_eval, phi_eval
from app.services.problem import ProblemData, VerificationHooks

log = get_logger(__name__)


@dataclass
class MechState:
    u: np.ndarray        # (n_vertices, d)
    u_dot: np.ndarray    # (n_vertices, d)
    eps_p: np.ndarray    # (n_elements, d, d)
    sigma: np.ndarray    # (n_elements, d, d)


@dataclass
class MechHistory:
    times: np.ndarray
    u: np.ndarray        # (N+1, n_vertices, d)
    eps_p: np.ndarray    # (N+1, n_elements, d, d)
    sigma: np.ndarray    # (N+1, n_elements, d, d)
    reports: List[InnerIterReport] = field(default_factory=list)


class MechSolver:
    def __init__(self, mesh: MeshPartition, material: MaterialModel, data: ProblemData,
                 solver: Optional[SolverBlock] = None, hooks: Optional[VerificationHooks] = None):
        if material.dim != mesh.dim:
            material = material.model_copy(update={"D": material.D.with_dim(mesh.dim),
                                                   "C": material.C.with_dim(mesh.dim)})
        self.mesh = mesh
        self.material = material
        self.data = data
        self.solver = solver or SolverBlock()
        self.hooks = hooks or VerificationHooks()
        self.K_D = assemble_stiffness(mesh, material.D)
        self.K_C = assemble_stiffness(mesh, material.C)
        self.fixed = vertex_dofs(mesh, mesh.dirichlet_vertices)
        self._systems: Dict[float, EliminatedSystem] = {}

    # ----- building blocks ---------------------------------------------------

    def system(self, dt: float) -> EliminatedSystem:
        if dt not in self._systems:
            self._systems[dt] = EliminatedSystem(self.K_D + self.K_C / dt, self.fixed, self.solver.linear_rtol)
        return self._systems[dt]

    def dirichlet_values(self, t: float) -> np.ndarray:
        if self.hooks.u_dirichlet is None:
            return np.zeros(self.fixed.size)
        X = self.mesh.vertices[self.mesh.dirichlet_vertices]
        return np.asarray(self.hooks.u_dirichlet(t, X), dtype=float).ravel()

    def external_load(self, t: float) -> np.ndarray:
        mesh, data = self.mesh, self.data
        b = data.b(t, mesh.vertices)
        if self.hooks.f_u is not None:
            b = b + self.hooks.f_u(t, mesh.vertices)
        return assemble_body_load(mesh, b) + assemble_traction(mesh, lambda X, N: data.g(t, X, N))

    def phi(self, theta_star: np.ndarray) -> np.ndarray:
        return phi_eval(self.material.phi, self.mesh.to_elements(theta_star))

    def viscoelastic_step(self, eps_p_star: np.ndarray, theta_star: np.ndarray, t: float,
                          u_prev: np.ndarray, dt: float, load: Optional[np.ndarray] = None) -> np.ndarray:
        """u at time t solving the backward-Euler weak form with εp* and θ* frozen."""
        mesh = self.mesh
        if load is None:
            load = self.external_load(t)
        rhs = (self.K_C @ u_prev.ravel()) / dt + load
        rhs = rhs + assemble_tensor_load(mesh, self.material.D, eps_p_star)
        rhs = rhs + assemble_pressure_load(mesh, self.phi(theta_star))
        u = self.system(dt).solve(rhs, self.dirichlet_values(t))
        return u.reshape(mesh.n_vertices, mesh.dim)

    def recover_stress(self, u: np.ndarray, u_prev: np.ndarray, eps_p: np.ndarray,
                       theta_star: np.ndarray, dt: float) -> np.ndarray:
        mesh, mat = self.mesh, self.material
        eps = sym_grad(mesh, u)
        eps_dot = sym_grad(mesh, (u - u_prev) / dt)
        sigma = mat.D.apply_array(eps - eps_p) + mat.C.apply_array(eps_dot)
        return sigma - self.phi(theta_star)[:, None, None] * np.eye(mesh.dim)

    def plastic_increment(self, eps_p_prev: np.ndarray, sigma: np.ndarray,
                          theta_star: np.ndarray, dt: float) -> np.ndarray:
        return eps_p_prev + dt * lambda_eval(self.material.flow, sigma, self.mesh.to_elements(theta_star))

    def residual_norm(self, diff: np.ndarray) -> float:
        return element_lq(self.mesh, diff, self.material.exponents.q)

    # ----- one time step -----------------------------------------------------

    def inner_fixed_point(self, u_prev: np.ndarray, eps_p_prev: np.ndarray, theta_star: np.ndarray,
                          t: float, dt: float, eps_p_guess: Optional[np.ndarray] = None,
                          tol: Optional[float] = None, max_iter: Optional[int] = None):
        tol = self.solver.inner_tol if tol is None else tol
        max_iter = self.solver.max_inner if max_iter is None else max_iter
        load = self.external_load(t)
        eps_star = eps_p_prev.copy() if eps_p_guess is None else np.array(eps_p_guess, dtype=float)
        report = InnerIterReport(dt=dt)
        for k in range(1, max_iter + 1):
            u = self.viscoelastic_step(eps_star, theta_star, t, u_prev, dt, load=load)
            sigma = self.recover_stress(u, u_prev, eps_star, theta_star, dt)
            eps_new = self.plastic_increment(eps_p_prev, sigma, theta_star, dt)
            res = self.residual_norm(eps_new - eps_star)
            if not np.isfinite(res):
                break
            if report.residuals and report.residuals[-1] > 0.0:
                report.contraction_ratios.append(res / report.residuals[-1])
            report.residuals.append(res)
            report.iterations = k
            if res <= tol:
                log.debug(f"inner t={t:.6g} dt={dt:.3e}: {k} iterations {residual_trail(report.residuals)}")
                sigma = self.recover_stress(u, u_prev, eps_new, theta_star, dt)
                state = MechState(u=u, u_dot=(u - u_prev) / dt, eps_p=eps_new, sigma=sigma)
                return state, report
            eps_star = eps_new
        raise InnerIterationError(
            f"plastic-strain iteration did not reach {tol:.1e} in {max_iter} iterations at t={t:.6g}, dt={dt:.3e}",
            detail={"t": t, "dt": dt, "residuals": report.residuals[-5:]})

    def step(self, u_prev: np.ndarray, eps_p_prev: np.ndarray, theta_prev: np.ndarray,
             theta_next: np.ndarray, t_prev: float, dt: float, halvings: int = 0):
        """Advance one step; on inner failure, retry as two half steps with θ* interpolated linearly."""
        try:
            state, report = self.inner_fixed_point(u_prev, eps_p_prev, theta_next, t_prev + dt, dt)
            report.halvings = halvings
            return state, report
        except InnerIterationError:
            if halvings >= self.solver.max_dt_halvings:
                raise
        log.warning(f"halving dt={dt:.3e} at t={t_prev:.6g} (halving {halvings + 1})")
        theta_mid = 0.5 * (theta_prev + theta_next)
        half = 0.5 * dt
        mid, rep1 = self.step(u_prev, eps_p_prev, theta_prev, theta_mid, t_prev, half, halvings + 1)
        end, rep2 = self.step(mid.u, mid.eps_p, theta_mid, theta_next, t_prev + half, half, halvings + 1)
        report = InnerIterReport(
            iterations=max(rep1.iterations, rep2.iterations),
            residuals=rep1.residuals + rep2.residuals,
            contraction_ratios=rep1.contraction_ratios + rep2.contraction_ratios,
            dt=min(rep1.dt, rep2.dt),
            halvings=max(rep1.halvings, rep2.halvings),
        )
        # σ stays the last sub-step's stress, the one in equilibrium with end.u
        end.u_dot = (end.u - u_prev) / dt
        return end, report

    def initial_stress(self, u0: np.ndarray, eps_p0: np.ndarray, theta0: np.ndarray) -> np.ndarray:
        # zero initial velocity
        return self.recover_stress(u0, u0, eps_p0, theta0, 1.0)

    def run(self, times: np.ndarray, theta_star: np.ndarray, u0: np.ndarray, eps_p0: np.ndarray) -> MechHistory:
        """March over every time node with the temperature history θ* frozen."""
        mesh = self.mesh
        n = len(times) - 1
        theta_star = np.asarray(theta_star, dtype=float)
        if theta_star.shape != (n + 1, mesh.n_vertices):
            raise ValueError(f"θ* history has shape {theta_star.shape}, expected {(n + 1, mesh.n_vertices)}")
        hist = MechHistory(
            times=np.asarray(times, dtype=float),
            u=np.zeros((n + 1, mesh.n_vertices, mesh.dim)),
            eps_p=np.zeros((n + 1, mesh.n_elements, mesh.dim, mesh.dim)),
            sigma=np.zeros((n + 1, mesh.n_elements, mesh.dim, mesh.dim)),
        )
        hist.u[0], hist.eps_p[0] = u0, eps_p0
        hist.sigma[0] = self.initial_stress(u0, eps_p0, theta_star[0])
        for k in range(n):
            dt = float(times[k + 1] - times[k])
            state, report = self.step(hist.u[k], hist.eps_p[k], theta_star[k], theta_star[k + 1], float(times[k]), dt)
            hist.u[k + 1], hist.eps_p[k + 1], hist.sigma[k + 1] = state.u, state.eps_p, state.sigma
            hist.reports.append(report)
        return hist


def divergence_residual(solver: MechSolver, sigma: np.ndarray, t: float) -> float:
    """Max |∫σ:ε(v) − load(v)| over test functions vanishing on Γ0."""
    mesh = solver.mesh
    internal = np.zeros(mesh.n_vertices * mesh.dim)
    fe = mesh.volumes[:, None] * np.einsum("eij,epij->ep", sigma, strain_operator(mesh))
    np.add.at(internal, element_dofs(mesh).ravel(), fe.ravel())
    r = internal - solver.external_load(t)
    r[solver.fixed] = 0.0
    return float(np.abs(r).max())
