"""Brute-force reference: the full coupled step solved at once by damped Newton.

Unknowns per step are [free displacement dofs, element plastic strain components,
vertex temperatures]; the Jacobian is built by central finite differences, so the
oracle only runs on tiny meshes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from app.core.errors import ConfigInvalid, OracleNewtonError
from app.fem.assembly import assemble_pressure_load, assemble_tensor_load, scatter_element_source
from app.fem.tensor import dev_arr, from_components, n_components, norm_arr, to_components
from app.models.schemas import SolverBlock
from app.services.coupler import Coupler, SimState
from app.services.heat_solver import assemble_source
from app.services.logger import get_logger
from app.services.materials import FlowKind, FlowRule, MaterialModel, lambda_eval
from app.services.problem import ProblemData, TimeGrid

log = get_logger(__name__)

MAX_UNKNOWNS = 200
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
FD_STEP = 1e-6


@dataclass
class OracleResult:
    state: SimState
    iterations: List[int] = field(default_factory=list)
    residuals: List[float] = field(default_factory=list)


class MonolithicOracle:
    def __init__(self, mesh, material: MaterialModel, data: ProblemData, solver: Optional[SolverBlock] = None):
        # the coupler supplies assembled operators and the initial state; its Picard loop is not used
        self.coupler = Coupler(mesh, material, data, solver)
        self.mesh = mesh
        self.mech = self.coupler.mech
        self.heat = self.coupler.heat
        d = mesh.dim
        self.n_free = mesh.n_vertices * d - self.mech.fixed.size
        self.n_comp = n_components(d)
        self.n_unknowns = self.n_free + mesh.n_elements * self.n_comp + mesh.n_vertices
        if self.n_unknowns > MAX_UNKNOWNS:
            raise ConfigInvalid([f"oracle: {self.n_unknowns} unknowns exceed the limit of {MAX_UNKNOWNS}; "
                                 f"use a coarser mesh"])
        self.free = np.setdiff1d(np.arange(mesh.n_vertices * d), self.mech.fixed)

    def _split(self, x: np.ndarray, t: float):
        mesh, d = self.mesh, self.mesh.dim
        u = np.zeros(mesh.n_vertices * d)
        u[self.mech.fixed] = self.mech.dirichlet_values(t)
        u[self.free] = x[:self.n_free]
        k = self.n_free + mesh.n_elements * self.n_comp
        eps_p = from_components(x[self.n_free:k].reshape(mesh.n_elements, self.n_comp), d)
        return u.reshape(mesh.n_vertices, d), eps_p, x[k:]

    def _pack(self, u: np.ndarray, eps_p: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return np.concatenate([u.ravel()[self.free], to_components(eps_p).ravel(), theta])

    def residual(self, x: np.ndarray, u_prev, eps_p_prev, theta_prev, t: float, dt: float) -> np.ndarray:
        mesh, mech, heat = self.mesh, self.mech, self.heat
        mat = mech.material
        u, eps_p, theta = self._split(x, t)
        K = mech.K_D + mech.K_C / dt
        r_u = K @ u.ravel() - mech.K_C @ u_prev.ravel() / dt - mech.external_load(t)
        r_u -= assemble_tensor_load(mesh, mat.D, eps_p) + assemble_pressure_load(mesh, mech.phi(theta))
        sigma = mech.recover_stress(u, u_prev, eps_p, theta, dt)
        r_e = eps_p - eps_p_prev - dt * lambda_eval(mat.flow, sigma, mesh.to_elements(theta))
        u_dot = (u - u_prev) / dt
        source, _ = assemble_source(mesh, mat, theta, u_dot, (eps_p - eps_p_prev) / dt, sigma)
        r_t = (heat.mass / dt + heat.lap) @ theta - heat.mass @ theta_prev / dt
        r_t -= scatter_element_source(mesh, source.values) + heat.boundary_flux(t) + heat.extra_source(t)
        return np.concatenate([r_u[self.free], to_components(r_e).ravel(), r_t])

    def jacobian(self, fn, x: np.ndarray) -> np.ndarray:
        n = x.size
        J = np.empty((n, n))
        for j in range(n):
            h = FD_STEP * max(1.0, abs(x[j]))
            xp, xm = x.copy(), x.copy()
            xp[j] += h
            xm[j] -= h
            J[:, j] = (fn(xp) - fn(xm)) / (2.0 * h)
        return J

    def newton(self, fn, x0: np.ndarray):
        x = x0.copy()
        r = fn(x)
        res = [float(np.abs(r).max())]
        for it in range(1, NEWTON_MAX_ITER + 1):
            if res[-1] <= NEWTON_TOL:
                return x, it - 1, res
            try:
                dx = np.linalg.solve(self.jacobian(fn, x), -r)
            except np.linalg.LinAlgError as exc:
                raise OracleNewtonError(f"singular finite-difference Jacobian: {exc}",
                                        detail={"residuals": res})
            lam = 1.0
            while True:
                trial = x + lam * dx
                r_trial = fn(trial)
                norm = float(np.abs(r_trial).max())
                if np.isfinite(norm) and norm < (1.0 - 1e-4 * lam) * res[-1]:
                    break
                lam *= 0.5
                if lam < 1.0 / 1024.0:
                    # roundoff floor: accept the full step if it is already tiny
                    if np.isfinite(norm) and float(np.abs(dx).max()) <= 1e-13 * (1.0 + float(np.abs(x).max())):
                        return trial, it, res + [norm]
                    raise OracleNewtonError(f"line search failed at residual {res[-1]:.3e}",
                                            detail={"residuals": res})
            x, r = trial, r_trial
            res.append(norm)
        if res[-1] <= NEWTON_TOL:
            return x, NEWTON_MAX_ITER, res
        raise OracleNewtonError(f"Newton did not reach {NEWTON_TOL:.0e} in {NEWTON_MAX_ITER} iterations "
                                f"(residual {res[-1]:.3e})", detail={"residuals": res})

    def solve(self, grid: TimeGrid) -> OracleResult:
        start = self.coupler.initial_state()
        n = grid.n_steps
        times = grid.times
        u, eps_p, sigma, theta = [start.u[0]], [start.eps_p[0]], [start.sigma[0]], [start.theta[0]]
        result = OracleResult(state=None)
        for k in range(n):
            t, dt = float(times[k + 1]), float(times[k + 1] - times[k])
            args = (u[-1], eps_p[-1], theta[-1], t, dt)
            x, iters, res = self.newton(lambda x: self.residual(x, *args), self._pack(u[-1], eps_p[-1], theta[-1]))
            un, en, tn = self._split(x, t)
            u.append(un)
            eps_p.append(en)
            theta.append(np.array(tn))
            sigma.append(self.mech.recover_stress(un, args[0], en, tn, dt))
            result.iterations.append(iters)
            result.residuals.append(res[-1])
            log.debug(f"oracle step {k + 1}: {iters} Newton iterations, residual {res[-1]:.2e}")
        result.state = SimState(times, np.array(u), np.array(eps_p), np.array(sigma), np.array(theta))
        return result


def compare(a: SimState, b: SimState) -> dict:
    return {
        "u": float(np.abs(a.u - b.u).max()),
        "eps_p": float(np.abs(a.eps_p - b.eps_p).max()),
        "sigma": float(np.abs(a.sigma[1:] - b.sigma[1:]).max()) if a.n_steps else 0.0,
        "theta": float(np.abs(a.theta - b.theta).max()),
    }


def yield_mask(mesh, flow: FlowRule, state: SimState) -> np.ndarray:
    """(N, n_elements) flags: element stress outside the yield radius at steps 1..N."""
    s = norm_arr(dev_arr(state.sigma[1:]))
    if flow.kind == FlowKind.NONE:
        return np.zeros(s.shape, dtype=bool)
    if flow.kind == FlowKind.LINEAR:
        return s > 0.0
    radius = np.array([flow.yield_radius(mesh.to_elements(th)) for th in state.theta[1:]])
    return s > radius
