"""Manufactured-solution convergence studies (2-d).

Mechanics: u = s(t)·(x1², x1·x2) with φ ≡ 0 and Λ ≡ 0; the body force and the
traction σ·n are computed in closed form. Heat: θ = t·cos(πx1/L1), which has zero
normal derivative on every face, forced by a volumetric source.
"""
from __future__ import annotations

import math
from typing import Callable, List, Optional, Sequence

import numpy as np

from app.core.errors import ConfigInvalid
from app.fem.mesh import MeshPartition, build_mesh
from app.fem.norms import l2_error
from app.models.schemas import ConvergenceRow, RunConfig, SolverBlock
from app.services.heat_solver import HeatSolver
from app.services.logger import get_logger, timeblock
from app.services.materials import FlowKind, FlowRule, MaterialModel, ThermalStressLaw, material_from_block
from app.services.mech_solver import MechSolver
from app.services.problem import ProblemData, TimeGrid, VerificationHooks

log = get_logger(__name__)

REFERENCE_STEPS = 512

ScalarOfTime = Callable[[float], float]


def _pure_kelvin_voigt(material: MaterialModel) -> MaterialModel:
    return material.model_copy(update={
        "phi": ThermalStressLaw(c=0.0, alpha=material.exponents.alpha),
        "flow": FlowRule(kind=FlowKind.NONE, beta=material.exponents.beta),
    })


class MechanicsManufactured:
    """u = s(t)·(x1², x1·x2); with Γ0 = {x1 = 0} the Dirichlet data is zero."""

    def __init__(self, material: MaterialModel, s: ScalarOfTime = lambda t: t, s_dot: ScalarOfTime = lambda t: 1.0):
        self.D, self.C = material.D.with_dim(2), material.C.with_dim(2)
        self.s, self.s_dot = s, s_dot

    def exact(self, t: float) -> Callable[[np.ndarray], np.ndarray]:
        return lambda X: self.s(t) * np.stack([X[:, 0] ** 2, X[:, 0] * X[:, 1]], axis=1)

    @staticmethod
    def _strain(X: np.ndarray) -> np.ndarray:
        eps = np.zeros((X.shape[0], 2, 2))
        eps[:, 0, 0] = 2.0 * X[:, 0]
        eps[:, 1, 1] = X[:, 0]
        eps[:, 0, 1] = eps[:, 1, 0] = 0.5 * X[:, 1]
        return eps

    def stress(self, t: float, X: np.ndarray) -> np.ndarray:
        eps = self._strain(X)
        return self.s(t) * self.D.apply_array(eps) + self.s_dot(t) * self.C.apply_array(eps)

    def body_force(self, t: float, X: np.ndarray) -> np.ndarray:
        # −div σ; div of D(ε) is (5μ + 3λ, 0) for this field
        out = np.zeros((X.shape[0], 2))
        out[:, 0] = -(self.s(t) * (5 * self.D.mu + 3 * self.D.lam) + self.s_dot(t) * (5 * self.C.mu + 3 * self.C.lam))
        return out

    def traction(self, t: float, X: np.ndarray, N: np.ndarray) -> np.ndarray:
        return np.einsum("nij,nj->ni", self.stress(t, X), N)


class HeatManufactured:
    """θ = t·cos(πx1/L1); source cos(πx1/L1)·(1 + κtπ²/L1²)."""

    def __init__(self, kappa: float, L1: float):
        self.kappa, self.L1 = kappa, L1

    def exact(self, t: float) -> Callable[[np.ndarray], np.ndarray]:
        return lambda X: t * np.cos(math.pi * X[:, 0] / self.L1)

    def source(self, t: float, X: np.ndarray) -> np.ndarray:
        k = math.pi / self.L1
        return np.cos(k * X[:, 0]) * (1.0 + self.kappa * t * k * k)


class HeatTimeForcing:
    """Smooth forcing for the temporal study: cos(πx1/L1)·cos(t)."""

    def __init__(self, L1: float):
        self.L1 = L1

    def source(self, t: float, X: np.ndarray) -> np.ndarray:
        return np.cos(math.pi * X[:, 0] / self.L1) * math.cos(t)


def _orders(errors: Sequence[float]) -> List[Optional[float]]:
    out: List[Optional[float]] = [None]
    for a, b in zip(errors[:-1], errors[1:]):
        out.append(math.log2(a / b) if a > 0.0 and b > 0.0 else None)
    return out


def _mesh(extents, n: int) -> MeshPartition:
    return build_mesh(extents, (n, n), "x1=0")


def solve_mechanics(mesh: MeshPartition, material: MaterialModel, problem: MechanicsManufactured,
                    grid: TimeGrid, solver: SolverBlock) -> np.ndarray:
    data = ProblemData.zero(2, g=problem.traction)
    mech = MechSolver(mesh, _pure_kelvin_voigt(material), data, solver, VerificationHooks(f_u=problem.body_force))
    theta = np.zeros(mesh.n_vertices)
    u = np.zeros((mesh.n_vertices, 2))
    eps_p = np.zeros((mesh.n_elements, 2, 2))
    times = grid.times
    for k in range(grid.n_steps):
        state, _ = mech.inner_fixed_point(u, eps_p, theta, float(times[k + 1]), grid.dt)
        u = state.u
    return u


def solve_heat(mesh: MeshPartition, material: MaterialModel, source: Callable, grid: TimeGrid,
               solver: SolverBlock, theta0: Optional[np.ndarray] = None) -> np.ndarray:
    heat = HeatSolver(mesh, material, ProblemData.zero(2), solver, VerificationHooks(f_theta=source))
    theta = np.zeros(mesh.n_vertices) if theta0 is None else theta0
    w = np.zeros(mesh.n_elements)
    times = grid.times
    for k in range(grid.n_steps):
        theta = heat.heat_step(theta, w, float(times[k + 1]), grid.dt)
    return theta


def spatial_studies(material: MaterialModel, extents, base: int, levels: int, grid: TimeGrid,
                    solver: SolverBlock) -> List[ConvergenceRow]:
    mech_problem = MechanicsManufactured(material)
    heat_problem = HeatManufactured(material.kappa, extents[0])
    rows: List[ConvergenceRow] = []
    hs, eu, et = [], [], []
    for level in range(levels):
        mesh = _mesh(extents, base * 2 ** level)
        with timeblock(log, f"mms level {level} ({mesh.n_elements} triangles)"):
            u = solve_mechanics(mesh, material, mech_problem, grid, solver)
            theta = solve_heat(mesh, material, heat_problem.source, grid, solver)
        hs.append(mesh.h)
        eu.append(l2_error(mesh, u, mech_problem.exact(grid.T)))
        et.append(l2_error(mesh, theta, heat_problem.exact(grid.T)))
    for study, errs in (("mech-space", eu), ("heat-space", et)):
        for level, (h, e, p) in enumerate(zip(hs, errs, _orders(errs))):
            rows.append(ConvergenceRow(study=study, level=level, h=h, dt=grid.dt, error=e, order=p))
    return rows


def temporal_studies(material: MaterialModel, extents, n_cells: int, levels: int, T: float, base_steps: int,
                     solver: SolverBlock) -> List[ConvergenceRow]:
    mesh = _mesh(extents, n_cells)
    mech_problem = MechanicsManufactured(material, s=math.sin, s_dot=math.cos)
    forcing = HeatTimeForcing(extents[0])
    n_ref = max(REFERENCE_STEPS, 16 * base_steps * 2 ** (levels - 1))
    ref_grid = TimeGrid(T, n_ref)
    with timeblock(log, f"mms temporal reference ({n_ref} steps)"):
        u_ref = solve_mechanics(mesh, material, mech_problem, ref_grid, solver)
        t_ref = solve_heat(mesh, material, forcing.source, ref_grid, solver)
    zero_u = lambda X: np.zeros((X.shape[0], 2))
    zero_t = lambda X: np.zeros(X.shape[0])
    dts, eu, et = [], [], []
    for level in range(levels):
        grid = TimeGrid(T, base_steps * 2 ** level)
        u = solve_mechanics(mesh, material, mech_problem, grid, solver)
        theta = solve_heat(mesh, material, forcing.source, grid, solver)
        dts.append(grid.dt)
        eu.append(l2_error(mesh, u - u_ref, zero_u))
        et.append(l2_error(mesh, theta - t_ref, zero_t))
    rows: List[ConvergenceRow] = []
    for study, errs in (("mech-time", eu), ("heat-time", et)):
        for level, (dt, e, p) in enumerate(zip(dts, errs, _orders(errs))):
            rows.append(ConvergenceRow(study=study, level=level, h=mesh.h, dt=dt, error=e, order=p))
    return rows


def convergence_study(config: RunConfig, levels: int = 3) -> List[ConvergenceRow]:
    extents = tuple(config.mesh.extents)
    if len(extents) != 2:
        raise ConfigInvalid(["mms: manufactured solutions are available in 2-d only"])
    if levels < 2:
        raise ConfigInvalid([f"mms: need at least 2 refinement levels, got {levels}"])
    material = material_from_block(config.material, 2)
    base = int(config.mesh.resolution[0])
    grid = TimeGrid(config.time.T, config.time.n_steps)
    rows = spatial_studies(material, extents, base, levels, grid, config.solver)
    rows += temporal_studies(material, extents, base * 2 ** (levels - 1), levels, config.time.T,
                             config.time.n_steps, config.solver)
    for row in rows:
        log.info(f"{row.study} level={row.level} h={row.h:.4g} dt={row.dt:.4g} error={row.error:.3e} "
                 f"order={'-' if row.order is None else f'{row.order:.2f}'}")
    return rows
