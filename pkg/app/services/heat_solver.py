"""Backward-Euler heat equation with mechanical dissipation as source, pure Neumann boundary."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy import sparse

from app.fem.assembly import (
    EliminatedSystem, assemble_flux, assemble_heat_matrices, lumped_vertex_weights, scatter_element_source,
)
from app.fem.mesh import MeshPartition, sym_grad
from app.fem.norms import element_lq
from app.fem.tensor import ddot_arr, trace_arr
from app.models.schemas import HeatTermNorms, SolverBlock
from app.services.logger import get_logger
from app.services.materials import ExponentSet, MaterialModel, phi_eval
from app.services.problem import ProblemData, VerificationHooks

log = get_logger(__name__)

COMPAT_ABS_TOL = 1e-8
COMPAT_WARN_TOL = 1e-4


@dataclass
class HeatSource:
    """Elementwise dissipation w = −φ(θ*)·div u̇ + ε̇p:σ + C(ε(u̇)):ε(u̇)."""
    dilatation: np.ndarray
    plastic: np.ndarray
    viscous: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.dilatation + self.plastic + self.viscous

    def norms(self, mesh: MeshPartition, r: float) -> HeatTermNorms:
        return HeatTermNorms(
            dilatation=element_lq(mesh, self.dilatation, r),
            plastic=element_lq(mesh, self.plastic, r),
            viscous=element_lq(mesh, self.viscous, r),
        )


def assemble_source(mesh: MeshPartition, material: MaterialModel, theta_star: np.ndarray, u_dot: np.ndarray,
                    eps_p_rate: np.ndarray, sigma: np.ndarray) -> Tuple[HeatSource, HeatTermNorms]:
    eps_dot = sym_grad(mesh, u_dot)
    phi = phi_eval(material.phi, mesh.to_elements(theta_star))
    C = material.C.with_dim(mesh.dim)
    source = HeatSource(
        dilatation=-phi * trace_arr(eps_dot),
        plastic=ddot_arr(mesh.check_element_field(eps_p_rate), mesh.check_element_field(sigma)),
        viscous=ddot_arr(C.apply_array(eps_dot), eps_dot),
    )
    return source, source.norms(mesh, material.exponents.r)


class HeatSolver:
    def __init__(self, mesh: MeshPartition, material: MaterialModel, data: ProblemData,
                 solver: Optional[SolverBlock] = None, hooks: Optional[VerificationHooks] = None):
        self.mesh = mesh
        self.material = material
        self.data = data
        self.solver = solver or SolverBlock()
        self.hooks = hooks or VerificationHooks()
        self.mass, self.lap = assemble_heat_matrices(mesh, material.kappa)
        self.weights = lumped_vertex_weights(mesh)
        self._systems: Dict[float, EliminatedSystem] = {}

    def system(self, dt: float) -> EliminatedSystem:
        if dt not in self._systems:
            self._systems[dt] = EliminatedSystem(self.mass / dt + self.lap, np.empty(0, dtype=int),
                                                 self.solver.linear_rtol)
        return self._systems[dt]

    def boundary_flux(self, t: float) -> np.ndarray:
        if self.data.h_is_zero:
            return np.zeros(self.mesh.n_vertices)
        return assemble_flux(self.mesh, lambda X: self.data.h(t, X), self.material.kappa)

    def extra_source(self, t: float) -> np.ndarray:
        if self.hooks.f_theta is None:
            return np.zeros(self.mesh.n_vertices)
        return self.weights * np.asarray(self.hooks.f_theta(t, self.mesh.vertices), dtype=float)

    def heat_step(self, theta_prev: np.ndarray, w: np.ndarray, t: float, dt: float) -> np.ndarray:
        """θ at time t from (M/dt + κK)θ = M/dt·θ_prev + scatter(w) + flux(h)."""
        theta_prev = self.mesh.check_vertex_field(theta_prev, 1)
        rhs = self.mass @ theta_prev / dt + scatter_element_source(self.mesh, w)
        rhs = rhs + self.boundary_flux(t) + self.extra_source(t)
        return self.system(dt).solve(rhs)

    def mean(self, theta: np.ndarray) -> float:
        return float(self.weights @ theta / self.mesh.total_volume)


def heat_step(mesh: MeshPartition, theta_prev: np.ndarray, w: np.ndarray, h: Optional[Callable], dt: float,
              kappa: float = 1.0, t: float = 0.0) -> np.ndarray:
    """Standalone step for callers without a full problem setup."""
    mass, lap = assemble_heat_matrices(mesh, kappa)
    rhs = mass @ np.asarray(theta_prev, dtype=float) / dt + scatter_element_source(mesh, w)
    if h is not None:
        rhs = rhs + assemble_flux(mesh, lambda X: h(t, X), kappa)
    return EliminatedSystem(sparse.csr_matrix(mass / dt + lap), np.empty(0, dtype=int)).solve(rhs)


class Compatibility(str, Enum):
    OK = "ok"
    WARNING = "warning"
    VIOLATION = "violation"


@dataclass
class CompatibilityResult:
    status: Compatibility
    max_deviation: float = 0.0
    tolerance: float = 0.0

    @property
    def message(self) -> str:
        return (f"compatibility: ∂θ0/∂n = h(0,·) violated on the boundary "
                f"(max deviation {self.max_deviation:.3e}, tolerance {self.tolerance:.1e})")


def check_compatibility(mesh: MeshPartition, theta0: np.ndarray, h: Callable[[float, np.ndarray], np.ndarray],
                        exponents: ExponentSet) -> CompatibilityResult:
    if exponents.r <= 3.0:
        return CompatibilityResult(Compatibility.OK)
    grad = mesh.gradient(theta0)
    dn = np.einsum("fi,fi->f", grad[mesh.facet_owner], mesh.facet_normals)
    target = np.asarray(h(0.0, mesh.facet_centroids), dtype=float)
    dev = float(np.abs(dn - target).max()) if dn.size else 0.0
    scale = 1.0 + (float(np.abs(target).max()) if target.size else 0.0)
    if dev <= COMPAT_ABS_TOL * scale:
        return CompatibilityResult(Compatibility.OK, dev, COMPAT_ABS_TOL * scale)
    if dev <= COMPAT_WARN_TOL * scale:
        log.warning(f"compatibility only approximately satisfied: max deviation {dev:.3e}")
        return CompatibilityResult(Compatibility.WARNING, dev, COMPAT_ABS_TOL * scale)
    return CompatibilityResult(Compatibility.VIOLATION, dev, COMPAT_ABS_TOL * scale)
