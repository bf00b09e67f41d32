"""Loads, initial data and time grid of one run."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from app.fem.mesh import MeshPartition
from app.fem.tensor import from_components, n_components
from app.models.schemas import DataBlock
from app.services.logger import get_logger
from app.utils.catalog import FieldExpression, parse_expression

log = get_logger(__name__)

VectorFn = Callable[[float, np.ndarray], np.ndarray]
TractionFn = Callable[[float, np.ndarray, np.ndarray], np.ndarray]
ScalarFn = Callable[[float, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n_steps: int
    t0: float = 0.0

    def __post_init__(self):
        if not (self.T > 0.0) or self.n_steps < 1:
            raise ValueError(f"time grid needs T > 0 and n_steps >= 1, got T={self.T}, n_steps={self.n_steps}")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    def window(self, start: int, stop: int) -> "TimeGrid":
        return TimeGrid(T=self.dt * (stop - start), n_steps=stop - start, t0=self.t0 + start * self.dt)


def _zero_vector(dim):
    return lambda t, X: np.zeros((X.shape[0], dim))


@dataclass
class ProblemData:
    """Time-dependent data as callables of (t, points).

    b(t, X) -> (n, d); g(t, X, normals) -> (n, d); h(t, X) -> (n,);
    u0(X) -> (n, d); eps_p0(X) -> (n, d, d); theta0(X) -> (n,).
    """
    dim: int
    b: VectorFn
    g: TractionFn
    h: ScalarFn
    u0: Callable[[np.ndarray], np.ndarray]
    eps_p0: Callable[[np.ndarray], np.ndarray]
    theta0: Callable[[np.ndarray], np.ndarray]
    h_is_zero: bool = False

    @classmethod
    def zero(cls, dim: int, **overrides) -> "ProblemData":
        base = dict(
            dim=dim,
            b=_zero_vector(dim),
            g=lambda t, X, N: np.zeros((X.shape[0], dim)),
            h=lambda t, X: np.zeros(X.shape[0]),
            u0=lambda X: np.zeros((X.shape[0], dim)),
            eps_p0=lambda X: np.zeros((X.shape[0], dim, dim)),
            theta0=lambda X: np.zeros(X.shape[0]),
            h_is_zero="h" not in overrides,
        )
        base.update(overrides)
        return cls(**base)


@dataclass
class VerificationHooks:
    """Extra terms allowed only in verification runs (patch tests, manufactured solutions).

    u_dirichlet(t, X) -> (n, d) replaces u = 0 on Γ0; f_u(t, X) -> (n, d) and
    f_theta(t, X) -> (n,) are added to the momentum and heat right-hand sides.
    """
    u_dirichlet: Optional[VectorFn] = None
    f_u: Optional[VectorFn] = None
    f_theta: Optional[ScalarFn] = None


@dataclass
class ParsedData:
    b: FieldExpression
    g: FieldExpression
    h: FieldExpression
    u0: FieldExpression
    eps_p0: FieldExpression
    theta0: FieldExpression


def parse_data_block(block: DataBlock, dim: int) -> ParsedData:
    return ParsedData(
        b=parse_expression(block.b, dim, dim),
        g=parse_expression(block.g, dim, dim),
        h=parse_expression(block.h, 1, dim),
        u0=parse_expression(block.u0, dim, dim),
        eps_p0=parse_expression(block.eps_p0, n_components(dim), dim),
        theta0=parse_expression(block.theta0, 1, dim),
    )


def build_problem(block: DataBlock, extents: Sequence[float]) -> ProblemData:
    dim = len(extents)
    pd_ = parse_data_block(block, dim)
    L = tuple(extents)
    return ProblemData(
        dim=dim,
        b=lambda t, X: pd_.b.evaluate(t, X, L),
        g=lambda t, X, N: pd_.g.evaluate(t, X, L),
        h=lambda t, X: pd_.h.evaluate(t, X, L)[:, 0],
        u0=lambda X: pd_.u0.evaluate(0.0, X, L),
        eps_p0=lambda X: from_components(pd_.eps_p0.evaluate(0.0, X, L), dim),
        theta0=lambda X: pd_.theta0.evaluate(0.0, X, L)[:, 0],
        h_is_zero=pd_.h.is_zero,
    )


def initial_displacement(mesh: MeshPartition, data: ProblemData) -> np.ndarray:
    u0 = np.array(data.u0(mesh.vertices), dtype=float)
    fixed = mesh.dirichlet_vertices
    if np.any(u0[fixed] != 0.0):
        log.warning(f"u0 does not vanish on the Dirichlet boundary (max |u0| = {np.abs(u0[fixed]).max():.3e}); "
                    f"setting it to zero there")
        u0[fixed] = 0.0
    return u0
