from __future__ import annotations
from enum import Enum
from typing import Callable, List, Tuple, Union
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.fem.tensor import IsotropicRank4, SymTensor, dev_arr, norm_arr


class ExponentSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    p: float = 2.0
    r: float = 2.0
    s: float = 4.0
    q: float = 3.0
    alpha: float = 0.25
    beta: float = 0.25

    @property
    def gamma(self) -> float:
        return max(self.alpha, self.beta)


# (name, holds?) pairs; names are what validation failures report
EXPONENT_CONSTRAINTS: List[Tuple[str, Callable[[ExponentSet], bool]]] = [
    ("p > 1", lambda e: e.p > 1.0),
    ("p < ∞", lambda e: math.isfinite(e.p)),
    ("r > 1", lambda e: e.r > 1.0),
    ("r < ∞", lambda e: math.isfinite(e.r)),
    ("α > 0", lambda e: e.alpha > 0.0),
    ("α < 1/2", lambda e: e.alpha < 0.5),
    ("β > 0", lambda e: e.beta > 0.0),
    ("β < 1/2", lambda e: e.beta < 0.5),
    ("r ≥ max(α,β)·q", lambda e: e.r >= e.gamma * e.q),
    ("p ≥ max(α,β)·s", lambda e: e.p >= e.gamma * e.s),
    ("q > 2", lambda e: e.q > 2.0),
]


def validate(exponents: ExponentSet) -> List[str]:
    """Every violated exponent inequality by name; an empty list means ok."""
    violations = []
    for name, holds in EXPONENT_CONSTRAINTS:
        try:
            ok = bool(holds(exponents))
        except (ValueError, OverflowError):
            ok = False
        if not ok:
            violations.append(name)
    return violations


class ThermalStressLaw(BaseModel):
    """φ(s) = c·sign(s)·|s|^alpha; with c ≤ 1 this satisfies |φ(s)| ≤ |s|^alpha."""
    model_config = ConfigDict(frozen=True)

    c: float = Field(1.0, ge=0.0, le=1.0)
    alpha: float = 0.25

    def __call__(self, s):
        return phi_eval(self, s)


def phi_eval(law: ThermalStressLaw, s):
    arr = np.asarray(s, dtype=float)
    if law.c == 0.0:
        out = np.zeros_like(arr)
    else:
        out = law.c * np.sign(arr) * np.abs(arr) ** law.alpha
    return float(out) if out.ndim == 0 else out


class FlowKind(str, Enum):
    NONE = "none"
    LINEAR = "linear"
    REG_VON_MISES = "reg_von_mises"


class FlowRule(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: FlowKind = FlowKind.LINEAR
    eta: float = Field(1.0, gt=0.0)
    k0: float = Field(0.0, ge=0.0)
    k1: float = Field(0.0, ge=0.0)
    beta: float = 0.25

    @property
    def L1(self) -> float:
        return 0.0 if self.kind == FlowKind.NONE else 1.0 / self.eta

    @property
    def L2(self) -> float:
        return self.k1 / self.eta if self.kind == FlowKind.REG_VON_MISES else 0.0

    def yield_radius(self, theta):
        return self.k0 + self.k1 * np.abs(np.asarray(theta, dtype=float)) ** self.beta

    def __call__(self, sigma, theta):
        return lambda_eval(self, sigma, theta)


def _rate_array(flow: FlowRule, sigma: np.ndarray, theta) -> np.ndarray:
    if flow.kind == FlowKind.NONE:
        return np.zeros_like(sigma)
    s = dev_arr(sigma)
    if flow.kind == FlowKind.LINEAR:
        return s / flow.eta
    n = norm_arr(s)
    excess = np.maximum(n - flow.yield_radius(theta), 0.0)
    scale = np.divide(excess, n * flow.eta, out=np.zeros_like(n), where=n > 0.0)
    return scale[..., None, None] * s


def lambda_eval(flow: FlowRule, sigma: Union[SymTensor, np.ndarray], theta) -> Union[SymTensor, np.ndarray]:
    """Plastic strain rate Λ(σ, θ); trace-free for every variant."""
    if isinstance(sigma, SymTensor):
        return SymTensor.from_matrix(_rate_array(flow, sigma.matrix, float(theta)))
    return _rate_array(flow, np.asarray(sigma, dtype=float), theta)


class MaterialModel(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    D: IsotropicRank4
    C: IsotropicRank4
    kappa: float = Field(1.0, gt=0.0)
    phi: ThermalStressLaw = ThermalStressLaw()
    flow: FlowRule = FlowRule()
    exponents: ExponentSet = ExponentSet()

    @model_validator(mode="after")
    def _consistent(self):
        if self.D.dim != self.C.dim:
            raise ValueError(f"operators D and C have different dimensions ({self.D.dim} vs {self.C.dim})")
        if not math.isclose(self.phi.alpha, self.exponents.alpha):
            raise ValueError("thermal stress exponent must equal exponents.alpha")
        if self.flow.kind == FlowKind.REG_VON_MISES and not math.isclose(self.flow.beta, self.exponents.beta):
            raise ValueError("flow-rule Hölder exponent must equal exponents.beta")
        return self

    @property
    def dim(self) -> int:
        return self.D.dim

    def violations(self) -> List[str]:
        return validate(self.exponents)


def exponents_from_block(block) -> ExponentSet:
    return ExponentSet(p=block.p, r=block.r, s=block.s, q=block.q, alpha=block.alpha, beta=block.beta)


def material_from_block(block, dim: int) -> MaterialModel:
    """MaterialModel from a config material block; pydantic errors surface as ValueError."""
    return MaterialModel(
        D=IsotropicRank4(mu=block.mu_D, lam=block.lambda_D, dim=dim),
        C=IsotropicRank4(mu=block.mu_C, lam=block.lambda_C, dim=dim),
        kappa=block.kappa,
        phi=ThermalStressLaw(c=block.c, alpha=block.alpha),
        flow=FlowRule(kind=FlowKind(block.flow), eta=block.eta, k0=block.k0, k1=block.k1, beta=block.beta),
        exponents=exponents_from_block(block),
    )
