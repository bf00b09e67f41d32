"""Symmetric second-order tensors and isotropic rank-4 operators.

Two representations live side by side:

* ``SymTensor``: a single value storing the d(d+1)/2 independent entries
  (row-major upper triangle). Used at API boundaries and in tests.
* plain ``(..., d, d)`` arrays: how fields (one tensor per element) are stored
  and computed on. Every kernel below accepts any leading batch shape.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from app.core.errors import DimensionMismatch

SUPPORTED_DIMS = (2, 3)


def n_components(dim: int) -> int:
    return dim * (dim + 1) // 2


def _check_dim(dim: int) -> None:
    if dim not in SUPPORTED_DIMS:
        raise DimensionMismatch(f"dimension must be one of {SUPPORTED_DIMS}, got {dim}")


def upper_indices(dim: int) -> Tuple[np.ndarray, np.ndarray]:
    return np.triu_indices(dim)


def multiplicity(dim: int) -> np.ndarray:
    i, j = upper_indices(dim)
    return np.where(i == j, 1.0, 2.0)


# ----- array kernels -------------------------------------------------------

def trace_arr(a: np.ndarray) -> np.ndarray:
    return np.trace(a, axis1=-2, axis2=-1)


def dev_arr(a: np.ndarray) -> np.ndarray:
    d = a.shape[-1]
    return a - (trace_arr(a) / d)[..., None, None] * np.eye(d)


def ddot_arr(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum("...ij,...ij->...", a, b)


def norm_arr(a: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(ddot_arr(a, a), 0.0))


def sym_arr(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def to_components(a: np.ndarray) -> np.ndarray:
    i, j = upper_indices(a.shape[-1])
    return a[..., i, j]


def from_components(c: np.ndarray, dim: int) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.shape[-1] != n_components(dim):
        raise DimensionMismatch(
            f"expected {n_components(dim)} components for d={dim}, got {c.shape[-1]}")
    out = np.zeros(c.shape[:-1] + (dim, dim))
    i, j = upper_indices(dim)
    out[..., i, j] = c
    out[..., j, i] = c
    return out


# ----- pointwise value type ------------------------------------------------

@dataclass(frozen=True)
class SymTensor:
    dim: int
    entries: Tuple[float, ...]

    def __post_init__(self):
        _check_dim(self.dim)
        if len(self.entries) != n_components(self.dim):
            raise DimensionMismatch(
                f"SymTensor(d={self.dim}) needs {n_components(self.dim)} entries, got {len(self.entries)}")
        object.__setattr__(self, "entries", tuple(float(x) for x in self.entries))

    @classmethod
    def from_matrix(cls, m) -> "SymTensor":
        m = np.asarray(m, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
        return cls(m.shape[0], tuple(to_components(sym_arr(m))))

    @classmethod
    def zeros(cls, dim: int) -> "SymTensor":
        return cls(dim, (0.0,) * n_components(dim))

    @classmethod
    def identity(cls, dim: int) -> "SymTensor":
        return cls.from_matrix(np.eye(dim))

    @classmethod
    def diag(cls, *values: float) -> "SymTensor":
        return cls.from_matrix(np.diag(values))

    @classmethod
    def offdiag(cls, dim: int, value: float = 1.0, i: int = 0, j: int = 1) -> "SymTensor":
        m = np.zeros((dim, dim))
        m[i, j] = m[j, i] = value
        return cls.from_matrix(m)

    @property
    def matrix(self) -> np.ndarray:
        return from_components(np.array(self.entries), self.dim)

    @property
    def array(self) -> np.ndarray:
        return np.array(self.entries)

    def _same_dim(self, other: "SymTensor") -> None:
        if not isinstance(other, SymTensor):
            raise TypeError(f"expected SymTensor, got {type(other).__name__}")
        if other.dim != self.dim:
            raise DimensionMismatch(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other: "SymTensor") -> "SymTensor":
        self._same_dim(other)
        return SymTensor(self.dim, tuple(self.array + other.array))

    def __sub__(self, other: "SymTensor") -> "SymTensor":
        self._same_dim(other)
        return SymTensor(self.dim, tuple(self.array - other.array))

    def __mul__(self, k: float) -> "SymTensor":
        return SymTensor(self.dim, tuple(float(k) * self.array))

    __rmul__ = __mul__

    def __neg__(self) -> "SymTensor":
        return self * -1.0

    def norm(self) -> float:
        return float(np.sqrt(frobenius(self, self)))

    def allclose(self, other: "SymTensor", atol: float = 1e-12) -> bool:
        self._same_dim(other)
        return bool(np.allclose(self.array, other.array, atol=atol, rtol=0.0))


TensorLike = Union[SymTensor, np.ndarray]


# ----- isotropic rank-4 operator -------------------------------------------

@dataclass(frozen=True)
class IsotropicRank4:
    """Op(E) = 2·mu·E + lam·tr(E)·I, positive definite on symmetric tensors."""

    mu: float
    lam: float
    dim: int = 3

    def __post_init__(self):
        _check_dim(self.dim)
        if not (2.0 * self.mu > 0.0 and self.dim * self.lam + 2.0 * self.mu > 0.0):
            raise ValueError(
                f"isotropic operator not positive definite: mu={self.mu}, lambda={self.lam}, d={self.dim}")

    @property
    def ellipticity(self) -> float:
        return min(2.0 * self.mu, self.dim * self.lam + 2.0 * self.mu)

    def with_dim(self, dim: int) -> "IsotropicRank4":
        return IsotropicRank4(self.mu, self.lam, dim)

    def apply_array(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if a.shape[-2:] != (self.dim, self.dim):
            raise DimensionMismatch(f"operator of dimension {self.dim} applied to shape {a.shape}")
        return 2.0 * self.mu * a + self.lam * trace_arr(a)[..., None, None] * np.eye(self.dim)


def apply(op: IsotropicRank4, E: TensorLike) -> TensorLike:
    if isinstance(E, SymTensor):
        if E.dim != op.dim:
            raise DimensionMismatch(f"operator of dimension {op.dim} applied to SymTensor(d={E.dim})")
        return SymTensor.from_matrix(op.apply_array(E.matrix))
    return op.apply_array(E)


def frobenius(A: TensorLike, B: TensorLike):
    if isinstance(A, SymTensor) or isinstance(B, SymTensor):
        if not (isinstance(A, SymTensor) and isinstance(B, SymTensor)):
            raise TypeError("frobenius expects two SymTensor values or two arrays")
        A._same_dim(B)
        return float(np.sum(multiplicity(A.dim) * A.array * B.array))
    A, B = np.asarray(A, dtype=float), np.asarray(B, dtype=float)
    if A.shape[-2:] != B.shape[-2:]:
        raise DimensionMismatch(f"shape mismatch: {A.shape} vs {B.shape}")
    return ddot_arr(A, B)


def trace(A: TensorLike):
    if isinstance(A, SymTensor):
        return float(np.trace(A.matrix))
    return trace_arr(np.asarray(A, dtype=float))


def dev(A: TensorLike) -> TensorLike:
    if isinstance(A, SymTensor):
        m = dev_arr(A.matrix)
        # keep tr(dev A) == 0 exactly after the subtraction
        m[np.diag_indices(A.dim)] -= np.trace(m) / A.dim
        return SymTensor.from_matrix(m)
    return dev_arr(np.asarray(A, dtype=float))
