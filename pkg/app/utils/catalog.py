from __future__ import annotations
from dataclasses import dataclass
from typing import Callable, Dict, List, Sequence, Tuple
import math
import re

import numpy as np
from rapidfuzz import process, fuzz

# term(t, X, extents, args) -> values (n,)
TermFn = Callable[[float, np.ndarray, Sequence[float], Tuple[float, ...]], np.ndarray]


class CatalogError(ValueError):
    pass


def _const(t, X, L, a):
    return np.full(X.shape[0], a[0])


def _affine(t, X, L, a):
    return a[0] + X @ np.asarray(a[1:])


def _time_linear(t, X, L, a):
    return np.full(X.shape[0], a[0] * t)


def _time_affine(t, X, L, a):
    return np.full(X.shape[0], a[0] + a[1] * t)


def _trig(fn):
    def term(t, X, L, a):
        out = np.full(X.shape[0], a[0])
        for i, k in enumerate(a[1:]):
            out = out * fn(k * math.pi * X[:, i] / L[i])
        return out
    return term


# name -> (arity given dim, term)
CATALOG: Dict[str, Tuple[Callable[[int], int], TermFn]] = {
    "zero": (lambda d: 0, lambda t, X, L, a: np.zeros(X.shape[0])),
    "const": (lambda d: 1, _const),
    "affine": (lambda d: 1 + d, _affine),
    "time_linear": (lambda d: 1, _time_linear),
    "time_affine": (lambda d: 2, _time_affine),
    "cos_product": (lambda d: 1 + d, _trig(np.cos)),
    "sin_product": (lambda d: 1 + d, _trig(np.sin)),
}

_FACTOR = re.compile(r"^([a-z_]+)\s*(?:\((.*)\))?$")


@dataclass(frozen=True)
class ComponentExpression:
    text: str
    factors: Tuple[Tuple[str, Tuple[float, ...]], ...]

    @property
    def is_zero(self) -> bool:
        return any(name == "zero" or (name == "const" and args[0] == 0.0) for name, args in self.factors)

    def __call__(self, t: float, X: np.ndarray, extents: Sequence[float]) -> np.ndarray:
        out = np.ones(X.shape[0])
        for name, args in self.factors:
            out = out * CATALOG[name][1](t, X, extents, args)
        return out


@dataclass(frozen=True)
class FieldExpression:
    text: str
    components: Tuple[ComponentExpression, ...]

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def is_zero(self) -> bool:
        return all(c.is_zero for c in self.components)

    def evaluate(self, t: float, X: np.ndarray, extents: Sequence[float]) -> np.ndarray:
        """Values at points X, shape (n, n_components)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.stack([c(t, X, extents) for c in self.components], axis=1)


def suggest(name: str) -> str:
    hit = process.extractOne(name, list(CATALOG), scorer=fuzz.WRatio)
    return hit[0] if hit else ""


def _parse_factor(raw: str, dim: int) -> Tuple[str, Tuple[float, ...]]:
    raw = raw.strip().lower()
    try:
        return "const", (float(raw),)
    except ValueError:
        pass
    m = _FACTOR.match(raw)
    if not m:
        raise CatalogError(f"cannot parse term '{raw}'")
    name, arg_text = m.group(1), m.group(2)
    if name not in CATALOG:
        raise CatalogError(f"unknown term '{name}' (did you mean '{suggest(name)}'?)")
    try:
        args = tuple(float(a) for a in arg_text.split(",")) if arg_text and arg_text.strip() else ()
    except ValueError:
        raise CatalogError(f"non-numeric argument in '{raw}'")
    arity = CATALOG[name][0](dim)
    if len(args) != arity:
        raise CatalogError(f"'{name}' takes {arity} argument(s) in {dim}-d, got {len(args)}")
    return name, args


def parse_expression(text: str, n_components: int, dim: int) -> FieldExpression:
    """Parse a ';'-separated list of component products; one component broadcasts."""
    parts = [p for p in str(text).split(";")]
    if any(not p.strip() for p in parts):
        raise CatalogError(f"empty component in '{text}'")
    comps: List[ComponentExpression] = []
    for part in parts:
        factors = tuple(_parse_factor(f, dim) for f in part.split("*"))
        comps.append(ComponentExpression(part.strip(), factors))
    if len(comps) == 1 and n_components > 1:
        comps = comps * n_components
    if len(comps) != n_components:
        raise CatalogError(f"'{text}' has {len(comps)} components, expected {n_components}")
    return FieldExpression(str(text), tuple(comps))
