"""Discrete norms on P0/P1 fields."""
from __future__ import annotations

from typing import Callable

import numpy as np

from app.fem.mesh import MeshPartition
from app.fem.tensor import norm_arr

# degree-5 rule on the reference triangle: (weight, barycentric point) with permutations
_DUNAVANT_7 = (
    (0.225, (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)),
    (0.132394152788506, (0.059715871789770, 0.470142064105115, 0.470142064105115)),
    (0.125939180544827, (0.797426985353087, 0.101286507323456, 0.101286507323456)),
)


def _triangle_rule():
    weights, bary = [], []
    for w, (a, b, c) in _DUNAVANT_7:
        pts = {(a, b, c), (b, c, a), (c, a, b)}
        for p in sorted(pts):
            weights.append(w)
            bary.append(p)
    return np.asarray(weights), np.asarray(bary)


def element_lq(mesh: MeshPartition, values: np.ndarray, q: float) -> float:
    """(Σ_e vol_e·|v_e|^q)^(1/q) for scalar or tensor element fields."""
    values = mesh.check_element_field(values)
    mag = np.abs(values) if values.ndim == 1 else norm_arr(values)
    return float(np.sum(mesh.volumes * mag ** q) ** (1.0 / q))


def vertex_lq(mesh: MeshPartition, values: np.ndarray, q: float) -> float:
    """L^q norm of the element means of a P1 field (vectors by Euclidean length)."""
    values = mesh.check_vertex_field(values)
    means = values[mesh.simplices].mean(axis=1)
    mag = np.abs(means) if means.ndim == 1 else np.linalg.norm(means, axis=-1)
    return float(np.sum(mesh.volumes * mag ** q) ** (1.0 / q))


def l2_error(mesh: MeshPartition, values: np.ndarray, exact: Callable[[np.ndarray], np.ndarray]) -> float:
    """‖u_h − u_exact‖_L2 for a P1 field on a triangle mesh, exact(X) -> (n,) or (n, k)."""
    if mesh.dim != 2:
        raise ValueError("l2_error integrates on triangles only")
    values = mesh.check_vertex_field(values)
    weights, bary = _triangle_rule()
    corners = mesh.vertices[mesh.simplices]          # (ne, 3, 2)
    pts = np.einsum("qa,eai->eqi", bary, corners)    # (ne, nq, 2)
    uh = np.einsum("qa,ea...->eq...", bary, values[mesh.simplices])
    ue = np.asarray(exact(pts.reshape(-1, 2)), dtype=float).reshape(uh.shape)
    diff = (uh - ue) ** 2
    if diff.ndim == 3:
        diff = diff.sum(axis=-1)
    return float(np.sqrt(np.sum(mesh.volumes[:, None] * weights[None, :] * diff)))
