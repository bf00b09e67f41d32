"""P1 assembly of the bilinear and linear forms used by the solvers.

Displacement unknowns are interleaved per vertex: dof = d*vertex + component.
Quadrature: one point per element for P0×P0 products, vertex rule for any
product with a P1 function (body loads, mass, boundary facets).
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from app.core.config import worker_count
from app.core.errors import LinearSolverError
from app.fem.mesh import FacetTag, MeshPartition
from app.fem.tensor import IsotropicRank4, trace_arr

VectorData = Union[np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]]
ScalarData = Union[float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


def map_element_chunks(n_elem: int, fn: Callable[[slice], np.ndarray]) -> np.ndarray:
    """Evaluate fn on contiguous element ranges and concatenate in element order."""
    workers = min(worker_count(), max(1, n_elem))
    if workers == 1:
        return fn(slice(0, n_elem))
    bounds = np.linspace(0, n_elem, workers + 1).astype(int)
    chunks = [slice(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(fn, chunks))
    return np.concatenate(parts)


def element_dofs(mesh: MeshPartition) -> np.ndarray:
    d = mesh.dim
    return (mesh.simplices[:, :, None] * d + np.arange(d)).reshape(mesh.n_elements, -1)


def strain_operator(mesh: MeshPartition) -> np.ndarray:
    """ε(φ_a e_i) per element, shape (n_elem, (d+1)*d, d, d)."""
    if "strain_operator" not in mesh.cache:
        d, ne = mesh.dim, mesh.n_elements
        full = np.zeros((ne, d + 1, d, d, d))
        for i in range(d):
            full[:, :, i, i, :] = mesh.grads
        full = 0.5 * (full + np.swapaxes(full, -1, -2))
        mesh.cache["strain_operator"] = full.reshape(ne, (d + 1) * d, d, d)
    return mesh.cache["strain_operator"]


def _csr(mesh_rows: np.ndarray, mesh_cols: np.ndarray, data: np.ndarray, n: int) -> sparse.csr_matrix:
    return sparse.coo_matrix((data.ravel(), (mesh_rows.ravel(), mesh_cols.ravel())), shape=(n, n)).tocsr()


def assemble_stiffness(mesh: MeshPartition, op: IsotropicRank4) -> sparse.csr_matrix:
    """K[u, v] = ∫ Op(ε(u))·ε(v) over displacement unknowns (no boundary conditions applied)."""
    op = op.with_dim(mesh.dim)
    B = strain_operator(mesh)
    dofs = element_dofs(mesh)

    def kernel(sl: slice) -> np.ndarray:
        Be = B[sl]
        ke = mesh.volumes[sl, None, None] * np.einsum("epij,eqij->epq", Be, op.apply_array(Be))
        return 0.5 * (ke + np.swapaxes(ke, 1, 2))

    ke = map_element_chunks(mesh.n_elements, kernel)
    nloc = dofs.shape[1]
    rows = np.repeat(dofs, nloc, axis=1)
    cols = np.tile(dofs, (1, nloc))
    return _csr(rows, cols, ke, mesh.n_vertices * mesh.dim)


def lumped_vertex_weights(mesh: MeshPartition) -> np.ndarray:
    """∫ φ_a dx for every vertex (vertex-rule mass)."""
    share = np.repeat(mesh.volumes[:, None] / (mesh.dim + 1), mesh.dim + 1, axis=1)
    return np.bincount(mesh.simplices.ravel(), weights=share.ravel(), minlength=mesh.n_vertices)


def assemble_heat_matrices(mesh: MeshPartition, kappa: float = 1.0) -> Tuple[sparse.csr_matrix, sparse.csr_matrix]:
    """Lumped mass matrix and the κ-weighted Laplacian κ∫∇θ·∇v (pure Neumann)."""
    mass = sparse.diags(lumped_vertex_weights(mesh)).tocsr()

    def kernel(sl: slice) -> np.ndarray:
        G = mesh.grads[sl]
        return kappa * mesh.volumes[sl, None, None] * np.einsum("eai,ebi->eab", G, G)

    ke = map_element_chunks(mesh.n_elements, kernel)
    ke = 0.5 * (ke + np.swapaxes(ke, 1, 2))
    nloc = mesh.dim + 1
    rows = np.repeat(mesh.simplices, nloc, axis=1)
    cols = np.tile(mesh.simplices, (1, nloc))
    return mass, _csr(rows, cols, ke, mesh.n_vertices)


def _scatter_dofs(mesh: MeshPartition, fe: np.ndarray) -> np.ndarray:
    out = np.zeros(mesh.n_vertices * mesh.dim)
    np.add.at(out, element_dofs(mesh).ravel(), fe.ravel())
    return out


def assemble_tensor_load(mesh: MeshPartition, op: IsotropicRank4, E: np.ndarray) -> np.ndarray:
    """∫ Op(E)·ε(v) for an elementwise tensor field E."""
    E = mesh.check_element_field(E)
    if not np.any(E):
        return np.zeros(mesh.n_vertices * mesh.dim)
    S = op.with_dim(mesh.dim).apply_array(E)
    fe = mesh.volumes[:, None] * np.einsum("eij,epij->ep", S, strain_operator(mesh))
    return _scatter_dofs(mesh, fe)


def assemble_pressure_load(mesh: MeshPartition, pressure: np.ndarray, *, per_vertex: bool = False) -> np.ndarray:
    """∫ p·div v; p given per element (P0) or, with per_vertex, sampled at centroids."""
    pressure = np.asarray(pressure, dtype=float)
    if per_vertex:
        pressure = mesh.to_elements(pressure)
    pressure = mesh.check_element_field(pressure)
    div = trace_arr(strain_operator(mesh))
    return _scatter_dofs(mesh, mesh.volumes[:, None] * pressure[:, None] * div)


def assemble_body_load(mesh: MeshPartition, b: np.ndarray) -> np.ndarray:
    """∫ b·v with b a vertex field (vertex rule)."""
    b = np.broadcast_to(np.asarray(b, dtype=float), (mesh.n_vertices, mesh.dim))
    return (lumped_vertex_weights(mesh)[:, None] * b).ravel()


def _facet_points(mesh: MeshPartition, mask: np.ndarray):
    facets = mesh.facets[mask]
    pts = mesh.vertices[facets].reshape(-1, mesh.dim)
    normals = np.repeat(mesh.facet_normals[mask], mesh.dim, axis=0)
    weights = np.repeat(mesh.facet_areas[mask] / mesh.dim, mesh.dim)
    return facets.ravel(), pts, normals, weights


def assemble_traction(mesh: MeshPartition, g: VectorData) -> np.ndarray:
    """∫_Γ1 g·v; g is a constant vector or g(points, normals) -> (n, d)."""
    out = np.zeros((mesh.n_vertices, mesh.dim))
    mask = mesh.facet_mask(FacetTag.TRACTION)
    if not mask.any():
        return out.ravel()
    vids, pts, normals, weights = _facet_points(mesh, mask)
    vals = g(pts, normals) if callable(g) else np.broadcast_to(np.asarray(g, dtype=float), pts.shape)
    np.add.at(out, vids, weights[:, None] * vals)
    return out.ravel()


def assemble_flux(mesh: MeshPartition, h: ScalarData, kappa: float = 1.0) -> np.ndarray:
    """κ∫_∂Ω h·v; h is a constant or h(points) -> (n,)."""
    out = np.zeros(mesh.n_vertices)
    vids, pts, _, weights = _facet_points(mesh, np.ones(mesh.n_facets, dtype=bool))
    vals = h(pts) if callable(h) else np.broadcast_to(np.asarray(h, dtype=float), weights.shape)
    np.add.at(out, vids, kappa * weights * vals)
    return out


def scatter_element_source(mesh: MeshPartition, w: np.ndarray) -> np.ndarray:
    """Volume-weighted P0 -> P1 load, preserving ∫ w exactly."""
    w = mesh.check_element_field(w)
    share = np.repeat((mesh.volumes * w)[:, None] / (mesh.dim + 1), mesh.dim + 1, axis=1)
    return np.bincount(mesh.simplices.ravel(), weights=share.ravel(), minlength=mesh.n_vertices)


def vertex_dofs(mesh: MeshPartition, vertices: np.ndarray) -> np.ndarray:
    return (np.asarray(vertices)[:, None] * mesh.dim + np.arange(mesh.dim)).ravel()


class EliminatedSystem:
    """Sparse LU of A with the rows and columns of fixed unknowns eliminated."""

    def __init__(self, A: sparse.spmatrix, fixed: np.ndarray, rtol: float = 1e-10):
        A = sparse.csr_matrix(A)
        n = A.shape[0]
        self.n = n
        self.fixed = np.asarray(fixed, dtype=int)
        self.free = np.setdiff1d(np.arange(n), self.fixed)
        self.rtol = rtol
        rows = A[self.free]
        self.A_ff = rows[:, self.free].tocsc()
        self.A_fd = rows[:, self.fixed].tocsr()
        self._lu = splu(self.A_ff)

    def solve(self, rhs: np.ndarray, fixed_values: Optional[np.ndarray] = None) -> np.ndarray:
        x = np.zeros(self.n)
        if fixed_values is not None and self.fixed.size:
            x[self.fixed] = fixed_values
        r = rhs[self.free] - self.A_fd @ x[self.fixed]
        xf = self._lu.solve(r)
        scale = float(np.linalg.norm(r))
        residual = float(np.linalg.norm(self.A_ff @ xf - r))
        if not np.all(np.isfinite(xf)) or residual > self.rtol * max(scale, 1e-300):
            raise LinearSolverError(
                f"linear solve residual {residual:.3e} exceeds rtol*|rhs| = {self.rtol * scale:.3e}",
                detail={"residual": residual, "rhs_norm": scale})
        x[self.free] = xf
        return x
