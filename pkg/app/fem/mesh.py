"""Structured simplicial meshes of boxes with a Dirichlet/traction boundary split."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum
from itertools import permutations
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.core.errors import FieldShapeError, MeshError
from app.services.logger import get_logger

log = get_logger(__name__)

GEOM_TOL = 1e-9

TaggingRule = Union[str, Callable[[np.ndarray, np.ndarray], np.ndarray]]

_FACE_ALIASES = {
    "left": "x1=0", "right": "x1=L",
    "bottom": "x2=0", "top": "x2=L",
    "front": "x3=0", "back": "x3=L",
}


class FacetTag(IntEnum):
    DIRICHLET = 0
    TRACTION = 1


@dataclass
class MeshPartition:
    dim: int
    extents: Tuple[float, ...]
    resolution: Tuple[int, ...]
    vertices: np.ndarray
    simplices: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    facet_normals: np.ndarray
    facet_areas: np.ndarray
    facet_owner: np.ndarray
    volumes: np.ndarray
    grads: np.ndarray  # (n_elem, d+1, d) gradients of the barycentric basis
    _dirichlet_vertices: Optional[np.ndarray] = field(default=None, repr=False)
    cache: Dict[str, object] = field(default_factory=dict, repr=False)

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_elements(self) -> int:
        return int(self.simplices.shape[0])

    @property
    def n_facets(self) -> int:
        return int(self.facets.shape[0])

    @property
    def total_volume(self) -> float:
        return float(self.volumes.sum())

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.simplices].mean(axis=1)

    @property
    def facet_centroids(self) -> np.ndarray:
        return self.vertices[self.facets].mean(axis=1)

    @property
    def h(self) -> float:
        """Longest edge of the mesh."""
        pts = self.vertices[self.simplices]
        longest = 0.0
        for a in range(self.dim + 1):
            for b in range(a + 1, self.dim + 1):
                longest = max(longest, float(np.linalg.norm(pts[:, a] - pts[:, b], axis=1).max()))
        return longest

    def facet_mask(self, tag: FacetTag) -> np.ndarray:
        return self.facet_tags == int(tag)

    def measure(self, tag: FacetTag) -> float:
        return float(self.facet_areas[self.facet_mask(tag)].sum())

    @property
    def dirichlet_vertices(self) -> np.ndarray:
        # Γ0 is relatively closed: its end vertices belong to it
        if self._dirichlet_vertices is None:
            self._dirichlet_vertices = np.unique(self.facets[self.facet_mask(FacetTag.DIRICHLET)])
        return self._dirichlet_vertices

    def check_vertex_field(self, values: np.ndarray, n_comp: Optional[int] = None) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.n_vertices:
            raise FieldShapeError(f"vertex field has {values.shape[0]} rows, mesh has {self.n_vertices} vertices")
        if n_comp is not None and values.shape[1:] != ((n_comp,) if n_comp > 1 else ()):
            raise FieldShapeError(f"vertex field shape {values.shape} does not carry {n_comp} components")
        return values

    def check_element_field(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[0] != self.n_elements:
            raise FieldShapeError(f"element field has {values.shape[0]} rows, mesh has {self.n_elements} elements")
        return values

    def to_elements(self, vertex_values: np.ndarray) -> np.ndarray:
        """Value of a P1 field at element centroids."""
        vertex_values = self.check_vertex_field(vertex_values)
        return vertex_values[self.simplices].mean(axis=1)

    def gradient(self, vertex_values: np.ndarray) -> np.ndarray:
        """Elementwise gradient of a scalar P1 field, shape (n_elem, d)."""
        vertex_values = self.check_vertex_field(vertex_values, 1)
        return np.einsum("ea,eaj->ej", vertex_values[self.simplices], self.grads)

    def dump_csv(self, directory: Union[str, Path]) -> Dict[str, Path]:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        axes = [f"x{i + 1} [length]" for i in range(self.dim)]
        vdf = pd.DataFrame(self.vertices, columns=axes)
        vdf.insert(0, "vertex", np.arange(self.n_vertices))
        sdf = pd.DataFrame(self.simplices, columns=[f"v{i}" for i in range(self.dim + 1)])
        sdf.insert(0, "simplex", np.arange(self.n_elements))
        sdf["volume [length^d]"] = self.volumes
        fdf = pd.DataFrame(self.facets, columns=[f"v{i}" for i in range(self.dim)])
        fdf.insert(0, "facet", np.arange(self.n_facets))
        fdf["tag"] = [FacetTag(t).name for t in self.facet_tags]
        fdf["area [length^(d-1)]"] = self.facet_areas
        paths = {
            "vertices": out / "mesh_vertices.csv",
            "simplices": out / "mesh_simplices.csv",
            "facets": out / "mesh_facets.csv",
        }
        vdf.to_csv(paths["vertices"], index=False)
        sdf.to_csv(paths["simplices"], index=False)
        fdf.to_csv(paths["facets"], index=False)
        return paths


def simplex_geometry(vertices: np.ndarray, simplices: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Signed volumes, absolute volumes and barycentric gradients of each simplex."""
    pts = vertices[simplices]
    d = vertices.shape[1]
    jac = np.swapaxes(pts[:, 1:] - pts[:, :1], 1, 2)  # columns are edge vectors
    det = np.linalg.det(jac)
    fact = 2.0 if d == 2 else 6.0
    inv = np.linalg.inv(jac)
    grads = np.empty((simplices.shape[0], d + 1, d))
    grads[:, 1:] = inv
    grads[:, 0] = -inv.sum(axis=1)
    return det / fact, np.abs(det) / fact, grads


def _structured_simplices(resolution: Sequence[int]) -> np.ndarray:
    d = len(resolution)
    shape = tuple(n + 1 for n in resolution)
    cells = np.stack(np.meshgrid(*[np.arange(n) for n in resolution], indexing="ij"), axis=-1).reshape(-1, d)

    def vid(offset):
        return np.ravel_multi_index(tuple((cells + np.asarray(offset)).T), shape)

    if d == 2:
        v00, v10, v11, v01 = vid((0, 0)), vid((1, 0)), vid((1, 1)), vid((0, 1))
        tris = np.concatenate([np.stack([v00, v10, v11], axis=1), np.stack([v00, v11, v01], axis=1)])
        return tris
    tets = []
    for perm in permutations(range(3)):
        corner = np.zeros(3, dtype=int)
        path = [vid(corner)]
        for axis in perm:
            corner = corner.copy()
            corner[axis] = 1
            path.append(vid(corner))
        tets.append(np.stack(path, axis=1))
    return np.concatenate(tets)


def _boundary_facets(vertices: np.ndarray, simplices: np.ndarray):
    d = vertices.shape[1]
    n_local = d + 1
    local = [np.delete(np.arange(n_local), k) for k in range(n_local)]
    all_facets = np.concatenate([simplices[:, idx] for idx in local])  # block k omits local vertex k
    keys = np.sort(all_facets, axis=1)
    _, first, counts = np.unique(keys, axis=0, return_index=True, return_counts=True)
    bnd = first[counts == 1]
    ne = simplices.shape[0]
    owner = bnd % ne
    omitted = bnd // ne
    facets = keys[bnd]
    opposite = vertices[simplices[owner, omitted]]
    p = vertices[facets]
    if d == 2:
        t = p[:, 1] - p[:, 0]
        areas = np.linalg.norm(t, axis=1)
        normals = np.stack([t[:, 1], -t[:, 0]], axis=1) / areas[:, None]
    else:
        c = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        norm = np.linalg.norm(c, axis=1)
        areas = 0.5 * norm
        normals = c / norm[:, None]
    inward = np.einsum("fi,fi->f", opposite - p[:, 0], normals) > 0.0
    normals[inward] *= -1.0
    return facets, normals, areas, owner


def parse_tagging_rule(rule: str, dim: int) -> List[Tuple[int, str]]:
    """Parse 'x1=0|x2=L' style rules into (axis, side) pairs; 'all' -> every face."""
    tokens = [t.strip().lower() for t in rule.replace(",", "|").split("|") if t.strip()]
    if not tokens:
        raise MeshError("empty Dirichlet tagging rule")
    faces: List[Tuple[int, str]] = []
    for tok in tokens:
        if tok == "all":
            faces.extend((a, s) for a in range(dim) for s in ("0", "l"))
            continue
        tok = _FACE_ALIASES.get(tok, tok).lower()
        if len(tok) < 4 or tok[0] != "x" or "=" not in tok:
            raise MeshError(f"cannot parse Dirichlet face '{tok}' (use x<i>=0, x<i>=L, left/right/... or all)")
        axis_s, side = tok[1:].split("=", 1)
        if not axis_s.isdigit() or not (1 <= int(axis_s) <= dim) or side not in ("0", "l"):
            raise MeshError(f"Dirichlet face '{tok}' is not a face of a {dim}-d box")
        faces.append((int(axis_s) - 1, side))
    return faces


def _tag(rule: TaggingRule, centroids: np.ndarray, normals: np.ndarray, extents: Sequence[float]) -> np.ndarray:
    if callable(rule):
        mask = np.asarray(rule(centroids, normals), dtype=bool)
    else:
        mask = np.zeros(centroids.shape[0], dtype=bool)
        for axis, side in parse_tagging_rule(rule, centroids.shape[1]):
            target = 0.0 if side == "0" else extents[axis]
            mask |= np.abs(centroids[:, axis] - target) <= GEOM_TOL * extents[axis]
    return np.where(mask, int(FacetTag.DIRICHLET), int(FacetTag.TRACTION))


def build_mesh(extents: Sequence[float], resolution: Sequence[int], tagging_rule: TaggingRule = "x1=0") -> MeshPartition:
    extents = tuple(float(x) for x in extents)
    resolution = tuple(int(n) for n in resolution)
    d = len(extents)
    if d not in (2, 3) or len(resolution) != d:
        raise MeshError(f"extents {extents} and resolution {resolution} must both have length 2 or 3")
    if any(not np.isfinite(x) or x <= 0.0 for x in extents):
        raise MeshError(f"degenerate extents {extents}")
    if any(n < 1 for n in resolution):
        raise MeshError(f"resolution must be >= 1 per axis, got {resolution}")

    axes = [np.linspace(0.0, L, n + 1) for L, n in zip(extents, resolution)]
    vertices = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    simplices = _structured_simplices(resolution)
    signed, volumes, grads = simplex_geometry(vertices, simplices)
    flip = signed < 0.0
    if flip.any():
        simplices[flip, 0], simplices[flip, 1] = simplices[flip, 1], simplices[flip, 0].copy()
        signed, volumes, grads = simplex_geometry(vertices, simplices)

    facets, normals, areas, owner = _boundary_facets(vertices, simplices)
    tags = _tag(tagging_rule, vertices[facets].mean(axis=1), normals, extents)
    if not np.any(tags == int(FacetTag.DIRICHLET)):
        raise MeshError("Dirichlet part of the boundary is empty: at least one facet must carry u = 0")

    mesh = MeshPartition(
        dim=d, extents=extents, resolution=resolution, vertices=vertices, simplices=simplices,
        facets=facets, facet_tags=tags, facet_normals=normals, facet_areas=areas, facet_owner=owner,
        volumes=volumes, grads=grads,
    )
    log.debug(f"mesh d={d} vertices={mesh.n_vertices} simplices={mesh.n_elements} "
              f"dirichlet_facets={int((tags == 0).sum())} traction_facets={int((tags == 1).sum())}")
    return mesh


def sym_grad(mesh: MeshPartition, u: np.ndarray) -> np.ndarray:
    """Elementwise strain ε(u) of a P1 displacement, shape (n_elem, d, d)."""
    u = mesh.check_vertex_field(u, mesh.dim)
    grad = np.einsum("eai,eaj->eij", u[mesh.simplices], mesh.grads)
    return 0.5 * (grad + np.swapaxes(grad, 1, 2))
