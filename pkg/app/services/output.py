"""Run artifacts: field snapshots, diagnostics and summary."""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Union

import numpy as np
import orjson
import pandas as pd
from pydantic import BaseModel

from app.fem.mesh import MeshPartition
from app.fem.tensor import to_components, upper_indices

PathLike = Union[str, Path]


def _tensor_columns(prefix: str, dim: int, unit: str) -> List[str]:
    i, j = upper_indices(dim)
    return [f"{prefix}{a + 1}{b + 1} [{unit}]" for a, b in zip(i, j)]


def snapshot_tables(mesh: MeshPartition, t: float, u: np.ndarray, theta: np.ndarray,
                    eps_p: np.ndarray, sigma: np.ndarray):
    d = mesh.dim
    vdf = pd.DataFrame(mesh.vertices, columns=[f"x{i + 1} [length]" for i in range(d)])
    vdf.insert(0, "vertex", np.arange(mesh.n_vertices))
    for i in range(d):
        vdf[f"u{i + 1} [length]"] = u[:, i]
    vdf["theta [temperature]"] = theta
    vdf.insert(0, "t [time]", t)

    edf = pd.DataFrame(to_components(eps_p), columns=_tensor_columns("eps_p", d, "1"))
    edf = pd.concat([edf, pd.DataFrame(to_components(sigma), columns=_tensor_columns("sigma", d, "stress"))], axis=1)
    edf.insert(0, "element", np.arange(mesh.n_elements))
    edf.insert(0, "t [time]", t)
    return vdf, edf


def write_snapshot(directory: PathLike, mesh: MeshPartition, state, index: int) -> Dict[str, Path]:
    out = Path(directory) / "snapshots"
    out.mkdir(parents=True, exist_ok=True)
    vdf, edf = snapshot_tables(mesh, float(state.times[index]), state.u[index], state.theta[index],
                               state.eps_p[index], state.sigma[index])
    paths = {
        "vertices": out / f"vertices_{index:05d}.csv",
        "elements": out / f"elements_{index:05d}.csv",
    }
    vdf.to_csv(paths["vertices"], index=False)
    edf.to_csv(paths["elements"], index=False)
    return paths


DIAGNOSTIC_UNITS = {
    "t": "time",
    "theta_Lr": "temperature",
    "sigma_Lq": "stress",
    "eps_p_Lq": "1",
    "u_dot_L2": "length/time",
    "energy_residual": "energy/time",
    "w_dilatation_Lr": "energy/(volume*time)",
    "w_plastic_Lr": "energy/(volume*time)",
    "w_viscous_Lr": "energy/(volume*time)",
    "inner_iterations": "count",
    "inner_median_ratio": "1",
    "dt_halvings": "count",
    "outer_iterations": "count",
}


def write_diagnostics(directory: PathLike, rows: Iterable[dict]) -> Path:
    df = pd.DataFrame(list(rows))
    df.columns = [f"{c} [{DIAGNOSTIC_UNITS[c]}]" if c in DIAGNOSTIC_UNITS else c for c in df.columns]
    path = Path(directory) / "diagnostics.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False)
    return path


def write_table(directory: PathLike, name: str, rows: Sequence[BaseModel]) -> Path:
    df = pd.DataFrame([r.model_dump() for r in rows])
    path = Path(directory) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False)
    return path


def dump_json(payload) -> bytes:
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    return orjson.dumps(payload, option=orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY)


def write_summary(directory: PathLike, summary, name: str = "summary.json") -> Path:
    path = Path(directory) / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dump_json(summary))
    return path


def write_vtk(directory: PathLike, mesh: MeshPartition, state, index: int) -> Path:
    """Legacy ASCII unstructured grid; points are padded to 3-d."""
    out = Path(directory) / "vtk"
    out.mkdir(parents=True, exist_ok=True)
    d = mesh.dim
    pts = np.zeros((mesh.n_vertices, 3))
    pts[:, :d] = mesh.vertices
    u = np.zeros((mesh.n_vertices, 3))
    u[:, :d] = state.u[index]
    cell_type = 5 if d == 2 else 10
    lines = [
        "# vtk DataFile Version 3.0",
        f"thermoplast t={float(state.times[index]):.10g}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_vertices} double",
    ]
    lines += [" ".join(f"{v:.16g}" for v in p) for p in pts]
    lines.append(f"CELLS {mesh.n_elements} {mesh.n_elements * (d + 2)}")
    lines += [f"{d + 1} " + " ".join(str(v) for v in s) for s in mesh.simplices]
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    lines += [str(cell_type)] * mesh.n_elements
    lines.append(f"POINT_DATA {mesh.n_vertices}")
    lines.append("VECTORS u double")
    lines += [" ".join(f"{v:.16g}" for v in row) for row in u]
    lines += ["SCALARS theta double 1", "LOOKUP_TABLE default"]
    lines += [f"{v:.16g}" for v in state.theta[index]]
    lines.append(f"CELL_DATA {mesh.n_elements}")
    for name, field in (("eps_p", state.eps_p[index]), ("sigma", state.sigma[index])):
        full = np.zeros((mesh.n_elements, 3, 3))
        full[:, :d, :d] = field
        lines.append(f"TENSORS {name} double")
        for m in full:
            lines += [" ".join(f"{v:.16g}" for v in row) for row in m]
    path = out / f"fields_{index:05d}.vtk"
    path.write_text("\n".join(lines) + "\n")
    return path
