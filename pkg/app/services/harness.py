"""Config ingestion and the simulate / mms / oracle / validate scenarios."""
from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union, get_origin

import numpy as np
from pydantic import BaseModel, ValidationError
from rapidfuzz import fuzz, process

from app.core.config import resolve_output_dir
from app.core.errors import ConfigInvalid, MeshError, OracleNewtonError
from app.fem.mesh import MeshPartition, build_mesh
from app.fem.norms import vertex_lq
from app.models.schemas import ConvergenceRow, OracleReport, RunConfig, RunSummary, ValidateOut
from app.services import output
from app.services.coupler import Coupler, SimState, energy_audit, measured_norms, norm_lp_lr
from app.services.heat_solver import Compatibility, check_compatibility
from app.services.logger import get_logger, timeblock
from app.services.materials import MaterialModel, exponents_from_block, material_from_block, validate as validate_exponents
from app.services.mms import convergence_study
from app.services.oracle import MonolithicOracle, compare, yield_mask
from app.services.problem import ProblemData, TimeGrid, build_problem
from app.utils.catalog import CatalogError

log = get_logger(__name__)

PathLike = Union[str, Path]


# ----- config text ---------------------------------------------------------

def _is_list(model: type, key: str) -> bool:
    return get_origin(model.model_fields[key].annotation) in (list, List)


def _suggest(name: str, choices) -> str:
    hit = process.extractOne(name, list(choices), scorer=fuzz.WRatio)
    return f" (did you mean '{hit[0]}'?)" if hit else ""


def parse_config(text: str) -> RunConfig:
    """Parse sectioned key=value text; every problem is collected before raising."""
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigInvalid([f"parse: {exc}"])

    violations: List[str] = []
    raw: Dict[str, Dict[str, object]] = {}
    sections = RunConfig.model_fields
    for section in parser.sections():
        if section not in sections:
            violations.append(f"unknown section [{section}]{_suggest(section, sections)}")
            continue
        block = sections[section].annotation
        raw[section] = {}
        for key, value in parser.items(section):
            if key not in block.model_fields:
                violations.append(f"unknown key '{section}.{key}'{_suggest(key, block.model_fields)}")
                continue
            if _is_list(block, key):
                raw[section][key] = [v.strip() for v in value.split(",") if v.strip()]
            else:
                raw[section][key] = value.strip()
    try:
        config = RunConfig.model_validate(raw)
    except ValidationError as exc:
        for err in exc.errors():
            loc = ".".join(str(p) for p in err["loc"])
            violations.append(f"{loc}: {err['msg']}")
        raise ConfigInvalid(violations)
    if violations:
        raise ConfigInvalid(violations)
    return config


def _format(value) -> str:
    if isinstance(value, list):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_config(config: RunConfig) -> str:
    lines: List[str] = []
    for section in RunConfig.model_fields:
        block: BaseModel = getattr(config, section)
        lines.append(f"[{section}]")
        for key in type(block).model_fields:
            lines.append(f"{key} = {_format(getattr(block, key))}")
        lines.append("")
    return "\n".join(lines)


@dataclass
class PreparedRun:
    config: RunConfig
    mesh: MeshPartition
    material: MaterialModel
    data: ProblemData
    grid: TimeGrid


def prepare(config: RunConfig) -> PreparedRun:
    """Build every run object; all violations are reported together."""
    violations: List[str] = []
    dim = len(config.mesh.extents)
    violations += [f"exponents: {v}" for v in validate_exponents(exponents_from_block(config.material))]

    material = mesh = data = None
    try:
        material = material_from_block(config.material, dim)
    except (ValueError, ValidationError) as exc:
        violations.append(f"material: {exc}")
    try:
        mesh = build_mesh(config.mesh.extents, config.mesh.resolution, config.mesh.dirichlet)
    except MeshError as exc:
        violations.append(f"mesh: {exc}")
    try:
        data = build_problem(config.data, config.mesh.extents)
    except CatalogError as exc:
        violations.append(f"data: {exc}")

    if mesh is not None and data is not None and not violations:
        result = check_compatibility(mesh, data.theta0(mesh.vertices), data.h, material.exponents)
        if result.status == Compatibility.VIOLATION:
            violations.append(result.message)
    if violations:
        raise ConfigInvalid(violations)
    return PreparedRun(config, mesh, material, data, TimeGrid(config.time.T, config.time.n_steps))


def load_config(path: PathLike) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigInvalid([f"config file not found: {path}"])
    config = parse_config(path.read_text(encoding="utf-8"))
    prepare(config)
    return config


def validate(text: str) -> ValidateOut:
    try:
        prepare(parse_config(text))
    except ConfigInvalid as exc:
        return ValidateOut(ok=False, violations=exc.violations)
    return ValidateOut(ok=True, violations=[])


# ----- scenarios -------------------------------------------------------------

def diagnostics_rows(coupler: Coupler, state: SimState, residuals: np.ndarray, outer_iterations: int) -> List[dict]:
    norms = measured_norms(coupler, state)
    r = coupler.material.exponents.r
    rows = []
    for n in range(1, state.n_steps + 1):
        inner = state.inner[n - 1] if n - 1 < len(state.inner) else None
        terms = state.heat_terms[n - 1] if n - 1 < len(state.heat_terms) else None
        rows.append({
            "step": n,
            "t": float(state.times[n]),
            "theta_Lr": vertex_lq(coupler.mesh, state.theta[n], r),
            "sigma_Lq": norms["sigma_Lq"][n],
            "eps_p_Lq": norms["eps_p_Lq"][n],
            "u_dot_L2": norms["u_dot_L2"][n],
            "energy_residual": float(residuals[n - 1]),
            "w_dilatation_Lr": terms.dilatation if terms else np.nan,
            "w_plastic_Lr": terms.plastic if terms else np.nan,
            "w_viscous_Lr": terms.viscous if terms else np.nan,
            "inner_iterations": inner.iterations if inner else 0,
            "inner_median_ratio": inner.median_ratio if inner and inner.median_ratio is not None else np.nan,
            "dt_halvings": inner.halvings if inner else 0,
            "outer_iterations": outer_iterations,
        })
    return rows


def _median(values: List[float]) -> Optional[float]:
    return float(np.median(values)) if values else None


def run_simulate(config: RunConfig, output_dir: Optional[PathLike] = None) -> RunSummary:
    run = prepare(config)
    out = resolve_output_dir(str(output_dir) if output_dir else config.output.directory)
    coupler = Coupler(run.mesh, run.material, run.data, config.solver)
    with timeblock(log, "simulate"):
        state, report = coupler.picard_solve(run.grid)
    residuals = energy_audit(coupler, state)
    norms = measured_norms(coupler, state)

    files: Dict[str, str] = {}
    files.update({f"mesh_{k}": str(p) for k, p in run.mesh.dump_csv(out).items()})
    for n in range(0, state.n_steps + 1, config.output.snapshot_stride):
        if "csv" in config.output.formats:
            for k, p in output.write_snapshot(out, run.mesh, state, n).items():
                files[f"{k}_{n:05d}"] = str(p)
        if "vtk" in config.output.formats:
            files[f"vtk_{n:05d}"] = str(output.write_vtk(out, run.mesh, state, n))
    rows = diagnostics_rows(coupler, state, residuals, report.outer_iterations)
    files["diagnostics"] = str(output.write_diagnostics(out, rows))

    files["summary"] = str(Path(out) / "summary.json")
    ratios = [r for rep in state.inner for r in rep.contraction_ratios]
    summary = RunSummary(
        status=report.status,
        converged=report.converged,
        outer_iterations=report.outer_iterations,
        windows=report.windows,
        deltas=report.deltas,
        norms=report.norms,
        theta_norm_LpLr=norm_lp_lr(run.mesh, state.theta, run.material.exponents, run.grid),
        sigma_max_Lq=float(max(norms["sigma_Lq"])),
        eps_p_max_Lq=float(max(norms["eps_p_Lq"])),
        median_inner_ratio=_median(ratios),
        max_inner_iterations=max((rep.iterations for rep in state.inner), default=0),
        max_energy_residual=float(np.abs(residuals).max()) if residuals.size else 0.0,
        files=files,
    )
    output.write_summary(out, summary)
    return summary


def run_mms(config: RunConfig, levels: int = 3, output_dir: Optional[PathLike] = None) -> List[ConvergenceRow]:
    prepare(config)
    out = resolve_output_dir(str(output_dir) if output_dir else config.output.directory)
    with timeblock(log, f"mms with {levels} levels"):
        rows = convergence_study(config, levels)
    output.write_table(out, "convergence.csv", rows)
    return rows


def run_oracle(config: RunConfig, output_dir: Optional[PathLike] = None) -> OracleReport:
    run = prepare(config)
    out = resolve_output_dir(str(output_dir) if output_dir else config.output.directory)
    oracle = MonolithicOracle(run.mesh, run.material, run.data, config.solver)
    state, picard = oracle.coupler.picard_solve(run.grid)
    report = OracleReport(status="ok", picard=picard, unknowns=oracle.n_unknowns)
    try:
        with timeblock(log, "oracle newton"):
            result = oracle.solve(run.grid)
    except OracleNewtonError as exc:
        log.error(f"oracle failed: {exc}")
        report.status = "oracle-failed"
        report.newton_residuals = list(exc.detail.get("residuals", []))
        output.write_summary(out, report, "oracle.json")
        return report
    report.newton_iterations = result.iterations
    report.newton_residuals = result.residuals
    report.max_diff = compare(state, result.state)
    report.yielding = [int(n) for n in yield_mask(run.mesh, run.material.flow, result.state).sum(axis=1)]
    if not picard.converged:
        report.status = "picard-diverged"
    for n in range(result.state.n_steps + 1):
        output.write_snapshot(Path(out) / "oracle", run.mesh, result.state, n)
    output.write_summary(out, report, "oracle.json")
    return report
