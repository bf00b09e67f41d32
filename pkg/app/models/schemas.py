from pydantic import BaseModel, Field, field_validator
from typing import Optional, List, Dict, Literal

class HealthOut(BaseModel):
    status: str
    version: str
    threads: int
    output_dir: str

# ---------- run configuration ----------

class MeshBlock(BaseModel):
    extents: List[float] = Field(default_factory=lambda: [1.0, 1.0])
    resolution: List[int] = Field(default_factory=lambda: [4, 4])
    dirichlet: str = "x1=0"

    @field_validator("extents")
    @classmethod
    def _dims(cls, v):
        if len(v) not in (2, 3):
            raise ValueError("extents must have 2 or 3 entries")
        return v

class MaterialBlock(BaseModel):
    mu_D: float = 1.0
    lambda_D: float = 1.0
    mu_C: float = 0.1
    lambda_C: float = 0.0
    kappa: float = 1.0
    c: float = 0.1
    alpha: float = 0.25
    flow: Literal["none", "linear", "reg_von_mises"] = "linear"
    eta: float = 1.0
    k0: float = 0.0
    k1: float = 0.0
    p: float = 2.0
    q: float = 3.0
    r: float = 2.0
    s: float = 4.0
    beta: float = 0.25

class DataBlock(BaseModel):
    b: str = "0"
    g: str = "0"
    h: str = "0"
    u0: str = "0"
    eps_p0: str = "0"
    theta0: str = "0"

class TimeBlock(BaseModel):
    T: float = Field(1.0, gt=0.0)
    n_steps: int = Field(10, ge=1)

class SolverBlock(BaseModel):
    inner_tol: float = Field(1e-10, gt=0.0)
    outer_tol: float = Field(1e-8, gt=0.0)
    omega: float = Field(1.0, gt=0.0, le=1.0)
    max_inner: int = Field(50, ge=1)
    max_outer: int = Field(50, ge=1)
    linear_rtol: float = Field(1e-10, gt=0.0)
    max_dt_halvings: int = Field(5, ge=0)
    max_window_splits: int = Field(3, ge=0)

class OutputBlock(BaseModel):
    directory: str = "runs/default"
    snapshot_stride: int = Field(1, ge=1)
    formats: List[Literal["csv", "vtk"]] = Field(default_factory=lambda: ["csv"])

class RunConfig(BaseModel):
    mesh: MeshBlock = Field(default_factory=MeshBlock)
    material: MaterialBlock = Field(default_factory=MaterialBlock)
    data: DataBlock = Field(default_factory=DataBlock)
    time: TimeBlock = Field(default_factory=TimeBlock)
    solver: SolverBlock = Field(default_factory=SolverBlock)
    output: OutputBlock = Field(default_factory=OutputBlock)

# ---------- solver reports ----------

class InnerIterReport(BaseModel):
    iterations: int = 0
    residuals: List[float] = Field(default_factory=list)
    contraction_ratios: List[float] = Field(default_factory=list)
    dt: float = 0.0
    halvings: int = 0

    @property
    def median_ratio(self) -> Optional[float]:
        if not self.contraction_ratios:
            return None
        vals = sorted(self.contraction_ratios)
        return vals[len(vals) // 2]

class PicardReport(BaseModel):
    outer_iterations: int = 0
    deltas: List[float] = Field(default_factory=list)
    norms: List[float] = Field(default_factory=list)
    converged: bool = False
    status: Literal["converged", "not-converged", "diverged"] = "not-converged"
    windows: int = 1
    ball_bounded: bool = True

class HeatTermNorms(BaseModel):
    dilatation: float = 0.0
    plastic: float = 0.0
    viscous: float = 0.0

# ---------- harness outputs ----------

class RunSummary(BaseModel):
    status: str
    converged: bool
    outer_iterations: int
    windows: int
    deltas: List[float]
    norms: List[float]
    theta_norm_LpLr: float
    sigma_max_Lq: float
    eps_p_max_Lq: float
    median_inner_ratio: Optional[float] = None
    max_inner_iterations: int = 0
    max_energy_residual: float = 0.0
    files: Dict[str, str] = Field(default_factory=dict)

class ConvergenceRow(BaseModel):
    study: Literal["heat-space", "mech-space", "heat-time", "mech-time"]
    level: int
    h: float
    dt: float
    error: float
    order: Optional[float] = None

class OracleReport(BaseModel):
    status: Literal["ok", "picard-diverged", "oracle-failed"]
    max_diff: Dict[str, float] = Field(default_factory=dict)
    newton_iterations: List[int] = Field(default_factory=list)
    newton_residuals: List[float] = Field(default_factory=list)
    picard: Optional[PicardReport] = None
    unknowns: int = 0
    yielding: List[int] = Field(default_factory=list)  # elements above the yield radius, per step

# ---------- api bodies ----------

class ConfigIn(BaseModel):
    config: str
    output_dir: Optional[str] = None

class ValidateOut(BaseModel):
    ok: bool
    violations: List[str]
