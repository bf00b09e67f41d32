import numpy as np
import pytest

from app.core.config import get_settings
from app.fem.mesh import build_mesh
from app.fem.tensor import IsotropicRank4
from app.models.schemas import SolverBlock
from app.services.materials import ExponentSet, FlowKind, FlowRule, MaterialModel, ThermalStressLaw


@pytest.fixture(autouse=True)
def single_thread(monkeypatch):
    monkeypatch.setenv("THERMOPLAST_SINGLE_THREAD", "1")
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def two_triangles():
    return build_mesh((1.0, 1.0), (1, 1), "x1=0")


@pytest.fixture
def square4():
    return build_mesh((1.0, 1.0), (4, 4), "x1=0")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def make_material(dim=2, mu_D=1.0, lambda_D=1.0, mu_C=0.1, lambda_C=0.0, kappa=1.0, c=0.1,
                  flow=FlowKind.LINEAR, eta=1.0, k0=0.0, k1=0.0, **exps) -> MaterialModel:
    exponents = ExponentSet(**exps)
    return MaterialModel(
        D=IsotropicRank4(mu_D, lambda_D, dim),
        C=IsotropicRank4(mu_C, lambda_C, dim),
        kappa=kappa,
        phi=ThermalStressLaw(c=c, alpha=exponents.alpha),
        flow=FlowRule(kind=flow, eta=eta, k0=k0, k1=k1, beta=exponents.beta),
        exponents=exponents,
    )


@pytest.fixture
def material_factory():
    return make_material


@pytest.fixture
def tight_solver():
    return SolverBlock(inner_tol=1e-13, outer_tol=1e-12, max_inner=200, max_outer=200)
