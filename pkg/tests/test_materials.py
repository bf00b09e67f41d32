import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.fem.tensor import IsotropicRank4, SymTensor, norm_arr, trace, trace_arr
from app.services.materials import (
    ExponentSet, FlowKind, FlowRule, MaterialModel, ThermalStressLaw, lambda_eval, phi_eval, validate,
)

INF = math.inf

# each row flips at most one inequality away from a valid set
EXPONENT_TABLE = [
    ({}, []),
    ({"p": 3, "r": 3, "q": 4, "alpha": 0.3, "beta": 0.1}, []),
    ({"p": 1.0}, ["p > 1"]),
    ({"p": 0.5, "s": 1.0}, ["p > 1"]),
    ({"p": INF}, ["p < ∞"]),
    ({"r": 1.0}, ["r > 1"]),
    ({"r": 0.8}, ["r > 1"]),
    ({"r": INF}, ["r < ∞"]),
    ({"alpha": 0.0}, ["α > 0"]),
    ({"alpha": -0.1}, ["α > 0"]),
    ({"alpha": 0.5}, ["α < 1/2"]),
    ({"alpha": 0.75, "p": 10, "r": 10}, ["α < 1/2"]),
    ({"beta": 0.0}, ["β > 0"]),
    ({"beta": -0.2}, ["β > 0"]),
    ({"beta": 0.5}, ["β < 1/2"]),
    ({"beta": 0.55, "p": 5, "r": 5}, ["β < 1/2"]),
    ({"q": 9.0}, ["r ≥ max(α,β)·q"]),
    ({"q": 8.5}, ["r ≥ max(α,β)·q"]),
    ({"s": 10.0}, ["p ≥ max(α,β)·s"]),
    ({"q": 2.0}, ["q > 2"]),
    ({"q": 1.5}, ["q > 2"]),
]


@pytest.mark.parametrize("overrides,expected", EXPONENT_TABLE)
def test_exponent_gate_truth_table(overrides, expected):
    assert validate(ExponentSet(**overrides)) == expected


def test_phi_examples():
    assert phi_eval(ThermalStressLaw(c=1.0, alpha=0.25), 16.0) == pytest.approx(2.0)
    assert phi_eval(ThermalStressLaw(c=0.7, alpha=0.25), 0.0) == 0.0
    assert phi_eval(ThermalStressLaw(c=0.5, alpha=0.25), -16.0) == pytest.approx(-1.0)


def test_phi_sublinear_bound(rng):
    law = ThermalStressLaw(c=1.0, alpha=0.3)
    s = rng.uniform(-1e3, 1e3, size=100_000)
    assert np.all(np.abs(phi_eval(law, s)) <= np.abs(s) ** 0.3)


def test_phi_scale_bounded():
    with pytest.raises(ValidationError):
        ThermalStressLaw(c=1.5, alpha=0.25)


def test_lambda_examples():
    rvm = FlowRule(kind=FlowKind.REG_VON_MISES, eta=1.0, k0=1.0, k1=0.0)
    below = SymTensor.diag(0.25, -0.25) * math.sqrt(2.0)   # |dev| = 0.5
    assert lambda_eval(rvm, below, 3.0).allclose(SymTensor.zeros(2))
    N = SymTensor.diag(1.0, -1.0) * (1.0 / math.sqrt(2.0))
    assert lambda_eval(rvm, N * 3.0, 0.0).allclose(N * 2.0, atol=1e-12)
    lin = FlowRule(kind=FlowKind.LINEAR, eta=2.0)
    assert lambda_eval(lin, SymTensor.identity(3), 5.0).allclose(SymTensor.zeros(3))
    none = FlowRule(kind=FlowKind.NONE)
    assert lambda_eval(none, N * 10.0, 1.0).allclose(SymTensor.zeros(2))
    assert none.L1 == 0.0 and none.L2 == 0.0


def _sym(rng, n, d=3):
    a = rng.uniform(-10, 10, size=(n, d, d))
    return 0.5 * (a + np.swapaxes(a, 1, 2))


@pytest.mark.parametrize("flow", [
    FlowRule(kind=FlowKind.LINEAR, eta=2.0),
    FlowRule(kind=FlowKind.REG_VON_MISES, eta=2.0, k0=1.0, k1=0.5, beta=0.25),
    FlowRule(kind=FlowKind.REG_VON_MISES, eta=0.5, k0=0.0, k1=3.0, beta=0.4),
])
def test_lambda_lipschitz_holder_bound(rng, flow):
    n = 100_000
    A, B = _sym(rng, n), _sym(rng, n)
    t1, t2 = rng.uniform(-10, 10, size=(2, n))
    lhs = norm_arr(lambda_eval(flow, A, t1) - lambda_eval(flow, B, t2))
    rhs = flow.L1 * norm_arr(A - B) + flow.L2 * np.abs(t1 - t2) ** flow.beta
    assert np.all(lhs <= rhs * (1.0 + 1e-12) + 1e-12)


def test_lambda_trace_free(rng):
    flow = FlowRule(kind=FlowKind.REG_VON_MISES, eta=1.0, k0=2.0, k1=1.0)
    rates = lambda_eval(flow, _sym(rng, 1000), rng.uniform(-5, 5, 1000))
    assert np.abs(trace_arr(rates)).max() < 1e-12


def test_material_consistency_checks():
    D, C = IsotropicRank4(1.0, 1.0, 2), IsotropicRank4(0.1, 0.0, 2)
    with pytest.raises(ValidationError):
        MaterialModel(D=D, C=IsotropicRank4(0.1, 0.0, 3))
    with pytest.raises(ValidationError):
        MaterialModel(D=D, C=C, phi=ThermalStressLaw(c=0.1, alpha=0.3))
    with pytest.raises(ValidationError):
        MaterialModel(D=D, C=C, flow=FlowRule(kind=FlowKind.REG_VON_MISES, beta=0.1))
    model = MaterialModel(D=D, C=C, exponents=ExponentSet(q=2.0))
    assert model.violations() == ["q > 2"]
