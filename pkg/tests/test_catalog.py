import math

import numpy as np
import pytest

from app.fem.mesh import build_mesh
from app.models.schemas import DataBlock
from app.services.problem import ProblemData, build_problem, initial_displacement
from app.utils.catalog import CatalogError, parse_expression

X = np.array([[0.0, 0.0], [0.5, 0.25], [1.0, 1.0]])
L = (1.0, 2.0)


def test_constant_broadcasts_to_components():
    f = parse_expression("2.5", 2, 2)
    np.testing.assert_allclose(f.evaluate(0.0, X, L), 2.5)
    assert parse_expression("0", 3, 2).is_zero
    assert parse_expression("zero; 0", 2, 2).is_zero


def test_catalog_terms():
    np.testing.assert_allclose(parse_expression("affine(1, 2, -1)", 1, 2).evaluate(0.0, X, L)[:, 0],
                               1 + 2 * X[:, 0] - X[:, 1])
    np.testing.assert_allclose(parse_expression("time_affine(1, 3)", 1, 2).evaluate(0.5, X, L)[:, 0], 2.5)
    cos = parse_expression("cos_product(2, 1, 0)", 1, 2).evaluate(0.0, X, L)[:, 0]
    np.testing.assert_allclose(cos, 2 * np.cos(math.pi * X[:, 0]))
    prod = parse_expression("time_linear(2) * cos_product(1, 0, 1)", 1, 2).evaluate(3.0, X, L)[:, 0]
    np.testing.assert_allclose(prod, 6 * np.cos(math.pi * X[:, 1] / 2.0))


def test_vector_components():
    f = parse_expression("0; const(-1)", 2, 2)
    np.testing.assert_allclose(f.evaluate(1.0, X, L), np.tile([0.0, -1.0], (3, 1)))


@pytest.mark.parametrize("text,fragment", [
    ("cosine_product(1, 1, 0)", "cos_product"),
    ("const(1, 2)", "takes 1"),
    ("const(a)", "non-numeric"),
    ("1; 2; 3", "expected 2"),
    ("1;", "empty component"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(CatalogError) as exc:
        parse_expression(text, 2, 2)
    assert fragment in str(exc.value)


def test_build_problem_shapes():
    mesh = build_mesh((1.0, 1.0), (2, 2), "x1=0")
    data = build_problem(DataBlock(b="0; -1", g="0.5; 0", theta0="cos_product(1, 1, 0)",
                                   eps_p0="0.1; 0; -0.1"), mesh.extents)
    assert data.b(0.0, mesh.vertices).shape == (mesh.n_vertices, 2)
    assert data.g(0.0, mesh.facet_centroids, mesh.facet_normals).shape == (mesh.n_facets, 2)
    assert data.h(0.0, mesh.vertices).shape == (mesh.n_vertices,)
    assert data.h_is_zero
    eps = data.eps_p0(mesh.centroids)
    np.testing.assert_allclose(eps[0], [[0.1, 0.0], [0.0, -0.1]])
    assert data.theta0(mesh.vertices).shape == (mesh.n_vertices,)


def test_initial_displacement_forced_to_zero_on_dirichlet():
    mesh = build_mesh((1.0, 1.0), (2, 2), "x1=0")
    data = ProblemData.zero(2, u0=lambda X: np.ones((X.shape[0], 2)))
    u0 = initial_displacement(mesh, data)
    assert np.all(u0[mesh.dirichlet_vertices] == 0.0)
    assert np.all(np.delete(u0, mesh.dirichlet_vertices, axis=0) == 1.0)
