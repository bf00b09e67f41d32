import numpy as np
import pandas as pd
import pytest

from app.core.errors import MeshError
from app.fem.mesh import FacetTag, build_mesh, sym_grad


def test_two_triangle_counts(two_triangles):
    m = two_triangles
    assert m.n_vertices == 4
    assert m.n_elements == 2
    assert int(m.facet_mask(FacetTag.DIRICHLET).sum()) == 1
    assert int(m.facet_mask(FacetTag.TRACTION).sum()) == 3


def test_all_edges_dirichlet():
    m = build_mesh((1.0, 1.0), (2, 2), "all")
    assert not m.facet_mask(FacetTag.TRACTION).any()
    assert m.measure(FacetTag.DIRICHLET) == pytest.approx(4.0)


def test_empty_dirichlet_rejected():
    with pytest.raises(MeshError):
        build_mesh((1.0, 1.0), (2, 2), lambda c, n: np.zeros(len(c), dtype=bool))


@pytest.mark.parametrize("extents,resolution", [((0.0, 1.0), (1, 1)), ((1.0, 1.0), (0, 2)), ((1.0,), (1,))])
def test_degenerate_input_rejected(extents, resolution):
    with pytest.raises(MeshError):
        build_mesh(extents, resolution)


@pytest.mark.parametrize("extents,resolution", [((2.0, 0.5), (3, 2)), ((1.0, 2.0, 0.5), (2, 1, 2))])
def test_volume_orientation_and_boundary(extents, resolution):
    m = build_mesh(extents, resolution, "x1=0")
    assert m.total_volume == pytest.approx(np.prod(extents))
    assert np.all(m.volumes > 0.0)
    # outward normals: divergence theorem for x -> x gives d·|Ω|
    flux = np.sum(m.facet_areas * np.einsum("fi,fi->f", m.facet_centroids, m.facet_normals))
    assert flux == pytest.approx(m.dim * m.total_volume)
    assert m.measure(FacetTag.DIRICHLET) == pytest.approx(np.prod(extents[1:]))


def test_sym_grad_exact_for_affine(square4):
    X = square4.vertices
    eps = sym_grad(square4, np.stack([X[:, 1], X[:, 0]], axis=1))
    np.testing.assert_allclose(eps, np.broadcast_to([[0.0, 1.0], [1.0, 0.0]], eps.shape), atol=1e-12)
    np.testing.assert_allclose(sym_grad(square4, np.ones_like(X) * 3.0), 0.0, atol=1e-12)
    eps = sym_grad(square4, np.stack([X[:, 0], np.zeros(len(X))], axis=1))
    np.testing.assert_allclose(eps, np.broadcast_to([[1.0, 0.0], [0.0, 0.0]], eps.shape), atol=1e-12)


def test_tagging_aliases():
    m = build_mesh((1.0, 1.0), (2, 2), "left|top")
    assert m.measure(FacetTag.DIRICHLET) == pytest.approx(2.0)
    with pytest.raises(MeshError):
        build_mesh((1.0, 1.0), (2, 2), "x3=0")


def test_dump_csv(tmp_path, square4):
    paths = square4.dump_csv(tmp_path)
    vdf = pd.read_csv(paths["vertices"])
    assert len(vdf) == square4.n_vertices
    assert "x1 [length]" in vdf.columns
    fdf = pd.read_csv(paths["facets"])
    assert set(fdf["tag"]) == {"DIRICHLET", "TRACTION"}
