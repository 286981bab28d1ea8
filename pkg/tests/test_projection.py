import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from mutualmf.measure import PointCloud, grid_to_cloud, make_pair, product_measure
from mutualmf.projection import (
    _mgs,
    Subspace,
    load_subspace,
    pair_clouds,
    project_cloud,
    project_pair,
    regrid,
    sample_grassmann,
    save_subspace,
)


@given(n=st.integers(2, 6), data=st.data(), seed=st.integers(0, 2**32 - 1))
def test_sampler_orthonormal(n, data, seed):
    m = data.draw(st.integers(1, n))
    V = sample_grassmann(n, m, seed)
    assert V.basis.shape == (m, n)
    assert V.orthonormality_residual() < 1e-12


def test_orthonormalization_survives_bad_conditioning():
    A = np.random.default_rng(0).standard_normal((5, 5))
    U, _, Vt = np.linalg.svd(A)
    A = U @ np.diag(np.logspace(0, -7.9, 5)) @ Vt      # just under the redraw threshold
    Q = _mgs(A)
    assert np.max(np.abs(Q @ Q.T - np.eye(5))) < 1e-12
    assert np.max(np.abs(_mgs(A, passes=1) @ _mgs(A, passes=1).T - np.eye(5))) > 1e-12


def test_sampler_deterministic():
    a = sample_grassmann(2, 1, 42)
    b = sample_grassmann(2, 1, 42)
    assert a.basis.tobytes() == b.basis.tobytes()
    assert not np.array_equal(a.basis, sample_grassmann(2, 1, 43).basis)


def test_sampler_full_dimension_is_identity_map():
    V = sample_grassmann(2, 2, 5)
    x = np.array([[0.3, -1.2], [2.0, 0.5]])
    np.testing.assert_allclose(x @ V.projector(), x, atol=1e-12)


def test_sampler_rejects_bad_dims():
    with pytest.raises(ValueError):
        sample_grassmann(2, 3, 0)
    with pytest.raises(ValueError):
        sample_grassmann(2, 0, 0)


def test_haar_angles_uniform():
    angles = []
    for seed in range(1000):
        v = sample_grassmann(2, 1, seed).basis[0]
        angles.append(math.atan2(v[1], v[0]) % math.pi)
    res = stats.kstest(angles, stats.uniform(0, math.pi).cdf)
    crit = 1.63 / math.sqrt(len(angles))          # asymptotic 1% critical value
    assert res.statistic < crit


def test_subspace_validation():
    with pytest.raises(ValueError, match="orthonormal"):
        Subspace(np.array([[1.0, 1.0]]))


def test_axis_projection_of_atom():
    pc = PointCloud(np.array([[0.3, 0.9]]), np.array([1.0]))
    out = project_cloud(pc, Subspace.axis(2, [0]))
    assert out.positions.tolist() == [[0.3]]
    assert out.weights.tolist() == [1.0]


def test_diagonal_projection_of_atom():
    pc = PointCloud(np.array([[1.0, 0.0]]), np.array([1.0]))
    V = Subspace(np.array([[1.0, 1.0]]) / math.sqrt(2))
    assert project_cloud(pc, V).positions[0, 0] == pytest.approx(0.70711, abs=1e-5)


def test_projection_dimension_mismatch():
    pc = PointCloud(np.array([[1.0, 0.0, 0.0]]), np.array([1.0]))
    with pytest.raises(ValueError, match="R\\^3"):
        project_cloud(pc, Subspace.axis(2, [0]))


@given(seed=st.integers(0, 10**6))
def test_projection_is_one_lipschitz(seed):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(size=(40, 3))
    pc = PointCloud(pos, np.full(40, 1 / 40))
    out = project_cloud(pc, sample_grassmann(3, 2, seed))
    i, j = rng.integers(0, 40, size=(2, 60))
    src = np.linalg.norm(pos[i] - pos[j], axis=1)
    dst = np.linalg.norm(out.positions[i] - out.positions[j], axis=1)
    assert np.all(dst <= src + 1e-12)
    assert abs(out.weights.sum() - pc.weights.sum()) <= 1e-15


def test_regrid_single_atom():
    g = regrid(PointCloud(np.array([[0.4]]), np.array([1.0])), 2, 3)
    assert g.n_cells == 1 and g.mass[0] == 1.0


def test_regrid_two_atoms():
    pc = PointCloud(np.array([[0.25], [0.75]]), np.array([0.7, 0.3]))
    assert regrid(pc, 2, 1, box="unit").to_dict() == {0: 0.7, 1: 0.3}


def test_regrid_edge_goes_lower():
    pc = PointCloud(np.array([[0.0], [0.5], [1.0]]), np.array([0.2, 0.3, 0.5]))
    assert regrid(pc, 2, 1, box="unit").to_dict() == {0: 0.5, 1: 0.5}


def test_regrid_rejects_atom_outside_box():
    pc = PointCloud(np.array([[1.5]]), np.array([1.0]))
    with pytest.raises(ValueError, match="outside"):
        regrid(pc, 2, 2, box="unit")


def test_regrid_records_frame():
    pc = PointCloud(np.array([[-1.0], [3.0]]), np.array([0.5, 0.5]))
    g = regrid(pc, 2, 4)
    assert g.frame[0].tolist() == [-1.0] and g.frame[1].tolist() == [3.0]
    assert g.index.tolist() == [0, 15]


@given(seed=st.integers(0, 10**6), depth=st.integers(1, 10))
def test_regrid_conserves_mass(seed, depth):
    rng = np.random.default_rng(seed)
    w = rng.dirichlet(np.ones(30))
    g = regrid(PointCloud(rng.normal(size=(30, 2)), w), 2, depth)
    assert abs(float(np.sum(g.mass, dtype=np.longdouble)) - 1.0) <= 1e-12


def test_axis_projection_gives_uniform_marginal_exactly():
    u, _ = make_pair("uniform-pair", 7)
    prod = product_measure(u, u)
    pa, pb = project_pair(prod, prod, Subspace.axis(2, [0]), box="unit")
    assert np.array_equal(pa.index, u.index)
    assert np.array_equal(pa.mass, u.mass)


def test_axis_projection_gives_binomial_marginal():
    mu, nu = make_pair("binomial-pair", 8)
    prod_mu, prod_nu = product_measure(mu, nu), product_measure(nu, mu)
    for axis, (want_mu, want_nu) in ((0, (mu, nu)), (1, (nu, mu))):
        pa, pb = project_pair(prod_mu, prod_nu, Subspace.axis(2, [axis]), box="unit")
        assert np.array_equal(pa.index, want_mu.index)
        # the exact marginal of the stored product, summed column by column
        grid = prod_mu.mass.reshape(256, 256)
        exact = [math.fsum(r) for r in (grid if axis == 0 else grid.T)]
        assert pa.mass.tolist() == exact
        # against the factor itself the only error is that its stored masses
        # do not sum to exactly one
        np.testing.assert_allclose(pa.mass, want_mu.mass, rtol=1e-15, atol=0)
        np.testing.assert_allclose(pb.mass, want_nu.mass, rtol=1e-15, atol=0)


def test_identity_projection_recovers_pair():
    mu, nu = make_pair("product-binomial", 5)
    pa, pb = project_pair(mu, nu, Subspace.identity(2), box="unit")
    assert pa == mu and pb == nu


def test_projected_supports_coincide():
    mu, nu = make_pair("product-binomial", 6)
    pa, pb = project_pair(mu, nu, sample_grassmann(2, 1, 3))
    assert np.array_equal(pa.index, pb.index)
    assert pa.frame[0] == pytest.approx(pb.frame[0])


def test_cloud_positions_shared_for_common_support():
    mu, nu = make_pair("cantor-pair", 4)
    ca, cb = pair_clouds(mu, nu)
    assert ca.positions is cb.positions
    assert np.array_equal(ca.positions, grid_to_cloud(nu).positions)


def test_subspace_file_roundtrip(tmp_path):
    V = sample_grassmann(3, 2, 11)
    save_subspace(V, tmp_path / "V.txt")
    text = (tmp_path / "V.txt").read_text()
    assert text.startswith("v_0 = (") and "\nv_1 = (" in text
    assert load_subspace(tmp_path / "V.txt").basis.tobytes() == V.basis.tobytes()


def test_subspace_file_rejects_garbage(tmp_path):
    (tmp_path / "V.txt").write_text("w = 1, 2\n")
    with pytest.raises(ValueError, match="parse"):
        load_subspace(tmp_path / "V.txt")
