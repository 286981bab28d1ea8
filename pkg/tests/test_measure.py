import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mutualmf.measure import (
    PRESETS,
    GridMeasure,
    MeasureFormatError,
    PointCloud,
    SelfSimilarSpec,
    coarsen,
    grid_to_cloud,
    load,
    make_pair,
    multinomial_cascade,
    point_mass,
    product_measure,
    save,
)


def probability_vectors(k_min=2, k_max=4):
    def normalize(xs):
        xs = np.asarray(xs)
        return tuple(xs / xs.sum())
    return st.lists(st.floats(0.05, 1.0), min_size=k_min, max_size=k_max).map(normalize)


# --- cascades ---------------------------------------------------------------------

def test_uniform_cascade_depth3():
    m = multinomial_cascade(SelfSimilarSpec.badic((0.5, 0.5), (0.5, 0.5)), depth=3)
    assert m.n_cells == 8
    assert np.all(m.mass == 0.125)


def test_binomial_depth1_readoff(binomial_spec):
    m = multinomial_cascade(binomial_spec, depth=1)
    assert m.to_dict() == {0: 0.7, 1: 0.3}


def test_binomial_depth2_enumeration(binomial_spec):
    m = multinomial_cascade(binomial_spec, depth=2)
    # digits most significant first: index 1 is the string (0, 1)
    expected = {0: 0.7 * 0.7, 1: 0.7 * 0.3, 2: 0.3 * 0.7, 3: 0.3 * 0.3}
    assert m.to_dict() == pytest.approx(expected, abs=0, rel=1e-15)
    assert m.to_dict()[1] == pytest.approx(0.21, rel=1e-15)
    assert math.fsum(m.mass) == pytest.approx(1.0, abs=1e-15)


def test_second_branch_vector(binomial_spec):
    nu = multinomial_cascade(binomial_spec, "second", depth=4)
    assert np.all(nu.mass == 1 / 16)


def test_cascade_masses_are_digit_products():
    spec = SelfSimilarSpec.badic((0.2, 0.5, 0.3), (0.4, 0.4, 0.2))
    m = multinomial_cascade(spec, depth=3)
    for digits in itertools.product(range(3), repeat=3):
        key = digits[0] * 9 + digits[1] * 3 + digits[2]
        want = math.prod(spec.p[d] for d in digits)
        assert m.to_dict()[key] == pytest.approx(want, rel=1e-14)


def test_zero_branch_shrinks_support():
    spec = SelfSimilarSpec.badic((0.6, 0.0, 0.4), (0.5, 0.0, 0.5))
    m = multinomial_cascade(spec, depth=2)
    assert sorted(m.to_dict()) == [0, 2, 6, 8]


def test_cantor_cascade():
    spec = SelfSimilarSpec.badic((0.5, 0.5), (0.5, 0.5), base=3, digits=(0, 2))
    m = multinomial_cascade(spec, depth=2, base=3)
    assert m.index.tolist() == [0, 2, 6, 8]


def test_non_badic_ratios_rejected():
    spec = SelfSimilarSpec((0.5, 0.5), (0.5, 0.5), ratios=(0.4, 0.3), offsets=(0.0, 0.6))
    with pytest.raises(ValueError, match="ratio"):
        multinomial_cascade(spec, depth=2, base=2)


def test_cell_count_overflow_rejected(binomial_spec):
    with pytest.raises(OverflowError):
        multinomial_cascade(binomial_spec, depth=40)


def test_tiny_branch_masses_via_log_space():
    # depth * |log p_min| > 650 routes the products through log space
    spec = SelfSimilarSpec.badic((1.0 - 1e-150, 1e-150), (0.5, 0.5))
    m = multinomial_cascade(spec, depth=2)
    assert m.mass[-1] == pytest.approx(1e-300, rel=1e-12)


def test_underflowing_cascade_rejected():
    spec = SelfSimilarSpec.badic((1.0 - 1e-150, 1e-150), (0.5, 0.5))
    with pytest.raises(ValueError, match="underflow"):
        multinomial_cascade(spec, depth=3)


def test_small_masses_exact_products():
    spec = SelfSimilarSpec.badic((0.98, 0.01, 0.01), (1 / 3, 1 / 3, 1 / 3))
    m = multinomial_cascade(spec, depth=15)
    assert m.mass.min() == pytest.approx(1e-30, rel=1e-12)


def test_spec_validation():
    with pytest.raises(ValueError, match="sum to 1"):
        SelfSimilarSpec.badic((0.7, 0.4), (0.5, 0.5))
    with pytest.raises(ValueError, match="overlap"):
        SelfSimilarSpec((0.5, 0.5), (0.5, 0.5), ratios=(0.6, 0.6), offsets=(0.0, 0.4))
    with pytest.raises(ValueError, match="\\(0, 1\\)"):
        SelfSimilarSpec((0.5, 0.5), (0.5, 0.5), ratios=(1.0, 0.5), offsets=(0.0, 0.5))


def test_spec_product_geometry(binomial_spec):
    prod = binomial_spec.product(binomial_spec)
    assert prod.k == 4 and prod.dim == 2
    assert prod.p == pytest.approx((0.49, 0.21, 0.21, 0.09))
    m = multinomial_cascade(prod, depth=3)
    direct = product_measure(multinomial_cascade(binomial_spec, depth=3),
                             multinomial_cascade(binomial_spec, depth=3))
    assert np.array_equal(m.index, direct.index)
    np.testing.assert_allclose(m.mass, direct.mass, rtol=1e-14)


@given(p=probability_vectors(), depth=st.integers(1, 6))
def test_cascade_mass_conservation(p, depth):
    spec = SelfSimilarSpec.badic(p, p)
    m = multinomial_cascade(spec, depth=depth)
    assert abs(float(np.sum(m.mass, dtype=np.longdouble)) - 1.0) <= 1e-9
    assert m.n_cells == len(p) ** depth


# --- invariants ---------------------------------------------------------------

def test_grid_measure_invariants():
    with pytest.raises(ValueError, match="positive"):
        GridMeasure(2, 1, 1, np.array([0, 1]), np.array([1.0, 0.0]))
    with pytest.raises(ValueError, match="total mass"):
        GridMeasure(2, 1, 1, np.array([0, 1]), np.array([0.25, 0.25]))
    with pytest.raises(ValueError, match="outside"):
        GridMeasure(2, 1, 1, np.array([0, 2]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError, match="increasing"):
        GridMeasure(2, 1, 1, np.array([1, 0]), np.array([0.5, 0.5]))
    with pytest.raises(OverflowError):
        GridMeasure(2, 2, 40, np.array([0]), np.array([1.0]))


def test_grid_measure_is_read_only(binomial_spec):
    m = multinomial_cascade(binomial_spec, depth=3)
    with pytest.raises(ValueError):
        m.mass[0] = 0.5


# --- products -----------------------------------------------------------------

def test_product_of_uniform_depth1():
    u = multinomial_cascade(SelfSimilarSpec.badic((0.5, 0.5), (0.5, 0.5)), depth=1)
    prod = product_measure(u, u)
    assert prod.dim == 2
    assert prod.to_dict() == {0: 0.25, 1: 0.25, 2: 0.25, 3: 0.25}


def test_product_cells(binomial_spec):
    a = multinomial_cascade(binomial_spec, "first", 1)
    b = multinomial_cascade(binomial_spec, "second", 1)
    prod = product_measure(a, b)
    cells = {tuple(c): v for c, v in zip(prod.coords().tolist(), prod.mass.tolist())}
    assert cells == pytest.approx({(0, 0): 0.35, (0, 1): 0.35, (1, 0): 0.15, (1, 1): 0.15})


def test_product_grid_mismatch(binomial_spec):
    a = multinomial_cascade(binomial_spec, depth=2)
    b = multinomial_cascade(binomial_spec, depth=3)
    with pytest.raises(ValueError, match="matching grids"):
        product_measure(a, b)


@given(p=probability_vectors(2, 2), w=probability_vectors(2, 2), depth=st.integers(1, 5))
def test_product_total_mass(p, w, depth):
    a = multinomial_cascade(SelfSimilarSpec.badic(p, p), depth=depth)
    b = multinomial_cascade(SelfSimilarSpec.badic(w, w), depth=depth)
    prod = product_measure(a, b)
    assert abs(float(np.sum(prod.mass, dtype=np.longdouble)) - 1.0) <= 1e-9


# --- coarsening -----------------------------------------------------------------

def test_coarsen_extremes(binomial_spec):
    m = multinomial_cascade(binomial_spec, depth=5)
    assert coarsen(m, 5) == m
    top = coarsen(m, 0)
    assert top.index.tolist() == [0]
    assert top.mass[0] == pytest.approx(1.0, abs=1e-15)


def test_coarsen_binomial(binomial_spec):
    m = multinomial_cascade(binomial_spec, depth=2)
    # 0.49 + 0.21 and 0.21 + 0.09
    assert coarsen(m, 1).to_dict() == pytest.approx({0: 0.7, 1: 0.3}, rel=1e-15)


def test_coarsen_range(binomial_spec):
    m = multinomial_cascade(binomial_spec, depth=2)
    with pytest.raises(ValueError):
        coarsen(m, 3)
    with pytest.raises(ValueError):
        coarsen(m, -1)


def test_coarsen_planar_matches_direct_sum(binomial_spec):
    prod = product_measure(multinomial_cascade(binomial_spec, depth=4),
                           multinomial_cascade(binomial_spec, "second", depth=4))
    c = coarsen(prod, 2)
    coords = prod.coords() // 4
    direct = {}
    for (x, y), v in zip(coords.tolist(), prod.mass.tolist()):
        direct.setdefault(x * 4 + y, []).append(v)
    assert c.to_dict() == pytest.approx({k: math.fsum(v) for k, v in direct.items()}, rel=1e-15)


@given(p=probability_vectors(2, 3), depth=st.integers(2, 6), data=st.data())
def test_coarsen_nesting(p, depth, data):
    m = multinomial_cascade(SelfSimilarSpec.badic(p, p), depth=depth)
    j2 = data.draw(st.integers(1, depth))
    j1 = data.draw(st.integers(0, j2))
    once = coarsen(m, j1)
    twice = coarsen(coarsen(m, j2), j1)
    assert np.array_equal(once.index, twice.index)
    np.testing.assert_allclose(once.mass, twice.mass, rtol=4e-16, atol=0)
    assert abs(float(np.sum(once.mass, dtype=np.longdouble)) - 1.0) <= 1e-9


# --- clouds -------------------------------------------------------------------------

def test_cloud_of_single_cell():
    pc = grid_to_cloud(GridMeasure(2, 1, 0, np.array([0]), np.array([1.0])))
    assert pc.positions.tolist() == [[0.5]]
    assert pc.weights.tolist() == [1.0]


def test_cloud_of_binomial(binomial_spec):
    pc = grid_to_cloud(multinomial_cascade(binomial_spec, depth=1))
    assert pc.positions[:, 0].tolist() == [0.25, 0.75]
    assert pc.weights.tolist() == [0.7, 0.3]


def test_point_cloud_validation():
    with pytest.raises(ValueError, match="finite"):
        PointCloud(np.array([[np.nan]]), np.array([1.0]))
    with pytest.raises(ValueError, match="sum"):
        PointCloud(np.array([[0.1], [0.2]]), np.array([0.5, 0.2]))


# --- presets -------------------------------------------------------------------------

@pytest.mark.parametrize("preset", PRESETS)
def test_presets_share_support(preset):
    mu, nu = make_pair(preset, 4)
    assert np.array_equal(mu.index, nu.index)
    assert (mu.base, mu.dim, mu.depth) == (nu.base, nu.dim, nu.depth)


def test_preset_dimensions():
    assert make_pair("product-binomial", 3)[0].dim == 2
    assert make_pair("embedded-binomial", 3)[0].dim == 2
    assert make_pair("cantor-pair", 3)[0].base == 3


def test_preset_rejects_mismatched_zero_pattern():
    with pytest.raises(ValueError, match="same branches"):
        make_pair("binomial-pair", 3, p=(1.0, 0.0), w=(0.5, 0.5))


def test_unknown_preset():
    with pytest.raises(ValueError, match="unknown preset"):
        make_pair("fractal-soup", 3)


# --- MMF1 round trip --------------------------------------------------------------------

@pytest.mark.parametrize("preset", PRESETS)
def test_save_load_roundtrip(tmp_path, preset):
    mu, _ = make_pair(preset, 3)
    path = tmp_path / "m.mmf"
    save(mu, path)
    back = load(path)
    assert back == mu
    assert np.array_equal(back.mass, mu.mass)
    save(back, tmp_path / "again.mmf")
    assert (tmp_path / "again.mmf").read_bytes() == path.read_bytes()


@given(p=probability_vectors(2, 3), depth=st.integers(1, 5))
def test_roundtrip_bit_exact(tmp_path_factory, p, depth):
    m = multinomial_cascade(SelfSimilarSpec.badic(p, p), depth=depth)
    path = tmp_path_factory.mktemp("mmf") / "m.mmf"
    save(m, path)
    assert np.array_equal(load(path).mass.view(np.int64), m.mass.view(np.int64))


def test_save_format(tmp_path, binomial_spec):
    save(multinomial_cascade(binomial_spec, depth=1), tmp_path / "m.mmf")
    assert (tmp_path / "m.mmf").read_text() == (
        "MMF1 2 1 1 2\n0 0.69999999999999996\n1 0.29999999999999999\n"
    )


@pytest.mark.parametrize("text, match", [
    ("", "empty"),
    ("MMF2 2 1 1 1\n0 1\n", "header"),
    ("MMF1 2 1 x 1\n0 1\n", "header"),
    ("MMF1 2 1 1 2\n0 1\n", "announces"),
    ("MMF1 2 1 1 2\n0 0.25\n1 0.25\n", "mass"),
    ("MMF1 2 1 1 2\n0 1.5\n1 -0.5\n", "negative"),
    ("MMF1 2 1 1 1\nzero one\n", "parse"),
])
def test_load_rejects_bad_files(tmp_path, text, match):
    path = tmp_path / "bad.mmf"
    path.write_text(text)
    with pytest.raises(MeasureFormatError, match=match):
        load(path)


def test_point_mass():
    m = point_mass(2, 3, cell=5)
    assert m.to_dict() == {5: 1.0}
