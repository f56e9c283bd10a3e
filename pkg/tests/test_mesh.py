import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from invspec.errors import ConfigurationError, GridMismatchError, NumericError
from invspec.mesh import (
    Field,
    build_grid,
    constant,
    h1_seminorm,
    inner_product,
    l2_norm,
    lincomb,
    load_field_csv,
    lp_norm,
    map_pointwise,
    max_norm,
    restrict_to_coarse,
    sample,
    save_field_csv,
)

G1 = build_grid(1, (0.0, 1.0), 1023)
SMALL = build_grid(1, (0.0, 1.0), 31)


def test_build_grid_1d():
    assert G1.h == (1 / 1024,)
    assert G1.weight == 1 / 1024
    assert G1.size == 1023


def test_build_grid_2d():
    g = build_grid(2, [(0, 1), (0, 1)], (63, 63))
    assert g.size == 3969
    assert g.weight == pytest.approx(1 / 4096, rel=1e-15)
    assert g.shape == (63, 63)


@pytest.mark.parametrize(
    "args",
    [(1, (0, 0), 100), (1, (1, 0), 100), (1, (0, 1), 2), (3, [(0, 1)] * 3, 5), (2, [(0, 1)], 5), (1, (0, math.inf), 5)],
)
def test_build_grid_rejects(args):
    with pytest.raises(ConfigurationError):
        build_grid(*args)


def test_coordinates_exclude_boundary():
    g = build_grid(2, [(0, 2), (-1, 1)], (3, 4))
    x, y = g.coords()
    assert x.shape == (4, 3)
    assert np.allclose(x[0], [0.5, 1.0, 1.5])
    assert np.allclose(y[:, 0], [-0.6, -0.2, 0.2, 0.6])


def test_inner_product_of_ones():
    one = constant(G1, 1.0)
    assert inner_product(one, one) == pytest.approx(1023 / 1024, rel=1e-15)


def test_inner_product_antisymmetric_is_zero():
    f = sample(G1, lambda x: x - 0.5)
    g = constant(G1, 1.0)
    assert abs(inner_product(f, g)) < 1e-15


def test_inner_product_sin_squared():
    f = sample(G1, lambda x: np.sin(np.pi * x))
    assert abs(inner_product(f, f) - 0.5) <= 1e-3


def test_lp_norm_examples():
    assert lp_norm(constant(G1, 2.0), 2) == pytest.approx(2 * math.sqrt(1023 / 1024), rel=1e-14)
    for p in (1, 2, 3.5, 40):
        assert lp_norm(constant(G1, 0.0), p) == 0.0
    x = sample(G1, lambda x: x)
    assert abs(lp_norm(x, 3) - 0.25 ** (1 / 3)) <= 1e-3


def test_lp_norm_rejects_small_p():
    with pytest.raises(ConfigurationError):
        lp_norm(constant(G1, 1.0), 0.5)


def test_lp_norm_large_p_no_overflow():
    f = constant(SMALL, 1e200)
    assert lp_norm(f, 10) == pytest.approx(1e200 * (31 / 32) ** 0.1, rel=1e-12)


def test_map_pointwise_and_lincomb():
    f = constant(SMALL, 3.0)
    assert np.all(map_pointwise(f, lambda v: v**2).values == 9.0)
    assert np.all(lincomb(1, f, -1, f).values == 0.0)
    p = 2.0
    assert np.all(map_pointwise(constant(SMALL, 4.0), lambda v: v ** (2 / (p - 1))).values == 16.0)


def test_map_pointwise_nan_reports_node():
    vals = np.ones(SMALL.size)
    vals[7] = -1.0
    with pytest.raises(NumericError) as exc:
        map_pointwise(Field(SMALL, vals), np.sqrt)
    assert exc.value.node == 7


def test_field_rejects_nonfinite_and_wrong_size():
    with pytest.raises(NumericError):
        Field(SMALL, np.full(SMALL.size, np.inf))
    with pytest.raises(GridMismatchError):
        Field(SMALL, np.ones(5))


def test_field_is_immutable():
    f = constant(SMALL, 1.0)
    with pytest.raises(AttributeError):
        f.values = np.zeros(SMALL.size)
    with pytest.raises(ValueError):
        f.values[0] = 2.0


def test_grid_mismatch():
    with pytest.raises(GridMismatchError):
        constant(SMALL, 1.0) + constant(G1, 1.0)
    with pytest.raises(GridMismatchError):
        inner_product(constant(SMALL, 1.0), constant(G1, 1.0))


def test_restrict_injection():
    coarse = build_grid(1, (0, 1), 511)
    f = sample(G1, lambda x: np.sin(3 * x))
    r = restrict_to_coarse(f, coarse)
    assert np.array_equal(r.values, f.values[1::2])
    assert np.all(restrict_to_coarse(constant(G1, 2.5), coarse).values == 2.5)


def test_restrict_2d_picks_coincident_nodes():
    fine = build_grid(2, [(0, 1), (0, 2)], (7, 15))
    coarse = build_grid(2, [(0, 1), (0, 2)], (3, 7))
    f = sample(fine, lambda x, y: x + 10 * y)
    r = restrict_to_coarse(f, coarse)
    assert np.allclose(r.values, sample(coarse, lambda x, y: x + 10 * y).values, rtol=0, atol=1e-14)


def test_restrict_rejects_non_nested():
    with pytest.raises(GridMismatchError):
        restrict_to_coarse(constant(G1, 1.0), build_grid(1, (0, 1), 500))


def test_restrict_norm_difference_is_first_order():
    diffs = []
    for n in (63, 127, 255):
        fine = build_grid(1, (0, 1), 2 * n + 1)
        f = sample(fine, lambda x: np.exp(x) * np.sin(2 * x))
        diffs.append(abs(l2_norm(restrict_to_coarse(f, build_grid(1, (0, 1), n))) - l2_norm(f)))
    hs = np.array([1 / 64, 1 / 128, 1 / 256])
    assert np.all(np.array(diffs) <= 5.0 * hs)


def test_quadrature_is_second_order():
    # integrand vanishes on the boundary, so the interior-node rule is the trapezoid rule
    exact = 3 - math.e  # int_0^1 x(1-x) e^x dx
    errs = []
    for n in (31, 63, 127):
        g = build_grid(1, (0, 1), n)
        f = sample(g, lambda x: x * (1 - x))
        e = sample(g, np.exp)
        errs.append(abs(inner_product(f, e) - exact))
    slope = np.polyfit(np.log([1 / 32, 1 / 64, 1 / 128]), np.log(errs), 1)[0]
    assert slope >= 1.9


def test_h1_seminorm_of_sine():
    f = sample(G1, lambda x: np.sin(np.pi * x))
    assert h1_seminorm(f) == pytest.approx(math.pi / math.sqrt(2), rel=1e-5)


def test_csv_roundtrip(tmp_path):
    g = build_grid(2, [(0, 1), (-1, 2)], (5, 4))
    f = sample(g, lambda x, y: np.sin(x) * y + 1 / 3)
    path = tmp_path / "f.csv"
    save_field_csv(f, path)
    head = path.read_text().splitlines()[0]
    assert head.startswith("# dim=2, n_per_axis=5x4, extents=")
    back = load_field_csv(path)
    assert back.grid == g
    assert np.array_equal(back.values, f.values)


def test_csv_rejects_bad_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1.0\n2.0\n")
    with pytest.raises(ConfigurationError):
        load_field_csv(path)


# magnitudes below 1e-100 would square to subnormals
vectors = arrays(
    np.float64, SMALL.size, elements=st.floats(-1e3, 1e3, allow_nan=False).filter(lambda v: v == 0 or abs(v) > 1e-100)
)


@settings(max_examples=60, deadline=None)
@given(vectors, vectors, st.floats(-10, 10))
def test_inner_product_symmetric_bilinear(a, b, s):
    f, g = Field(SMALL, a), Field(SMALL, b)
    scale = 1e-14 * (1 + l2_norm(f) * l2_norm(g)) * (1 + abs(s))
    assert abs(inner_product(f, g) - inner_product(g, f)) <= scale
    assert abs(inner_product(s * f + g, g) - (s * inner_product(f, g) + inner_product(g, g))) <= 1e-12 * (
        1 + abs(s) * l2_norm(f) * l2_norm(g) + l2_norm(g) ** 2
    )


@settings(max_examples=60, deadline=None)
@given(vectors)
def test_inner_product_positive_definite(a):
    f = Field(SMALL, a)
    if np.any(a != 0):
        assert inner_product(f, f) > 0


@settings(max_examples=60, deadline=None)
@given(vectors, vectors, st.sampled_from([1.0, 1.5, 2.0, 3.0, 7.0]), st.floats(-50, 50))
def test_lp_norm_triangle_and_homogeneity(a, b, p, s):
    f, g = Field(SMALL, a), Field(SMALL, b)
    assert lp_norm(f + g, p) <= (lp_norm(f, p) + lp_norm(g, p)) * (1 + 1e-12) + 1e-300
    assert lp_norm(s * f, p) == pytest.approx(abs(s) * lp_norm(f, p), rel=1e-12, abs=1e-300)


def test_max_norm():
    assert max_norm(Field(SMALL, np.linspace(-4, 2, SMALL.size))) == 4.0
