"""Triangle and segment quadrature: exactness, positivity, element mapping."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from migfem.mesh import build_structured_tri_mesh
from migfem.quadrature import (MAX_DEGREE, gauss_segment, map_rule_to_element,
                               reference_monomial_integral, rule_points_xy,
                               triangle_quadrature)


def test_reference_monomial_integral_closed_form():
    # int_T x^a y^b over the unit reference triangle = a! b! / (a+b+2)!
    for a in range(6):
        for b in range(6):
            want = (math.factorial(a) * math.factorial(b)
                    / math.factorial(a + b + 2))
            assert reference_monomial_integral(a, b) == pytest.approx(want, rel=1e-13)


@pytest.mark.parametrize("degree", range(1, MAX_DEGREE + 1))
def test_rule_is_exact_to_declared_degree(degree):
    rule = triangle_quadrature(degree)
    xy = rule_points_xy(rule)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            got = float(rule.weights @ (xy[:, 0] ** a * xy[:, 1] ** b))
            want = reference_monomial_integral(a, b)
            assert got == pytest.approx(want, rel=2e-12, abs=2e-14), (a, b)


def test_weights_sum_to_reference_area():
    for degree in (1, 4, 9, 14, 20):
        assert triangle_quadrature(degree).weights.sum() == pytest.approx(0.5)


def test_weights_positive_and_points_inside():
    for degree in range(1, MAX_DEGREE + 1):
        rule = triangle_quadrature(degree)
        assert np.all(rule.weights > 0.0)
        assert np.all(rule.points >= -1e-14)
        assert np.all(rule.points <= 1.0 + 1e-14)
        np.testing.assert_allclose(rule.points.sum(axis=1), 1.0, atol=1e-13)


def test_spot_value_x2y():
    rule = triangle_quadrature(6)
    xy = rule_points_xy(rule)
    got = float(rule.weights @ (xy[:, 0] ** 2 * xy[:, 1]))
    assert got == pytest.approx(1.0 / 60.0, rel=1e-13)


def test_degree_above_table_raises():
    with pytest.raises(ValueError):
        triangle_quadrature(MAX_DEGREE + 1)
    with pytest.raises(ValueError):
        triangle_quadrature(0)


def test_mapped_rule_integrates_area_and_linears():
    mesh = build_structured_tri_mesh(4, 4, (0.0, 3.0, -1.0, 2.0))
    rule = triangle_quadrature(3)
    total = 0.0
    sx = 0.0
    for tri, area in zip(mesh.triangles, mesh.signed_areas()):
        pts, w = map_rule_to_element(rule, mesh.nodes, tri)
        assert w.sum() == pytest.approx(area, rel=1e-13)
        total += w.sum()
        sx += float(w @ pts[:, 0])
    assert total == pytest.approx(9.0, rel=1e-13)
    # int x over [0,3]x[-1,2] = 3 * 4.5
    assert sx == pytest.approx(13.5, rel=1e-12)


def test_mapped_rule_on_inverted_triangle_keeps_magnitude():
    nodes = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    rule = triangle_quadrature(2)
    _, w_ccw = map_rule_to_element(rule, nodes, np.array([0, 1, 2]))
    _, w_cw = map_rule_to_element(rule, nodes, np.array([0, 2, 1]))
    assert w_ccw.sum() == pytest.approx(0.5, rel=1e-14)
    assert abs(w_cw.sum()) == pytest.approx(0.5, rel=1e-14)


@given(n=st.integers(min_value=1, max_value=12))
@settings(max_examples=12, deadline=None)
def test_gauss_segment_exactness(n):
    # n points integrate polynomials through degree 2n-1 on [0, 1]
    t, w = gauss_segment(n)
    assert np.all((t > 0.0) & (t < 1.0))
    assert w.sum() == pytest.approx(1.0, rel=1e-13)
    for k in range(2 * n):
        got = float(w @ t ** k)
        assert got == pytest.approx(1.0 / (k + 1), rel=1e-11), k
