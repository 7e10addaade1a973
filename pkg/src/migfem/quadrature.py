"""Symmetric triangle quadrature and segment Gauss rules.

Low degrees use the classic compact symmetric point sets, written out as
literal orbit tables.  Higher degrees are built from a collapsed
Gauss-Legendre x Gauss-Jacobi product rule; exactness is guaranteed by
construction and double-checked against closed-form monomial integrals in
the test suite.

Weights always sum to the reference-triangle area 1/2; points are stored as
barycentric coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
from scipy.special import roots_jacobi

MAX_DEGREE = 20


@dataclass(frozen=True, eq=False)
class QuadRule:
    degree: int
    points: np.ndarray    # (n, 3) barycentric
    weights: np.ndarray   # (n,), sum 1/2


def _orbit(table: list[tuple[float, ...]]) -> tuple[np.ndarray, np.ndarray]:
    """Expand (weight, a [, b]) orbit rows into explicit points.

    One value: centroid.  Two values: the three permutations of (1-2a, a, a).
    Three values: the six permutations of (1-a-b, a, b).
    """
    pts, wts = [], []
    for row in table:
        w = row[0]
        if len(row) == 1:
            pts.append((1 / 3, 1 / 3, 1 / 3))
            wts.append(w)
        elif len(row) == 2:
            a = row[1]
            c = 1.0 - 2.0 * a
            for perm in ((c, a, a), (a, c, a), (a, a, c)):
                pts.append(perm)
                wts.append(w)
        else:
            a, b = row[1], row[2]
            c = 1.0 - a - b
            for perm in ((c, a, b), (a, b, c), (b, c, a), (c, b, a), (b, a, c), (a, c, b)):
                pts.append(perm)
                wts.append(w)
    return np.array(pts), np.array(wts)


# weights here are normalized to sum to 1; scaled by the area 1/2 on use
_SYMMETRIC_TABLES: dict[int, list[tuple[float, ...]]] = {
    1: [(1.0,)],
    2: [(1.0 / 3.0, 1.0 / 6.0)],
    4: [
        (0.223381589678011, 0.445948490915965),
        (0.109951743655322, 0.091576213509771),
    ],
    5: [
        (0.225,),
        (0.132394152788506, 0.470142064105115),
        (0.125939180544827, 0.101286507323456),
    ],
}


def _collapsed_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Duffy-collapsed Gauss-Legendre x Gauss-Jacobi product rule."""
    n = (degree + 2) // 2  # ceil((degree+1)/2): Gauss exactness 2n-1 >= degree
    xg, wg = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (xg + 1.0)
    wu = 0.5 * wg
    tj, wj = roots_jacobi(n, 1.0, 0.0)   # weight (1-t) on [-1, 1]
    v = 0.5 * (tj + 1.0)
    wv = 0.25 * wj                        # absorbs the (1-v) jacobian

    U, V = np.meshgrid(u, v, indexing="ij")
    x = (U * (1.0 - V)).ravel()
    y = V.ravel()
    w = np.outer(wu, wv).ravel()
    return np.column_stack([1.0 - x - y, x, y]), w


@lru_cache(maxsize=None)
def triangle_quadrature(degree: int) -> QuadRule:
    if degree < 1:
        degree = 1
    if degree > MAX_DEGREE:
        raise ValueError(f"quadrature degree {degree} exceeds supported maximum {MAX_DEGREE}")
    table_degree = min(d for d in (1, 2, 4, 5) if d >= degree) if degree <= 5 else None
    if table_degree is not None:
        pts, wts = _orbit(_SYMMETRIC_TABLES[table_degree])
        rule = QuadRule(degree=degree, points=pts, weights=wts * 0.5)
    else:
        # The collapsed tensor rule absorbs the Duffy Jacobian, so its
        # weights already sum to the reference-triangle area.
        pts, wts = _collapsed_rule(degree)
        rule = QuadRule(degree=degree, points=pts, weights=wts)
    rule.points.setflags(write=False)
    rule.weights.setflags(write=False)
    return rule


def reference_monomial_integral(a: int, b: int) -> float:
    """∫ x^a y^b over the reference triangle {x,y >= 0, x+y <= 1}."""
    return factorial(a) * factorial(b) / factorial(a + b + 2)


def rule_points_xy(rule: QuadRule) -> np.ndarray:
    """Barycentric points as (x, y) on the reference triangle."""
    return rule.points[:, 1:]


def map_rule_to_element(rule: QuadRule, mesh_nodes: np.ndarray, tri: np.ndarray):
    """Physical quadrature points and weights for one element.

    Weights are scaled by |signed area| / (1/2), so integration stays positive
    on inverted elements of perturbed meshes.
    """
    verts = mesh_nodes[tri]
    pts = rule.points @ verts
    d1 = verts[1] - verts[0]
    d2 = verts[2] - verts[0]
    area = 0.5 * abs(float(d1[0] * d2[1] - d1[1] * d2[0]))
    return pts, rule.weights * (area / 0.5)


def gauss_segment(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes/weights on (0, 1), weights summing to 1."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w
