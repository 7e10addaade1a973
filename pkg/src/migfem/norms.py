"""Integrated and pointwise error measures against manufactured solutions.

``error_norms`` reports the displacement-style relative norms (L2, H1
seminorm, material energy) plus the element-integrated L2_h and H2_h values
used for fourth-order benchmarks, which are normalized by sqrt(domain area)
rather than by the exact solution.  Derivatives come from the reconstruction
(intrinsic mode) or from full product-rule differentiation of the blended
field (leibniz mode); leibniz mode has no meaningful pointwise second
derivative, so H2_h is reported only in intrinsic mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cases import ManufacturedCase
from .field import GlobalField, eval_in_element, eval_leibniz_in_element
from .quadrature import map_rule_to_element, triangle_quadrature

_GRAD = [(1, 0), (0, 1)]
_HESS = [(2, 0), (1, 1), (0, 2)]
_HESS_MULT = np.array([1.0, 2.0, 1.0])   # Frobenius multiplicity of the mixed term


@dataclass
class ErrorReport:
    l2: float
    h1: float
    energy: float | None
    l2_h: float
    h2_h: float | None

    def as_dict(self) -> dict[str, float | None]:
        return {"l2": self.l2, "h1": self.h1, "energy": self.energy,
                "l2_h": self.l2_h, "h2_h": self.h2_h}


def _sqrt_ratio(num: float, den: float) -> float:
    if den <= 0.0:
        return float(np.sqrt(num))
    return float(np.sqrt(num / den))


def error_norms(field: GlobalField, case: ManufacturedCase,
                quad_degree: int | None = None,
                derivative_mode: str = "intrinsic") -> ErrorReport:
    if derivative_mode not in ("intrinsic", "leibniz"):
        raise ValueError(f"unknown derivative mode {derivative_mode!r}")
    mesh = field.mesh
    p = field.p
    rule = triangle_quadrature(quad_degree if quad_degree is not None else p + 2)
    want_hess = derivative_mode == "intrinsic" and p >= 2
    alphas = [(0, 0)] + _GRAD + (_HESS if want_hess else [])

    dmat = case.material.dmatrix() if case.operator == "elasticity" else None

    e0 = x0 = e1 = x1 = ee = xe = e2 = x2 = 0.0
    area_total = 0.0
    for elem in range(mesh.n_triangles):
        pts, w = map_rule_to_element(rule, mesh.nodes, mesh.triangles[elem])
        area_total += w.sum()

        if derivative_mode == "intrinsic":
            tab = eval_in_element(field, elem, pts, alphas)
            vals = tab[0]
            grads = tab[1:3]                       # (2, nq, ncomp)
        else:
            vals, g = eval_leibniz_in_element(field, elem, pts)
            grads = np.moveaxis(g, 1, 0)           # (2, nq, ncomp)

        ex_val = case.u(pts)
        ex_grad = np.stack([case.du(pts, a) for a in _GRAD])

        dv = vals - ex_val
        dg = grads - ex_grad
        e0 += float(np.einsum("q,qc->", w, dv**2))
        x0 += float(np.einsum("q,qc->", w, ex_val**2))
        e1 += float(np.einsum("q,aqc->", w, dg**2))
        x1 += float(np.einsum("q,aqc->", w, ex_grad**2))

        if dmat is not None:
            eps_h = np.stack([grads[0][:, 0], grads[1][:, 1],
                              grads[1][:, 0] + grads[0][:, 1]], axis=1)
            eps_ex = case.strain(pts)
            de = eps_h - eps_ex
            ee += float(np.einsum("q,qi,ij,qj->", w, de, dmat, de))
            xe += float(np.einsum("q,qi,ij,qj->", w, eps_ex, dmat, eps_ex))

        if want_hess:
            hess = tab[3:6]
            ex_hess = np.stack([case.du(pts, a) for a in _HESS])
            dh = hess - ex_hess
            e2 += float(np.einsum("a,q,aqc->", _HESS_MULT, w, dh**2))
            x2 += float(np.einsum("a,q,aqc->", _HESS_MULT, w, ex_hess**2))

    if case.operator == "elasticity":
        energy = _sqrt_ratio(ee, xe)
    elif case.operator == "laplace":
        energy = _sqrt_ratio(e1, x1)
    else:
        energy = None

    return ErrorReport(
        l2=_sqrt_ratio(e0, x0),
        h1=_sqrt_ratio(e1, x1),
        energy=energy,
        l2_h=float(np.sqrt(e0 / area_total)),
        h2_h=float(np.sqrt(e2 / area_total)) if want_hess else None,
    )


def max_errors(field: GlobalField, case: ManufacturedCase, max_order: int = 4,
               quad_degree: int | None = None) -> dict[int, float]:
    """Relative max-norm error of each derivative order, sampled at element
    quadrature points: max|D^m e| / max|D^m u_exact| (absolute if the exact
    derivative vanishes)."""
    mesh = field.mesh
    max_order = min(max_order, field.p)
    rule = triangle_quadrature(quad_degree if quad_degree is not None else field.p + 2)
    alphas = [(m - j, j) for m in range(max_order + 1) for j in range(m + 1)]
    order_of = [m for m in range(max_order + 1) for _ in range(m + 1)]

    worst = np.zeros(max_order + 1)
    scale = np.zeros(max_order + 1)
    for elem in range(mesh.n_triangles):
        pts, _ = map_rule_to_element(rule, mesh.nodes, mesh.triangles[elem])
        tab = eval_in_element(field, elem, pts, alphas)
        for ia, alpha in enumerate(alphas):
            m = order_of[ia]
            ex = case.du(pts, alpha)
            worst[m] = max(worst[m], float(np.abs(tab[ia] - ex).max()))
            scale[m] = max(scale[m], float(np.abs(ex).max()))
    return {m: worst[m] / scale[m] if scale[m] > 0 else worst[m]
            for m in range(max_order + 1)}
