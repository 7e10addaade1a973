"""Inter-element derivative-jump metrics and decay-rate fitting.

Jumps of the m-th normal derivative are sampled at Gauss points strictly
inside each interior edge.  Both one-sided traces evaluate the true
product-rule derivatives of the blended function with the element pinned to
that side; points on the edge itself are fine because hats extend linearly.

The intrinsic derivative tables are useless here: on an edge the opposite
vertex's hat vanishes and the shared hats agree from both sides, so
intrinsic traces are single-valued no matter how rough the field is.  The
jumps live in the terms where the hat gradient hits the per-node
polynomials, and because those gradients cancel across any interior edge,
the jumps vanish for polynomial data of degree <= p and decay like
h^(p+1-m) for smooth fields.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .field import GlobalField, eval_leibniz_derivatives, hat_gradients
from .mesh import Mesh, Topology
from .quadrature import gauss_segment


@dataclass
class JumpReport:
    m_max: int
    J: np.ndarray          # (m_max+1,) max |jump| per derivative order
    J_hat: np.ndarray      # (m_max+1,) normalized by the max one-sided magnitude
    n_edges: int
    n_points: int


def _normal_derivative(values: np.ndarray, alphas: list[tuple[int, int]], normal: np.ndarray,
                       m_list: list[int]) -> np.ndarray:
    """Contract a table of D^alpha values into (n.grad)^m for each m.

    values: (n_alpha, n_pts, ncomp) in the order of ``alphas``.
    Returns (len(m_list), n_pts, ncomp).
    """
    nx, ny = float(normal[0]), float(normal[1])
    idx = {a: k for k, a in enumerate(alphas)}
    out = np.empty((len(m_list), values.shape[1], values.shape[2]))
    for r, m in enumerate(m_list):
        acc = np.zeros((values.shape[1], values.shape[2]))
        for j in range(m + 1):
            acc += comb(m, j) * nx ** (m - j) * ny**j * values[idx[(m - j, j)]]
        out[r] = acc
    return out


def compute_jumps(field: GlobalField, m_max: int, n_gauss: int | None = None) -> JumpReport:
    if m_max > field.p:
        raise ValueError(f"jump order {m_max} exceeds reconstruction degree {field.p}")
    topo = field.disc.topo
    mesh = field.mesh
    if n_gauss is None:
        n_gauss = max(field.p + 1, 4)
    ts, _ = gauss_segment(n_gauss)

    alphas = [(m - j, j) for m in range(m_max + 1) for j in range(m + 1)]
    m_list = list(range(m_max + 1))
    J = np.zeros(m_max + 1)
    one_sided = np.zeros(m_max + 1)

    for e in range(topo.n_internal_edges):
        a, b = topo.edge_nodes[e]
        xa, xb = mesh.nodes[a], mesh.nodes[b]
        pts = xa + ts[:, None] * (xb - xa)
        n = topo.edge_normals[e]
        left_tab = eval_leibniz_derivatives(field, int(topo.edge_left[e]), pts, alphas)
        right_tab = eval_leibniz_derivatives(field, int(topo.edge_right[e]), pts, alphas)
        dl = _normal_derivative(left_tab, alphas, n, m_list)
        dr = _normal_derivative(right_tab, alphas, n, m_list)
        jump = np.abs(dl - dr).max(axis=(1, 2))
        mag = np.maximum(np.abs(dl), np.abs(dr)).max(axis=(1, 2))
        J = np.maximum(J, jump)
        one_sided = np.maximum(one_sided, mag)

    J_hat = np.where(one_sided > 0, J / np.where(one_sided > 0, one_sided, 1.0), 0.0)
    return JumpReport(m_max=m_max, J=J, J_hat=J_hat,
                      n_edges=topo.n_internal_edges, n_points=n_gauss)


def signed_edge_jump(field: GlobalField, edge_index: int, t: float, m: int) -> np.ndarray:
    """Signed jump (left minus right trace) of the m-th normal derivative at
    the point parameterized by t along one interior edge."""
    topo = field.disc.topo
    mesh = field.mesh
    a, b = topo.edge_nodes[edge_index]
    xa, xb = mesh.nodes[a], mesh.nodes[b]
    pt = (xa + t * (xb - xa)).reshape(1, 2)
    n = topo.edge_normals[edge_index]
    alphas = [(m - j, j) for j in range(m + 1)]
    dl = _normal_derivative(
        eval_leibniz_derivatives(field, int(topo.edge_left[edge_index]), pt, alphas),
        alphas, n, [m])
    dr = _normal_derivative(
        eval_leibniz_derivatives(field, int(topo.edge_right[edge_index]), pt, alphas),
        alphas, n, [m])
    return (dl - dr)[0, 0]


def fit_rate(hs, values, last: int | None = None) -> float:
    """Least-squares slope of log(value) against log(h).

    ``last`` restricts the fit to the final few levels (the studies quote
    last-three fits).  Nonpositive values cannot be rate-fitted and raise.
    """
    hs = np.asarray(hs, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if last is not None:
        hs, values = hs[-last:], values[-last:]
    if hs.size < 2:
        raise ValueError("need at least two levels to fit a rate")
    if np.any(values <= 0) or np.any(hs <= 0):
        raise ValueError("rate fit requires positive h and positive values")
    return float(np.polyfit(np.log(hs), np.log(values), 1)[0])


def poz_residual(mesh: Mesh, elem: int, alpha: tuple[int, int]) -> float:
    """Sum over the element's hats of D^alpha N_i.

    Order zero returns the partition-of-unity sum (1); first order sums the
    constant hat gradients; all higher orders vanish identically for P1 hats.
    """
    order = sum(alpha)
    if order == 0:
        return 1.0
    if order == 1:
        g = hat_gradients(mesh, elem)
        return float(g.sum(axis=0)[0 if alpha == (1, 0) else 1])
    return 0.0


def poz_edge_residual(mesh: Mesh, topo: Topology, edge_index: int) -> np.ndarray:
    """Two-sided sum of hat-gradient jumps across one interior edge.

    Each node of either neighbor contributes its gradient where it is
    supported and zero on the other side; the PoZ identity makes the total
    jump vector vanish.
    """
    left = int(topo.edge_left[edge_index])
    right = int(topo.edge_right[edge_index])
    gl = hat_gradients(mesh, left)
    gr = hat_gradients(mesh, right)
    total = np.zeros(2)
    for v in range(3):
        total += gl[v]
    for v in range(3):
        total -= gr[v]
    return total
