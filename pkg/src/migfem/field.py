"""Blended global field: hat-weighted combination of patch reconstructions.

The global approximation is u^h(x) = sum_i N_i(x) U_i(x) over the (at most
three) hat functions active in the containing element.  Its "intrinsic"
derivatives differentiate only the patch polynomials, sum_i N_i D^alpha U_i,
which is the evaluation the strong-form solvers and jump diagnostics use; the
product-rule (Leibniz) derivative that also differentiates the hats is kept
for Galerkin assembly and as a cross-check.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field
from math import ceil, sqrt

import numpy as np

from .basis import eval_basis_stack, eval_basis_table
from .mesh import Mesh, Topology, cross2
from .patches import Patch
from .recon import ReconMap, patch_coefficients


class LocateError(RuntimeError):
    pass


class PointLocator:
    """Uniform background grid over the element bounding boxes.

    Queries fall back to a linear scan before giving up; points on shared
    edges resolve to the lowest incident element index.
    """

    def __init__(self, mesh: Mesh, tol: float = 1e-10):
        self.mesh = mesh
        lo = mesh.nodes.min(axis=0)
        hi = mesh.nodes.max(axis=0)
        span = np.maximum(hi - lo, 1e-300)
        self.lo, self.hi, self.span = lo, hi, span
        self.tol = tol * float(max(span))
        nb = max(1, ceil(sqrt(mesh.n_triangles / 2.0)))
        self.nb = nb
        self.bins: dict[tuple[int, int], list[int]] = {}
        for e, tri in enumerate(mesh.triangles):
            v = mesh.nodes[tri]
            i0, j0 = self._bin(v.min(axis=0))
            i1, j1 = self._bin(v.max(axis=0))
            for i in range(i0, i1 + 1):
                for j in range(j0, j1 + 1):
                    self.bins.setdefault((i, j), []).append(e)

    def _bin(self, x) -> tuple[int, int]:
        f = (np.asarray(x) - self.lo) / self.span
        ij = np.clip((f * self.nb).astype(int), 0, self.nb - 1)
        return int(ij[0]), int(ij[1])

    def barycentric(self, elem: int, x: np.ndarray) -> np.ndarray:
        a, b, c = self.mesh.nodes[self.mesh.triangles[elem]]
        area = cross2(b - a, c - a)
        if area == 0.0:
            return np.array([np.inf, np.inf, np.inf])
        l0 = cross2(b - x, c - x) / area
        l1 = cross2(c - x, a - x) / area
        return np.array([l0, l1, 1.0 - l0 - l1])

    def _contains(self, elem: int, x: np.ndarray) -> bool:
        lam = self.barycentric(elem, x)
        return bool(np.all(lam >= -1e-12) and np.all(lam <= 1.0 + 1e-12))

    def locate(self, x) -> int:
        x = np.asarray(x, dtype=np.float64)
        candidates = self.bins.get(self._bin(x), ())
        hits = [e for e in candidates if self._contains(e, x)]
        if hits:
            return min(hits)
        hits = [e for e in range(self.mesh.n_triangles) if self._contains(e, x)]
        if hits:
            return min(hits)
        raise LocateError(f"point {x.tolist()} lies outside every element")


def hat_values(mesh: Mesh, elem: int, pts: np.ndarray) -> np.ndarray:
    """Barycentric hat values at (k, 2) points, extended linearly outside."""
    pts = np.atleast_2d(pts)
    a, b, c = mesh.nodes[mesh.triangles[elem]]
    area = float(cross2(b - a, c - a))
    l0 = cross2(b - pts, c - pts) / area
    l1 = cross2(c - pts, a - pts) / area
    return np.column_stack([l0, l1, 1.0 - l0 - l1])


def hat_gradients(mesh: Mesh, elem: int) -> np.ndarray:
    """(3, 2) constant hat gradients on an element."""
    a, b, c = mesh.nodes[mesh.triangles[elem]]
    area = float(cross2(b - a, c - a))
    g = np.empty((3, 2))
    for k, (q, r) in enumerate(((b, c), (c, a), (a, b))):
        d = r - q
        g[k] = np.array([-d[1], d[0]]) / area  # rotate edge to get the normal
    return g


def eval_hats(mesh: Mesh, locator: PointLocator, x) -> tuple[int, np.ndarray, np.ndarray]:
    elem = locator.locate(x)
    return elem, hat_values(mesh, elem, np.asarray(x))[0], hat_gradients(mesh, elem)


@dataclass(eq=False)
class Discretization:
    mesh: Mesh
    topo: Topology
    patches: list[Patch]
    maps: list[ReconMap]
    p: int
    ncomp: int = 1

    def __post_init__(self):
        self._locator: PointLocator | None = None

    @property
    def locator(self) -> PointLocator:
        if self._locator is None:
            self._locator = PointLocator(self.mesh)
        return self._locator


@dataclass(eq=False)
class GlobalField:
    disc: Discretization
    u: np.ndarray                         # (N,) or (N, ncomp)
    g: list[np.ndarray | None] | None = None
    _coeffs: np.ndarray | None = dc_field(default=None, repr=False)

    @property
    def mesh(self) -> Mesh:
        return self.disc.mesh

    @property
    def ncomp(self) -> int:
        return self.disc.ncomp

    @property
    def p(self) -> int:
        return self.disc.p

    def nodal(self) -> np.ndarray:
        """Nodal values as (N, ncomp)."""
        u = np.asarray(self.u, dtype=np.float64)
        return u.reshape(-1, 1) if u.ndim == 1 else u

    @property
    def coeffs(self) -> np.ndarray:
        """Per-patch stacked polynomial coefficients, (N, ncomp*Q)."""
        if self._coeffs is None:
            u = self.nodal()
            maps = self.disc.maps
            N = self.mesh.n_nodes
            out = np.empty((N, self.ncomp * maps[0].Q))
            for i, rm in enumerate(maps):
                us = u[rm.stencil].T.ravel()   # component-major stack
                gi = None if self.g is None else self.g[i]
                out[i] = patch_coefficients(rm, us, gi)
            self._coeffs = out
        return self._coeffs


def eval_in_element(
    field: GlobalField,
    elem: int,
    pts: np.ndarray,
    alphas: list[tuple[int, int]],
) -> np.ndarray:
    """Intrinsic D^alpha values computed with a forced containing element.

    Returns (n_alpha, n_pts, ncomp).  Points slightly outside the element are
    evaluated by linear extension of the hats (used for edge traces).
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    mesh = field.mesh
    lam = hat_values(mesh, elem, pts)
    out = np.zeros((len(alphas), pts.shape[0], field.ncomp))
    coeffs = field.coeffs
    Q = field.disc.maps[0].Q
    for v in range(3):
        node = int(mesh.triangles[elem][v])
        rm = field.disc.maps[node]
        a = coeffs[node]
        xi = (pts - rm.center) / rm.rho
        for ia, alpha in enumerate(alphas):
            tab = eval_basis_table(xi, rm.p, alpha) / rm.rho ** sum(alpha)
            for c in range(field.ncomp):
                out[ia, :, c] += lam[:, v] * (tab @ a[c * Q : (c + 1) * Q])
    return out


def eval_field(field: GlobalField, x) -> np.ndarray:
    elem = field.disc.locator.locate(x)
    return eval_in_element(field, elem, x, [(0, 0)])[0, 0]


def eval_intrinsic_derivative(field: GlobalField, x, alpha: tuple[int, int]) -> np.ndarray:
    elem = field.disc.locator.locate(x)
    return eval_in_element(field, elem, x, [alpha])[0, 0]


def eval_intrinsic_laplacian(field: GlobalField, x) -> np.ndarray:
    if field.p < 2:
        raise ValueError(f"laplacian needs degree >= 2, have p={field.p}")
    elem = field.disc.locator.locate(x)
    v = eval_in_element(field, elem, x, [(2, 0), (0, 2)])
    return v[0, 0] + v[1, 0]

def eval_intrinsic_biharmonic(field: GlobalField, x) -> np.ndarray:
    if field.p < 4:
        raise ValueError(f"biharmonic operator needs degree >= 4, have p={field.p}")
    elem = field.disc.locator.locate(x)
    v = eval_in_element(field, elem, x, [(4, 0), (2, 2), (0, 4)])
    return v[0, 0] + 2.0 * v[1, 0] + v[2, 0]


def eval_leibniz_derivatives(
    field: GlobalField,
    elem: int,
    pts: np.ndarray,
    alphas: list[tuple[int, int]],
) -> np.ndarray:
    """True D^alpha of the blended function, with a forced element.

    Unlike the intrinsic tables of ``eval_in_element``, the hat weights are
    differentiated too.  They are linear, so the product rule leaves three
    terms per vertex.  Returns (n_alpha, n_pts, ncomp).
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    mesh = field.mesh
    lam = hat_values(mesh, elem, pts)
    dlam = hat_gradients(mesh, elem)
    out = np.zeros((len(alphas), pts.shape[0], field.ncomp))
    coeffs = field.coeffs
    Q = field.disc.maps[0].Q

    # one stacked basis evaluation per vertex covers every requested order
    # plus the two product-rule shifts
    want: list[tuple[int, int]] = []
    seen = set()
    for ax, ay in alphas:
        for cand in ((ax, ay), (ax - 1, ay), (ax, ay - 1)):
            if cand not in seen and cand[0] >= 0 and cand[1] >= 0:
                seen.add(cand)
                want.append(cand)
    pos = {alpha: i for i, alpha in enumerate(want)}

    for v in range(3):
        node = int(mesh.triangles[elem][v])
        rm = field.disc.maps[node]
        a = coeffs[node]
        xi = (pts - rm.center) / rm.rho
        stack = eval_basis_stack(xi, rm.p, want)
        scale = np.array([rm.rho ** (ax + ay) for ax, ay in want])
        vals = (stack @ a.reshape(field.ncomp, Q).T) / scale[:, None, None]

        for ia, (ax, ay) in enumerate(alphas):
            term = lam[:, v, None] * vals[pos[(ax, ay)]]
            if ax > 0:
                term = term + ax * dlam[v, 0] * vals[pos[(ax - 1, ay)]]
            if ay > 0:
                term = term + ay * dlam[v, 1] * vals[pos[(ax, ay - 1)]]
            out[ia] += term
    return out


def eval_leibniz_in_element(
    field: GlobalField, elem: int, pts: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Values and full product-rule gradients: (n_pts, ncomp), (n_pts, 2, ncomp)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
    mesh = field.mesh
    lam = hat_values(mesh, elem, pts)
    dlam = hat_gradients(mesh, elem)
    vals = np.zeros((pts.shape[0], field.ncomp))
    grads = np.zeros((pts.shape[0], 2, field.ncomp))
    coeffs = field.coeffs
    Q = field.disc.maps[0].Q
    for v in range(3):
        node = int(mesh.triangles[elem][v])
        rm = field.disc.maps[node]
        a = coeffs[node]
        xi = (pts - rm.center) / rm.rho
        t0 = eval_basis_table(xi, rm.p)
        tx = eval_basis_table(xi, rm.p, (1, 0)) / rm.rho
        ty = eval_basis_table(xi, rm.p, (0, 1)) / rm.rho
        for c in range(field.ncomp):
            ac = a[c * Q : (c + 1) * Q]
            U = t0 @ ac
            vals[:, c] += lam[:, v] * U
            grads[:, 0, c] += dlam[v, 0] * U + lam[:, v] * (tx @ ac)
            grads[:, 1, c] += dlam[v, 1] * U + lam[:, v] * (ty @ ac)
    return vals, grads


def eval_global_shape(disc: Discretization, k: int, x, locator: PointLocator | None = None) -> float:
    """Global shape function phi_k(x) for a scalar discretization."""
    if disc.ncomp != 1:
        raise ValueError("global shape evaluation is defined per scalar component")
    loc = locator or disc.locator
    elem = loc.locate(x)
    lam = hat_values(disc.mesh, elem, np.asarray(x))[0]
    phi = 0.0
    for v in range(3):
        node = int(disc.mesh.triangles[elem][v])
        rm = disc.maps[node]
        pos = np.nonzero(rm.stencil == k)[0]
        if pos.size == 0:
            continue
        xi = (np.asarray(x) - rm.center) / rm.rho
        psi = eval_basis_table(xi.reshape(1, 2), rm.p)[0] @ rm.Mu[:, int(pos[0])]
        phi += lam[v] * psi
    return float(phi)


def export_field_csv(field: GlobalField, path: str, n: int = 41) -> None:
    """Sample the field on an n x n grid over the domain box and write CSV."""
    xmin, xmax, ymin, ymax = field.mesh.domain_box
    xs = np.linspace(xmin, xmax, n)
    ys = np.linspace(ymin, ymax, n)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["x", "y"] + [f"u{c}" for c in range(field.ncomp)])
        for y in ys:
            for x in xs:
                try:
                    vals = eval_field(field, (x, y))
                except LocateError:
                    continue
                writer.writerow([repr(float(x)), repr(float(y))] + [repr(float(v)) for v in vals])
