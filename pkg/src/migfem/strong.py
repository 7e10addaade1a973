"""Strong-form collocation: nodal (NC), centroid (CC), and subdomain (SD)
layouts for the Laplace, plane-stress elasticity, and biharmonic operators.

Unknowns are nodal values in component-major order (dof = comp * N + node).
Dirichlet data is imposed by identity-row replacement and exact elimination.
Derivative-type boundary data (normal flux, traction, or the clamped normal
slope) is handled one of three ways:

  ba       absorbed locally: every patch whose hat support touches a flux
           edge takes hard constraint rows at fixed per-edge sample points,
           and the data enters the global system only through the right-hand
           side.  The system stays square.
  penalty  quadratic penalty on sampled boundary residual rows added to a
           square system.
  qr       residual rows appended globally, giving a rectangular system
           solved in the least-squares sense.

Sample points on an edge are fixed by the edge alone (midpoint, or Gauss
points of the unit interval), so every patch that absorbs a given edge
constrains the identical points with identical data; the blended field then
satisfies the constraint exactly at those points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .basis import basis_dim, eval_basis_table
from .cases import ManufacturedCase, Material
from .field import Discretization, GlobalField, eval_in_element, hat_values
from .linalg import LinearSystem, SolveReport, solve_system
from .mesh import Mesh, Topology
from .patches import place_boundary_samples, support_boundary_edges
from .quadrature import gauss_segment, map_rule_to_element, triangle_quadrature
from .recon import (build_ba_cwls_map, build_grown_patch_map,
                    constraint_row_normal_flux, constraint_rows_traction)

METHODS = ("nc", "cc", "sd")
BC_MODES = ("ba", "penalty", "qr")
SD_WEIGHTS = ("hat", "flat")

# Dirichlet side pairs for the mixed benchmark; derivative data goes on the
# remaining two sides.  'all' keeps the whole boundary essential.
SIDE_SPLITS = {
    "all": None,
    "lower-left": ("bottom", "left"),
    "lower-right": ("bottom", "right"),
    "upper-left": ("top", "left"),
    "upper-right": ("top", "right"),
}


@dataclass
class ProblemSpec:
    case: ManufacturedCase
    bc_mode: str = "ba"
    dirichlet_sides: str = "all"       # 'all' or an adjacent side pair
    penalty_beta: float | None = None
    ba_samples_per_edge: int = 1
    qr_samples_per_edge: int = 2
    sd_weight: str = "hat"             # subdomain test weight: own hat or indicator

    def __post_init__(self):
        if self.bc_mode not in BC_MODES:
            raise ValueError(f"unknown bc mode {self.bc_mode!r}")
        if self.sd_weight not in SD_WEIGHTS:
            raise ValueError(f"unknown subdomain weight {self.sd_weight!r}")
        if self.dirichlet_sides not in SIDE_SPLITS:
            raise ValueError(f"unknown boundary split {self.dirichlet_sides!r}")
        if self.case.operator == "biharmonic" and self.dirichlet_sides != "all":
            raise ValueError("the fourth-order benchmark is clamped on the whole boundary")

    @property
    def operator(self) -> str:
        return self.case.operator

    @property
    def material(self) -> Material:
        return self.case.material if self.case.material is not None else Material()


@dataclass
class BoundarySets:
    """Where each kind of boundary data lives.

    For second-order operators the Dirichlet edges and flux edges partition
    the boundary.  The clamped fourth-order problem prescribes both values
    and normal slopes everywhere, so there every node is Dirichlet and every
    boundary edge carries slope data.
    """

    dirichlet_nodes: np.ndarray       # sorted node ids
    flux_edges: np.ndarray            # boundary-edge indices carrying derivative data


def split_boundary(mesh: Mesh, topo: Topology, spec: ProblemSpec) -> BoundarySets:
    nb = topo.n_boundary_edges
    all_edges = np.arange(nb)
    if spec.operator == "biharmonic":
        nodes = np.array(sorted(topo.boundary_nodes), dtype=np.int64)
        return BoundarySets(dirichlet_nodes=nodes, flux_edges=all_edges)

    if spec.dirichlet_sides == "all":
        nodes = np.array(sorted(topo.boundary_nodes), dtype=np.int64)
        return BoundarySets(dirichlet_nodes=nodes, flux_edges=np.empty(0, dtype=np.int64))

    xmin, xmax, ymin, ymax = mesh.domain_box
    tol = 1e-9 * max(xmax - xmin, ymax - ymin)
    mids = 0.5 * (mesh.nodes[topo.bedge_nodes[:, 0]] + mesh.nodes[topo.bedge_nodes[:, 1]])
    sides = {
        "bottom": np.abs(mids[:, 1] - ymin) < tol,
        "top": np.abs(mids[:, 1] - ymax) < tol,
        "left": np.abs(mids[:, 0] - xmin) < tol,
        "right": np.abs(mids[:, 0] - xmax) < tol,
    }
    first, second = SIDE_SPLITS[spec.dirichlet_sides]
    on_dir = sides[first] | sides[second]
    dir_edges = all_edges[on_dir]
    nodes = np.unique(topo.bedge_nodes[dir_edges].ravel())
    return BoundarySets(dirichlet_nodes=nodes, flux_edges=all_edges[~on_dir])


def operator_rows(op: str, p: int, rho: float, xi: np.ndarray,
                  material: Material | None = None) -> np.ndarray:
    """Rows of the PDE operator applied to the scaled local basis.

    xi: (k, 2) scaled coordinates.  Returns (k, ncomp, ncomp*Q).
    """
    xi = np.atleast_2d(xi)
    k = xi.shape[0]
    Q = basis_dim(p)
    if op == "laplace":
        pxx = eval_basis_table(xi, p, (2, 0))
        pyy = eval_basis_table(xi, p, (0, 2))
        return (-(pxx + pyy) / rho**2).reshape(k, 1, Q)
    if op == "biharmonic":
        row = (eval_basis_table(xi, p, (4, 0))
               + 2.0 * eval_basis_table(xi, p, (2, 2))
               + eval_basis_table(xi, p, (0, 4))) / rho**4
        return row.reshape(k, 1, Q)
    if op == "elasticity":
        mat = material if material is not None else Material()
        ep = mat.E / (1.0 - mat.nu**2)
        g = mat.shear_modulus
        pxx = eval_basis_table(xi, p, (2, 0)) / rho**2
        pyy = eval_basis_table(xi, p, (0, 2)) / rho**2
        pxy = eval_basis_table(xi, p, (1, 1)) / rho**2
        out = np.empty((k, 2, 2 * Q))
        out[:, 0, :Q] = -(ep * pxx + g * pyy)
        out[:, 0, Q:] = -(ep * mat.nu + g) * pxy
        out[:, 1, :Q] = -(ep * mat.nu + g) * pxy
        out[:, 1, Q:] = -(g * pxx + ep * pyy)
        return out
    raise ValueError(f"unknown operator {op!r}")


def _patch_constraint_rows(patch, mesh: Mesh, spec: ProblemSpec, p: int
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Absorbed constraint rows and matching data for one sampled patch."""
    case = spec.case
    center = patch.center(mesh)
    rows = []
    data = []
    for s in range(patch.n_samples):
        x_b = patch.sample_points[s]
        n = patch.sample_normals[s]
        if case.ncomp == 1:
            rows.append(constraint_row_normal_flux(x_b, n, center, patch.rho, p))
            data.append(case.normal_flux(x_b[None, :], n)[0])
        else:
            mat = spec.material
            rows.append(constraint_rows_traction(x_b, n, center, patch.rho, p, mat.nu))
            data.extend(case.traction(x_b[None, :], n)[0] / mat.E)
    return np.vstack(rows), np.array(data)


def build_discretization(
    mesh: Mesh,
    topo: Topology,
    p: int,
    s: int | None = None,
    ncomp: int | None = None,
    spec: ProblemSpec | None = None,
    oversample: float = 1.5,
) -> tuple[Discretization, list | None, BoundarySets | None]:
    """Patches plus reconstruction maps, with BA constraints when requested.

    Returns (disc, per-patch absorbed data or None, boundary sets or None).
    """
    if spec is not None:
        ncomp = spec.case.ncomp
    elif ncomp is None:
        ncomp = 1
    bsets = split_boundary(mesh, topo, spec) if spec is not None else None
    absorb = (spec is not None and spec.bc_mode == "ba"
              and bsets is not None and bsets.flux_edges.size > 0)
    flux_set = set(int(e) for e in bsets.flux_edges) if absorb else set()

    patches: list = []
    maps: list = []
    g_list: list | None = [None] * mesh.n_nodes if absorb else None
    for i in range(mesh.n_nodes):
        patch, plain = build_grown_patch_map(i, mesh, topo, p, depth=s,
                                             ncomp=ncomp, oversample=oversample)
        mine = np.array([e for e in support_boundary_edges(patch, topo)
                         if int(e) in flux_set], dtype=np.int64) if absorb \
            else np.empty(0, dtype=np.int64)
        if mine.size:
            patch = place_boundary_samples(patch, mesh, topo, mine, p,
                                           per_edge=spec.ba_samples_per_edge)
            rows, data = _patch_constraint_rows(patch, mesh, spec, p)
            maps.append(build_ba_cwls_map(patch, mesh, p, extra_rows=rows, ncomp=ncomp))
            g_list[i] = data
        else:
            maps.append(plain)
        patches.append(patch)

    disc = Discretization(mesh=mesh, topo=topo, patches=patches, maps=maps,
                          p=p, ncomp=ncomp)
    return disc, g_list, bsets


def dirichlet_vectors(disc: Discretization, bsets: BoundarySets,
                      case: ManufacturedCase) -> tuple[np.ndarray, np.ndarray]:
    N = disc.mesh.n_nodes
    nd = disc.ncomp * N
    mask = np.zeros(nd, dtype=bool)
    vals = np.zeros(nd)
    if bsets.dirichlet_nodes.size:
        ub = case.u(disc.mesh.nodes[bsets.dirichlet_nodes])
        for c in range(disc.ncomp):
            mask[c * N + bsets.dirichlet_nodes] = True
            vals[c * N + bsets.dirichlet_nodes] = ub[:, c]
    return mask, vals


class _Triplets:
    def __init__(self):
        self.rows: list[np.ndarray] = []
        self.cols: list[np.ndarray] = []
        self.vals: list[np.ndarray] = []

    def add(self, row: int, cols: np.ndarray, vals: np.ndarray):
        self.rows.append(np.full(cols.size, row, dtype=np.int64))
        self.cols.append(cols.astype(np.int64, copy=False))
        self.vals.append(np.asarray(vals, dtype=np.float64))

    def matrix(self, shape) -> sp.csr_matrix:
        if not self.rows:
            return sp.csr_matrix(shape)
        return sp.csr_matrix(
            (np.concatenate(self.vals),
             (np.concatenate(self.rows), np.concatenate(self.cols))),
            shape=shape)


def _scatter_block(trip: _Triplets, base_rows: np.ndarray, stencil: np.ndarray,
                   N: int, block: np.ndarray) -> None:
    """block: (ncomp, ncomp*S) acting on component-major stencil unknowns."""
    ncomp = base_rows.size
    S = stencil.size
    for c in range(ncomp):
        for c2 in range(ncomp):
            trip.add(int(base_rows[c]), c2 * N + stencil,
                     block[c, c2 * S:(c2 + 1) * S])


def assemble_nc(disc: Discretization, spec: ProblemSpec, bsets: BoundarySets,
                g: list | None = None) -> LinearSystem:
    """One PDE row per non-Dirichlet node, collocated at the node itself.

    At a node only that node's own patch contributes (the hats of the other
    patches vanish there), so the row is the operator applied to the patch
    map, and absorbed data corrects only the right-hand side.
    """
    mesh, N, ncomp = disc.mesh, disc.mesh.n_nodes, disc.ncomp
    nd = ncomp * N
    mask, dvals = dirichlet_vectors(disc, bsets, spec.case)
    with_identity = spec.bc_mode != "qr"

    f_nodes = spec.case.f(mesh.nodes)
    trip = _Triplets()
    rhs = np.zeros(nd)
    dir_set = set(int(k) for k in bsets.dirichlet_nodes)
    mat = spec.material if spec.operator == "elasticity" else None
    n_pde = 0
    for k in range(N):
        if k in dir_set:
            continue
        rm = disc.maps[k]
        L = operator_rows(spec.operator, rm.p, rm.rho, np.zeros((1, 2)), mat)[0]
        block = L @ rm.Mu
        base = np.array([c * N + k for c in range(ncomp)])
        _scatter_block(trip, base, rm.stencil, N, block)
        corr = np.zeros(ncomp)
        if g is not None and g[k] is not None and rm.n_extra:
            corr = L @ (rm.Mg @ g[k])
        for c in range(ncomp):
            rhs[base[c]] = f_nodes[k, c] - corr[c]
        n_pde += ncomp

    if with_identity:
        for k in bsets.dirichlet_nodes:
            for c in range(ncomp):
                r = c * N + int(k)
                trip.add(r, np.array([r]), np.array([1.0]))
                rhs[r] = dvals[r]
        shape = (nd, nd)
    else:
        # rectangular layout: pde rows only, compacted to the top
        shape = (nd, nd)

    K = trip.matrix(shape)
    if not with_identity:
        keep = np.flatnonzero(np.diff(K.indptr))
        # keep only rows that received entries, preserving order
        K = K[keep]
        rhs = rhs[keep]
    return LinearSystem(matrix=K, rhs=rhs, dirichlet_mask=mask,
                        dirichlet_values=dvals, symmetric=False,
                        meta={"method": "nc", "bc_mode": spec.bc_mode,
                              "n_pde_rows": n_pde,
                              "n_identity_rows": int(mask.sum()) if with_identity else 0})


def _point_rows(disc: Discretization, spec: ProblemSpec, elem: int,
                pts: np.ndarray, g: list | None
                ) -> tuple[list[tuple[int, np.ndarray]], np.ndarray]:
    """Operator rows of the blended field at points inside one element.

    Returns ([(node, (k, ncomp, ncomp*S) block)] for the three vertex patches,
    rhs correction (k, ncomp)) where the correction carries absorbed data.
    """
    mesh, ncomp = disc.mesh, disc.ncomp
    lam = hat_values(mesh, elem, pts)
    mat = spec.material if spec.operator == "elasticity" else None
    out = []
    corr = np.zeros((pts.shape[0], ncomp))
    for v in range(3):
        node = int(mesh.triangles[elem][v])
        rm = disc.maps[node]
        xi = (pts - rm.center) / rm.rho
        L = operator_rows(spec.operator, rm.p, rm.rho, xi, mat)   # (k, ncomp, ncomp*Q)
        Lw = lam[:, v][:, None, None] * L
        block = Lw @ rm.Mu                                         # (k, ncomp, ncomp*S)
        out.append((node, block))
        if g is not None and g[node] is not None and rm.n_extra:
            corr += np.einsum("kcq,q->kc", Lw, rm.Mg @ g[node])
    return out, corr


def assemble_cc(disc: Discretization, spec: ProblemSpec, bsets: BoundarySets,
                g: list | None = None, at_quadrature: bool = False) -> LinearSystem:
    """Cell collocation: operator rows at element centroids (or, behind the
    flag, at interior quadrature points), Dirichlet as appended node rows;
    rectangular, solved in the least-squares sense."""
    mesh, N, ncomp = disc.mesh, disc.mesh.n_nodes, disc.ncomp
    nd = ncomp * N
    mask, dvals = dirichlet_vectors(disc, bsets, spec.case)

    if at_quadrature:
        rule = triangle_quadrature(2)
        pts_of = lambda e: map_rule_to_element(rule, mesh.nodes, mesh.triangles[e])[0]
    else:
        pts_of = lambda e: mesh.nodes[mesh.triangles[e]].mean(axis=0)[None, :]

    trip = _Triplets()
    rhs_list = []
    row = 0
    for e in range(mesh.n_triangles):
        pts = pts_of(e)
        blocks, corr = _point_rows(disc, spec, e, pts, g)
        fv = spec.case.f(pts)
        for q in range(pts.shape[0]):
            base = np.arange(row, row + ncomp)
            for node, block in blocks:
                _scatter_block(trip, base, disc.maps[node].stencil, N, block[q])
            rhs_list.extend(fv[q] - corr[q])
            row += ncomp
    n_pde = row

    for k in bsets.dirichlet_nodes:
        for c in range(ncomp):
            dof = c * N + int(k)
            trip.add(row, np.array([dof]), np.array([1.0]))
            rhs_list.append(dvals[dof])
            row += 1

    K = trip.matrix((row, nd))
    return LinearSystem(matrix=K, rhs=np.array(rhs_list), dirichlet_mask=mask,
                        dirichlet_values=dvals, symmetric=False,
                        meta={"method": "cc", "bc_mode": spec.bc_mode,
                              "n_pde_rows": n_pde,
                              "n_identity_rows": row - n_pde})


def assemble_sd(disc: Discretization, spec: ProblemSpec, bsets: BoundarySets,
                g: list | None = None, quad_degree: int | None = None) -> LinearSystem:
    """Subdomain collocation: each non-Dirichlet node row is the weighted
    average of the operator residual over the elements touching the node.

    The default test weight is the node's own linear hat, which keeps the
    averaging node-centered while the interior block conditions like a
    second-order stiffness matrix.  ``spec.sd_weight = 'flat'`` switches to
    the plain indicator average over the support patch; that variant is
    retained for comparison but its interior block degrades faster under
    refinement (an oscillatory near-null mode survives the flat averaging).

    Element integrals are shared between the (up to three) star rows that use
    them, so the assembly makes a single pass over elements.
    """
    mesh, topo, N, ncomp = disc.mesh, disc.topo, disc.mesh.n_nodes, disc.ncomp
    nd = ncomp * N
    mask, dvals = dirichlet_vectors(disc, bsets, spec.case)
    rule = triangle_quadrature(quad_degree if quad_degree is not None
                               else max(disc.p, 2))
    dir_set = set(int(k) for k in bsets.dirichlet_nodes)
    with_identity = spec.bc_mode != "qr"
    flat = spec.sd_weight == "flat"

    # Per-element integrated blocks keyed by the receiving vertex, then
    # scattered into the adjacent star rows.  For the flat weight every
    # vertex of the element receives the same integral; for the hat weight
    # the quadrature weights are modulated by that vertex's barycentric
    # coordinate (exact hat values at the rule points).
    elem_data: list[dict[int, tuple[list[tuple[int, np.ndarray]], np.ndarray, float]]] = []
    for e in range(mesh.n_triangles):
        pts, w = map_rule_to_element(rule, mesh.nodes, mesh.triangles[e])
        blocks, corr = _point_rows(disc, spec, e, pts, g)
        fv = spec.case.f(pts)
        per_vertex: dict[int, tuple[list[tuple[int, np.ndarray]], np.ndarray, float]] = {}
        for v in range(3):
            recv = int(mesh.triangles[e][v])
            if recv in dir_set:
                continue
            wv = w if flat else w * rule.points[:, v]
            per_vertex[recv] = (
                [(node, np.einsum("k,kcj->cj", wv, block)) for node, block in blocks],
                wv @ (fv - corr),
                float(wv.sum()),
            )
        elem_data.append(per_vertex)

    trip = _Triplets()
    rhs = np.zeros(nd)
    n_pde = 0
    for k in range(N):
        if k in dir_set:
            continue
        elems = topo.node_to_elements[k]
        total = sum(elem_data[e][k][2] for e in elems)
        base = np.array([c * N + k for c in range(ncomp)])
        acc: dict[int, np.ndarray] = {}
        rhs_k = np.zeros(ncomp)
        for e in elems:
            vblocks, vrhs, _ = elem_data[e][k]
            rhs_k += vrhs
            for node, block in vblocks:
                if node in acc:
                    acc[node] = acc[node] + block
                else:
                    acc[node] = block.copy()
        for node, block in acc.items():
            _scatter_block(trip, base, disc.maps[node].stencil, N, block / total)
        rhs[base] = rhs_k / total
        n_pde += ncomp

    if with_identity:
        for k in bsets.dirichlet_nodes:
            for c in range(ncomp):
                r = c * N + int(k)
                trip.add(r, np.array([r]), np.array([1.0]))
                rhs[r] = dvals[r]

    K = trip.matrix((nd, nd))
    if not with_identity:
        keep = np.flatnonzero(np.diff(K.indptr))
        K = K[keep]
        rhs = rhs[keep]
    return LinearSystem(matrix=K, rhs=rhs, dirichlet_mask=mask,
                        dirichlet_values=dvals, symmetric=False,
                        meta={"method": "sd", "bc_mode": spec.bc_mode,
                              "n_pde_rows": n_pde,
                              "n_identity_rows": int(mask.sum()) if with_identity else 0})


def _boundary_residual_rows(disc: Discretization, spec: ProblemSpec,
                            bsets: BoundarySets, per_edge: int
                            ) -> tuple[sp.csr_matrix, np.ndarray, np.ndarray]:
    """Sampled flux/traction residual rows of the blended field.

    Returns (B, data, edge lengths per row) with one row per sample and
    component; B u = data expresses the derivative boundary condition.
    Traction rows are normalized by E, matching the absorbed-constraint
    convention.
    """
    mesh, topo, N, ncomp = disc.mesh, disc.topo, disc.mesh.n_nodes, disc.ncomp
    nd = ncomp * N
    case = spec.case
    mat = spec.material
    ts, _ = gauss_segment(per_edge)

    trip = _Triplets()
    data = []
    hrows = []
    row = 0
    for be in bsets.flux_edges:
        a, b = topo.bedge_nodes[be]
        owner = int(topo.bedge_owner[be])
        n = topo.bedge_normals[be]
        xa, xb = mesh.nodes[a], mesh.nodes[b]
        h_e = float(np.hypot(*(xb - xa)))
        pts = xa + ts[:, None] * (xb - xa)
        lam = hat_values(mesh, owner, pts)
        if ncomp == 1:
            exact = case.normal_flux(pts, n)
        else:
            exact = case.traction(pts, n) / mat.E
        for q in range(pts.shape[0]):
            base = np.arange(row, row + ncomp)
            for v in range(3):
                if abs(lam[q, v]) < 1e-14:
                    continue
                node = int(mesh.triangles[owner][v])
                rm = disc.maps[node]
                if ncomp == 1:
                    rrow = constraint_row_normal_flux(pts[q], n, rm.center, rm.rho, rm.p)
                    rows_q = rrow[None, :]
                else:
                    rows_q = constraint_rows_traction(pts[q], n, rm.center, rm.rho,
                                                      rm.p, mat.nu)
                block = lam[q, v] * (rows_q @ rm.Mu)
                _scatter_block(trip, base, rm.stencil, N, block)
            if ncomp == 1:
                data.append(exact[q])
            else:
                data.extend(exact[q])
            hrows.extend([h_e] * ncomp)
            row += ncomp
    B = trip.matrix((row, nd))
    return B, np.array(data), np.array(hrows)


def default_penalty_beta(spec: ProblemSpec, mesh: Mesh) -> float:
    h = mesh.min_edge_length()
    E = spec.material.E if spec.operator == "elasticity" else 1.0
    if spec.operator == "biharmonic":
        return 10.0 * E / h**3
    return 10.0 * E / h


def apply_neumann_penalty(system: LinearSystem, disc: Discretization,
                          spec: ProblemSpec, bsets: BoundarySets,
                          beta: float | None = None) -> LinearSystem:
    """Add beta * B^T B for the sampled boundary residual rows.

    Columns of fixed unknowns are folded into the data first, so Dirichlet
    identity rows stay exact identity rows and the diagonal conditioning
    proxy reflects only the penalty and PDE scales.
    """
    if beta is None:
        beta = spec.penalty_beta if spec.penalty_beta is not None \
            else default_penalty_beta(spec, disc.mesh)
    B, d, _ = _boundary_residual_rows(disc, spec, bsets,
                                      per_edge=spec.qr_samples_per_edge)
    fixed = system.dirichlet_mask
    if fixed.any():
        d = d - B[:, fixed] @ system.dirichlet_values[fixed]
        keepcols = sp.diags((~fixed).astype(np.float64))
        B = B @ keepcols
    K = (system.matrix + beta * (B.T @ B)).tocsr()
    rhs = system.rhs + beta * (B.T @ d)
    meta = dict(system.meta)
    meta.update(bc_mode="penalty", penalty_beta=beta, n_penalty_rows=B.shape[0])
    return LinearSystem(matrix=K, rhs=rhs, dirichlet_mask=system.dirichlet_mask,
                        dirichlet_values=system.dirichlet_values,
                        symmetric=system.symmetric, meta=meta)


def apply_neumann_qr(system: LinearSystem, disc: Discretization,
                     spec: ProblemSpec, bsets: BoundarySets) -> LinearSystem:
    """Append 1/h-weighted boundary residual rows; the result is rectangular
    and is solved in the least-squares sense with Dirichlet columns folded."""
    B, d, h = _boundary_residual_rows(disc, spec, bsets,
                                      per_edge=spec.qr_samples_per_edge)
    scale = sp.diags(1.0 / h)
    K = sp.vstack([system.matrix, scale @ B]).tocsr()
    rhs = np.concatenate([system.rhs, d / h])
    meta = dict(system.meta)
    meta.update(bc_mode="qr", n_appended=B.shape[0])
    return LinearSystem(matrix=K, rhs=rhs, dirichlet_mask=system.dirichlet_mask,
                        dirichlet_values=system.dirichlet_values,
                        symmetric=False, meta=meta)


_ASSEMBLERS = {"nc": assemble_nc, "cc": assemble_cc, "sd": assemble_sd}


def assemble(method: str, disc: Discretization, spec: ProblemSpec,
             bsets: BoundarySets, g: list | None = None) -> LinearSystem:
    if method not in _ASSEMBLERS:
        raise ValueError(f"unknown strong-form method {method!r}")
    system = _ASSEMBLERS[method](disc, spec, bsets, g)
    if bsets.flux_edges.size and spec.bc_mode == "penalty":
        system = apply_neumann_penalty(system, disc, spec, bsets)
    elif bsets.flux_edges.size and spec.bc_mode == "qr":
        system = apply_neumann_qr(system, disc, spec, bsets)
    return system


def solve_problem(mesh: Mesh, topo: Topology, p: int, s: int | None,
                  spec: ProblemSpec, method: str
                  ) -> tuple[GlobalField, SolveReport, Discretization, LinearSystem]:
    disc, g, bsets = build_discretization(mesh, topo, p, s=s, spec=spec)
    system = assemble(method, disc, spec, bsets, g)
    report = solve_system(system)
    N = mesh.n_nodes
    nodal = report.u.reshape(disc.ncomp, N).T.copy()
    field = GlobalField(disc=disc, u=nodal, g=g)
    return field, report, disc, system


def boundary_flux_residual(field: GlobalField, spec: ProblemSpec,
                           bsets: BoundarySets) -> tuple[float, float]:
    """(RMS, max) residual of the derivative boundary condition, measured at
    the per-edge midpoints with intrinsic derivatives of the solved field."""
    disc = field.disc
    mesh, topo = disc.mesh, disc.topo
    case = spec.case
    mat = spec.material
    res = []
    for be in bsets.flux_edges:
        a, b = topo.bedge_nodes[be]
        owner = int(topo.bedge_owner[be])
        n = topo.bedge_normals[be]
        pt = 0.5 * (mesh.nodes[a] + mesh.nodes[b])[None, :]
        tab = eval_in_element(field, owner, pt, [(1, 0), (0, 1)])
        if disc.ncomp == 1:
            got = n[0] * tab[0, 0, 0] + n[1] * tab[1, 0, 0]
            want = case.normal_flux(pt, n)[0]
            res.append(got - want)
        else:
            ep = mat.E / (1.0 - mat.nu**2)
            gs = mat.shear_modulus
            u1x, u2x = tab[0, 0]
            u1y, u2y = tab[1, 0]
            sxx = ep * (u1x + mat.nu * u2y)
            syy = ep * (u2y + mat.nu * u1x)
            sxy = gs * (u1y + u2x)
            got = np.array([sxx * n[0] + sxy * n[1], sxy * n[0] + syy * n[1]]) / mat.E
            want = case.traction(pt, n)[0] / mat.E
            res.extend(got - want)
    if not res:
        return 0.0, 0.0
    r = np.array(res)
    return float(np.sqrt(np.mean(r**2))), float(np.abs(r).max())
