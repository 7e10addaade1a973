"""Weak-form Galerkin assembly on the blended reconstruction space.

The global shape functions are the hat-blended patch polynomials built from
plain (unconstrained) scalar fits; both displacement components share them.
Stiffness and load integrals use element quadrature of degree 2p.  Dirichlet
data enters either through a symmetric interior-penalty boundary form on the
Dirichlet edges, or by strong elimination plus the exact boundary traction
functional (the trial functions of interior nodes do not vanish on the
boundary, so the traction term is part of the consistent load either way).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .basis import basis_dim, eval_basis_table
from .cases import ManufacturedCase, Material
from .field import Discretization, GlobalField, hat_gradients, hat_values
from .linalg import LinearSystem, SolveReport, solve_system
from .mesh import Mesh, Topology
from .quadrature import gauss_segment, map_rule_to_element, triangle_quadrature
from .recon import build_all_patch_maps
from .strong import BoundarySets, dirichlet_vectors, split_boundary


@dataclass
class WeakOptions:
    dirichlet_mode: str = "nitsche"    # 'nitsche' | 'elim'
    beta_factor: float = 10.0          # boundary-penalty scale: beta = factor*E*p^2/h_e
    quad_degree: int | None = None     # volume rule degree, default 2p
    chunk_elements: int = 500

    def __post_init__(self):
        if self.dirichlet_mode not in ("nitsche", "elim"):
            raise ValueError(f"unknown dirichlet mode {self.dirichlet_mode!r}")


class _ElementBasis:
    """Shape values and gradients of all active nodes on one element."""

    __slots__ = ("active", "phi", "gx", "gy")

    def __init__(self, disc: Discretization, elem: int, pts: np.ndarray):
        mesh = disc.mesh
        Q = basis_dim(disc.p)
        tri = mesh.triangles[elem]
        stencils = [disc.maps[int(v)].stencil for v in tri]
        self.active = np.unique(np.concatenate(stencils))
        nq, na = pts.shape[0], self.active.size
        self.phi = np.zeros((nq, na))
        self.gx = np.zeros((nq, na))
        self.gy = np.zeros((nq, na))
        lam = hat_values(mesh, elem, pts)
        dlam = hat_gradients(mesh, elem)
        for v in range(3):
            rm = disc.maps[int(tri[v])]
            S = rm.stencil.size
            Mu = rm.Mu[:Q, :S]          # scalar block of the (possibly kron) map
            cols = np.searchsorted(self.active, rm.stencil)
            xi = (pts - rm.center) / rm.rho
            psi = eval_basis_table(xi, disc.p, (0, 0)) @ Mu
            psix = (eval_basis_table(xi, disc.p, (1, 0)) @ Mu) / rm.rho
            psiy = (eval_basis_table(xi, disc.p, (0, 1)) @ Mu) / rm.rho
            nv = lam[:, v][:, None]
            self.phi[:, cols] += nv * psi
            self.gx[:, cols] += dlam[v, 0] * psi + nv * psix
            self.gy[:, cols] += dlam[v, 1] * psi + nv * psiy


def _material_of(case: ManufacturedCase) -> Material:
    return case.material if case.material is not None else Material()


def _traction_rows(eb: _ElementBasis, q: int, n: np.ndarray, mat: Material,
                   ncomp: int) -> np.ndarray:
    """(ncomp, ncomp*na) boundary flux/traction of the trial field at one
    quadrature point; vector dofs are component-major over the active set."""
    na = eb.active.size
    gx, gy = eb.gx[q], eb.gy[q]
    if ncomp == 1:
        return (n[0] * gx + n[1] * gy)[None, :]
    d11 = mat.E / (1.0 - mat.nu**2)
    d12 = mat.nu * d11
    d33 = mat.shear_modulus
    rows = np.zeros((2, 2 * na))
    rows[0, :na] = n[0] * d11 * gx + n[1] * d33 * gy
    rows[0, na:] = n[0] * d12 * gy + n[1] * d33 * gx
    rows[1, :na] = n[1] * d12 * gx + n[0] * d33 * gy
    rows[1, na:] = n[1] * d11 * gy + n[0] * d33 * gx
    return rows


def _exact_traction(case: ManufacturedCase, pts: np.ndarray, n: np.ndarray
                    ) -> np.ndarray:
    if case.ncomp == 1:
        return case.normal_flux(pts, n)[:, None]
    return case.traction(pts, n)


def assemble_galerkin(disc: Discretization, case: ManufacturedCase,
                      bsets: BoundarySets, options: WeakOptions | None = None
                      ) -> LinearSystem:
    """Symmetric stiffness and consistent load on the blended space.

    Returns a square system; in 'elim' mode Dirichlet rows are identity rows
    and the exact-traction boundary functional completes the load, in
    'nitsche' mode the Dirichlet edges carry the symmetric consistency and
    penalty terms and no unknowns are fixed.
    """
    if case.operator == "biharmonic":
        raise ValueError("the weak form here covers second-order operators only")
    options = options or WeakOptions()
    mesh, topo, N, ncomp = disc.mesh, disc.topo, disc.mesh.n_nodes, disc.ncomp
    nd = ncomp * N
    mat = _material_of(case)
    if options.quad_degree is not None and options.quad_degree < 2 * disc.p:
        warnings.warn(
            f"volume quadrature degree {options.quad_degree} is below 2p = "
            f"{2 * disc.p}; stiffness entries will carry integration error",
            stacklevel=2)
    rule = triangle_quadrature(options.quad_degree if options.quad_degree
                               is not None else 2 * disc.p)
    nitsche = options.dirichlet_mode == "nitsche"

    if ncomp == 2:
        d11 = mat.E / (1.0 - mat.nu**2)
        d12 = mat.nu * d11
        d33 = mat.shear_modulus

    dir_edges = _dirichlet_edges(mesh, topo, bsets)
    owner_edges: dict[int, list[int]] = {}
    for be in range(topo.n_boundary_edges):
        owner_edges.setdefault(int(topo.bedge_owner[be]), []).append(be)
    flux_set = set(int(e) for e in bsets.flux_edges)
    dir_set = set(int(e) for e in dir_edges)
    nq_edge = disc.p + 1

    K = sp.csr_matrix((nd, nd))
    rhs = np.zeros(nd)
    rows_c: list[np.ndarray] = []
    cols_c: list[np.ndarray] = []
    vals_c: list[np.ndarray] = []
    pending = 0

    def flush():
        nonlocal K, rows_c, cols_c, vals_c, pending
        if not rows_c:
            return
        chunk = sp.csr_matrix(
            (np.concatenate(vals_c),
             (np.concatenate(rows_c), np.concatenate(cols_c))), shape=(nd, nd))
        K = K + chunk
        rows_c, cols_c, vals_c = [], [], []
        pending = 0

    ts, tw = gauss_segment(nq_edge)
    for elem in range(mesh.n_triangles):
        pts, w = map_rule_to_element(rule, mesh.nodes, mesh.triangles[elem])
        eb = _ElementBasis(disc, elem, pts)
        na = eb.active.size
        if ncomp == 1:
            dofs = eb.active
            ke = (eb.gx.T * w) @ eb.gx + (eb.gy.T * w) @ eb.gy
        else:
            dofs = np.concatenate([eb.active, N + eb.active])
            exx = (eb.gx.T * w) @ eb.gx
            eyy = (eb.gy.T * w) @ eb.gy
            exy = (eb.gx.T * w) @ eb.gy
            ke = np.empty((2 * na, 2 * na))
            ke[:na, :na] = d11 * exx + d33 * eyy
            ke[:na, na:] = d12 * exy + d33 * exy.T
            ke[na:, :na] = ke[:na, na:].T
            ke[na:, na:] = d11 * eyy + d33 * exx
        fv = case.f(pts)
        for c in range(ncomp):
            rhs[c * N + eb.active] += eb.phi.T @ (w * fv[:, c])

        for be in owner_edges.get(elem, ()):
            a, b = topo.bedge_nodes[be]
            xa, xb = mesh.nodes[a], mesh.nodes[b]
            h_e = float(np.hypot(*(xb - xa)))
            n = topo.bedge_normals[be]
            epts = xa + ts[:, None] * (xb - xa)
            ew = tw * h_e
            ebb = _ElementBasis(disc, elem, epts)
            same = ebb.active.size == na and np.array_equal(ebb.active, eb.active)
            if not same:
                raise AssertionError("edge basis active set must match the element")
            if be in flux_set:
                tbar = _exact_traction(case, epts, n)
                for c in range(ncomp):
                    rhs[c * N + eb.active] += ebb.phi.T @ (ew * tbar[:, c])
                continue
            if be not in dir_set:
                continue
            ubar = case.u(epts)
            if nitsche:
                beta = options.beta_factor * mat.E * disc.p**2 / h_e
                for q in range(nq_edge):
                    trow = _traction_rows(ebb, q, n, mat, ncomp)
                    phi_q = np.zeros((ncomp, ncomp * na))
                    for c in range(ncomp):
                        phi_q[c, c * na:(c + 1) * na] = ebb.phi[q]
                    sym = phi_q.T @ trow + trow.T @ phi_q
                    ke -= ew[q] * sym
                    ke += (beta * ew[q]) * (phi_q.T @ phi_q)
                    load = (-trow.T + beta * phi_q.T) @ ubar[q] * ew[q]
                    for c in range(ncomp):
                        rhs[c * N + eb.active] += load[c * na:(c + 1) * na]
            else:
                # consistent traction functional from the manufactured field
                tbar = _exact_traction(case, epts, n)
                for c in range(ncomp):
                    rhs[c * N + eb.active] += ebb.phi.T @ (ew * tbar[:, c])

        rows_c.append(np.repeat(dofs, dofs.size))
        cols_c.append(np.tile(dofs, dofs.size))
        vals_c.append(ke.ravel())
        pending += 1
        if pending >= options.chunk_elements:
            flush()
    flush()

    if nitsche:
        mask = np.zeros(nd, dtype=bool)
        vals = np.zeros(nd)
        meta = {"method": "wg", "dirichlet_mode": "nitsche", "n_pde_rows": nd}
        return LinearSystem(matrix=K.tocsr(), rhs=rhs, dirichlet_mask=mask,
                            dirichlet_values=vals, symmetric=True, meta=meta)

    mask, vals = dirichlet_vectors(disc, bsets, case)
    K = K.tolil()
    fixed = np.flatnonzero(mask)
    for r in fixed:
        K.rows[r] = [int(r)]
        K.data[r] = [1.0]
        rhs[r] = vals[r]
    meta = {"method": "wg", "dirichlet_mode": "elim",
            "n_identity_rows": int(mask.sum())}
    return LinearSystem(matrix=K.tocsr(), rhs=rhs, dirichlet_mask=mask,
                        dirichlet_values=vals, symmetric=True, meta=meta)


def _dirichlet_edges(mesh: Mesh, topo: Topology, bsets: BoundarySets) -> np.ndarray:
    flux = set(int(e) for e in bsets.flux_edges)
    return np.array([e for e in range(topo.n_boundary_edges) if e not in flux],
                    dtype=np.int64)


def solve_weak(mesh: Mesh, topo: Topology, p: int, s: int | None,
               case: ManufacturedCase, dirichlet_sides: str = "all",
               options: WeakOptions | None = None
               ) -> tuple[GlobalField, SolveReport, Discretization, LinearSystem]:
    patches, maps = build_all_patch_maps(mesh, topo, p, depth=s, ncomp=case.ncomp)
    disc = Discretization(mesh=mesh, topo=topo, patches=patches, maps=maps,
                          p=p, ncomp=case.ncomp)
    bsets = _weak_boundary_sets(mesh, topo, case, dirichlet_sides)
    system = assemble_galerkin(disc, case, bsets, options)
    report = solve_system(system)
    nodal = report.u.reshape(case.ncomp, mesh.n_nodes).T.copy()
    field = GlobalField(disc=disc, u=nodal)
    return field, report, disc, system


def _weak_boundary_sets(mesh: Mesh, topo: Topology, case: ManufacturedCase,
                        dirichlet_sides: str) -> BoundarySets:
    from .strong import ProblemSpec
    spec = ProblemSpec(case=case, bc_mode="qr", dirichlet_sides=dirichlet_sides)
    return split_boundary(mesh, topo, spec)
