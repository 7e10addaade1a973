"""Constrained weighted least-squares reconstruction maps on nodal patches.

Each patch carries a degree-p polynomial fit of the nodal values over its
stencil, phrased in scaled local coordinates xi = (x - x_star)/rho.  The fit
interpolates the star node exactly (a KKT equality constraint), and may absorb
additional linear constraint rows sampling boundary data (normal flux or
traction).  The result is a pair of linear maps

    a = Mu @ u_stencil + Mg @ g,

so every derivative of the local polynomial is a fixed linear functional of
the shared nodal unknowns and the absorbed boundary data.  Mg only ever feeds
right-hand sides: the global matrix never depends on g.

Vector-valued fields stack coefficients and data component-major, so a
two-component map acts on [u_x(stencil); u_y(stencil)].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .basis import basis_dim, eval_basis, eval_basis_table
from .linalg import RankDeficiencyError
from .mesh import Mesh
from .patches import Patch, build_patch, default_layer_depth


class AdmissibilityError(RuntimeError):
    """A boundary-absorption map violates one of its admissibility conditions."""

    def __init__(self, condition: int, msg: str):
        super().__init__(f"admissibility condition {condition} violated: {msg}")
        self.condition = condition


def weight_kernel(d, rho: float, power: int = 3, margin: float = 1.05):
    """Cubic-decay distance weight, clamped at zero.

    The margin keeps the farthest stencil node at a small positive weight
    ((1 - 1/1.05)^3, about 1.1e-4) instead of exactly zero.
    """
    t = 1.0 - np.asarray(d, dtype=np.float64) / (margin * rho)
    return np.clip(t, 0.0, None) ** power


@dataclass(eq=False)
class ReconMap:
    p: int
    ncomp: int
    stencil: np.ndarray
    center: np.ndarray
    rho: float
    Mu: np.ndarray                 # (ncomp*Q, ncomp*S)
    Mg: np.ndarray                 # (ncomp*Q, m)
    constraints: np.ndarray        # (ncomp + m, ncomp*Q), star rows first
    weights: np.ndarray            # (S,)
    xi_stencil: np.ndarray         # (S, 2) stencil nodes in scaled coordinates
    kkt_condition: float

    @property
    def Q(self) -> int:
        return basis_dim(self.p)

    @property
    def n_extra(self) -> int:
        return self.Mg.shape[1]

    @property
    def eta(self) -> float:
        """Constraint load ratio: constraint rows over coefficient count."""
        return self.constraints.shape[0] / (self.ncomp * self.Q)


def _patch_geometry(patch: Patch, mesh: Mesh, p: int, power: int, margin: float):
    xi = (mesh.nodes[patch.stencil] - mesh.nodes[patch.star]) / patch.rho
    P = eval_basis_table(xi, p)
    d = np.hypot(*(mesh.nodes[patch.stencil] - mesh.nodes[patch.star]).T)
    w = weight_kernel(d, patch.rho, power=power, margin=margin)
    return P, w, xi


def build_ba_cwls_map(
    patch: Patch,
    mesh: Mesh,
    p: int,
    extra_rows: np.ndarray | None = None,
    ncomp: int = 1,
    power: int = 3,
    margin: float = 1.05,
    consistency_tol: float = 1e-8,
) -> ReconMap:
    """Constrained fit with star interpolation plus absorbed boundary rows.

    extra_rows is (m, ncomp*Q) over the stacked coefficient vector; pass None
    (or an empty array) to recover the plain CWLS map.  Admissibility checks:
    (1) constraint count ncomp + m <= ncomp*Q, (2) the stacked constraint
    matrix has full row rank, (3) the finished map reproduces every degree-p
    polynomial consistent with its own constraints.
    """
    Q = basis_dim(p)
    S = patch.stencil.size
    P, w, xi = _patch_geometry(patch, mesh, p, power, margin)
    c = eval_basis(np.zeros(2), p)     # star row: p(0)

    m = 0 if extra_rows is None else np.atleast_2d(extra_rows).shape[0]
    if m:
        extra_rows = np.atleast_2d(extra_rows)
        if extra_rows.shape[1] != ncomp * Q:
            raise ValueError(
                f"constraint rows have width {extra_rows.shape[1]}, expected {ncomp * Q}"
            )

    if ncomp + m > ncomp * Q:
        raise AdmissibilityError(
            1,
            f"patch {patch.star}: {ncomp + m} constraint rows for {ncomp * Q} coefficients",
        )

    star_rows = np.kron(np.eye(ncomp), c)
    C = np.vstack([star_rows, extra_rows]) if m else star_rows
    if np.linalg.matrix_rank(C) < C.shape[0]:
        raise AdmissibilityError(
            2, f"patch {patch.star}: constraint matrix is row-rank deficient"
        )

    # Constrained weighted fit by the null-space method.  Solving through the
    # stationarity system would square the fit conditioning, which one-sided
    # boundary stencils cannot afford at higher degree; here the constraints
    # are eliminated by an orthogonal change of variables and the reduced
    # problem is an ordinary least-squares solve on W P Z.
    nQ = ncomp * Q
    r = C.shape[0]
    WP = np.kron(np.eye(ncomp), w[:, None] * P)          # (ncomp*S, nQ)
    Qf, Rf = np.linalg.qr(C.T, mode="complete")
    R1 = Rf[:r, :]
    part = Qf[:, :r] @ sla.solve_triangular(R1, np.eye(r), trans="T")
    Z = Qf[:, r:]

    # stacked data selectors: columns are [stencil values | absorbed data]
    D = np.zeros((r, ncomp * S + m))
    T = np.zeros((ncomp * S, ncomp * S + m))
    for comp in range(ncomp):
        D[comp, comp * S] = 1.0                          # star value
        T[comp * S:(comp + 1) * S, comp * S:(comp + 1) * S] = np.diag(w)
    if m:
        D[ncomp:, ncomp * S:] = np.eye(m)

    A0 = part @ D                                        # particular solutions
    G = WP @ Z
    Y, _, rank, _ = sla.lstsq(G, T - WP @ A0, lapack_driver="gelsd")
    if rank < G.shape[1]:
        raise RankDeficiencyError(
            f"patch {patch.star}: degenerate fit, reduced rank {rank} of "
            f"{G.shape[1]} (stencil size {S}, degree {p})",
            rank=rank,
        )
    sol = A0 + Z @ Y
    Mu = sol[:, : ncomp * S]
    Mg = sol[:, ncomp * S:]

    # diagnostic only: condition of the stationarity system this fit realizes
    A_full = WP.T @ WP
    kkt = np.block([[A_full, C.T], [C, np.zeros((r, r))]])
    cond = float(np.linalg.cond(kkt))

    rmap = ReconMap(
        p=p,
        ncomp=ncomp,
        stencil=patch.stencil.copy(),
        center=mesh.nodes[patch.star].copy(),
        rho=patch.rho,
        Mu=Mu,
        Mg=Mg,
        constraints=C,
        weights=w,
        xi_stencil=xi,
        kkt_condition=cond,
    )
    err = _consistency_residual(rmap, P)
    if err > consistency_tol:
        raise AdmissibilityError(
            3,
            f"patch {patch.star}: polynomial consistency residual {err:.3e}",
        )
    return rmap


def build_cwls_map(
    patch: Patch,
    mesh: Mesh,
    p: int,
    ncomp: int = 1,
    power: int = 3,
    margin: float = 1.05,
) -> ReconMap:
    """Plain constrained fit: star interpolation only."""
    return build_ba_cwls_map(patch, mesh, p, None, ncomp=ncomp, power=power, margin=margin)


def build_grown_patch_map(
    star: int,
    mesh: Mesh,
    topo,
    p: int,
    depth: int | None = None,
    ncomp: int = 1,
    oversample: float = 1.5,
    extra_layers: int = 3,
) -> tuple[Patch, ReconMap]:
    """Patch plus plain map, deepening the patch while the fit is degenerate.

    A stencil can satisfy the size target yet still fail unisolvency: on a
    uniform lattice a boundary stencil confined to p or fewer grid lines is
    annihilated by a degree-p product of line equations, so the normal matrix
    drops rank.  Marginal near-degeneracy shows up instead as a failed
    degree-p reproduction check.  Growing one more layer breaks the
    containment either way.  The returned map is always the plain one;
    constrained variants built on the same patch inherit the regular geometry.
    """
    base = depth if depth is not None else default_layer_depth(p)
    last_err: Exception | None = None
    for extra in range(extra_layers + 1):
        patch = build_patch(star, base + extra, mesh, topo, p, oversample)
        try:
            return patch, build_cwls_map(patch, mesh, p, ncomp=ncomp)
        except (RankDeficiencyError, AdmissibilityError) as err:
            last_err = err
    raise RankDeficiencyError(
        f"patch {star}: fit is degenerate even after {extra_layers} extra layers "
        f"({last_err})")


def build_all_patch_maps(
    mesh: Mesh,
    topo,
    p: int,
    depth: int | None = None,
    ncomp: int = 1,
    oversample: float = 1.5,
) -> tuple[list[Patch], list[ReconMap]]:
    """Grown patches and plain maps for every node."""
    patches: list[Patch] = []
    maps: list[ReconMap] = []
    for i in range(mesh.n_nodes):
        patch, rmap = build_grown_patch_map(i, mesh, topo, p, depth=depth,
                                            ncomp=ncomp, oversample=oversample)
        patches.append(patch)
        maps.append(rmap)
    return patches, maps


def _consistency_residual(rmap: ReconMap, P: np.ndarray) -> float:
    """Worst coefficient error of the map applied to its own polynomials.

    For each stacked basis vector e_j, data sampled from that polynomial is
    u = P e_j per component and g = constraints e_j; a consistent map returns
    e_j exactly.
    """
    Q, ncomp = rmap.Q, rmap.ncomp
    E = np.eye(ncomp * Q)
    # stencil data for all probes at once
    U = np.zeros((rmap.Mu.shape[1], ncomp * Q))
    S = rmap.stencil.size
    for comp in range(ncomp):
        U[comp * S : (comp + 1) * S, :] = P @ E[comp * Q : (comp + 1) * Q, :]
    G = rmap.constraints[ncomp:, :] @ E          # (m, ncomp*Q)
    A_rec = rmap.Mu @ U + rmap.Mg @ G
    return float(np.abs(A_rec - E).max())


def constraint_row_normal_flux(
    x_b: np.ndarray, normal: np.ndarray, center: np.ndarray, rho: float, p: int
) -> np.ndarray:
    """Row realizing n . grad of the local polynomial at a boundary point."""
    xi = (np.asarray(x_b) - center) / rho
    px = eval_basis(xi, p, (1, 0))
    py = eval_basis(xi, p, (0, 1))
    return (normal[0] * px + normal[1] * py) / rho


def constraint_rows_traction(
    x_b: np.ndarray,
    normal: np.ndarray,
    center: np.ndarray,
    rho: float,
    p: int,
    nu: float,
) -> np.ndarray:
    """Two rows realizing the plane-stress traction at a boundary point,
    divided by E so the rows stay commensurate with the unit-scale fit.

    Acts on stacked coefficients [a_x; a_y]; the matching data is sigma.n / E.
    """
    xi = (np.asarray(x_b) - center) / rho
    px = eval_basis(xi, p, (1, 0)) / rho
    py = eval_basis(xi, p, (0, 1)) / rho
    ep = 1.0 / (1.0 - nu**2)       # E'/E
    g = 1.0 / (2.0 * (1.0 + nu))   # G/E
    nx, ny = normal
    rows = np.zeros((2, 2 * px.size))
    rows[0, : px.size] = ep * nx * px + g * ny * py
    rows[0, px.size :] = ep * nu * nx * py + g * ny * px
    rows[1, : px.size] = g * nx * py + ep * nu * ny * px
    rows[1, px.size :] = g * nx * px + ep * ny * py
    return rows


def patch_coefficients(rmap: ReconMap, u_stencil: np.ndarray, g: np.ndarray | None = None,
                       refine: bool = True) -> np.ndarray:
    """Stacked polynomial coefficients from stencil data (component-major).

    A single residual-correction pass follows the direct map product.  The
    map is linear, so feeding the data residual back through it solves the
    same constrained fit for the leftover error; that recovers the digits
    the first product loses to conditioning, which high-order derivative
    diagnostics otherwise see amplified by 1/rho^m.
    """
    if rmap.n_extra and g is None:
        raise ValueError("map absorbs boundary data but g was not supplied")
    a = rmap.Mu @ u_stencil
    if rmap.n_extra:
        a = a + rmap.Mg @ g
    if not refine:
        return a
    S = rmap.stencil.size
    Q = rmap.Q
    P = eval_basis_table(rmap.xi_stencil, rmap.p)
    r = np.empty_like(u_stencil, dtype=np.float64)
    for c in range(rmap.ncomp):
        r[c * S : (c + 1) * S] = u_stencil[c * S : (c + 1) * S] - P @ a[c * Q : (c + 1) * Q]
    delta = rmap.Mu @ r
    if rmap.n_extra:
        t = g - rmap.constraints[rmap.ncomp :] @ a
        delta = delta + rmap.Mg @ t
    return a + delta


def eval_local(
    rmap: ReconMap,
    u_stencil: np.ndarray,
    g: np.ndarray | None,
    x: np.ndarray,
    alpha: tuple[int, int] = (0, 0),
) -> np.ndarray:
    """D^alpha of the local reconstruction at physical points x ((k,2) or (2,)).

    Returns (k, ncomp).
    """
    a = patch_coefficients(rmap, u_stencil, g)
    pts = np.atleast_2d(np.asarray(x, dtype=np.float64))
    xi = (pts - rmap.center) / rmap.rho
    tab = eval_basis_table(xi, rmap.p, alpha) / rmap.rho ** sum(alpha)
    Q = rmap.Q
    return np.column_stack([tab @ a[c * Q : (c + 1) * Q] for c in range(rmap.ncomp)])


@dataclass
class AdmissibilityReport:
    star: int
    eta: float
    n_extra: int
    kkt_condition: float
    eps_poly: float
    eps_bc: float


def admissibility_report(
    patch: Patch,
    rmap: ReconMap,
    mesh: Mesh,
    n_points: int = 10,
    seed: int = 0,
) -> AdmissibilityReport:
    """Probe the finished map with its own degree-p polynomial family.

    eps_poly: worst reconstruction error of the probes at seeded random points
    inside the patch.  eps_bc: worst constraint residual of the probe
    reconstructions (the post-solve analogue is computed by the study driver
    from solved data).
    """
    rng = np.random.default_rng(seed + patch.star)
    # random evaluation points inside randomly chosen patch elements
    els = rng.integers(0, patch.elements.size, size=n_points)
    b = rng.dirichlet(np.ones(3), size=n_points)
    tri = mesh.triangles[patch.elements[els]]
    pts = np.einsum("kj,kjd->kd", b, mesh.nodes[tri])

    p, Q, ncomp = rmap.p, rmap.Q, rmap.ncomp
    S = rmap.stencil.size
    xi_sten = (mesh.nodes[rmap.stencil] - rmap.center) / rmap.rho
    P = eval_basis_table(xi_sten, p)
    xi_pts = (pts - rmap.center) / rmap.rho
    T = eval_basis_table(xi_pts, p)

    E = np.eye(ncomp * Q)
    U = np.zeros((ncomp * S, ncomp * Q))
    for comp in range(ncomp):
        U[comp * S : (comp + 1) * S, :] = P @ E[comp * Q : (comp + 1) * Q, :]
    G = rmap.constraints[ncomp:, :] @ E
    A_rec = rmap.Mu @ U + rmap.Mg @ G            # columns: recovered coeffs per probe

    eps_poly = 0.0
    for c in range(ncomp):
        block = A_rec[c * Q : (c + 1) * Q, :] - E[c * Q : (c + 1) * Q, :]
        eps_poly = max(eps_poly, float(np.abs(T @ block).max()))
    rhs_true = rmap.constraints @ E
    eps_bc = float(np.abs(rmap.constraints @ A_rec - rhs_true).max())
    return AdmissibilityReport(
        star=patch.star,
        eta=rmap.eta,
        n_extra=rmap.n_extra,
        kkt_condition=rmap.kkt_condition,
        eps_poly=eps_poly,
        eps_bc=eps_bc,
    )


_MAP_MAGIC = b"RMAP0002"


def save_recon_maps(maps: list[ReconMap], path: str) -> None:
    """Versioned little-endian binary dump of reconstruction maps."""
    with open(path, "wb") as f:
        f.write(_MAP_MAGIC)
        f.write(np.array([len(maps)], dtype="<i8").tobytes())
        for rm in maps:
            S = rm.stencil.size
            m = rm.n_extra
            head = np.array([rm.p, rm.ncomp, S, m], dtype="<i8")
            f.write(head.tobytes())
            f.write(np.array([rm.rho, rm.kkt_condition], dtype="<f8").tobytes())
            f.write(rm.center.astype("<f8").tobytes())
            f.write(rm.stencil.astype("<i8").tobytes())
            f.write(np.ascontiguousarray(rm.Mu, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(rm.Mg, dtype="<f8").tobytes())
            f.write(np.ascontiguousarray(rm.constraints, dtype="<f8").tobytes())
            f.write(rm.weights.astype("<f8").tobytes())
            f.write(np.ascontiguousarray(rm.xi_stencil, dtype="<f8").tobytes())


def load_recon_maps(path: str) -> list[ReconMap]:
    with open(path, "rb") as f:
        magic = f.read(len(_MAP_MAGIC))
        if magic != _MAP_MAGIC:
            raise ValueError(f"not a reconstruction-map file: magic {magic!r}")
        (count,) = np.frombuffer(f.read(8), dtype="<i8")
        maps = []
        for _ in range(count):
            p, ncomp, S, m = np.frombuffer(f.read(32), dtype="<i8")
            rho, cond = np.frombuffer(f.read(16), dtype="<f8")
            center = np.frombuffer(f.read(16), dtype="<f8").copy()
            stencil = np.frombuffer(f.read(8 * S), dtype="<i8").copy()
            Q = basis_dim(int(p))
            Mu = np.frombuffer(f.read(8 * ncomp * Q * ncomp * S), dtype="<f8").reshape(
                ncomp * Q, ncomp * S
            ).copy()
            Mg = np.frombuffer(f.read(8 * ncomp * Q * m), dtype="<f8").reshape(
                ncomp * Q, m
            ).copy()
            C = np.frombuffer(f.read(8 * (ncomp + m) * ncomp * Q), dtype="<f8").reshape(
                ncomp + m, ncomp * Q
            ).copy()
            w = np.frombuffer(f.read(8 * S), dtype="<f8").copy()
            xi = np.frombuffer(f.read(16 * S), dtype="<f8").reshape(S, 2).copy()
            maps.append(
                ReconMap(
                    p=int(p), ncomp=int(ncomp), stencil=stencil, center=center,
                    rho=float(rho), Mu=Mu, Mg=Mg, constraints=C, weights=w,
                    xi_stencil=xi, kkt_condition=float(cond),
                )
            )
    return maps
