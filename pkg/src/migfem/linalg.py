"""Dense KKT solves, the global sparse system container, and conditioning proxies.

Factorizations are delegated to LAPACK / SuperLU through numpy and scipy; this
module owns the contracts (pivot-based rank reporting, Dirichlet elimination
that injects prescribed values bitwise, residual reporting for least-squares
solves) rather than the kernels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.io
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class RankDeficiencyError(RuntimeError):
    def __init__(self, msg: str, rank: int | None = None, pivot: int | None = None):
        super().__init__(msg)
        self.rank = rank
        self.pivot = pivot


def dense_kkt_solve(
    A: np.ndarray, C: np.ndarray, rhs: np.ndarray, label: str = "kkt"
) -> tuple[np.ndarray, np.ndarray, float]:
    """Solve the saddle system [[A, C^T], [C, 0]] [x; lam] = rhs.

    rhs may have multiple columns.  Returns (x, lam, condition) where the
    condition number is the diagonal ratio of the pivoted LU factor, a cheap
    proxy adequate for trend reporting.  A vanishing pivot (for example a
    duplicated constraint row) raises RankDeficiencyError naming the pivot
    index and the rank reached.
    """
    n = A.shape[0]
    m = C.shape[0]
    if m > n:
        raise RankDeficiencyError(
            f"{label}: {m} constraints exceed {n} coefficients", rank=n
        )
    K = np.zeros((n + m, n + m))
    K[:n, :n] = A
    K[:n, n:] = C.T
    K[n:, :n] = C
    lu, piv = sla.lu_factor(K)
    diag = np.abs(np.diag(lu))
    dmax = diag.max()
    tol = (n + m) * np.finfo(float).eps * dmax
    bad = np.nonzero(diag <= tol)[0]
    if bad.size:
        raise RankDeficiencyError(
            f"{label}: singular KKT system, pivot {bad[0]} of {n + m} vanished "
            f"(rank {int(np.sum(diag > tol))}); check for duplicated constraint "
            f"rows or a degenerate stencil",
            rank=int(np.sum(diag > tol)),
            pivot=int(bad[0]),
        )
    cond = float(dmax / diag.min())
    sol = sla.lu_solve((lu, piv), rhs)
    return sol[:n], sol[n:], cond


@dataclass(eq=False)
class LinearSystem:
    """Global system in row-compressed form.

    For square systems Dirichlet rows are identity rows and the mask marks
    them; the solver eliminates the fixed unknowns and re-injects the
    prescribed values unchanged.  Rectangular systems carry no Dirichlet rows;
    fixed columns are folded into the right-hand side before the LS solve.
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dirichlet_mask: np.ndarray        # (n_cols,) bool
    dirichlet_values: np.ndarray      # (n_cols,)
    symmetric: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def is_square(self) -> bool:
        return self.matrix.shape[0] == self.matrix.shape[1]


@dataclass
class SolveReport:
    u: np.ndarray
    kappa_diag: float | None
    relative_residual: float
    method: str


def cond_diag_proxy(K: sp.spmatrix) -> float:
    d = np.abs(K.diagonal())
    d = d[d > 0]
    if d.size == 0:
        return np.inf
    return float(d.max() / d.min())


def least_squares_solve(
    A: sp.csr_matrix, b: np.ndarray, dense_limit: int = 4_000_000
) -> tuple[np.ndarray, float]:
    """Minimum-residual solve of a (possibly) rectangular sparse system.

    Small systems go through a dense column-pivoted orthogonal factorization;
    larger ones use normal equations with symmetric diagonal equilibration.
    Returns (x, relative residual).
    """
    m, n = A.shape
    if m * n <= dense_limit:
        x, *_ = sla.lstsq(A.toarray(), b, lapack_driver="gelsy")
    else:
        G = (A.T @ A).tocsc()
        dg = G.diagonal()
        if np.any(dg <= 0):
            raise RankDeficiencyError(
                f"normal equations have a nonpositive diagonal at "
                f"{int(np.argmin(dg))}; column without support"
            )
        d = 1.0 / np.sqrt(dg)
        D = sp.diags(d)
        Gs = (D @ G @ D).tocsc()
        rhs = d * (A.T @ b)
        x = d * spla.splu(Gs).solve(rhs)
    r = A @ x - b
    nb = np.linalg.norm(b)
    rel = float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(r))
    return x, rel


def solve_system(system: LinearSystem) -> SolveReport:
    K = system.matrix
    fixed = system.dirichlet_mask
    free = ~fixed
    vals = system.dirichlet_values

    if system.is_square:
        kappa = cond_diag_proxy(K)
        Kc = K.tocsc()
        K_ff = Kc[:, free][free, :]
        rhs_f = system.rhs[free] - K.tocsc()[:, fixed][free, :] @ vals[fixed]
        try:
            lu = spla.splu(K_ff.tocsc())
        except RuntimeError as exc:  # singular factorization
            raise RankDeficiencyError(f"square solve failed: {exc}") from exc
        x = lu.solve(rhs_f)
        u = np.empty(K.shape[1])
        u[free] = x
        u[fixed] = vals[fixed]          # prescribed data injected unchanged
        r = K_ff @ x - rhs_f
        nb = np.linalg.norm(rhs_f)
        rel = float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(r))
        return SolveReport(u=u, kappa_diag=kappa, relative_residual=rel, method="splu")

    # rectangular: fold fixed columns into the rhs, least-squares on the rest
    Kc = K.tocsc()
    rhs = system.rhs - Kc[:, fixed] @ vals[fixed]
    A = Kc[:, free].tocsr()
    x, rel = least_squares_solve(A, rhs)
    u = np.empty(K.shape[1])
    u[free] = x
    u[fixed] = vals[fixed]
    return SolveReport(u=u, kappa_diag=None, relative_residual=rel, method="lstsq")


def _power_extremes(G: sp.spmatrix, iters: int, seed: int = 7) -> tuple[float, float]:
    """Largest/smallest eigenvalue estimates of an SPD operator by 20-ish
    rounds of power and inverse-power iteration."""
    rng = np.random.default_rng(seed)
    n = G.shape[0]
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    for _ in range(iters):
        v = G @ v
        v /= np.linalg.norm(v)
    lam_max = float(v @ (G @ v))

    lu = spla.splu(G.tocsc())
    w = rng.standard_normal(n)
    w /= np.linalg.norm(w)
    for _ in range(iters):
        w = lu.solve(w)
        w /= np.linalg.norm(w)
    lam_min = float(w @ (G @ w))
    return lam_max, lam_min


def cond_interior_estimate(
    K: sp.spmatrix,
    mask: np.ndarray,
    symmetric: bool = False,
    dense_limit: int = 4000,
    iters: int = 20,
) -> float:
    """Spectral condition estimate of the interior block.

    Masked columns (and rows, when the system is square) are eliminated first.
    Small blocks use the dense spectrum; anything larger, or rectangular,
    falls back to power/inverse-power iteration on the normal operator.
    """
    free = ~mask
    Kc = K.tocsc()[:, free]
    if K.shape[0] == K.shape[1]:
        Kc = Kc[free, :]
    m, n = Kc.shape

    if m == n and n <= dense_limit:
        Kd = Kc.toarray()
        if symmetric:
            lam = np.abs(sla.eigvalsh(Kd))
        else:
            lam = sla.svdvals(Kd)
        return float(lam.max() / lam.min())

    G = (Kc.T @ Kc).tocsc()
    lam_max, lam_min = _power_extremes(G, iters)
    return float(np.sqrt(lam_max / lam_min))


def save_system(system: LinearSystem, prefix: str) -> None:
    """Matrix-market matrix plus a plain-text right-hand side."""
    scipy.io.mmwrite(prefix + ".mtx", system.matrix)
    np.savetxt(prefix + ".rhs.txt", system.rhs)


def load_matrix(path: str) -> sp.csr_matrix:
    return sp.csr_matrix(scipy.io.mmread(path))
