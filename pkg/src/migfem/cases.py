"""Manufactured solutions for the benchmark problems.

Each case bundles the exact field, its derivatives of any order, and a
hand-written forcing term for its operator.  The forcing is deliberately not
generated from the derivative closures; ``apply_operator`` recomputes it from
them, so comparing the two routes is a real consistency check rather than a
tautology.

Operators use the sign conventions

    laplace:     -div grad u = f
    elasticity:  -div sigma(u) = b   (plane stress)
    biharmonic:  lap(lap u) = f
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

OPERATORS = ("laplace", "elasticity", "biharmonic")


@dataclass(frozen=True)
class Material:
    """Plane-stress isotropic material."""

    E: float = 1.0
    nu: float = 0.3

    def dmatrix(self) -> np.ndarray:
        """3x3 constitutive matrix acting on (eps_xx, eps_yy, gamma_xy)."""
        E, nu = self.E, self.nu
        return E / (1.0 - nu**2) * np.array([
            [1.0, nu, 0.0],
            [nu, 1.0, 0.0],
            [0.0, 0.0, (1.0 - nu) / 2.0],
        ])

    @property
    def shear_modulus(self) -> float:
        return self.E / (2.0 * (1.0 + self.nu))


@dataclass(frozen=True)
class ManufacturedCase:
    name: str
    operator: str
    ncomp: int
    domain_box: tuple[float, float, float, float]
    u_fn: Callable[[np.ndarray], np.ndarray]
    du_fn: Callable[[np.ndarray, tuple[int, int]], np.ndarray]
    f_fn: Callable[[np.ndarray], np.ndarray]
    material: Material | None = None
    degree: int | None = None          # exact polynomial degree, if any

    def u(self, pts: np.ndarray) -> np.ndarray:
        return self.u_fn(np.atleast_2d(pts))

    def du(self, pts: np.ndarray, alpha: tuple[int, int]) -> np.ndarray:
        return self.du_fn(np.atleast_2d(pts), alpha)

    def f(self, pts: np.ndarray) -> np.ndarray:
        return self.f_fn(np.atleast_2d(pts))

    def strain(self, pts: np.ndarray) -> np.ndarray:
        """(n, 3) engineering strain (eps_xx, eps_yy, gamma_xy)."""
        if self.ncomp != 2:
            raise ValueError("strain is defined for vector cases only")
        dx = self.du(pts, (1, 0))
        dy = self.du(pts, (0, 1))
        return np.stack([dx[:, 0], dy[:, 1], dy[:, 0] + dx[:, 1]], axis=1)

    def stress(self, pts: np.ndarray) -> np.ndarray:
        """(n, 3) plane stress (sig_xx, sig_yy, sig_xy)."""
        return self.strain(pts) @ self.material.dmatrix().T

    def traction(self, pts: np.ndarray, normals: np.ndarray) -> np.ndarray:
        """(n, 2) traction sigma.n; ``normals`` broadcasts against pts."""
        s = self.stress(pts)
        nrm = np.broadcast_to(np.atleast_2d(normals), (s.shape[0], 2))
        tx = s[:, 0] * nrm[:, 0] + s[:, 2] * nrm[:, 1]
        ty = s[:, 2] * nrm[:, 0] + s[:, 1] * nrm[:, 1]
        return np.stack([tx, ty], axis=1)

    def normal_flux(self, pts: np.ndarray, normals: np.ndarray) -> np.ndarray:
        """(n,) normal derivative n.grad(u) for scalar cases."""
        if self.ncomp != 1:
            raise ValueError("normal flux is defined for scalar cases only")
        dx = self.du(pts, (1, 0))[:, 0]
        dy = self.du(pts, (0, 1))[:, 0]
        nrm = np.broadcast_to(np.atleast_2d(normals), (dx.shape[0], 2))
        return nrm[:, 0] * dx + nrm[:, 1] * dy


def apply_operator(case: ManufacturedCase, pts: np.ndarray) -> np.ndarray:
    """Recompute the forcing from the derivative closures alone."""
    pts = np.atleast_2d(pts)
    if case.operator == "laplace":
        return -(case.du(pts, (2, 0)) + case.du(pts, (0, 2)))
    if case.operator == "biharmonic":
        return case.du(pts, (4, 0)) + 2.0 * case.du(pts, (2, 2)) + case.du(pts, (0, 4))
    if case.operator == "elasticity":
        mat = case.material
        ep = mat.E / (1.0 - mat.nu**2)
        g = mat.shear_modulus
        u1xx = case.du(pts, (2, 0))[:, 0]
        u1yy = case.du(pts, (0, 2))[:, 0]
        u1xy = case.du(pts, (1, 1))[:, 0]
        u2xx = case.du(pts, (2, 0))[:, 1]
        u2yy = case.du(pts, (0, 2))[:, 1]
        u2xy = case.du(pts, (1, 1))[:, 1]
        bx = -(ep * u1xx + g * u1yy + (ep * mat.nu + g) * u2xy)
        by = -(g * u2xx + ep * u2yy + (ep * mat.nu + g) * u1xy)
        return np.stack([bx, by], axis=1)
    raise ValueError(f"unknown operator {case.operator!r}")


def self_check(case: ManufacturedCase, n: int = 64, seed: int = 0) -> float:
    """Max relative deviation between the stored forcing and the operator
    applied to the derivative closures, at random interior points."""
    rng = np.random.default_rng(seed)
    xmin, xmax, ymin, ymax = case.domain_box
    pts = np.column_stack([
        rng.uniform(xmin, xmax, size=n),
        rng.uniform(ymin, ymax, size=n),
    ])
    fa = case.f(pts)
    fb = apply_operator(case, pts)
    scale = max(np.abs(fa).max(), np.abs(fb).max(), 1.0)
    err = float(np.abs(fa - fb).max() / scale)
    u0 = case.u(pts)
    ud = case.du(pts, (0, 0))
    uscale = max(float(np.abs(u0).max()), 1.0)
    return max(err, float(np.abs(u0 - ud).max() / uscale))


# ----------------------------------------------------------------- helpers

def _falling(k: int, m: int) -> float:
    out = 1.0
    for i in range(m):
        out *= k - i
    return out


_SIN_CYCLE = (np.sin, np.cos, lambda t: -np.sin(t), lambda t: -np.cos(t))


def _dsin(order: int, t: np.ndarray) -> np.ndarray:
    return _SIN_CYCLE[order % 4](t)


def _dcos(order: int, t: np.ndarray) -> np.ndarray:
    return _SIN_CYCLE[(order + 1) % 4](t)


# ------------------------------------------------------------------- cases

def poly_scalar(p: int, c0: float = 1.0,
                box: tuple[float, float, float, float] = (-1.0, 1.0, -1.0, 1.0),
                ) -> ManufacturedCase:
    """u = (c0 + x + y)^p, scalar, posed for the Laplace operator."""

    def u(pts):
        return (c0 + pts[:, 0] + pts[:, 1])[:, None] ** p

    def du(pts, alpha):
        m = alpha[0] + alpha[1]
        if m > p:
            return np.zeros((pts.shape[0], 1))
        base = (c0 + pts[:, 0] + pts[:, 1]) ** (p - m)
        return (_falling(p, m) * base)[:, None]

    def f(pts):
        if p < 2:
            return np.zeros((pts.shape[0], 1))
        base = (c0 + pts[:, 0] + pts[:, 1]) ** (p - 2)
        return (-2.0 * p * (p - 1) * base)[:, None]

    return ManufacturedCase(name=f"poly-scalar-p{p}", operator="laplace", ncomp=1,
                            domain_box=box, u_fn=u, du_fn=du, f_fn=f, degree=p)


def trig_vector(material: Material,
                box: tuple[float, float, float, float]) -> ManufacturedCase:
    """u = (sin x cos y, cos x sin y), plane-stress elasticity."""

    def u(pts):
        x, y = pts[:, 0], pts[:, 1]
        return np.stack([np.sin(x) * np.cos(y), np.cos(x) * np.sin(y)], axis=1)

    def du(pts, alpha):
        a, b = alpha
        x, y = pts[:, 0], pts[:, 1]
        c1 = _dsin(a, x) * _dcos(b, y)
        c2 = _dcos(a, x) * _dsin(b, y)
        return np.stack([c1, c2], axis=1)

    amp = 2.0 * material.E / (1.0 - material.nu**2)

    def f(pts):
        x, y = pts[:, 0], pts[:, 1]
        return amp * np.stack([np.sin(x) * np.cos(y), np.cos(x) * np.sin(y)], axis=1)

    return ManufacturedCase(name="trig-elasticity", operator="elasticity", ncomp=2,
                            domain_box=box, u_fn=u, du_fn=du, f_fn=f,
                            material=material)


def poly_vector(p: int, material: Material, c0: float = 10.0,
                box: tuple[float, float, float, float] = (0.0, 5.0, 0.0, 5.0),
                ) -> ManufacturedCase:
    """Both displacement components equal to (c0 + x + y)^p."""

    def u(pts):
        v = (c0 + pts[:, 0] + pts[:, 1]) ** p
        return np.stack([v, v], axis=1)

    def du(pts, alpha):
        m = alpha[0] + alpha[1]
        if m > p:
            return np.zeros((pts.shape[0], 2))
        v = _falling(p, m) * (c0 + pts[:, 0] + pts[:, 1]) ** (p - m)
        return np.stack([v, v], axis=1)

    amp = -2.0 * material.E / (1.0 - material.nu**2) * p * (p - 1)

    def f(pts):
        if p < 2:
            return np.zeros((pts.shape[0], 2))
        v = amp * (c0 + pts[:, 0] + pts[:, 1]) ** (p - 2)
        return np.stack([v, v], axis=1)

    return ManufacturedCase(name=f"poly-elasticity-p{p}", operator="elasticity",
                            ncomp=2, domain_box=box, u_fn=u, du_fn=du, f_fn=f,
                            material=material, degree=p)


def poly_biharmonic(p: int, c0: float = 1.0,
                    box: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0),
                    ) -> ManufacturedCase:
    """u = (c0 + x + y)^p for the biharmonic operator (needs p >= 4)."""

    def u(pts):
        return (c0 + pts[:, 0] + pts[:, 1])[:, None] ** p

    def du(pts, alpha):
        m = alpha[0] + alpha[1]
        if m > p:
            return np.zeros((pts.shape[0], 1))
        base = (c0 + pts[:, 0] + pts[:, 1]) ** (p - m)
        return (_falling(p, m) * base)[:, None]

    def f(pts):
        if p < 4:
            return np.zeros((pts.shape[0], 1))
        base = (c0 + pts[:, 0] + pts[:, 1]) ** (p - 4)
        return (4.0 * _falling(p, 4) * base)[:, None]

    return ManufacturedCase(name=f"poly-biharmonic-p{p}", operator="biharmonic",
                            ncomp=1, domain_box=box, u_fn=u, du_fn=du, f_fn=f,
                            degree=p)


def sinsin_biharmonic() -> ManufacturedCase:
    """u = sin(pi x) sin(pi y) on the unit square, f = 4 pi^4 u."""

    def u(pts):
        return (np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1]))[:, None]

    def du(pts, alpha):
        a, b = alpha
        val = (np.pi ** (a + b)) * _dsin(a, np.pi * pts[:, 0]) * _dsin(b, np.pi * pts[:, 1])
        return val[:, None]

    def f(pts):
        val = 4.0 * np.pi**4 * np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1])
        return val[:, None]

    return ManufacturedCase(name="sinsin-biharmonic", operator="biharmonic",
                            ncomp=1, domain_box=(0.0, 1.0, 0.0, 1.0),
                            u_fn=u, du_fn=du, f_fn=f)


def get_case(name: str, p: int | None = None, E: float = 1.0,
             nu: float = 0.3) -> ManufacturedCase:
    mat = Material(E=E, nu=nu)
    if name == "poly-scalar":
        return poly_scalar(p if p is not None else 5)
    if name == "trig-jump":
        return trig_vector(mat, box=(-1.0, 1.0, -1.0, 1.0))
    if name == "trig-elasticity":
        return trig_vector(mat, box=(0.0, 5.0, 0.0, 5.0))
    if name == "poly-elasticity":
        return poly_vector(p if p is not None else 4, mat)
    if name == "poly-biharmonic":
        return poly_biharmonic(p if p is not None else 5)
    if name == "sinsin-biharmonic":
        return sinsin_biharmonic()
    raise KeyError(f"unknown case {name!r}")


CASE_NAMES = ("poly-scalar", "trig-jump", "trig-elasticity", "poly-elasticity",
              "poly-biharmonic", "sinsin-biharmonic")
