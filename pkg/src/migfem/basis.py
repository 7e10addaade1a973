"""Monomial basis for the local patch polynomials, in scaled coordinates.

Monomials are ordered graded-lexicographically with xi before eta:
1, xi, eta, xi^2, xi*eta, eta^2, ...  Partial derivatives are evaluated with
exact integer falling-factorial coefficients, so derivative tables of
polynomial data carry no extra rounding beyond the monomial powers themselves.
"""

from __future__ import annotations

from functools import lru_cache
from math import factorial

import numpy as np


def basis_dim(p: int) -> int:
    return (p + 1) * (p + 2) // 2


@lru_cache(maxsize=None)
def monomial_exponents(p: int) -> np.ndarray:
    """(Q, 2) integer exponents (a, b) for xi^a * eta^b, graded-lex order."""
    out = []
    for d in range(p + 1):
        for a in range(d, -1, -1):
            out.append((a, d - a))
    exps = np.array(out, dtype=np.int64)
    exps.setflags(write=False)
    return exps


@lru_cache(maxsize=None)
def _alpha_layout(p: int, alpha: tuple[int, int]):
    """Falling-factorial coefficients and shifted power indices for D^alpha.

    Returns (coeff (Q,), ix (Q,), iy (Q,)); monomials killed by the
    derivative get coefficient zero and index zero.
    """
    ax, ay = alpha
    exps = monomial_exponents(p)
    a, b = exps[:, 0], exps[:, 1]
    alive = (a >= ax) & (b >= ay)
    coeff = np.zeros(exps.shape[0])
    fx = np.array([factorial(int(v)) // factorial(int(v) - ax) if v >= ax else 0
                   for v in a], dtype=np.float64)
    fy = np.array([factorial(int(v)) // factorial(int(v) - ay) if v >= ay else 0
                   for v in b], dtype=np.float64)
    coeff[alive] = (fx * fy)[alive]
    ix = np.where(alive, a - ax, 0)
    iy = np.where(alive, b - ay, 0)
    for arr in (coeff, ix, iy):
        arr.setflags(write=False)
    return coeff, ix, iy


def _power_tables(xi: np.ndarray, p: int) -> tuple[np.ndarray, np.ndarray]:
    E = xi.shape[0]
    pow_x = np.ones((E, p + 1))
    pow_y = np.ones((E, p + 1))
    for k in range(1, p + 1):
        pow_x[:, k] = pow_x[:, k - 1] * xi[:, 0]
        pow_y[:, k] = pow_y[:, k - 1] * xi[:, 1]
    return pow_x, pow_y


def eval_basis_table(xi: np.ndarray, p: int, alpha: tuple[int, int] = (0, 0)) -> np.ndarray:
    """D^alpha of every basis monomial at each point.

    xi: (E, 2) scaled coordinates.  Returns (E, Q).  |alpha| > p gives zeros
    for the affected monomials (and the whole table once |alpha| exceeds every
    exponent), which is the correct derivative, not an error.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=np.float64))
    ax, ay = alpha
    if ax < 0 or ay < 0:
        raise ValueError(f"negative derivative order {alpha}")
    pow_x, pow_y = _power_tables(xi, p)
    coeff, ix, iy = _alpha_layout(p, (ax, ay))
    return coeff[None, :] * pow_x[:, ix] * pow_y[:, iy]


def eval_basis_stack(xi: np.ndarray, p: int,
                     alphas: list[tuple[int, int]]) -> np.ndarray:
    """D^alpha tables for several derivative orders at once: (A, E, Q).

    Shares the point power tables across all requested derivatives, which is
    what makes high-order jump scans affordable.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=np.float64))
    pow_x, pow_y = _power_tables(xi, p)
    out = np.empty((len(alphas), xi.shape[0], basis_dim(p)))
    for i, alpha in enumerate(alphas):
        if alpha[0] < 0 or alpha[1] < 0:
            raise ValueError(f"negative derivative order {alpha}")
        coeff, ix, iy = _alpha_layout(p, alpha)
        out[i] = coeff[None, :] * pow_x[:, ix] * pow_y[:, iy]
    return out


def eval_basis(xi, p: int, alpha: tuple[int, int] = (0, 0)) -> np.ndarray:
    """D^alpha basis row at a single point; returns (Q,)."""
    return eval_basis_table(np.asarray(xi, dtype=np.float64).reshape(1, 2), p, alpha)[0]


def derivative_multi_indices(order: int) -> list[tuple[int, int]]:
    """All (ax, ay) with ax + ay == order, ax descending."""
    return [(order - j, j) for j in range(order + 1)]
