"""Tensor Gauss quadrature on the simplex via collapsed coordinates."""

from __future__ import annotations

from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import roots_jacobi

DEFAULT_ORDER = 64


@lru_cache(maxsize=None)
def _legendre_unit(order: int) -> tuple[np.ndarray, np.ndarray]:
    t, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (t + 1.0), 0.5 * w


def simplex_rule(n: int, order: int = DEFAULT_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Nodes (N, n) and weights (N,) integrating over the n-simplex, n <= 3.

    Uses x_1 = u_1, x_k = u_k * prod_{j<k} (1 - u_j); the Jacobian
    prod_k (1 - u_k)**(n - k) is folded into the weights, so a rule of order q
    is exact for polynomials of total degree <= 2q - 1 - (n - 1).
    """
    if not 1 <= n <= 3:
        raise ValueError("simplex quadrature is implemented for n in {1, 2, 3}")
    u, w = _legendre_unit(order)
    grids = np.meshgrid(*([u] * n), indexing="ij")
    wgrids = np.meshgrid(*([w] * n), indexing="ij")
    U = np.stack([g.ravel() for g in grids], axis=-1)
    W = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    X = np.empty_like(U)
    left = np.ones(U.shape[0])
    jac = np.ones(U.shape[0])
    for k in range(n):
        X[:, k] = U[:, k] * left
        jac = jac * left
        left = left * (1.0 - U[:, k])
    return X, W * jac


def jacobi_simplex_rule(powers: Sequence[float], order: int = DEFAULT_ORDER) -> tuple[np.ndarray, np.ndarray]:
    """Rule exact for prod x_i**p_i * (1 - |x|_1)**p_slack times a polynomial.

    ``powers`` lists p_1..p_n and then p_slack, each > -1. In collapsed
    coordinates the weight factorizes into u_k**p_k (1 - u_k)**q_k with
    q_k = (n - k) + sum_{i>k} p_i + p_slack, and each axis gets its own
    Gauss-Jacobi rule. The returned weights have the power weight divided back
    out, so they are used exactly like ``simplex_rule`` weights.
    """
    p = np.asarray(powers, dtype=np.float64)
    n = p.shape[0] - 1
    if not 1 <= n <= 3:
        raise ValueError("simplex quadrature is implemented for n in {1, 2, 3}")
    if np.any(p <= -1):
        raise ValueError("powers must exceed -1")
    nodes, weights = [], []
    for k in range(n):
        q = (n - 1 - k) + p[k + 1 : n].sum() + p[n]
        # roots_jacobi(order, a, b) has weight (1 - t)**a (1 + t)**b on [-1, 1]
        t, w = roots_jacobi(order, q, p[k])
        nodes.append(0.5 * (t + 1.0))
        weights.append(w * 0.5 ** (q + p[k] + 1.0))
    grids = np.meshgrid(*nodes, indexing="ij")
    wgrids = np.meshgrid(*weights, indexing="ij")
    U = np.stack([g.ravel() for g in grids], axis=-1)
    W = np.prod(np.stack([g.ravel() for g in wgrids], axis=-1), axis=-1)
    X = np.empty_like(U)
    left = np.ones(U.shape[0])
    for k in range(n):
        X[:, k] = U[:, k] * left
        left = left * (1.0 - U[:, k])
    coords = np.concatenate([X, left[:, None]], axis=-1)
    return X, W / np.prod(coords**p, axis=-1)


def integrate(func, n: int, order: int = DEFAULT_ORDER) -> float:
    """Integral over the n-simplex of a vectorized ``func(X) -> (N,)``."""
    X, W = simplex_rule(n, order)
    return float(np.dot(W, func(X)))
