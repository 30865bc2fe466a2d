"""Independent oracles shared by tests: none of these route through the
library's integrators or polynomial algebra."""

import numpy as np
from scipy.linalg import expm


def linear_conditional_moments(B, A, x0, grid, increments):
    """Mean and covariance of X_T for dX = BX dt + A dW_{l_t}, conditional
    on the subordinator increments, by scaling-and-squaring matrix
    exponentials plus left-endpoint grid quadrature."""
    B = np.asarray(B, dtype=float)
    A = np.asarray(A, dtype=float)
    T = grid[-1]
    mean = expm(B * T) @ np.asarray(x0, dtype=float)
    d = B.shape[0]
    cov = np.zeros((d, d))
    for i in range(increments.shape[0]):
        E = expm(B * (T - grid[i]))
        EA = E @ A
        cov += EA @ np.diag(increments[i]) @ EA.T
    return mean, cov


def fd_jacobian(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    cols = []
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols, axis=1)


def fd_lie_bracket(Xf, Yf, x, h=1e-6):
    """[X, Y](x) = dY(x) X(x) - dX(x) Y(x) with finite-difference Jacobians."""
    return fd_jacobian(Yf, x, h) @ Xf(x) - fd_jacobian(Xf, x, h) @ Yf(x)


def gaussian_tv_exact(separation, t, quad_points=20001):
    """TV between N(x, t) and N(y, t) in one dimension by direct
    quadrature of |density difference| / 2."""
    s = float(separation)
    sd = np.sqrt(t)
    lo, hi = -8 * sd, s + 8 * sd
    xs = np.linspace(lo, hi, quad_points)
    p = np.exp(-0.5 * (xs / sd) ** 2) / (sd * np.sqrt(2 * np.pi))
    q = np.exp(-0.5 * ((xs - s) / sd) ** 2) / (sd * np.sqrt(2 * np.pi))
    return 0.5 * np.trapezoid(np.abs(p - q), xs)
