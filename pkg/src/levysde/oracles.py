"""Drift and Lyapunov oracles: values, Jacobians, higher-order jets.

Built-in models are polynomial, so their oracles are exact to every
order and export the array form consumed by the numeric kernels.
Arbitrary Python callables are supported through a central-difference
jet fallback, accurate enough for Jacobians but flagged for orders
beyond 3. The smooth drift cutoff b_n = b * chi(H) composes jets with
the bump's univariate Taylor series through truncated multiplication.
"""

from __future__ import annotations

import warnings

import numpy as np

from .errors import JetOrderError, ModelError
from .kernels import KernelDrift
from .polyfield import (
    Poly,
    SmoothBump,
    fd_taylor_map,
    jacobian_polys,
    map_eval,
    map_eval_batch,
    map_to_arrays,
)

__all__ = [
    "PolynomialDrift",
    "CallableDrift",
    "CutoffDrift",
    "LyapunovFunction",
    "quadratic_lyapunov",
]


def _dummy_arrays(dim):
    return (
        np.zeros((1, 1)),
        np.zeros((1, dim), dtype=np.int64),
        np.zeros((dim, 1)),
        np.zeros((1, dim), dtype=np.int64),
    )


class PolynomialDrift:
    """Exact polynomial drift field; jets of every order are available."""

    def __init__(self, polys: list[Poly]):
        if not polys:
            raise ValueError("empty drift")
        self.polys = list(polys)
        self.dim = polys[0].nvars
        if len(polys) != self.dim:
            raise ValueError("drift must map R^d to R^d")
        self.order = float("inf")
        self._jac = jacobian_polys(self.polys)
        self._kernel = None

    def eval(self, x) -> np.ndarray:
        return map_eval(self.polys, x)

    __call__ = eval

    def eval_batch(self, X) -> np.ndarray:
        return map_eval_batch(self.polys, X)

    def jacobian(self, x) -> np.ndarray:
        return np.array([[p.eval(x) for p in row] for row in self._jac])

    def taylor(self, x, order: int) -> list[Poly]:
        """Local Taylor polynomials in the offset variables at x (exact)."""
        return [p.shifted(x).truncated(order) for p in self.polys]

    def kernel_data(self) -> KernelDrift:
        if self._kernel is None:
            coeffs, exps = map_to_arrays(self.polys)
            jc, je = map_to_arrays([p for row in self._jac for p in row])
            hc, he, gc, ge = _dummy_arrays(self.dim)
            self._kernel = KernelDrift(coeffs, exps, jc, je, hc, he, gc, ge)
        return self._kernel


class CallableDrift:
    """Drift given by a plain callable, with finite-difference jets.

    `order` declares how deep the central-difference jets may be pushed.
    Accuracy beyond order 3 is poor; requests past the declared order
    raise, requests past 3 warn.
    """

    def __init__(self, fn, dim: int, order: int = 3, batch_fn=None, jacobian_fn=None):
        self.fn = fn
        self.dim = int(dim)
        self.order = int(order)
        if self.order < 1:
            raise ValueError("declared jet order must be >= 1")
        self._batch_fn = batch_fn
        self._jacobian_fn = jacobian_fn

    def eval(self, x) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    __call__ = eval

    def eval_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self._batch_fn is not None:
            return np.asarray(self._batch_fn(X), dtype=float)
        return np.stack([self.eval(row) for row in X])

    def jacobian(self, x) -> np.ndarray:
        if self._jacobian_fn is not None:
            return np.asarray(self._jacobian_fn(np.asarray(x, dtype=float)), dtype=float)
        h = 6e-6 * max(1.0, float(np.max(np.abs(x))))
        cols = []
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = h
            cols.append((self.eval(x + e) - self.eval(x - e)) / (2 * h))
        return np.stack(cols, axis=1)

    def taylor(self, x, order: int) -> list[Poly]:
        if order > self.order:
            raise JetOrderError(required=order, available=self.order)
        if order > 3:
            warnings.warn(
                "central-difference jets beyond order 3 are low accuracy",
                stacklevel=2,
            )
        return fd_taylor_map(self.eval, x, order)

    def kernel_data(self):
        return None


class LyapunovFunction:
    """Nonnegative coercive function with gradient and Hessian oracles."""

    def __init__(self, value, grad, hess, dim, poly: Poly | None = None):
        self._value = value
        self._grad = grad
        self._hess = hess
        self.dim = int(dim)
        self.poly = poly
        self._grad_polys = poly.grad() if poly is not None else None

    @classmethod
    def from_poly(cls, poly: Poly) -> "LyapunovFunction":
        grad = poly.grad()
        hess = [[g.diff(j) for j in range(poly.nvars)] for g in grad]
        return cls(
            value=poly.eval,
            grad=lambda x: map_eval(grad, x),
            hess=lambda x: np.array([[h.eval(x) for h in row] for row in hess]),
            dim=poly.nvars,
            poly=poly,
        )

    def value(self, x) -> float:
        v = float(self._value(np.asarray(x, dtype=float)))
        if v < 0:
            raise ModelError(f"Lyapunov function negative at {x}: {v}")
        return v

    def value_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if self.poly is not None:
            return self.poly.eval_batch(X)
        return np.array([self._value(row) for row in X])

    def grad(self, x) -> np.ndarray:
        return np.asarray(self._grad(np.asarray(x, dtype=float)), dtype=float)

    def hess(self, x) -> np.ndarray:
        return np.asarray(self._hess(np.asarray(x, dtype=float)), dtype=float)

    def taylor(self, x, order: int) -> Poly:
        if self.poly is not None:
            return self.poly.shifted(x).truncated(order)
        if order > 3:
            raise JetOrderError(required=order, available=3)
        return fd_taylor_map(lambda y: np.array([self._value(y)]), x, order)[0]

    def coercivity_diagnostic(self, rays: int = 8, radius: float = 50.0, seed: int = 0):
        """Sanity check (not a proof): H grows along sampled rays."""
        rng = np.random.default_rng(seed)
        for _ in range(rays):
            u = rng.standard_normal(self.dim)
            u /= np.linalg.norm(u)
            near = self.value(0.1 * radius * u)
            far = self.value(radius * u)
            if not far > near:
                return False
        return True


def quadratic_lyapunov(dim: int) -> LyapunovFunction:
    """H(x) = |x|^2 + 1, the standard choice when the noise has full rank."""
    p = Poly.constant(dim, 1.0)
    for i in range(dim):
        p = p + Poly.variable(dim, i) * Poly.variable(dim, i)
    return LyapunovFunction.from_poly(p)


class CutoffDrift:
    """b_n(x) = b(x) * chi_n(H(x)) with chi_n the smoothstep bump.

    chi_n is identically 1 on {H <= n} and 0 on {H >= n + 1}, so the
    cutoff drift agrees with the original drift inside the sublevel set
    and is globally bounded whenever H is coercive. Jets compose the
    base drift's jets with the bump's univariate Taylor series.
    """

    def __init__(self, base, lyapunov: LyapunovFunction, level: int):
        if level <= 0:
            raise ValueError("cutoff level must be a positive integer")
        self.base = base
        self.lyapunov = lyapunov
        self.level = int(level)
        self.bump = SmoothBump(float(level), float(level) + 1.0)
        self.dim = base.dim
        self.order = base.order
        self._kernel = None

    def eval(self, x) -> np.ndarray:
        return self.base.eval(x) * self.bump.value(self.lyapunov.value(x))

    __call__ = eval

    def eval_batch(self, X) -> np.ndarray:
        chi = self.bump.value_batch(self.lyapunov.value_batch(X))
        return self.base.eval_batch(X) * chi[:, None]

    def jacobian(self, x) -> np.ndarray:
        h = self.lyapunov.value(x)
        chi, dchi = self.bump.derivatives(h, 1)
        M = chi * self.base.jacobian(x)
        if dchi != 0.0:
            M = M + dchi * np.outer(self.base.eval(x), self.lyapunov.grad(x))
        return M

    def taylor(self, x, order: int) -> list[Poly]:
        base_jets = self.base.taylor(x, order)
        h_jet = self.lyapunov.taylor(x, order)
        h0 = h_jet.taylor_coefficient((0,) * self.dim)
        derivs = self.bump.derivatives(h0, order)
        delta = h_jet - h0
        chi_jet = Poly.constant(self.dim, derivs[0])
        power = Poly.constant(self.dim, 1.0)
        fact = 1.0
        for k in range(1, order + 1):
            power = (power * delta).truncated(order)
            fact *= k
            if derivs[k] != 0.0:
                chi_jet = chi_jet + (derivs[k] / fact) * power
        return [(p * chi_jet).truncated(order) for p in base_jets]

    def kernel_data(self):
        if self._kernel is None:
            base_kd = self.base.kernel_data()
            if base_kd is None or self.lyapunov.poly is None:
                return None
            hc, he = map_to_arrays([self.lyapunov.poly])
            gc, ge = map_to_arrays(self.lyapunov.poly.grad())
            self._kernel = KernelDrift(
                base_kd.coeffs, base_kd.exps, base_kd.jac_coeffs, base_kd.jac_exps,
                hc, he, gc, ge,
                cut_lo=float(self.level), cut_hi=float(self.level) + 1.0,
            )
        return self._kernel
