"""Sparse multivariate polynomials, jets and smooth cutoff bumps.

This is the derivative backbone of the toolkit: built-in drift fields,
Hamiltonians and bracket recursions are all polynomial, so Jacobians,
iterated Lie brackets and arbitrary mixed partials can be produced
exactly by symbolic manipulation instead of finite differencing.
Local Taylor expansions ("jets") reuse the same representation: a jet
of order ``r`` at ``x`` is a polynomial in the offset variables whose
coefficients are the scaled mixed partials.
"""

from __future__ import annotations

import math
from itertools import product

import numpy as np

__all__ = [
    "Poly",
    "jacobian_polys",
    "lie_bracket_polys",
    "map_eval",
    "map_eval_batch",
    "map_to_arrays",
    "compose_univariate",
    "fd_taylor_map",
    "SmoothBump",
]


class Poly:
    """Sparse polynomial R^nvars -> R, stored as {exponent tuple: coeff}."""

    __slots__ = ("nvars", "terms")

    def __init__(self, nvars: int, terms: dict[tuple[int, ...], float] | None = None):
        self.nvars = int(nvars)
        self.terms: dict[tuple[int, ...], float] = {}
        if terms:
            for exp, c in terms.items():
                if c != 0.0:
                    self.terms[tuple(int(e) for e in exp)] = float(c)

    # ---------------------------------------------------------------- builders
    @classmethod
    def zero(cls, nvars: int) -> "Poly":
        return cls(nvars)

    @classmethod
    def constant(cls, nvars: int, c: float) -> "Poly":
        return cls(nvars, {(0,) * nvars: c})

    @classmethod
    def variable(cls, nvars: int, i: int) -> "Poly":
        exp = [0] * nvars
        exp[i] = 1
        return cls(nvars, {tuple(exp): 1.0})

    # ---------------------------------------------------------------- algebra
    def _check(self, other: "Poly") -> None:
        if self.nvars != other.nvars:
            raise ValueError("polynomials over different variable counts")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Poly.constant(self.nvars, float(other))
        self._check(other)
        terms = dict(self.terms)
        for exp, c in other.terms.items():
            s = terms.get(exp, 0.0) + c
            if s == 0.0:
                terms.pop(exp, None)
            else:
                terms[exp] = s
        return Poly(self.nvars, terms)

    __radd__ = __add__

    def __neg__(self):
        return Poly(self.nvars, {e: -c for e, c in self.terms.items()})

    def __sub__(self, other):
        if isinstance(other, (int, float)):
            other = Poly.constant(self.nvars, float(other))
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            if other == 0.0:
                return Poly.zero(self.nvars)
            return Poly(self.nvars, {e: c * other for e, c in self.terms.items()})
        self._check(other)
        terms: dict[tuple[int, ...], float] = {}
        for e1, c1 in self.terms.items():
            for e2, c2 in other.terms.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                s = terms.get(e, 0.0) + c1 * c2
                if s == 0.0:
                    terms.pop(e, None)
                else:
                    terms[e] = s
        return Poly(self.nvars, terms)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        if k < 0:
            raise ValueError("negative power")
        out = Poly.constant(self.nvars, 1.0)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    # ---------------------------------------------------------------- calculus
    def diff(self, i: int) -> "Poly":
        terms = {}
        for exp, c in self.terms.items():
            e = exp[i]
            if e == 0:
                continue
            new = list(exp)
            new[i] = e - 1
            key = tuple(new)
            terms[key] = terms.get(key, 0.0) + c * e
        return Poly(self.nvars, terms)

    def grad(self) -> list["Poly"]:
        return [self.diff(i) for i in range(self.nvars)]

    def shifted(self, x0) -> "Poly":
        """Compose with the translation x -> x + x0, expanding exactly.

        The result's coefficient of the offset monomial eps^alpha equals
        the Taylor coefficient (d^alpha self)(x0) / alpha!.
        """
        x0 = np.asarray(x0, dtype=float)
        out = Poly.zero(self.nvars)
        # per-variable binomial expansions of (eps_k + x0_k)^e, cached
        cache: dict[tuple[int, int], Poly] = {}

        def factor(k: int, e: int) -> Poly:
            key = (k, e)
            if key not in cache:
                terms = {}
                for j in range(e + 1):
                    exp = [0] * self.nvars
                    exp[k] = j
                    terms[tuple(exp)] = math.comb(e, j) * x0[k] ** (e - j)
                cache[key] = Poly(self.nvars, terms)
            return cache[key]

        for exp, c in self.terms.items():
            term = Poly.constant(self.nvars, c)
            for k, e in enumerate(exp):
                if e:
                    term = term * factor(k, e)
            out = out + term
        return out

    def truncated(self, max_order: int) -> "Poly":
        return Poly(self.nvars, {e: c for e, c in self.terms.items() if sum(e) <= max_order})

    # ---------------------------------------------------------------- queries
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def eval(self, x) -> float:
        x = np.asarray(x, dtype=float)
        total = 0.0
        for exp, c in self.terms.items():
            p = c
            for k, e in enumerate(exp):
                for _ in range(e):
                    p *= x[k]
            total += p
        return total

    def eval_batch(self, X: np.ndarray) -> np.ndarray:
        """Evaluate at the rows of X, shape (n, nvars) -> (n,)."""
        X = np.asarray(X, dtype=float)
        out = np.zeros(X.shape[0])
        for exp, c in self.terms.items():
            p = np.full(X.shape[0], c)
            for k, e in enumerate(exp):
                for _ in range(e):
                    p *= X[:, k]
            out += p
        return out

    def taylor_coefficient(self, alpha: tuple[int, ...]) -> float:
        """Coefficient of x^alpha, i.e. (d^alpha p)(0) / alpha!."""
        return self.terms.get(tuple(alpha), 0.0)

    def __repr__(self):
        if not self.terms:
            return "Poly(0)"
        bits = []
        for exp, c in sorted(self.terms.items()):
            mono = "*".join(f"x{k}^{e}" for k, e in enumerate(exp) if e) or "1"
            bits.append(f"{c:+g}*{mono}")
        return "Poly(" + " ".join(bits) + ")"


# -------------------------------------------------------------------- maps

def map_eval(polys: list[Poly], x) -> np.ndarray:
    return np.array([p.eval(x) for p in polys])


def map_eval_batch(polys: list[Poly], X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    out = np.empty((X.shape[0], len(polys)))
    for i, p in enumerate(polys):
        out[:, i] = p.eval_batch(X)
    return out


def jacobian_polys(polys: list[Poly]) -> list[list[Poly]]:
    """J[i][j] = d polys[i] / d x_j."""
    return [[p.diff(j) for j in range(p.nvars)] for p in polys]


def lie_bracket_polys(X: list[Poly], Y: list[Poly]) -> list[Poly]:
    """[X, Y]_i = sum_l (d_l Y_i) X_l - (d_l X_i) Y_l."""
    n = len(X)
    out = []
    for i in range(n):
        acc = Poly.zero(X[i].nvars)
        for l in range(n):
            acc = acc + Y[i].diff(l) * X[l] - X[i].diff(l) * Y[l]
        out.append(acc)
    return out


def map_to_arrays(polys: list[Poly]) -> tuple[np.ndarray, np.ndarray]:
    """Exponent-matrix form shared by all components: coeffs (p, T), exps (T, n).

    Dense over the union of monomials; absent coefficients are zero.
    This is the wire format consumed by the numeric kernels.
    """
    nvars = polys[0].nvars if polys else 0
    monomials = sorted({e for p in polys for e in p.terms})
    if not monomials:
        monomials = [(0,) * nvars]
    exps = np.array(monomials, dtype=np.int64).reshape(len(monomials), nvars)
    coeffs = np.zeros((len(polys), len(monomials)))
    index = {e: t for t, e in enumerate(monomials)}
    for i, p in enumerate(polys):
        for e, c in p.terms.items():
            coeffs[i, index[e]] = c
    return coeffs, exps


def compose_univariate(coeffs, inner: Poly) -> Poly:
    """sum_k coeffs[k] * inner^k for a univariate coefficient table."""
    out = Poly.zero(inner.nvars)
    power = Poly.constant(inner.nvars, 1.0)
    for k, c in enumerate(coeffs):
        if k > 0:
            power = power * inner
        if c != 0.0:
            out = out + float(c) * power
    return out


# -------------------------------------------------------------------- FD jets

def _fd_partial(f, x, alpha, h) -> np.ndarray:
    """Mixed partial d^alpha f by iterated central differences, O(h^2)."""
    x = np.asarray(x, dtype=float)
    total = None
    ranges = [range(e + 1) for e in alpha]
    for js in product(*ranges):
        w = 1.0
        offset = np.zeros_like(x)
        for k, (e, j) in enumerate(zip(alpha, js)):
            if e:
                w *= (-1.0) ** j * math.comb(e, j)
                offset[k] = (e - 2 * j) * h
        val = w * np.asarray(f(x + offset), dtype=float)
        total = val if total is None else total + val
    scale = (2.0 * h) ** sum(alpha)
    return total / scale if sum(alpha) else total


def fd_taylor_map(f, x, order: int, h: float | None = None) -> list[Poly]:
    """Local Taylor polynomials of a callable map at x, by central differences.

    Accuracy degrades quickly with the order; intended as the fallback
    for drifts without an exact jet oracle.
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    if h is None:
        h = max(np.finfo(float).eps ** (1.0 / (order + 2)), 1e-6)
    f0 = np.asarray(f(x), dtype=float)
    p = f0.size
    terms: list[dict] = [dict() for _ in range(p)]
    for alpha in _multi_indices(n, order):
        if sum(alpha) == 0:
            vals = f0
        else:
            vals = _fd_partial(f, x, alpha, h)
        fact = 1.0
        for e in alpha:
            fact *= math.factorial(e)
        for i in range(p):
            c = float(vals[i]) / fact
            if c != 0.0:
                terms[i][alpha] = c
    return [Poly(n, t) for t in terms]


def _multi_indices(n: int, max_order: int):
    def rec(prefix, remaining, slots):
        if slots == 0:
            yield tuple(prefix)
            return
        for e in range(remaining + 1):
            yield from rec(prefix + [e], remaining - e, slots - 1)

    for alpha in rec([], max_order, n):
        yield alpha


# -------------------------------------------------------------------- series

def _ser_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.size
    out = np.zeros(n)
    for i in range(n):
        out[i] = np.dot(a[: i + 1], b[i::-1])
    return out


def _ser_recip(a: np.ndarray) -> np.ndarray:
    if a[0] == 0.0:
        raise ZeroDivisionError("series reciprocal at zero constant term")
    n = a.size
    out = np.zeros(n)
    out[0] = 1.0 / a[0]
    for i in range(1, n):
        out[i] = -np.dot(a[1 : i + 1], out[i - 1 :: -1]) / a[0]
    return out


def _ser_exp(a: np.ndarray) -> np.ndarray:
    n = a.size
    out = np.zeros(n)
    out[0] = math.exp(a[0])
    for i in range(1, n):
        s = 0.0
        for j in range(1, i + 1):
            s += j * a[j] * out[i - j]
        out[i] = s / i
    return out


class SmoothBump:
    """C-infinity cutoff: 1 on (-inf, lo], 0 on [hi, inf), exp(-1/s) smoothstep between."""

    def __init__(self, lo: float, hi: float):
        if not hi > lo:
            raise ValueError("need hi > lo")
        self.lo = float(lo)
        self.hi = float(hi)

    def _sigma_series(self, s0: float, order: int) -> np.ndarray:
        """Taylor coefficients of the rising smoothstep at s0 in (0, 1)."""
        n = order + 1
        s = np.zeros(n)
        s[0] = s0
        if n > 1:
            s[1] = 1.0
        one_minus = np.zeros(n)
        one_minus[0] = 1.0 - s0
        if n > 1:
            one_minus[1] = -1.0
        f = _ser_exp(-_ser_recip(s))
        g = _ser_exp(-_ser_recip(one_minus))
        return _ser_mul(f, _ser_recip(f + g))

    def value(self, h: float) -> float:
        if h <= self.lo:
            return 1.0
        if h >= self.hi:
            return 0.0
        s = (self.hi - h) / (self.hi - self.lo)
        f = math.exp(-1.0 / s)
        g = math.exp(-1.0 / (1.0 - s))
        return f / (f + g)

    def derivatives(self, h: float, order: int) -> np.ndarray:
        """[chi(h), chi'(h), ..., chi^(order)(h)]."""
        out = np.zeros(order + 1)
        if h <= self.lo:
            out[0] = 1.0
            return out
        if h >= self.hi:
            return out
        w = self.hi - self.lo
        s0 = (self.hi - h) / w
        coeffs = self._sigma_series(s0, order)
        # chi(h + e) = sigma(s0 - e/w): k-th derivative picks up (-1/w)^k k!
        for k in range(order + 1):
            out[k] = coeffs[k] * math.factorial(k) * (-1.0 / w) ** k
        return out

    def value_batch(self, h: np.ndarray) -> np.ndarray:
        h = np.asarray(h, dtype=float)
        w = self.hi - self.lo
        s = np.clip((self.hi - h) / w, 1e-300, None)
        inside = (h > self.lo) & (h < self.hi)
        with np.errstate(divide="ignore", over="ignore"):
            f = np.where(inside, np.exp(-1.0 / np.where(inside, s, 1.0)), 0.0)
            g = np.where(inside, np.exp(-1.0 / np.where(inside, 1.0 - s, 1.0)), 1.0)
        out = np.where(h <= self.lo, 1.0, np.where(h >= self.hi, 0.0, f / (f + g)))
        return out

    def value_and_deriv_batch(self, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(chi(h), chi'(h)) elementwise, via the closed form of the smoothstep."""
        h = np.asarray(h, dtype=float)
        w = self.hi - self.lo
        inside = (h > self.lo) & (h < self.hi)
        s = np.where(inside, (self.hi - h) / w, 0.5)
        f = np.exp(-1.0 / s)
        g = np.exp(-1.0 / (1.0 - s))
        denom = f + g
        val = np.where(h <= self.lo, 1.0, np.where(h >= self.hi, 0.0, f / denom))
        sigma_p = f * g * (1.0 / s**2 + 1.0 / (1.0 - s) ** 2) / denom**2
        der = np.where(inside, -sigma_p / w, 0.0)
        return val, der
