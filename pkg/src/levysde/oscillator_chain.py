"""Chain of coupled oscillators with heat baths at both ends.

State ordering is (z_1..z_d, u_1..u_d), fixed globally so the noise
matrix has its two nonzero entries sqrt(T_1) and sqrt(T_d) exactly at
the (d+1)-st and (2d)-th diagonal slots. The drift is Hamiltonian plus
friction at the boundary particles:

    dz_i = u_i dt
    du_1 = -[dH/dz_1 + gamma_1 u_1] dt + sqrt(T_1) dW_{S_t}
    du_i = -dH/dz_i dt                       (1 < i < d)
    du_d = -[dH/dz_d + gamma_d u_d] dt + sqrt(T_d) dW_{S_t}

with H(z, u) = sum_i (u_i^2 / 2 + V(z_i)) + sum_i U(z_{i+1} - z_i).
Potentials enter as univariate coefficient tables (exact jets for the
polynomial examples), which keeps every Lie bracket in the module
symbolically exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .hormander import default_tol_policy
from .oracles import LyapunovFunction, PolynomialDrift
from .polyfield import Poly, compose_univariate, lie_bracket_polys, map_eval
from .sde_core import SdeModel

__all__ = [
    "ScalarPotential",
    "quadratic_potential",
    "quadratic_quartic_potential",
    "potential_from_coefficients",
    "ChainParams",
    "VectorFieldJet",
    "build_model",
    "drift_field",
    "hamiltonian_poly",
    "lie_bracket",
    "bracket_chain",
    "bracket_span_check",
    "SpanCheckReport",
    "chain_drift_reference",
]


@dataclass(frozen=True)
class ScalarPotential:
    """Univariate potential given by monomial coefficients (ascending powers).

    This is the "user table of Taylor coefficients" entry point: the
    table *is* the polynomial, so derivatives of any order are exact at
    any point.
    """

    coeffs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    def value(self, s: float) -> float:
        return self.derivative_value(s, 0)

    def derivative_value(self, s: float, order: int) -> float:
        total = 0.0
        for j in range(order, len(self.coeffs)):
            fact = 1.0
            for r in range(j, j - order, -1):
                fact *= r
            total += fact * self.coeffs[j] * s ** (j - order)
        return total

    def derivative_coeffs(self, order: int) -> tuple[float, ...]:
        c = list(self.coeffs)
        for _ in range(order):
            c = [j * c[j] for j in range(1, len(c))]
        return tuple(c)


def quadratic_potential() -> ScalarPotential:
    """V(z) = z^2 / 2."""
    return ScalarPotential((0.0, 0.0, 0.5))


def quadratic_quartic_potential() -> ScalarPotential:
    """U(z) = z^2 / 2 + z^4 / 4, strictly convex (U'' = 1 + 3 z^2 >= 1)."""
    return ScalarPotential((0.0, 0.0, 0.5, 0.0, 0.25))


def potential_from_coefficients(coeffs) -> ScalarPotential:
    return ScalarPotential(tuple(coeffs))


@dataclass(frozen=True)
class ChainParams:
    """d >= 3 particles (state dimension 2d), end frictions and temperatures."""

    d: int
    gamma1: float = 1.0
    gammad: float = 1.0
    t1: float = 1.0
    td: float = 1.0
    v: ScalarPotential = field(default_factory=quadratic_potential)
    u: ScalarPotential = field(default_factory=quadratic_quartic_potential)

    def __post_init__(self):
        if self.d < 3:
            raise ValueError(f"the chain needs d >= 3 particles, got {self.d}")
        if self.t1 <= 0 or self.td <= 0:
            raise ValueError("temperatures must be positive")

    @property
    def dim(self) -> int:
        return 2 * self.d


def hamiltonian_poly(params: ChainParams) -> Poly:
    d, n = params.d, params.dim
    H = Poly.zero(n)
    vprime_table = params.v.coeffs
    for i in range(d):
        u_i = Poly.variable(n, d + i)
        H = H + 0.5 * (u_i * u_i)
        H = H + compose_univariate(vprime_table, Poly.variable(n, i))
    for i in range(d - 1):
        gap = Poly.variable(n, i + 1) - Poly.variable(n, i)
        H = H + compose_univariate(params.u.coeffs, gap)
    return H


def _drift_polys(params: ChainParams) -> list[Poly]:
    d, n = params.d, params.dim
    vp = params.v.derivative_coeffs(1)
    up = params.u.derivative_coeffs(1)
    polys = [Poly.variable(n, d + i) for i in range(d)]  # dz_i = u_i
    for i in range(d):
        z_i = Poly.variable(n, i)
        dH = compose_univariate(vp, z_i)
        if i + 1 < d:
            dH = dH - compose_univariate(up, Poly.variable(n, i + 1) - z_i)
        if i - 1 >= 0:
            dH = dH + compose_univariate(up, z_i - Poly.variable(n, i - 1))
        p = -1.0 * dH
        if i == 0:
            p = p - params.gamma1 * Poly.variable(n, d)
        if i == d - 1:
            p = p - params.gammad * Poly.variable(n, 2 * d - 1)
        polys.append(p)
    return polys


def build_model(params: ChainParams) -> tuple[SdeModel, LyapunovFunction]:
    """The 2d-dimensional model plus the Hamiltonian as Lyapunov function."""
    n = params.dim
    A = np.zeros((n, n))
    A[params.d, params.d] = np.sqrt(params.t1)
    A[n - 1, n - 1] = np.sqrt(params.td)
    model = SdeModel(drift=PolynomialDrift(_drift_polys(params)), noise=A)
    return model, LyapunovFunction.from_poly(hamiltonian_poly(params))


def chain_drift_reference(params: ChainParams, x) -> np.ndarray:
    """Second, independently coded drift evaluator for cross-checks.

    Works from potential derivative values, not from the polynomial
    algebra that backs the model.
    """
    x = np.asarray(x, dtype=float)
    d = params.d
    z, u = x[:d], x[d:]
    out = np.empty(2 * d)
    out[:d] = u
    for i in range(d):
        dH = params.v.derivative_value(z[i], 1)
        if i + 1 < d:
            dH -= params.u.derivative_value(z[i + 1] - z[i], 1)
        if i - 1 >= 0:
            dH += params.u.derivative_value(z[i] - z[i - 1], 1)
        out[d + i] = -dH
    out[d] -= params.gamma1 * u[0]
    out[2 * d - 1] -= params.gammad * u[d - 1]
    return out


class VectorFieldJet:
    """Vector field with exact evaluation and mixed partials of any order."""

    def __init__(self, polys: list[Poly]):
        self.polys = list(polys)
        self.dim = polys[0].nvars

    @classmethod
    def basis(cls, dim: int, i: int) -> "VectorFieldJet":
        comps = [Poly.zero(dim) for _ in range(dim)]
        comps[i] = Poly.constant(dim, 1.0)
        return cls(comps)

    def eval(self, x) -> np.ndarray:
        return map_eval(self.polys, x)

    __call__ = eval

    def jet(self, x, order: int) -> list[Poly]:
        return [p.shifted(x).truncated(order) for p in self.polys]

    def jacobian(self, x) -> np.ndarray:
        return np.array(
            [[p.diff(j).eval(x) for j in range(self.dim)] for p in self.polys]
        )


def drift_field(params: ChainParams) -> VectorFieldJet:
    """The drift as a vector field (denoted script-V in the bracket chain)."""
    return VectorFieldJet(_drift_polys(params))


def lie_bracket(X: VectorFieldJet, Y: VectorFieldJet, x=None, order: int = 0):
    """[X, Y] = (grad Y) X - (grad X) Y.

    With `x` omitted the symbolic field is returned; otherwise the value
    at x (order 0) or its local jet (order > 0). The sign convention
    makes [d/du_1, drift] reproduce d/dz_1 - gamma_1 d/du_1 on the chain.
    """
    field_polys = lie_bracket_polys(X.polys, Y.polys)
    out = VectorFieldJet(field_polys)
    if x is None:
        return out
    if order > 0:
        return out.jet(x, order)
    return out.eval(x)


@lru_cache(maxsize=32)
def _bracket_fields(params: ChainParams, depth: int) -> tuple[VectorFieldJet, ...]:
    V = drift_field(params)
    fields = [VectorFieldJet.basis(params.dim, params.d)]  # d/du_1
    for _ in range(depth):
        fields.append(lie_bracket(fields[-1], V))
    return tuple(fields)


def bracket_chain(params: ChainParams, x, depth: int) -> list[np.ndarray]:
    """[U_0(x), ..., U_depth(x)] with U_0 = d/du_1, U_n = [U_{n-1}, drift].

    Nesting is capped at 2d - 2; deeper chains are rejected rather than
    silently degraded.
    """
    if depth < 0:
        raise ValueError("depth must be >= 0")
    if depth > 2 * params.d - 2:
        raise ValueError(
            f"bracket depth {depth} exceeds the cap 2d - 2 = {2 * params.d - 2}"
        )
    fields = _bracket_fields(params, depth)
    return [f.eval(x) for f in fields]


@dataclass(frozen=True)
class SpanCheckReport:
    """Rank evidence for the bracket span at one point."""

    point: np.ndarray
    matrix: np.ndarray  # columns U_0..U_{2d-3}, d/du_d, [d/du_d, drift]
    singular_values: np.ndarray
    tolerance: float
    full_rank: bool


def bracket_span_check(
    params: ChainParams, x, tol_policy=default_tol_policy
) -> SpanCheckReport:
    """Check Span{U_0, ..., U_{2d-3}, d/du_d, [d/du_d, drift]} = R^{2d}."""
    x = np.asarray(x, dtype=float)
    n = params.dim
    cols = bracket_chain(params, x, 2 * params.d - 3)
    end_basis = VectorFieldJet.basis(n, n - 1)
    cols.append(end_basis.eval(x))
    cols.append(lie_bracket(end_basis, drift_field(params), x))
    M = np.stack(cols, axis=1)
    sv = np.linalg.svd(M, compute_uv=False)
    tol = tol_policy(float(sv[0]), M.shape)
    return SpanCheckReport(
        point=x, matrix=M, singular_values=sv, tolerance=float(tol),
        full_rank=bool(sv[-1] > tol),
    )
