"""Bracket matrix chain and numerical rank condition.

The chain starts from B_1 = grad b (entries d_j b^i) and iterates

    B_n = (b . grad) B_{n-1} - (grad b) B_{n-1},

all entries polynomial in x for the built-in drift families. Each B_n
is produced symbolically -- by differentiating the recursion through
the drift's jets, never by differencing already-computed matrices -- so
evaluating B_n at a point is exact up to rounding. The rank condition
Rank[A, B_1 A, ..., B_n A] = d is decided from singular values with a
relative tolerance; determinant tests are avoided because near-
degeneracy is exactly what the report must expose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import JetOrderError
from .polyfield import Poly, jacobian_polys
from .sde_core import SdeModel
from .subordinators import derive_rng

__all__ = [
    "RankReport",
    "RankScanReport",
    "bracket_matrices",
    "rank_check",
    "rank_scan",
    "default_tol_policy",
    "gaussian_sampler",
]


def default_tol_policy(sigma1: float, shape: tuple[int, int]) -> float:
    """sigma_1 * max(dims) * machine epsilon, with a 10^3 safety factor."""
    return sigma1 * max(shape) * np.finfo(float).eps * 1e3


def _bracket_polys(drift_polys: list[Poly], n: int) -> list[list[list[Poly]]]:
    """Symbolic [B_1, ..., B_n] for a polynomial drift."""
    d = len(drift_polys)
    jac = jacobian_polys(drift_polys)  # jac[i][l] = d_l b^i
    chain = [jac]
    for _ in range(1, n):
        prev = chain[-1]
        nxt = [[Poly.zero(drift_polys[0].nvars) for _ in range(d)] for _ in range(d)]
        for i in range(d):
            for j in range(d):
                acc = Poly.zero(drift_polys[0].nvars)
                for l in range(d):
                    acc = acc + drift_polys[l] * prev[i][j].diff(l)
                    acc = acc - jac[i][l] * prev[l][j]
                nxt[i][j] = acc
        chain.append(nxt)
    return chain


def _drift_polys_at(model: SdeModel, x, n: int) -> tuple[list[Poly], np.ndarray]:
    """Global polys when available, else a local jet; returns eval point."""
    drift = model.drift
    polys = getattr(drift, "polys", None)
    if polys is not None:
        return polys, np.asarray(x, dtype=float)
    # local Taylor in offset coordinates: B_n(x) needs derivatives of b
    # through order n, so request exactly that depth
    if drift.order < n:
        raise JetOrderError(required=n, available=int(drift.order))
    return drift.taylor(np.asarray(x, dtype=float), n), np.zeros(model.dim_state)


def bracket_matrices(model: SdeModel, x, n: int) -> list[np.ndarray]:
    """[B_1(x), ..., B_n(x)] evaluated at x."""
    if n < 1:
        raise ValueError("need n >= 1")
    polys, point = _drift_polys_at(model, x, n)
    cache = None
    if getattr(model.drift, "polys", None) is not None:
        cache = getattr(model.drift, "_bracket_cache", None)
        if cache is None:
            cache = {}
            model.drift._bracket_cache = cache
    if cache is not None and cache.get("depth", 0) >= n:
        chain = cache["chain"][:n]
    else:
        chain = _bracket_polys(polys, n)
        if cache is not None:
            cache["depth"] = n
            cache["chain"] = chain
    d = model.dim_state
    out = []
    for mat in chain:
        out.append(np.array([[mat[i][j].eval(point) for j in range(d)]
                             for i in range(d)]))
    return out


@dataclass(frozen=True)
class RankReport:
    """Rank-condition evidence at one point.

    `singular_values[n]` is the spectrum of [A | B_1 A | ... | B_n A];
    `minimal_order` is the first n whose d-th singular value clears the
    tolerance, or None when rank d is not attained up to n_max.
    """

    point: np.ndarray
    blocks: list[np.ndarray]  # [A, B_1 A, ..., B_n A] up to the stopping order
    singular_values: list[np.ndarray]
    ranks: list[int]
    minimal_order: int | None
    n_max: int
    tolerance: float

    @property
    def attained(self) -> bool:
        return self.minimal_order is not None

    @property
    def sigma_min(self) -> float:
        return float(self.singular_values[-1][min(len(self.point), len(self.singular_values[-1])) - 1])

    @property
    def sigma_max(self) -> float:
        return float(self.singular_values[-1][0])


def rank_check(model: SdeModel, x, n_max: int | None = None,
               tol_policy=default_tol_policy) -> RankReport:
    """Assemble M_n = [A | B_1 A | ... | B_n A] for n = 0..n_max and stop at
    the first n whose numerical rank is d.

    n_max defaults to 2d, which covers the oscillator-chain family with
    room to spare; the condition allows arbitrary n, so raise it for
    exotic drifts.
    """
    if n_max is None:
        n_max = 2 * model.dim_state
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    x = np.asarray(x, dtype=float)
    d = model.dim_state
    A = model.noise
    blocks = [A.copy()]
    brackets = bracket_matrices(model, x, n_max) if n_max >= 1 else []
    spectra = []
    ranks = []
    minimal = None
    tol = 0.0
    for n in range(n_max + 1):
        if n >= 1:
            blocks.append(brackets[n - 1] @ A)
        M = np.hstack(blocks)
        sv = np.linalg.svd(M, compute_uv=False)
        tol = tol_policy(float(sv[0]), M.shape)
        rank = int(np.sum(sv > tol))
        spectra.append(sv)
        ranks.append(rank)
        if rank >= d:
            minimal = n
            break
    return RankReport(
        point=x, blocks=blocks, singular_values=spectra, ranks=ranks,
        minimal_order=minimal, n_max=n_max, tolerance=float(tol),
    )


@dataclass(frozen=True)
class RankScanReport:
    """Aggregate over sampled points; a single failure voids the scan.

    The scan is evidence, never proof: `verified` only says the rank
    condition held numerically at every sampled point.
    """

    reports: list[RankReport]
    minimal_orders: list[int | None]
    n_failures: int
    worst_conditioning: float  # smallest sigma_d / sigma_1 among successes

    @property
    def verified(self) -> bool:
        return self.n_failures == 0

    def to_csv(self, target) -> None:
        close = False
        if isinstance(target, (str, bytes)):
            target, close = open(target, "w", encoding="utf-8"), True
        try:
            d = len(self.reports[0].point) if self.reports else 0
            head = ", ".join(f"x_{j + 1}" for j in range(d))
            target.write(f"{head}, minimal_order, sigma_min, sigma_max, verdict\n")
            for r in self.reports:
                pt = ", ".join(f"{v:.17g}" for v in r.point)
                order = "" if r.minimal_order is None else str(r.minimal_order)
                verdict = "ok" if r.attained else "not_attained"
                target.write(
                    f"{pt}, {order}, {r.sigma_min:.17g}, {r.sigma_max:.17g}, {verdict}\n"
                )
        finally:
            if close:
                target.close()


def gaussian_sampler(mean, scale: float = 1.0):
    """Point sampler drawing Normal(mean, scale^2 I)."""
    mean = np.asarray(mean, dtype=float)

    def draw(rng: np.random.Generator) -> np.ndarray:
        return mean + scale * rng.standard_normal(mean.size)

    return draw


def rank_scan(
    model: SdeModel,
    sampler,
    count: int,
    n_max: int | None = None,
    seed: int = 0,
    tol_policy=default_tol_policy,
) -> RankScanReport:
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = derive_rng(seed)
    reports = []
    failures = 0
    worst = np.inf
    for _ in range(count):
        rep = rank_check(model, sampler(rng), n_max, tol_policy=tol_policy)
        reports.append(rep)
        if rep.attained:
            sv = rep.singular_values[-1]
            worst = min(worst, float(sv[model.dim_state - 1] / sv[0]))
        else:
            failures += 1
    return RankScanReport(
        reports=reports,
        minimal_orders=[r.minimal_order for r in reports],
        n_failures=failures,
        worst_conditioning=float(worst) if np.isfinite(worst) else float("nan"),
    )
