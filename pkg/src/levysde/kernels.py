"""Hot-loop kernels: numpy reference implementations plus backend dispatch.

Each entry point has a numba twin in ``_kernels_numba`` compiled from
the same operation order, path by path. The numpy versions vectorize
across paths but keep the per-element arithmetic sequence identical
(term order, power-by-repeated-multiply, kick accumulation order), so
for polynomial drifts without a cutoff the two backends agree bitwise.

Drift wire format: ``coeffs`` (d, T) and ``exps`` (T, d) encode
b_i(x) = sum_t coeffs[i, t] * prod_k x_k^exps[t, k]; an optional smooth
cutoff multiplies by chi(H(x)) with chi supported on [cut_lo, cut_hi]
(``cut_lo < 0`` disables it).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import backend

__all__ = ["KernelDrift", "sim_terminal", "sim_states", "flow_pair"]

_numba_mod = None


def _numba():
    global _numba_mod
    if _numba_mod is None:
        from . import _kernels_numba

        _numba_mod = _kernels_numba
    return _numba_mod


@dataclass(frozen=True)
class KernelDrift:
    """Array form of a drift (and optional cutoff data) for the kernels."""

    coeffs: np.ndarray  # (d, T)
    exps: np.ndarray  # (T, d) int64
    jac_coeffs: np.ndarray  # (d*d, Tj) row-major Jacobian polymap
    jac_exps: np.ndarray  # (Tj, d)
    hcoeffs: np.ndarray  # (1, Th) Lyapunov value polymap (dummy when unused)
    hexps: np.ndarray
    hgrad_coeffs: np.ndarray  # (d, Tg) Lyapunov gradient polymap
    hgrad_exps: np.ndarray
    cut_lo: float = -1.0
    cut_hi: float = 0.0


# ------------------------------------------------------------- numpy twins

def _bump_batch(h, lo, hi):
    inside = (h > lo) & (h < hi)
    s = np.where(inside, (hi - h) / (hi - lo), 0.5)
    f = np.exp(-1.0 / s)
    g = np.exp(-1.0 / (1.0 - s))
    return np.where(h <= lo, 1.0, np.where(h >= hi, 0.0, f / (f + g)))


def _bump_deriv_batch(h, lo, hi):
    inside = (h > lo) & (h < hi)
    w = hi - lo
    s = np.where(inside, (hi - h) / w, 0.5)
    f = np.exp(-1.0 / s)
    g = np.exp(-1.0 / (1.0 - s))
    denom = f + g
    sigma_p = f * g * (1.0 / (s * s) + 1.0 / ((1.0 - s) * (1.0 - s))) / (denom * denom)
    return np.where(inside, -sigma_p / w, 0.0)


def _poly_eval_batch(coeffs, exps, X):
    """(P, nvars) -> (P, p_dim), matching the kernel's term/power order."""
    P = X.shape[0]
    out = np.zeros((P, coeffs.shape[0]))
    for t in range(exps.shape[0]):
        p = np.ones(P)
        for k in range(exps.shape[1]):
            for _ in range(int(exps[t, k])):
                p = p * X[:, k]
        for i in range(coeffs.shape[0]):
            c = coeffs[i, t]
            if c != 0.0:
                out[:, i] += c * p
    return out


def _drift_batch(kd: KernelDrift, X):
    out = _poly_eval_batch(kd.coeffs, kd.exps, X)
    if kd.cut_lo >= 0.0:
        hval = _poly_eval_batch(kd.hcoeffs, kd.hexps, X)[:, 0]
        chi = _bump_batch(hval, kd.cut_lo, kd.cut_hi)
        out = out * chi[:, None]
    return out


def _jacobian_batch(kd: KernelDrift, X):
    P = X.shape[0]
    d = kd.coeffs.shape[0]
    M = _poly_eval_batch(kd.jac_coeffs, kd.jac_exps, X).reshape(P, d, d)
    if kd.cut_lo >= 0.0:
        hval = _poly_eval_batch(kd.hcoeffs, kd.hexps, X)[:, 0]
        chi = _bump_batch(hval, kd.cut_lo, kd.cut_hi)
        dchi = _bump_deriv_batch(hval, kd.cut_lo, kd.cut_hi)
        bx = _poly_eval_batch(kd.coeffs, kd.exps, X)
        hg = _poly_eval_batch(kd.hgrad_coeffs, kd.hgrad_exps, X)
        M = chi[:, None, None] * M + dchi[:, None, None] * bx[:, :, None] * hg[:, None, :]
    return M


def _rk4_cells_numpy(drift_fn, X, dt, hmax):
    nsub = max(int(math.ceil(dt / hmax)), 1)
    h = dt / nsub
    for _ in range(nsub):
        k1 = drift_fn(X)
        k2 = drift_fn(X + (0.5 * h) * k1)
        k3 = drift_fn(X + (0.5 * h) * k2)
        k4 = drift_fn(X + h * k3)
        X = X + (h / 6.0) * (((k1 + 2.0 * k2) + 2.0 * k3) + k4)
    return X


def sim_generic(drift_fn, x0, A, dl, z, dt, hmax, record_states):
    """Pure-numpy splitting scheme over a batch, for any batch drift oracle."""
    P, N, m = dl.shape
    d = x0.shape[1]
    X = x0.copy()
    status = np.full(P, -1, dtype=np.int64)
    states = np.full((P, N + 1, d), np.nan) if record_states else None
    if record_states:
        states[:, 0] = X
    for i in range(N):
        X = _rk4_cells_numpy(drift_fn, X, dt, hmax)
        for k in range(m):
            xi = z[:, i, k] * np.sqrt(dl[:, i, k])
            for j in range(d):
                X[:, j] += A[j, k] * xi
        bad = ~np.isfinite(X).all(axis=1)
        newly = bad & (status == -1)
        status[newly] = i
        if record_states:
            ok = status == -1
            states[ok, i + 1] = X[ok]
    if record_states:
        return states, status
    X[status != -1] = np.nan
    return X, status


def flow_pair_generic(drift_fn, jac_fn, states, dt, hmax):
    """Pure-numpy J/K advance along one trajectory; jac_fn maps (4, d) -> (4, d, d)."""
    Np1, d = states.shape
    N = Np1 - 1
    J = np.empty((N + 1, d, d))
    K = np.empty((N + 1, d, d))
    J[0] = np.eye(d)
    K[0] = np.eye(d)
    nsub = max(int(math.ceil(dt / hmax)), 1)
    h = dt / nsub
    stage_c = (0.0, 0.5 * h, 0.5 * h, h)
    for cell in range(N):
        x = states[cell].copy()
        Jc, Kc = J[cell].copy(), K[cell].copy()
        for _ in range(nsub):
            xs = [None] * 4
            kx = [None] * 4
            xs[0] = x
            kx[0] = drift_fn(xs[0][None, :])[0]
            xs[1] = x + (0.5 * h) * kx[0]
            kx[1] = drift_fn(xs[1][None, :])[0]
            xs[2] = x + (0.5 * h) * kx[1]
            kx[2] = drift_fn(xs[2][None, :])[0]
            xs[3] = x + h * kx[2]
            kx[3] = drift_fn(xs[3][None, :])[0]
            Ms = jac_fn(np.stack(xs))
            JA = [None] * 4
            KA = [None] * 4
            for s in range(4):
                Jin = Jc if s == 0 else Jc + stage_c[s] * JA[s - 1]
                Kin = Kc if s == 0 else Kc + stage_c[s] * KA[s - 1]
                JA[s] = Ms[s] @ Jin
                KA[s] = -(Kin @ Ms[s])
            x = x + (h / 6.0) * (((kx[0] + 2.0 * kx[1]) + 2.0 * kx[2]) + kx[3])
            Jc = Jc + (h / 6.0) * (((JA[0] + 2.0 * JA[1]) + 2.0 * JA[2]) + JA[3])
            Kc = Kc + (h / 6.0) * (((KA[0] + 2.0 * KA[1]) + 2.0 * KA[2]) + KA[3])
        J[cell + 1] = Jc
        K[cell + 1] = Kc
    return J, K


# ---------------------------------------------------------------- dispatch

def _args(kd: KernelDrift):
    return (kd.coeffs, kd.exps, kd.hcoeffs, kd.hexps, kd.cut_lo, kd.cut_hi)


def sim_terminal(kd: KernelDrift, x0, A, dl, z, dt, hmax, force_backend=None):
    """Terminal states and explosion status for a batch of paths."""
    which = force_backend or backend.active_backend()
    if which == "numba":
        return _numba().sim_terminal(*_args(kd), x0, A, dl, z, dt, hmax)
    return sim_generic(lambda X: _drift_batch(kd, X), x0, A, dl, z, dt, hmax,
                       record_states=False)


def sim_states(kd: KernelDrift, x0, A, dl, z, dt, hmax, force_backend=None):
    """Full state grids (P, N+1, d) and explosion status."""
    which = force_backend or backend.active_backend()
    if which == "numba":
        return _numba().sim_states(*_args(kd), x0, A, dl, z, dt, hmax)
    return sim_generic(lambda X: _drift_batch(kd, X), x0, A, dl, z, dt, hmax,
                       record_states=True)


def flow_pair(kd: KernelDrift, states, dt, hmax, force_backend=None):
    """Jacobian flow J and inverse flow K along one stored trajectory."""
    which = force_backend or backend.active_backend()
    if which == "numba":
        return _numba().flow_pair(
            kd.coeffs, kd.exps, kd.jac_coeffs, kd.jac_exps,
            kd.hcoeffs, kd.hexps, kd.hgrad_coeffs, kd.hgrad_exps,
            kd.cut_lo, kd.cut_hi, states, dt, hmax,
        )
    return flow_pair_generic(
        lambda X: _drift_batch(kd, X), lambda X: _jacobian_batch(kd, X),
        states, dt, hmax,
    )
