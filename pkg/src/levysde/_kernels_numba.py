"""Numba-jitted hot kernels: per-path RK4 splitting steps and flow ODEs.

Imported lazily by ``kernels`` when the numba backend is active. The
numpy twins in ``kernels.py`` use the same operation order so that both
backends produce identical trajectories for polynomial drifts.
"""

import math

import numpy as np
from numba import njit, prange

# sentinel: cut_lo < 0 disables the drift cutoff


@njit(cache=True, inline="always")
def _bump(h, lo, hi):
    if h <= lo:
        return 1.0
    if h >= hi:
        return 0.0
    s = (hi - h) / (hi - lo)
    f = math.exp(-1.0 / s)
    g = math.exp(-1.0 / (1.0 - s))
    return f / (f + g)


@njit(cache=True, inline="always")
def _bump_deriv(h, lo, hi):
    # d/dh of _bump; negative inside the transition band
    if h <= lo or h >= hi:
        return 0.0
    w = hi - lo
    s = (hi - h) / w
    f = math.exp(-1.0 / s)
    g = math.exp(-1.0 / (1.0 - s))
    denom = f + g
    sigma_p = f * g * (1.0 / (s * s) + 1.0 / ((1.0 - s) * (1.0 - s))) / (denom * denom)
    return -sigma_p / w


@njit(cache=True, inline="always")
def _poly_eval(coeffs, exps, x, out):
    p_dim = coeffs.shape[0]
    for i in range(p_dim):
        out[i] = 0.0
    for t in range(exps.shape[0]):
        p = 1.0
        for k in range(exps.shape[1]):
            e = exps[t, k]
            for _ in range(e):
                p *= x[k]
        for i in range(p_dim):
            c = coeffs[i, t]
            if c != 0.0:
                out[i] += c * p
    return out


@njit(cache=True, inline="always")
def _poly_eval_scalar(coeffs, exps, x):
    total = 0.0
    for t in range(exps.shape[0]):
        p = 1.0
        for k in range(exps.shape[1]):
            e = exps[t, k]
            for _ in range(e):
                p *= x[k]
        c = coeffs[0, t]
        if c != 0.0:
            total += c * p
    return total


@njit(cache=True, inline="always")
def _drift(coeffs, exps, hcoeffs, hexps, cut_lo, cut_hi, x, out):
    _poly_eval(coeffs, exps, x, out)
    if cut_lo >= 0.0:
        hval = _poly_eval_scalar(hcoeffs, hexps, x)
        chi = _bump(hval, cut_lo, cut_hi)
        for i in range(out.shape[0]):
            out[i] *= chi
    return out


@njit(cache=True, inline="always")
def _rk4_cell(coeffs, exps, hcoeffs, hexps, cut_lo, cut_hi, x, dt, hmax,
              k1, k2, k3, k4, xt):
    d = x.shape[0]
    nsub = int(math.ceil(dt / hmax))
    if nsub < 1:
        nsub = 1
    h = dt / nsub
    for _ in range(nsub):
        _drift(coeffs, exps, hcoeffs, hexps, cut_lo, cut_hi, x, k1)
        for j in range(d):
            xt[j] = x[j] + (0.5 * h) * k1[j]
        _drift(coeffs, exps, hcoeffs, hexps, cut_lo, cut_hi, xt, k2)
        for j in range(d):
            xt[j] = x[j] + (0.5 * h) * k2[j]
        _drift(coeffs, exps, hcoeffs, hexps, cut_lo, cut_hi, xt, k3)
        for j in range(d):
            xt[j] = x[j] + h * k3[j]
        _drift(coeffs, exps, hcoeffs, hexps, cut_lo, cut_hi, xt, k4)
        for j in range(d):
            x[j] = x[j] + (h / 6.0) * (((k1[j] + 2.0 * k2[j]) + 2.0 * k3[j]) + k4[j])


@njit(cache=True, parallel=True)
def sim_terminal(coeffs, exps, hcoeffs, hexps, cut_lo, cut_hi,
                 x0, A, dl, z, dt, hmax):
    P, N, m = dl.shape
    d = x0.shape[1]
    out = np.empty((P, d))
    status = np.full(P, -1, dtype=np.int64)
    for p in prange(P):
        x = x0[p].copy()
        k1 = np.empty(d)
        k2 = np.empty(d)
        k3 = np.empty(d)
        k4 = np.empty(d)
        xt = np.empty(d)
        for i in range(N):
            _rk4_cell(coeffs, exps, hcoeffs, hexps, cut_lo, cut_hi,
                      x, dt, hmax, k1, k2, k3, k4, xt)
            for k in range(m):
                xi = z[p, i, k] * math.sqrt(dl[p, i, k])
                for j in range(d):
                    x[j] += A[j, k] * xi
            ok = True
            for j in range(d):
                if not math.isfinite(x[j]):
                    ok = False
            if not ok:
                status[p] = i
                for j in range(d):
                    x[j] = np.nan
                break
        out[p] = x
    return out, status


@njit(cache=True, parallel=True)
def sim_states(coeffs, exps, hcoeffs, hexps, cut_lo, cut_hi,
               x0, A, dl, z, dt, hmax):
    P, N, m = dl.shape
    d = x0.shape[1]
    states = np.full((P, N + 1, d), np.nan)
    status = np.full(P, -1, dtype=np.int64)
    for p in prange(P):
        x = x0[p].copy()
        k1 = np.empty(d)
        k2 = np.empty(d)
        k3 = np.empty(d)
        k4 = np.empty(d)
        xt = np.empty(d)
        states[p, 0] = x
        for i in range(N):
            _rk4_cell(coeffs, exps, hcoeffs, hexps, cut_lo, cut_hi,
                      x, dt, hmax, k1, k2, k3, k4, xt)
            for k in range(m):
                xi = z[p, i, k] * math.sqrt(dl[p, i, k])
                for j in range(d):
                    x[j] += A[j, k] * xi
            ok = True
            for j in range(d):
                if not math.isfinite(x[j]):
                    ok = False
            if not ok:
                status[p] = i
                break
            states[p, i + 1] = x
    return states, status


@njit(cache=True, inline="always")
def _jacobian(jcoeffs, jexps, coeffs, exps, hcoeffs, hexps,
              hgcoeffs, hgexps, cut_lo, cut_hi, x, M, bx, hg):
    d = M.shape[0]
    flat = M.reshape(d * d)
    _poly_eval(jcoeffs, jexps, x, flat)
    if cut_lo >= 0.0:
        hval = _poly_eval_scalar(hcoeffs, hexps, x)
        chi = _bump(hval, cut_lo, cut_hi)
        dchi = _bump_deriv(hval, cut_lo, cut_hi)
        _poly_eval(coeffs, exps, x, bx)
        _poly_eval(hgcoeffs, hgexps, x, hg)
        for i in range(d):
            for j in range(d):
                M[i, j] = chi * M[i, j] + dchi * bx[i] * hg[j]
    return M


@njit(cache=True)
def flow_pair(coeffs, exps, jcoeffs, jexps, hcoeffs, hexps, hgcoeffs, hgexps,
              cut_lo, cut_hi, states, dt, hmax):
    """Advance J' = M(x) J and K' = -K M(x) along a stored trajectory.

    Recomputes the in-cell drift stages from each stored left endpoint
    with the same RK4 substeps as the simulation, so the variational
    flows see exactly the path the states came from. Noise kicks leave
    J and K continuous; the post-kick state is re-read from `states`.
    """
    Np1, d = states.shape
    N = Np1 - 1
    J = np.empty((N + 1, d, d))
    K = np.empty((N + 1, d, d))
    for i in range(d):
        for j in range(d):
            J[0, i, j] = 1.0 if i == j else 0.0
            K[0, i, j] = 1.0 if i == j else 0.0
    x = np.empty(d)
    xs = np.empty((4, d))
    Ms = np.empty((4, d, d))
    bx = np.empty(d)
    hg = np.empty(d)
    kx = np.empty((4, d))
    Jc = np.empty((d, d))
    Kc = np.empty((d, d))
    JA = np.empty((4, d, d))
    KA = np.empty((4, d, d))
    tmp = np.empty((d, d))
    for cell in range(N):
        for j in range(d):
            x[j] = states[cell, j]
        for i in range(d):
            for j in range(d):
                Jc[i, j] = J[cell, i, j]
                Kc[i, j] = K[cell, i, j]
        nsub = int(math.ceil(dt / hmax))
        if nsub < 1:
            nsub = 1
        h = dt / nsub
        for _ in range(nsub):
            # stage states for x (classical RK4)
            for j in range(d):
                xs[0, j] = x[j]
            _drift(coeffs, exps, hcoeffs, hexps, cut_lo, cut_hi, xs[0], kx[0])
            for j in range(d):
                xs[1, j] = x[j] + (0.5 * h) * kx[0, j]
            _drift(coeffs, exps, hcoeffs, hexps, cut_lo, cut_hi, xs[1], kx[1])
            for j in range(d):
                xs[2, j] = x[j] + (0.5 * h) * kx[1, j]
            _drift(coeffs, exps, hcoeffs, hexps, cut_lo, cut_hi, xs[2], kx[2])
            for j in range(d):
                xs[3, j] = x[j] + h * kx[2, j]
            _drift(coeffs, exps, hcoeffs, hexps, cut_lo, cut_hi, xs[3], kx[3])
            for s in range(4):
                _jacobian(jcoeffs, jexps, coeffs, exps, hcoeffs, hexps,
                          hgcoeffs, hgexps, cut_lo, cut_hi, xs[s], Ms[s], bx, hg)
            # J stages: JA[s] = Ms[s] @ (Jc + coeff*h*JA[s-1])
            for s in range(4):
                if s == 0:
                    for i in range(d):
                        for j in range(d):
                            tmp[i, j] = Jc[i, j]
                else:
                    c = 0.5 * h if s < 3 else h
                    for i in range(d):
                        for j in range(d):
                            tmp[i, j] = Jc[i, j] + c * JA[s - 1, i, j]
                for i in range(d):
                    for j in range(d):
                        acc = 0.0
                        for l in range(d):
                            acc += Ms[s, i, l] * tmp[l, j]
                        JA[s, i, j] = acc
            # K stages: KA[s] = -(Kc + coeff*h*KA[s-1]) @ Ms[s]
            for s in range(4):
                if s == 0:
                    for i in range(d):
                        for j in range(d):
                            tmp[i, j] = Kc[i, j]
                else:
                    c = 0.5 * h if s < 3 else h
                    for i in range(d):
                        for j in range(d):
                            tmp[i, j] = Kc[i, j] + c * KA[s - 1, i, j]
                for i in range(d):
                    for j in range(d):
                        acc = 0.0
                        for l in range(d):
                            acc += tmp[i, l] * Ms[s, l, j]
                        KA[s, i, j] = -acc
            for j in range(d):
                x[j] = x[j] + (h / 6.0) * (((kx[0, j] + 2.0 * kx[1, j]) + 2.0 * kx[2, j]) + kx[3, j])
            for i in range(d):
                for j in range(d):
                    Jc[i, j] = Jc[i, j] + (h / 6.0) * (((JA[0, i, j] + 2.0 * JA[1, i, j]) + 2.0 * JA[2, i, j]) + JA[3, i, j])
                    Kc[i, j] = Kc[i, j] + (h / 6.0) * (((KA[0, i, j] + 2.0 * KA[1, i, j]) + 2.0 * KA[2, i, j]) + KA[3, i, j])
        for i in range(d):
            for j in range(d):
                J[cell + 1, i, j] = Jc[i, j]
                K[cell + 1, i, j] = Kc[i, j]
    return J, K
