"""Batch Monte Carlo driver over the numeric kernels.

Randomness policy: path j of stream s under master seed draws all of
its variates from the generator hashed from (seed, s, j + 1); index 0
of each stream is reserved for shared draws (e.g. a subordinator path
held fixed across Brownian draws). Merging chunked results in path
order therefore reproduces the sequential run regardless of chunk size
or scheduling.
"""

from __future__ import annotations

import numpy as np

from . import kernels
from .subordinators import SubordinatorSpec, derive_rng, sample_increments

__all__ = [
    "run_states",
    "run_terminal",
    "terminal_states",
    "iter_state_chunks",
]

_DEFAULT_CHUNK = 1024


def _increments_for(noise_source, t, steps, rng):
    if isinstance(noise_source, SubordinatorSpec):
        return sample_increments(noise_source, t, steps, rng)
    # diagnostic clocks expose deterministic increments and consume no RNG
    return noise_source.deterministic_increments(t, steps)


def _noise_dim(noise_source) -> int:
    return noise_source.m


def run_states(model, x0s, dl, z, dt, h_max, force_backend=None):
    """Full state grids for pre-drawn noise arrays (no RNG involved)."""
    kd = model.drift.kernel_data()
    if kd is not None:
        return kernels.sim_states(kd, x0s, model.noise, dl, z, dt, h_max,
                                  force_backend=force_backend)
    return kernels.sim_generic(model.drift.eval_batch, x0s, model.noise,
                               dl, z, dt, h_max, record_states=True)


def run_terminal(model, x0s, dl, z, dt, h_max, force_backend=None):
    kd = model.drift.kernel_data()
    if kd is not None:
        return kernels.sim_terminal(kd, x0s, model.noise, dl, z, dt, h_max,
                                    force_backend=force_backend)
    return kernels.sim_generic(model.drift.eval_batch, x0s, model.noise,
                               dl, z, dt, h_max, record_states=False)


def _draw_chunk(noise_source, t, steps, m, seed, stream, lo, hi, shared_dl):
    c = hi - lo
    dl = np.empty((c, steps, m))
    z = np.empty((c, steps, m))
    for idx in range(c):
        rng = derive_rng(seed, stream, lo + idx + 1)
        if shared_dl is None:
            dl[idx] = _increments_for(noise_source, t, steps, rng)
        else:
            dl[idx] = shared_dl
        z[idx] = rng.standard_normal((steps, m))
    return dl, z


def terminal_states(
    model,
    x0,
    noise_source,
    t: float,
    steps: int,
    n_paths: int,
    seed: int,
    stream: int = 0,
    share_subordinator: bool = False,
    h_max: float = 1e-2,
    chunk: int = _DEFAULT_CHUNK,
    force_backend=None,
):
    """Terminal states (P, d) and explosion status (P,) for P fresh paths."""
    x0 = np.asarray(x0, dtype=float)
    m = _noise_dim(noise_source)
    dt = t / steps
    shared_dl = None
    if share_subordinator:
        shared_dl = _increments_for(
            noise_source, t, steps, derive_rng(seed, stream, 0)
        )
    out = np.empty((n_paths, model.dim_state))
    status = np.empty(n_paths, dtype=np.int64)
    for lo in range(0, n_paths, chunk):
        hi = min(lo + chunk, n_paths)
        dl, z = _draw_chunk(noise_source, t, steps, m, seed, stream, lo, hi, shared_dl)
        x0s = np.broadcast_to(x0, (hi - lo, x0.size)).copy()
        out[lo:hi], status[lo:hi] = run_terminal(
            model, x0s, dl, z, dt, h_max, force_backend=force_backend
        )
    return out, status


def iter_state_chunks(
    model,
    x0,
    noise_source,
    t: float,
    steps: int,
    n_paths: int,
    seed: int,
    stream: int = 0,
    share_subordinator: bool = False,
    h_max: float = 1e-2,
    chunk: int = 256,
    force_backend=None,
):
    """Yield (states (c, N+1, d), dl (c, N, m), status (c,)) per chunk."""
    x0 = np.asarray(x0, dtype=float)
    m = _noise_dim(noise_source)
    dt = t / steps
    shared_dl = None
    if share_subordinator:
        shared_dl = _increments_for(
            noise_source, t, steps, derive_rng(seed, stream, 0)
        )
    for lo in range(0, n_paths, chunk):
        hi = min(lo + chunk, n_paths)
        dl, z = _draw_chunk(noise_source, t, steps, m, seed, stream, lo, hi, shared_dl)
        x0s = np.broadcast_to(x0, (hi - lo, x0.size)).copy()
        states, status = run_states(
            model, x0s, dl, z, dt, h_max, force_backend=force_backend
        )
        yield states, dl, status
