"""Batch front-end: `levysde <subcommand> --config file.toml [--out dir]`.

Subcommands dispatch to the library modules; all randomness derives
from the master seed in the config (or the --seed override), and rerunning
a subcommand with the same config produces byte-identical CSV bodies.

Exit codes: 0 success; 1 usage or config error; 2 numerical failure
(explosion, flow divergence); 3 verification failure (a scan or check
came back "not verified").
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import backend, feller_lab, hormander, malliavin, sde_core
from . import oscillator_chain as chain_mod
from .config import ExperimentConfig, load_config
from .errors import ConfigError, ExplosionError, FlowDivergenceError
from .reporting import config_hash, write_report, write_sidecar
from .subordinators import derive_rng, nondegeneracy_check, sample_path

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2
EXIT_NOT_VERIFIED = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="levysde",
        description="simulation and verification toolkit for SDEs driven by "
        "subordinated Brownian motion",
    )
    p.add_argument("subcommand", choices=[
        "simulate", "check-lyapunov", "check-hormander", "malliavin",
        "tv-profile", "oscillator-demo",
    ])
    p.add_argument("--config", required=True, help="TOML experiment file")
    p.add_argument("--seed", type=int, default=None, help="override master seed")
    p.add_argument("--out", default="reports", help="output directory")
    p.add_argument("--threads", type=int, default=None,
                   help="numba thread count (ignored on the numpy backend)")
    return p


def _set_threads(n: int | None) -> None:
    if n is None or not backend.have_numba():
        return
    import numba

    numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def _run_simulate(cfg: ExperimentConfig, out: Path, h: str) -> int:
    report = nondegeneracy_check(cfg.spec)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    sub = sample_path(cfg.spec, cfg.t, cfg.steps, cfg.seed)
    traj = sde_core.simulate_path(cfg.model, cfg.x0, sub, cfg.seed + 1,
                                  h_max=cfg.h_max)
    write_report(
        out / "subordinator.csv",
        ["t"] + [f"dl_{k + 1}" for k in range(sub.m)],
        [[sub.grid[0]] + [0.0] * sub.m]
        + [[sub.grid[i + 1]] + list(sub.increments[i]) for i in range(cfg.steps)],
        h,
    )
    write_report(
        out / "trajectory.csv",
        ["t"] + [f"x_{j + 1}" for j in range(cfg.model.dim_state)],
        [[t] + list(row) for t, row in zip(traj.grid, traj.states)],
        h,
    )
    write_sidecar(out / "simulate.meta.json", h, cfg.raw,
                  extra={"nondegenerate": report.ok})
    return EXIT_OK


def _run_check_lyapunov(cfg: ExperimentConfig, out: Path, h: str) -> int:
    n_points = int(cfg.lyapunov_opts.get("points", 1000))
    scale = float(cfg.lyapunov_opts.get("scale", 1.0))
    rng = derive_rng(cfg.seed, 17)
    points = cfg.x0 + scale * rng.standard_normal((n_points, cfg.model.dim_state))
    rep = sde_core.check_lyapunov(cfg.model, cfg.lyapunov, points)
    write_report(
        out / "lyapunov.csv",
        ["kappa_1", "kappa_2", "kappa_3", "violated", "n_points"],
        [[rep.kappa1, rep.kappa2, rep.kappa3,
          "yes" if rep.violated else "no", rep.n_points]],
        h,
    )
    write_sidecar(out / "lyapunov.meta.json", h, cfg.raw, extra={
        "kappa1": rep.kappa1, "kappa2": rep.kappa2, "kappa3": rep.kappa3,
        "violated": rep.violated,
    })
    return EXIT_NOT_VERIFIED if rep.violated else EXIT_OK


def _run_check_hormander(cfg: ExperimentConfig, out: Path, h: str) -> int:
    count = int(cfg.hormander.get("count", 100))
    n_max = int(cfg.hormander.get("n_max", 2 * cfg.model.dim_state))
    scale = float(cfg.hormander.get("scale", 1.0))
    sampler = hormander.gaussian_sampler(cfg.x0, scale)
    scan = hormander.rank_scan(cfg.model, sampler, count, n_max, seed=cfg.seed)
    rows = []
    for r in scan.reports:
        rows.append(
            list(r.point)
            + [r.minimal_order if r.attained else None,
               r.sigma_min, r.sigma_max,
               "ok" if r.attained else "not_attained"]
        )
    write_report(
        out / "hormander_scan.csv",
        [f"x_{j + 1}" for j in range(cfg.model.dim_state)]
        + ["minimal_order", "sigma_min", "sigma_max", "verdict"],
        rows, h, tolerances={"rank_rel_eps_factor": 1e3},
    )
    write_sidecar(out / "hormander.meta.json", h, cfg.raw, extra={
        "verified": scan.verified, "failures": scan.n_failures,
        "worst_conditioning": scan.worst_conditioning,
    })
    return EXIT_OK if scan.verified else EXIT_NOT_VERIFIED


def _run_malliavin(cfg: ExperimentConfig, out: Path, h: str) -> int:
    rep = malliavin.invertibility_stats(
        cfg.model, cfg.x0, cfg.spec, cfg.t, cfg.paths, cfg.seed,
        steps=cfg.steps, h_max=cfg.h_max,
    )
    write_report(
        out / "malliavin.csv",
        ["path_id", "lambda_min", "lambda_max", "trace"],
        [[i, rep.lambda_min[i], rep.lambda_max[i], rep.trace[i]]
         for i in range(rep.lambda_min.size)],
        h, tolerances={"eig_rel_floor": rep.rel_floor},
    )
    write_sidecar(out / "malliavin.meta.json", h, cfg.raw, extra={
        "fraction_invertible": rep.fraction_invertible,
        "quantiles": rep.quantiles, "n_failed": rep.n_failed,
    })
    return EXIT_OK


def _tv_rows(profile: feller_lab.FellerProfile, localized=()):
    rows = []
    for r, e in profile.rows():
        rows.append([r, e.value, e.noise_floor, e.stderr, None, None])
    for loc in localized:
        e = loc.estimate
        rows.append([None, e.value, e.noise_floor, e.stderr,
                     loc.exit_prob_x, loc.exit_prob_y])
    return rows


def _run_tv_profile(cfg: ExperimentConfig, out: Path, h: str) -> int:
    radii = tuple(cfg.tv.get("radii", (1.0, 0.5, 0.25, 0.125)))
    direction = np.asarray(
        cfg.tv.get("direction", np.eye(cfg.model.dim_state)[0]), dtype=float
    )
    profile = feller_lab.feller_profile(
        cfg.model, cfg.x0, direction, radii, cfg.spec, cfg.t, cfg.paths,
        cfg.seed, steps=cfg.steps, lyapunov=cfg.lyapunov, h_max=cfg.h_max,
    )
    localized = []
    for level in cfg.localization.get("levels", ()):
        sep = float(cfg.localization.get("separation", radii[0]))
        localized.append(feller_lab.localized_tv_estimate(
            cfg.model, cfg.lyapunov, int(level), cfg.x0,
            cfg.x0 + sep * direction / np.linalg.norm(direction),
            cfg.spec, cfg.t, cfg.paths, cfg.seed, steps=cfg.steps,
            h_max=cfg.h_max,
        ))
    write_report(
        out / "tv_profile.csv",
        ["r", "tv", "noise_floor", "stderr", "exit_prob_x", "exit_prob_y"],
        _tv_rows(profile, localized), h,
        tolerances={"binomial_stderr": profile.estimates[0].stderr},
    )
    write_sidecar(out / "tv_profile.meta.json", h, cfg.raw, extra={
        "verdict": profile.verdict,
        "binning": profile.estimates[0].binning,
        "localized": [
            {"level": loc.cutoff_level, "corrected_bound": loc.corrected_bound}
            for loc in localized
        ],
    })
    return EXIT_OK if profile.verdict.startswith("consistent") else EXIT_NOT_VERIFIED


def _run_oscillator_demo(cfg: ExperimentConfig, out: Path, h: str) -> int:
    if cfg.chain_params is None:
        raise ConfigError("oscillator-demo needs model.kind = 'oscillator_chain'",
                          field="model.kind")
    status = EXIT_OK

    rc = _run_check_lyapunov(cfg, out, h)
    status = max(status, rc)

    rng = derive_rng(cfg.seed, 23)
    count = int(cfg.hormander.get("count", 100))
    scale = float(cfg.hormander.get("scale", 1.0))
    span_rows = []
    span_ok = True
    for _ in range(count):
        x = cfg.x0 + scale * rng.standard_normal(cfg.model.dim_state)
        rep = chain_mod.bracket_span_check(cfg.chain_params, x)
        span_ok &= rep.full_rank
        span_rows.append(list(x) + [
            float(rep.singular_values[-1]), float(rep.singular_values[0]),
            "ok" if rep.full_rank else "degenerate",
        ])
    write_report(
        out / "span_check.csv",
        [f"x_{j + 1}" for j in range(cfg.model.dim_state)]
        + ["sigma_min", "sigma_max", "verdict"],
        span_rows, h, tolerances={"rank_rel_eps_factor": 1e3},
    )
    status = max(status, EXIT_OK if span_ok else EXIT_NOT_VERIFIED)

    status = max(status, _run_check_hormander(cfg, out, h))
    status = max(status, _run_tv_profile(cfg, out, h))
    write_sidecar(out / "oscillator_demo.meta.json", h, cfg.raw,
                  extra={"span_verified": span_ok})
    return status


_RUNNERS = {
    "simulate": _run_simulate,
    "check-lyapunov": _run_check_lyapunov,
    "check-hormander": _run_check_hormander,
    "malliavin": _run_malliavin,
    "tv-profile": _run_tv_profile,
    "oscillator-demo": _run_oscillator_demo,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    _set_threads(args.threads)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.seed = int(args.seed)
        cfg.raw.setdefault("experiment", {})["seed"] = cfg.seed
    out = Path(args.out)
    h = config_hash(cfg.raw)
    try:
        return _RUNNERS[args.subcommand](cfg, out, h)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ExplosionError, FlowDivergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
