"""Experiment configuration: TOML parsing and validation.

One human-editable file declares the model, the driving subordinator
and the experiment parameters. Validation reports the offending field;
dimension consistency between model, noise matrix and subordinator is
checked up front so runs fail before any sampling starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import oscillator_chain as chain
from .errors import ConfigError
from .oracles import LyapunovFunction, quadratic_lyapunov
from .sde_core import SdeModel, linear_model, polynomial_model
from .subordinators import (
    CompoundPoisson,
    ConstantJumps,
    ExponentialJumps,
    GammaSubordinator,
    StableSubordinator,
    SubordinatorSpec,
)

__all__ = ["ExperimentConfig", "load_config"]


@dataclass
class ExperimentConfig:
    """Validated experiment inputs plus the raw dict for hashing."""

    model: SdeModel
    lyapunov: LyapunovFunction
    spec: SubordinatorSpec
    t: float
    steps: int
    paths: int
    seed: int
    h_max: float
    x0: np.ndarray
    raw: dict
    tv: dict = field(default_factory=dict)
    hormander: dict = field(default_factory=dict)
    lyapunov_opts: dict = field(default_factory=dict)
    localization: dict = field(default_factory=dict)
    chain_params: chain.ChainParams | None = None


def _need(table: dict, key: str, section: str):
    if key not in table:
        raise ConfigError(f"missing required key `{key}`", field=section)
    return table[key]


def _potential(value, section: str) -> chain.ScalarPotential:
    if isinstance(value, str):
        registry = {
            "quadratic": chain.quadratic_potential,
            "quadratic_quartic": chain.quadratic_quartic_potential,
        }
        if value not in registry:
            raise ConfigError(
                f"unknown potential {value!r}; use one of {sorted(registry)} "
                "or a coefficient table", field=section,
            )
        return registry[value]()
    try:
        return chain.potential_from_coefficients([float(c) for c in value])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad potential table: {exc}", field=section) from None


def _build_model(table: dict) -> tuple[SdeModel, LyapunovFunction, chain.ChainParams | None]:
    kind = _need(table, "kind", "model")
    if kind == "linear":
        B = np.asarray(_need(table, "B", "model"), dtype=float)
        A = np.asarray(_need(table, "A", "model"), dtype=float)
        try:
            model = linear_model(B, A)
        except ValueError as exc:
            raise ConfigError(str(exc), field="model") from None
        return model, quadratic_lyapunov(model.dim_state), None
    if kind == "polynomial":
        coeffs = _need(table, "coeffs", "model")
        exponents = _need(table, "exponents", "model")
        A = np.asarray(_need(table, "A", "model"), dtype=float)
        try:
            model = polynomial_model(coeffs, exponents, A)
        except ValueError as exc:
            raise ConfigError(str(exc), field="model") from None
        return model, quadratic_lyapunov(model.dim_state), None
    if kind == "oscillator_chain":
        try:
            params = chain.ChainParams(
                d=int(_need(table, "d", "model")),
                gamma1=float(table.get("gamma1", 1.0)),
                gammad=float(table.get("gammad", 1.0)),
                t1=float(table.get("t1", 1.0)),
                td=float(table.get("td", 1.0)),
                v=_potential(table.get("v", "quadratic"), "model.v"),
                u=_potential(table.get("u", "quadratic_quartic"), "model.u"),
            )
        except ValueError as exc:
            raise ConfigError(str(exc), field="model") from None
        model, H = chain.build_model(params)
        if bool(table.get("degenerate", False)):
            # diagnostic variant: same drift, zero noise matrix
            model = SdeModel(drift=model.drift, noise=np.zeros_like(model.noise))
        return model, H, params
    raise ConfigError(f"unknown model kind {kind!r}", field="model.kind")


def _component(table: dict, section: str):
    kind = _need(table, "kind", section)
    try:
        if kind == "stable":
            return StableSubordinator(beta=float(_need(table, "beta", section)))
        if kind == "gamma":
            return GammaSubordinator(
                shape=float(_need(table, "shape", section)),
                rate=float(_need(table, "rate", section)),
            )
        if kind == "compound_poisson":
            jumps_kind = table.get("jumps", "constant")
            if jumps_kind == "constant":
                jumps = ConstantJumps(size=float(table.get("jump_size", 1.0)))
            elif jumps_kind == "exponential":
                jumps = ExponentialJumps(mean=float(table.get("jump_mean", 1.0)))
            else:
                raise ConfigError(
                    f"unknown jump law {jumps_kind!r}", field=f"{section}.jumps"
                )
            return CompoundPoisson(rate=float(_need(table, "rate", section)), jumps=jumps)
    except ValueError as exc:
        raise ConfigError(str(exc), field=section) from None
    raise ConfigError(f"unknown subordinator kind {kind!r}", field=f"{section}.kind")


def _build_spec(table: dict, m_expected: int) -> SubordinatorSpec:
    if "components" in table:
        comps = [
            _component(c, f"subordinator.components[{i}]")
            for i, c in enumerate(table["components"])
        ]
    else:
        count = int(table.get("count", m_expected))
        comps = [_component(table, "subordinator")] * count
    if len(comps) != m_expected:
        raise ConfigError(
            f"subordinator has {len(comps)} components but the model drives "
            f"{m_expected} noise directions", field="subordinator",
        )
    return SubordinatorSpec(comps)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error in {path}: {exc}") from None

    model, lyapunov, chain_params = _build_model(_need(raw, "model", "config"))
    spec = _build_spec(_need(raw, "subordinator", "config"), model.dim_noise)

    exp = raw.get("experiment", {})
    t = float(exp.get("t", 1.0))
    steps = int(exp.get("steps", 400))
    paths = int(exp.get("paths", 1000))
    seed = int(exp.get("seed", 0))
    h_max = float(exp.get("h_max", 1e-2))
    if t <= 0:
        raise ConfigError("horizon t must be positive", field="experiment.t")
    if steps < 1:
        raise ConfigError("steps must be >= 1", field="experiment.steps")
    if paths < 1:
        raise ConfigError("paths must be >= 1", field="experiment.paths")
    x0 = np.asarray(exp.get("x0", [0.0] * model.dim_state), dtype=float)
    if x0.shape != (model.dim_state,):
        raise ConfigError(
            f"x0 must have {model.dim_state} entries, got {x0.size}",
            field="experiment.x0",
        )
    tv = exp.get("tv", {})
    if "direction" in tv:
        direction = np.asarray(tv["direction"], dtype=float)
        if direction.shape != (model.dim_state,):
            raise ConfigError(
                f"direction must have {model.dim_state} entries",
                field="experiment.tv.direction",
            )
        if not np.linalg.norm(direction) > 0:
            raise ConfigError("direction must be nonzero",
                              field="experiment.tv.direction")
    return ExperimentConfig(
        model=model, lyapunov=lyapunov, spec=spec,
        t=t, steps=steps, paths=paths, seed=seed, h_max=h_max, x0=x0,
        raw=raw,
        tv=tv,
        hormander=exp.get("hormander", {}),
        lyapunov_opts=exp.get("lyapunov", {}),
        localization=exp.get("localization", {}),
        chain_params=chain_params,
    )
