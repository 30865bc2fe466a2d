"""levysde: simulation and verification toolkit for degenerate SDEs driven
by subordinated Brownian motion.

Subpackages map one-to-one onto the pipeline stages:

* ``subordinators`` -- sample multi-component increasing Levy processes.
* ``sde_core`` -- SDE models, path integration, Lyapunov diagnostics.
* ``malliavin`` -- Jacobian/inverse flows and the Malliavin covariance.
* ``hormander`` -- bracket matrices and numerical rank checks.
* ``oscillator_chain`` -- heat-bath chain model and its Lie brackets.
* ``feller_lab`` -- total-variation experiments for the strong Feller
  property, including the cutoff/localization protocol.
* ``cli`` -- batch front-end over a TOML configuration.

Hot numeric loops run through numba kernels by default; set the
environment variable ``LEVYSDE_BACKEND=numpy`` to select the pure-numpy
fallback (see ``levysde.backend``).
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ExplosionError,
    FlowDivergenceError,
    JetOrderError,
    ModelError,
)

__all__ = [
    "ConfigError",
    "ExplosionError",
    "FlowDivergenceError",
    "JetOrderError",
    "ModelError",
    "__version__",
]
