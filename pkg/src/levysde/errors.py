"""Toolkit exception types."""


class ExplosionError(RuntimeError):
    """State left the finite range during integration.

    Carries `first_bad_time`, the left grid time of the first cell whose
    state came out non-finite. Expected for super-linear drifts without a
    cutoff; the localization protocol is the sanctioned workaround.
    """

    def __init__(self, first_bad_time: float, message: str | None = None):
        self.first_bad_time = float(first_bad_time)
        super().__init__(
            message
            or f"trajectory exploded: non-finite state at t = {first_bad_time:g}"
        )


class FlowDivergenceError(RuntimeError):
    """The K J = I defect exceeded the flow tolerance; use smaller steps."""

    def __init__(self, defect: float, tol: float, time: float):
        self.defect = float(defect)
        self.tol = float(tol)
        self.time = float(time)
        super().__init__(
            f"inverse-flow defect {defect:.3e} exceeds tolerance {tol:.1e} at "
            f"t = {time:g}; re-run with a finer grid or smaller drift substeps"
        )


class JetOrderError(ValueError):
    """A derivative oracle was asked beyond its supported jet order."""

    def __init__(self, required: int, available: int):
        self.required = int(required)
        self.available = int(available)
        super().__init__(
            f"derivative oracle supports jets up to order {available}, "
            f"but order {required} is required"
        )


class ModelError(ValueError):
    """A model ingredient violated its contract (e.g. negative Lyapunov value)."""


class ConfigError(ValueError):
    """Experiment configuration failed to parse or validate."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(message if field is None else f"[{field}] {message}")
