"""Adam with bias correction, keyed by parameter name.

Moments live per named parameter so different objectives can update
disjoint groups without disturbing each other's state; the step counter is
also per parameter and advances only when that parameter is updated.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.001
    beta1: float = 0.5
    beta2: float = 0.5
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise ParameterError("learning rate must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ParameterError("betas must lie in [0, 1)")
        if self.epsilon <= 0.0:
            raise ParameterError("epsilon must be positive")


@dataclass
class AdamState:
    """First and second moment plus step count for one parameter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0


class Adam:
    def __init__(self, config: AdamConfig | None = None):
        self.config = config if config is not None else AdamConfig()
        self.state: dict[str, AdamState] = {}

    def step(self, name: str, param: np.ndarray, grad: np.ndarray) -> None:
        """One bias-corrected update, in place on ``param``."""
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != param.shape:
            raise ShapeError(f"gradient shape {grad.shape} != parameter shape "
                             f"{param.shape} for {name!r}")
        st = self.state.get(name)
        if st is None:
            st = self.state[name] = AdamState(np.zeros_like(param), np.zeros_like(param))
        cfg = self.config
        st.t += 1
        st.m = cfg.beta1 * st.m + (1.0 - cfg.beta1) * grad
        st.v = cfg.beta2 * st.v + (1.0 - cfg.beta2) * grad * grad
        m_hat = st.m / (1.0 - cfg.beta1 ** st.t)
        v_hat = st.v / (1.0 - cfg.beta2 ** st.t)
        param -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)

    def state_arrays(self) -> dict[str, np.ndarray]:
        """Flat view of the optimizer state for checkpointing."""
        out: dict[str, np.ndarray] = {}
        for name, st in sorted(self.state.items()):
            out[f"m/{name}"] = st.m
            out[f"v/{name}"] = st.v
            out[f"t/{name}"] = np.asarray(float(st.t))
        return out

    @classmethod
    def from_state_arrays(cls, config: AdamConfig, arrays: dict[str, np.ndarray]) -> "Adam":
        adam = cls(config)
        names = {key.split("/", 1)[1] for key in arrays if key.startswith("m/")}
        for name in names:
            adam.state[name] = AdamState(
                m=np.array(arrays[f"m/{name}"], dtype=np.float64),
                v=np.array(arrays[f"v/{name}"], dtype=np.float64),
                t=int(np.asarray(arrays[f"t/{name}"]).reshape(())),
            )
        return adam
