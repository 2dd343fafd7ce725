"""The learnable Gaussian-mixture embedding prior: one component per class.

Component means start on distinct coordinate axes at a fixed radius so the
classes begin well separated; variances start at a configured value. Both
are plain numpy arrays updated in place by the optimizer; losses bind them
onto a tape when gradients should flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ParameterError
from .tensor import Tensor

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass
class GmmPrior:
    class_count: int
    latent_dim: int
    means: np.ndarray              # (K, J)
    log_vars: np.ndarray           # (K, J)
    class_log_weights: np.ndarray  # (K,)
    fixed: bool = False            # freeze means/vars even during source training
    learn_class_weights: bool = False
    train_during_adaptation: bool = False

    def clone(self) -> "GmmPrior":
        return GmmPrior(self.class_count, self.latent_dim,
                        self.means.copy(), self.log_vars.copy(),
                        self.class_log_weights.copy(), self.fixed,
                        self.learn_class_weights, self.train_during_adaptation)

    def arrays(self) -> dict[str, np.ndarray]:
        return {"means": self.means, "log_vars": self.log_vars,
                "class_log_weights": self.class_log_weights}


def init_prior(class_count: int, latent_dim: int, radius: float, init_sigma: float,
               **flags) -> GmmPrior:
    """Deterministically place one component per class.

    Class ``y`` sits at ``radius`` along axis ``y mod J``; when there are
    more classes than axes the assignment wraps around with alternating
    sign, so means stay distinct. With ``K <= J`` the means are mutually
    orthogonal and pairwise ``radius * sqrt(2)`` apart.
    """
    if class_count < 2:
        raise ParameterError(f"need at least 2 classes, got {class_count}")
    if latent_dim < 1:
        raise ParameterError(f"latent dimension must be >= 1, got {latent_dim}")
    if radius <= 0.0:
        raise ParameterError(f"radius must be positive, got {radius}")
    if init_sigma <= 0.0:
        raise ParameterError(f"init sigma must be positive, got {init_sigma}")

    means = np.zeros((class_count, latent_dim))
    for y in range(class_count):
        axis = y % latent_dim
        sign = 1.0 if (y // latent_dim) % 2 == 0 else -1.0
        means[y, axis] = sign * radius
    log_vars = np.full((class_count, latent_dim), 2.0 * np.log(init_sigma))
    class_log_weights = np.full(class_count, -np.log(class_count))
    return GmmPrior(class_count, latent_dim, means, log_vars, class_log_weights, **flags)


def component(prior: GmmPrior, y: int, binding=None) -> tuple[Tensor, Tensor]:
    """Mean and log-variance of class ``y``'s component.

    Without a binding the rows come back as constants; with one, they are
    gathered from the bound prior tensors so gradients can reach the prior
    when the binding marked it trainable.
    """
    if not 0 <= y < prior.class_count:
        raise IndexError(f"class index {y} out of range for {prior.class_count} components")
    if binding is None:
        return T.constant(prior.means[y]), T.constant(prior.log_vars[y])
    means, log_vars, _ = binding.prior_tensors(prior)
    idx = np.array([y])
    mu = T.gather_rows(means, idx)
    lv = T.gather_rows(log_vars, idx)
    # Collapse the singleton batch axis via a sum, keeping the tape intact.
    return T.tensor_sum(mu, axis=0), T.tensor_sum(lv, axis=0)


def responsibilities(prior: GmmPrior, z) -> Tensor:
    """Posterior class probabilities of ``z`` under the mixture.

    Diagnostic only (the trained classifier network is the model's actual
    predictor), so this is computed outside any tape.
    """
    z_arr = z.data if isinstance(z, Tensor) else np.asarray(z, dtype=np.float64)
    squeeze = z_arr.ndim == 1
    z2 = z_arr.reshape(1, -1) if squeeze else z_arr

    lw = prior.class_log_weights
    log_pi = lw - np.logaddexp.reduce(lw)
    # log N(z | mu_y, sigma_y^2) per class, diagonal covariance.
    diff = z2[:, None, :] - prior.means[None, :, :]           # (B, K, J)
    quad = (diff * diff * np.exp(-prior.log_vars)[None]).sum(axis=2)
    log_det = prior.log_vars.sum(axis=1)
    log_n = -0.5 * (prior.latent_dim * _LOG_2PI + log_det[None] + quad)
    scores = log_pi[None] + log_n
    scores -= scores.max(axis=1, keepdims=True)
    probs = np.exp(scores)
    probs /= probs.sum(axis=1, keepdims=True)
    return T.constant(probs[0] if squeeze else probs)
