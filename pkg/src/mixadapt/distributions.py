"""Reparameterized samplers and closed-form divergences.

Every operation here is a pure function over immutable tensors; the noise
that randomized ops need is drawn by the caller and passed in, which keeps
each op deterministic and directly testable.

Variances are carried as log-variances throughout, so positivity holds by
construction and no clamping is ever needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DataDomainError, ParameterError, ShapeError
from .tensor import Tensor

_SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class DiagonalGaussian:
    """Diagonal Gaussian given by a mean and a log-variance of equal shape.

    A single distribution uses rank-1 tensors; a batch stacks them along
    the leading axis.
    """

    mu: Tensor
    log_var: Tensor

    def __post_init__(self):
        if self.mu.shape != self.log_var.shape:
            raise ShapeError(
                f"mu shape {self.mu.shape} != log_var shape {self.log_var.shape}")


@dataclass(frozen=True)
class CategoricalLogits:
    """Unnormalised log-probabilities over classes (last axis)."""

    logits: Tensor

    @property
    def num_classes(self) -> int:
        return self.logits.shape[-1]


def sample_gaussian(g: DiagonalGaussian, noise) -> Tensor:
    """Draw ``mu + exp(log_var / 2) * noise`` with gradients through both.

    ``noise`` must be standard-normal values of the same shape as ``g.mu``,
    drawn by the caller.
    """
    eps = T.as_tensor(noise)
    if eps.shape != g.mu.shape:
        raise ShapeError(f"noise shape {eps.shape} != distribution shape {g.mu.shape}")
    return g.mu + T.exp(0.5 * g.log_var) * eps


def kl_gaussian_to_component(q: DiagonalGaussian, mu_y: Tensor, log_var_y: Tensor) -> Tensor:
    """Closed-form KL from a diagonal Gaussian to one mixture component.

    Per coordinate the divergence is
    ``(log s2_y - log s2_q - 1 + s2_q / s2_y + (mu_q - mu_y)^2 / s2_y) / 2``
    summed over the last axis. All four inputs are differentiable, so the
    component parameters can be learnt as well.

    Rank-1 inputs give a scalar; a batched ``(B, J)`` posterior paired with
    ``(B, J)`` component rows gives a ``(B,)`` vector.
    """
    mu_y = T.as_tensor(mu_y)
    log_var_y = T.as_tensor(log_var_y)
    diff_lv = q.log_var - log_var_y
    maha = T.square(q.mu - mu_y) * T.exp(-1.0 * log_var_y)
    inner = T.exp(diff_lv) - diff_lv - 1.0 + maha
    rank = len(inner.shape)
    return 0.5 * T.tensor_sum(inner, axis=rank - 1)


def gumbel_noise(rng: np.random.Generator, shape) -> np.ndarray:
    """Standard Gumbel(0, 1) draws via the double-log transform."""
    u = rng.uniform(size=shape)
    return -np.log(-np.log(u))


def sample_gumbel_softmax(c: CategoricalLogits, tau: float, noise):
    """Temperature-relaxed categorical sample.

    Returns the softmax relaxation ``exp((logits + g) / tau)`` (normalised,
    differentiable through the logits) together with its argmax. The argmax
    is distributed exactly as ``softmax(logits)`` whatever the temperature,
    since adding Gumbel noise and taking the max is an exact sampler.

    For rank-1 logits the hard value is a python int; for a batch it is an
    int vector.
    """
    if tau <= 0.0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    g = T.as_tensor(noise)
    if g.shape != c.logits.shape:
        raise ShapeError(f"noise shape {g.shape} != logits shape {c.logits.shape}")
    soft = T.exp(T.log_softmax((c.logits + g) * (1.0 / tau)))
    hard = np.argmax(soft.data, axis=-1)
    if soft.data.ndim == 1:
        return soft, int(hard)
    return soft, hard.astype(np.int64)


def straight_through_onehot(soft: Tensor, hard) -> Tensor:
    """One-hot of the hard choice forward, gradient of the soft relaxation back."""
    if soft.data.ndim == 1:
        onehot = T.one_hot([hard], soft.shape[-1])[0]
    else:
        onehot = T.one_hot(hard, soft.shape[-1])
    return T.constant(onehot) + (soft - T.detach(soft))


def _check_simplex(name: str, p: np.ndarray):
    if np.any(p < -_SIMPLEX_TOL):
        raise DataDomainError(f"{name} has negative entries")
    sums = p.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > _SIMPLEX_TOL):
        raise DataDomainError(f"{name} rows must sum to 1, got {sums}")


def kl_categorical(q_probs, p_probs) -> Tensor:
    """Discrete KL ``sum_k q_k log(q_k / p_k)`` over the last axis.

    Zero entries in ``q`` contribute nothing (the ``0 log 0`` convention);
    a positive ``q_k`` paired with ``p_k = 0`` is a support violation.
    """
    q = T.as_tensor(q_probs)
    p = T.as_tensor(p_probs)
    _check_simplex("q", q.data)
    _check_simplex("p", p.data)
    q_data, p_data = np.broadcast_arrays(q.data, p.data)
    if np.any((q_data > 0.0) & (p_data == 0.0)):
        raise DataDomainError("support violation: q places mass where p has none")

    # Replace masked-out entries by 1 so log() stays in-domain; the factor
    # q_k = 0 removes their contribution.
    safe_q = q + T.constant((q.data == 0.0).astype(np.float64))
    safe_p = p + T.constant((p.data == 0.0).astype(np.float64))
    inner = q * (T.log(safe_q) - T.log(safe_p))
    rank = len(inner.shape)
    return T.tensor_sum(inner, axis=rank - 1)
