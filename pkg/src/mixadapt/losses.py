"""The six training objectives, composed from the distribution and network ops.

Conventions shared by every loss here:

* Batch reduction is the arithmetic mean over the minibatch (for the two
  adversarial objectives, over the union of their sub-batches), so the
  hyperparameters stay decoupled from batch size.
* One Monte-Carlo sample per data point per forward pass for both the
  Gaussian and the categorical reparameterization.
* Noise comes from caller-supplied streams, never from hidden state.
* Which parameter groups a loss may update is decided structurally: each
  public op binds exactly the groups it is allowed to reach as tape leaves
  and routes every other network through constants. The discriminator loss
  therefore cannot leak gradients into the encoders, and the adversarial
  loss cannot move the discriminator, no matter how they are called.

The reconstruction likelihood is a fixed unit-variance Gaussian, so the
negative log-likelihood is ``0.5 * ||x - x_hat||^2 + D/2 * log(2 pi)``.
Class posteriors ``q(y|x)`` are realized as the latent classifier evaluated
at one reparameterized sample of ``q(z|x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .distributions import (
    CategoricalLogits,
    gumbel_noise,
    kl_categorical,
    kl_gaussian_to_component,
    sample_gaussian,
    sample_gumbel_softmax,
)
from .errors import ContractError, ParameterError
from .networks import Binding, BoundBundle, ModelBundle, classify_latent, decode, discriminate, encode
from .tensor import Tensor

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class LossWeights:
    """Scalar knobs of the objective family.

    ``alpha_s`` and ``alpha_t`` weight the discriminative terms of the
    source and target objectives, ``gamma`` mixes the supervised and
    unsupervised target terms, and ``tau`` is the temperature of the
    relaxed categorical sampler.
    """

    alpha_s: float = 1000.0
    alpha_t: float = 10.0
    gamma: float = 0.9
    tau: float = 3.0

    def __post_init__(self):
        if self.alpha_s < 0.0 or self.alpha_t < 0.0:
            raise ParameterError("alpha weights must be non-negative")
        if not 0.0 <= self.gamma <= 1.0:
            raise ParameterError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.tau <= 0.0:
            raise ParameterError(f"tau must be positive, got {self.tau}")


@dataclass
class NoiseStreams:
    """Separate generators for the two kinds of reparameterization noise."""

    gaussian: np.random.Generator
    gumbel: np.random.Generator

    @classmethod
    def coerce(cls, rng) -> "NoiseStreams":
        if isinstance(rng, NoiseStreams):
            return rng
        return cls(gaussian=rng, gumbel=rng)


@dataclass
class LossResult:
    """A scalar loss plus the binding that knows which parameters it may move.

    ``components`` carries the unweighted values of named sub-terms when the
    loss is a composite (used for reporting only).
    """

    loss: Tensor
    binding: Binding
    components: dict[str, float] = field(default_factory=dict)

    @property
    def value(self) -> float:
        return self.loss.item()


def _as_batch(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ContractError(f"{name} must be a (B, D) batch, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ContractError(f"{name} is empty")
    return arr


def _as_labels(y, class_count: int, batch: int) -> np.ndarray:
    if y is None:
        raise ContractError("this objective needs a fully labeled batch")
    arr = np.asarray(y)
    if arr.shape != (batch,):
        raise ContractError(f"labels must have shape ({batch},), got {arr.shape}")
    idx = arr.astype(np.int64)
    if np.any(idx != arr):
        raise ContractError("labels must be integers")
    if idx.size and (idx.min() < 0 or idx.max() >= class_count):
        raise ContractError(f"labels must lie in [0, {class_count}), got range "
                            f"[{idx.min()}, {idx.max()}]")
    return idx


def _source_groups(bundle: ModelBundle) -> set[str]:
    groups = {"source_encoder", "source_classifier", "decoder"}
    if not bundle.prior.fixed:
        groups.add("prior")
    return groups


def _target_groups(bundle: ModelBundle) -> set[str]:
    groups = {"target_encoder", "target_classifier"}
    if bundle.prior.train_during_adaptation and not bundle.prior.fixed:
        groups.add("prior")
    return groups


def _reparam(bb_net, x: np.ndarray, ns: NoiseStreams):
    gauss = encode(bb_net, x)
    eps = ns.gaussian.standard_normal(gauss.mu.shape)
    return gauss, sample_gaussian(gauss, eps)


def _gaussian_nll(x: np.ndarray, recon: Tensor) -> Tensor:
    diff = recon - T.constant(x)
    return 0.5 * T.tensor_sum(diff * diff, axis=1) + 0.5 * x.shape[1] * _LOG_2PI


def _picked_log_prob(logits: Tensor, labels: np.ndarray) -> Tensor:
    onehot = T.constant(T.one_hot(labels, logits.shape[-1]))
    return T.tensor_sum(T.log_softmax(logits) * onehot, axis=1)


def _cross_entropy_rows(logits: Tensor, labels: np.ndarray) -> Tensor:
    return -1.0 * _picked_log_prob(logits, labels)


def _kl_to_labelled_components(bb: BoundBundle, gauss, labels: np.ndarray) -> Tensor:
    mu_p = T.gather_rows(bb.prior_means, labels)
    lv_p = T.gather_rows(bb.prior_log_vars, labels)
    return kl_gaussian_to_component(gauss, mu_p, lv_p)


def _source_supervised(bb: BoundBundle, x, y, weights, ns) -> Tensor:
    gauss, z = _reparam(bb.source_encoder, x, ns)
    kl = _kl_to_labelled_components(bb, gauss, y)
    nll = _gaussian_nll(x, decode(bb.decoder, z))
    log_q = _picked_log_prob(classify_latent(bb.source_classifier, z), y)
    return T.tensor_mean(kl + nll - weights.alpha_s * log_q)


def _target_supervised(bb: BoundBundle, x, y, weights, ns) -> Tensor:
    gauss, z = _reparam(bb.target_encoder, x, ns)
    kl = _kl_to_labelled_components(bb, gauss, y)
    log_q = _picked_log_prob(classify_latent(bb.target_classifier, z), y)
    return T.tensor_mean(kl - weights.alpha_t * log_q)


def _target_unsupervised(bb: BoundBundle, x, weights, ns) -> Tensor:
    gauss, z = _reparam(bb.target_encoder, x, ns)
    logits = classify_latent(bb.target_classifier, z)
    q = T.exp(T.log_softmax(logits))
    class_prior = T.exp(T.log_softmax(bb.prior_class_log_weights))
    to_prior = kl_categorical(q, class_prior)

    g = gumbel_noise(ns.gumbel, logits.shape)
    _, hard = sample_gumbel_softmax(CategoricalLogits(logits), weights.tau, g)
    to_component = _kl_to_labelled_components(bb, gauss, np.atleast_1d(hard))
    return T.tensor_mean(to_prior + to_component)


def _discriminator_targets(bundle: ModelBundle, y: np.ndarray | None, n: int, fake: bool):
    """Label scheme for the discriminator: true classes plus a generated
    class, or plain source-vs-target when it was built binary."""
    if bundle.discriminator_classes == 2:
        return np.full(n, 1 if fake else 0, dtype=np.int64)
    if fake:
        return np.full(n, bundle.class_count, dtype=np.int64)
    return y


def _discriminator(bb: BoundBundle, sx, sy, tx, ns) -> Tensor:
    bundle = bb.bundle
    # Raw networks here: the embeddings enter as constants, so this loss
    # can only ever move the discriminator.
    gauss_s = encode(bundle.source_encoder, sx)
    z_s = sample_gaussian(gauss_s, ns.gaussian.standard_normal(gauss_s.mu.shape))
    ce_s = _cross_entropy_rows(discriminate(bb.discriminator, z_s),
                               _discriminator_targets(bundle, sy, sx.shape[0], fake=False))

    gauss_t = encode(bundle.target_encoder, tx)
    z_t = sample_gaussian(gauss_t, ns.gaussian.standard_normal(gauss_t.mu.shape))
    ce_t = _cross_entropy_rows(discriminate(bb.discriminator, z_t),
                               _discriminator_targets(bundle, None, tx.shape[0], fake=True))
    total = T.tensor_sum(ce_s) + T.tensor_sum(ce_t)
    return (1.0 / (sx.shape[0] + tx.shape[0])) * total


def _adversarial(bb: BoundBundle, unlabeled_x, labeled_x, labeled_y, weights, ns) -> Tensor:
    bundle = bb.bundle
    binary = bundle.discriminator_classes == 2
    pieces = []
    count = 0
    if unlabeled_x is not None:
        gauss_u, z_u = _reparam(bb.target_encoder, unlabeled_x, ns)
        logits = classify_latent(bb.target_classifier, z_u)
        g = gumbel_noise(ns.gumbel, logits.shape)
        _, pseudo = sample_gumbel_softmax(CategoricalLogits(logits), weights.tau, g)
        labels = np.zeros(unlabeled_x.shape[0], dtype=np.int64) if binary \
            else np.atleast_1d(pseudo)
        # The discriminator is a frozen constant here; only the encoder
        # (through z) feels this term.
        d_logits = discriminate(bundle.discriminator, z_u)
        pieces.append(T.tensor_sum(_cross_entropy_rows(d_logits, labels)))
        count += unlabeled_x.shape[0]
    if labeled_x is not None:
        _, z_l = _reparam(bb.target_encoder, labeled_x, ns)
        labels = np.zeros(labeled_x.shape[0], dtype=np.int64) if binary else labeled_y
        d_logits = discriminate(bundle.discriminator, z_l)
        pieces.append(T.tensor_sum(_cross_entropy_rows(d_logits, labels)))
        count += labeled_x.shape[0]
    total = pieces[0] if len(pieces) == 1 else pieces[0] + pieces[1]
    return (1.0 / count) * total


def _reconstruction(bb: BoundBundle, subsets, ns) -> Tensor:
    pieces = []
    count = 0
    for x in subsets:
        if x is None:
            continue
        _, z = _reparam(bb.target_encoder, x, ns)
        pieces.append(T.tensor_sum(_gaussian_nll(x, decode(bb.decoder, z))))
        count += x.shape[0]
    total = pieces[0] if len(pieces) == 1 else pieces[0] + pieces[1]
    return (1.0 / count) * total


def source_supervised_loss(bundle: ModelBundle, x, y, weights: LossWeights, rng) -> LossResult:
    """Labeled-source objective: component KL + reconstruction NLL minus the
    weighted class log-likelihood. Reaches the source encoder, the source
    classifier, the decoder, and (unless frozen) the prior."""
    x = _as_batch(x, "source batch")
    y = _as_labels(y, bundle.class_count, x.shape[0])
    ns = NoiseStreams.coerce(rng)
    binding = Binding()
    bb = BoundBundle(bundle, binding, _source_groups(bundle))
    return LossResult(_source_supervised(bb, x, y, weights, ns), binding)


def target_supervised_loss(bundle: ModelBundle, x, y, weights: LossWeights, rng) -> LossResult:
    """Labeled-target objective: KL to the already-optimized source prior
    plus the weighted class log-likelihood. Reaches the target encoder and
    classifier only (the prior stays frozen during adaptation by default)."""
    x = _as_batch(x, "target batch")
    y = _as_labels(y, bundle.class_count, x.shape[0])
    ns = NoiseStreams.coerce(rng)
    binding = Binding()
    bb = BoundBundle(bundle, binding, _target_groups(bundle))
    return LossResult(_target_supervised(bb, x, y, weights, ns), binding)


def target_unsupervised_loss(bundle: ModelBundle, x, weights: LossWeights, rng) -> LossResult:
    """Unlabeled-target objective: KL of the latent classifier to the class
    prior, plus KL of the posterior to the component picked by one hard
    relaxed-categorical sample."""
    x = _as_batch(x, "target batch")
    ns = NoiseStreams.coerce(rng)
    binding = Binding()
    bb = BoundBundle(bundle, binding, _target_groups(bundle))
    return LossResult(_target_unsupervised(bb, x, weights, ns), binding)


def discriminator_loss(bundle: ModelBundle, source_x, source_y, target_x, rng) -> LossResult:
    """Cross-entropy of the discriminator on source embeddings against their
    true class and on target embeddings against the generated class. The
    embeddings are detached, so only the discriminator can move."""
    sx = _as_batch(source_x, "source batch")
    sy = _as_labels(source_y, bundle.class_count, sx.shape[0])
    tx = _as_batch(target_x, "target batch")
    ns = NoiseStreams.coerce(rng)
    binding = Binding()
    bb = BoundBundle(bundle, binding, {"discriminator"})
    return LossResult(_discriminator(bb, sx, sy, tx, ns), binding)


def adversarial_loss(bundle: ModelBundle, unlabeled_x, labeled_x, labeled_y,
                     weights: LossWeights, rng) -> LossResult:
    """Confusion objective for the target encoder: land each target sample in
    the source region of its (pseudo-)class. The discriminator is frozen
    inside this op; gradients reach the target inference networks only."""
    ux = _as_batch(unlabeled_x, "unlabeled batch") if unlabeled_x is not None and len(unlabeled_x) else None
    lx = _as_batch(labeled_x, "labeled batch") if labeled_x is not None and len(labeled_x) else None
    if ux is None and lx is None:
        raise ContractError("adversarial loss needs at least one non-empty target subset")
    ly = _as_labels(labeled_y, bundle.class_count, lx.shape[0]) if lx is not None else None
    ns = NoiseStreams.coerce(rng)
    binding = Binding()
    bb = BoundBundle(bundle, binding, _target_groups(bundle))
    return LossResult(_adversarial(bb, ux, lx, ly, weights, ns), binding)


def target_total_loss(bundle: ModelBundle, labeled_x, labeled_y, unlabeled_x,
                      weights: LossWeights, rng, reconstruct_target: bool = False) -> LossResult:
    """Full target objective: ``gamma * supervised + (1 - gamma) *
    unsupervised + adversarial``, with an optional target reconstruction
    term when a target-side decoder is enabled.

    Either subset may be empty (its term simply drops out); both empty is a
    contract error. Noise is consumed in the fixed order supervised,
    unsupervised, adversarial, reconstruction, so the value equals the
    weighted sum of the standalone ops driven by one shared stream.
    """
    lx = _as_batch(labeled_x, "labeled batch") if labeled_x is not None and len(labeled_x) else None
    ux = _as_batch(unlabeled_x, "unlabeled batch") if unlabeled_x is not None and len(unlabeled_x) else None
    if lx is None and ux is None:
        raise ContractError("target step needs labeled or unlabeled data")
    ly = _as_labels(labeled_y, bundle.class_count, lx.shape[0]) if lx is not None else None
    ns = NoiseStreams.coerce(rng)

    groups = _target_groups(bundle)
    if reconstruct_target:
        groups = groups | {"decoder"}
    binding = Binding()
    bb = BoundBundle(bundle, binding, groups)

    total = None
    components: dict[str, float] = {}
    if lx is not None:
        sup = _target_supervised(bb, lx, ly, weights, ns)
        components["sup"] = sup.item()
        total = weights.gamma * sup
    if ux is not None:
        unsup = _target_unsupervised(bb, ux, weights, ns)
        components["unsup"] = unsup.item()
        scaled = (1.0 - weights.gamma) * unsup
        total = scaled if total is None else total + scaled
    adv = _adversarial(bb, ux, lx, ly, weights, ns)
    components["adv"] = adv.item()
    total = adv if total is None else total + adv
    if reconstruct_target:
        recon = _reconstruction(bb, (ux, lx), ns)
        components["recon"] = recon.item()
        total = total + recon
    return LossResult(total, binding, components)
