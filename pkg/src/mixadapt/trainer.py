"""The three-step training schedule.

Phase one fits the source model (encoder, classifier, decoder, prior) on
labeled source data. Phase two alternates, per iteration, a configurable
number of discriminator steps with one target step; discriminator steps
move only the discriminator, target steps move only the target inference
networks (plus the decoder when a target-side reconstruction term is
enabled). The isolation is structural: each step's loss binds exactly its
own parameter group onto the tape.

Randomness is split into named streams (init, shuffle, gaussian noise,
gumbel noise) derived from the config seed and a phase tag, so identical
configs replay identical runs and ablations disturb only the stream they
are supposed to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .data import DomainDataset, FeatureScaler
from .errors import ContractError, DivergenceError
from .losses import (
    NoiseStreams,
    discriminator_loss,
    source_supervised_loss,
    target_total_loss,
)
from .networks import ModelBundle, build_bundle, predict_class
from .optim import Adam
from .tensor import backward

_PHASE_SOURCE = 0
_PHASE_ADAPT = 1


@dataclass
class SourceEpoch:
    epoch: int
    loss: float
    accuracy: float


@dataclass
class AdaptationEpoch:
    epoch: int
    target_accuracy: float | None
    supervised_loss: float
    unsupervised_loss: float
    adversarial_loss: float
    discriminator_loss: float


@dataclass
class Streams:
    init: np.random.Generator
    shuffle: np.random.Generator
    noise: NoiseStreams


def rng_streams(seed: int, phase: int) -> Streams:
    children = np.random.SeedSequence([seed, phase]).spawn(4)
    init, shuffle, gauss, gumbel = (np.random.default_rng(c) for c in children)
    return Streams(init=init, shuffle=shuffle,
                   noise=NoiseStreams(gaussian=gauss, gumbel=gumbel))


def apply_gradients(result, adam: Adam) -> None:
    """Backward pass plus one optimizer step for every bound-trainable slot."""
    grads = backward(result.loss)
    for slot in result.binding.trainable_slots():
        adam.step(slot.name, slot.array, grads[slot.tensor.node_id].data)


def source_step(bundle, adam, x, y, weights, rng) -> float:
    result = source_supervised_loss(bundle, x, y, weights, rng)
    apply_gradients(result, adam)
    return result.value


def discriminator_step(bundle, adam, sx, sy, tx, rng) -> float:
    result = discriminator_loss(bundle, sx, sy, tx, rng)
    apply_gradients(result, adam)
    return result.value


def target_step(bundle, adam, lx, ly, ux, weights, rng,
                reconstruct_target: bool = False) -> tuple[float, dict[str, float]]:
    result = target_total_loss(bundle, lx, ly, ux, weights, rng,
                               reconstruct_target=reconstruct_target)
    apply_gradients(result, adam)
    return result.value, dict(result.components)


def assert_finite(bundle: ModelBundle, where: str) -> None:
    for group, params in bundle.group_arrays().items():
        for name, arr in params.items():
            if not np.all(np.isfinite(arr)):
                raise DivergenceError(f"non-finite values in {group}/{name} {where}")


def bundle_from_config(config: ExperimentConfig, feature_dim: int,
                       init_rng: np.random.Generator) -> ModelBundle:
    return build_bundle(
        feature_dim, config.class_count, config.latent_dim, config.hidden,
        config.activation, config.prior_radius, config.prior_init_sigma, init_rng,
        binary_discriminator=config.binary_discriminator,
        fixed_priors=config.fixed_priors,
        learn_class_weights=config.learn_class_weights,
        train_prior_during_adaptation=config.train_prior_during_adaptation)


def _accuracy(encoder, classifier, xs: np.ndarray, y: np.ndarray) -> float:
    preds = predict_class(encoder, classifier, xs)
    return float(np.mean(preds == y))


def _batches(n: int, batch_size: int, order: np.ndarray):
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


class _Cycler:
    """Endless shuffled batches over a pool; reshuffles on wrap-around."""

    def __init__(self, n: int, batch_size: int, rng: np.random.Generator):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = rng
        self._order = rng.permutation(n)
        self._pos = 0

    def next(self) -> np.ndarray:
        if self._pos + self.batch_size > self.n:
            self._order = self.rng.permutation(self.n)
            self._pos = 0
        out = self._order[self._pos:self._pos + self.batch_size]
        self._pos += self.batch_size
        return out


def train_source(config: ExperimentConfig,
                 source: DomainDataset) -> tuple[ModelBundle, list[SourceEpoch]]:
    """Fit the source model; returns the bundle (with its fitted feature
    scaler) and the per-epoch loss/accuracy curve."""
    if not source.labeled:
        raise ContractError("source training needs a fully labeled dataset")
    if source.class_count != config.class_count:
        raise ContractError(f"dataset has {source.class_count} classes but the config "
                            f"says {config.class_count}")
    streams = rng_streams(config.seed, _PHASE_SOURCE)
    bundle = bundle_from_config(config, source.features.shape[1], streams.init)
    bundle.scaler = FeatureScaler.fit(source.features)
    xs = bundle.scaler.transform(source.features)
    y = source.labels
    adam = Adam(config.adam)
    weights = config.weights

    history: list[SourceEpoch] = []
    for epoch in range(config.source_epochs):
        order = streams.shuffle.permutation(len(xs))
        losses = [source_step(bundle, adam, xs[idx], y[idx], weights, streams.noise)
                  for idx in _batches(len(xs), config.batch_size, order)]
        assert_finite(bundle, f"after source epoch {epoch}")
        acc = _accuracy(bundle.source_encoder, bundle.source_classifier, xs, y)
        history.append(SourceEpoch(epoch, float(np.mean(losses)), acc))
    return bundle, history


def train_adaptation(config: ExperimentConfig, bundle: ModelBundle,
                     source: DomainDataset,
                     labeled_x: np.ndarray | None, labeled_y: np.ndarray | None,
                     unlabeled_x: np.ndarray | None,
                     eval_features: np.ndarray | None = None,
                     eval_labels: np.ndarray | None = None,
                     ) -> tuple[ModelBundle, list[AdaptationEpoch]]:
    """Adversarial adaptation of the target inference networks.

    The bundle is adapted in place after warm-starting the target networks
    from the source ones. ``labeled_x/labeled_y`` hold the few-shot labeled
    target pool (may be empty or None), ``unlabeled_x`` the unlabeled pool.
    When an evaluation set is supplied, per-epoch target accuracy is
    recorded against it.
    """
    if bundle.scaler is None:
        raise ContractError("the bundle has no fitted scaler; train the source model first")
    if not source.labeled:
        raise ContractError("adaptation needs the labeled source dataset")
    has_labeled = labeled_x is not None and len(labeled_x) > 0
    has_unlabeled = unlabeled_x is not None and len(unlabeled_x) > 0
    if not has_labeled and not has_unlabeled:
        raise ContractError("adaptation needs labeled or unlabeled target data")
    if has_labeled and (labeled_y is None or len(labeled_y) != len(labeled_x)):
        raise ContractError("labeled target pool needs one label per row")

    bundle.warm_start_target()
    streams = rng_streams(config.seed, _PHASE_ADAPT)
    scaler = bundle.scaler
    sx_all = scaler.transform(source.features)
    sy_all = source.labels
    lx = scaler.transform(labeled_x) if has_labeled else None
    ly = np.asarray(labeled_y, dtype=np.int64) if has_labeled else None
    ux = scaler.transform(unlabeled_x) if has_unlabeled else None
    union = np.concatenate([arr for arr in (ux, lx) if arr is not None])
    eval_xs = scaler.transform(eval_features) if eval_features is not None else None

    adam = Adam(config.adam)
    weights = config.weights
    quota = min(len(lx), max(1, config.batch_size // 4)) if has_labeled else 0
    main_n = len(ux) if has_unlabeled else len(lx)
    steps_per_epoch = math.ceil(main_n / config.batch_size)

    src_batches = _Cycler(len(sx_all), config.batch_size, streams.shuffle)
    union_batches = _Cycler(len(union), config.batch_size, streams.shuffle)

    history: list[AdaptationEpoch] = []
    for epoch in range(config.adaptation_epochs):
        order = streams.shuffle.permutation(main_n)
        sums = {"sup": 0.0, "unsup": 0.0, "adv": 0.0, "disc": 0.0}
        for step in range(steps_per_epoch):
            for _ in range(config.d_steps_per_t_step):
                s_idx = src_batches.next()
                u_idx = union_batches.next()
                sums["disc"] += discriminator_step(
                    bundle, adam, sx_all[s_idx], sy_all[s_idx], union[u_idx],
                    streams.noise)
            lo = (step * config.batch_size) % max(main_n, 1)
            main_idx = order[lo:lo + config.batch_size]
            ux_batch = ux[main_idx] if has_unlabeled else None
            if has_labeled:
                lab_idx = streams.shuffle.integers(0, len(lx), size=quota)
                lx_batch, ly_batch = lx[lab_idx], ly[lab_idx]
            else:
                lx_batch, ly_batch = None, None
            _, comps = target_step(bundle, adam, lx_batch, ly_batch, ux_batch,
                                   weights, streams.noise,
                                   reconstruct_target=config.target_decoder)
            for key in ("sup", "unsup", "adv"):
                sums[key] += comps.get(key, 0.0)

        assert_finite(bundle, f"after adaptation epoch {epoch}")
        acc = None
        if eval_xs is not None and eval_labels is not None and len(eval_xs):
            acc = _accuracy(bundle.target_encoder, bundle.target_classifier,
                            eval_xs, np.asarray(eval_labels))
        d_total = steps_per_epoch * config.d_steps_per_t_step
        history.append(AdaptationEpoch(
            epoch, acc,
            supervised_loss=sums["sup"] / steps_per_epoch,
            unsupervised_loss=sums["unsup"] / steps_per_epoch,
            adversarial_loss=sums["adv"] / steps_per_epoch,
            discriminator_loss=sums["disc"] / d_total))
    return bundle, history
