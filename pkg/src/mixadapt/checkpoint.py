"""Checkpoint format: the whole model bundle, optimizer state, and a config
digest inside the package's checksummed binary container.

Round trips are bit-exact; saving a freshly loaded checkpoint reproduces the
original bytes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .container import pack_container, unpack_container
from .data import FeatureScaler
from .errors import CheckpointError
from .networks import Mlp, MlpSpec, ModelBundle
from .optim import Adam, AdamConfig
from .prior import GmmPrior

BUNDLE_MAGIC = b"MXADCKP1"


def _spec_meta(spec: MlpSpec) -> dict:
    return {"in_width": spec.in_width, "hidden": list(spec.hidden),
            "heads": [[n, w] for n, w in spec.heads], "activation": spec.activation}


def _spec_from_meta(meta: dict) -> MlpSpec:
    return MlpSpec(meta["in_width"], tuple(meta["hidden"]),
                   tuple((n, w) for n, w in meta["heads"]), meta["activation"])


def bundle_to_bytes(bundle: ModelBundle, config_digest: str = "",
                    adam: Adam | None = None) -> bytes:
    meta = {
        "config_digest": config_digest,
        "class_count": bundle.class_count,
        "latent_dim": bundle.latent_dim,
        "networks": {g: _spec_meta(bundle.net(g).spec)
                     for g in ModelBundle.GROUPS if g != "prior"},
        "prior_flags": {
            "fixed": bundle.prior.fixed,
            "learn_class_weights": bundle.prior.learn_class_weights,
            "train_during_adaptation": bundle.prior.train_during_adaptation,
        },
        "has_scaler": bundle.scaler is not None,
        "has_adam": adam is not None,
    }
    blobs: dict[str, np.ndarray] = {}
    for group, params in bundle.group_arrays().items():
        for name, arr in params.items():
            blobs[f"params/{group}/{name}"] = arr
    if bundle.scaler is not None:
        blobs["scaler/center"] = bundle.scaler.center
        blobs["scaler/half_range"] = bundle.scaler.half_range
    if adam is not None:
        meta["adam_config"] = {
            "learning_rate": adam.config.learning_rate, "beta1": adam.config.beta1,
            "beta2": adam.config.beta2, "epsilon": adam.config.epsilon,
        }
        for name, arr in adam.state_arrays().items():
            blobs[f"adam/{name}"] = arr
    return pack_container(BUNDLE_MAGIC, meta, blobs)


def bundle_from_bytes(raw: bytes) -> tuple[ModelBundle, Adam | None, str]:
    meta, blobs = unpack_container(raw, BUNDLE_MAGIC)

    def group_params(group: str) -> dict[str, np.ndarray]:
        prefix = f"params/{group}/"
        params = {k[len(prefix):]: np.array(v) for k, v in blobs.items()
                  if k.startswith(prefix)}
        if not params:
            raise CheckpointError(f"checkpoint is missing parameters for {group!r}")
        return params

    nets = {g: Mlp(_spec_from_meta(meta["networks"][g]), group_params(g))
            for g in ModelBundle.GROUPS if g != "prior"}
    prior_arrays = group_params("prior")
    flags = meta["prior_flags"]
    prior = GmmPrior(int(meta["class_count"]), int(meta["latent_dim"]),
                     prior_arrays["means"], prior_arrays["log_vars"],
                     prior_arrays["class_log_weights"], flags["fixed"],
                     flags["learn_class_weights"], flags["train_during_adaptation"])
    scaler = None
    if meta.get("has_scaler"):
        scaler = FeatureScaler(blobs["scaler/center"].copy(),
                               blobs["scaler/half_range"].copy())
    bundle = ModelBundle(nets["source_encoder"], nets["target_encoder"], nets["decoder"],
                         nets["source_classifier"], nets["target_classifier"],
                         nets["discriminator"], prior, scaler)
    adam = None
    if meta.get("has_adam"):
        cfg = meta["adam_config"]
        adam_blobs = {k[len("adam/"):]: v for k, v in blobs.items() if k.startswith("adam/")}
        adam = Adam.from_state_arrays(
            AdamConfig(cfg["learning_rate"], cfg["beta1"], cfg["beta2"], cfg["epsilon"]),
            adam_blobs)
    return bundle, adam, meta.get("config_digest", "")


def checkpoint_save(bundle: ModelBundle, path, config_digest: str = "",
                    adam: Adam | None = None) -> None:
    Path(path).write_bytes(bundle_to_bytes(bundle, config_digest, adam))


def checkpoint_load(path) -> tuple[ModelBundle, Adam | None, str]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint file not found: {path}")
    return bundle_from_bytes(path.read_bytes())
