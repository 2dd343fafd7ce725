"""MLP realizations of the five parameterized functions, plus the binding
machinery that decides, per objective, which parameter groups a tape tracks.

Persistent parameters live in plain numpy arrays inside :class:`Mlp` and the
prior; each training step creates a fresh :class:`~mixadapt.tensor.Tape`,
binds the groups the objective is allowed to update as leaves and everything
else as constants, and lets the optimizer walk the resulting slots. That
makes detachment a structural property of each loss instead of a convention.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import tensor as T
from .distributions import DiagonalGaussian, sample_gaussian
from .errors import ParameterError, ShapeError
from .prior import GmmPrior
from .tensor import Tape, Tensor

_ACTIVATIONS = {"tanh": T.tanh, "relu": T.relu}


@dataclass(frozen=True)
class MlpSpec:
    """Trunk widths plus named linear output heads."""

    in_width: int
    hidden: tuple[int, ...]
    heads: tuple[tuple[str, int], ...]
    activation: str = "tanh"

    def __post_init__(self):
        if not self.hidden:
            raise ParameterError("an MLP needs at least one hidden layer")
        widths = (self.in_width, *self.hidden, *(w for _, w in self.heads))
        if any(w < 1 for w in widths):
            raise ParameterError(f"all layer widths must be >= 1, got {widths}")
        if not self.heads:
            raise ParameterError("an MLP needs at least one output head")
        if self.activation not in _ACTIVATIONS:
            raise ParameterError(f"unknown activation {self.activation!r}")

    def head_width(self, name: str) -> int:
        for head, width in self.heads:
            if head == name:
                return width
        raise ParameterError(f"no head named {name!r}")


class Mlp:
    """Parameter container for one network; forward passes happen on
    bound tensors, never on this object directly."""

    def __init__(self, spec: MlpSpec, params: dict[str, np.ndarray]):
        self.spec = spec
        self.params = params

    @classmethod
    def initialize(cls, spec: MlpSpec, rng: np.random.Generator) -> "Mlp":
        """Xavier-uniform weights, zero biases, deterministic given the rng."""
        params: dict[str, np.ndarray] = {}
        fan_in = spec.in_width
        for i, width in enumerate(spec.hidden):
            limit = np.sqrt(6.0 / (fan_in + width))
            params[f"layer{i}.w"] = rng.uniform(-limit, limit, size=(fan_in, width))
            params[f"layer{i}.b"] = np.zeros(width)
            fan_in = width
        for name, width in spec.heads:
            limit = np.sqrt(6.0 / (fan_in + width))
            params[f"head.{name}.w"] = rng.uniform(-limit, limit, size=(fan_in, width))
            params[f"head.{name}.b"] = np.zeros(width)
        return cls(spec, params)

    def clone(self) -> "Mlp":
        return Mlp(self.spec, {k: v.copy() for k, v in self.params.items()})

    def copy_from(self, other: "Mlp") -> None:
        if other.spec != self.spec:
            raise ShapeError("cannot copy parameters between different architectures")
        for name, arr in other.params.items():
            self.params[name][...] = arr


class ParamSlot(NamedTuple):
    name: str
    array: np.ndarray
    tensor: Tensor


class Binding:
    """Maps persistent parameter arrays onto one tape, each at most once.

    The first bind of a name decides whether it is a leaf (trainable) or a
    constant; later binds of the same name return the same tensor, which is
    what lets several loss terms share parameters on one tape and have their
    gradients accumulate.
    """

    def __init__(self, tape: Tape | None = None):
        self.tape = tape if tape is not None else Tape()
        self._tensors: dict[str, Tensor] = {}
        self._slots: list[ParamSlot] = []

    def param(self, name: str, array: np.ndarray, trainable: bool) -> Tensor:
        bound = self._tensors.get(name)
        if bound is not None:
            return bound
        if trainable:
            tensor = self.tape.leaf(array)
            self._slots.append(ParamSlot(name, array, tensor))
        else:
            tensor = T.constant(array)
        self._tensors[name] = tensor
        return tensor

    def trainable_slots(self) -> list[ParamSlot]:
        return list(self._slots)

    def trainable_groups(self) -> set[str]:
        return {slot.name.split("/", 1)[0] for slot in self._slots}

    def prior_tensors(self, prior: GmmPrior, trainable: bool | None = None):
        """Bind the prior's arrays (idempotent), honoring its freeze flags."""
        if trainable is None:
            trainable = not prior.fixed
        means = self.param("prior/means", prior.means, trainable)
        log_vars = self.param("prior/log_vars", prior.log_vars, trainable)
        weights = self.param("prior/class_log_weights", prior.class_log_weights,
                             trainable and prior.learn_class_weights)
        return means, log_vars, weights


class BoundMlp:
    """An Mlp bound onto a tape; callable on batched inputs."""

    def __init__(self, mlp: Mlp, binding: Binding | None = None,
                 prefix: str = "", trainable: bool = False):
        self.spec = mlp.spec
        self._tensors: dict[str, Tensor] = {}
        for name, arr in mlp.params.items():
            if binding is None:
                self._tensors[name] = T.constant(arr)
            else:
                self._tensors[name] = binding.param(f"{prefix}/{name}", arr, trainable)

    def forward(self, x: Tensor) -> dict[str, Tensor]:
        if x.data.ndim != 2 or x.shape[1] != self.spec.in_width:
            raise ShapeError(
                f"expected input of shape (B, {self.spec.in_width}), got {x.shape}")
        act = _ACTIVATIONS[self.spec.activation]
        h = x
        for i in range(len(self.spec.hidden)):
            h = act(T.matmul(h, self._tensors[f"layer{i}.w"]) + self._tensors[f"layer{i}.b"])
        return {name: T.matmul(h, self._tensors[f"head.{name}.w"]) + self._tensors[f"head.{name}.b"]
                for name, _ in self.spec.heads}


def _bound(net) -> BoundMlp:
    return net if isinstance(net, BoundMlp) else BoundMlp(net)


def encode(encoder, x) -> DiagonalGaussian:
    """Posterior parameters for a batch: mean and log-variance heads."""
    heads = _bound(encoder).forward(T.as_tensor(x))
    return DiagonalGaussian(heads["mu"], heads["log_var"])


def classify_latent(classifier, z) -> Tensor:
    """Class logits for a batch of latent points."""
    return _bound(classifier).forward(T.as_tensor(z))["logits"]


def decode(decoder, z) -> Tensor:
    """Reconstruction mean in data space (unit-variance Gaussian likelihood)."""
    return _bound(decoder).forward(T.as_tensor(z))["recon"]


def discriminate(discriminator, z) -> Tensor:
    """Logits over the source classes plus the generated-by-target class."""
    return _bound(discriminator).forward(T.as_tensor(z))["logits"]


def predict_class(encoder: Mlp, classifier: Mlp, x, mode: str = "mean_z",
                  rng: np.random.Generator | None = None) -> np.ndarray:
    """Class predictions: argmax of the latent classifier.

    ``mean_z`` evaluates at the posterior mean (deterministic, evaluation
    default); ``sampled_z`` draws one reparameterized sample, which is the
    path training sees.
    """
    gauss = encode(encoder, x)
    if mode == "mean_z":
        z = gauss.mu
    elif mode == "sampled_z":
        if rng is None:
            raise ParameterError("sampled_z mode needs an rng for the noise draw")
        z = sample_gaussian(gauss, rng.standard_normal(gauss.mu.shape))
    else:
        raise ParameterError(f"unknown prediction mode {mode!r}")
    logits = classify_latent(classifier, z)
    return np.argmax(logits.data, axis=1).astype(np.int64)


@dataclass
class ModelBundle:
    """All trainable state: five networks plus the mixture prior."""

    source_encoder: Mlp
    target_encoder: Mlp
    decoder: Mlp
    source_classifier: Mlp
    target_classifier: Mlp
    discriminator: Mlp
    prior: GmmPrior
    scaler: "object | None" = None  # FeatureScaler once training has fit one

    GROUPS = ("source_encoder", "target_encoder", "decoder", "source_classifier",
              "target_classifier", "discriminator", "prior")

    @property
    def class_count(self) -> int:
        return self.prior.class_count

    @property
    def latent_dim(self) -> int:
        return self.prior.latent_dim

    @property
    def feature_dim(self) -> int:
        return self.source_encoder.spec.in_width

    @property
    def discriminator_classes(self) -> int:
        return self.discriminator.spec.head_width("logits")

    def net(self, group: str) -> Mlp:
        return getattr(self, group)

    def group_arrays(self) -> dict[str, dict[str, np.ndarray]]:
        out = {g: self.net(g).params for g in self.GROUPS if g != "prior"}
        out["prior"] = self.prior.arrays()
        return out

    def clone(self) -> "ModelBundle":
        return ModelBundle(self.source_encoder.clone(), self.target_encoder.clone(),
                           self.decoder.clone(), self.source_classifier.clone(),
                           self.target_classifier.clone(), self.discriminator.clone(),
                           self.prior.clone(), self.scaler)

    def warm_start_target(self) -> None:
        """Initialize the target inference path from the trained source one."""
        self.target_encoder.copy_from(self.source_encoder)
        self.target_classifier.copy_from(self.source_classifier)


class BoundBundle:
    """A model bundle bound onto one tape with a per-group trainability policy."""

    def __init__(self, bundle: ModelBundle, binding: Binding, trainable_groups: set[str]):
        unknown = trainable_groups - set(ModelBundle.GROUPS)
        if unknown:
            raise ParameterError(f"unknown parameter groups {sorted(unknown)}")
        self.bundle = bundle
        self.binding = binding
        for group in ("source_encoder", "target_encoder", "decoder",
                      "source_classifier", "target_classifier", "discriminator"):
            setattr(self, group, BoundMlp(bundle.net(group), binding, group,
                                          group in trainable_groups))
        means, log_vars, weights = binding.prior_tensors(
            bundle.prior, trainable="prior" in trainable_groups)
        self.prior_means = means
        self.prior_log_vars = log_vars
        self.prior_class_log_weights = weights

    @property
    def class_count(self) -> int:
        return self.bundle.class_count


def build_bundle(feature_dim: int, class_count: int, latent_dim: int,
                 hidden: tuple[int, ...], activation: str,
                 prior_radius: float, prior_init_sigma: float,
                 rng: np.random.Generator,
                 binary_discriminator: bool = False,
                 fixed_priors: bool = False,
                 learn_class_weights: bool = False,
                 train_prior_during_adaptation: bool = False) -> ModelBundle:
    """Construct all networks and the prior with a shared init stream."""
    from .prior import init_prior

    enc_spec = MlpSpec(feature_dim, hidden, (("mu", latent_dim), ("log_var", latent_dim)),
                       activation)
    clf_spec = MlpSpec(latent_dim, hidden, (("logits", class_count),), activation)
    dec_spec = MlpSpec(latent_dim, hidden, (("recon", feature_dim),), activation)
    disc_out = 2 if binary_discriminator else class_count + 1
    disc_spec = MlpSpec(latent_dim, hidden, (("logits", disc_out),), activation)

    prior = init_prior(class_count, latent_dim, prior_radius, prior_init_sigma,
                       fixed=fixed_priors, learn_class_weights=learn_class_weights,
                       train_during_adaptation=train_prior_during_adaptation)
    return ModelBundle(
        source_encoder=Mlp.initialize(enc_spec, rng),
        target_encoder=Mlp.initialize(enc_spec, rng),
        decoder=Mlp.initialize(dec_spec, rng),
        source_classifier=Mlp.initialize(clf_spec, rng),
        target_classifier=Mlp.initialize(clf_spec, rng),
        discriminator=Mlp.initialize(disc_spec, rng),
        prior=prior,
    )


def param_group_hashes(bundle: ModelBundle) -> dict[str, str]:
    """Stable digest per parameter group; used to audit phase isolation."""
    out = {}
    for group, params in bundle.group_arrays().items():
        h = hashlib.sha256()
        for name in sorted(params):
            arr = np.ascontiguousarray(params[name], dtype=np.float64)
            h.update(name.encode())
            h.update(str(arr.shape).encode())
            h.update(arr.tobytes())
        out[group] = h.hexdigest()
    return out
