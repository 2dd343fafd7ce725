"""Pydantic request/response models for the service.

Configs travel as a flat optional-field mirror of the experiment config:
unset fields fall back to the preset (when named) and then the package
defaults, mirroring how the config file format behaves.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field

from ..config import ExperimentConfig, config_from_dict, preset_config
from ..data import DomainDataset, dataset_from_csv


class ConfigPayload(BaseModel):
    model_config = ConfigDict(extra="forbid")

    preset: str | None = None

    dataset: str | None = None
    class_count: int | None = None
    feature_dim: int | None = None
    n_per_class: int | None = None
    noise_sigma: float | None = None
    rotation_deg: float | None = None
    translation: list[float] | None = None
    shift_scale: float | None = None
    center_radius: float | None = None

    alpha_s: float | None = None
    alpha_t: float | None = None
    gamma: float | None = None
    tau: float | None = None

    latent_dim: int | None = None
    prior_radius: float | None = None
    prior_init_sigma: float | None = None

    hidden: list[int] | None = None
    activation: str | None = None

    learning_rate: float | None = None
    beta1: float | None = None
    beta2: float | None = None
    adam_epsilon: float | None = None

    batch_size: int | None = None
    source_epochs: int | None = None
    adaptation_epochs: int | None = None
    d_steps_per_t_step: int | None = None
    shots: int | None = None
    seed: int | None = None

    fixed_priors: bool | None = None
    binary_discriminator: bool | None = None
    target_decoder: bool | None = None
    learn_class_weights: bool | None = None
    train_prior_during_adaptation: bool | None = None

    def build(self) -> ExperimentConfig:
        values = self.model_dump(exclude_none=True)
        preset = values.pop("preset", None)
        base = preset_config(preset) if preset else None
        return config_from_dict(values, base=base)


class DatasetPayload(BaseModel):
    model_config = ConfigDict(extra="forbid")

    csv: str
    domain: str = "source"
    class_count: int | None = None

    def build(self) -> DomainDataset:
        return dataset_from_csv(self.csv, self.domain, self.class_count)


class GenerateDataRequest(BaseModel):
    config: ConfigPayload = Field(default_factory=ConfigPayload)


class GenerateDataResponse(BaseModel):
    source_csv: str
    target_csv: str
    manifest: dict


class TrainSourceRequest(BaseModel):
    config: ConfigPayload = Field(default_factory=ConfigPayload)
    source: DatasetPayload


class TrainSourceResponse(BaseModel):
    report: dict
    checkpoint_b64: str
    config_digest: str


class AdaptRequest(BaseModel):
    config: ConfigPayload = Field(default_factory=ConfigPayload)
    checkpoint_b64: str
    source: DatasetPayload
    target: DatasetPayload
    shots: int | None = None
    run_seed: int | None = None


class AdaptResponse(BaseModel):
    report: dict
    checkpoint_b64: str
    final_accuracy: float | None
    baseline_accuracy: float | None


class ShotsCurveRequest(BaseModel):
    config: ConfigPayload = Field(default_factory=ConfigPayload)
    source: DatasetPayload
    target: DatasetPayload
    shots_grid: list[int]
    n_seeds: int = 10


class CurveRowModel(BaseModel):
    shots: int
    mean_accuracy: float
    std_accuracy: float
    best_accuracy: float


class ShotsCurveResponse(BaseModel):
    csv: str
    rows: list[CurveRowModel]
    baseline_accuracy: float
    source_report: dict | None


class ExportEmbeddingsRequest(BaseModel):
    checkpoint_b64: str
    dataset: DatasetPayload
    encoder: str = "auto"


class ExportEmbeddingsResponse(BaseModel):
    csv: str


class HealthResponse(BaseModel):
    status: str
    version: str
