"""Metrics and experiment orchestration: single runs, the labels-per-class
accuracy curve, and embedding export.

The curve protocol trains the source model once from the config seed, then
runs one fresh adaptation per (shots, repeat) cell: a fresh stratified
split and a fresh clone of the shared source bundle, with the run's streams
seeded by a deterministic hash of (config seed, shots, repeat). Evaluation
always uses the target samples outside the labeled split.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .config import ExperimentConfig, config_digest
from .data import DomainDataset, DomainShift, gen_shifted_blobs, gen_two_moons_pair, make_few_shot_split
from .errors import ConfigError, ContractError
from .networks import ModelBundle, encode, predict_class
from .report import RunReport
from .trainer import train_adaptation, train_source


def generate_from_config(config: ExperimentConfig) -> tuple[DomainDataset, DomainDataset]:
    """Build the domain pair the config's dataset descriptor names."""
    shift = DomainShift(config.rotation_deg, config.translation, config.shift_scale)
    if config.dataset == "rotated-blobs":
        return gen_shifted_blobs(config.class_count, config.feature_dim,
                                 config.n_per_class, shift, config.noise_sigma,
                                 config.seed, config.center_radius)
    if config.dataset == "two-moons":
        if config.class_count != 2:
            raise ConfigError("invalid value for key 'class_count': two-moons has 2 classes")
        return gen_two_moons_pair(2 * config.n_per_class, shift, config.noise_sigma,
                                  config.seed)
    raise ConfigError(f"unknown dataset descriptor {config.dataset!r}")


def _encoder_pair(bundle: ModelBundle, ds_domain: str, which: str):
    if which == "auto":
        which = "target" if ds_domain == "target" else "source"
    if which == "source":
        return bundle.source_encoder, bundle.source_classifier
    if which == "target":
        return bundle.target_encoder, bundle.target_classifier
    raise ContractError(f"encoder must be 'auto', 'source' or 'target', got {which!r}")


def evaluate_accuracy(bundle: ModelBundle, ds: DomainDataset,
                      encoder: str = "auto") -> float:
    """Fraction of posterior-mean predictions that match the labels."""
    if not ds.labeled:
        raise ContractError("cannot evaluate accuracy on an unlabeled dataset")
    xs = bundle.scaler.transform(ds.features) if bundle.scaler is not None else ds.features
    enc, clf = _encoder_pair(bundle, ds.domain, encoder)
    preds = predict_class(enc, clf, xs)
    return float(np.mean(preds == ds.labels))


def run_source(config: ExperimentConfig,
               source: DomainDataset) -> tuple[ModelBundle, RunReport]:
    start = time.perf_counter()
    bundle, history = train_source(config, source)
    report = RunReport(
        config_digest=config_digest(config), seed=config.seed,
        source_epochs=[asdict(h) for h in history],
        final_accuracy=history[-1].accuracy,
        wall_seconds=time.perf_counter() - start)
    report.validate(source_epochs=config.source_epochs)
    return bundle, report


def run_adaptation(config: ExperimentConfig, source_bundle: ModelBundle,
                   source: DomainDataset, target: DomainDataset,
                   shots: int, run_seed: int) -> tuple[ModelBundle, RunReport]:
    """One adaptation run: fresh split, fresh bundle clone, fresh streams."""
    if not target.labeled:
        raise ContractError("the target dataset needs labels for splitting and evaluation")
    start = time.perf_counter()
    split = make_few_shot_split(target, shots, seed=run_seed)
    lx = target.features[split.labeled_indices] if shots else None
    ly = target.labels[split.labeled_indices] if shots else None
    eval_x = target.features[split.unlabeled_indices]
    eval_y = target.labels[split.unlabeled_indices]

    bundle = source_bundle.clone()
    run_config = replace(config, seed=run_seed, shots=shots)
    baseline = evaluate_accuracy(
        bundle, DomainDataset(eval_x, eval_y, "target", target.class_count),
        encoder="source")
    bundle, history = train_adaptation(
        run_config, bundle, source, lx, ly, target.features[split.unlabeled_indices],
        eval_features=eval_x, eval_labels=eval_y)
    report = RunReport(
        config_digest=config_digest(config), seed=run_seed,
        adaptation_epochs=[asdict(h) for h in history],
        final_accuracy=history[-1].target_accuracy,
        baseline_accuracy=baseline,
        wall_seconds=time.perf_counter() - start)
    report.validate(adaptation_epochs=config.adaptation_epochs)
    return bundle, report


def run_seed_for(seed: int, shots: int, rep: int) -> int:
    """Deterministic per-run seed for curve cells."""
    return int(np.random.SeedSequence([seed, shots, rep]).generate_state(1)[0] % (2 ** 31))


@dataclass(frozen=True)
class CurveRow:
    shots: int
    mean_accuracy: float
    std_accuracy: float
    best_accuracy: float


@dataclass
class CurveResult:
    rows: list[CurveRow]
    baseline_accuracy: float
    run_accuracies: dict[int, list[float]] = field(default_factory=dict)
    source_report: RunReport | None = None


def run_shots_curve(config: ExperimentConfig, source: DomainDataset,
                    target: DomainDataset, shots_grid: list[int],
                    n_seeds: int = 10) -> CurveResult:
    """Mean / sample-std / best accuracy per labels-per-class value."""
    if not shots_grid:
        raise ContractError("the shots grid must not be empty")
    if n_seeds < 1:
        raise ContractError("need at least one repeat per grid point")
    bundle, source_report = run_source(config, source)
    baseline = evaluate_accuracy(bundle, target, encoder="source")

    rows: list[CurveRow] = []
    per_cell: dict[int, list[float]] = {}
    for shots in sorted(set(shots_grid)):
        accs = []
        for rep in range(n_seeds):
            _, report = run_adaptation(config, bundle, source, target, shots,
                                       run_seed_for(config.seed, shots, rep))
            accs.append(report.final_accuracy)
        per_cell[shots] = accs
        arr = np.asarray(accs)
        std = float(arr.std(ddof=1)) if len(arr) > 1 else 0.0
        rows.append(CurveRow(shots, float(arr.mean()), std, float(arr.max())))
    return CurveResult(rows, baseline, per_cell, source_report)


def curve_to_csv(result: CurveResult) -> str:
    lines = ["shots,mean_accuracy,std_accuracy,best_accuracy"]
    for row in result.rows:
        lines.append(f"{row.shots},{row.mean_accuracy!r},{row.std_accuracy!r},"
                     f"{row.best_accuracy!r}")
    return "\n".join(lines) + "\n"


def export_embeddings(bundle: ModelBundle, ds: DomainDataset,
                      encoder: str = "auto") -> str:
    """CSV of posterior-mean coordinates plus label (-1 if unknown) and domain."""
    xs = bundle.scaler.transform(ds.features) if bundle.scaler is not None else ds.features
    enc, _ = _encoder_pair(bundle, ds.domain, encoder)
    mu = encode(enc, xs).mu.data
    header = ",".join([f"z{j}" for j in range(mu.shape[1])] + ["label", "domain"])
    lines = [header]
    for i in range(len(ds)):
        label = int(ds.labels[i]) if ds.labeled else -1
        coords = ",".join(repr(float(v)) for v in mu[i])
        lines.append(f"{coords},{label},{ds.domain}")
    return "\n".join(lines) + "\n"
