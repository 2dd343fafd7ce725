"""Synthetic domain-shift generators, dataset ingestion, and few-shot splits.

Domain pairs share class semantics by construction: class ``c`` of the
target is class ``c`` of the source pushed through one affine shift
(scale, then rotation in the first two feature axes, then translation).

Datasets travel as CSV (``f0,...,f{D-1},label`` with the label column
optional) or as the package's checksummed binary container.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .container import read_container, write_container
from .errors import ContractError, DataError, ParameterError

DATASET_MAGIC = b"MXADDAT1"


@dataclass(frozen=True)
class DomainShift:
    """Affine map applied to source samples to manufacture the target domain."""

    rotation_deg: float = 0.0
    translation: tuple[float, ...] = (0.0, 0.0)
    scale: float = 1.0

    def matrix(self, dim: int) -> np.ndarray:
        if self.scale == 0.0:
            raise ParameterError("degenerate shift: scale must be non-zero")
        rot = np.eye(dim)
        theta = np.deg2rad(self.rotation_deg)
        if dim >= 2:
            rot[0, 0] = np.cos(theta)
            rot[0, 1] = -np.sin(theta)
            rot[1, 0] = np.sin(theta)
            rot[1, 1] = np.cos(theta)
        return self.scale * rot

    def apply(self, x: np.ndarray) -> np.ndarray:
        t = np.asarray(self.translation, dtype=np.float64)
        if t.shape != (x.shape[1],):
            raise ParameterError(f"translation has {t.size} entries for "
                                 f"{x.shape[1]}-dimensional data")
        return x @ self.matrix(x.shape[1]).T + t


@dataclass
class DomainDataset:
    features: np.ndarray
    labels: np.ndarray | None
    domain: str                # "source" or "target"
    class_count: int

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.features.ndim != 2:
            raise DataError(f"features must be (N, D), got shape {self.features.shape}")
        if not np.all(np.isfinite(self.features)):
            bad = int(np.argwhere(~np.isfinite(self.features).all(axis=1))[0][0])
            raise DataError(f"non-finite feature in row {bad + 1}")
        if self.domain not in ("source", "target"):
            raise DataError(f"domain tag must be 'source' or 'target', got {self.domain!r}")
        if self.class_count < 1:
            raise DataError("class_count must be at least 1")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.features),):
                raise DataError("labels must be one integer per row")
            if self.labels.size:
                low, high = int(self.labels.min()), int(self.labels.max())
                if low < 0 or high >= self.class_count:
                    bad = int(np.argwhere((self.labels < 0)
                                          | (self.labels >= self.class_count))[0][0])
                    raise DataError(f"label {self.labels[bad]} out of range "
                                    f"[0, {self.class_count}) in row {bad + 1}")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def labeled(self) -> bool:
        return self.labels is not None


@dataclass(frozen=True)
class FewShotSplit:
    labeled_indices: np.ndarray
    unlabeled_indices: np.ndarray


@dataclass(frozen=True)
class FeatureScaler:
    """Per-feature affine map onto roughly [-1, 1], fit on source data only."""

    center: np.ndarray
    half_range: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "FeatureScaler":
        lo = features.min(axis=0)
        hi = features.max(axis=0)
        center = (hi + lo) / 2.0
        half = (hi - lo) / 2.0
        half[half == 0.0] = 1.0
        return cls(center, half)

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.center) / self.half_range


def _blob_centers(class_count: int, dim: int, radius: float) -> np.ndarray:
    centers = np.zeros((class_count, dim))
    for c in range(class_count):
        axis = c % dim
        sign = 1.0 if (c // dim) % 2 == 0 else -1.0
        centers[c, axis] = sign * radius
    return centers


def gen_shifted_blobs(class_count: int, dim: int, n_per_class: int, shift: DomainShift,
                      noise_sigma: float, seed: int,
                      center_radius: float = 4.0) -> tuple[DomainDataset, DomainDataset]:
    """Gaussian blobs at fixed axis-aligned centers; the target domain draws
    fresh samples from the same blobs and pushes them through the shift."""
    if class_count < 2:
        raise ParameterError("need at least 2 classes")
    if dim < 2:
        raise ParameterError("need at least 2 feature dimensions")
    shift.matrix(dim)  # validates scale early
    rng = np.random.default_rng(seed)
    centers = _blob_centers(class_count, dim, center_radius)

    def draw():
        feats = np.concatenate([
            centers[c] + noise_sigma * rng.standard_normal((n_per_class, dim))
            for c in range(class_count)])
        labels = np.repeat(np.arange(class_count), n_per_class)
        order = rng.permutation(len(feats))
        return feats[order], labels[order]

    src_x, src_y = draw()
    tgt_x, tgt_y = draw()
    source = DomainDataset(src_x, src_y, "source", class_count)
    target = DomainDataset(shift.apply(tgt_x), tgt_y, "target", class_count)
    return source, target


def gen_two_moons_pair(n: int, shift: DomainShift, noise_sigma: float,
                       seed: int) -> tuple[DomainDataset, DomainDataset]:
    """Two interleaved half-circles: the upper unit half-circle at the origin
    and the lower one shifted to (1, 0.5). Zero noise puts every point
    exactly on its circle."""
    if n < 2:
        raise ParameterError("need at least 2 samples")
    rng = np.random.default_rng(seed)

    def draw():
        n_outer = (n + 1) // 2
        n_inner = n // 2
        t_outer = np.linspace(0.0, np.pi, n_outer)
        t_inner = np.linspace(0.0, np.pi, n_inner)
        outer = np.stack([np.cos(t_outer), np.sin(t_outer)], axis=1)
        inner = np.stack([1.0 - np.cos(t_inner), 0.5 - np.sin(t_inner)], axis=1)
        feats = np.concatenate([outer, inner])
        feats = feats + noise_sigma * rng.standard_normal(feats.shape)
        labels = np.concatenate([np.zeros(n_outer, dtype=np.int64),
                                 np.ones(n_inner, dtype=np.int64)])
        order = rng.permutation(n)
        return feats[order], labels[order]

    src_x, src_y = draw()
    tgt_x, tgt_y = draw()
    source = DomainDataset(src_x, src_y, "source", 2)
    target = DomainDataset(shift.apply(tgt_x), tgt_y, "target", 2)
    return source, target


def make_few_shot_split(ds: DomainDataset, shots: int, seed: int) -> FewShotSplit:
    """Exactly ``shots`` labeled examples per class, chosen uniformly."""
    if shots < 0:
        raise ParameterError("shots must be non-negative")
    if not ds.labeled:
        raise ContractError("cannot split an unlabeled dataset")
    rng = np.random.default_rng(seed)
    chosen: list[np.ndarray] = []
    for c in range(ds.class_count):
        pool = np.flatnonzero(ds.labels == c)
        if len(pool) < shots:
            raise DataError(f"class {c} has {len(pool)} examples, fewer than "
                            f"shots={shots}")
        if shots:
            chosen.append(rng.choice(pool, size=shots, replace=False))
    labeled = np.sort(np.concatenate(chosen)) if chosen else np.empty(0, dtype=np.int64)
    mask = np.ones(len(ds), dtype=bool)
    mask[labeled] = False
    return FewShotSplit(labeled_indices=labeled,
                        unlabeled_indices=np.flatnonzero(mask))


def dataset_to_csv(ds: DomainDataset) -> str:
    """Canonical CSV text; floats use shortest round-trip formatting."""
    dim = ds.features.shape[1]
    header = ",".join([f"f{i}" for i in range(dim)] + (["label"] if ds.labeled else []))
    lines = [header]
    for i in range(len(ds)):
        cells = [repr(float(v)) for v in ds.features[i]]
        if ds.labeled:
            cells.append(str(int(ds.labels[i])))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def dataset_from_csv(text: str, domain: str = "source",
                     class_count: int | None = None) -> DomainDataset:
    """Parse the CSV wire format; every failure names the offending row."""
    lines = [ln for ln in text.splitlines()]
    if not lines or not lines[0].strip():
        raise DataError("empty dataset: missing header row")
    header = [h.strip() for h in lines[0].split(",")]
    has_label = header[-1] == "label"
    feat_names = header[:-1] if has_label else header
    dim = len(feat_names)
    if dim == 0 or feat_names != [f"f{i}" for i in range(dim)]:
        raise DataError(f"bad header {lines[0]!r}: expected f0,...,f{{D-1}}[,label]")

    feats: list[list[float]] = []
    labels: list[int] = []
    for row_no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        expected = dim + (1 if has_label else 0)
        if len(cells) != expected:
            raise DataError(f"row {row_no}: expected {expected} columns, got {len(cells)}")
        try:
            feats.append([float(c) for c in cells[:dim]])
        except ValueError as exc:
            raise DataError(f"row {row_no}: malformed number ({exc})") from None
        if has_label:
            try:
                label = int(cells[dim])
            except ValueError:
                raise DataError(f"row {row_no}: malformed label {cells[dim]!r}") from None
            if label < 0 or (class_count is not None and label >= class_count):
                bound = class_count if class_count is not None else "K"
                raise DataError(f"row {row_no}: label {label} out of range [0, {bound})")
            labels.append(label)

    features = np.asarray(feats, dtype=np.float64).reshape(len(feats), dim)
    label_arr = np.asarray(labels, dtype=np.int64) if has_label else None
    if class_count is None:
        class_count = int(label_arr.max()) + 1 if has_label and len(labels) else 1
    return DomainDataset(features, label_arr, domain, class_count)


def save_dataset(ds: DomainDataset, path) -> None:
    """Write CSV for .csv paths, the binary container otherwise."""
    path = Path(path)
    if path.suffix == ".csv":
        path.write_text(dataset_to_csv(ds))
        return
    blobs = {"features": ds.features}
    if ds.labeled:
        blobs["labels"] = ds.labels.astype(np.float64)
    write_container(path, DATASET_MAGIC,
                    {"domain": ds.domain, "class_count": ds.class_count,
                     "labeled": ds.labeled}, blobs)


def load_labeled_array(path, domain: str | None = None,
                       class_count: int | None = None) -> DomainDataset:
    """Read a dataset from CSV or the binary container, validating as it goes."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"dataset file not found: {path}")
    raw = path.read_bytes()
    if raw[:8] == DATASET_MAGIC:
        meta, blobs = read_container(path, DATASET_MAGIC)
        labels = blobs["labels"].astype(np.int64) if meta.get("labeled") else None
        return DomainDataset(blobs["features"], labels,
                             domain or meta["domain"],
                             class_count or int(meta["class_count"]))
    return dataset_from_csv(raw.decode(), domain or "source", class_count)
