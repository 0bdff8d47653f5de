"""Dataset ingestion, incremental scenario construction, and augmentation.

Datasets are fixed-width real-valued feature vectors with dense integer class
labels. Class id 0 is the normal (majority) class by convention; all other
classes are fault classes and receive the smaller per-class training budget.
"""

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .rng import STREAM_SPLIT, derive_rng


@dataclass(frozen=True, eq=False)
class Sample:
    """One feature vector plus its class label."""

    features: np.ndarray
    label: int

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 1 or feats.size < 1:
            raise DataError("sample features must be a non-empty 1-D vector")
        if not np.all(np.isfinite(feats)):
            raise DataError("sample features must be finite")
        if self.label < 0:
            raise DataError("sample label must be a non-negative integer")
        feats.flags.writeable = False
        object.__setattr__(self, "features", feats)


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """Ordered collection of samples sharing one feature dimension.

    Attributes:
        dim: feature dimension shared by every sample.
        class_count: number of declared classes; labels lie in [0, class_count).
        features: (n, dim) float64 matrix, one sample per row.
        labels: (n,) int64 vector of dense class ids.
        label_mapping: (raw label, dense id) pairs recorded by the CSV loader,
            or None when labels were dense at the source.
    """

    dim: int
    class_count: int
    features: np.ndarray
    labels: np.ndarray
    label_mapping: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if self.dim < 1 or self.class_count < 1:
            raise DataError("dim and class_count must be positive")
        if feats.ndim != 2 or feats.shape[1] != self.dim:
            raise DataError(f"feature matrix must be (n, {self.dim})")
        if labels.shape != (feats.shape[0],):
            raise DataError("labels must align with feature rows")
        if not np.all(np.isfinite(feats)):
            raise DataError("dataset features must be finite")
        if feats.shape[0] and (labels.min() < 0 or labels.max() >= self.class_count):
            raise DataError("labels must lie in [0, class_count)")
        feats.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.features.shape[0]

    def class_indices(self, class_id: int) -> np.ndarray:
        return np.flatnonzero(self.labels == class_id)

    def sample(self, index: int) -> Sample:
        return Sample(self.features[index].copy(), int(self.labels[index]))


@dataclass(frozen=True)
class ScenarioConfig:
    """Counts and layout of an incremental training/testing schedule."""

    base_classes: tuple[int, ...]
    novel_per_session: int
    sessions: int
    normal_train_count: int
    fault_train_count: int
    test_per_class: int
    memory_k: int
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "base_classes", tuple(int(c) for c in self.base_classes))
        if not self.base_classes:
            raise ConfigError("base_classes must be nonempty")
        if len(set(self.base_classes)) != len(self.base_classes):
            raise ConfigError("base_classes must be distinct")
        for name in ("novel_per_session", "sessions", "normal_train_count",
                     "fault_train_count", "test_per_class", "memory_k"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.fault_train_count > self.normal_train_count:
            raise ConfigError("fault_train_count must not exceed normal_train_count")

    @property
    def total_classes(self) -> int:
        return len(self.base_classes) + self.novel_per_session * (self.sessions - 1)


@dataclass(frozen=True, eq=False)
class SessionPlan:
    """Materialized per-session train splits plus the shared test split."""

    scenario: ScenarioConfig
    dataset: LabeledDataset
    session_classes: tuple[tuple[int, ...], ...]
    train_indices: dict[int, np.ndarray]
    test_indices: dict[int, np.ndarray]
    train_shortfall: dict[int, int] = field(default_factory=dict)
    test_shortfall: dict[int, int] = field(default_factory=dict)

    def seen_classes(self, session: int) -> tuple[int, ...]:
        """Classes introduced in sessions 1..session, ascending."""
        seen: list[int] = []
        for classes in self.session_classes[:session]:
            seen.extend(classes)
        return tuple(sorted(seen))

    def train_features(self, class_id: int) -> np.ndarray:
        return self.dataset.features[self.train_indices[class_id]]

    def session_train_data(self, session: int) -> dict[int, np.ndarray]:
        """Training feature matrices for the classes new in `session` (1-based)."""
        return {c: self.train_features(c) for c in self.session_classes[session - 1]}

    def cumulative_test(self, session: int) -> tuple[np.ndarray, np.ndarray]:
        """Test features/labels for every class seen through `session`."""
        classes = self.seen_classes(session)
        rows = [self.test_indices[c] for c in classes]
        idx = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
        return self.dataset.features[idx], self.dataset.labels[idx]


def load_csv_dataset(path, label_column="label") -> LabeledDataset:
    """Load a header-ed CSV of real features plus one integer label column.

    Raw labels are remapped to dense 0-based ids in ascending raw order; the
    mapping is recorded on the returned dataset. Parse failures name the file
    line and column.
    """
    if not os.path.isfile(path):
        raise DataError(f"no such file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if isinstance(label_column, int):
            if not 0 <= label_column < len(header):
                raise DataError(f"{path}: label column index {label_column} out of range")
            label_idx = label_column
        else:
            try:
                label_idx = header.index(label_column)
            except ValueError:
                raise DataError(f"{path}: no column named {label_column!r}") from None
        feature_cols = [i for i in range(len(header)) if i != label_idx]
        if not feature_cols:
            raise DataError(f"{path}: no feature columns besides the label")

        rows: list[list[float]] = []
        raw_labels: list[int] = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: line {line_no} has {len(row)} fields, expected {len(header)}")
            feats = []
            for col in feature_cols:
                cell = row[col].strip()
                try:
                    value = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: line {line_no}, column {header[col]!r}: "
                        f"not a number: {cell!r}") from None
                if not math.isfinite(value):
                    raise DataError(
                        f"{path}: line {line_no}, column {header[col]!r}: "
                        f"non-finite value {cell!r}")
                feats.append(value)
            cell = row[label_idx].strip()
            try:
                raw_labels.append(int(cell))
            except ValueError:
                raise DataError(
                    f"{path}: line {line_no}, column {header[label_idx]!r}: "
                    f"not an integer label: {cell!r}") from None
            rows.append(feats)

    if not rows:
        raise DataError(f"{path}: no data rows")
    distinct = sorted(set(raw_labels))
    mapping = {raw: dense for dense, raw in enumerate(distinct)}
    labels = np.array([mapping[r] for r in raw_labels], dtype=np.int64)
    return LabeledDataset(
        dim=len(feature_cols),
        class_count=len(distinct),
        features=np.array(rows, dtype=np.float64),
        labels=labels,
        label_mapping=tuple((raw, dense) for raw, dense in mapping.items()),
    )


def build_scenario(dataset: LabeledDataset, config: ScenarioConfig) -> SessionPlan:
    """Split a dataset into a deterministic incremental session plan.

    Session 1 holds the configured base classes; each later session takes the
    next `novel_per_session` unused class ids in ascending order. Per class,
    a seeded shuffle assigns the first rows to training (normal_train_count
    for class 0, fault_train_count otherwise) and the following
    test_per_class rows to the test split. Classes smaller than their
    configured count contribute everything they have and are flagged as
    shortfalls instead of failing.
    """
    needed = config.total_classes
    if needed > dataset.class_count:
        raise DataError(
            f"scenario needs {needed} classes "
            f"({len(config.base_classes)} base + {config.novel_per_session} x "
            f"{config.sessions - 1} novel) but dataset has {dataset.class_count}")
    for c in config.base_classes:
        if not 0 <= c < dataset.class_count:
            raise DataError(f"base class {c} not present in dataset")

    remaining = [c for c in range(dataset.class_count) if c not in config.base_classes]
    session_classes: list[tuple[int, ...]] = [tuple(sorted(config.base_classes))]
    cursor = 0
    for _ in range(config.sessions - 1):
        chunk = remaining[cursor:cursor + config.novel_per_session]
        cursor += config.novel_per_session
        session_classes.append(tuple(chunk))
    assigned = [c for classes in session_classes for c in classes]
    if len(set(assigned)) != len(assigned):
        raise DataError("overlapping class assignment across sessions")

    train_indices: dict[int, np.ndarray] = {}
    test_indices: dict[int, np.ndarray] = {}
    train_shortfall: dict[int, int] = {}
    test_shortfall: dict[int, int] = {}
    for c in assigned:
        idx = dataset.class_indices(c)
        if idx.size == 0:
            raise DataError(f"class {c}: no samples in dataset")
        want_train = config.normal_train_count if c == 0 else config.fault_train_count
        rng = derive_rng(config.seed, STREAM_SPLIT, c)
        perm = idx[rng.permutation(idx.size)]
        take_train = min(want_train, perm.size)
        if take_train < want_train:
            train_shortfall[c] = want_train - take_train
        take_test = min(config.test_per_class, perm.size - take_train)
        if take_test < config.test_per_class:
            test_shortfall[c] = config.test_per_class - take_test
        train_indices[c] = perm[:take_train]
        test_indices[c] = perm[take_train:take_train + take_test]

    return SessionPlan(
        scenario=config,
        dataset=dataset,
        session_classes=tuple(session_classes),
        train_indices=train_indices,
        test_indices=test_indices,
        train_shortfall=train_shortfall,
        test_shortfall=test_shortfall,
    )


def _draw_segment(dim: int, rng: np.random.Generator) -> tuple[int, int]:
    """Pick (i, j) with 0 <= i < j <= dim uniformly over all such pairs."""
    total = dim * (dim + 1) // 2
    u = int(rng.integers(total))
    for i in range(dim):
        span = dim - i
        if u < span:
            return i, i + u + 1
        u -= span
    raise AssertionError("unreachable")


def segment_shuffle(features: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Return a copy with one uniformly chosen contiguous segment permuted."""
    vec = np.array(features, dtype=np.float64)
    if vec.ndim != 1 or vec.size < 1:
        raise DataError("features must be a non-empty 1-D vector")
    i, j = _draw_segment(vec.size, rng)
    vec[i:j] = vec[i:j][rng.permutation(j - i)]
    return vec


def augment_segment_shuffle(sample: Sample, rng: np.random.Generator) -> Sample:
    """Segment-shuffle augmentation; the label is preserved."""
    return Sample(segment_shuffle(sample.features, rng), sample.label)


def make_augmented_batch(samples: list[Sample], rng: np.random.Generator) -> list[Sample]:
    """Two augmented views per source sample, view pairs adjacent in order."""
    if not samples:
        raise DataError("cannot augment an empty batch")
    out: list[Sample] = []
    for sample in samples:
        out.append(augment_segment_shuffle(sample, rng))
        out.append(augment_segment_shuffle(sample, rng))
    return out


def augment_views(features: np.ndarray, labels: np.ndarray,
                  rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Matrix form of make_augmented_batch: (n, D) -> (2n, D) views."""
    n = features.shape[0]
    if n == 0:
        raise DataError("cannot augment an empty batch")
    views = np.empty((2 * n, features.shape[1]))
    for k in range(n):
        views[2 * k] = segment_shuffle(features[k], rng)
        views[2 * k + 1] = segment_shuffle(features[k], rng)
    out_labels = np.repeat(np.asarray(labels, dtype=np.int64), 2)
    return views, out_labels


def synth_gaussian_stream(class_count: int, dim: int, means_scale: float,
                          noise_sigma: float, counts, seed: int) -> LabeledDataset:
    """Isotropic Gaussian classes around seeded random means of fixed norm.

    `counts` is either one int shared by all classes or a per-class sequence.
    """
    if class_count < 2:
        raise ConfigError("class_count must be >= 2")
    if noise_sigma <= 0:
        raise ConfigError("noise_sigma must be > 0")
    if isinstance(counts, int):
        counts = [counts] * class_count
    counts = [int(c) for c in counts]
    if len(counts) != class_count:
        raise ConfigError(f"need {class_count} per-class counts, got {len(counts)}")
    if any(c <= 0 for c in counts):
        raise ConfigError("per-class counts must be positive")

    rng = np.random.default_rng(seed)
    means = np.empty((class_count, dim))
    for c in range(class_count):
        direction = rng.standard_normal(dim)
        means[c] = means_scale * direction / np.linalg.norm(direction)
    blocks = []
    labels = []
    for c in range(class_count):
        blocks.append(means[c] + noise_sigma * rng.standard_normal((counts[c], dim)))
        labels.extend([c] * counts[c])
    return LabeledDataset(
        dim=dim,
        class_count=class_count,
        features=np.vstack(blocks),
        labels=np.array(labels, dtype=np.int64),
    )


def _smooth_unit_profile(rng: np.random.Generator, dim: int, window: int) -> np.ndarray:
    """Unit-norm slowly varying profile: white noise under a circular moving
    average. Adjacent entries correlate, like neighboring sensor channels."""
    rough = rng.standard_normal(dim)
    if window > 1:
        pad_left = rough[-(window // 2):] if window // 2 else rough[:0]
        padded = np.concatenate([pad_left, rough, rough[:window - window // 2 - 1]])
        rough = np.convolve(padded, np.ones(window) / window, mode="valid")
    return rough / np.linalg.norm(rough)


def synth_fault_stream(class_count: int, dim: int, base_norm: float,
                       fault_offset: float, noise_sigma: float, counts, seed: int,
                       smooth_window: int = 9) -> LabeledDataset:
    """Synthetic plant-monitoring stream: faults as offsets from one normal state.

    Class 0 (normal operation) is an isotropic Gaussian around a smooth
    profile of norm base_norm; every fault class c > 0 sits at that profile
    plus its own smooth deviation of norm fault_offset. Smooth profiles keep
    segment-shuffle augmentation approximately label-preserving, as it is on
    real sensor data where neighboring channels correlate.
    """
    if class_count < 2:
        raise ConfigError("class_count must be >= 2")
    if noise_sigma <= 0:
        raise ConfigError("noise_sigma must be > 0")
    if smooth_window < 1:
        raise ConfigError("smooth_window must be >= 1")
    if isinstance(counts, int):
        counts = [counts] * class_count
    counts = [int(c) for c in counts]
    if len(counts) != class_count:
        raise ConfigError(f"need {class_count} per-class counts, got {len(counts)}")
    if any(c <= 0 for c in counts):
        raise ConfigError("per-class counts must be positive")

    rng = np.random.default_rng(seed)
    normal = base_norm * _smooth_unit_profile(rng, dim, smooth_window)
    means = [normal]
    for _ in range(class_count - 1):
        means.append(normal + fault_offset * _smooth_unit_profile(rng, dim, smooth_window))
    blocks = []
    labels = []
    for c in range(class_count):
        blocks.append(means[c] + noise_sigma * rng.standard_normal((counts[c], dim)))
        labels.extend([c] * counts[c])
    return LabeledDataset(
        dim=dim,
        class_count=class_count,
        features=np.vstack(blocks),
        labels=np.array(labels, dtype=np.int64),
    )


# Scenario presets: the published per-class counts, applied to whatever CSV
# the user supplies. The data files themselves are not bundled.
_PRESETS = {
    "tep-imbalanced": dict(base_classes=(0, 1), novel_per_session=2, sessions=5,
                           normal_train_count=500, fault_train_count=48,
                           test_per_class=800, memory_k=100),
    "tep-longtail": dict(base_classes=(0, 1), novel_per_session=2, sessions=5,
                         normal_train_count=500, fault_train_count=20,
                         test_per_class=800, memory_k=40),
    "mff-longtail-1": dict(base_classes=(0,), novel_per_session=1, sessions=5,
                           normal_train_count=200, fault_train_count=10,
                           test_per_class=800, memory_k=10),
    "mff-longtail-2": dict(base_classes=(0,), novel_per_session=1, sessions=5,
                           normal_train_count=200, fault_train_count=5,
                           test_per_class=800, memory_k=5),
    "synth": dict(base_classes=(0, 1), novel_per_session=2, sessions=3,
                  normal_train_count=200, fault_train_count=10,
                  test_per_class=50, memory_k=12),
}

PRESET_NAMES = tuple(sorted(_PRESETS))


def scenario_preset(name: str, seed: int = 0) -> ScenarioConfig:
    """Look up a named scenario preset; see PRESET_NAMES."""
    try:
        fields = _PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown scenario preset {name!r}; choose from {', '.join(PRESET_NAMES)}") from None
    return ScenarioConfig(seed=seed, **fields)
