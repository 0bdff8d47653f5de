"""Capacity-limited exemplar buffer with prioritized per-class selection.

Exemplar sets store raw feature vectors (not embeddings) so later-session
encoders can re-encode them. Selection orders are prioritized: truncating a
set to its first m entries yields exactly the m-exemplar selection, so buffer
reduction is a prefix cut.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import encoder as enc


@dataclass(frozen=True, eq=False)
class ExemplarSet:
    """Exemplars of one class in selection-priority order."""

    class_id: int
    features: np.ndarray
    source_indices: tuple[int, ...]

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2:
            raise ValueError("exemplar features must be a (m, D) matrix")
        if feats.shape[0] != len(self.source_indices):
            raise ValueError("source_indices must align with exemplar rows")
        if len(set(self.source_indices)) != len(self.source_indices):
            raise ValueError(f"class {self.class_id}: duplicate exemplar indices")
        feats.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "source_indices", tuple(int(i) for i in self.source_indices))

    def __len__(self) -> int:
        return self.features.shape[0]

    def truncated(self, m: int) -> "ExemplarSet":
        if m >= len(self):
            return self
        return ExemplarSet(self.class_id, self.features[:m].copy(), self.source_indices[:m])


@dataclass(frozen=True, eq=False)
class MemoryBuffer:
    """One ExemplarSet per seen class, under a shared capacity budget."""

    capacity: int
    sets: tuple[ExemplarSet, ...] = ()

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError("capacity must be positive")
        classes = [s.class_id for s in self.sets]
        if len(set(classes)) != len(classes):
            raise ValueError("duplicate class id in memory buffer")
        object.__setattr__(self, "sets", tuple(self.sets))

    @property
    def classes(self) -> tuple[int, ...]:
        return tuple(s.class_id for s in self.sets)

    def total_stored(self) -> int:
        return sum(len(s) for s in self.sets)

    def get(self, class_id: int) -> ExemplarSet:
        for s in self.sets:
            if s.class_id == class_id:
                return s
        raise KeyError(f"class {class_id} not in buffer")

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """All exemplars as one (features, labels) pair, class-set order."""
        if not self.sets:
            raise ValueError("memory buffer is empty")
        feats = np.vstack([s.features for s in self.sets])
        labels = np.concatenate([np.full(len(s), s.class_id, dtype=np.int64)
                                 for s in self.sets])
        return feats, labels


def per_class_quota(capacity: int, seen_classes: int) -> int:
    """Per-class exemplar budget: capacity / classes, rounded up."""
    if capacity < 1 or seen_classes < 1:
        raise ValueError("capacity and seen_classes must be positive")
    return -(-capacity // seen_classes)


def class_mean(embeddings: np.ndarray) -> np.ndarray:
    """Arithmetic mean of embedding rows; deliberately not re-normalized."""
    z = np.asarray(embeddings, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] == 0:
        raise ValueError("class_mean needs a nonempty (n, d) matrix")
    return z.mean(axis=0)


def _greedy_select(embeddings: np.ndarray, m: int, farthest: bool) -> list[int]:
    """Greedy mean-approximation selection over embedding rows.

    At step k the candidate x scores ||mu - (phi(x) + sum of chosen) / k||;
    `farthest` picks the argmax (boundary exemplars), otherwise the argmin
    (herding). Chosen rows leave the pool; ties go to the lowest index.
    """
    z = np.asarray(embeddings, dtype=np.float64)
    n = z.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"m must be in [1, {n}], got {m}")
    mu = class_mean(z)
    chosen: list[int] = []
    running = np.zeros(z.shape[1])
    available = np.ones(n, dtype=bool)
    for k in range(1, m + 1):
        candidate_means = (running[None, :] + z) / k
        scores = np.linalg.norm(mu[None, :] - candidate_means, axis=1)
        if farthest:
            scores = np.where(available, scores, -np.inf)
            pick = int(np.argmax(scores))
        else:
            scores = np.where(available, scores, np.inf)
            pick = int(np.argmin(scores))
        chosen.append(pick)
        available[pick] = False
        running += z[pick]
    return chosen


def select_exemplars_marginal(class_samples: np.ndarray, encoder_params: "enc.EncoderParams",
                              m: int, class_id: int) -> ExemplarSet:
    """Prioritized selection of boundary exemplars (farthest-from-mean greedy)."""
    z = enc.encode_batch(encoder_params, class_samples)
    order = _greedy_select(z, m, farthest=True)
    return ExemplarSet(class_id, np.asarray(class_samples)[order].copy(), tuple(order))


def select_exemplars_herding(class_samples: np.ndarray, encoder_params: "enc.EncoderParams",
                             m: int, class_id: int) -> ExemplarSet:
    """Herding: greedy selection keeping the running mean near the class mean."""
    z = enc.encode_batch(encoder_params, class_samples)
    order = _greedy_select(z, m, farthest=False)
    return ExemplarSet(class_id, np.asarray(class_samples)[order].copy(), tuple(order))


def select_exemplars_random(class_samples: np.ndarray, m: int,
                            rng: np.random.Generator, class_id: int) -> ExemplarSet:
    """Uniform selection without replacement, in shuffled order."""
    n = np.asarray(class_samples).shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"m must be in [1, {n}], got {m}")
    order = [int(i) for i in rng.permutation(n)[:m]]
    return ExemplarSet(class_id, np.asarray(class_samples)[order].copy(), tuple(order))


def select_exemplars_mixed(class_samples: np.ndarray, encoder_params: "enc.EncoderParams",
                           m: int, class_id: int) -> ExemplarSet:
    """Herding for the first ceil(m/2) picks, boundary selection for the rest.

    The second block reruns the farthest-from-mean greedy over the not yet
    chosen candidates, against the full-class mean.
    """
    samples = np.asarray(class_samples)
    n = samples.shape[0]
    if not 1 <= m <= n:
        raise ValueError(f"m must be in [1, {n}], got {m}")
    z = enc.encode_batch(encoder_params, samples)
    n_herd = -(-m // 2)
    herd_order = _greedy_select(z, n_herd, farthest=False)
    order = list(herd_order)
    n_marginal = m - n_herd
    if n_marginal > 0:
        remaining = [i for i in range(n) if i not in set(herd_order)]
        sub = _greedy_select(z[remaining], n_marginal, farthest=True)
        order.extend(remaining[i] for i in sub)
    return ExemplarSet(class_id, samples[order].copy(), tuple(order))


def reduce_exemplar_sets(buffer: MemoryBuffer, new_m: int) -> MemoryBuffer:
    """Truncate every set to its first new_m exemplars (prefix priority)."""
    if new_m < 1:
        raise ValueError("new_m must be positive")
    return MemoryBuffer(buffer.capacity, tuple(s.truncated(new_m) for s in buffer.sets))


def construct_buffer(old_buffer: MemoryBuffer,
                     new_class_sets: list[ExemplarSet]) -> MemoryBuffer:
    """Append exemplar sets for newly learned classes to the buffer."""
    seen = set(old_buffer.classes)
    for s in new_class_sets:
        if s.class_id in seen:
            raise ValueError(f"class {s.class_id} already has an exemplar set")
        seen.add(s.class_id)
    return MemoryBuffer(old_buffer.capacity, old_buffer.sets + tuple(new_class_sets))


def buffer_to_csv(buffer: MemoryBuffer, path) -> None:
    """Dump buffer contents for inspection: class id, rank, feature columns."""
    dim = buffer.sets[0].features.shape[1] if buffer.sets else 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_id", "rank"] + [f"f{i}" for i in range(dim)])
        for s in buffer.sets:
            for rank, row in enumerate(s.features, start=1):
                writer.writerow([s.class_id, rank] + [repr(float(v)) for v in row])
