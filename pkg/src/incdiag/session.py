"""Incremental session orchestration.

Each session: (1) update the feature extractor on new-class data plus
replayed exemplars, distilling from the frozen previous-session extractor;
(2) shrink the per-class exemplar quota and truncate old sets; (3) select
exemplars for the new classes with the updated extractor; (4) rebuild the
memory buffer; (5) retrain the classifier on the buffer and evaluate on the
cumulative test set. Exemplar selection runs before classifier training so
the classifier always sees every class learned so far.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import classifier as clf
from . import encoder as enc
from . import losses
from . import memory as mem
from .datasets import augment_views
from .errors import ConfigError, NumericalError
from .losses import LossConfig
from .optim import AdamState, adam_step
from .rng import (STREAM_ENCODER, STREAM_FCC, STREAM_FOREST, STREAM_HEAD,
                  STREAM_SELECT, STREAM_TRAIN, derive_rng, derive_seed)

SELECTION_STRATEGIES = ("mes", "herding", "random", "mixed", "none")
CLASSIFIER_KINDS = ("brf", "fcc")
LOSS_KINDS = ("scl", "ce")


@dataclass(frozen=True)
class TrainConfig:
    """Per-session training hyperparameters and component choices."""

    epochs: int = 100
    batch_size: int = 256  # source samples per step; each yields two views
    learning_rate: float = 0.01
    weight_decay: float = 1e-5
    loss: LossConfig = field(default_factory=LossConfig)
    loss_kind: str = "scl"
    selection: str = "mes"
    classifier: str = "brf"
    n_trees: int = 100
    mtry: int | None = None
    min_leaf: int = 1
    fcc_epochs: int = 500
    fcc_lr: float = 0.001

    def __post_init__(self):
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate and weight_decay must be >= 0")
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigError(f"loss must be one of {LOSS_KINDS}, got {self.loss_kind!r}")
        if self.selection not in SELECTION_STRATEGIES:
            raise ConfigError(
                f"selection must be one of {SELECTION_STRATEGIES}, got {self.selection!r}")
        if self.classifier not in CLASSIFIER_KINDS:
            raise ConfigError(
                f"classifier must be one of {CLASSIFIER_KINDS}, got {self.classifier!r}")


@dataclass(frozen=True, eq=False)
class SessionState:
    """Mutable-by-replacement state carried across sessions."""

    session_index: int
    seen_classes: tuple[int, ...]
    encoder: enc.EncoderParams
    teacher: enc.EncoderParams | None
    buffer: mem.MemoryBuffer
    classifier: object | None = None
    aux_head: tuple[np.ndarray, np.ndarray] | None = None  # cross-entropy head (W, b)


@dataclass(frozen=True, eq=False)
class SessionReport:
    """Evaluation of one completed session on the cumulative test set."""

    session_index: int
    classes: tuple[int, ...]
    accuracy: float
    confusion: np.ndarray  # rows: true class, cols: predicted, in `classes` order
    average_accuracy: float
    test_count: int


def initial_state(encoder_params: enc.EncoderParams, memory_capacity: int) -> SessionState:
    return SessionState(0, (), encoder_params, None,
                        mem.MemoryBuffer(memory_capacity, ()))


def _combined_training_set(new_class_data: dict[int, np.ndarray],
                           buffer: mem.MemoryBuffer) -> tuple[np.ndarray, np.ndarray]:
    blocks = []
    labels = []
    for c in sorted(new_class_data):
        feats = np.asarray(new_class_data[c], dtype=np.float64)
        blocks.append(feats)
        labels.append(np.full(feats.shape[0], c, dtype=np.int64))
    for s in buffer.sets:
        blocks.append(s.features)
        labels.append(np.full(len(s), s.class_id, dtype=np.int64))
    return np.vstack(blocks), np.concatenate(labels)


def _head_rows(seen: tuple[int, ...]) -> dict[int, int]:
    return {c: i for i, c in enumerate(seen)}


def _train_contrastive(x, y, params, teacher, session_index, cfg: TrainConfig, rng):
    state = AdamState.init(params.arrays())
    for _ in range(cfg.epochs):
        order = rng.permutation(x.shape[0])
        for start in range(0, x.shape[0], cfg.batch_size):
            take = order[start:start + cfg.batch_size]
            views, view_labels = augment_views(x[take], y[take], rng)
            loss, grads = losses.encoder_loss_gradients(
                views, view_labels, params, teacher, session_index, cfg.loss)
            if not math.isfinite(loss):
                raise NumericalError(f"non-finite encoder loss in session {session_index}")
            arrays, state = adam_step(params.arrays(), grads.arrays(), state,
                                      cfg.learning_rate, cfg.weight_decay)
            params = params.replace_arrays(arrays)
    return params, None


def _train_cross_entropy(x, y, params, teacher, session_index, cfg: TrainConfig,
                         rng, seen_after, prev_seen, prev_head, master_seed):
    """Baseline representation learning: linear head + softmax cross-entropy,
    with old-class logit distillation from the previous session's extractor.

    Shares the data pipeline with the contrastive objective: the same
    two-view augmented batches, so ablations isolate the loss function.
    """
    rows = _head_rows(seen_after)
    head_rng = derive_rng(master_seed, STREAM_HEAD, session_index)
    w_head = 0.01 * head_rng.standard_normal((len(seen_after), params.config.embed_dim))
    b_head = np.zeros(len(seen_after))

    distill = session_index > 1 and prev_head is not None
    if distill:
        old_cols = np.array([rows[c] for c in prev_seen])

    n_arrays = len(params.arrays())
    state = AdamState.init(params.arrays() + [w_head, b_head])
    for _ in range(cfg.epochs):
        order = rng.permutation(x.shape[0])
        for start in range(0, x.shape[0], cfg.batch_size):
            take = order[start:start + cfg.batch_size]
            views, view_labels = augment_views(x[take], y[take], rng)
            by = np.array([rows[int(c)] for c in view_labels])
            z, cache = enc.forward_cached(params, views)
            logits = z @ w_head.T + b_head
            shifted = logits - logits.max(axis=1, keepdims=True)
            exp = np.exp(shifted)
            probs = exp / exp.sum(axis=1, keepdims=True)
            grad_logits = probs.copy()
            grad_logits[np.arange(by.size), by] -= 1.0
            grad_logits /= by.size
            if distill:
                teacher_z = enc.encode_batch(teacher, views)
                t_logits = teacher_z @ prev_head[0].T + prev_head[1]
                t_shift = t_logits - t_logits.max(axis=1, keepdims=True)
                t_exp = np.exp(t_shift)
                teacher_probs = t_exp / t_exp.sum(axis=1, keepdims=True)
                old = logits[:, old_cols]
                old_shift = old - old.max(axis=1, keepdims=True)
                old_exp = np.exp(old_shift)
                student_old = old_exp / old_exp.sum(axis=1, keepdims=True)
                kd = cfg.loss.kd_weight * (student_old - teacher_probs) / by.size
                grad_logits[:, old_cols] += kd
            grad_w = grad_logits.T @ z
            grad_b = grad_logits.sum(axis=0)
            grad_z = grad_logits @ w_head
            grads = enc.backward(params, cache, grad_z)
            arrays, state = adam_step(params.arrays() + [w_head, b_head],
                                      grads.arrays() + [grad_w, grad_b], state,
                                      cfg.learning_rate, cfg.weight_decay)
            params = params.replace_arrays(arrays[:n_arrays])
            w_head, b_head = arrays[n_arrays], arrays[n_arrays + 1]
    return params, (w_head, b_head)


def update_feature_extractor(new_class_data: dict[int, np.ndarray],
                             buffer: mem.MemoryBuffer,
                             encoder_params: enc.EncoderParams,
                             session_index: int, cfg: TrainConfig,
                             master_seed: int,
                             prev_seen: tuple[int, ...] = (),
                             prev_head=None):
    """Train the extractor on new-class samples plus every buffered exemplar.

    Returns (updated params, frozen teacher snapshot, aux head or None).
    """
    if not new_class_data:
        raise ValueError("new_class_data must be nonempty")
    teacher = enc.snapshot_teacher(encoder_params)
    x, y = _combined_training_set(new_class_data, buffer)
    rng = derive_rng(master_seed, STREAM_TRAIN, session_index)
    seen_after = tuple(sorted(set(prev_seen) | set(new_class_data)))
    if cfg.loss_kind == "ce":
        params, head = _train_cross_entropy(x, y, encoder_params, teacher, session_index,
                                            cfg, rng, seen_after, prev_seen, prev_head,
                                            master_seed)
    else:
        params, head = _train_contrastive(x, y, encoder_params, teacher, session_index,
                                          cfg, rng)
    return params, teacher, head


def _select_new_sets(new_class_data, encoder_params, quota, cfg: TrainConfig,
                     master_seed, session_index):
    sets = []
    for c in sorted(new_class_data):
        feats = np.asarray(new_class_data[c], dtype=np.float64)
        m_eff = min(quota, feats.shape[0])
        if cfg.selection == "mes":
            sets.append(mem.select_exemplars_marginal(feats, encoder_params, m_eff, c))
        elif cfg.selection == "herding":
            sets.append(mem.select_exemplars_herding(feats, encoder_params, m_eff, c))
        elif cfg.selection == "mixed":
            sets.append(mem.select_exemplars_mixed(feats, encoder_params, m_eff, c))
        elif cfg.selection == "random":
            rng = derive_rng(master_seed, STREAM_SELECT, session_index, c)
            sets.append(mem.select_exemplars_random(feats, m_eff, rng, c))
        else:
            raise ConfigError(f"unknown selection strategy {cfg.selection!r}")
    return sets


def train_classifier_and_classify(buffer_or_rows, encoder_params: enc.EncoderParams,
                                  test_features: np.ndarray, cfg: TrainConfig,
                                  master_seed: int, session_index: int,
                                  required_classes: tuple[int, ...] = ()):
    """Fit the configured classifier on exemplar embeddings, then predict.

    `buffer_or_rows` is either a MemoryBuffer or a pre-stacked
    (features, labels) pair. Returns (classifier, predictions).
    """
    if isinstance(buffer_or_rows, mem.MemoryBuffer):
        missing = [c for c in required_classes if c not in buffer_or_rows.classes]
        if missing:
            raise ValueError(f"memory buffer is missing seen classes {missing}")
        feats, labels = buffer_or_rows.stacked()
    else:
        feats, labels = buffer_or_rows
    z = enc.encode_batch(encoder_params, feats)
    if cfg.classifier == "brf":
        model = clf.brf_fit(z, labels, n_trees=cfg.n_trees, mtry=cfg.mtry,
                            seed=derive_seed(master_seed, STREAM_FOREST, session_index),
                            min_leaf=cfg.min_leaf)
        predict = lambda emb: clf.brf_predict_batch(model, emb)
    else:
        model = clf.fcc_fit(z, labels, tuple(sorted(set(int(c) for c in labels))),
                            epochs=cfg.fcc_epochs, lr=cfg.fcc_lr,
                            seed=derive_seed(master_seed, STREAM_FCC, session_index))
        predict = lambda emb: clf.fcc_predict_batch(model, emb)
    test = np.asarray(test_features, dtype=np.float64)
    if test.shape[0] == 0:
        return model, np.empty(0, dtype=np.int64)
    return model, predict(enc.encode_batch(encoder_params, test))


def confusion_matrix(true_labels: np.ndarray, predictions: np.ndarray,
                     classes: tuple[int, ...]) -> np.ndarray:
    """Counts[i, j] = samples of classes[i] predicted as classes[j].

    Predictions outside `classes` cannot occur: the classifier only ever
    emits labels it was trained on.
    """
    index = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(true_labels, predictions):
        counts[index[int(t)], index[int(p)]] += 1
    return counts


def run_incremental_session(state: SessionState, new_class_data: dict[int, np.ndarray],
                            test_features: np.ndarray, test_labels: np.ndarray,
                            cfg: TrainConfig, master_seed: int,
                            previous_accuracies: tuple[float, ...] = ()):
    """Execute one full incremental session; returns (new state, report)."""
    new_classes = tuple(sorted(new_class_data))
    if not new_classes:
        raise ValueError("a session needs at least one new class")
    overlap = set(new_classes) & set(state.seen_classes)
    if overlap:
        raise ValueError(f"classes {sorted(overlap)} were already learned")
    session_index = state.session_index + 1
    seen = tuple(sorted(state.seen_classes + new_classes))

    params, teacher, head = update_feature_extractor(
        new_class_data, state.buffer, state.encoder, session_index, cfg, master_seed,
        prev_seen=state.seen_classes, prev_head=state.aux_head)

    if cfg.selection == "none":
        buffer = state.buffer  # stays empty: no replay
        train_rows = _combined_training_set(new_class_data, state.buffer)
        model, predictions = train_classifier_and_classify(
            train_rows, params, test_features, cfg, master_seed, session_index)
    else:
        quota = mem.per_class_quota(state.buffer.capacity, len(seen))
        reduced = mem.reduce_exemplar_sets(state.buffer, quota)
        new_sets = _select_new_sets(new_class_data, params, quota, cfg,
                                    master_seed, session_index)
        buffer = mem.construct_buffer(reduced, new_sets)
        model, predictions = train_classifier_and_classify(
            buffer, params, test_features, cfg, master_seed, session_index,
            required_classes=seen)

    confusion = confusion_matrix(test_labels, predictions, seen)
    total = confusion.sum()
    accuracy = float(np.trace(confusion) / total) if total else 0.0
    accuracies = previous_accuracies + (accuracy,)
    report = SessionReport(
        session_index=session_index,
        classes=seen,
        accuracy=accuracy,
        confusion=confusion,
        average_accuracy=float(np.mean(accuracies)),
        test_count=int(total),
    )
    new_state = SessionState(
        session_index=session_index,
        seen_classes=seen,
        encoder=params,
        teacher=teacher if session_index >= 2 else None,
        buffer=buffer,
        classifier=model,
        aux_head=head,
    )
    return new_state, report


def run_experiment(plan, encoder_config: enc.EncoderConfig, cfg: TrainConfig,
                   master_seed: int):
    """Run every session of a plan; returns (final state, reports)."""
    params = enc.init_encoder(
        replace(encoder_config, seed=derive_seed(master_seed, STREAM_ENCODER)))
    state = initial_state(params, plan.scenario.memory_k)
    reports: list[SessionReport] = []
    accuracies: tuple[float, ...] = ()
    for session in range(1, len(plan.session_classes) + 1):
        new_data = plan.session_train_data(session)
        test_x, test_y = plan.cumulative_test(session)
        state, report = run_incremental_session(
            state, new_data, test_x, test_y, cfg, master_seed,
            previous_accuracies=accuracies)
        accuracies = accuracies + (report.accuracy,)
        reports.append(report)
    return state, reports


def aggregate_metrics(reports_or_accuracies) -> dict:
    """Mean accuracy across sessions, with per-session values echoed."""
    items = list(reports_or_accuracies)
    if not items:
        raise ValueError("need at least one session report")
    if isinstance(items[0], SessionReport):
        values = [r.accuracy for r in items]
    else:
        values = [float(v) for v in items]
    return {"per_session": values, "average": float(np.mean(values))}


def class_group_accuracy(report: SessionReport, classes) -> float:
    """Accuracy restricted to the true-class rows in `classes`."""
    rows = [report.classes.index(c) for c in classes]
    correct = sum(report.confusion[r, r] for r in rows)
    total = sum(report.confusion[r].sum() for r in rows)
    return float(correct / total) if total else 0.0


def report_to_dict(report: SessionReport) -> dict:
    return {
        "session": report.session_index,
        "classes": list(report.classes),
        "accuracy": report.accuracy,
        "average_accuracy": report.average_accuracy,
        "test_count": report.test_count,
        "confusion": report.confusion.tolist(),
    }
