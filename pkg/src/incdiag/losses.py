"""Contrastive and distillation objectives over unit-norm embeddings.

All softmaxes are temperature-scaled dot-product similarities over the batch
with the anchor excluded, computed with max-subtraction for overflow safety.
Gradients are returned alongside values so the encoder can backpropagate
without an autodiff framework; the teacher side of distillation is frozen and
receives no gradient.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import encoder as enc
from .errors import ConfigError, NumericalError


@dataclass(frozen=True)
class LossConfig:
    temperature: float = 0.07
    kd_weight: float = 1.0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be > 0, got {self.temperature}")
        if self.kd_weight < 0:
            raise ConfigError("kd_weight must be >= 0")


@dataclass(frozen=True, eq=False)
class ContrastiveBatch:
    """2N embeddings (unit norm) with aligned class labels."""

    embeddings: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        z = np.asarray(self.embeddings, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if z.ndim != 2 or z.shape[0] < 2:
            raise ValueError("need at least 2 embeddings")
        if z.shape[0] % 2 != 0:
            raise ValueError("batch size must be even (two views per source sample)")
        if y.shape != (z.shape[0],):
            raise ValueError("labels must align with embeddings")
        norms = np.linalg.norm(z, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            worst = int(np.argmax(np.abs(norms - 1.0)))
            raise ValueError(f"embedding {worst} has norm {norms[worst]:.8f}, expected 1")
        z.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "embeddings", z)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.embeddings.shape[0]


def _log_softmax_rows(z: np.ndarray, temperature: float):
    """Anchor-excluded similarity log-softmax per row.

    Returns (log_probs, probs), both (n, n) with the diagonal forced to
    -inf / 0 so entry [i, a] is the anchor-i probability of a in A(i).
    """
    n = z.shape[0]
    sims = (z @ z.T) / temperature
    np.fill_diagonal(sims, -np.inf)
    row_max = sims.max(axis=1, keepdims=True)
    shifted = sims - row_max
    with np.errstate(invalid="ignore"):
        exp = np.exp(shifted)
    exp[np.arange(n), np.arange(n)] = 0.0
    denom = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(denom)
    probs = exp / denom
    return log_probs, probs


def similarity_distribution(embeddings, anchor: int, config: LossConfig) -> np.ndarray:
    """Probability vector over all non-anchor indices, in index order.

    Accepts a ContrastiveBatch or a raw (n, d) array of unit-norm embeddings.
    """
    z = embeddings.embeddings if isinstance(embeddings, ContrastiveBatch) else (
        np.asarray(embeddings, dtype=np.float64))
    n = z.shape[0]
    if n < 2:
        raise ValueError("similarity distribution needs a batch of size >= 2")
    if not 0 <= anchor < n:
        raise ValueError(f"anchor index {anchor} out of range for batch of {n}")
    sims = (z @ z[anchor]) / config.temperature
    others = np.concatenate([sims[:anchor], sims[anchor + 1:]])
    shifted = others - others.max()
    exp = np.exp(shifted)
    return exp / exp.sum()


def _positive_mask(labels: np.ndarray) -> np.ndarray:
    """mask[i, p] = 1 when p is a positive of anchor i (same label, p != i)."""
    same = labels[:, None] == labels[None, :]
    np.fill_diagonal(same, False)
    return same.astype(np.float64)


def _scl_parts(batch: ContrastiveBatch, config: LossConfig):
    mask = _positive_mask(batch.labels)
    counts = mask.sum(axis=1)
    if np.any(counts == 0):
        anchor = int(np.argmin(counts))
        raise ValueError(
            f"anchor {anchor} (label {batch.labels[anchor]}) has no positive in the batch")
    log_probs, probs = _log_softmax_rows(batch.embeddings, config.temperature)
    # The diagonal of log_probs is -inf; mask it out before weighting.
    weighted = np.where(mask > 0.0, log_probs, 0.0)
    loss = float(-np.sum(weighted / counts[:, None]))
    return loss, mask, counts, probs


def supervised_contrastive_loss(batch: ContrastiveBatch, config: LossConfig) -> float:
    """Sum over anchors of the mean negative log-probability of their positives."""
    loss, _, _, _ = _scl_parts(batch, config)
    return loss


def supervised_contrastive_loss_grad(batch: ContrastiveBatch,
                                     config: LossConfig) -> tuple[float, np.ndarray]:
    """Loss plus its gradient with respect to the embeddings."""
    loss, mask, counts, probs = _scl_parts(batch, config)
    grad_logits = probs - mask / counts[:, None]
    grad_z = (grad_logits + grad_logits.T) @ batch.embeddings / config.temperature
    return loss, grad_z


def view_pair_contrastive_loss(batch: ContrastiveBatch, config: LossConfig) -> float:
    """Reference objective where each anchor's only positive is its paired view.

    Views are adjacent (2k, 2k+1). Equals the supervised loss whenever every
    anchor has exactly one same-label partner in the batch.
    """
    n = len(batch)
    log_probs, _ = _log_softmax_rows(batch.embeddings, config.temperature)
    partners = np.arange(n) ^ 1
    return float(-log_probs[np.arange(n), partners].sum())


def _distillation_parts(teacher_batch: ContrastiveBatch, student_batch: ContrastiveBatch,
                        config: LossConfig):
    n = len(student_batch)
    if len(teacher_batch) != n:
        raise ValueError(
            f"teacher batch has {len(teacher_batch)} rows, student has {n}")
    _, teacher_probs = _log_softmax_rows(teacher_batch.embeddings, config.temperature)
    student_log, student_probs = _log_softmax_rows(student_batch.embeddings,
                                                   config.temperature)
    # The diagonals pair 0 with -inf; select before multiplying.
    safe_log = np.where(teacher_probs > 0.0, student_log, 0.0)
    loss = float(-np.sum(teacher_probs * safe_log) / n)
    return loss, teacher_probs, student_probs


def distillation_loss(teacher_batch: ContrastiveBatch, student_batch: ContrastiveBatch,
                      config: LossConfig) -> float:
    """Mean cross-entropy from teacher to student similarity distributions."""
    loss, _, _ = _distillation_parts(teacher_batch, student_batch, config)
    return loss


def distillation_logit_grad(teacher_batch: ContrastiveBatch, student_batch: ContrastiveBatch,
                            config: LossConfig) -> np.ndarray:
    """Gradient of the distillation loss in student similarity-logit space."""
    _, teacher_probs, student_probs = _distillation_parts(teacher_batch, student_batch, config)
    return (student_probs - teacher_probs) / len(student_batch)


def distillation_loss_grad(teacher_batch: ContrastiveBatch, student_batch: ContrastiveBatch,
                           config: LossConfig) -> tuple[float, np.ndarray]:
    """Loss plus its gradient with respect to the student embeddings."""
    loss, teacher_probs, student_probs = _distillation_parts(teacher_batch, student_batch,
                                                             config)
    grad_logits = (student_probs - teacher_probs) / len(student_batch)
    grad_z = (grad_logits + grad_logits.T) @ student_batch.embeddings / config.temperature
    return loss, grad_z


def mean_similarity_entropy(batch: ContrastiveBatch, config: LossConfig) -> float:
    """Mean entropy of the batch's anchor similarity distributions."""
    log_probs, probs = _log_softmax_rows(batch.embeddings, config.temperature)
    safe_log = np.where(probs > 0.0, log_probs, 0.0)
    return float(-np.sum(probs * safe_log) / len(batch))


def encoder_loss(features: np.ndarray, labels: np.ndarray,
                 student_params: "enc.EncoderParams",
                 teacher_params: "enc.EncoderParams | None",
                 session_index: int, config: LossConfig) -> float:
    """Training objective: contrastive loss plus (from session 2) distillation.

    `features`/`labels` are the augmented views of one mini-batch. The
    distillation term compares frozen-teacher and student encodings of the
    same views and is weighted by config.kd_weight.
    """
    if session_index < 1:
        raise ValueError("session_index is 1-based")
    student_z = enc.encode_batch(student_params, features)
    batch = ContrastiveBatch(student_z, labels)
    loss = supervised_contrastive_loss(batch, config)
    if session_index > 1:
        if teacher_params is None:
            raise ValueError(f"session {session_index} requires a teacher encoder")
        teacher_z = enc.encode_batch(teacher_params, features)
        loss += config.kd_weight * distillation_loss(
            ContrastiveBatch(teacher_z, labels), batch, config)
    if not math.isfinite(loss):
        raise NumericalError("encoder loss is non-finite")
    return loss


def encoder_loss_gradients(features: np.ndarray, labels: np.ndarray,
                           student_params: "enc.EncoderParams",
                           teacher_params: "enc.EncoderParams | None",
                           session_index: int,
                           config: LossConfig) -> tuple[float, "enc.Gradients"]:
    """encoder_loss value plus exact gradients for every student parameter."""
    if session_index < 1:
        raise ValueError("session_index is 1-based")
    if session_index > 1 and teacher_params is None:
        raise ValueError(f"session {session_index} requires a teacher encoder")
    teacher_z = None
    if session_index > 1:
        teacher_z = enc.encode_batch(teacher_params, features)

    def objective(student_z: np.ndarray):
        batch = ContrastiveBatch(student_z, labels)
        loss, grad_z = supervised_contrastive_loss_grad(batch, config)
        if teacher_z is not None:
            kd_loss, kd_grad = distillation_loss_grad(
                ContrastiveBatch(teacher_z, labels), batch, config)
            loss += config.kd_weight * kd_loss
            grad_z = grad_z + config.kd_weight * kd_grad
        return loss, grad_z

    return enc.gradients(student_params, features, objective)
