"""Trainable feature extractor producing unit-norm embeddings.

A small fully connected network: affine + activation blocks followed by a
final affine layer and L2 normalization. Parameters are immutable values;
training steps build new parameter objects. Backpropagation is written out
explicitly so gradients are exact in 64-bit arithmetic and can be checked
against central finite differences.
"""

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericalError

_ZERO_NORM_EPS = 1e-300  # pre-normalization norms below this take the basis-vector fallback


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int
    hidden_dims: tuple[int, ...] = (64, 64)
    embed_dim: int = 16
    activation: str = "relu"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        if self.input_dim < 1:
            raise ConfigError("input_dim must be positive")
        if not self.hidden_dims or any(h < 1 for h in self.hidden_dims):
            raise ConfigError("hidden_dims must be a nonempty list of positive widths")
        if self.embed_dim < 2:
            raise ConfigError("embed_dim must be >= 2")
        if self.activation not in ("relu", "tanh"):
            raise ConfigError(f"activation must be 'relu' or 'tanh', got {self.activation!r}")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_dims, self.embed_dim)


@dataclass(frozen=True, eq=False)
class EncoderParams:
    """Per-layer weight matrices (out x in) and bias vectors."""

    config: EncoderConfig
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        dims = self.config.layer_dims
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ConfigError("parameter count does not match config")
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (dims[layer + 1], dims[layer]) or b.shape != (dims[layer + 1],):
                raise ConfigError(f"layer {layer} has shape {w.shape}, expected "
                                  f"{(dims[layer + 1], dims[layer])}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise NumericalError(f"layer {layer} contains non-finite parameters")
            w.flags.writeable = False
            b.flags.writeable = False

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def replace_arrays(self, arrays: list[np.ndarray]) -> "EncoderParams":
        n = len(self.weights)
        return EncoderParams(self.config, tuple(arrays[:n]), tuple(arrays[n:]))


@dataclass(frozen=True, eq=False)
class Gradients:
    """Parameter-shaped gradient structure mirroring EncoderParams."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]


def init_encoder(config: EncoderConfig) -> EncoderParams:
    """Seeded init: weights ~ N(0, 1/fan_in), biases zero."""
    rng = np.random.default_rng(config.seed)
    dims = config.layer_dims
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.standard_normal((fan_out, fan_in)) / math.sqrt(fan_in))
        biases.append(np.zeros(fan_out))
    return EncoderParams(config, tuple(weights), tuple(biases))


def _activate(pre: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(pre, 0.0)
    return np.tanh(pre)


def _activate_grad(pre: np.ndarray, post: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (pre > 0.0).astype(np.float64)
    return 1.0 - post * post


def forward_cached(params: EncoderParams, batch: np.ndarray):
    """Forward pass keeping intermediates for backward().

    Returns (embeddings, cache). Rows whose pre-normalization output is the
    zero vector map to the first canonical basis vector.
    """
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.config.input_dim:
        raise ValueError(f"batch must be (n, {params.config.input_dim}), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("encoder inputs must be finite")
    kind = params.config.activation
    inputs = []
    pres = []
    posts = []
    h = x
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        inputs.append(h)
        pre = h @ w.T + b
        post = _activate(pre, kind)
        pres.append(pre)
        posts.append(post)
        h = post
    inputs.append(h)
    v = h @ params.weights[-1].T + params.biases[-1]
    norms = np.linalg.norm(v, axis=1)
    degenerate = norms < _ZERO_NORM_EPS
    safe = np.where(degenerate, 1.0, norms)
    z = v / safe[:, None]
    if np.any(degenerate):
        z[degenerate] = 0.0
        z[degenerate, 0] = 1.0
    cache = (inputs, pres, posts, v, safe, degenerate, z)
    return z, cache


def backward(params: EncoderParams, cache, grad_embeddings: np.ndarray) -> Gradients:
    """Exact reverse-mode gradients given dLoss/dEmbeddings."""
    inputs, pres, posts, _v, norms, degenerate, z = cache
    kind = params.config.activation
    dz = np.asarray(grad_embeddings, dtype=np.float64)
    # Through L2 normalization: dv = (dz - z (z . dz)) / ||v||.
    inner = np.sum(z * dz, axis=1, keepdims=True)
    dv = (dz - z * inner) / norms[:, None]
    dv[degenerate] = 0.0

    weight_grads: list[np.ndarray] = [np.empty(0)] * len(params.weights)
    bias_grads: list[np.ndarray] = [np.empty(0)] * len(params.biases)
    up = dv
    weight_grads[-1] = up.T @ inputs[-1]
    bias_grads[-1] = up.sum(axis=0)
    dh = up @ params.weights[-1]
    for layer in range(len(params.weights) - 2, -1, -1):
        da = dh * _activate_grad(pres[layer], posts[layer], kind)
        weight_grads[layer] = da.T @ inputs[layer]
        bias_grads[layer] = da.sum(axis=0)
        dh = da @ params.weights[layer]
    return Gradients(tuple(weight_grads), tuple(bias_grads))


def encode_batch(params: EncoderParams, batch: np.ndarray) -> np.ndarray:
    """Unit-norm embeddings for each row of `batch`, order preserved."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("encode_batch expects a 2-D array")
    if x.shape[0] == 0:
        return np.empty((0, params.config.embed_dim))
    z, _ = forward_cached(params, x)
    return z


def encode(params: EncoderParams, features: np.ndarray) -> np.ndarray:
    """Embedding of a single feature vector."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("encode expects a 1-D feature vector")
    return encode_batch(params, x[None, :])[0]


def snapshot_teacher(params: EncoderParams) -> EncoderParams:
    """Deep frozen copy; later student updates cannot touch it."""
    return EncoderParams(
        params.config,
        tuple(w.copy() for w in params.weights),
        tuple(b.copy() for b in params.biases),
    )


def gradients(params: EncoderParams, batch: np.ndarray, objective) -> tuple[float, Gradients]:
    """Loss and exact parameter gradients of an embedding-space objective.

    `objective` maps the (n, d) embedding matrix to (loss, dLoss/dEmbeddings).
    """
    z, cache = forward_cached(params, batch)
    loss, dz = objective(z)
    if not math.isfinite(loss):
        raise NumericalError(f"objective produced non-finite loss {loss!r}")
    return float(loss), backward(params, cache, dz)


def finite_difference_gradients(loss_fn, params: EncoderParams,
                                step: float = 1e-5) -> Gradients:
    """Central-difference gradients of loss_fn(params) per parameter entry.

    Independent of the reverse-mode path; used as the gradient oracle.
    """
    arrays = [a.copy() for a in params.arrays()]
    grads = [np.zeros_like(a) for a in arrays]
    for k, a in enumerate(arrays):
        flat = a.reshape(-1)
        grad = grads[k].reshape(-1)
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            up = loss_fn(params.replace_arrays([x.copy() for x in arrays]))
            flat[idx] = orig - step
            down = loss_fn(params.replace_arrays([x.copy() for x in arrays]))
            flat[idx] = orig
            grad[idx] = (up - down) / (2.0 * step)
    return Gradients(
        tuple(grads[:len(params.weights)]),
        tuple(grads[len(params.weights):]),
    )


def save_params(params: EncoderParams, path) -> None:
    """Checkpoint to JSON; float64 round-trips bit-exactly via repr."""
    doc = {
        "input_dim": params.config.input_dim,
        "hidden_dims": list(params.config.hidden_dims),
        "embed_dim": params.config.embed_dim,
        "activation": params.config.activation,
        "seed": params.config.seed,
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_params(path) -> EncoderParams:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    config = EncoderConfig(
        input_dim=doc["input_dim"],
        hidden_dims=tuple(doc["hidden_dims"]),
        embed_dim=doc["embed_dim"],
        activation=doc["activation"],
        seed=doc["seed"],
    )
    weights = tuple(np.array(w, dtype=np.float64) for w in doc["weights"])
    biases = tuple(np.array(b, dtype=np.float64) for b in doc["biases"])
    return EncoderParams(config, weights, biases)
