"""Classifiers over exemplar embeddings.

The primary classifier is a balanced random forest: every tree trains on a
bootstrap where each class is drawn (with replacement) down to the minority
bootstrap size, countering majority-class bias. Trees are CART with Gini
impurity, random feature subsets of size mtry per node, and no pruning. A
single softmax layer trained by cross-entropy is provided as the ablation
baseline. All tie-breaks resolve to the lowest class id so runs reproduce
exactly.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .optim import AdamState, adam_step
from .rng import derive_rng


@dataclass(eq=False)
class TreeNode:
    """Internal split (x[feature] <= threshold goes left) or leaf prediction."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    class_id: int = -1

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass(frozen=True, eq=False)
class BalancedForest:
    trees: tuple[TreeNode, ...]
    mtry: int
    seed: int
    dim: int

    def __post_init__(self):
        if len(self.trees) < 1:
            raise ValueError("forest needs at least one tree")
        if not 1 <= self.mtry <= self.dim:
            raise ValueError(f"mtry must be in [1, {self.dim}]")


def balanced_bootstrap(features: np.ndarray, labels: np.ndarray,
                       rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per-class bootstrap of minority size: every class is drawn, with
    replacement, exactly n_min times, so class counts come out equal."""
    y = np.asarray(labels, dtype=np.int64)
    x = np.asarray(features, dtype=np.float64)
    classes = np.unique(y)
    if classes.size < 2:
        raise ValueError("balanced bootstrap needs at least 2 classes")
    n_min = min(int(np.sum(y == c)) for c in classes)
    rows = []
    for c in classes:
        idx = np.flatnonzero(y == c)
        rows.append(idx[rng.integers(0, idx.size, size=n_min)])
    take = np.concatenate(rows)
    return x[take], y[take]


def _gini(counts: np.ndarray, total: int) -> float:
    p = counts / total
    return 1.0 - float(np.sum(p * p))


def _leaf(labels: np.ndarray) -> TreeNode:
    counts = np.bincount(labels)
    return TreeNode(class_id=int(np.argmax(counts)))


def cart_grow(features: np.ndarray, labels: np.ndarray, mtry: int,
              rng: np.random.Generator, min_leaf: int = 1) -> TreeNode:
    """Grow a CART tree to purity (no pruning).

    Each node examines an mtry-sized random feature subset; candidate
    thresholds are midpoints between consecutive distinct values. The best
    candidate by weighted Gini impurity is taken even at zero gain (an XOR
    pattern needs a zero-gain root split to reach purity); splitting stops
    when the node is pure, smaller than 2*min_leaf, or no candidate split
    exists. Leaves predict their majority class, ties to the lowest class id.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    n, dim = x.shape
    if n == 0:
        raise ValueError("cannot grow a tree on empty rows")
    if not 1 <= mtry <= dim:
        raise ValueError(f"mtry must be in [1, {dim}]")
    if min_leaf < 1:
        raise ValueError("min_leaf must be positive")

    def grow(idx: np.ndarray) -> TreeNode:
        sub_y = y[idx]
        if idx.size < 2 * min_leaf or np.all(sub_y == sub_y[0]):
            return _leaf(sub_y)
        counts = np.bincount(sub_y)
        feats = np.sort(rng.choice(dim, size=mtry, replace=False))
        best = (np.inf, -1, 0.0)  # (weighted child impurity, feature, threshold)
        for f in feats:
            col = x[idx, f]
            order = np.argsort(col, kind="stable")
            vals = col[order]
            distinct = np.flatnonzero(vals[:-1] != vals[1:])
            if distinct.size == 0:
                continue
            sorted_y = sub_y[order]
            onehot = np.zeros((idx.size, counts.size))
            onehot[np.arange(idx.size), sorted_y] = 1.0
            cum = np.cumsum(onehot, axis=0)
            for cut in distinct:
                n_left = cut + 1
                n_right = idx.size - n_left
                if n_left < min_leaf or n_right < min_leaf:
                    continue
                left_counts = cum[cut]
                right_counts = cum[-1] - left_counts
                weighted = (n_left * _gini(left_counts, n_left)
                            + n_right * _gini(right_counts, n_right)) / idx.size
                if weighted < best[0]:
                    best = (weighted, int(f), float((vals[cut] + vals[cut + 1]) / 2.0))
        if best[1] < 0:
            return _leaf(sub_y)
        _, feature, threshold = best
        mask = x[idx, feature] <= threshold
        return TreeNode(feature=feature, threshold=threshold,
                        left=grow(idx[mask]), right=grow(idx[~mask]))

    return grow(np.arange(n))


def _tree_predict(node: TreeNode, row: np.ndarray) -> int:
    while not node.is_leaf:
        node = node.left if row[node.feature] <= node.threshold else node.right
    return node.class_id


def brf_fit(features: np.ndarray, labels: np.ndarray, n_trees: int = 100,
            mtry: int | None = None, seed: int = 0, min_leaf: int = 1) -> BalancedForest:
    """Fit a balanced random forest; each tree has its own derived RNG stream."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if np.unique(y).size < 2:
        raise ValueError("balanced random forest needs at least 2 classes")
    dim = x.shape[1]
    if mtry is None:
        mtry = math.ceil(math.sqrt(dim))
    trees = []
    for i in range(n_trees):
        rng = derive_rng(seed, i)
        bx, by = balanced_bootstrap(x, y, rng)
        trees.append(cart_grow(bx, by, mtry, rng, min_leaf))
    return BalancedForest(tuple(trees), mtry, seed, dim)


def brf_predict(forest: BalancedForest, embedding: np.ndarray) -> int:
    """Majority vote over the trees; vote ties go to the lowest class id."""
    row = np.asarray(embedding, dtype=np.float64)
    if row.shape != (forest.dim,):
        raise ValueError(f"embedding must have dimension {forest.dim}")
    votes = np.array([_tree_predict(t, row) for t in forest.trees])
    return int(np.argmax(np.bincount(votes)))


def brf_predict_batch(forest: BalancedForest, embeddings: np.ndarray) -> np.ndarray:
    x = np.asarray(embeddings, dtype=np.float64)
    if x.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    return np.array([brf_predict(forest, row) for row in x], dtype=np.int64)


def _node_to_doc(node: TreeNode) -> dict:
    if node.is_leaf:
        return {"class_id": node.class_id}
    return {"feature": node.feature, "threshold": node.threshold,
            "left": _node_to_doc(node.left), "right": _node_to_doc(node.right)}


def _node_from_doc(doc: dict) -> TreeNode:
    if "class_id" in doc:
        return TreeNode(class_id=doc["class_id"])
    return TreeNode(feature=doc["feature"], threshold=doc["threshold"],
                    left=_node_from_doc(doc["left"]), right=_node_from_doc(doc["right"]))


def forest_to_json(forest: BalancedForest) -> str:
    return json.dumps({
        "mtry": forest.mtry,
        "seed": forest.seed,
        "dim": forest.dim,
        "trees": [_node_to_doc(t) for t in forest.trees],
    })


def forest_from_json(text: str) -> BalancedForest:
    doc = json.loads(text)
    return BalancedForest(tuple(_node_from_doc(t) for t in doc["trees"]),
                          doc["mtry"], doc["seed"], doc["dim"])


@dataclass(eq=False)
class FCClassifier:
    """Single affine layer + softmax over a frozen embedding space.

    `classes` maps output rows to class ids (ascending); the layer width
    grows as later sessions introduce more classes.
    """

    weights: np.ndarray
    bias: np.ndarray
    classes: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise ValueError("weights must be (classes, d) with matching bias")
        if not self.classes:
            self.classes = tuple(range(self.weights.shape[0]))
        if len(self.classes) != self.weights.shape[0]:
            raise ValueError("classes must align with output rows")


def fcc_probabilities(model: FCClassifier, embeddings: np.ndarray) -> np.ndarray:
    logits = np.asarray(embeddings, dtype=np.float64) @ model.weights.T + model.bias
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def fcc_fit(features: np.ndarray, labels: np.ndarray, classes: tuple[int, ...],
            epochs: int = 500, lr: float = 0.001, seed: int = 0,
            batch_size: int = 512) -> FCClassifier:
    """Train the softmax layer with cross-entropy and Adam, from zero init."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("cannot fit a classifier on empty rows")
    classes = tuple(sorted(classes))
    class_row = {c: i for i, c in enumerate(classes)}
    try:
        targets = np.array([class_row[int(c)] for c in y])
    except KeyError as exc:
        raise ValueError(f"label {exc.args[0]} not in declared classes") from None

    model = FCClassifier(np.zeros((len(classes), x.shape[1])), np.zeros(len(classes)),
                         classes)
    state = AdamState.init([model.weights, model.bias])
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        order = rng.permutation(x.shape[0])
        for start in range(0, x.shape[0], batch_size):
            take = order[start:start + batch_size]
            bx, by = x[take], targets[take]
            probs = fcc_probabilities(model, bx)
            grad_logits = probs
            grad_logits[np.arange(by.size), by] -= 1.0
            grad_logits /= by.size
            grads = [grad_logits.T @ bx, grad_logits.sum(axis=0)]
            (w, b), state = adam_step([model.weights, model.bias], grads, state, lr)
            model = FCClassifier(w, b, classes)
    return model


def fcc_predict(model: FCClassifier, embedding: np.ndarray) -> int:
    """Argmax class; logit ties resolve to the lowest class id."""
    logits = np.asarray(embedding, dtype=np.float64) @ model.weights.T + model.bias
    return int(model.classes[int(np.argmax(logits))])


def fcc_predict_batch(model: FCClassifier, embeddings: np.ndarray) -> np.ndarray:
    x = np.asarray(embeddings, dtype=np.float64)
    if x.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    logits = x @ model.weights.T + model.bias
    rows = np.argmax(logits, axis=1)
    return np.array([model.classes[i] for i in rows], dtype=np.int64)
