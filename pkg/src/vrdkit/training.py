"""Softmax cross-entropy training for the predicate modules.

Plain minibatch SGD with analytic gradients, kept deliberately free of
optimizer state so every update is auditable. Modules train separately
(each on its own loss) or jointly, where the loss is the cross-entropy
of the softmaxed element-wise product of the two modules' logits and
gradients flow to both layers through the product rule:
d loss / d lang_logit_i = grad_fused_i * vis_logit_i, and symmetrically.

Runs are bitwise deterministic given (seed, example order): the same
generator drives initialization and the per-epoch shuffle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Vocabulary
from .geometry import spatial_vector, union_box
from .models import LinearLayer, parameter_checksum, stable_softmax


@dataclass
class TrainConfig:
    """Hyperparameters for one training run.

    ``class_weights`` rescales each example's loss by its label's weight
    (an escape hatch for long-tail predicate distributions; off by
    default, which lets the softmax assign likelihood by frequency).
    """

    learning_rate: float = 0.01
    batch_size: int = 64
    epochs: int = 50
    seed: int = 0
    l2: float = 0.0
    fusion_space: str = "logit_product"
    class_weights: np.ndarray | None = None

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size <= 0:
            raise ValueError(f"batch_size must be positive, got {self.batch_size}")
        if self.epochs <= 0:
            raise ValueError(f"epochs must be positive, got {self.epochs}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")
        if self.fusion_space not in ("logit_product", "log_space_sum"):
            raise ValueError(f"unknown fusion space {self.fusion_space!r}")
        if self.class_weights is not None:
            self.class_weights = np.asarray(self.class_weights, dtype=np.float64)
            if np.any(self.class_weights < 0) or not np.all(
                    np.isfinite(self.class_weights)):
                raise ValueError("class_weights must be finite and nonnegative")


@dataclass
class TrainReport:
    """Per-epoch mean loss and accuracy, plus a parameter checksum that
    pins the final weights."""

    epoch_losses: list[float] = field(default_factory=list)
    epoch_accuracies: list[float] = field(default_factory=list)
    final_accuracy: float = 0.0
    checksum: str = ""


def xent_loss_grad(logits: np.ndarray, label_id: int) -> tuple[float, np.ndarray]:
    """Softmax cross-entropy loss and its gradient w.r.t. the logits.

    loss = -log softmax(logits)[label]; grad = softmax(logits) - onehot.
    Computed in shifted log space so saturated logits stay finite.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 1:
        raise ValueError(f"logits must be 1-D, got shape {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise ValueError("non-finite logits")
    if not 0 <= label_id < logits.shape[0]:
        raise ValueError(
            f"label {label_id} out of range for {logits.shape[0]} classes")
    shifted = logits - logits.max()
    log_norm = np.log(np.exp(shifted).sum())
    loss = float(log_norm - shifted[label_id])
    grad = stable_softmax(logits)
    grad[label_id] -= 1.0
    return loss, grad


def _as_matrix(vectors, what: str) -> np.ndarray:
    rows = [np.asarray(v, dtype=np.float64).ravel() for v in vectors]
    widths = {r.shape[0] for r in rows}
    if len(widths) > 1:
        raise ValueError(f"inconsistent {what} dimensions: {sorted(widths)}")
    x = np.vstack(rows)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"non-finite {what} values")
    return x


def _check_labels(labels: np.ndarray, num_classes: int) -> None:
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ValueError(
            f"labels must lie in [0, {num_classes}), got range "
            f"[{labels.min()}, {labels.max()}]")


def _example_weights(labels, config) -> np.ndarray | None:
    if config.class_weights is None:
        return None
    _check_labels(labels, len(config.class_weights))
    return config.class_weights[labels]


def _batches(n: int, batch_size: int, perm: np.ndarray):
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def _mean_loss_grad(logits, labels, weights):
    """Weighted-mean cross-entropy over a batch and the matching logit
    gradient, already normalized so parameter grads are plain matmuls."""
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    losses = log_norm - shifted[np.arange(n), labels]
    grad = stable_softmax(logits, axis=1)
    grad[np.arange(n), labels] -= 1.0
    if weights is None:
        return float(losses.mean()), grad / n
    total = weights.sum()
    if total <= 0:
        return 0.0, np.zeros_like(grad)
    return float((weights * losses).sum() / total), grad * (weights / total)[:, None]


def train_module(examples, num_classes: int, config: TrainConfig
                 ) -> tuple[LinearLayer, TrainReport]:
    """Train one module on (input vector, label) pairs with minibatch SGD.

    Shuffling is reseeded per run, so identical (config, examples) give
    identical parameters. The reported epoch loss is the mean over the
    epoch's batches as seen before each update.

    Returns:
        The trained layer and its TrainReport.
    """
    if not examples:
        raise ValueError("no training examples")
    x = _as_matrix([e[0] for e in examples], "input")
    labels = np.asarray([e[1] for e in examples], dtype=np.int64)
    _check_labels(labels, num_classes)
    weights = _example_weights(labels, config)

    rng = np.random.default_rng(config.seed)
    layer = LinearLayer.initialize(num_classes, x.shape[1], rng)
    report = TrainReport()
    n = x.shape[0]

    for _ in range(config.epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        weight_sum = 0.0
        for batch in _batches(n, config.batch_size, perm):
            xb, yb = x[batch], labels[batch]
            wb = None if weights is None else weights[batch]
            logits = layer.forward(xb)
            loss, grad = _mean_loss_grad(logits, yb, wb)
            grad_w = grad.T @ xb
            if config.l2:
                grad_w += config.l2 * layer.weights
            layer.weights -= config.learning_rate * grad_w
            layer.bias -= config.learning_rate * grad.sum(axis=0)
            batch_weight = len(batch) if wb is None else float(wb.sum())
            loss_sum += loss * batch_weight
            weight_sum += batch_weight
        report.epoch_losses.append(loss_sum / weight_sum if weight_sum else 0.0)
        predictions = layer.forward(x).argmax(axis=1)
        report.epoch_accuracies.append(float((predictions == labels).mean()))

    report.final_accuracy = report.epoch_accuracies[-1]
    report.checksum = parameter_checksum(layer)
    return layer, report


def train_joint(examples, num_classes: int, config: TrainConfig
                ) -> tuple[LinearLayer, LinearLayer, TrainReport]:
    """Jointly train language and visual layers through the fused loss.

    ``examples`` are (language input, visual input, label) triples. Under
    "logit_product" fusion the loss is the cross-entropy of
    softmax(lang_logits * vis_logits); under "log_space_sum" the product
    becomes a sum. Both layers receive SGD updates each batch and start
    from the seeded uniform initialization.
    """
    return _train_joint_impl(examples, num_classes, config, init=None)


def train_joint_from(examples, num_classes: int, config: TrainConfig,
                     language: LinearLayer, visual: LinearLayer
                     ) -> tuple[LinearLayer, LinearLayer, TrainReport]:
    """Joint training warm-started from separately trained layers."""
    return _train_joint_impl(examples, num_classes, config, init=(language, visual))


def _train_joint_impl(examples, num_classes, config, init):
    if not examples:
        raise ValueError("no training examples")
    xl = _as_matrix([e[0] for e in examples], "language input")
    xv = _as_matrix([e[1] for e in examples], "visual input")
    labels = np.asarray([e[2] for e in examples], dtype=np.int64)
    _check_labels(labels, num_classes)
    weights = _example_weights(labels, config)

    rng = np.random.default_rng(config.seed)
    if init is None:
        lang = LinearLayer.initialize(num_classes, xl.shape[1], rng)
        vis = LinearLayer.initialize(num_classes, xv.shape[1], rng)
    else:
        lang = LinearLayer(init[0].weights.copy(), init[0].bias.copy())
        vis = LinearLayer(init[1].weights.copy(), init[1].bias.copy())
        if lang.in_dim != xl.shape[1] or vis.in_dim != xv.shape[1]:
            raise ValueError("warm-start layer dims do not match the examples")
    product = config.fusion_space == "logit_product"
    report = TrainReport()
    n = xl.shape[0]

    for _ in range(config.epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        weight_sum = 0.0
        for batch in _batches(n, config.batch_size, perm):
            xlb, xvb, yb = xl[batch], xv[batch], labels[batch]
            wb = None if weights is None else weights[batch]
            zl = lang.forward(xlb)
            zv = vis.forward(xvb)
            fused = zl * zv if product else zl + zv
            loss, grad = _mean_loss_grad(fused, yb, wb)
            grad_zl = grad * zv if product else grad
            grad_zv = grad * zl if product else grad
            grad_wl = grad_zl.T @ xlb
            grad_wv = grad_zv.T @ xvb
            if config.l2:
                grad_wl += config.l2 * lang.weights
                grad_wv += config.l2 * vis.weights
            lang.weights -= config.learning_rate * grad_wl
            lang.bias -= config.learning_rate * grad_zl.sum(axis=0)
            vis.weights -= config.learning_rate * grad_wv
            vis.bias -= config.learning_rate * grad_zv.sum(axis=0)
            batch_weight = len(batch) if wb is None else float(wb.sum())
            loss_sum += loss * batch_weight
            weight_sum += batch_weight
        report.epoch_losses.append(loss_sum / weight_sum if weight_sum else 0.0)
        fused_all = (lang.forward(xl) * vis.forward(xv) if product
                     else lang.forward(xl) + vis.forward(xv))
        report.epoch_accuracies.append(
            float((fused_all.argmax(axis=1) == labels).mean()))

    report.final_accuracy = report.epoch_accuracies[-1]
    report.checksum = parameter_checksum(lang, vis)
    return lang, vis, report


def build_language_example(store, vocabulary: Vocabulary, triple, dims,
                           with_spatial: bool) -> np.ndarray:
    """Language-module input for one ground-truth triple."""
    pair = store.pair_vector(
        vocabulary.object_name(triple.subject.category_id),
        vocabulary.object_name(triple.object.category_id))
    if not with_spatial:
        return pair
    sv = spatial_vector(triple.subject.box, triple.object.box, dims)
    return np.concatenate([pair, sv.to_array()])


def build_visual_example(provider, store, vocabulary: Vocabulary, triple,
                         dims, image_id: str, with_word: bool,
                         with_spatial: bool) -> np.ndarray:
    """Visual-module input for one ground-truth triple."""
    union = union_box(triple.subject.box, triple.object.box)
    parts = [provider.get(image_id, union)]
    if with_word:
        parts.append(store.pair_vector(
            vocabulary.object_name(triple.subject.category_id),
            vocabulary.object_name(triple.object.category_id)))
    if with_spatial:
        sv = spatial_vector(triple.subject.box, triple.object.box, dims)
        parts.append(sv.to_array())
    return np.concatenate(parts)


def build_training_set(corpus, vocabulary: Vocabulary, config_model,
                       store=None, provider=None) -> list:
    """Assemble per-triple training examples for a model variant.

    Single-module variants yield (input, label) pairs; combined variants
    yield (language input, visual input, label) triples for
    :func:`train_joint`.
    """
    cfg = config_model
    if cfg.needs_embeddings and store is None:
        raise ValueError(f"{cfg.variant} needs a word-embedding store")
    if cfg.needs_features and provider is None:
        raise ValueError(f"{cfg.variant} needs a feature provider")
    examples = []
    for rec in corpus:
        for triple in rec.ground_truth:
            label = triple.predicate_id
            lang_x = vis_x = None
            if cfg.has_language:
                lang_x = build_language_example(
                    store, vocabulary, triple, rec.dims, cfg.language_spatial)
            if cfg.has_visual:
                vis_x = build_visual_example(
                    provider, store, vocabulary, triple, rec.dims, rec.image_id,
                    cfg.visual_word, cfg.visual_spatial)
            if cfg.fusion == "product":
                examples.append((lang_x, vis_x, label))
            elif cfg.fusion == "language_only":
                examples.append((lang_x, label))
            else:
                examples.append((vis_x, label))
    return examples
