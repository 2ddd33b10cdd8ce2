"""Predicate classifiers and their fusion.

Both modules are a single fully connected layer over a concatenated
input vector. The language module reads [subject word vector, object
word vector] (optionally + spatial vector); the visual module reads
[union-box feature, word pair?, spatial?], in that fixed order. When
both modules are active their logit vectors are combined element-wise
and softmaxed into predicate probabilities.

Model variants are named by their inputs: L, LS, V, VW, SV, SVW on
their own, and "language+visual" combinations like LS+SV.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .geometry import SPATIAL_DIM, SpatialVector

LANGUAGE_VARIANTS = ("L", "LS")
VISUAL_VARIANTS = ("V", "VW", "SV", "SVW")
ALL_VARIANTS = LANGUAGE_VARIANTS + VISUAL_VARIANTS + tuple(
    f"{lang}+{vis}" for lang in LANGUAGE_VARIANTS for vis in VISUAL_VARIANTS
)

FUSION_SPACES = ("logit_product", "log_space_sum")

CHECKPOINT_MAGIC = b"VRDKIT-CHECKPOINT v1\n"


@dataclass
class LinearLayer:
    """One fully connected layer: logits = weights @ x + bias.

    weights is (classes, input dim), bias is (classes,).
    """

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match "
                f"{self.weights.shape[0]} output classes")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("non-finite layer parameters")

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Affine map for a single input (Q,) or a batch (N, Q)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ValueError(
                f"input dim {x.shape[-1]} does not match layer dim {self.in_dim}")
        return x @ self.weights.T + self.bias

    @classmethod
    def initialize(cls, out_dim: int, in_dim: int,
                   rng: np.random.Generator) -> "LinearLayer":
        """Seeded uniform init in [-1/sqrt(in_dim), 1/sqrt(in_dim)]."""
        if out_dim <= 0 or in_dim <= 0:
            raise ValueError(f"layer dims must be positive, got {out_dim}x{in_dim}")
        bound = 1.0 / np.sqrt(in_dim)
        return cls(
            weights=rng.uniform(-bound, bound, (out_dim, in_dim)),
            bias=rng.uniform(-bound, bound, out_dim),
        )


def parameter_checksum(*layers: LinearLayer) -> str:
    """SHA-256 over the layers' shapes and row-major parameter bytes."""
    h = hashlib.sha256()
    for layer in layers:
        for arr in (layer.weights, layer.bias):
            h.update(str(arr.shape).encode())
            h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return h.hexdigest()


@dataclass(frozen=True, eq=False)
class PredicateScores:
    """A per-predicate score vector, either raw logits or probabilities.

    Probabilities must be nonnegative and sum to 1 within 1e-9.
    """

    values: np.ndarray
    kind: str  # "logits" | "probabilities"

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 1:
            raise ValueError(f"scores must be 1-D, got shape {self.values.shape}")
        if self.kind not in ("logits", "probabilities"):
            raise ValueError(f"unknown score kind {self.kind!r}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite scores")
        if self.kind == "probabilities":
            if np.any(self.values < 0):
                raise ValueError("negative probability")
            total = float(self.values.sum())
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"probabilities sum to {total}, not 1")

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class ModelConfig:
    """Which inputs feed which module, and how module outputs combine.

    ``variant`` is the canonical name; the boolean fields are derived
    from it by :meth:`from_name`. ``fusion`` is "language_only",
    "visual_only", or "product". ``fusion_space`` selects how combined
    logits are mixed: "logit_product" multiplies the two logit vectors
    element-wise before the softmax, "log_space_sum" adds them
    (equivalent to multiplying the two softmax distributions).
    """

    variant: str
    has_language: bool
    language_spatial: bool
    has_visual: bool
    visual_word: bool
    visual_spatial: bool
    fusion: str
    fusion_space: str = "logit_product"

    def __post_init__(self):
        if self.fusion_space not in FUSION_SPACES:
            raise ValueError(f"unknown fusion space {self.fusion_space!r}")
        if self.fusion not in ("language_only", "visual_only", "product"):
            raise ValueError(f"unknown fusion mode {self.fusion!r}")

    @classmethod
    def from_name(cls, name: str, fusion_space: str = "logit_product") -> "ModelConfig":
        """Parse a variant name like "LS", "SVW" or "L+SV"."""
        parts = [p.strip() for p in name.split("+")]
        lang = None
        vis = None
        for part in parts:
            if part in LANGUAGE_VARIANTS and lang is None:
                lang = part
            elif part in VISUAL_VARIANTS and vis is None:
                vis = part
            else:
                raise ValueError(
                    f"unknown model variant {name!r}; expected one of "
                    f"{', '.join(ALL_VARIANTS)}")
        if lang is None and vis is None:
            raise ValueError(f"unknown model variant {name!r}")
        canonical = "+".join(p for p in (lang, vis) if p is not None)
        if lang and vis:
            fusion = "product"
        elif lang:
            fusion = "language_only"
        else:
            fusion = "visual_only"
        return cls(
            variant=canonical,
            has_language=lang is not None,
            language_spatial=lang == "LS",
            has_visual=vis is not None,
            visual_word=vis in ("VW", "SVW"),
            visual_spatial=vis in ("SV", "SVW"),
            fusion=fusion,
            fusion_space=fusion_space,
        )

    def language_input_dim(self, word_dim: int) -> int:
        if not self.has_language:
            raise ValueError(f"{self.variant} has no language module")
        return 2 * word_dim + (SPATIAL_DIM if self.language_spatial else 0)

    def visual_input_dim(self, feature_dim: int, word_dim: int = 0) -> int:
        if not self.has_visual:
            raise ValueError(f"{self.variant} has no visual module")
        dim = feature_dim
        if self.visual_word:
            if word_dim <= 0:
                raise ValueError(f"{self.variant} needs word_dim for its visual module")
            dim += 2 * word_dim
        if self.visual_spatial:
            dim += SPATIAL_DIM
        return dim

    @property
    def needs_embeddings(self) -> bool:
        return self.has_language or self.visual_word

    @property
    def needs_features(self) -> bool:
        return self.has_visual

    @property
    def needs_spatial(self) -> bool:
        return self.language_spatial or self.visual_spatial


def _as_spatial_array(spatial) -> np.ndarray:
    arr = spatial.to_array() if isinstance(spatial, SpatialVector) else np.asarray(
        spatial, dtype=np.float64)
    if arr.shape != (SPATIAL_DIM,):
        raise ValueError(f"spatial vector must have {SPATIAL_DIM} components")
    return arr


def language_forward(layer: LinearLayer, pair: np.ndarray,
                     spatial=None) -> PredicateScores:
    """Language-module logits over a word pair (optionally + spatial)."""
    pair = np.asarray(pair, dtype=np.float64)
    x = pair if spatial is None else np.concatenate([pair, _as_spatial_array(spatial)])
    return PredicateScores(layer.forward(x), "logits")


def visual_forward(layer: LinearLayer, feature: np.ndarray,
                   word_pair=None, spatial=None) -> PredicateScores:
    """Visual-module logits over [feature, word pair?, spatial?].

    The concatenation order is fixed; reordering would silently break
    trained checkpoints, so it is part of the layer contract.
    """
    parts = [np.asarray(feature, dtype=np.float64)]
    if word_pair is not None:
        parts.append(np.asarray(word_pair, dtype=np.float64))
    if spatial is not None:
        parts.append(_as_spatial_array(spatial))
    return PredicateScores(layer.forward(np.concatenate(parts)), "logits")


def stable_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-subtracted softmax; safe for large-magnitude logits."""
    x = np.asarray(x, dtype=np.float64)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def softmax(scores: PredicateScores) -> PredicateScores:
    """Normalize logits into a probability vector."""
    if scores.kind != "logits":
        raise ValueError(f"softmax expects logits, got {scores.kind}")
    return PredicateScores(stable_softmax(scores.values), "probabilities")


def fuse(lang: PredicateScores, vis: PredicateScores,
         fusion_space: str = "logit_product") -> PredicateScores:
    """Combine language and visual logits into predicate probabilities.

    "logit_product" multiplies the logit vectors element-wise and
    softmaxes the product; "log_space_sum" adds them instead.
    """
    if lang.kind != "logits" or vis.kind != "logits":
        raise ValueError("fuse expects logits from both modules")
    if len(lang) != len(vis):
        raise ValueError(f"logit lengths differ: {len(lang)} vs {len(vis)}")
    if fusion_space == "logit_product":
        combined = lang.values * vis.values
    elif fusion_space == "log_space_sum":
        combined = lang.values + vis.values
    else:
        raise ValueError(f"unknown fusion space {fusion_space!r}")
    return PredicateScores(stable_softmax(combined), "probabilities")


def predict_topk(probs: PredicateScores, k: int) -> list[tuple[int, float]]:
    """The k most probable predicates, descending; ties break by
    ascending predicate id so rankings are deterministic."""
    if probs.kind != "probabilities":
        raise ValueError(f"predict_topk expects probabilities, got {probs.kind}")
    n = len(probs)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    values = probs.values
    order = sorted(range(n), key=lambda i: (-values[i], i))
    return [(i, float(values[i])) for i in order[:k]]


@dataclass
class PredicateModel:
    """A configured variant: config plus whichever layers it uses."""

    config: ModelConfig
    language: LinearLayer | None = None
    visual: LinearLayer | None = None

    def __post_init__(self):
        if self.config.has_language and self.language is None:
            raise ValueError(f"{self.config.variant} requires a language layer")
        if self.config.has_visual and self.visual is None:
            raise ValueError(f"{self.config.variant} requires a visual layer")
        if not self.config.has_language and self.language is not None:
            raise ValueError(f"{self.config.variant} does not use a language layer")
        if not self.config.has_visual and self.visual is not None:
            raise ValueError(f"{self.config.variant} does not use a visual layer")

    @property
    def num_predicates(self) -> int:
        layer = self.language if self.language is not None else self.visual
        return layer.out_dim

    def predicate_probabilities(self, pair=None, spatial=None,
                                feature=None) -> PredicateScores:
        """Full forward pass for one candidate pair.

        Supply only the inputs the variant uses: ``pair`` when any
        module reads word vectors, ``spatial`` when any module reads the
        spatial encoding, ``feature`` for the visual module.
        """
        cfg = self.config
        lang_scores = None
        vis_scores = None
        if cfg.has_language:
            if pair is None:
                raise ValueError(f"{cfg.variant} needs a word-pair vector")
            if cfg.language_spatial and spatial is None:
                raise ValueError(f"{cfg.variant} needs a spatial vector")
            lang_scores = language_forward(
                self.language, pair, spatial if cfg.language_spatial else None)
        if cfg.has_visual:
            if feature is None:
                raise ValueError(f"{cfg.variant} needs a union-box feature")
            if cfg.visual_word and pair is None:
                raise ValueError(f"{cfg.variant} needs a word-pair vector")
            if cfg.visual_spatial and spatial is None:
                raise ValueError(f"{cfg.variant} needs a spatial vector")
            vis_scores = visual_forward(
                self.visual, feature,
                pair if cfg.visual_word else None,
                spatial if cfg.visual_spatial else None)
        if cfg.fusion == "product":
            return fuse(lang_scores, vis_scores, cfg.fusion_space)
        if cfg.fusion == "language_only":
            return softmax(lang_scores)
        return softmax(vis_scores)


def save_checkpoint(path, model: PredicateModel, *, word_dim: int | None = None,
                    feature_dim: int | None = None, seed: int | None = None,
                    extra: dict | None = None) -> dict:
    """Write a deterministic binary checkpoint plus a JSON sidecar.

    Layout: a magic line, one compact-JSON header line (config, dims,
    seed, array manifest), then the declared arrays as row-major
    float64 little-endian bytes. The sidecar at ``path + ".json"``
    repeats the header for auditing without a binary reader.
    """
    arrays: list[tuple[str, np.ndarray]] = []
    if model.language is not None:
        arrays.append(("language.weights", model.language.weights))
        arrays.append(("language.bias", model.language.bias))
    if model.visual is not None:
        arrays.append(("visual.weights", model.visual.weights))
        arrays.append(("visual.bias", model.visual.bias))
    meta = {
        "format_version": 1,
        "variant": model.config.variant,
        "fusion_space": model.config.fusion_space,
        "num_predicates": model.num_predicates,
        "word_dim": word_dim,
        "feature_dim": feature_dim,
        "seed": seed,
        "checksum": parameter_checksum(
            *(layer for layer in (model.language, model.visual) if layer is not None)),
        "arrays": [{"name": n, "shape": list(a.shape)} for n, a in arrays],
    }
    if extra:
        meta["extra"] = extra
    header = json.dumps(meta, sort_keys=True)
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(header.encode("utf-8"))
        f.write(b"\n")
        for _, arr in arrays:
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    with open(f"{path}.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    return meta


def load_checkpoint(path) -> tuple[PredicateModel, dict]:
    """Read a checkpoint written by :func:`save_checkpoint`."""
    with open(path, "rb") as f:
        magic = f.readline()
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        try:
            meta = json.loads(f.readline().decode("utf-8"))
        except json.JSONDecodeError as e:
            raise ValueError(f"{path}: corrupt checkpoint header: {e}") from None
        if meta.get("format_version") != 1:
            raise ValueError(
                f"{path}: unsupported checkpoint version {meta.get('format_version')!r}")
        loaded: dict[str, np.ndarray] = {}
        for spec in meta["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            buf = f.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"{path}: truncated array {spec['name']!r}")
            loaded[spec["name"]] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
        if f.read(1):
            raise ValueError(f"{path}: trailing bytes after declared arrays")
    config = ModelConfig.from_name(meta["variant"], meta.get("fusion_space", "logit_product"))
    language = visual = None
    if config.has_language:
        language = LinearLayer(loaded["language.weights"], loaded["language.bias"])
    if config.has_visual:
        visual = LinearLayer(loaded["visual.weights"], loaded["visual.bias"])
    model = PredicateModel(config, language=language, visual=visual)
    expected = meta.get("checksum")
    if expected is not None:
        actual = parameter_checksum(
            *(layer for layer in (language, visual) if layer is not None))
        if actual != expected:
            raise ValueError(f"{path}: parameter checksum mismatch")
    return model, meta
