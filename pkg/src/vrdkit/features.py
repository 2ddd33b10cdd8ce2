"""Visual-feature providers for union boxes.

The CNN that would normally embed a union crop runs out of process;
this module only resolves (image id, union box) keys to feature vectors.
Two providers exist: one backed by precomputed feature files, and a
seeded synthetic one that makes end-to-end runs testable without any
extracted features. Boxes are quantized to integer pixels so file keys
stay stable across float formatting.
"""

from __future__ import annotations

import hashlib
import json
from abc import ABC, abstractmethod

import numpy as np

from .geometry import BoundingBox

_SEED_MASK = (1 << 64) - 1


class FeatureFormatError(ValueError):
    """Malformed feature file; message names the offending record."""


def quantize_box(box: BoundingBox) -> tuple[int, int, int, int]:
    """Round box corners to the nearest integer pixel (feature-file key)."""
    return tuple(int(round(c)) for c in box.as_tuple())


class FeatureProvider(ABC):
    """Deterministic resolver from (image id, union box) to a vector.

    Providers are read-only after construction; the same key always
    yields the same values.
    """

    @property
    @abstractmethod
    def dimension(self) -> int: ...

    @abstractmethod
    def get(self, image_id: str, box: BoundingBox) -> np.ndarray: ...


class FileFeatureProvider(FeatureProvider):
    """Exact-key lookups over precomputed features loaded from a file."""

    def __init__(self, dimension: int, table: dict):
        self._dimension = dimension
        self._table = table

    @property
    def dimension(self) -> int:
        return self._dimension

    def get(self, image_id: str, box: BoundingBox) -> np.ndarray:
        key = (image_id, quantize_box(box))
        try:
            return self._table[key]
        except KeyError:
            raise KeyError(
                f"feature not found for image {image_id!r} box {key[1]}") from None

    def __len__(self) -> int:
        return len(self._table)

    @classmethod
    def from_jsonl(cls, stream) -> "FileFeatureProvider":
        """Load JSONL records {"image_id", "box": [4 ints], "feature": [...]}.

        Duplicate keys and inconsistent feature dimensions are load
        errors, named by line number.
        """
        table: dict = {}
        dimension = None
        for lineno, line in enumerate(stream, 1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as e:
                raise FeatureFormatError(f"line {lineno}: malformed JSON: {e}") from None
            try:
                image_id = raw["image_id"]
                box_vals = raw["box"]
                feature = raw["feature"]
            except (TypeError, KeyError) as e:
                raise FeatureFormatError(
                    f"line {lineno}: missing field {e}") from None
            if not (isinstance(box_vals, list) and len(box_vals) == 4):
                raise FeatureFormatError(
                    f"line {lineno}: box must be a list of 4 values")
            try:
                box = BoundingBox(*box_vals)
            except ValueError as e:
                raise FeatureFormatError(f"line {lineno}: {e}") from None
            vec = np.asarray(feature, dtype=np.float64)
            if vec.ndim != 1 or vec.size == 0 or not np.all(np.isfinite(vec)):
                raise FeatureFormatError(
                    f"line {lineno}: feature must be a non-empty finite vector")
            if dimension is None:
                dimension = vec.size
            elif vec.size != dimension:
                raise FeatureFormatError(
                    f"line {lineno}: feature dimension {vec.size} != {dimension}")
            key = (image_id, quantize_box(box))
            if key in table:
                raise FeatureFormatError(
                    f"line {lineno}: duplicate feature key {key}")
            vec.flags.writeable = False
            table[key] = vec
        if dimension is None:
            raise FeatureFormatError("feature file contains no records")
        return cls(dimension, table)

    @classmethod
    def from_npz(cls, path) -> "FileFeatureProvider":
        """Load the binary variant: arrays image_ids (N,), boxes (N, 4),
        features (N, F). Same semantics as the JSONL form."""
        data = np.load(path, allow_pickle=False)
        try:
            image_ids = data["image_ids"]
            boxes = data["boxes"]
            features = data["features"]
        except KeyError as e:
            raise FeatureFormatError(f"missing array {e} in {path}") from None
        if features.ndim != 2 or features.shape[1] == 0:
            raise FeatureFormatError("features must be a non-empty (N, F) array")
        if len(image_ids) != len(boxes) or len(boxes) != len(features):
            raise FeatureFormatError("image_ids, boxes, features lengths differ")
        table: dict = {}
        for i in range(len(image_ids)):
            box = BoundingBox(*(float(v) for v in boxes[i]))
            key = (str(image_ids[i]), quantize_box(box))
            if key in table:
                raise FeatureFormatError(f"record {i}: duplicate feature key {key}")
            vec = np.asarray(features[i], dtype=np.float64)
            if not np.all(np.isfinite(vec)):
                raise FeatureFormatError(f"record {i}: non-finite feature")
            vec.flags.writeable = False
            table[key] = vec
        return cls(features.shape[1], table)


def save_features_npz(path, records) -> None:
    """Write (image_id, BoundingBox, vector) records as the npz variant."""
    records = list(records)
    if not records:
        raise ValueError("no feature records to save")
    image_ids = np.array([r[0] for r in records])
    boxes = np.array([quantize_box(r[1]) for r in records], dtype=np.int64)
    features = np.array([np.asarray(r[2], dtype=np.float64) for r in records])
    np.savez(path, image_ids=image_ids, boxes=boxes, features=features)


class SyntheticFeatureProvider(FeatureProvider):
    """Seeded pseudo-random features in [-1, 1], stable across runs and
    platforms.

    Each key hashes to an independent RNG stream, so the vector for a
    key depends only on (seed, image id, quantized box).
    """

    def __init__(self, seed: int, dimension: int):
        if dimension <= 0:
            raise ValueError(f"feature dimension must be positive, got {dimension}")
        self._seed = int(seed) & _SEED_MASK
        self._dimension = dimension

    @property
    def dimension(self) -> int:
        return self._dimension

    def get(self, image_id: str, box: BoundingBox) -> np.ndarray:
        qx1, qy1, qx2, qy2 = quantize_box(box)
        key = f"{image_id}|{qx1},{qy1},{qx2},{qy2}".encode("utf-8")
        digest = hashlib.blake2b(key, digest_size=8).digest()
        key_int = int.from_bytes(digest, "little")
        rng = np.random.default_rng([self._seed, key_int])
        return rng.uniform(-1.0, 1.0, self._dimension)
