"""Canonical data model and annotation tooling.

A corpus is a list of :class:`ImageRecord`, one per image, each holding
ground-truth objects, the relationship triples linking them, and
(optionally) detector outputs. The canonical on-disk form is JSONL, one
image per line:

    {"image_id": str, "width": num, "height": num,
     "objects": [{"category": str, "box": [x_min, y_min, x_max, y_max],
                  "confidence": float}, ...],
     "triples": [{"subj": objIdx, "pred": str, "obj": objIdx}, ...],
     "detections": [ ...same shape as objects... ]}

Category and predicate names resolve against a :class:`Vocabulary`
(two plain-text lists, one name per line; line order defines class ids).
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field

from .geometry import BoundingBox, ImageDims

# (subject category id, predicate id, object category id)
TripleKey = tuple[int, int, int]


class CorpusError(ValueError):
    """Malformed annotation input; message names the offending line/field."""


class Vocabulary:
    """Ordered object-category and predicate name lists; index = class id."""

    def __init__(self, object_categories, predicates):
        self.object_categories = tuple(object_categories)
        self.predicates = tuple(predicates)
        for kind, names in (("object category", self.object_categories),
                            ("predicate", self.predicates)):
            seen = set()
            for name in names:
                if name in seen:
                    raise CorpusError(f"duplicate {kind} name {name!r}")
                seen.add(name)
        self._object_ids = {n: i for i, n in enumerate(self.object_categories)}
        self._predicate_ids = {n: i for i, n in enumerate(self.predicates)}

    @property
    def num_objects(self) -> int:
        return len(self.object_categories)

    @property
    def num_predicates(self) -> int:
        return len(self.predicates)

    def object_id(self, name: str) -> int:
        try:
            return self._object_ids[name]
        except KeyError:
            raise CorpusError(f"unknown object category {name!r}") from None

    def predicate_id(self, name: str) -> int:
        try:
            return self._predicate_ids[name]
        except KeyError:
            raise CorpusError(f"unknown predicate {name!r}") from None

    def object_name(self, category_id: int) -> str:
        return self.object_categories[category_id]

    def predicate_name(self, predicate_id: int) -> str:
        return self.predicates[predicate_id]

    @classmethod
    def from_files(cls, objects_path, predicates_path) -> "Vocabulary":
        """Load from two text files, one name per line (blank lines skipped)."""
        def read_names(path):
            with open(path, encoding="utf-8") as f:
                return [line.strip() for line in f if line.strip()]
        return cls(read_names(objects_path), read_names(predicates_path))


@dataclass(frozen=True)
class ObjectInstance:
    """A localized object: category, box, and detector confidence
    (1.0 for ground truth)."""

    category_id: int
    box: BoundingBox
    confidence: float = 1.0

    def __post_init__(self):
        if self.category_id < 0:
            raise CorpusError(f"negative category id {self.category_id}")
        if not (0.0 <= self.confidence <= 1.0):
            raise CorpusError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class RelationshipTriple:
    """(subject, predicate, object) with both endpoints localized."""

    subject: ObjectInstance
    predicate_id: int
    object: ObjectInstance

    def __post_init__(self):
        if self.predicate_id < 0:
            raise CorpusError(f"negative predicate id {self.predicate_id}")

    @property
    def key(self) -> TripleKey:
        return (self.subject.category_id, self.predicate_id, self.object.category_id)


@dataclass
class ImageRecord:
    """One annotated image: ground-truth object pool, triples over it,
    and optional detections."""

    image_id: str
    dims: ImageDims
    objects: list[ObjectInstance] = field(default_factory=list)
    ground_truth: list[RelationshipTriple] = field(default_factory=list)
    detections: list[ObjectInstance] | None = None


def _require(condition, lineno, message):
    if not condition:
        raise CorpusError(f"line {lineno}: {message}")


def _parse_box(raw, lineno, where) -> BoundingBox:
    _require(isinstance(raw, (list, tuple)) and len(raw) == 4, lineno,
             f"{where}: box must be a list of 4 numbers, got {raw!r}")
    for v in raw:
        _require(isinstance(v, (int, float)) and not isinstance(v, bool)
                 and math.isfinite(v),
                 lineno, f"{where}: non-numeric or non-finite box value {v!r}")
    try:
        return BoundingBox(*raw)
    except ValueError as e:
        raise CorpusError(f"line {lineno}: {where}: {e}") from None


def _parse_instance(raw, lineno, where, vocabulary) -> ObjectInstance:
    _require(isinstance(raw, dict), lineno, f"{where}: expected an object entry")
    _require("category" in raw, lineno, f"{where}: missing 'category'")
    _require("box" in raw, lineno, f"{where}: missing 'box'")
    try:
        category_id = vocabulary.object_id(raw["category"])
    except CorpusError as e:
        raise CorpusError(f"line {lineno}: {where}: {e}") from None
    box = _parse_box(raw["box"], lineno, f"{where}.box")
    confidence = raw.get("confidence", 1.0)
    _require(isinstance(confidence, (int, float)) and not isinstance(confidence, bool),
             lineno, f"{where}: non-numeric confidence {confidence!r}")
    try:
        return ObjectInstance(category_id, box, float(confidence))
    except CorpusError as e:
        raise CorpusError(f"line {lineno}: {where}: {e}") from None


def parse_corpus(stream, vocabulary: Vocabulary) -> list[ImageRecord]:
    """Parse canonical JSONL annotations into ImageRecords.

    ``stream`` is any iterable of lines (an open text file works). Blank
    lines are skipped. Any malformed line raises :class:`CorpusError`
    naming the line number and field.
    """
    records = []
    seen_ids = set()
    for lineno, line in enumerate(stream, 1):
        line = line.strip()
        if not line:
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as e:
            raise CorpusError(f"line {lineno}: malformed JSON: {e}") from None
        _require(isinstance(raw, dict), lineno, "expected a JSON object")
        _require("image_id" in raw, lineno, "missing 'image_id'")
        image_id = raw["image_id"]
        _require(isinstance(image_id, str), lineno,
                 f"image_id must be a string, got {image_id!r}")
        _require(image_id not in seen_ids, lineno,
                 f"duplicate image_id {image_id!r}")
        seen_ids.add(image_id)

        for dim_key in ("width", "height"):
            _require(dim_key in raw, lineno, f"missing '{dim_key}'")
            v = raw[dim_key]
            _require(isinstance(v, (int, float)) and not isinstance(v, bool),
                     lineno, f"{dim_key} must be a number, got {v!r}")
        try:
            dims = ImageDims(raw["width"], raw["height"])
        except ValueError as e:
            raise CorpusError(f"line {lineno}: {e}") from None

        raw_objects = raw.get("objects", [])
        _require(isinstance(raw_objects, list), lineno, "'objects' must be a list")
        objects = [
            _parse_instance(o, lineno, f"objects[{i}]", vocabulary)
            for i, o in enumerate(raw_objects)
        ]

        raw_triples = raw.get("triples", [])
        _require(isinstance(raw_triples, list), lineno, "'triples' must be a list")
        triples = []
        for i, t in enumerate(raw_triples):
            where = f"triples[{i}]"
            _require(isinstance(t, dict), lineno, f"{where}: expected an object")
            for key in ("subj", "pred", "obj"):
                _require(key in t, lineno, f"{where}: missing '{key}'")
            si, oi = t["subj"], t["obj"]
            for label, idx in (("subj", si), ("obj", oi)):
                _require(isinstance(idx, int) and not isinstance(idx, bool)
                         and 0 <= idx < len(objects),
                         lineno, f"{where}.{label}: object index {idx!r} out of range")
            _require(si != oi, lineno,
                     f"{where}: subject and object are the same instance ({si})")
            try:
                predicate_id = vocabulary.predicate_id(t["pred"])
            except CorpusError as e:
                raise CorpusError(f"line {lineno}: {where}: {e}") from None
            triples.append(RelationshipTriple(objects[si], predicate_id, objects[oi]))

        detections = None
        if "detections" in raw and raw["detections"] is not None:
            _require(isinstance(raw["detections"], list), lineno,
                     "'detections' must be a list")
            detections = [
                _parse_instance(d, lineno, f"detections[{i}]", vocabulary)
                for i, d in enumerate(raw["detections"])
            ]

        records.append(ImageRecord(image_id, dims, objects, triples, detections))
    return records


def _instance_dict(inst: ObjectInstance, vocabulary: Vocabulary) -> dict:
    return {
        "category": vocabulary.object_name(inst.category_id),
        "box": list(inst.box.as_tuple()),
        "confidence": inst.confidence,
    }


def serialize_corpus(records, vocabulary: Vocabulary) -> list[str]:
    """Render ImageRecords back to canonical JSONL lines.

    Inverse of :func:`parse_corpus`: parse -> serialize -> parse is the
    identity. Triples are re-indexed against the record's object pool.
    """
    lines = []
    for rec in records:
        index_by_identity = {id(o): i for i, o in enumerate(rec.objects)}

        def object_index(inst):
            idx = index_by_identity.get(id(inst))
            if idx is not None:
                return idx
            try:
                return rec.objects.index(inst)
            except ValueError:
                raise CorpusError(
                    f"image {rec.image_id!r}: triple endpoint not in object pool"
                ) from None

        payload = {
            "image_id": rec.image_id,
            "width": rec.dims.width,
            "height": rec.dims.height,
            "objects": [_instance_dict(o, vocabulary) for o in rec.objects],
            "triples": [
                {
                    "subj": object_index(t.subject),
                    "pred": vocabulary.predicate_name(t.predicate_id),
                    "obj": object_index(t.object),
                }
                for t in rec.ground_truth
            ],
        }
        if rec.detections is not None:
            payload["detections"] = [
                _instance_dict(d, vocabulary) for d in rec.detections
            ]
        lines.append(json.dumps(payload))
    return lines


def candidate_pairs(objects) -> list[tuple[int, int]]:
    """All ordered index pairs (i, j), i != j, i ascending then j ascending."""
    n = len(objects)
    return [(i, j) for i in range(n) for j in range(n) if i != j]


def zero_shot_filter(train, test) -> list[ImageRecord]:
    """Restrict a test corpus to triples never seen in training.

    A triple is kept iff its (subject category, predicate, object
    category) key appears in no training record. Records left without
    triples are dropped; object pools and detections are preserved.
    """
    train_keys = {t.key for rec in train for t in rec.ground_truth}
    filtered = []
    for rec in test:
        kept = [t for t in rec.ground_truth if t.key not in train_keys]
        if kept:
            filtered.append(ImageRecord(
                rec.image_id, rec.dims, rec.objects, kept, rec.detections))
    return filtered


def triple_key_stats(corpus) -> tuple[Counter, Counter]:
    """Occurrence counts per TripleKey and per predicate id.

    Useful for auditing the long-tail predicate distribution of a corpus.
    """
    key_counts: Counter = Counter()
    predicate_counts: Counter = Counter()
    for rec in corpus:
        for t in rec.ground_truth:
            key_counts[t.key] += 1
            predicate_counts[t.predicate_id] += 1
    return key_counts, predicate_counts


def _resolve_category(raw, vocabulary, lookup, size, kind, image_id):
    if isinstance(raw, bool) or not isinstance(raw, (int, str)):
        raise CorpusError(f"image {image_id!r}: bad {kind} {raw!r}")
    if isinstance(raw, int):
        if not 0 <= raw < size:
            raise CorpusError(f"image {image_id!r}: {kind} id {raw} out of range")
        return raw
    try:
        return lookup(raw)
    except CorpusError as e:
        raise CorpusError(f"image {image_id!r}: {e}") from None


def parse_vrd_annotations(raw: dict, vocabulary: Vocabulary,
                          dims_by_image: dict) -> list[ImageRecord]:
    """Adapter for VRD-style annotations.

    ``raw`` maps image id -> list of triple entries, each
    ``{"predicate": name-or-id, "subject": {"category": name-or-id,
    "bbox": [y_min, y_max, x_min, x_max]}, "object": {...}}``. Boxes are
    converted to the canonical (x_min, y_min, x_max, y_max) order.
    Integer categories/predicates index the vocabulary lists directly.

    The native layout carries no image sizes, so ``dims_by_image`` must
    map every image id to (width, height).
    """
    records = []
    for image_id in raw:
        entries = raw[image_id]
        if not isinstance(entries, list):
            raise CorpusError(f"image {image_id!r}: expected a list of triples")
        if image_id not in dims_by_image:
            raise CorpusError(f"image {image_id!r}: missing image dimensions")
        try:
            dims = ImageDims(*dims_by_image[image_id])
        except (TypeError, ValueError) as e:
            raise CorpusError(f"image {image_id!r}: bad dimensions: {e}") from None

        objects: list[ObjectInstance] = []
        pool_index: dict[tuple, int] = {}

        def intern_instance(entry, role):
            if not isinstance(entry, dict) or "category" not in entry or "bbox" not in entry:
                raise CorpusError(
                    f"image {image_id!r}: {role} needs 'category' and 'bbox'")
            category_id = _resolve_category(
                entry["category"], vocabulary, vocabulary.object_id,
                vocabulary.num_objects, "object category", image_id)
            b = entry["bbox"]
            if not (isinstance(b, (list, tuple)) and len(b) == 4):
                raise CorpusError(f"image {image_id!r}: {role} bbox must have 4 values")
            # native order is (y_min, y_max, x_min, x_max)
            try:
                box = BoundingBox(b[2], b[0], b[3], b[1])
            except (TypeError, ValueError) as e:
                raise CorpusError(f"image {image_id!r}: {role} bbox: {e}") from None
            key = (category_id, box.as_tuple())
            if key not in pool_index:
                pool_index[key] = len(objects)
                objects.append(ObjectInstance(category_id, box))
            return pool_index[key]

        triples = []
        for entry in entries:
            if not isinstance(entry, dict):
                raise CorpusError(f"image {image_id!r}: expected triple objects")
            for key in ("predicate", "subject", "object"):
                if key not in entry:
                    raise CorpusError(f"image {image_id!r}: triple missing '{key}'")
            si = intern_instance(entry["subject"], "subject")
            oi = intern_instance(entry["object"], "object")
            if si == oi:
                raise CorpusError(
                    f"image {image_id!r}: subject and object are the same instance")
            predicate_id = _resolve_category(
                entry["predicate"], vocabulary, vocabulary.predicate_id,
                vocabulary.num_predicates, "predicate", image_id)
            triples.append(RelationshipTriple(objects[si], predicate_id, objects[oi]))

        records.append(ImageRecord(image_id, dims, objects, triples))
    return records
