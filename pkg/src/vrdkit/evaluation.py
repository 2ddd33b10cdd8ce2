"""Recall@n evaluation for the three relationship tasks.

Predicate prediction scores ground-truth object pairs and only the
predicate must be recovered. Phrase detection runs on detector outputs
and requires the correct (subject category, predicate, object category)
plus a union-box IoU of at least 0.5 with the ground-truth union box.
Relationship detection instead requires both the subject and the object
box to clear the IoU threshold simultaneously.

Per image, every candidate pair contributes its top-k predicates, the
pooled predictions are ranked by score, truncated to the top n, and
matched one-to-one against ground truth greedily in score order. Recall
is total matches over total ground-truth triples across the corpus.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .corpus import ImageRecord, ObjectInstance, Vocabulary, candidate_pairs
from .geometry import iou, spatial_vector, union_box
from .models import PredicateModel, predict_topk

RANK_MODES = ("product", "pred_only")
TASKS = ("predicate", "phrase", "relationship")


@dataclass(frozen=True)
class PredictedRelationship:
    """One scored candidate: a localized pair plus a predicate."""

    subject: ObjectInstance
    predicate_id: int
    object: ObjectInstance
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError(f"non-finite prediction score {self.score!r}")


@dataclass(frozen=True)
class RecallReport:
    """Recall@n for one (task, n, k) cell.

    ``recall`` is matched / total_gt; a corpus whose filtered ground
    truth is empty reports total_gt = 0 and recall 0.0.
    """

    task: str
    n: int
    k: int
    recall: float
    matched: int
    total_gt: int
    zero_shot: bool = False

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "n": self.n,
            "k": self.k,
            "recall": self.recall,
            "matched": self.matched,
            "total_gt": self.total_gt,
            "zero_shot": self.zero_shot,
        }


def generate_predictions(model: PredicateModel, image: ImageRecord,
                         vocabulary: Vocabulary, k: int, *, mode: str = "gt_pairs",
                         store=None, provider=None,
                         rank: str = "product") -> list[PredictedRelationship]:
    """Score every ordered candidate pair and keep k predicates per pair.

    ``mode`` selects the candidate source: "gt_pairs" pairs the
    ground-truth objects (predicate-prediction protocol), "detections"
    pairs detector outputs. Scores are the fused predicate probability,
    multiplied by both endpoint confidences when ``rank`` is "product"
    (ground-truth confidences are 1.0, so the modes agree in gt_pairs).
    """
    if rank not in RANK_MODES:
        raise ValueError(f"unknown rank mode {rank!r}")
    if mode == "gt_pairs":
        objects = image.objects
    elif mode == "detections":
        if image.detections is None:
            raise ValueError(f"image {image.image_id!r} has no detections")
        objects = image.detections
    else:
        raise ValueError(f"unknown candidate mode {mode!r}")

    cfg = model.config
    if cfg.needs_embeddings and store is None:
        raise ValueError(f"{cfg.variant} needs a word-embedding store")
    if cfg.needs_features and provider is None:
        raise ValueError(f"{cfg.variant} needs a feature provider")

    predictions = []
    for si, oi in candidate_pairs(objects):
        subj, obj = objects[si], objects[oi]
        pair = None
        if cfg.needs_embeddings:
            pair = store.pair_vector(
                vocabulary.object_name(subj.category_id),
                vocabulary.object_name(obj.category_id))
        spatial = None
        if cfg.needs_spatial:
            spatial = spatial_vector(subj.box, obj.box, image.dims)
        feature = None
        if cfg.needs_features:
            feature = provider.get(image.image_id, union_box(subj.box, obj.box))
        probs = model.predicate_probabilities(pair=pair, spatial=spatial,
                                              feature=feature)
        for predicate_id, p in predict_topk(probs, k):
            score = p if rank == "pred_only" else p * subj.confidence * obj.confidence
            predictions.append(
                PredictedRelationship(subj, predicate_id, obj, score))
    return predictions


def _retain_top(predictions, n: int) -> list[PredictedRelationship]:
    """Rank by score descending, ties by predicate id then generation
    order, and truncate to the per-image budget."""
    ranked = sorted(predictions, key=lambda p: (-p.score, p.predicate_id))
    return ranked[:n]


def match_predicate_prediction(predictions, ground_truth, n: int) -> int:
    """Greedy one-to-one matching for the predicate-prediction task.

    A retained prediction consumes the first unmatched ground-truth
    triple with the same subject instance, predicate, and object
    instance. Instances compare by value (category, box, confidence),
    which in gt_pairs mode means the identical pool entry.
    """
    matched = [False] * len(ground_truth)
    count = 0
    for pred in _retain_top(predictions, n):
        for gi, gt in enumerate(ground_truth):
            if (not matched[gi]
                    and pred.predicate_id == gt.predicate_id
                    and pred.subject == gt.subject
                    and pred.object == gt.object):
                matched[gi] = True
                count += 1
                break
    return count


def match_phrase(predictions, ground_truth, n: int,
                 iou_threshold: float = 0.5) -> int:
    """Greedy matching for phrase detection.

    A prediction matches a ground-truth triple when the category/
    predicate labels agree and the IoU between the two union boxes
    reaches the threshold. Each prediction takes the highest-overlap
    unmatched triple (ties to the earlier triple).
    """
    matched = [False] * len(ground_truth)
    count = 0
    for pred in _retain_top(predictions, n):
        pred_union = union_box(pred.subject.box, pred.object.box)
        best, best_overlap = -1, -1.0
        for gi, gt in enumerate(ground_truth):
            if matched[gi]:
                continue
            if (pred.subject.category_id != gt.subject.category_id
                    or pred.predicate_id != gt.predicate_id
                    or pred.object.category_id != gt.object.category_id):
                continue
            overlap = iou(pred_union, union_box(gt.subject.box, gt.object.box))
            if overlap >= iou_threshold and overlap > best_overlap:
                best, best_overlap = gi, overlap
        if best >= 0:
            matched[best] = True
            count += 1
    return count


def match_relationship(predictions, ground_truth, n: int,
                       iou_threshold: float = 0.5) -> int:
    """Greedy matching for relationship detection.

    Like phrase detection, but the subject and object boxes must each
    clear the IoU threshold against their ground-truth counterparts at
    the same time; candidates rank by the smaller of the two overlaps.
    """
    matched = [False] * len(ground_truth)
    count = 0
    for pred in _retain_top(predictions, n):
        best, best_overlap = -1, -1.0
        for gi, gt in enumerate(ground_truth):
            if matched[gi]:
                continue
            if (pred.subject.category_id != gt.subject.category_id
                    or pred.predicate_id != gt.predicate_id
                    or pred.object.category_id != gt.object.category_id):
                continue
            overlap = min(iou(pred.subject.box, gt.subject.box),
                          iou(pred.object.box, gt.object.box))
            if overlap >= iou_threshold and overlap > best_overlap:
                best, best_overlap = gi, overlap
        if best >= 0:
            matched[best] = True
            count += 1
    return count


_MATCHERS = {
    "predicate": match_predicate_prediction,
    "phrase": match_phrase,
    "relationship": match_relationship,
}


def _task_mode(task: str) -> str:
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
    return "gt_pairs" if task == "predicate" else "detections"


def _filtered_gt(record, zero_shot_keys):
    if zero_shot_keys is None:
        return record.ground_truth
    return [t for t in record.ground_truth if t.key not in zero_shot_keys]


def recall_at_n(corpus, model: PredicateModel, vocabulary: Vocabulary,
                task: str, n: int, k: int, *, store=None, provider=None,
                zero_shot_keys=None, rank: str = "product",
                iou_threshold: float = 0.5) -> RecallReport:
    """Recall@n over a corpus for one task and one (n, k) setting.

    ``zero_shot_keys`` is the set of TripleKeys seen in training; when
    given, ground truth is restricted to triples outside that set and
    the report is flagged zero-shot.
    """
    reports = evaluate_grid(corpus, model, vocabulary, task, [n], [k],
                            store=store, provider=provider,
                            zero_shot_keys=zero_shot_keys, rank=rank,
                            iou_threshold=iou_threshold)
    return reports[0]


def evaluate_grid(corpus, model: PredicateModel, vocabulary: Vocabulary,
                  task: str, ns, ks, *, store=None, provider=None,
                  zero_shot_keys=None, rank: str = "product",
                  iou_threshold: float = 0.5, threads: int = 1
                  ) -> list[RecallReport]:
    """Recall@n for every (n, k) combination, sharing per-image work.

    Predictions are generated once per (image, k); matching then runs
    per n. Images are independent, so ``threads`` > 1 maps them onto a
    thread pool; counts reduce in corpus order either way, keeping
    results identical to the sequential run.
    """
    mode = _task_mode(task)
    ns = sorted(set(int(n) for n in ns))
    ks = sorted(set(int(k) for k in ks))
    if any(n <= 0 for n in ns):
        raise ValueError(f"n values must be positive, got {ns}")
    matcher = _MATCHERS[task]
    zero_shot = zero_shot_keys is not None

    def score_image(record):
        gt = _filtered_gt(record, zero_shot_keys)
        if not gt:
            return {}, 0
        matched = {}
        for k in ks:
            predictions = generate_predictions(
                model, record, vocabulary, k, mode=mode,
                store=store, provider=provider, rank=rank)
            for n in ns:
                if task == "predicate":
                    matched[(n, k)] = matcher(predictions, gt, n)
                else:
                    matched[(n, k)] = matcher(predictions, gt, n, iou_threshold)
        return matched, len(gt)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(score_image, corpus))
    else:
        results = [score_image(record) for record in corpus]

    total_gt = sum(count for _, count in results)
    reports = []
    for k in ks:
        for n in ns:
            matched = sum(cell.get((n, k), 0) for cell, _ in results)
            recall = matched / total_gt if total_gt else 0.0
            reports.append(RecallReport(task, n, k, recall, matched, total_gt,
                                        zero_shot=zero_shot))
    return reports


def reports_to_json(named_reports) -> str:
    """Serialize (variant name, reports) pairs for the report command."""
    payload = [
        {"variant": name, "reports": [r.to_dict() for r in reports]}
        for name, reports in named_reports
    ]
    return json.dumps(payload, indent=2) + "\n"


def reports_from_json(text: str):
    """Inverse of :func:`reports_to_json`."""
    named = []
    for entry in json.loads(text):
        reports = [RecallReport(**r) for r in entry["reports"]]
        named.append((entry["variant"], reports))
    return named


def reports_to_csv(named_reports) -> str:
    """Flat CSV export: one row per (variant, task, n, k) cell."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["variant", "task", "n", "k", "zero_shot",
                     "recall", "matched", "total_gt"])
    for name, reports in named_reports:
        for r in reports:
            writer.writerow([name, r.task, r.n, r.k, int(r.zero_shot),
                             f"{r.recall:.6f}", r.matched, r.total_gt])
    return buf.getvalue()


def format_recall_table(named_reports) -> str:
    """Aligned text tables, one per task: variants down, (n, k) across.

    Columns order general results before zero-shot ones, then ascending
    k and ascending n; cells show recall as a percentage.
    """
    by_task: dict[str, dict[str, dict]] = {}
    for name, reports in named_reports:
        for r in reports:
            by_task.setdefault(r.task, {}).setdefault(name, {})[
                (r.zero_shot, r.k, r.n)] = r.recall
    sections = []
    for task in sorted(by_task, key=lambda t: TASKS.index(t) if t in TASKS else 99):
        rows = by_task[task]
        columns = sorted({key for cells in rows.values() for key in cells})
        headers = [
            f"R@{n} k={k}" + (" zs" if zs else "")
            for zs, k, n in columns
        ]
        name_width = max(len("model"), *(len(name) for name in rows))
        widths = [max(len(h), 8) for h in headers]
        lines = [f"task: {task}"]
        header_cells = " | ".join(h.rjust(w) for h, w in zip(headers, widths))
        lines.append(f"{'model'.ljust(name_width)} | {header_cells}")
        lines.append("-" * len(lines[-1]))
        for name in rows:
            cells = []
            for col, w in zip(columns, widths):
                value = rows[name].get(col)
                cells.append(("-" if value is None else f"{100 * value:.2f}").rjust(w))
            lines.append(f"{name.ljust(name_width)} | {' | '.join(cells)}")
        sections.append("\n".join(lines))
    return "\n\n".join(sections) + "\n"
