import numpy as np
import pytest

from vrdkit.corpus import ImageRecord, ObjectInstance, RelationshipTriple, Vocabulary
from vrdkit.geometry import BoundingBox, ImageDims


@pytest.fixture
def vocab():
    return Vocabulary(
        ["person", "horse", "elephant", "shirt", "traffic light"],
        ["on", "ride", "above", "wear", "next to"],
    )


def box(x1, y1, x2, y2):
    return BoundingBox(x1, y1, x2, y2)


def random_box(rng: np.random.Generator, width: float, height: float) -> BoundingBox:
    x = np.sort(rng.uniform(0, width, 2))
    y = np.sort(rng.uniform(0, height, 2))
    return BoundingBox(x[0], y[0], x[1], y[1])


def make_record(image_id, dims, objects, triples, detections=None) -> ImageRecord:
    """Assemble an ImageRecord from (category_id, box[, confidence]) tuples
    and (subj_idx, predicate_id, obj_idx) triples."""
    pool = [ObjectInstance(*spec) for spec in objects]
    gt = [RelationshipTriple(pool[s], p, pool[o]) for s, p, o in triples]
    dets = None
    if detections is not None:
        dets = [ObjectInstance(*spec) for spec in detections]
    return ImageRecord(image_id, ImageDims(*dims), pool, gt, dets)
