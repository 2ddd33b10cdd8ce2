import numpy as np
import pytest

from vrdkit.geometry import (
    SF_DIM,
    BoundingBox,
    ImageDims,
    contains,
    iou,
    sf_vector,
    spatial_vector,
    union_box,
)

from conftest import box, random_box


class TestBoundingBox:
    def test_rejects_negative_extent(self):
        with pytest.raises(ValueError):
            BoundingBox(5, 0, 4, 10)
        with pytest.raises(ValueError):
            BoundingBox(0, 5, 10, 4)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            BoundingBox(0, 0, float("inf"), 10)
        with pytest.raises(ValueError):
            BoundingBox(float("nan"), 0, 1, 1)

    def test_zero_area_box_is_legal(self):
        b = BoundingBox(3, 3, 3, 3)
        assert b.area == 0
        assert b.center == (3, 3)

    def test_derived_quantities(self):
        b = box(1, 2, 5, 10)
        assert b.width == 4
        assert b.height == 8
        assert b.area == 32
        assert b.center == (3, 6)


class TestImageDims:
    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            ImageDims(0, 10)
        with pytest.raises(ValueError):
            ImageDims(10, -1)


class TestIou:
    def test_identical_boxes(self):
        a = box(0, 0, 10, 10)
        assert iou(a, a) == 1.0

    def test_disjoint_boxes(self):
        assert iou(box(0, 0, 10, 10), box(20, 20, 30, 30)) == 0.0

    def test_partial_overlap(self):
        # intersection 5x5 = 25, union 100 + 100 - 25 = 175
        assert iou(box(0, 0, 10, 10), box(5, 5, 15, 15)) == pytest.approx(25 / 175)

    def test_degenerate_boxes(self):
        point = box(5, 5, 5, 5)
        assert iou(point, point) == 0.0
        assert iou(point, box(0, 0, 10, 10)) == 0.0

    def test_touching_edges_do_not_overlap(self):
        assert iou(box(0, 0, 10, 10), box(10, 0, 20, 10)) == 0.0

    def test_symmetry(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            a = random_box(rng, 100, 80)
            b = random_box(rng, 100, 80)
            assert iou(a, b) == iou(b, a)

    def test_bounds(self):
        # iou can never exceed either box's share of the enclosing union box
        rng = np.random.default_rng(8)
        for _ in range(300):
            a = random_box(rng, 50, 50)
            b = random_box(rng, 50, 50)
            u = union_box(a, b)
            if u.area == 0:
                continue
            v = iou(a, b)
            assert 0.0 <= v <= min(1.0, a.area / u.area) + 1e-12


class TestUnionBox:
    def test_identity(self):
        a = box(0, 0, 10, 10)
        assert union_box(a, a) == a

    def test_disjoint(self):
        assert union_box(box(0, 0, 2, 2), box(4, 4, 6, 6)) == box(0, 0, 6, 6)

    def test_containment(self):
        assert union_box(box(0, 0, 10, 10), box(5, 5, 8, 8)) == box(0, 0, 10, 10)


class TestContains:
    def test_box_contains_itself(self):
        a = box(0, 0, 10, 10)
        assert contains(a, a)

    def test_proper_containment(self):
        assert contains(box(0, 0, 10, 10), box(2, 2, 5, 5))
        assert not contains(box(2, 2, 5, 5), box(0, 0, 10, 10))

    def test_overlap_is_not_containment(self):
        assert not contains(box(0, 0, 10, 10), box(5, 5, 15, 15))

    def test_mutual_containment_implies_equality(self):
        rng = np.random.default_rng(9)
        for _ in range(300):
            a = random_box(rng, 20, 20)
            b = random_box(rng, 20, 20)
            if contains(a, b) and contains(b, a):
                assert a == b


class TestSpatialVector:
    def test_coincident_boxes(self):
        v = spatial_vector(box(0, 0, 10, 10), box(0, 0, 10, 10), ImageDims(20, 20))
        assert v.to_array() == pytest.approx([1.0, 0.0, 0.0, 0.25, 0.25, 1.0, 1.0])

    def test_side_by_side(self):
        v = spatial_vector(box(0, 0, 10, 10), box(10, 0, 20, 10), ImageDims(20, 10))
        assert v.to_array() == pytest.approx([0.0, 0.5, 0.0, 0.5, 0.5, 0.0, 0.0])

    def test_array_order_matches_fields(self):
        v = spatial_vector(box(0, 0, 4, 4), box(1, 1, 3, 3), ImageDims(10, 10))
        arr = v.to_array()
        assert arr.shape == (7,)
        assert arr[0] == v.iou
        assert arr[1] == v.dx
        assert arr[2] == v.dy
        assert arr[3] == v.s_subj
        assert arr[4] == v.s_obj
        assert arr[5] == v.cflag_subj
        assert arr[6] == v.cflag_obj

    def test_scale_invariance(self):
        rng = np.random.default_rng(10)
        for _ in range(200):
            w, h = rng.uniform(10, 200, 2)
            subj = random_box(rng, w, h)
            obj = random_box(rng, w, h)
            base = spatial_vector(subj, obj, ImageDims(w, h)).to_array()
            for c in (2.0, 10.0, 0.5):
                scaled = spatial_vector(
                    BoundingBox(*(c * v for v in subj.as_tuple())),
                    BoundingBox(*(c * v for v in obj.as_tuple())),
                    ImageDims(c * w, c * h),
                ).to_array()
                np.testing.assert_allclose(scaled, base, rtol=0, atol=1e-12)

    def test_swap_subject_object(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            subj = random_box(rng, 60, 40)
            obj = random_box(rng, 60, 40)
            dims = ImageDims(60, 40)
            v = spatial_vector(subj, obj, dims)
            w = spatial_vector(obj, subj, dims)
            assert w.iou == v.iou
            assert w.dx == -v.dx and w.dy == -v.dy
            assert (w.s_subj, w.s_obj) == (v.s_obj, v.s_subj)
            assert (w.cflag_subj, w.cflag_obj) == (v.cflag_obj, v.cflag_subj)

    def test_containment_ties_iou_to_area_ratio(self):
        # subject containing object means intersection = object area,
        # union = subject area
        rng = np.random.default_rng(12)
        for _ in range(100):
            subj = random_box(rng, 100, 100)
            if subj.area == 0:
                continue
            inner = BoundingBox(
                subj.x_min + 0.25 * subj.width,
                subj.y_min + 0.25 * subj.height,
                subj.x_max - 0.25 * subj.width,
                subj.y_max - 0.25 * subj.height,
            )
            v = spatial_vector(subj, inner, ImageDims(100, 100))
            assert v.cflag_subj == 1.0
            assert v.iou == pytest.approx(inner.area / subj.area)

    def test_out_of_bounds_boxes_accepted(self):
        # detectors emit boxes past the frame; components may leave [0, 1]
        v = spatial_vector(box(-10, -10, 30, 30), box(0, 0, 10, 10), ImageDims(20, 20))
        assert v.s_subj == 4.0
        assert v.cflag_subj == 1.0


class TestSfVector:
    def test_full_image_boxes(self):
        full = box(0, 0, 20, 10)
        v = sf_vector(full, full, ImageDims(20, 10))
        np.testing.assert_allclose(v, [0, 0, 1, 1, 1, 0, 0, 1, 1, 1])

    def test_side_by_side(self):
        v = sf_vector(box(0, 0, 10, 10), box(10, 0, 20, 10), ImageDims(20, 10))
        np.testing.assert_allclose(
            v, [0.0, 0.0, 0.5, 1.0, 0.5, 0.5, 0.0, 1.0, 1.0, 0.5])

    def test_components_in_unit_interval_for_in_bounds_boxes(self):
        rng = np.random.default_rng(13)
        for _ in range(200):
            w, h = rng.uniform(5, 100, 2)
            v = sf_vector(random_box(rng, w, h), random_box(rng, w, h),
                          ImageDims(w, h))
            assert v.shape == (SF_DIM,)
            assert np.all(v >= 0) and np.all(v <= 1 + 1e-12)

    def test_scale_invariance(self):
        rng = np.random.default_rng(14)
        for _ in range(200):
            w, h = rng.uniform(10, 200, 2)
            subj = random_box(rng, w, h)
            obj = random_box(rng, w, h)
            base = sf_vector(subj, obj, ImageDims(w, h))
            for c in (2.0, 10.0, 0.5):
                scaled = sf_vector(
                    BoundingBox(*(c * v for v in subj.as_tuple())),
                    BoundingBox(*(c * v for v in obj.as_tuple())),
                    ImageDims(c * w, c * h),
                )
                np.testing.assert_allclose(scaled, base, rtol=0, atol=1e-12)
