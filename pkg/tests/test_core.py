"""Container validation and label-map normalization."""
import numpy as np
import pytest

from instance_embed import (
    BinaryMask,
    DimensionMismatch,
    EmbeddingField,
    Grid2D,
    LabelMap,
    ProbMap,
    relabel_contiguous,
    validate_pair,
)


class TestEmbeddingField:
    def test_accepts_float_3d(self):
        f = EmbeddingField(np.zeros((4, 5, 3)))
        assert f.height == 4 and f.width == 5 and f.dim == 3
        assert not f.normalized

    def test_rejects_2d(self):
        with pytest.raises(ValueError):
            EmbeddingField(np.zeros((4, 5)))

    def test_rejects_nonfinite(self):
        v = np.zeros((2, 2, 2))
        v[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            EmbeddingField(v)
        v[0, 0, 0] = np.inf
        with pytest.raises(ValueError):
            EmbeddingField(v)

    def test_values_frozen(self):
        f = EmbeddingField(np.zeros((2, 2, 2)))
        with pytest.raises(ValueError):
            f.values[0, 0, 0] = 1.0

    def test_copy_on_construct(self):
        src = np.zeros((2, 2, 2))
        f = EmbeddingField(src)
        src[0, 0, 0] = 7.0
        assert f.values[0, 0, 0] == 0.0


class TestLabelMap:
    def test_counts_distinct_nonzero(self):
        m = LabelMap(np.array([[0, 1], [3, 3]]))
        assert m.num_instances == 2

    def test_gap_ids_allowed_but_not_contiguous(self):
        m = LabelMap(np.array([[0, 1], [3, 3]]))
        assert not m.is_contiguous()

    def test_contiguous(self):
        m = LabelMap(np.array([[0, 1], [2, 2]]))
        assert m.is_contiguous()

    def test_all_background_contiguous(self):
        m = LabelMap(np.zeros((3, 3), dtype=np.int64))
        assert m.num_instances == 0
        assert m.is_contiguous()

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            LabelMap(np.array([[0, -1]]))

    def test_rejects_float(self):
        with pytest.raises(ValueError):
            LabelMap(np.array([[0.0, 1.0]]))


class TestRelabelContiguous:
    def test_closes_gaps_in_order(self):
        m = LabelMap(np.array([[0, 5], [2, 9]]))
        out = relabel_contiguous(m)
        assert out.is_contiguous()
        # ascending original IDs keep their relative order
        assert out.values[1, 0] == 1  # id 2 -> 1
        assert out.values[0, 1] == 2  # id 5 -> 2
        assert out.values[1, 1] == 3  # id 9 -> 3

    def test_identity_when_contiguous(self):
        m = LabelMap(np.array([[0, 1], [2, 2]]))
        assert relabel_contiguous(m) is m

    def test_background_preserved(self):
        m = LabelMap(np.array([[0, 7]]))
        out = relabel_contiguous(m)
        assert out.values[0, 0] == 0 and out.values[0, 1] == 1


class TestMasks:
    def test_binary_mask_accepts_01(self):
        m = BinaryMask(np.array([[0, 1], [1, 0]], dtype=np.uint8))
        assert m.count() == 2

    def test_binary_mask_rejects_other_values(self):
        with pytest.raises(ValueError):
            BinaryMask(np.array([[0, 2]], dtype=np.uint8))

    def test_prob_map_bounds(self):
        ProbMap(np.array([[0.0, 0.5], [1.0, 0.25]]))
        with pytest.raises(ValueError):
            ProbMap(np.array([[-0.1, 0.5]]))
        with pytest.raises(ValueError):
            ProbMap(np.array([[1.1, 0.5]]))

    def test_grid2d_shape(self):
        g = Grid2D(np.zeros((3, 4)))
        assert g.height == 3 and g.width == 4
        with pytest.raises(ValueError):
            Grid2D(np.zeros((3, 4, 5)))


class TestValidatePair:
    def test_matching_ok(self):
        a = BinaryMask(np.zeros((3, 4), dtype=np.uint8))
        b = LabelMap(np.zeros((3, 4), dtype=np.int64))
        validate_pair(a, b)

    def test_mismatch_raises_with_both_shapes(self):
        a = BinaryMask(np.zeros((3, 4), dtype=np.uint8))
        b = BinaryMask(np.zeros((4, 3), dtype=np.uint8))
        with pytest.raises(DimensionMismatch) as err:
            validate_pair(a, b)
        assert err.value.shape_a == (3, 4)
        assert err.value.shape_b == (4, 3)
        assert "(3, 4)" in str(err.value) and "(4, 3)" in str(err.value)
