"""Grid-backed value types shared by every other module.

All types wrap dense row-major numpy arrays, validate on construction, and
are immutable afterwards (the backing arrays are marked read-only). Mutation
means building a new value.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch


def _freeze(values: np.ndarray, dtype) -> np.ndarray:
    """Copy to a contiguous array of the requested dtype and mark read-only."""
    arr = np.ascontiguousarray(values, dtype=dtype)
    if arr is values or arr.base is not None:
        arr = arr.copy()
    arr.setflags(write=False)
    return arr


def _check_plane(values: np.ndarray, what: str) -> None:
    if values.ndim < 2:
        raise ValueError(f"{what} needs a (height, width, ...) array, got ndim {values.ndim}")
    h, w = values.shape[:2]
    if h < 1 or w < 1:
        raise ValueError(f"{what} needs height >= 1 and width >= 1, got {h}x{w}")


@dataclass(frozen=True)
class Grid2D:
    """Dense row-major 2D grid of per-pixel scalar values."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 2:
            raise ValueError(f"Grid2D values must be 2-dimensional, got ndim {arr.ndim}")
        _check_plane(arr, "Grid2D")
        object.__setattr__(self, "values", _freeze(arr, arr.dtype))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class EmbeddingField:
    """H x W grid of D-dimensional real vectors.

    `normalized` records that every vector (or every foreground vector, when
    the field was normalized against a mask) has unit Euclidean norm.
    """

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 3:
            raise ValueError(f"EmbeddingField values must be (H, W, D), got ndim {arr.ndim}")
        _check_plane(arr, "EmbeddingField")
        if arr.shape[2] < 1:
            raise ValueError("embedding dimension must be >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("EmbeddingField values must be finite")
        object.__setattr__(self, "values", _freeze(arr, np.float64))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def dim(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class LabelMap:
    """H x W grid of non-negative integer instance IDs; 0 is background.

    Construction accepts any non-negative IDs. num_instances counts the
    distinct non-zero IDs actually present; use relabel_contiguous to force
    the canonical {1..C} numbering that the loss and metric operations expect.
    """

    values: np.ndarray
    num_instances: int = field(init=False)

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 2:
            raise ValueError(f"LabelMap values must be (H, W), got ndim {arr.ndim}")
        _check_plane(arr, "LabelMap")
        if not np.issubdtype(arr.dtype, np.integer):
            raise ValueError("LabelMap values must be integers")
        if arr.min() < 0:
            raise ValueError("LabelMap IDs must be non-negative")
        frozen = _freeze(arr, np.int64)
        object.__setattr__(self, "values", frozen)
        distinct = np.unique(frozen)
        object.__setattr__(self, "num_instances", int((distinct > 0).sum()))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def is_contiguous(self) -> bool:
        """True when the non-zero IDs are exactly {1..num_instances}."""
        ids = np.unique(self.values)
        ids = ids[ids > 0]
        return ids.size == 0 or (ids[0] == 1 and ids[-1] == ids.size)


@dataclass(frozen=True)
class ProbMap:
    """H x W grid of probabilities in [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"ProbMap values must be (H, W), got ndim {arr.ndim}")
        _check_plane(arr, "ProbMap")
        if not np.all(np.isfinite(arr)):
            raise ValueError("ProbMap values must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("ProbMap values must lie in [0, 1]")
        object.__setattr__(self, "values", _freeze(arr, np.float64))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class BinaryMask:
    """H x W grid of {0, 1}."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values)
        if arr.ndim != 2:
            raise ValueError(f"BinaryMask values must be (H, W), got ndim {arr.ndim}")
        _check_plane(arr, "BinaryMask")
        if not np.issubdtype(arr.dtype, np.integer) and arr.dtype != np.bool_:
            raise ValueError("BinaryMask values must be integers or booleans")
        arr = arr.astype(np.uint8)
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("BinaryMask values must be 0 or 1")
        object.__setattr__(self, "values", _freeze(arr, np.uint8))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def count(self) -> int:
        return int(self.values.sum())


def validate_pair(a, b) -> None:
    """Check that two grid-backed values share the same width and height.

    Raises DimensionMismatch reporting both (height, width) shapes.
    """
    shape_a = (a.height, a.width)
    shape_b = (b.height, b.width)
    if shape_a != shape_b:
        raise DimensionMismatch(shape_a, shape_b)


def relabel_contiguous(labels: LabelMap) -> LabelMap:
    """Remap non-zero IDs to {1..C} preserving order and pixel partition."""
    arr = labels.values
    ids = np.unique(arr)
    ids = ids[ids > 0]
    if ids.size == 0 or (ids[0] == 1 and ids[-1] == ids.size):
        return labels
    lut = np.zeros(int(ids[-1]) + 1, dtype=np.int64)
    lut[ids] = np.arange(1, ids.size + 1)
    return LabelMap(lut[arr])
