"""Binary lesion masks and the exact geometric primitives built on them.

A :class:`BinaryMask` wraps a read-only ``(height, width)`` boolean array.
All operations are pure: they never mutate their inputs and always return
new masks, so masks can be shared freely between worker threads.

Mask files are 8-bit single-channel PNGs, 0 for background and 255 for
foreground. On load any value >= 128 counts as foreground.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError, DimMismatch, MissingFile, UnsupportedBitDepth

PathLike = Union[str, "os.PathLike[str]"]

FOREGROUND_VALUE = 255
LOAD_THRESHOLD = 128

# PIL modes that are single-channel but not 8-bit.
_WRONG_DEPTH_MODES = {"1", "I", "F", "I;16", "I;16B", "I;16L", "I;16N"}


@dataclass(frozen=True)
class Dims:
    width: int
    height: int

    def __post_init__(self):
        if int(self.width) <= 0 or int(self.height) <= 0:
            raise ValueError(f"dims must be positive, got {self.width}x{self.height}")

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def shape(self) -> tuple[int, int]:
        """numpy shape ``(rows, cols)``."""
        return (self.height, self.width)

    @classmethod
    def square(cls, side: int) -> "Dims":
        return cls(side, side)

    @classmethod
    def parse(cls, text: str) -> "Dims":
        """Parse ``"1024x1024"`` or a bare ``"1024"`` (square)."""
        parts = text.lower().replace("×", "x").split("x")
        try:
            if len(parts) == 1:
                return cls.square(int(parts[0]))
            if len(parts) == 2:
                return cls(int(parts[0]), int(parts[1]))
        except ValueError:
            pass
        raise ValueError(f"cannot parse dims from {text!r}")

    def __str__(self) -> str:
        return f"{self.width}x{self.height}"


class Rotation(IntEnum):
    """Counterclockwise rotation in degrees."""

    R0 = 0
    R90 = 90
    R180 = 180
    R270 = 270

    def inverse(self) -> "Rotation":
        return Rotation((360 - self.value) % 360)


class FlipAxis(str, Enum):
    HORIZONTAL = "horizontal"  # mirror left-right
    VERTICAL = "vertical"  # mirror top-bottom


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Foreground/background raster; ``bits[y, x]`` is True on lesion pixels."""

    bits: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.bits)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise ValueError("mask dims must be positive")
        if arr.dtype != np.bool_:
            arr = arr != 0
        # Own a private read-only copy so callers cannot mutate us afterwards.
        arr = np.array(arr, dtype=np.bool_, copy=True, order="C")
        arr.setflags(write=False)
        object.__setattr__(self, "bits", arr)

    @classmethod
    def empty(cls, dims: Dims) -> "BinaryMask":
        return cls(np.zeros(dims.shape, dtype=np.bool_))

    @classmethod
    def full(cls, dims: Dims) -> "BinaryMask":
        return cls(np.ones(dims.shape, dtype=np.bool_))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def dims(self) -> Dims:
        return Dims(self.width, self.height)

    def is_empty(self) -> bool:
        return not self.bits.any()

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"BinaryMask({self.width}x{self.height}, fg={pixel_count(self)})"


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

def load_mask(path: PathLike) -> BinaryMask:
    """Read an 8-bit grayscale PNG; values >= 128 become foreground."""
    if not os.path.isfile(path):
        raise MissingFile(f"mask file not found: {path}")
    try:
        with Image.open(path) as img:
            mode = img.mode
            if mode in _WRONG_DEPTH_MODES:
                raise UnsupportedBitDepth(f"{path}: mode {mode!r} is not 8-bit")
            if mode != "L":
                raise DecodeError(f"{path}: expected single-channel 8-bit image, got mode {mode!r}")
            data = np.asarray(img, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise DecodeError(f"{path}: {exc}") from exc
    return BinaryMask(data >= LOAD_THRESHOLD)


def save_mask(mask: BinaryMask, path: PathLike) -> None:
    data = mask.bits.astype(np.uint8) * FOREGROUND_VALUE
    Image.fromarray(data).save(path, format="PNG")


# ---------------------------------------------------------------------------
# Geometry. The *_array helpers work on any (H, W, ...) raster so the
# augmentation module can push colour images through the same code path.
# ---------------------------------------------------------------------------

def rotate_array_ccw(arr: np.ndarray, r: Rotation | int) -> np.ndarray:
    # np.rot90 on (row, col) axes is counterclockwise: (x, y) -> (y, W-1-x).
    k = Rotation(r).value // 90
    return np.ascontiguousarray(np.rot90(arr, k=k, axes=(0, 1)))


def flip_array(arr: np.ndarray, axis: FlipAxis | str) -> np.ndarray:
    axis = FlipAxis(axis)
    if axis is FlipAxis.HORIZONTAL:
        return np.ascontiguousarray(arr[:, ::-1, ...])
    return np.ascontiguousarray(arr[::-1, ...])


def nearest_indices(src: int, dst: int) -> np.ndarray:
    """Pixel-centre nearest-neighbour source index for each destination index.

    ``floor((i + 0.5) * src / dst)``, evaluated in integers.
    """
    i = np.arange(dst, dtype=np.int64)
    return ((2 * i + 1) * src) // (2 * dst)


def resize_array_nearest(arr: np.ndarray, target: Dims) -> np.ndarray:
    h, w = arr.shape[:2]
    if (w, h) == (target.width, target.height):
        return arr.copy()
    rows = nearest_indices(h, target.height)
    cols = nearest_indices(w, target.width)
    return np.ascontiguousarray(arr[rows[:, None], cols[None, :], ...])


def rotate_ccw(mask: BinaryMask, r: Rotation | int) -> BinaryMask:
    return BinaryMask(rotate_array_ccw(mask.bits, r))


def flip(mask: BinaryMask, axis: FlipAxis | str) -> BinaryMask:
    return BinaryMask(flip_array(mask.bits, axis))


def resize_nearest(mask: BinaryMask, target: Dims) -> BinaryMask:
    if mask.dims == target:
        return mask
    return BinaryMask(resize_array_nearest(mask.bits, target))


# ---------------------------------------------------------------------------
# Set algebra
# ---------------------------------------------------------------------------

def check_same_dims(a: BinaryMask, b: BinaryMask) -> None:
    if a.dims != b.dims:
        raise DimMismatch(f"mask dims differ: {a.dims} vs {b.dims}")


def union(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    check_same_dims(a, b)
    return BinaryMask(a.bits | b.bits)


def intersect(a: BinaryMask, b: BinaryMask) -> BinaryMask:
    check_same_dims(a, b)
    return BinaryMask(a.bits & b.bits)


def complement(mask: BinaryMask) -> BinaryMask:
    return BinaryMask(~mask.bits)


def is_subset(a: BinaryMask, b: BinaryMask) -> bool:
    """True when every foreground pixel of ``a`` is foreground in ``b``."""
    check_same_dims(a, b)
    return not bool((a.bits & ~b.bits).any())


def pixel_count(mask: BinaryMask) -> int:
    return int(np.count_nonzero(mask.bits))
