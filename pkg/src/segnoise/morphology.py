"""Binary 2-D morphology on {0,1} mask frames.

All operations use the fixed 3x3 all-ones structuring element
(8-connectivity) with a zero-padded border. Iterated application runs
k passes of the radius-1 element, which is equivalent to a single pass
with a Chebyshev ball of radius k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Fixed 3x3 all-ones footprint, origin at the center.
STRUCTURING_ELEMENT = np.ones((3, 3), dtype=np.uint8)
STRUCTURING_ELEMENT.setflags(write=False)


def as_mask_frame(frame) -> np.ndarray:
    """Validate a 2-D {0,1} frame and return it as uint8."""
    arr = np.asarray(frame)
    if arr.ndim != 2:
        raise ValueError(f"mask frame must be 2-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("mask frame must be non-empty")
    if not ((arr == 0) | (arr == 1)).all():
        raise ValueError("mask frame values must be exactly 0 or 1")
    return arr.astype(np.uint8, copy=False)


def _shift_reduce(mask: np.ndarray, op) -> np.ndarray:
    # One radius-1 pass: reduce the 9 shifted copies of the zero-padded
    # frame with `op` (logical_or -> dilation, logical_and -> erosion).
    h, w = mask.shape
    padded = np.pad(mask, 1, constant_values=False)
    out = padded[1 : 1 + h, 1 : 1 + w].copy()
    for dy in range(3):
        for dx in range(3):
            if dy == 1 and dx == 1:
                continue
            op(out, padded[dy : dy + h, dx : dx + w], out=out)
    return out


def dilate(frame, iterations: int = 1) -> np.ndarray:
    """Grow a mask: output pixel is 1 iff any input pixel within
    Chebyshev distance `iterations` is 1 (outside the frame counts as 0).
    `iterations=0` returns the frame unchanged.
    """
    mask = as_mask_frame(frame)
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    out = mask.astype(bool)
    for _ in range(int(iterations)):
        out = _shift_reduce(out, np.logical_or)
    return out.astype(np.uint8)


def erode(frame, iterations: int = 1) -> np.ndarray:
    """Shrink a mask: output pixel is 1 iff every pixel within Chebyshev
    distance `iterations` is 1, with out-of-frame pixels counted as 0.
    `iterations=0` returns the frame unchanged.
    """
    mask = as_mask_frame(frame)
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    out = mask.astype(bool)
    for _ in range(int(iterations)):
        out = _shift_reduce(out, np.logical_and)
    return out.astype(np.uint8)


def mask_area(frame) -> int:
    """Number of 1-pixels in the frame."""
    return int(np.count_nonzero(as_mask_frame(frame)))


@dataclass(frozen=True)
class SizeChange:
    """Pixel counts before/after a corruption of one frame.

    `delta_s` is the relative size change (modified over original);
    it is undefined (None) for an empty original.
    """

    s_original: int
    s_modified: int

    @property
    def delta_s(self) -> float | None:
        if self.s_original == 0:
            return None
        return self.s_modified / self.s_original


def size_change(original, modified) -> SizeChange:
    """Relative mask-size change between two same-shape frames."""
    a = as_mask_frame(original)
    b = as_mask_frame(modified)
    if a.shape != b.shape:
        raise ValueError(f"frame shapes differ: {a.shape} vs {b.shape}")
    return SizeChange(int(np.count_nonzero(a)), int(np.count_nonzero(b)))
