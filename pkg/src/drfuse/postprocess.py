"""Overlap handling between the IRMA (O1) and neovascularization (O3) masks.

Both lesion types are predicted from the same training mask, so their fused
outputs can claim the same pixels. The overlap is handed to *both* classes,
which for per-class binary masks leaves each mask unchanged; the stage still
measures the overlap so it shows up in run reports.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .ensemble import FusedOutput
from .mask import BinaryMask, intersect, pixel_count, union


@dataclass(frozen=True)
class OverlapReport:
    image_id: str
    overlap_pixels: int
    overlap_fraction_of_1: float
    overlap_fraction_of_3: float

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "overlap_pixels": self.overlap_pixels,
            "overlap_fraction_of_1": self.overlap_fraction_of_1,
            "overlap_fraction_of_3": self.overlap_fraction_of_3,
        }


def _fraction(num: int, den: int) -> float:
    return num / den if den else 0.0


def distribute_overlap(o1: BinaryMask, o3: BinaryMask,
                       image_id: str = "") -> tuple[BinaryMask, BinaryMask, OverlapReport]:
    overlap = intersect(o1, o3)
    n = pixel_count(overlap)
    o1_out = union(o1, overlap)
    o3_out = union(o3, overlap)
    report = OverlapReport(
        image_id=image_id,
        overlap_pixels=n,
        overlap_fraction_of_1=_fraction(n, pixel_count(o1)),
        overlap_fraction_of_3=_fraction(n, pixel_count(o3)),
    )
    return o1_out, o3_out, report


def postprocess(fused: FusedOutput) -> tuple[FusedOutput, OverlapReport]:
    """Apply :func:`distribute_overlap` and record the overlap mask on the output."""
    o1, o3, report = distribute_overlap(fused.o1, fused.o3, fused.image_id)
    return replace(fused, o1=o1, o3=o3, overlap_13=intersect(o1, o3)), report
