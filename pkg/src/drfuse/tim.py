"""Threshold inspection: revise preliminary DR grades from fused lesion areas.

Each fused class mask O_i is reduced to its foreground pixel count and
compared against a lower threshold T_i and an upper threshold T_i*::

    c_min[i] = count_i <  T_i     (looks Normal for this lesion)
    c_max[i] = count_i >  T_i*    (looks PDR for this lesion)

sigma0 / sigma1 count the true entries of c_min / c_max. The preliminary
grade is then moved by at most one level:

    prelim Normal: sigma0 == 3 keep; sigma0 == 2 -> NPDR iff check(j);
                   sigma0 <= 1 -> NPDR
    prelim NPDR:   sigma0 == 3 -> Normal; otherwise -> PDR iff sigma1 == 3
    prelim PDR:    sigma0 == 3 -> NPDR; sigma0 == 2 keep iff check(j)
                   else NPDR; sigma0 <= 1 keep

where j is the single lesion index with c_min false, and check(j) is
c_max[j] (``same-index``) or sigma1 >= 1 (``any-index``). For consistent
condition vectors the two modes agree, because the other two indices have
c_min true and so cannot have c_max true.
"""

from __future__ import annotations

import enum
import json
import os
from dataclasses import dataclass
from typing import Sequence, Union

from .ensemble import FusedOutput
from .errors import DimMismatch, DuplicateId, InconsistentConditionVector, ManifestError
from .grades import Grade, GradeRecord, check_same_ids, index_by_id
from .mask import Dims, pixel_count


@dataclass(frozen=True)
class ThresholdConfig:
    t_min: tuple[int, int, int]
    t_max: tuple[int, int, int]
    reference_dims: Dims = Dims(1024, 1024)

    def __post_init__(self):
        t_min = tuple(int(v) for v in self.t_min)
        t_max = tuple(int(v) for v in self.t_max)
        if len(t_min) != 3 or len(t_max) != 3:
            raise ValueError("threshold config needs three lower and three upper thresholds")
        for i, (lo, hi) in enumerate(zip(t_min, t_max), start=1):
            if lo <= 0 or hi <= 0:
                raise ValueError(f"class {i} thresholds must be positive")
            if lo >= hi:
                raise ValueError(f"class {i}: lower threshold {lo} must be below upper {hi}")
        object.__setattr__(self, "t_min", t_min)
        object.__setattr__(self, "t_max", t_max)

    def to_dict(self) -> dict:
        return {
            "t_min": list(self.t_min),
            "t_max": list(self.t_max),
            "reference_dims": [self.reference_dims.width, self.reference_dims.height],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ThresholdConfig":
        try:
            dims = doc.get("reference_dims", [1024, 1024])
            return cls(tuple(doc["t_min"]), tuple(doc["t_max"]), Dims(int(dims[0]), int(dims[1])))
        except (KeyError, TypeError, IndexError) as exc:
            raise ManifestError(f"malformed threshold config: {exc}") from exc


def default_thresholds() -> ThresholdConfig:
    # Squared side lengths: 26, 130, 28 (lower) and 78, 750, 100 (upper).
    return ThresholdConfig(
        t_min=(26 ** 2, 130 ** 2, 28 ** 2),
        t_max=(78 ** 2, 750 ** 2, 100 ** 2),
        reference_dims=Dims(1024, 1024),
    )


def load_thresholds(path: Union[str, os.PathLike]) -> ThresholdConfig:
    with open(path) as fh:
        return ThresholdConfig.from_dict(json.load(fh))


def save_thresholds(th: ThresholdConfig, path: Union[str, os.PathLike]) -> None:
    with open(path, "w") as fh:
        json.dump(th.to_dict(), fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class LesionCounts:
    o1: int
    o2: int
    o3: int

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.o1, self.o2, self.o3)


@dataclass(frozen=True)
class ConditionVector:
    c_min: tuple[bool, bool, bool]
    c_max: tuple[bool, bool, bool]
    sigma0: int
    sigma1: int

    @classmethod
    def from_flags(cls, c_min: Sequence[bool], c_max: Sequence[bool]) -> "ConditionVector":
        c_min = tuple(bool(v) for v in c_min)
        c_max = tuple(bool(v) for v in c_max)
        return cls(c_min, c_max, sum(c_min), sum(c_max))

    def check(self) -> None:
        if len(self.c_min) != 3 or len(self.c_max) != 3:
            raise InconsistentConditionVector("condition vectors must have three entries")
        if self.sigma0 != sum(map(bool, self.c_min)) or self.sigma1 != sum(map(bool, self.c_max)):
            raise InconsistentConditionVector(
                f"sigma0={self.sigma0}, sigma1={self.sigma1} disagree with flags {self.c_min} / {self.c_max}")
        for i, (lo, hi) in enumerate(zip(self.c_min, self.c_max), start=1):
            if lo and hi:
                raise InconsistentConditionVector(f"class {i} is both below T and above T*")


def evaluate_conditions(counts: LesionCounts, th: ThresholdConfig) -> ConditionVector:
    values = counts.as_tuple()
    c_min = [v < t for v, t in zip(values, th.t_min)]
    c_max = [v > t for v, t in zip(values, th.t_max)]
    return ConditionVector.from_flags(c_min, c_max)


class CheckMode(str, enum.Enum):
    SAME_INDEX = "same-index"
    ANY_INDEX = "any-index"


def _second_look(cv: ConditionVector, mode: CheckMode) -> bool:
    """Re-examine the one lesion class that failed its Normal condition."""
    if mode is CheckMode.ANY_INDEX:
        return cv.sigma1 >= 1
    j = cv.c_min.index(False)
    return cv.c_max[j]


def revise_grade(prelim: Grade | int, cv: ConditionVector,
                 mode: CheckMode | str = CheckMode.SAME_INDEX) -> tuple[Grade, str]:
    """Return the revised grade and the identifier of the rule that decided it."""
    cv.check()
    prelim = Grade(prelim)
    mode = CheckMode(mode)
    s0 = cv.sigma0

    if prelim is Grade.NORMAL:
        if s0 == 3:
            return Grade.NORMAL, "N-s0=3-keep"
        if s0 == 2:
            if _second_look(cv, mode):
                return Grade.NPDR, "N-s0=2-up"
            return Grade.NORMAL, "N-s0=2-keep"
        return Grade.NPDR, "N-s0<=1-up"

    if prelim is Grade.NPDR:
        if s0 == 3:
            return Grade.NORMAL, "D-s0=3-down"
        if cv.sigma1 == 3:
            return Grade.PDR, "D-s1=3-up"
        return Grade.NPDR, "D-keep"

    if s0 == 3:
        return Grade.NPDR, "P-s0=3-down"
    if s0 == 2:
        if _second_look(cv, mode):
            return Grade.PDR, "P-s0=2-keep"
        return Grade.NPDR, "P-s0=2-down"
    return Grade.PDR, "P-s0<=1-keep"


@dataclass(frozen=True)
class RevisionRecord:
    image_id: str
    preliminary: Grade
    revised: Grade
    counts: LesionCounts
    conditions: ConditionVector
    rule_fired: str

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "preliminary": int(self.preliminary),
            "revised": int(self.revised),
            "counts": list(self.counts.as_tuple()),
            "c_min": list(self.conditions.c_min),
            "c_max": list(self.conditions.c_max),
            "sigma0": self.conditions.sigma0,
            "sigma1": self.conditions.sigma1,
            "rule": self.rule_fired,
        }


def lesion_counts(fused: FusedOutput, th: ThresholdConfig) -> LesionCounts:
    if fused.dims != th.reference_dims:
        raise DimMismatch(
            f"{fused.image_id}: fused masks are {fused.dims}, thresholds are defined at {th.reference_dims}")
    return LesionCounts(pixel_count(fused.o1), pixel_count(fused.o2), pixel_count(fused.o3))


def revise_one(prelim: GradeRecord, fused: FusedOutput, th: ThresholdConfig,
               mode: CheckMode | str = CheckMode.SAME_INDEX) -> RevisionRecord:
    counts = lesion_counts(fused, th)
    cv = evaluate_conditions(counts, th)
    revised, rule = revise_grade(prelim.grade, cv, mode)
    return RevisionRecord(prelim.image_id, prelim.grade, revised, counts, cv, rule)


def revise_batch(prelim: Sequence[GradeRecord], fused: Sequence[FusedOutput], th: ThresholdConfig,
                 mode: CheckMode | str = CheckMode.SAME_INDEX) -> list[RevisionRecord]:
    """Revise every sample independently; records come back sorted by image_id."""
    by_id = index_by_id(prelim)
    fused_by_id: dict[str, FusedOutput] = {}
    for f in fused:
        if f.image_id in fused_by_id:
            raise DuplicateId(f"duplicate fused output for {f.image_id!r}")
        fused_by_id[f.image_id] = f
    check_same_ids(by_id, fused_by_id, "preliminary grades and fused masks")
    return [revise_one(by_id[i], fused_by_id[i], th, mode) for i in sorted(by_id)]
