"""Segmentation and grading metrics.

Segmentation scores are computed from exact pixel tallies. When prediction
and ground truth are both empty, IoU and Dice are defined as 1.0 (a lesion
correctly reported absent).

Grading agreement uses quadratic weighted kappa over the three DR grades.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyMatrix, LengthMismatch, WrongArity
from .grades import GradeRecord, check_same_ids, index_by_id
from .manifest import LesionClass
from .mask import BinaryMask, check_same_dims

NUM_GRADES = 3


@dataclass(frozen=True)
class BinaryConfusion:
    tp: int
    fp: int
    fn: int
    tn: int

    def __add__(self, other: "BinaryConfusion") -> "BinaryConfusion":
        return BinaryConfusion(self.tp + other.tp, self.fp + other.fp,
                               self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def binary_confusion(pred: BinaryMask, gt: BinaryMask) -> BinaryConfusion:
    check_same_dims(pred, gt)
    p, g = pred.bits, gt.bits
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return BinaryConfusion(tp, fp, fn, p.size - tp - fp - fn)


def dice(c: BinaryConfusion) -> float:
    den = 2 * c.tp + c.fp + c.fn
    return 1.0 if den == 0 else 2 * c.tp / den


def iou(c: BinaryConfusion) -> float:
    den = c.tp + c.fp + c.fn
    return 1.0 if den == 0 else c.tp / den


class ScoreMode(str, enum.Enum):
    AGGREGATE = "aggregate"
    PER_IMAGE_MEAN = "per-image-mean"


@dataclass(frozen=True)
class ClassScore:
    lesion_class: LesionClass
    iou: float
    dice: float
    images_counted: int

    def to_dict(self) -> dict:
        return {"class": int(self.lesion_class), "iou": self.iou, "dice": self.dice,
                "images_counted": self.images_counted}


def dataset_class_score(preds: Sequence[BinaryMask], gts: Sequence[BinaryMask], lesion_class,
                        mode: ScoreMode | str = ScoreMode.AGGREGATE) -> ClassScore:
    """Score one lesion class over a dataset.

    ``aggregate`` sums the pixel tallies of every image and scores once.
    ``per-image-mean`` scores each image and averages; images where both
    masks are empty carry no information about the lesion and are skipped
    (``images_counted`` excludes them, and an all-skipped dataset scores 1.0).
    """
    mode = ScoreMode(mode)
    if len(preds) != len(gts):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(gts)} ground truths")
    confusions = [binary_confusion(p, g) for p, g in zip(preds, gts)]
    lesion_class = LesionClass(lesion_class)

    if mode is ScoreMode.AGGREGATE:
        total = BinaryConfusion(0, 0, 0, 0)
        for c in confusions:
            total = total + c
        return ClassScore(lesion_class, iou(total), dice(total), len(confusions))

    informative = [c for c in confusions if c.tp + c.fp + c.fn > 0]
    if not informative:
        return ClassScore(lesion_class, 1.0, 1.0, 0)
    n = len(informative)
    return ClassScore(
        lesion_class,
        sum(iou(c) for c in informative) / n,
        sum(dice(c) for c in informative) / n,
        n,
    )


def mean_dsc(scores: Sequence[float]) -> float:
    scores = list(scores)
    if len(scores) != 3:
        raise WrongArity(f"mean DSC needs exactly three class scores, got {len(scores)}")
    return sum(scores) / 3


# ---------------------------------------------------------------------------
# Grading
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GradeConfusion:
    """``counts[a][r]``: samples with assigned grade ``a`` and reference grade ``r``."""

    counts: np.ndarray

    def __post_init__(self):
        arr = np.array(self.counts, dtype=np.int64)
        if arr.shape != (NUM_GRADES, NUM_GRADES):
            raise ValueError(f"grade confusion must be {NUM_GRADES}x{NUM_GRADES}, got {arr.shape}")
        if (arr < 0).any():
            raise ValueError("grade confusion counts must be non-negative")
        arr.setflags(write=False)
        object.__setattr__(self, "counts", arr)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other):
        if not isinstance(other, GradeConfusion):
            return NotImplemented
        return bool(np.array_equal(self.counts, other.counts))

    __hash__ = None  # type: ignore[assignment]

    def to_list(self) -> list[list[int]]:
        return self.counts.tolist()


def grade_confusion(assigned: Sequence[GradeRecord], reference: Sequence[GradeRecord]) -> GradeConfusion:
    a_by_id = index_by_id(assigned)
    r_by_id = index_by_id(reference)
    check_same_ids(a_by_id, r_by_id, "assigned and reference grades")
    counts = np.zeros((NUM_GRADES, NUM_GRADES), dtype=np.int64)
    for image_id, rec in a_by_id.items():
        counts[int(rec.grade), int(r_by_id[image_id].grade)] += 1
    return GradeConfusion(counts)


def quadratic_weighted_kappa(cm: GradeConfusion) -> float:
    """Cohen's kappa with (i - j)^2 disagreement weights.

    The expected matrix is the outer product of the marginals over the
    total. Everything up to the final division stays in integers: with
    ``E = a r^T / N``, kappa = 1 - N * sum(w O) / sum(w a r^T), and the
    constant (K - 1)^2 weight normaliser cancels.
    """
    counts = cm.counts
    n = int(counts.sum())
    if n == 0:
        raise EmptyMatrix("grade confusion matrix is empty")
    idx = np.arange(NUM_GRADES)
    w = (idx[:, None] - idx[None, :]) ** 2
    observed = int((w * counts).sum()) * n
    expected = int((w * np.outer(counts.sum(axis=1), counts.sum(axis=0))).sum())
    if expected == 0:
        # All mass on a single grade on both sides, so observed is 0 as well.
        return 1.0
    return 1.0 - observed / expected
