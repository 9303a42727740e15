"""DR grade records and their two-column CSV form (``image_id,grade``)."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Union

from .errors import DuplicateId, IdMismatch, ManifestError


class Grade(IntEnum):
    NORMAL = 0
    NPDR = 1
    PDR = 2


@dataclass(frozen=True)
class GradeRecord:
    image_id: str
    grade: Grade

    def __post_init__(self):
        object.__setattr__(self, "grade", Grade(self.grade))


def index_by_id(records: Iterable[GradeRecord]) -> dict[str, GradeRecord]:
    out: dict[str, GradeRecord] = {}
    for rec in records:
        if rec.image_id in out:
            raise DuplicateId(f"duplicate image_id {rec.image_id!r}")
        out[rec.image_id] = rec
    return out


def check_same_ids(a: Iterable[str], b: Iterable[str], what: str = "inputs") -> None:
    a, b = set(a), set(b)
    if a != b:
        only_a = sorted(a - b)[:5]
        only_b = sorted(b - a)[:5]
        raise IdMismatch(f"{what} disagree on image ids (only in first: {only_a}, only in second: {only_b})")


def read_grades(path: Union[str, os.PathLike]) -> list[GradeRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"image_id", "grade"} <= set(reader.fieldnames):
            raise ManifestError(f"{path}: expected header image_id,grade")
        for lineno, row in enumerate(reader, start=2):
            try:
                records.append(GradeRecord(row["image_id"].strip(), int(row["grade"])))
            except (ValueError, TypeError) as exc:
                raise ManifestError(f"{path} line {lineno}: {exc}") from exc
    index_by_id(records)
    return records


def write_grades(records: Iterable[GradeRecord], path: Union[str, os.PathLike]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "grade"])
        for rec in sorted(records, key=lambda r: r.image_id):
            writer.writerow([rec.image_id, int(rec.grade)])
