"""Geometric ×6 dataset expansion.

Every image (and its masks, with the identical transform) is written in six
variants: the original, horizontal and vertical flips, and counterclockwise
rotations by 90, 180 and 270 degrees. Outputs are named
``<image_id>__<tag>.png``.

Input manifests are CSV files with columns ``image_id,path`` and optional
``mask_a``, ``mask_b`` and ``grade`` columns (empty cells mean "absent").
"""

from __future__ import annotations

import csv
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image

from .errors import DecodeError, DuplicateId, DuplicateOutputId, ManifestError, MissingFile
from .grades import Grade
from .mask import BinaryMask, FlipAxis, Rotation, flip, flip_array, load_mask, pixel_count, rotate_array_ccw, rotate_ccw, save_mask

VARIANT_TAGS = ("orig", "hflip", "vflip", "r90", "r180", "r270")
MASK_KINDS = ("mask_a", "mask_b")

_KEEP_MODES = {"L", "LA", "RGB", "RGBA"}


def _transform_array(arr: np.ndarray, tag: str) -> np.ndarray:
    if tag == "orig":
        return arr.copy()
    if tag == "hflip":
        return flip_array(arr, FlipAxis.HORIZONTAL)
    if tag == "vflip":
        return flip_array(arr, FlipAxis.VERTICAL)
    return rotate_array_ccw(arr, Rotation(int(tag[1:])))


def _transform_mask(mask: BinaryMask, tag: str) -> BinaryMask:
    if tag == "orig":
        return mask
    if tag == "hflip":
        return flip(mask, FlipAxis.HORIZONTAL)
    if tag == "vflip":
        return flip(mask, FlipAxis.VERTICAL)
    return rotate_ccw(mask, Rotation(int(tag[1:])))


def expand_image(image):
    """Return ``{tag: transformed}`` for all six variants of a mask or raster."""
    if isinstance(image, BinaryMask):
        return {tag: _transform_mask(image, tag) for tag in VARIANT_TAGS}
    arr = np.asarray(image)
    return {tag: _transform_array(arr, tag) for tag in VARIANT_TAGS}


@dataclass(frozen=True)
class DatasetEntry:
    image_id: str
    path: str
    mask_a: Optional[str] = None
    mask_b: Optional[str] = None
    grade: Optional[Grade] = None


@dataclass
class DatasetManifest:
    entries: list[DatasetEntry] = field(default_factory=list)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.image_id in seen:
                raise DuplicateId(f"duplicate image_id {e.image_id!r} in dataset manifest")
            seen.add(e.image_id)


def read_dataset_manifest(path: Union[str, os.PathLike]) -> DatasetManifest:
    path = Path(path)
    base = path.parent

    def resolve(cell: Optional[str]) -> Optional[str]:
        cell = (cell or "").strip()
        if not cell:
            return None
        p = Path(cell)
        return str(p if p.is_absolute() else base / p)

    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"image_id", "path"} <= set(reader.fieldnames):
            raise ManifestError(f"{path}: expected at least columns image_id,path")
        for lineno, row in enumerate(reader, start=2):
            grade = (row.get("grade") or "").strip()
            try:
                entries.append(DatasetEntry(
                    image_id=row["image_id"].strip(),
                    path=resolve(row["path"]),
                    mask_a=resolve(row.get("mask_a")),
                    mask_b=resolve(row.get("mask_b")),
                    grade=Grade(int(grade)) if grade else None,
                ))
            except ValueError as exc:
                raise ManifestError(f"{path} line {lineno}: {exc}") from exc
    return DatasetManifest(entries)


def write_dataset_manifest(manifest: DatasetManifest, path: Union[str, os.PathLike]) -> None:
    base = Path(path).parent.resolve()

    def rel(p: Optional[str]) -> str:
        if p is None:
            return ""
        p = Path(p).resolve()
        try:
            return p.relative_to(base).as_posix()
        except ValueError:
            return p.as_posix()

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "path", "mask_a", "mask_b", "grade"])
        for e in manifest.entries:
            writer.writerow([e.image_id, rel(e.path), rel(e.mask_a), rel(e.mask_b),
                             "" if e.grade is None else int(e.grade)])


def _load_raster(path: str) -> np.ndarray:
    if not os.path.isfile(path):
        raise MissingFile(f"image not found: {path}")
    try:
        with Image.open(path) as img:
            if img.mode not in _KEEP_MODES:
                img = img.convert("RGB")
            return np.asarray(img)
    except OSError as exc:
        raise DecodeError(f"{path}: {exc}") from exc


@dataclass
class LesionTally:
    lesion: int = 0
    non_lesion: int = 0

    def add(self, present: bool) -> None:
        if present:
            self.lesion += 1
        else:
            self.non_lesion += 1

    def to_dict(self) -> dict:
        return {"lesion": self.lesion, "non_lesion": self.non_lesion}


@dataclass
class ExpansionReport:
    inputs: int = 0
    outputs: int = 0
    grades_in: Counter = field(default_factory=Counter)
    grades_out: Counter = field(default_factory=Counter)
    masks_in: dict = field(default_factory=lambda: {k: LesionTally() for k in MASK_KINDS})
    masks_out: dict = field(default_factory=lambda: {k: LesionTally() for k in MASK_KINDS})

    def to_dict(self) -> dict:
        return {
            "inputs": self.inputs,
            "outputs": self.outputs,
            "grades_in": {str(g): self.grades_in[g] for g in sorted(self.grades_in)},
            "grades_out": {str(g): self.grades_out[g] for g in sorted(self.grades_out)},
            "masks_in": {k: v.to_dict() for k, v in self.masks_in.items()},
            "masks_out": {k: v.to_dict() for k, v in self.masks_out.items()},
        }

    def table_lines(self) -> list[str]:
        lines = [f"images: {self.inputs} -> {self.outputs}"]
        for g in sorted(self.grades_in):
            lines.append(f"grade {g}: {self.grades_in[g]} -> {self.grades_out[g]}")
        for k in MASK_KINDS:
            i, o = self.masks_in[k], self.masks_out[k]
            if i.lesion + i.non_lesion:
                lines.append(f"{k} lesion: {i.lesion} -> {o.lesion}; "
                             f"without lesion: {i.non_lesion} -> {o.non_lesion}")
        return lines


def _expand_entry(entry: DatasetEntry, out_dir: Path) -> tuple[DatasetEntry, list[DatasetEntry], dict, dict]:
    image = _load_raster(entry.path)
    masks = {k: load_mask(getattr(entry, k)) for k in MASK_KINDS if getattr(entry, k)}
    for k, m in masks.items():
        if m.bits.shape != image.shape[:2]:
            raise DecodeError(f"{entry.image_id}: {k} is {m.dims}, image is {image.shape[1]}x{image.shape[0]}")
    present_in = {k: pixel_count(m) > 0 for k, m in masks.items()}
    present_out: dict[str, list[bool]] = {k: [] for k in masks}

    image_vars = expand_image(image)
    mask_vars = {k: expand_image(m) for k, m in masks.items()}
    produced = []
    for tag in VARIANT_TAGS:
        name = f"{entry.image_id}__{tag}.png"
        img_path = out_dir / "images" / name
        Image.fromarray(image_vars[tag]).save(img_path, format="PNG")
        paths = {}
        for k in masks:
            mpath = out_dir / k / name
            save_mask(mask_vars[k][tag], mpath)
            present_out[k].append(pixel_count(mask_vars[k][tag]) > 0)
            paths[k] = str(mpath)
        produced.append(DatasetEntry(f"{entry.image_id}__{tag}", str(img_path),
                                     paths.get("mask_a"), paths.get("mask_b"), entry.grade))
    return entry, produced, present_in, present_out


def expand_dataset(manifest: DatasetManifest, out_dir: Union[str, os.PathLike],
                   jobs: int = 1) -> tuple[ExpansionReport, DatasetManifest]:
    """Write all six variants of every entry; returns the count report and the output manifest."""
    out_dir = Path(out_dir)
    names = set()
    for e in manifest.entries:
        if not e.image_id or any(sep in e.image_id for sep in ("/", "\\")):
            raise ManifestError(f"image_id {e.image_id!r} cannot be used as a file name")
        for tag in VARIANT_TAGS:
            name = f"{e.image_id}__{tag}".lower()  # case-insensitive filesystems
            if name in names:
                raise DuplicateOutputId(f"output name {name!r} produced twice")
            names.add(name)

    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    for k in MASK_KINDS:
        if any(getattr(e, k) for e in manifest.entries):
            (out_dir / k).mkdir(parents=True, exist_ok=True)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(lambda e: _expand_entry(e, out_dir), manifest.entries))

    report = ExpansionReport()
    out_entries = []
    for entry, produced, present_in, present_out in results:
        report.inputs += 1
        report.outputs += len(produced)
        if entry.grade is not None:
            report.grades_in[int(entry.grade)] += 1
            report.grades_out[int(entry.grade)] += len(produced)
        for k, present in present_in.items():
            report.masks_in[k].add(present)
            for p in present_out[k]:
                report.masks_out[k].add(p)
        out_entries.extend(produced)
    return report, DatasetManifest(out_entries)
