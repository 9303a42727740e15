"""Directory-level runs used by the CLI: fusion, grade revision, evaluation.

Fused masks and ground truth share one flat layout, ``<dir>/<image_id>__O<k>.png``
for k = 1, 2, 3, so prediction and ground-truth directories can be paired by
file name.
"""

from __future__ import annotations

import json
import logging
import os
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from PIL import Image

from .ensemble import FusedOutput, fuse_image
from .errors import IdMismatch
from .grades import GradeRecord, write_grades
from .manifest import LesionClass, PredictionManifest
from .mask import intersect, load_mask, save_mask
from .metrics import ClassScore, ScoreMode, dataset_class_score, mean_dsc
from .postprocess import OverlapReport, postprocess
from .recipes import FusionRecipe, recipe_to_dict
from .tim import CheckMode, RevisionRecord, ThresholdConfig, revise_batch

logger = logging.getLogger(__name__)

_FUSED_NAME = re.compile(r"^(?P<id>.+)__O(?P<cls>[123])\.png$")
_OVERLAY_COLOURS = {1: (255, 0, 0), 2: (0, 255, 0), 3: (0, 0, 255)}
_SOURCE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp")

PathArg = Union[str, "os.PathLike[str]"]


def fused_mask_path(directory: PathArg, image_id: str, lesion_class) -> Path:
    return Path(directory) / f"{image_id}__O{int(lesion_class)}.png"


def write_fused(fused: FusedOutput, directory: PathArg) -> None:
    for cls, mask in fused.by_class().items():
        save_mask(mask, fused_mask_path(directory, fused.image_id, cls))


def read_fused(directory: PathArg, image_id: str) -> FusedOutput:
    o1, o2, o3 = (load_mask(fused_mask_path(directory, image_id, cls)) for cls in LesionClass)
    return FusedOutput(image_id, o1, o2, o3, intersect(o1, o3))


def list_mask_ids(directory: PathArg) -> dict[str, set[int]]:
    """Map image id -> set of class numbers present in a fused-layout directory."""
    found: dict[str, set[int]] = {}
    for name in sorted(os.listdir(directory)):
        m = _FUSED_NAME.match(name)
        if m:
            found.setdefault(m.group("id"), set()).add(int(m.group("cls")))
    return found


def complete_ids(directory: PathArg) -> list[str]:
    found = list_mask_ids(directory)
    partial = sorted(i for i, classes in found.items() if classes != {1, 2, 3})
    if partial:
        raise IdMismatch(f"{directory}: images lack some class masks: {partial[:5]}")
    return sorted(found)


# ---------------------------------------------------------------------------
# Fusion
# ---------------------------------------------------------------------------

def fuse_and_postprocess(manifest: PredictionManifest, recipe: FusionRecipe,
                         image_id: str) -> tuple[FusedOutput, OverlapReport]:
    return postprocess(fuse_image(manifest, recipe, image_id))


def _find_source_image(images_dir: Path, image_id: str) -> Optional[Path]:
    for ext in _SOURCE_EXTENSIONS:
        p = images_dir / f"{image_id}{ext}"
        if p.is_file():
            return p
    return None


def render_overlay(fused: FusedOutput, source: Optional[PathArg]) -> Image.Image:
    """Fused masks blended at 50% over the source image (black if none)."""
    w, h = fused.dims.width, fused.dims.height
    if source is not None:
        with Image.open(source) as img:
            base = np.asarray(img.convert("RGB").resize((w, h), Image.BILINEAR), dtype=np.float64)
    else:
        base = np.zeros((h, w, 3), dtype=np.float64)
    out = base.copy()
    for cls, mask in fused.by_class().items():
        colour = np.array(_OVERLAY_COLOURS[int(cls)], dtype=np.float64)
        out[mask.bits] = 0.5 * out[mask.bits] + 0.5 * colour
    return Image.fromarray(np.round(out).astype(np.uint8))


@dataclass
class FuseRun:
    fused: list[FusedOutput]
    overlaps: list[OverlapReport]


def run_fuse(manifest: PredictionManifest, recipe: FusionRecipe, out_dir: PathArg, jobs: int = 1,
             overlay_images: Optional[PathArg] = None) -> FuseRun:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids = manifest.image_ids()

    def work(image_id: str):
        fused, report = fuse_and_postprocess(manifest, recipe, image_id)
        write_fused(fused, out_dir)
        if overlay_images is not None:
            (out_dir / "overlays").mkdir(exist_ok=True)
            src = _find_source_image(Path(overlay_images), image_id)
            render_overlay(fused, src).save(out_dir / "overlays" / f"{image_id}.png", format="PNG")
        return fused, report

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(work, ids))  # map preserves sorted id order

    fused = [f for f, _ in results]
    overlaps = [r for _, r in results]
    with open(out_dir / "overlap_report.jsonl", "w") as fh:
        for r in overlaps:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    summary = {
        "recipe": recipe_to_dict(recipe),
        "canonical_dims": [manifest.canonical_dims.width, manifest.canonical_dims.height],
        "images": [
            {
                "image_id": f.image_id,
                "pixels": {str(int(c)): int(m.bits.sum()) for c, m in f.by_class().items()},
                "overlap_13": r.overlap_pixels,
            }
            for f, r in zip(fused, overlaps)
        ],
    }
    with open(out_dir / "fusion_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return FuseRun(fused, overlaps)


# ---------------------------------------------------------------------------
# Grade revision
# ---------------------------------------------------------------------------

def run_grade_revise(prelim: Sequence[GradeRecord], fused_dir: PathArg, th: ThresholdConfig,
                     mode: CheckMode | str, out_dir: PathArg) -> list[RevisionRecord]:
    """Revise grades from fused masks on disk; writes revised.csv and audit.jsonl."""
    fused_ids = complete_ids(fused_dir)
    prelim_ids = {r.image_id for r in prelim}
    if set(fused_ids) != prelim_ids:
        raise IdMismatch(
            f"preliminary grades and fused masks disagree on ids "
            f"(only in grades: {sorted(prelim_ids - set(fused_ids))[:5]}, "
            f"only in masks: {sorted(set(fused_ids) - prelim_ids)[:5]})")
    fused = [read_fused(fused_dir, i) for i in fused_ids]
    records = revise_batch(prelim, fused, th, mode)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_grades([GradeRecord(r.image_id, r.revised) for r in records], out_dir / "revised.csv")
    with open(out_dir / "audit.jsonl", "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")
    return records


# ---------------------------------------------------------------------------
# Segmentation evaluation
# ---------------------------------------------------------------------------

@dataclass
class SegEvaluation:
    mode: ScoreMode
    image_ids: list[str]
    scores: list[ClassScore]

    @property
    def mean_dsc(self) -> float:
        return mean_dsc([s.dice for s in self.scores])

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "images": len(self.image_ids),
            "classes": [s.to_dict() for s in self.scores],
            "mean_dsc": self.mean_dsc,
        }

    def lines(self) -> list[str]:
        out = [f"class {int(s.lesion_class)}: IoU={s.iou:.4f} Dice={s.dice:.4f} (images={s.images_counted})"
               for s in self.scores]
        out.append(f"mean DSC: {self.mean_dsc:.4f}")
        return out


def evaluate_directories(pred_dir: PathArg, gt_dir: PathArg,
                         mode: ScoreMode | str = ScoreMode.AGGREGATE) -> SegEvaluation:
    mode = ScoreMode(mode)
    pred_ids = complete_ids(pred_dir)
    gt_ids = complete_ids(gt_dir)
    if pred_ids != gt_ids:
        raise IdMismatch(
            f"prediction and ground-truth directories disagree on ids "
            f"(only in predictions: {sorted(set(pred_ids) - set(gt_ids))[:5]}, "
            f"only in ground truth: {sorted(set(gt_ids) - set(pred_ids))[:5]})")
    scores = []
    for cls in LesionClass:
        preds = [load_mask(fused_mask_path(pred_dir, i, cls)) for i in pred_ids]
        gts = [load_mask(fused_mask_path(gt_dir, i, cls)) for i in pred_ids]
        scores.append(dataset_class_score(preds, gts, cls, mode))
    return SegEvaluation(mode, pred_ids, scores)
