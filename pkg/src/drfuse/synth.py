"""Deterministic synthetic corpora for exercising the pipeline end to end.

A corpus contains, for every image, lesion class and configured prediction
source (model + resolution), the base prediction plus the three predictions
"made on rotated inputs". The rotated ones are exact rotations of the base,
so multi-angle fusion of a synthetic term gives back the base mask.

Blobs are built from integer ellipse distance fields, so the same seed gives
byte-identical PNGs on every platform.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .grades import GradeRecord, write_grades
from .manifest import LesionClass, Model, PredictionKey, PredictionManifest, write_manifest
from .mask import BinaryMask, Dims, Rotation, rotate_ccw, save_mask
from .tim import ThresholdConfig, default_thresholds, save_thresholds

REFERENCE_SIDE = 1024


@dataclass(frozen=True)
class Source:
    model: Model
    resolution: int
    variant: Optional[str] = None

    @classmethod
    def parse(cls, text: str) -> "Source":
        """``"m:1536"`` or ``"c:1536:XL"``."""
        parts = text.strip().split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"bad source spec {text!r}; expected model:resolution[:variant]")
        return cls(Model(parts[0]), int(parts[1]), parts[2] if len(parts) == 3 else None)


DEFAULT_SOURCES = (
    Source(Model.MAE, 1536),
    Source(Model.CONVNEXT, 1536, "XL"),
    Source(Model.SEGFORMER, 1024),
    Source(Model.SEGFORMER, 1536),
)

# Upper pixel-count bounds as a fraction of the canonical area; chosen so
# fused counts land on both sides of the default grading thresholds.
DEFAULT_BAND_FRACTIONS = {
    LesionClass.IRMA: (0.0, 0.006),
    LesionClass.NONPERFUSION: (0.0, 0.4),
    LesionClass.NEOVASCULARIZATION: (0.0, 0.008),
}


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_images: int = 4
    side: int = REFERENCE_SIDE  # canonical side; 1536-resolution sources use side * 3 / 2
    sources: Sequence[Source] = DEFAULT_SOURCES
    band_fractions: dict = field(default_factory=lambda: dict(DEFAULT_BAND_FRACTIONS))

    def __post_init__(self):
        if self.side <= 0 or self.side % 2:
            raise ValueError("synthetic side must be a positive even number")
        if self.n_images < 1:
            raise ValueError("n_images must be >= 1")

    def source_side(self, resolution: int) -> int:
        return self.side if resolution == 1024 else self.side * 3 // 2

    def band(self, lesion_class: LesionClass, side: int) -> tuple[int, int]:
        lo, hi = self.band_fractions[LesionClass(lesion_class)]
        area = side * side
        return int(lo * area), int(hi * area)


def blob_mask(rng: np.random.Generator, dims: Dims, count: int) -> BinaryMask:
    """A two-lobed blob with exactly ``count`` foreground pixels."""
    count = max(0, min(count, dims.area))
    if count == 0:
        return BinaryMask.empty(dims)
    h, w = dims.height, dims.width
    ys, xs = np.mgrid[0:h, 0:w].astype(np.int64)
    field_ = None
    for _ in range(2):
        cx, cy = int(rng.integers(0, w)), int(rng.integers(0, h))
        ax, ay = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        d = ((xs - cx) * ay) ** 2 + ((ys - cy) * ax) ** 2
        field_ = d if field_ is None else np.minimum(field_, d)
    flat = field_.ravel()
    kth = np.partition(flat, count - 1)[count - 1]
    sel = flat < kth
    need = count - int(sel.sum())
    # Ties at the cut-off are broken by raster order so the result is unique.
    sel[np.flatnonzero(flat == kth)[:need]] = True
    return BinaryMask(sel.reshape(h, w))


def scaled_thresholds(side: int) -> ThresholdConfig:
    """Default thresholds rescaled by area to a ``side``×``side`` reference frame."""
    base = default_thresholds()
    if side == REFERENCE_SIDE:
        return base
    ratio = (side * side) / (REFERENCE_SIDE * REFERENCE_SIDE)
    t_min = [max(1, round(t * ratio)) for t in base.t_min]
    t_max = [max(lo + 1, round(t * ratio)) for lo, t in zip(t_min, base.t_max)]
    return ThresholdConfig(tuple(t_min), tuple(t_max), Dims.square(side))


@dataclass(frozen=True)
class SynthCorpus:
    root: Path
    manifest_path: Path
    gt_dir: Path
    prelim_path: Path
    reference_path: Path
    thresholds_path: Path
    manifest_entries: int


def image_ids(n: int) -> list[str]:
    return [f"img{i:04d}" for i in range(n)]


def synthesize(out_dir: Union[str, os.PathLike], config: SynthConfig) -> SynthCorpus:
    root = Path(out_dir)
    pred_root = root / "predictions"
    gt_dir = root / "gt"
    gt_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    manifest = PredictionManifest(canonical_dims=Dims.square(config.side))
    prelim, reference = [], []

    for image_id in image_ids(config.n_images):
        img_dir = pred_root / image_id
        img_dir.mkdir(parents=True, exist_ok=True)
        for cls in LesionClass:
            for src in config.sources:
                side = config.source_side(src.resolution)
                lo, hi = config.band(cls, side)
                base = blob_mask(rng, Dims.square(side), int(rng.integers(lo, hi + 1)))
                for r in Rotation:
                    path = img_dir / f"c{int(cls)}_{src.model.value}_{src.resolution}_r{int(r)}.png"
                    save_mask(rotate_ccw(base, r), path)
                    key = PredictionKey(image_id, cls, src.model, src.resolution, r)
                    manifest.add(key, str(path), src.variant)
            lo, hi = config.band(cls, config.side)
            gt = blob_mask(rng, Dims.square(config.side), int(rng.integers(lo, hi + 1)))
            save_mask(gt, gt_dir / f"{image_id}__O{int(cls)}.png")
        prelim.append(GradeRecord(image_id, int(rng.integers(0, 3))))
        reference.append(GradeRecord(image_id, int(rng.integers(0, 3))))

    manifest_path = root / "manifest.csv"
    write_manifest(manifest, manifest_path)
    prelim_path = root / "prelim.csv"
    reference_path = root / "reference.csv"
    write_grades(prelim, prelim_path)
    write_grades(reference, reference_path)
    thresholds_path = root / "thresholds.json"
    save_thresholds(scaled_thresholds(config.side), thresholds_path)
    with open(root / "synth.json", "w") as fh:
        json.dump({
            "seed": config.seed,
            "n_images": config.n_images,
            "side": config.side,
            "sources": [[s.model.value, s.resolution, s.variant] for s in config.sources],
            "manifest_entries": len(manifest),
        }, fh, indent=2)
        fh.write("\n")
    return SynthCorpus(root, manifest_path, gt_dir, prelim_path, reference_path,
                       thresholds_path, len(manifest))
