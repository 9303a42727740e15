"""Prediction manifest: which mask file holds which upstream prediction.

On disk the manifest is a CSV with one record per prediction::

    image_id,class,model,variant,resolution,rotation,path
    img001,1,m,,1536,90,masks/img001/c1_m_1536_r90.png

Relative paths are resolved against the manifest's own directory. The
``variant`` column (``L``/``XL`` for ConvNeXt) is carried as metadata and
does not take part in key matching.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from pathlib import Path
from typing import Optional, Union

from PIL import Image

from .errors import ManifestError, MissingPrediction
from .mask import BinaryMask, Dims, Rotation, load_mask

MANIFEST_FIELDS = ("image_id", "class", "model", "variant", "resolution", "rotation", "path")
SOURCE_RESOLUTIONS = (1024, 1536)
DEFAULT_CANONICAL = Dims(1024, 1024)


class Model(str, Enum):
    MAE = "m"
    CONVNEXT = "c"
    SEGFORMER = "s"


class LesionClass(IntEnum):
    IRMA = 1  # intraretinal microvascular abnormalities
    NONPERFUSION = 2
    NEOVASCULARIZATION = 3


@dataclass(frozen=True, order=True)
class PredictionKey:
    image_id: str
    lesion_class: LesionClass
    model: Model
    resolution: int
    rotation: Rotation

    def __post_init__(self):
        object.__setattr__(self, "lesion_class", LesionClass(self.lesion_class))
        object.__setattr__(self, "model", Model(self.model))
        object.__setattr__(self, "rotation", Rotation(self.rotation))
        if self.resolution not in SOURCE_RESOLUTIONS:
            raise ManifestError(f"unsupported source resolution {self.resolution}")


MaskSource = Union[str, "os.PathLike[str]", BinaryMask]


@dataclass(frozen=True)
class ManifestEntry:
    """Where a prediction lives. ``source`` may be a path or an in-memory mask."""

    source: MaskSource
    variant: Optional[str] = None

    def load(self) -> BinaryMask:
        if isinstance(self.source, BinaryMask):
            return self.source
        return load_mask(self.source)

    def dims(self) -> Optional[Dims]:
        """Raster size without decoding pixels; None if the file is absent."""
        if isinstance(self.source, BinaryMask):
            return self.source.dims
        if not os.path.isfile(self.source):
            return None
        with Image.open(self.source) as img:
            return Dims(*img.size)


@dataclass
class PredictionManifest:
    entries: dict[PredictionKey, ManifestEntry] = field(default_factory=dict)
    canonical_dims: Dims = DEFAULT_CANONICAL

    def add(self, key: PredictionKey, source: MaskSource, variant: Optional[str] = None) -> None:
        if key in self.entries:
            raise ManifestError(f"duplicate manifest key {key}")
        self.entries[key] = ManifestEntry(source, variant)

    def __contains__(self, key: PredictionKey) -> bool:
        return key in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def image_ids(self) -> list[str]:
        return sorted({k.image_id for k in self.entries})

    def load(self, key: PredictionKey) -> BinaryMask:
        try:
            entry = self.entries[key]
        except KeyError:
            raise MissingPrediction(f"manifest has no entry for {key}") from None
        return entry.load()


def _parse_row(row: dict, base: Path, lineno: int) -> tuple[PredictionKey, ManifestEntry]:
    try:
        key = PredictionKey(
            image_id=row["image_id"].strip(),
            lesion_class=int(row["class"]),
            model=row["model"].strip(),
            resolution=int(row["resolution"]),
            rotation=int(row["rotation"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        raise ManifestError(f"manifest line {lineno}: {exc}") from exc
    if not key.image_id:
        raise ManifestError(f"manifest line {lineno}: empty image_id")
    raw_path = (row.get("path") or "").strip()
    if not raw_path:
        raise ManifestError(f"manifest line {lineno}: empty path")
    path = Path(raw_path)
    if not path.is_absolute():
        path = base / path
    variant = (row.get("variant") or "").strip() or None
    return key, ManifestEntry(str(path), variant)


def read_manifest(path: Union[str, os.PathLike], canonical_dims: Dims = DEFAULT_CANONICAL) -> PredictionManifest:
    path = Path(path)
    base = path.parent
    manifest = PredictionManifest(canonical_dims=canonical_dims)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ManifestError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            key, entry = _parse_row(row, base, lineno)
            if key in manifest.entries:
                raise ManifestError(f"{path} line {lineno}: duplicate entry for {key}")
            manifest.entries[key] = entry
    return manifest


def write_manifest(manifest: PredictionManifest, path: Union[str, os.PathLike]) -> None:
    """Write sorted records; paths under the manifest directory are stored relative."""
    path = Path(path)
    base = path.parent.resolve()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for key in sorted(manifest.entries):
            entry = manifest.entries[key]
            if isinstance(entry.source, BinaryMask):
                raise ManifestError(f"cannot serialise in-memory mask for {key}")
            src = Path(entry.source).resolve()
            try:
                src = src.relative_to(base)
            except ValueError:
                pass
            writer.writerow([
                key.image_id, int(key.lesion_class), key.model.value, entry.variant or "",
                key.resolution, int(key.rotation), src.as_posix(),
            ])

