"""Cross-model ensemble fusion of binary lesion predictions.

For every recipe term the τ=0 prediction is loaded; multi-angle terms also
union in the predictions made on inputs rotated counterclockwise by 90, 180
and 270 degrees, each first rotated back into the original frame. That
union happens at the term's source resolution, and only then is the result
rescaled (nearest neighbour) to the manifest's canonical dims. The class
output is the union over all of its terms.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from .errors import DimMismatch, DuplicateRotation, MissingPrediction, NonSquareRotation
from .manifest import LesionClass, PredictionKey, PredictionManifest
from .mask import BinaryMask, Dims, Rotation, resize_nearest, rotate_ccw, union
from .recipes import FusionRecipe, Term

logger = logging.getLogger(__name__)

MA_ROTATIONS = (Rotation.R90, Rotation.R180, Rotation.R270)


def term_rotations(term: Term) -> tuple[Rotation, ...]:
    if term.multi_angle:
        return (Rotation.R0,) + MA_ROTATIONS
    return (Rotation.R0,)


def term_key(image_id: str, lesion_class, term: Term, rotation: Rotation) -> PredictionKey:
    return PredictionKey(image_id, LesionClass(lesion_class), term.model, term.resolution, rotation)


def required_keys(recipe: FusionRecipe, image_ids: Iterable[str]) -> list[tuple[PredictionKey, Term]]:
    """Every (key, term) a recipe reads for the given images, in a stable order."""
    out = []
    for image_id in sorted(set(image_ids)):
        for cls in LesionClass:
            for term in recipe.class_terms(cls):
                for r in term_rotations(term):
                    out.append((term_key(image_id, cls, term, r), term))
    return out


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Gap:
    key: PredictionKey
    term: Optional[Term]
    reason: str  # "missing-entry" | "missing-file" | "dims-mismatch"

    def line(self) -> str:
        k = self.key
        term = self.term.label() if self.term else f"{k.model.value}@{k.resolution}"
        return (f"{self.reason}: image={k.image_id} class={int(k.lesion_class)} "
                f"term={term} rotation={int(k.rotation)}")


@dataclass
class ValidationReport:
    gaps: list[Gap] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.gaps

    def lines(self) -> list[str]:
        return [g.line() for g in self.gaps]


def validate_manifest(manifest: PredictionManifest, recipe: FusionRecipe,
                      image_ids: Optional[Iterable[str]] = None) -> ValidationReport:
    """List every prediction the recipe needs but the manifest cannot supply.

    Beyond missing records this flags referenced files that do not exist and
    source resolutions whose masks disagree on raster size.
    """
    ids = manifest.image_ids() if image_ids is None else list(image_ids)
    report = ValidationReport()
    dims_by_res: dict[int, dict[Dims, PredictionKey]] = {}
    seen = set()
    for key, term in required_keys(recipe, ids):
        if key in seen:
            continue
        seen.add(key)
        entry = manifest.entries.get(key)
        if entry is None:
            report.gaps.append(Gap(key, term, "missing-entry"))
            continue
        dims = entry.dims()
        if dims is None:
            report.gaps.append(Gap(key, term, "missing-file"))
            continue
        dims_by_res.setdefault(key.resolution, {}).setdefault(dims, key)

    for res, by_dims in sorted(dims_by_res.items()):
        if len(by_dims) > 1:
            # The dims of the earliest key (sorted order) are taken as the reference.
            for dims, key in sorted(by_dims.items(), key=lambda kv: kv[1])[1:]:
                report.gaps.append(Gap(key, None, "dims-mismatch"))
    return report


# ---------------------------------------------------------------------------
# Fusion primitives
# ---------------------------------------------------------------------------

def align_rotated_prediction(pred: BinaryMask, input_rotation: Rotation | int) -> BinaryMask:
    """Register a prediction made on a CCW-rotated input back to the original frame."""
    r = Rotation(input_rotation)
    if r in (Rotation.R90, Rotation.R270) and pred.width != pred.height:
        raise NonSquareRotation(f"cannot align {pred.dims} prediction rotated by {int(r)}")
    return rotate_ccw(pred, r.inverse())


def multi_angle_union(base: BinaryMask,
                      rotated: Sequence[tuple[Rotation | int, BinaryMask]]) -> BinaryMask:
    result = base
    seen: set[Rotation] = set()
    for r, pred in rotated:
        r = Rotation(r)
        if r is Rotation.R0:
            raise ValueError("multi-angle predictions must be rotated by 90, 180 or 270 degrees")
        if r in seen:
            raise DuplicateRotation(f"rotation {int(r)} supplied twice")
        seen.add(r)
        aligned = align_rotated_prediction(pred, r)
        if aligned.dims != base.dims:
            raise DimMismatch(f"aligned {int(r)} prediction is {aligned.dims}, base is {base.dims}")
        result = union(result, aligned)
    return result


def canonicalize(pred: BinaryMask, key: Optional[PredictionKey], canonical: Dims) -> BinaryMask:
    if pred.dims == canonical:
        return pred
    logger.debug("rescaling %s from %s to %s", key, pred.dims, canonical)
    return resize_nearest(pred, canonical)


def compose_term(manifest: PredictionManifest, image_id: str, lesion_class, term: Term) -> BinaryMask:
    """One recipe term: τ=0 mask, multi-angle union if enabled, then canonical rescale."""
    key0 = term_key(image_id, lesion_class, term, Rotation.R0)
    mask = manifest.load(key0)
    if term.multi_angle:
        rotated = []
        for r in MA_ROTATIONS:
            key = term_key(image_id, lesion_class, term, r)
            if key not in manifest:
                raise MissingPrediction(f"multi-angle term {term.label()} lacks rotation {int(r)} for {image_id}")
            rotated.append((r, manifest.load(key)))
        mask = multi_angle_union(mask, rotated)
    return canonicalize(mask, key0, manifest.canonical_dims)


def compose_class(manifest: PredictionManifest, recipe: FusionRecipe, image_id: str,
                  lesion_class) -> BinaryMask:
    result = BinaryMask.empty(manifest.canonical_dims)
    for term in recipe.class_terms(lesion_class):
        result = union(result, compose_term(manifest, image_id, lesion_class, term))
    return result


@dataclass(frozen=True)
class FusedOutput:
    image_id: str
    o1: BinaryMask
    o2: BinaryMask
    o3: BinaryMask
    overlap_13: BinaryMask

    def __post_init__(self):
        dims = {m.dims for m in (self.o1, self.o2, self.o3, self.overlap_13)}
        if len(dims) != 1:
            raise DimMismatch(f"fused masks for {self.image_id} disagree on dims: {sorted(map(str, dims))}")

    @property
    def dims(self) -> Dims:
        return self.o1.dims

    def by_class(self) -> dict[LesionClass, BinaryMask]:
        return {
            LesionClass.IRMA: self.o1,
            LesionClass.NONPERFUSION: self.o2,
            LesionClass.NEOVASCULARIZATION: self.o3,
        }


def fuse_image(manifest: PredictionManifest, recipe: FusionRecipe, image_id: str) -> FusedOutput:
    o1, o2, o3 = (compose_class(manifest, recipe, image_id, cls) for cls in LesionClass)
    return FusedOutput(image_id, o1, o2, o3, BinaryMask.empty(manifest.canonical_dims))
