"""Fusion recipes: which upstream predictions are unioned into each lesion class.

Three recipes are built in:

``v1``
    Challenge ensemble. IRMA and neovascularization from MAE at 1536
    (rescaled) plus SegFormer at 1024 and 1536; nonperfusion from
    ConvNeXt-L at 1536 alone.
``v2``
    Adds ConvNeXt-XL at 1536 to the IRMA/neovascularization unions and
    uses ConvNeXt-XL for nonperfusion.
``tim``
    The ensemble used to count lesion pixels for grade revision. Same as
    v1 except nonperfusion comes from MAE at 1536.

Multi-angle (rotation) test-time augmentation is applied only to the
1536-resolution terms of classes 1 and 3. Custom recipes are JSON
documents with the same term schema, see :func:`recipe_to_dict`.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Union

from .errors import ManifestError
from .manifest import SOURCE_RESOLUTIONS, LesionClass, Model


@dataclass(frozen=True)
class Term:
    model: Model
    resolution: int
    multi_angle: bool = False
    variant: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "model", Model(self.model))
        if self.resolution not in SOURCE_RESOLUTIONS:
            raise ManifestError(f"unsupported term resolution {self.resolution}")

    def label(self) -> str:
        tag = self.model.value + (f"[{self.variant}]" if self.variant else "")
        return f"{tag}@{self.resolution}{'+MA' if self.multi_angle else ''}"


@dataclass(frozen=True)
class FusionRecipe:
    name: str
    terms: Mapping[LesionClass, tuple[Term, ...]]

    def __post_init__(self):
        terms = {LesionClass(k): tuple(v) for k, v in self.terms.items()}
        for cls in LesionClass:
            if not terms.get(cls):
                raise ManifestError(f"recipe {self.name!r} has no terms for class {int(cls)}")
        for cls, ts in terms.items():
            if len(set(ts)) != len(ts):
                raise ManifestError(f"recipe {self.name!r} repeats a term in class {int(cls)}")
        object.__setattr__(self, "terms", terms)

    def class_terms(self, lesion_class) -> tuple[Term, ...]:
        return self.terms[LesionClass(lesion_class)]


def _mask_a(*extra: Term) -> tuple[Term, ...]:
    # Shared IRMA / neovascularization term list; ``extra`` slots in after MAE.
    return (
        Term(Model.MAE, 1536, multi_angle=True),
        *extra,
        Term(Model.SEGFORMER, 1024),
        Term(Model.SEGFORMER, 1536, multi_angle=True),
    )


V1 = FusionRecipe("v1", {
    LesionClass.IRMA: _mask_a(),
    LesionClass.NONPERFUSION: (Term(Model.CONVNEXT, 1536, variant="L"),),
    LesionClass.NEOVASCULARIZATION: _mask_a(),
})

V2 = FusionRecipe("v2", {
    LesionClass.IRMA: _mask_a(Term(Model.CONVNEXT, 1536, multi_angle=True, variant="XL")),
    LesionClass.NONPERFUSION: (Term(Model.CONVNEXT, 1536, variant="XL"),),
    LesionClass.NEOVASCULARIZATION: _mask_a(Term(Model.CONVNEXT, 1536, multi_angle=True, variant="XL")),
})

TIM = FusionRecipe("tim", {
    LesionClass.IRMA: _mask_a(),
    LesionClass.NONPERFUSION: (Term(Model.MAE, 1536),),
    LesionClass.NEOVASCULARIZATION: _mask_a(),
})

BUILTIN_RECIPES = {r.name: r for r in (V1, V2, TIM)}


def recipe_to_dict(recipe: FusionRecipe) -> dict:
    return {
        "name": recipe.name,
        "classes": {
            str(int(cls)): [
                {
                    "model": t.model.value,
                    "variant": t.variant,
                    "resolution": t.resolution,
                    "multi_angle": t.multi_angle,
                }
                for t in recipe.class_terms(cls)
            ]
            for cls in LesionClass
        },
    }


def recipe_from_dict(doc: dict) -> FusionRecipe:
    try:
        terms = {
            LesionClass(int(cls)): tuple(
                Term(
                    model=t["model"],
                    resolution=int(t["resolution"]),
                    multi_angle=bool(t.get("multi_angle", False)),
                    variant=t.get("variant"),
                )
                for t in items
            )
            for cls, items in doc["classes"].items()
        }
        return FusionRecipe(str(doc.get("name", "custom")), terms)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ManifestError):
            raise
        raise ManifestError(f"malformed recipe document: {exc}") from exc


def get_recipe(name_or_path: Union[str, os.PathLike]) -> FusionRecipe:
    """Look up a built-in recipe by name, else load a JSON recipe file."""
    if str(name_or_path) in BUILTIN_RECIPES:
        return BUILTIN_RECIPES[str(name_or_path)]
    path = Path(name_or_path)
    if not path.is_file():
        raise ManifestError(f"unknown recipe {str(name_or_path)!r} (not built in, no such file)")
    with open(path) as fh:
        return recipe_from_dict(json.load(fh))
