"""Ensemble fusion, scoring and threshold-based grade revision for DR lesion masks."""

from .ensemble import (FusedOutput, align_rotated_prediction, canonicalize, compose_class,
                       fuse_image, multi_angle_union, validate_manifest)
from .grades import Grade, GradeRecord
from .manifest import LesionClass, Model, PredictionKey, PredictionManifest, read_manifest
from .mask import (BinaryMask, Dims, FlipAxis, Rotation, complement, flip, intersect, load_mask,
                   pixel_count, resize_nearest, rotate_ccw, save_mask, union)
from .metrics import (binary_confusion, dataset_class_score, dice, grade_confusion, iou, mean_dsc,
                      quadratic_weighted_kappa)
from .postprocess import distribute_overlap, postprocess
from .recipes import BUILTIN_RECIPES, TIM, V1, V2, FusionRecipe, Term, get_recipe
from .tim import (CheckMode, ThresholdConfig, default_thresholds, evaluate_conditions, revise_batch,
                  revise_grade)

__version__ = "0.1.0"

__all__ = [
    "BUILTIN_RECIPES", "BinaryMask", "CheckMode", "Dims", "FlipAxis", "FusedOutput", "FusionRecipe",
    "Grade", "GradeRecord", "LesionClass", "Model", "PredictionKey", "PredictionManifest", "Rotation",
    "TIM", "Term", "ThresholdConfig", "V1", "V2", "align_rotated_prediction", "binary_confusion",
    "canonicalize", "complement", "compose_class", "dataset_class_score", "default_thresholds", "dice",
    "distribute_overlap", "evaluate_conditions", "flip", "fuse_image", "get_recipe", "grade_confusion",
    "intersect", "iou", "load_mask", "mean_dsc", "multi_angle_union", "pixel_count", "postprocess",
    "quadratic_weighted_kappa", "read_manifest", "resize_nearest", "revise_batch", "revise_grade",
    "rotate_ccw", "save_mask", "union", "validate_manifest",
]
