import itertools

import pytest

from drfuse.ensemble import (align_rotated_prediction, canonicalize, compose_class, fuse_image,
                             multi_angle_union, required_keys, validate_manifest)
from drfuse.errors import DimMismatch, DuplicateRotation, MissingPrediction, NonSquareRotation
from drfuse.manifest import LesionClass, Model, PredictionKey, PredictionManifest, read_manifest, write_manifest
from drfuse.mask import BinaryMask, Dims, Rotation, is_subset, pixel_count, resize_nearest, rotate_ccw
from drfuse.recipes import TIM, V1, V2, FusionRecipe, Term

from conftest import make_manifest, random_mask
from oracles import fg_set, oracle_term

RECIPES = [V1, V2, TIM]


def _v1_only_manifest(rng):
    sources = (("m", 1536), ("c", 1536), ("s", 1024), ("s", 1536))
    m = make_manifest(rng, ["a"], sources=sources)
    # Strip ConvNeXt predictions for classes 1 and 3; keep the class-2 one at τ=0.
    for key in list(m.entries):
        if key.model is Model.CONVNEXT and (key.lesion_class != 2 or key.rotation != 0):
            del m.entries[key]
    return m


# validation -----------------------------------------------------------------

@pytest.mark.parametrize("recipe", RECIPES, ids=lambda r: r.name)
def test_complete_manifest_validates(rng, recipe):
    assert validate_manifest(make_manifest(rng, ["a", "b"]), recipe).ok


def test_missing_rotation_is_one_gap(rng):
    m = make_manifest(rng, ["a"])
    del m.entries[PredictionKey("a", 1, "m", 1536, 180)]
    report = validate_manifest(m, V1)
    assert len(report.gaps) == 1
    assert report.gaps[0].reason == "missing-entry"
    assert "180" in report.lines()[0]


def test_v2_against_v1_manifest_lacks_exactly_convnext_terms(rng):
    m = _v1_only_manifest(rng)
    assert validate_manifest(m, V1).ok
    gaps = validate_manifest(m, V2).gaps
    missing = {(g.key.lesion_class, g.key.model, g.key.resolution, g.key.rotation) for g in gaps}
    expected = {(LesionClass(c), Model.CONVNEXT, 1536, Rotation(r)) for c in (1, 3) for r in (0, 90, 180, 270)}
    assert missing == expected


def test_missing_file_and_dims_mismatch(tmp_path, rng):
    m = PredictionManifest(canonical_dims=Dims(64, 64))
    for key, term in required_keys(TIM, ["a"]):
        side = 64 if key.resolution == 1024 else 96
        m.add(key, random_mask(rng, side, side))
    k_missing = PredictionKey("a", 2, "m", 1536, 0)
    m.entries[k_missing] = type(m.entries[k_missing])(str(tmp_path / "absent.png"))
    k_odd = PredictionKey("a", 1, "s", 1024, 0)
    m.entries[k_odd] = type(m.entries[k_odd])(random_mask(rng, 32, 32))
    reasons = sorted(g.reason for g in validate_manifest(m, TIM).gaps)
    assert reasons == ["dims-mismatch", "missing-file"]


def test_required_keys_counts():
    # per image: v1 has classes 1,3 with 3 MA-or-not terms plus one class-2 term
    per_class_13 = 4 + 1 + 4
    assert len(required_keys(V1, ["x"])) == 2 * per_class_13 + 1
    assert len(required_keys(V2, ["x"])) == 2 * (per_class_13 + 4) + 1


# alignment and multi-angle union --------------------------------------------

def test_align_zero_is_identity(rng):
    m = random_mask(rng, 5, 7)
    assert align_rotated_prediction(m, 0) == m


def test_align_180_equals_rotate_180(rng):
    m = random_mask(rng, 5, 7)
    assert align_rotated_prediction(m, 180) == rotate_ccw(m, 180)


@pytest.mark.parametrize("r", [90, 180, 270])
def test_align_round_trip(rng, r):
    g = random_mask(rng, 16, 16)
    assert align_rotated_prediction(rotate_ccw(g, r), r) == g


def test_align_non_square_quarter_turn():
    with pytest.raises(NonSquareRotation):
        align_rotated_prediction(BinaryMask.empty(Dims(4, 3)), 90)


def test_multi_angle_empty_sequence(rng):
    base = random_mask(rng, 8, 8)
    assert multi_angle_union(base, []) == base


def test_multi_angle_consistent_predictions(rng):
    base = random_mask(rng, 12, 12, 0.2)
    assert multi_angle_union(base, [(r, rotate_ccw(base, r)) for r in (90, 180, 270)]) == base


def test_multi_angle_matches_set_oracle(rng):
    preds = {r: random_mask(rng, 10, 10, 0.2) for r in (0, 90, 180, 270)}
    got = multi_angle_union(preds[0], [(r, preds[r]) for r in (90, 180, 270)])
    assert fg_set(got) == oracle_term(preds, True, 10, 10)
    assert is_subset(preds[0], got)


def test_multi_angle_order_independent(rng):
    preds = {r: random_mask(rng, 10, 10, 0.2) for r in (90, 180, 270)}
    outs = {multi_angle_union(BinaryMask.empty(Dims(10, 10)), [(r, preds[r]) for r in perm]).bits.tobytes()
            for perm in itertools.permutations(preds)}
    assert len(outs) == 1


def test_multi_angle_errors(rng):
    base = random_mask(rng, 6, 6)
    with pytest.raises(DuplicateRotation):
        multi_angle_union(base, [(90, base), (90, base)])
    with pytest.raises(DimMismatch):
        multi_angle_union(base, [(180, random_mask(rng, 7, 7))])
    with pytest.raises(ValueError):
        multi_angle_union(base, [(0, base)])


# canonicalize ---------------------------------------------------------------

def test_canonicalize_1536_to_1024():
    out = canonicalize(BinaryMask.full(Dims(1536, 1536)), None, Dims(1024, 1024))
    assert out.dims == Dims(1024, 1024) and pixel_count(out) == 1024 * 1024


def test_canonicalize_identity(rng):
    m = random_mask(rng, 64, 64)
    assert canonicalize(m, None, Dims(64, 64)) is m


# composition ----------------------------------------------------------------

def test_single_term_recipe_passthrough(rng):
    t = Term(Model.SEGFORMER, 1024)
    recipe = FusionRecipe("one", {1: (t,), 2: (t,), 3: (t,)})
    m = make_manifest(rng, ["a"])
    assert compose_class(m, recipe, "a", 2) == m.load(PredictionKey("a", 2, "s", 1024, 0))


def test_v1_class2_is_convnext_alone(rng):
    m = make_manifest(rng, ["a"])
    expected = resize_nearest(m.load(PredictionKey("a", 2, "c", 1536, 0)), Dims(64, 64))
    assert compose_class(m, V1, "a", 2) == expected


def test_v2_class1_matches_set_oracle(rng):
    m = make_manifest(rng, ["a"])
    expected = set()
    for t in V2.class_terms(1):
        preds = {r: m.load(PredictionKey("a", 1, t.model, t.resolution, r)) for r in (0, 90, 180, 270)}
        expected |= oracle_term(preds, t.multi_angle, 64, 64)
    assert fg_set(compose_class(m, V2, "a", 1)) == expected


@pytest.mark.parametrize("recipe", RECIPES, ids=lambda r: r.name)
def test_monotone_over_terms(rng, recipe):
    m = make_manifest(rng, ["a"])
    for cls in LesionClass:
        out = compose_class(m, recipe, "a", cls)
        for t in recipe.class_terms(cls):
            base = resize_nearest(m.load(PredictionKey("a", cls, t.model, t.resolution, 0)), Dims(64, 64))
            assert is_subset(base, out)


def test_term_order_independent(rng):
    m = make_manifest(rng, ["a"])
    reordered = FusionRecipe("rev", {c: tuple(reversed(V2.class_terms(c))) for c in LesionClass})
    for cls in LesionClass:
        assert compose_class(m, V2, "a", cls) == compose_class(m, reordered, "a", cls)


def test_v2_contains_v1(rng):
    m = make_manifest(rng, ["a"])
    for cls in (1, 3):
        assert is_subset(compose_class(m, V1, "a", cls), compose_class(m, V2, "a", cls))


def test_compose_missing_prediction(rng):
    m = make_manifest(rng, ["a"])
    del m.entries[PredictionKey("a", 1, "s", 1536, 270)]
    with pytest.raises(MissingPrediction):
        compose_class(m, V1, "a", 1)
    with pytest.raises(MissingPrediction):
        m.load(PredictionKey("zzz", 1, "s", 1024, 0))


def test_fuse_all_empty():
    m = PredictionManifest(canonical_dims=Dims(8, 8))
    for key, _ in required_keys(V2, ["a"]):
        side = 8 if key.resolution == 1024 else 12
        m.add(key, BinaryMask.empty(Dims(side, side)))
    out = fuse_image(m, V2, "a")
    assert all(pixel_count(x) == 0 for x in (out.o1, out.o2, out.o3, out.overlap_13))


def test_fuse_single_model_identical_masks(rng):
    g = random_mask(rng, 16, 16)
    t = Term(Model.SEGFORMER, 1024, multi_angle=True)
    recipe = FusionRecipe("solo", {1: (t,), 2: (t,), 3: (t,)})
    m = PredictionManifest(canonical_dims=Dims(16, 16))
    for cls in LesionClass:
        for r in Rotation:
            m.add(PredictionKey("a", cls, "s", 1024, r), rotate_ccw(g, r))
    out = fuse_image(m, recipe, "a")
    assert out.o1 == g and out.o2 == g and out.o3 == g


def test_manifest_csv_round_trip(tmp_path, rng):
    from drfuse.mask import save_mask
    m = PredictionManifest(canonical_dims=Dims(8, 8))
    for i, (key, term) in enumerate(required_keys(V2, ["a"])):
        p = tmp_path / "p" / f"{i}.png"
        p.parent.mkdir(exist_ok=True)
        save_mask(random_mask(rng, 8, 8) if key.resolution == 1024 else random_mask(rng, 12, 12), p)
        m.add(key, str(p), term.variant)
    write_manifest(m, tmp_path / "manifest.csv")
    back = read_manifest(tmp_path / "manifest.csv", Dims(8, 8))
    assert set(back.entries) == set(m.entries)
    assert fuse_image(back, V2, "a").o1 == fuse_image(m, V2, "a").o1
