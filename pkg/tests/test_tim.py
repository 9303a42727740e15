import itertools

import pytest
from hypothesis import given
from hypothesis import strategies as st

from drfuse.ensemble import FusedOutput
from drfuse.errors import DimMismatch, DuplicateId, IdMismatch, InconsistentConditionVector, ManifestError
from drfuse.grades import Grade, GradeRecord
from drfuse.mask import BinaryMask, Dims
from drfuse.tim import (CheckMode, ConditionVector, LesionCounts, ThresholdConfig, default_thresholds,
                        evaluate_conditions, load_thresholds, revise_batch, revise_grade, save_thresholds)

from conftest import random_mask
from oracles import expected_grade


def consistent_vectors():
    """All 27 (c_min, c_max) pairs with no index true in both."""
    out = []
    for states in itertools.product(("min", "max", "none"), repeat=3):
        out.append(ConditionVector.from_flags([s == "min" for s in states], [s == "max" for s in states]))
    return out


def test_27_consistent_vectors():
    vs = consistent_vectors()
    assert len(vs) == 27
    for v in vs:
        v.check()


@pytest.mark.parametrize("mode", ["same-index", "any-index"])
@pytest.mark.parametrize("prelim", [0, 1, 2])
def test_table_exhaustive(prelim, mode):
    for cv in consistent_vectors():
        got, rule = revise_grade(prelim, cv, mode)
        assert int(got) == expected_grade(prelim, cv.c_min, cv.c_max, mode), (cv, rule)
        assert abs(int(got) - prelim) <= 1


def test_modes_agree_on_consistent_vectors():
    for prelim in Grade:
        for cv in consistent_vectors():
            assert revise_grade(prelim, cv, "same-index") == revise_grade(prelim, cv, "any-index")


def test_modes_differ_only_on_inconsistent_reading():
    # any-index would look at the other indices, which cannot carry c_max once c_min holds there.
    cv = ConditionVector.from_flags((False, True, True), (False, False, False))
    assert revise_grade(0, cv, "any-index")[0] == revise_grade(0, cv, "same-index")[0] == 0


@pytest.mark.parametrize("prelim,c_min,c_max,expected", [
    (1, (True, True, True), (False, False, False), 0),
    (2, (False, False, False), (True, True, True), 2),
    (0, (False, True, True), (False, False, False), 0),
    (1, (False, False, False), (True, True, False), 1),
    (0, (False, True, True), (True, False, False), 1),
    (2, (True, False, True), (False, False, False), 1),
])
def test_named_examples(prelim, c_min, c_max, expected):
    assert revise_grade(prelim, ConditionVector.from_flags(c_min, c_max))[0] == expected


def test_inconsistent_vectors_rejected():
    with pytest.raises(InconsistentConditionVector):
        revise_grade(0, ConditionVector.from_flags((True, False, False), (True, False, False)))
    with pytest.raises(InconsistentConditionVector):
        revise_grade(0, ConditionVector((True, True, True), (False, False, False), 2, 0))


def test_default_thresholds():
    th = default_thresholds()
    assert th.t_min == (676, 16900, 784)
    assert th.t_max == (6084, 562500, 10000)
    assert th.t_min[0] == 26 ** 2 and th.t_max[1] == 750 ** 2
    assert all(lo < hi for lo, hi in zip(th.t_min, th.t_max))
    assert th.reference_dims == Dims(1024, 1024)


@pytest.mark.parametrize("counts,c_min,c_max", [
    ((0, 0, 0), (True, True, True), (False, False, False)),
    ((676, 16900, 784), (False, False, False), (False, False, False)),
    ((6084, 562500, 10000), (False, False, False), (False, False, False)),
    ((7000, 600000, 12000), (False, False, False), (True, True, True)),
    ((675, 562501, 5000), (True, False, False), (False, True, False)),
])
def test_evaluate_conditions(counts, c_min, c_max):
    cv = evaluate_conditions(LesionCounts(*counts), default_thresholds())
    assert cv.c_min == c_min and cv.c_max == c_max
    assert cv.sigma0 == sum(c_min) and cv.sigma1 == sum(c_max)


@given(st.tuples(*[st.integers(0, 1024 * 1024)] * 3))
def test_evaluate_never_inconsistent(counts):
    evaluate_conditions(LesionCounts(*counts), default_thresholds()).check()


@pytest.mark.parametrize("t_min,t_max", [((5, 5, 5), (5, 6, 6)), ((0, 1, 1), (2, 2, 2)), ((1, 1), (2, 2))])
def test_bad_threshold_config(t_min, t_max):
    with pytest.raises(ValueError):
        ThresholdConfig(t_min, t_max)


def test_threshold_json_round_trip(tmp_path):
    th = ThresholdConfig((1, 2, 3), (4, 5, 6), Dims(64, 64))
    save_thresholds(th, tmp_path / "t.json")
    assert load_thresholds(tmp_path / "t.json") == th
    (tmp_path / "bad.json").write_text('{"t_min": [1, 2, 3]}')
    with pytest.raises(ManifestError):
        load_thresholds(tmp_path / "bad.json")


# batch --------------------------------------------------------------------------

def _fused(image_id, dims, masks=None):
    e = BinaryMask.empty(dims)
    o1, o2, o3 = masks or (e, e, e)
    return FusedOutput(image_id, o1, o2, o3, e)


@pytest.mark.parametrize("prelim,expected,rule", [(0, 0, "N-s0=3-keep"), (1, 0, "D-s0=3-down"),
                                                  (2, 1, "P-s0=3-down")])
def test_batch_empty_masks(prelim, expected, rule):
    dims = Dims(1024, 1024)
    ids = ["a", "b", "c"]
    recs = revise_batch([GradeRecord(i, prelim) for i in ids], [_fused(i, dims) for i in ids],
                        default_thresholds())
    assert [r.revised for r in recs] == [expected] * 3
    assert {r.rule_fired for r in recs} == {rule}


def test_batch_matches_per_sample(rng):
    th = ThresholdConfig((20, 300, 20), (120, 2000, 150), Dims(64, 64))
    ids = [f"i{k}" for k in range(30)]
    fused = [_fused(i, th.reference_dims, [random_mask(rng, 64, 64, rng.uniform(0, 0.6)) for _ in range(3)])
             for i in ids]
    prelim = [GradeRecord(i, int(rng.integers(0, 3))) for i in ids]
    recs = revise_batch(prelim[::-1], fused, th, "same-index")
    assert [r.image_id for r in recs] == sorted(ids)
    p_by_id = {p.image_id: p for p in prelim}
    f_by_id = {f.image_id: f for f in fused}
    for r in recs:
        p, f = p_by_id[r.image_id], f_by_id[r.image_id]
        counts = LesionCounts(*(int(m.bits.sum()) for m in (f.o1, f.o2, f.o3)))
        assert r.counts == counts
        assert (r.revised, r.rule_fired) == revise_grade(p.grade, evaluate_conditions(counts, th))
        assert abs(r.revised - r.preliminary) <= 1
    single = revise_batch(prelim[:1], fused[:1], th)
    assert single[0] == next(r for r in recs if r.image_id == prelim[0].image_id)


def test_batch_errors(rng):
    dims = Dims(1024, 1024)
    th = default_thresholds()
    with pytest.raises(IdMismatch):
        revise_batch([GradeRecord("a", 0)], [_fused("b", dims)], th)
    with pytest.raises(DuplicateId):
        revise_batch([GradeRecord("a", 0)], [_fused("a", dims), _fused("a", dims)], th)
    with pytest.raises(DimMismatch):
        revise_batch([GradeRecord("a", 0)], [_fused("a", Dims(64, 64))], th)


def test_record_to_dict():
    rec = revise_batch([GradeRecord("a", 2)], [_fused("a", Dims(1024, 1024))], default_thresholds())[0]
    assert rec.to_dict() == {"image_id": "a", "preliminary": 2, "revised": 1, "counts": [0, 0, 0],
                             "c_min": [True, True, True], "c_max": [False, False, False],
                             "sigma0": 3, "sigma1": 0, "rule": "P-s0=3-down"}


def test_check_mode_values():
    assert {m.value for m in CheckMode} == {"same-index", "any-index"}
