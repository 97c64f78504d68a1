import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dfdetect.catalog import (
    Label,
    Partition,
    SplitPlan,
    balance_classes,
    load_catalog,
    split_videos,
)
from dfdetect.errors import (
    DegenerateSplit,
    DuplicateVideoId,
    EmptyClass,
    MissingFile,
    SchemaViolation,
    UnbalancedCatalog,
)

from conftest import make_catalog, write_manifest


def celeb_df_rows():
    rows = [(f"real_{i}", "real", f"Celeb-real/id{i}.mp4") for i in range(590)]
    rows += [(f"fake_{i}", "fake", f"Celeb-synthesis/id{i}.mp4") for i in range(5639)]
    return rows


def test_load_celeb_df_shaped_manifest(tmp_path):
    path = write_manifest(tmp_path / "m.csv", celeb_df_rows())
    cat = load_catalog(path)
    assert cat.class_counts == {Label.REAL: 590, Label.FAKE: 5639}
    assert len(cat) == 6229
    assert cat.records[0].path == tmp_path / "Celeb-real/id0.mp4"


def test_load_empty_manifest(tmp_path):
    cat = load_catalog(write_manifest(tmp_path / "m.csv", []))
    assert len(cat) == 0
    assert cat.class_counts == {Label.REAL: 0, Label.FAKE: 0}
    (tmp_path / "blank.csv").write_text("")
    assert len(load_catalog(tmp_path / "blank.csv")) == 0


def test_load_rejects_duplicate(tmp_path):
    path = write_manifest(tmp_path / "m.csv", [("a", "real", "a.mp4"), ("a", "fake", "b.mp4")])
    with pytest.raises(DuplicateVideoId, match="row 3"):
        load_catalog(path)


def test_load_missing_file(tmp_path):
    with pytest.raises(MissingFile):
        load_catalog(tmp_path / "nope.csv")


@pytest.mark.parametrize(
    "rows, header, match",
    [
        ([("a", "maybe", "a.mp4")], "video_id,label,path", "row 2"),
        ([("a", "real", "a.mp4"), ("", "fake", "b.mp4")], "video_id,label,path", "row 3"),
        ([("a", "real")], "video_id,label,path", "row 2"),
        ([("a", "real", "x")], "video_id,path,kind", "header"),
    ],
)
def test_load_schema_violations(tmp_path, rows, header, match):
    path = write_manifest(tmp_path / "m.csv", rows, header)
    with pytest.raises(SchemaViolation, match=match):
        load_catalog(path)


def test_optional_columns(tmp_path):
    path = write_manifest(tmp_path / "m.csv", [("a", "REAL", "/abs/a.mp4", "13.0", "30")],
                          header="video_id,label,path,duration_s,fps")
    rec = load_catalog(path).records[0]
    assert (rec.label, rec.path, rec.duration_s, rec.fps) == (Label.REAL, Path("/abs/a.mp4"), 13.0, 30.0)


def test_balance_celeb_df_counts():
    bal = balance_classes(make_catalog(590, 5639), seed=0)
    assert bal.class_counts == {Label.REAL: 590, Label.FAKE: 590}


def test_balance_already_balanced_is_identity():
    cat = make_catalog(7, 7)
    assert balance_classes(cat, seed=3) == cat


def test_balance_is_seeded_subset():
    cat = make_catalog(3, 10)
    a = balance_classes(cat, seed=1)
    b = balance_classes(cat, seed=1)
    assert a == b
    fakes = [r for r in a.records if r.label == Label.FAKE]
    assert len(fakes) == 3
    assert set(fakes) <= set(cat.records)
    assert a.by_label(Label.REAL) == cat.by_label(Label.REAL)


def test_balance_seed_changes_selection():
    cat = make_catalog(5, 200)
    picks = {tuple(r.video_id for r in balance_classes(cat, s).by_label(Label.FAKE)) for s in range(5)}
    assert len(picks) > 1


def test_balance_empty_class():
    with pytest.raises(EmptyClass):
        balance_classes(make_catalog(0, 4), seed=0)


def test_split_table_one_counts():
    plan = split_videos(balance_classes(make_catalog(590, 5639), 0), 0.2, 0.0, seed=0)
    for label in Label:
        assert plan.per_class_counts[(label, Partition.TEST)] == 118
        assert plan.per_class_counts[(label, Partition.TRAIN)] == 472
        assert plan.per_class_counts[(label, Partition.VAL)] == 0


def test_split_floor_arithmetic():
    # by hand: test floor(10*0.2)=2, val floor(8*0.2)=floor(1.6)=1, train 10-2-1=7
    plan = split_videos(make_catalog(10, 10), 0.2, 0.2, seed=5)
    for label in Label:
        got = [plan.per_class_counts[(label, p)] for p in (Partition.TEST, Partition.VAL, Partition.TRAIN)]
        assert got == [2, 1, 7]


def test_split_floor_is_decimal_exact():
    # 100 * 0.29 is 28.999999999999996 in binary floating point
    plan = split_videos(make_catalog(100, 100), 0.29, 0.0, seed=0)
    assert plan.per_class_counts[(Label.REAL, Partition.TEST)] == 29


def test_split_deterministic_and_serialized_bytes():
    cat = make_catalog(50, 50)
    a, b = split_videos(cat, 0.2, 0.2, 11), split_videos(cat, 0.2, 0.2, 11)
    assert a.assignments == b.assignments
    assert a.to_json() == b.to_json()
    assert split_videos(cat, 0.2, 0.2, 12).assignments != a.assignments


def test_split_rejects_unbalanced():
    with pytest.raises(UnbalancedCatalog):
        split_videos(make_catalog(3, 4), 0.2, 0.0, 0)


@pytest.mark.parametrize("n, test_fraction, val_fraction", [(4, 0.2, 0.0), (5, 0.2, 0.2), (1, 0.9, 0.0), (2, 0.5, 0.5)])
def test_split_degenerate(n, test_fraction, val_fraction):
    with pytest.raises(DegenerateSplit):
        split_videos(make_catalog(n, n), test_fraction, val_fraction, 0)


@pytest.mark.parametrize("tf, vf", [(0.0, 0.1), (1.0, 0.1), (0.2, 1.0), (0.2, -0.1)])
def test_split_fraction_bounds(tf, vf):
    with pytest.raises(ValueError):
        split_videos(make_catalog(10, 10), tf, vf, 0)


def test_plan_round_trip(tmp_path):
    plan = split_videos(make_catalog(20, 20), 0.25, 0.2, 4)
    plan.save(tmp_path / "plan.json")
    again = SplitPlan.load(tmp_path / "plan.json")
    assert again == plan
    doc = json.loads((tmp_path / "plan.json").read_text())
    assert list(doc) == sorted(doc)
    assert doc["per_class_counts"]["fake"] == {"test": 5, "train": 12, "val": 3}


def test_plan_load_errors(tmp_path):
    with pytest.raises(MissingFile):
        SplitPlan.load(tmp_path / "none.json")
    (tmp_path / "bad.json").write_text('{"seed": 1}')
    with pytest.raises(SchemaViolation):
        SplitPlan.load(tmp_path / "bad.json")


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(min_value=4, max_value=80),
    extra=st.integers(min_value=0, max_value=60),
    test_fraction=st.floats(min_value=0.25, max_value=0.6),
    val_fraction=st.sampled_from([0.0, 0.3, 0.5]),
    seed=st.integers(min_value=0, max_value=2**31),
)
def test_split_properties(n, extra, test_fraction, val_fraction, seed):
    cat = make_catalog(n + extra, n)
    bal = balance_classes(cat, seed)
    counts = bal.class_counts
    assert counts[Label.REAL] == counts[Label.FAKE] == n
    try:
        plan = split_videos(bal, test_fraction, val_fraction, seed)
    except DegenerateSplit:
        return
    ids = {r.video_id for r in bal.records}
    assert set(plan.assignments) == ids
    assert plan.video_ids(Partition.TEST).isdisjoint(plan.video_ids(Partition.TRAIN, Partition.VAL))
    labels = {r.video_id: r.label for r in bal.records}
    for (label, part), k in plan.per_class_counts.items():
        assert k == sum(1 for v, p in plan.assignments.items() if p == part and labels[v] == label)
    assert plan.to_json() == split_videos(balance_classes(cat, seed), test_fraction, val_fraction, seed).to_json()
