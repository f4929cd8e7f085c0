import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from msafnet.data import (
    AccidentAnnotation,
    AnnotationError,
    ClipDataset,
    CrashBox,
    clip_indices,
    load_annotations,
    load_catalog,
    make_splits,
    parse_annotation,
    sample_clip,
    serialize_annotation,
    split_counts,
)

MINIMAL = (b'{"video_id":"v1","category_id":3,"ego_involved":false,"num_frames":40,"fps":30,'
           b'"aw_start":10,"aw_end":19,"behavior_type":"crossing","crash_boxes":[]}')


@st.composite
def annotations(draw):
    n = draw(st.integers(1, 500))
    start = draw(st.integers(0, n - 1))
    end = draw(st.integers(start, n - 1))
    boxes = draw(st.lists(st.builds(CrashBox, st.integers(0, n - 1), st.integers(0, 300), st.integers(0, 300),
                                    st.integers(1, 50), st.integers(1, 50)), max_size=4))
    return AccidentAnnotation(
        video_id=draw(st.text(st.characters(codec="utf-8", exclude_categories=("Cs",)), min_size=1, max_size=12)),
        category_id=draw(st.integers(1, 54)), ego_involved=draw(st.booleans()), num_frames=n,
        fps=draw(st.integers(1, 60)), aw_start=start, aw_end=end,
        behavior_type=draw(st.sampled_from(["crossing", "hitting", "out_of_control", "other"])),
        crash_boxes=tuple(boxes))


# -------------------------------------------------------------- annotations
def test_minimal_record_round_trips_byte_for_byte():
    a = parse_annotation(MINIMAL)
    assert (a.before_aw, a.aw_length, a.after_aw) == (10, 10, 20)
    assert serialize_annotation(a) == MINIMAL


@settings(max_examples=80, deadline=None)
@given(a=annotations())
def test_parse_inverts_serialize(a):
    raw = serialize_annotation(a)
    back = parse_annotation(raw)
    assert back == a
    assert serialize_annotation(back) == raw
    assert a.before_aw + a.aw_length + a.after_aw == a.num_frames


@pytest.mark.parametrize("change,field", [
    ({"aw_end": 40}, "aw_end"),
    ({"category_id": 55}, "category_id"),
    ({"category_id": 0}, "category_id"),
    ({"aw_start": 20, "aw_end": 19}, "aw_end"),
    ({"behavior_type": "swerving"}, "behavior_type"),
    ({"fps": 29.97}, "fps"),
    ({"colour": "red"}, "colour"),
])
def test_invalid_records_name_the_field(change, field):
    obj = json.loads(MINIMAL)
    obj.update(change)
    with pytest.raises(AnnotationError, match=field):
        parse_annotation(json.dumps(obj))


def test_every_problem_is_listed_together():
    obj = json.loads(MINIMAL)
    obj.update(category_id=99, aw_end=50, behavior_type="x")
    with pytest.raises(AnnotationError) as exc:
        parse_annotation(json.dumps(obj))
    assert len(exc.value.problems) == 3


def test_malformed_inputs():
    with pytest.raises(AnnotationError, match="malformed JSON"):
        parse_annotation(b"{")
    with pytest.raises(AnnotationError, match="UTF-8"):
        parse_annotation(b"\xff\xfe")
    with pytest.raises(AnnotationError, match="missing"):
        parse_annotation(b"{}")
    obj = json.loads(MINIMAL)
    obj["crash_boxes"] = [{"frame": 1, "x": 0, "y": 0, "w": 2}]
    with pytest.raises(AnnotationError, match="crash_boxes"):
        parse_annotation(json.dumps(obj))


def test_boxes_are_checked_against_the_frame_size():
    obj = json.loads(MINIMAL)
    obj["crash_boxes"] = [{"frame": 1, "x": 60, "y": 0, "w": 8, "h": 2}]
    parse_annotation(json.dumps(obj))
    with pytest.raises(AnnotationError, match="width 64"):
        parse_annotation(json.dumps(obj), width=64, height=64)


def test_box_hit_test_includes_edges():
    b = CrashBox(0, 2, 3, 4, 2)
    assert b.contains(2, 3) and b.contains(5, 4)
    assert not b.contains(6, 4) and not b.contains(5, 5)


def test_json_lines_and_directories_load_the_same_records(small_synth, tmp_path):
    root, records = small_synth
    lines = tmp_path / "anns.jsonl"
    lines.write_bytes(b"\n".join(serialize_annotation(r.annotation) for r in records) + b"\n")
    assert load_annotations(lines) == load_annotations(root) == [r.annotation for r in records]


def test_missing_dataset_dir_is_reported(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_catalog(tmp_path / "absent")


# ------------------------------------------------------------------- splits
def test_split_counts_small_categories():
    assert split_counts(5) == (3, 1, 1)
    assert split_counts(1) == (0, 0, 1)
    assert split_counts(2) == (1, 0, 1)
    with pytest.raises(ValueError):
        split_counts(0)


def test_empty_catalog_is_an_error():
    with pytest.raises(ValueError, match="empty"):
        make_splits({}, 0)


@settings(max_examples=40, deadline=None)
@given(cats=st.lists(st.integers(1, 54), min_size=1, max_size=200), seed=st.integers(0, 1000))
def test_splits_partition_the_catalog_deterministically(cats, seed):
    catalog = {f"v{i:04d}": c for i, c in enumerate(cats)}
    s = make_splits(catalog, seed)
    assert s == make_splits(catalog, seed)
    parts = [set(s.train), set(s.val), set(s.test)]
    assert not (parts[0] & parts[1] or parts[0] & parts[2] or parts[1] & parts[2])
    assert set().union(*parts) == set(catalog)
    for c in set(cats):
        members = {v for v, k in catalog.items() if k == c}
        got = tuple(len(members & p) for p in parts)
        assert got == split_counts(len(members))


# ------------------------------------------------------------------- clips
def test_clip_indices_pad_with_frame_zero():
    assert clip_indices(0, 5) == [0, 0, 0, 0, 0]
    assert clip_indices(7, 5) == [3, 4, 5, 6, 7]
    assert clip_indices(2, 5) == [0, 0, 0, 1, 2]


def test_sample_clip_contents(small_synth):
    _, records = small_synth
    v = records[0]
    first = sample_clip(v, 0)
    assert first.rgb.shape == (3, 5, 64, 64) and first.semantic.shape == (1, 5, 64, 64)
    for t in range(1, 5):
        np.testing.assert_array_equal(first.rgb[:, t], first.rgb[:, 0])
    c = sample_clip(v, 7)
    assert c.frame_indices == (3, 4, 5, 6, 7)
    assert c.label_path == str(v.attention_paths[7])
    with pytest.raises(IndexError):
        sample_clip(v, v.num_frames)
    with pytest.raises(IndexError):
        sample_clip(v, -1)


def test_clip_dataset_enumerates_every_frame(small_synth):
    _, records = small_synth
    ds = ClipDataset(records[:2], length=3)
    assert len(ds) == 32
    assert (ds[17].video_id, ds[17].frame) == (records[1].video_id, 1)
