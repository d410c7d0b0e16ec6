"""Detection stream ingest, validation, and windowing."""

import pytest

from projcluster.boxes import BBox, Detection, FrameGeometry
from projcluster.errors import StreamParseError, StreamValidationError
from projcluster.streams import (
    DetectionStream,
    frame_groups,
    load_stream,
    windows,
    write_stream,
)

G = FrameGeometry(858, 480)


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n")


def test_load_basic(tmp_path):
    p = tmp_path / "s.tsv"
    write_lines(p, [
        "# comment line",
        "sess1\t0\t10\t20\t30\t40\t0.9",
        "",
        "sess1\t1\t12\t22\t30\t40\t0.8",
    ])
    s = load_stream(p, G)
    assert s.session_id == "sess1"
    assert len(s) == 2
    assert s.detections[0] == Detection(0, BBox(10, 20, 30, 40), 0.9)
    assert s.duration_s == 2


def test_load_sorts_by_frame(tmp_path):
    p = tmp_path / "s.tsv"
    write_lines(p, [
        "a\t5\t0\t0\t10\t10\t0.9",
        "a\t1\t0\t0\t10\t10\t0.9",
        "a\t3\t0\t0\t10\t10\t0.9",
    ])
    s = load_stream(p, G)
    assert [d.frame_index for d in s.detections] == [1, 3, 5]


def test_load_drops_low_scores(tmp_path):
    p = tmp_path / "s.tsv"
    write_lines(p, [
        "a\t0\t0\t0\t10\t10\t0.49",
        "a\t0\t0\t0\t10\t10\t0.50",
        "a\t0\t0\t0\t10\t10\t0.99",
    ])
    s = load_stream(p, G)
    assert len(s) == 2  # threshold keeps scores >= 0.5


def test_load_clips_boxes(tmp_path):
    p = tmp_path / "s.tsv"
    write_lines(p, [
        "a\t0\t850\t470\t50\t50\t0.9",   # partially outside: clipped
        "a\t0\t2000\t0\t50\t50\t0.9",    # fully outside: dropped
    ])
    s = load_stream(p, G)
    assert len(s) == 1
    assert s.detections[0].box == BBox(850, 470, 8, 10)


def test_load_field_count_error_carries_line(tmp_path):
    p = tmp_path / "s.tsv"
    write_lines(p, [
        "a\t0\t0\t0\t10\t10\t0.9",
        "a\t1\t0\t0\t10",
    ])
    with pytest.raises(StreamParseError) as ei:
        load_stream(p, G)
    assert "line 2" in str(ei.value)
    assert ei.value.line_no == 2


def test_load_bad_number_carries_line(tmp_path):
    p = tmp_path / "s.tsv"
    write_lines(p, ["a\t0\tten\t0\t10\t10\t0.9"])
    with pytest.raises(StreamParseError) as ei:
        load_stream(p, G)
    assert "line 1" in str(ei.value)


@pytest.mark.parametrize("row", [
    "a\t0\t0\t0\t0\t10\t0.9",     # zero width
    "a\t0\t0\t0\t10\t-2\t0.9",    # negative height
    "a\t-1\t0\t0\t10\t10\t0.9",   # negative frame
    "a\t0\t0\t0\t10\t10\t1.5",    # score out of range
])
def test_load_invariant_violations(tmp_path, row):
    p = tmp_path / "s.tsv"
    write_lines(p, [row])
    with pytest.raises(StreamValidationError):
        load_stream(p, G)


def test_load_mixed_sessions_rejected(tmp_path):
    p = tmp_path / "s.tsv"
    write_lines(p, [
        "a\t0\t0\t0\t10\t10\t0.9",
        "b\t1\t0\t0\t10\t10\t0.9",
    ])
    with pytest.raises(StreamValidationError) as ei:
        load_stream(p, G)
    assert "line 2" in str(ei.value)


def test_round_trip(tmp_path):
    p = tmp_path / "s.tsv"
    dets = tuple(
        # scores that survive 6-decimal formatting exactly
        Detection(i, BBox(10 * i, 5, 20, 30), float(f"{0.5 + 0.01 * i:.6f}"))
        for i in range(10)
    )
    s = DetectionStream("rt", G, dets)
    write_stream(s, p)
    back = load_stream(p, G)
    assert back == s
    # a second write is byte-identical
    p2 = tmp_path / "s2.tsv"
    write_stream(back, p2)
    assert p.read_bytes() == p2.read_bytes()


def make_stream(n_seconds, per_second=1):
    dets = []
    for t in range(n_seconds):
        for k in range(per_second):
            dets.append(Detection(t, BBox(10 + k, 10, 20, 20), 0.9))
    return DetectionStream("w", G, tuple(dets))


def test_windows_floor_division():
    assert len(windows(make_stream(24))) == 2
    assert len(windows(make_stream(35))) == 2   # trailing 11 s dropped
    assert len(windows(make_stream(11))) == 0


def test_windows_include_partial():
    w = windows(make_stream(35), include_partial=True)
    assert len(w) == 3
    assert w[2].start_s == 24
    assert len(w[2].frames) == 12  # slots stay fixed; trailing ones empty
    assert all(len(fr) == 0 for fr in w[2].frames[11:])


def test_window_frame_assignment():
    w = windows(make_stream(24, per_second=2))
    assert w[0].index == 0 and w[0].start_s == 0
    assert w[1].index == 1 and w[1].start_s == 12
    assert all(len(fr) == 2 for fr in w[0].frames)
    # detections of second 13 land in window 1, slot 1
    assert all(d.frame_index == 13 for d in w[1].frames[1])


def test_windows_rejects_bad_length():
    with pytest.raises(ValueError):
        windows(make_stream(24), length_s=0)


def test_frame_groups():
    s = make_stream(3, per_second=2)
    groups = frame_groups(s)
    assert sorted(groups) == [0, 1, 2]
    assert all(len(v) == 2 for v in groups.values())
