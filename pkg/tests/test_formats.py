import numpy as np
import pytest

from xidiar.annotation import TimedLabeling, Turn
from xidiar.domain import Layer, MlpModel
from xidiar.errors import FormatError
from xidiar.formats import (
    format_rttm,
    format_segments,
    format_uem,
    matrix_to_bytes,
    parse_rttm,
    parse_segments,
    parse_uem,
    read_matrix,
    read_mlp,
    read_sad,
    read_track,
    write_matrix,
    write_mlp,
    write_track,
)
from xidiar.segmentation import ChangeScoreTrack, Segment, SegmentList


def test_rttm_line_exact():
    lab = TimedLabeling("conv1", [(1.23456, 2.0, "spk00")])
    assert format_rttm(lab) == "SPEAKER conv1 1 1.235 2.000 <NA> <NA> spk00 <NA> <NA>\n"


def test_rttm_round_trip():
    lab = TimedLabeling("c", [(0, 1.5, "A"), (1.2, 0.25, "B")])
    back = parse_rttm(format_rttm(lab))["c"]
    assert back.turns == lab.turns


def test_rttm_short_line():
    with pytest.raises(FormatError):
        parse_rttm("SPEAKER c 1 0.0 1.0\n")


def test_uem_round_trip():
    uems = {"a": [(0.0, 10.5)], "b": [(1.0, 2.0), (3.0, 4.0)]}
    assert format_uem(uems) == "a 1 0.000 10.500\nb 1 1.000 2.000\nb 1 3.000 4.000\n"
    assert parse_uem(format_uem(uems)) == uems
    with pytest.raises(FormatError):
        parse_uem("a 1 0.0\n")


def test_read_sad_both_forms(tmp_path):
    (tmp_path / "x.sad.lab").write_text("0.0 1.5 speech\n2.0 3.0\n")
    assert read_sad(tmp_path / "x.sad.lab").speech() == [(0, 1.5), (2, 3)]
    (tmp_path / "y.rttm").write_text(format_rttm(TimedLabeling("y", [(0, 1, "A"), (0.5, 1, "B")])))
    assert read_sad(tmp_path / "y.rttm").speech() == [(0, 1.5)]


def test_matrix_binary_layout(tmp_path):
    m = np.array([[1.0, -2.5], [3.0, 4.0], [0.0, 1e-300]])
    data = matrix_to_bytes(m)
    assert data[:6] == b"XIMAT\x00"
    assert int.from_bytes(data[6:8], "little") == 1
    assert int.from_bytes(data[8:16], "little") == 3
    assert int.from_bytes(data[16:24], "little") == 2
    assert len(data) == 24 + 6 * 8
    write_matrix(tmp_path / "m.bin", m)
    np.testing.assert_array_equal(read_matrix(tmp_path / "m.bin"), m)


def test_matrix_text_round_trip(tmp_path, rng):
    m = rng.normal(size=(4, 3))
    write_matrix(tmp_path / "m.txt", m, text=True)
    assert (tmp_path / "m.txt").read_text().startswith("XIMAT 1 4 3\n")
    np.testing.assert_array_equal(read_matrix(tmp_path / "m.txt"), m)


def test_matrix_errors(tmp_path):
    (tmp_path / "bad").write_bytes(b"hello")
    with pytest.raises(FormatError):
        read_matrix(tmp_path / "bad")
    (tmp_path / "short").write_bytes(matrix_to_bytes(np.ones((2, 2)))[:-3])
    with pytest.raises(FormatError):
        read_matrix(tmp_path / "short")
    (tmp_path / "rows").write_text("XIMAT 1 2 2\n1 2\n")
    with pytest.raises(FormatError):
        read_matrix(tmp_path / "rows")


def test_track_round_trip(tmp_path):
    tr = ChangeScoreTrack(np.array([0.1, 0.9, 0.2]), 0.01, 1.0)
    write_track(tmp_path / "t", tr)
    back = read_track(tmp_path / "t")
    np.testing.assert_array_equal(back.scores, tr.scores)
    assert back.step == pytest.approx(0.01) and back.offset == 1.0


def test_track_needs_uniform_times(tmp_path):
    write_matrix(tmp_path / "t", np.array([[0, 0.1], [0.01, 0.2], [0.05, 0.3]]))
    with pytest.raises(FormatError):
        read_track(tmp_path / "t")


def test_segments_round_trip():
    segs = SegmentList("u", [Segment(0.1, 2.0, 0), Segment(1.1, 1.7, 3)])
    back = parse_segments(format_segments(segs), "u")
    np.testing.assert_allclose(back.spans(), segs.spans(), rtol=0, atol=1e-12)
    assert [s.parent for s in back.segments] == [0, 3]


@pytest.mark.parametrize("text", [False, True])
def test_mlp_round_trip(tmp_path, rng, text):
    model = MlpModel(
        (Layer(rng.normal(size=(4, 3)), rng.normal(size=4), "tanh"), Layer(rng.normal(size=(2, 4)), rng.normal(size=2), "softmax")),
        {"classes": ["a", "b"]},
    )
    write_mlp(tmp_path / "m", model, text=text)
    back = read_mlp(tmp_path / "m")
    assert back.metadata == model.metadata
    for a, b in zip(back.layers, model.layers):
        np.testing.assert_array_equal(a.weight, b.weight)
        np.testing.assert_array_equal(a.bias, b.bias)
        assert a.activation is b.activation


def test_mlp_garbage(tmp_path):
    (tmp_path / "m").write_bytes(b"\xff\xfe")
    with pytest.raises(FormatError):
        read_mlp(tmp_path / "m")


def test_touching_turns_stay_touching_after_rounding():
    lab = TimedLabeling("u", [Turn(59.1174, 0.3004, "a"), Turn(59.4178, 0.0031, "b"), Turn(59.4209, 0.0002, "c")])
    back = parse_rttm(format_rttm(lab))["u"]
    turns = sorted(back.turns, key=lambda t: t.onset)
    assert [t.label for t in turns] == ["a", "b"]
    assert turns[0].end == pytest.approx(turns[1].onset, abs=1e-12)
