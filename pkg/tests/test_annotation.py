import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from xidiar.annotation import (
    TimedLabeling,
    Turn,
    intersect_intervals,
    merge_intervals,
    total_duration,
    turns_from_frame_labels,
)
from xidiar.errors import ConfigError


def test_merge_touching_and_overlapping():
    assert merge_intervals([(5, 7), (0, 5), (6, 8), (10, 11)]) == [(0, 8), (10, 11)]


def test_intersect():
    assert intersect_intervals([(0, 4), (6, 10)], [(3, 7)]) == [(3, 4), (6, 7)]
    assert intersect_intervals([(0, 1)], [(1, 2)]) == []


def test_total_duration():
    assert total_duration([(0, 1.5), (2, 3)]) == 2.5


@pytest.mark.parametrize("turn", [(-1, 1, "a"), (0, 0, "a"), (0, -2, "a"), (float("nan"), 1, "a")])
def test_rejects_bad_turns(turn):
    with pytest.raises(ConfigError):
        TimedLabeling("u", [turn])


def test_turns_sorted_and_labels():
    lab = TimedLabeling("u", [(3, 1, "B"), (0, 2, "A")])
    assert [t.label for t in lab] == ["A", "B"]
    assert lab.labels == ["A", "B"]
    assert lab.extent == (0, 4)


def test_speech_ignores_nonspeech_labels():
    lab = TimedLabeling("u", [(0, 1, "speech"), (1, 1, "SIL"), (2, 1, "x")])
    assert lab.speech() == [(0, 1), (2, 3)]


def test_crop():
    lab = TimedLabeling("u", [(0, 10, "A")])
    assert lab.crop([(2, 3), (5, 6)]).turns == [Turn(2, 1, "A"), Turn(5, 1, "A")]


@given(
    st.lists(st.integers(0, 2), min_size=1, max_size=60),
    st.lists(st.tuples(st.integers(0, 59), st.integers(1, 30)), min_size=1, max_size=4),
)
def test_frame_labels_tile_regions(labels, raw):
    fs = 0.01
    regions = merge_intervals((s * fs, min(s + d, 60) * fs) for s, d in raw)
    regions = [(s, e) for s, e in regions if e > s]
    out = turns_from_frame_labels("u", regions, np.array(labels), ["a", "b", "c"], fs)
    got = merge_intervals(out.intervals())
    assert len(got) == len(regions)
    np.testing.assert_allclose(np.array(got), np.array(regions), atol=1e-9)
    # turns never overlap each other
    ends = [t.end for t in out.turns]
    starts = [t.onset for t in out.turns]
    assert all(s >= e - 1e-9 for s, e in zip(starts[1:], ends[:-1]))
    assert total_duration((t.onset, t.end) for t in out.turns) == pytest.approx(total_duration(regions))
