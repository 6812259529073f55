import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import edit_distance as ed_oracle
from signspot.core import (NOLETTER, Alphabet, Box2D, LabeledSegment, ScoredSegment, TimeSegment, ValidationError,
                           box_iou, edit_distance, letter_accuracy, normalized_edit_distance, temporal_iou,
                           temporal_is)


def seg(a, b):
    return TimeSegment(a, b)


def test_alphabet_default_layout():
    a = Alphabet(("a", "b"))
    assert a.symbols == ("a", "b", None)
    assert a.blank_index == 2 and a.num_labels == 3


def test_alphabet_reserved_columns():
    a = Alphabet(("a", "b"), blank_index=0, noletter_index=3)
    assert a.symbols == (None, "a", "b", NOLETTER)
    assert a.index("b") == 2
    with pytest.raises(ValidationError):
        a.index("z")


@pytest.mark.parametrize("kwargs", [
    dict(letters=("a", "a")),
    dict(letters=("a",), blank_index=5),
    dict(letters=("a",), blank_index=1, noletter_index=1),
    dict(letters=(NOLETTER,)),
])
def test_alphabet_rejects(kwargs):
    with pytest.raises(ValidationError):
        Alphabet(**kwargs)


def test_segment_validation():
    with pytest.raises(ValidationError):
        seg(3, 3)
    with pytest.raises(ValidationError):
        seg(-1, 2)
    assert TimeSegment.from_inclusive(2, 4) == seg(2, 5)
    with pytest.raises(ValidationError):
        LabeledSegment(seg(0, 1), "")
    with pytest.raises(ValidationError):
        ScoredSegment(seg(0, 1), 1.5)
    with pytest.raises(ValidationError):
        Box2D(0, 0, 0, 1)


def test_temporal_iou_examples():
    assert temporal_iou(seg(0, 4), seg(0, 4)) == 1.0
    assert temporal_iou(seg(0, 2), seg(2, 4)) == 0.0
    assert temporal_iou(seg(0, 4), seg(2, 6)) == pytest.approx(2 / 6)


def test_temporal_is_examples():
    assert temporal_is(seg(0, 10), seg(2, 6)) == 1.0
    assert temporal_is(seg(2, 6), seg(2, 6)) == 1.0
    assert temporal_is(seg(0, 2), seg(5, 6)) == 0.0
    assert temporal_is(seg(2, 6), seg(0, 10)) == pytest.approx(0.4)


def test_box_iou_examples():
    a = Box2D(0, 0, 1, 1)
    assert box_iou(a, a) == 1.0
    assert box_iou(a, Box2D(2, 2, 3, 3)) == 0.0
    assert box_iou(a, Box2D(0.5, 0, 1.5, 1)) == pytest.approx(1 / 3)


def test_edit_distance_examples():
    assert edit_distance("abc", "abc") == 0
    assert edit_distance("", "abc") == 3
    assert edit_distance("kitten", "sitting") == 3
    assert edit_distance(["a", NOLETTER], ["a"]) == 1


def test_letter_accuracy_examples():
    assert letter_accuracy("abc", "abc") == 1.0
    assert letter_accuracy("a", "abcd") == -2.0
    assert letter_accuracy("ab", "") == 0.0
    with pytest.raises(ValidationError):
        letter_accuracy("", "a")


def test_normalized_edit_distance():
    assert normalized_edit_distance("smith", "smit") == pytest.approx(0.2)
    assert normalized_edit_distance("", "") == 0.0


short = st.text(alphabet="abc", max_size=6)
intervals = st.tuples(st.integers(0, 20), st.integers(1, 10)).map(lambda p: seg(p[0], p[0] + p[1]))


@given(short, short)
def test_edit_distance_matches_recursion(a, b):
    assert edit_distance(a, b) == ed_oracle(a, b)


@given(short, short, short)
def test_edit_distance_is_a_metric(a, b, c):
    assert edit_distance(a, b) == edit_distance(b, a)
    assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)
    assert (edit_distance(a, b) == 0) == (a == b)


@given(intervals, intervals)
def test_iou_bounds_and_symmetry(a, b):
    v = temporal_iou(a, b)
    assert 0.0 <= v <= 1.0
    assert v == temporal_iou(b, a)
    assert (v == 1.0) == (a == b)
    assert 0.0 <= temporal_is(a, b) <= 1.0


@given(short.filter(bool), short)
def test_letter_accuracy_upper_bound(ref, hyp):
    assert letter_accuracy(ref, hyp) <= 1.0
