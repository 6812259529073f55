import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from signspot.core import LabeledSegment, ScoredSegment, TimeSegment, ValidationError
from signspot.match import (MatchConfig, TripletTerm, build_positive_set, cosine_distance, recognizer_baseline_score,
                            retrieval_eval, score_clip, score_matrix, search_eval, semi_hard_negatives, total_loss,
                            triplet_loss)


def seg(a, b):
    return TimeSegment(a, b)


def test_cosine_distance():
    a = np.array([1.0, 2.0])
    assert cosine_distance(a, a) == pytest.approx(0.0)
    assert cosine_distance(a, -a) == pytest.approx(2.0)
    assert cosine_distance([1, 0], [0, 1]) == 1.0
    with pytest.raises(ValidationError):
        cosine_distance([0, 0], [1, 0])


def test_positive_set_examples():
    gts = [LabeledSegment(seg(10, 20), "smith")]
    exact = [seg(10, 20)]
    for thr in (0.99, 1.0):
        out = build_positive_set(gts, exact, MatchConfig(iou_threshold=thr))
        assert out == gts  # the exact copy is the gt itself
    assert build_positive_set(gts, [], MatchConfig()) == gts
    assert build_positive_set(gts, [seg(30, 40)], MatchConfig(iou_threshold=0.0)) == gts
    loose = build_positive_set(gts, [seg(11, 20), seg(10, 19)], MatchConfig(iou_threshold=0.5, num_sampled=5))
    assert [p.segment for p in loose] == [seg(10, 20), seg(10, 19), seg(11, 20)]
    assert all(p.transcript == "smith" for p in loose)


def test_positive_set_sampling_is_seeded():
    gts = [LabeledSegment(seg(0, 100), "w")]
    props = [seg(s, 100) for s in range(1, 10)]
    cfg = MatchConfig(iou_threshold=0.5, num_sampled=3)
    a = build_positive_set(gts, props, cfg, rng_seed=4)
    assert a == build_positive_set(gts, props, cfg, rng_seed=4)
    assert len(a) == 4


def brute_semi_hard(anchor, pos, words, segs, limit):
    d = cosine_distance(anchor, pos)
    w = sorted((cosine_distance(anchor, x), i) for i, x in enumerate(words))
    v = sorted((cosine_distance(x, pos), i) for i, x in enumerate(segs))
    return [i for dist, i in w if dist > d][:limit], [i for dist, i in v if dist > d][:limit]


def test_semi_hard_examples():
    anchor, pos = np.array([1.0, 0.0]), np.array([1.0, 0.1])
    far = [np.array([0.0, 1.0]), np.array([-1.0, 0.0]), np.array([1.0, 1.0])]
    assert semi_hard_negatives(anchor, pos, far, far, limit=2) == ([2, 0], [2, 0])
    near = [np.array([1.0, 0.0]), np.array([2.0, 0.0])]
    assert semi_hard_negatives(anchor, pos, near, [pos], limit=5) == ([], [])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 6))
def test_semi_hard_matches_brute_force(seed, limit):
    rng = np.random.default_rng(seed)
    anchor, pos = rng.normal(size=4), rng.normal(size=4)
    words = [rng.normal(size=4) for _ in range(4)]
    segs = [rng.normal(size=4) for _ in range(4)]
    assert semi_hard_negatives(anchor, pos, words, segs, limit) == brute_semi_hard(anchor, pos, words, segs, limit)


def test_triplet_loss_cases():
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    # d(pos) = 0 and negatives at distance 1 >= margin
    assert triplet_loss([TripletTerm(e1, e1, (e2,), (e2,))], margin=0.45) == 0.0
    # d(pos) = d(neg): each hinge contributes the margin
    assert triplet_loss([TripletTerm(e1, e2, (e2 * 3,), ())], margin=0.45) == pytest.approx(0.45)
    assert triplet_loss([TripletTerm(e1, e2, (-e1,), ())], 0.45) == 0.0
    same = TripletTerm(e1, e2, (e2,), (e1,))
    assert triplet_loss([same], 0.45) == pytest.approx(0.9)
    assert triplet_loss([TripletTerm(e1, e2)], 0.45) == 0.0
    assert total_loss(2.0, 0.5, 0.1) == pytest.approx(0.7)


def test_score_clip_examples():
    word = np.array([1.0, 0.0])
    assert score_clip(word, [(ScoredSegment(seg(0, 1), 1.0), word)]) == (1.0, 0)
    zero = score_clip(word, [(ScoredSegment(seg(0, 1), 0.0), word), (ScoredSegment(seg(1, 2), 0.2), -word)])
    assert zero == (0.0, 0)
    emb = np.array([0.8, 0.6])  # cosine distance 0.2
    assert score_clip(word, [(ScoredSegment(seg(0, 1), 0.5), emb)], beta=1.0)[0] == pytest.approx(0.4)
    with pytest.raises(ValidationError):
        score_clip(word, [])


def test_recognizer_baseline():
    assert recognizer_baseline_score(["a<x>cat"], "cat") == 1.0
    assert recognizer_baseline_score(["xyz"], "cat") == 0.0
    assert recognizer_baseline_score(["dog<x>cut", "cost"], "cat") == pytest.approx(1 - 1 / 3)


def test_retrieval_eval_identity_scores():
    rel = {("v1", "a"), ("v2", "b"), ("v3", "a")}
    videos, words = ["v1", "v2", "v3"], ["a", "b"]
    scores = np.array([[1.0 if (v, w) in rel else 0.0 for w in words] for v in videos])
    for mode in ("fws", "fvs"):
        r = search_eval(scores, videos, words, rel, mode)
        assert r.mean_ap == 1.0 and r.mean_f1 == 1.0


def test_retrieval_constant_scores_use_id_order():
    r = retrieval_eval(np.zeros((1, 3)), ["q"], ["c", "a", "b"], {("q", "b")})
    # ranking a, b, c puts the relevant item second
    assert r.mean_ap == 0.5


def test_retrieval_two_by_two():
    scores = np.array([[0.2, 0.9], [0.7, 0.1]])
    rel = {("q1", "x"), ("q2", "x")}
    r = retrieval_eval(scores, ["q1", "q2"], ["x", "y"], rel, top_n=(1,))
    assert [q.ap for q in r.per_query] == [0.5, 1.0]
    assert r.mean_ap == 0.75
    assert r.mean_precision_at[1] == 0.5 and r.mean_recall_at[1] == 0.5


def test_retrieval_skips_queries_without_relevant_items():
    r = retrieval_eval(np.ones((2, 1)), ["q1", "q2"], ["x"], {("q1", "x")})
    assert r.per_query[1].ap is None and r.mean_ap == 1.0


def test_score_matrix_limits_proposals():
    w = {"a": np.array([1.0, 0.0])}
    props = {"v": [(ScoredSegment(seg(0, 1), 0.9), np.array([0.0, 1.0])),
                   (ScoredSegment(seg(1, 2), 0.5), np.array([1.0, 0.0]))]}
    assert score_matrix(props, w, max_proposals=1)[2][0, 0] == pytest.approx(0.0)
    assert score_matrix(props, w, max_proposals=2)[2][0, 0] == pytest.approx(0.5)
