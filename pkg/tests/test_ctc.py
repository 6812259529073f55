import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import ctc_marginals
from signspot.core import Alphabet, ValidationError
from signspot.ctc import (BeamConfig, Posteriorgram, beam_decode, collapse, greedy_decode, is_feasible, min_frames,
                          sequence_log_prob)
from signspot.lm import sequence_log_prob as lm_logprob
from signspot.lm import train_ngram

AB = Alphabet(("a", "b"))  # columns a, b, blank
A, B, BL = 0, 1, 2


def one_hot(path, alphabet=AB):
    x = np.zeros((len(path), alphabet.num_labels))
    x[np.arange(len(path)), path] = 1.0
    return Posteriorgram(alphabet, x)


def random_pg(rng, T, n_letters):
    alphabet = Alphabet(tuple("abc"[:n_letters]))
    return Posteriorgram(alphabet, rng.dirichlet(np.ones(n_letters + 1), size=T))


@pytest.mark.parametrize("path,expected", [
    ([A, A, BL, A], "aa"),
    ([BL, BL], ""),
    ([A, BL, B, B, BL, B], "abb"),
])
def test_collapse(path, expected):
    assert collapse(path, AB) == expected


def test_min_frames_counts_repeats():
    assert min_frames("ab") == 2
    assert min_frames("aab") == 4
    assert is_feasible("aa", 3) and not is_feasible("aa", 2)


def test_sequence_log_prob_examples():
    assert sequence_log_prob(one_hot([A]), "a") == 0.0
    uniform = Posteriorgram(Alphabet(("a",)), np.full((2, 2), 0.5))
    assert math.exp(sequence_log_prob(uniform, "a")) == pytest.approx(0.75, abs=1e-12)
    assert sequence_log_prob(uniform, "aaa") == -math.inf
    with pytest.raises(ValidationError):
        sequence_log_prob(uniform, "z")


def test_posteriorgram_rejects_bad_rows():
    with pytest.raises(ValidationError, match="frame 1"):
        Posteriorgram(AB, np.array([[1.0, 0, 0], [0.5, 0.5, 0.5]]))
    with pytest.raises(ValidationError):
        Posteriorgram(AB, np.array([[1.1, -0.1, 0]]))


def test_greedy_examples():
    assert greedy_decode(one_hot([A, BL, A]))[0] == "aa"
    assert greedy_decode(one_hot([BL, BL, BL]))[0] == ""


def test_greedy_is_framewise_argmax():
    rng = np.random.default_rng(3)
    pg = Posteriorgram(AB, rng.dirichlet(np.ones(3), size=3))
    text, path = greedy_decode(pg)
    assert list(path) == [int(np.argmax(r)) for r in pg.frames]
    assert text == collapse(path, AB)


def test_beam_on_one_hot_adds_lm_terms():
    lm = train_ngram(["ab", "ba", "aab"], order=2, vocab=("a", "b"))
    hyps = beam_decode(one_hot([A, BL, B]), lm, BeamConfig(beam_width=4, lm_weight=0.7))
    assert [h for h, _ in hyps] == ["ab"]
    assert hyps[0][1] == pytest.approx(0.7 * lm_logprob(lm, "ab"), abs=1e-12)


def test_huge_negative_bias_prefers_empty():
    rng = np.random.default_rng(0)
    pg = random_pg(rng, 4, 2)
    best = beam_decode(pg, cfg=BeamConfig(beam_width=50, insertion_bias=-1e6))[0]
    assert best[0] == ""
    assert best[1] == pytest.approx(sequence_log_prob(pg, ""))


def test_beam_requires_lm_vocabulary():
    lm = train_ngram(["a"], order=2)
    with pytest.raises(ValidationError):
        beam_decode(one_hot([A, B]), lm, BeamConfig(lm_weight=1.0))


def test_beam_output_is_sorted_and_scores_are_ctc_marginals():
    rng = np.random.default_rng(11)
    pg = random_pg(rng, 4, 2)
    hyps = beam_decode(pg, cfg=BeamConfig(beam_width=100))
    assert hyps == sorted(hyps, key=lambda h: (-h[1], h[0]))
    for text, score in hyps:
        assert score == pytest.approx(sequence_log_prob(pg, text), abs=1e-12)


instances = st.tuples(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 3))


@settings(max_examples=60, deadline=None)
@given(instances)
def test_log_prob_matches_enumeration(inst):
    seed, T, n = inst
    pg = random_pg(np.random.default_rng(seed), T, n)
    marg = ctc_marginals(pg.frames, pg.alphabet.blank_index)
    for labels, p in marg.items():
        text = [pg.alphabet.symbol(k) for k in labels]
        assert math.exp(sequence_log_prob(pg, text)) == pytest.approx(p, abs=1e-9)
    assert sum(marg.values()) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=40, deadline=None)
@given(instances)
def test_beam_top_matches_exhaustive(inst):
    seed, T, n = inst
    pg = random_pg(np.random.default_rng(seed), T, n)
    marg = ctc_marginals(pg.frames, pg.alphabet.blank_index)
    best_p = max(marg.values())
    winners = sorted("".join(pg.alphabet.symbol(k) for k in lab) for lab, p in marg.items() if p >= best_p - 1e-12)
    top = beam_decode(pg, cfg=BeamConfig(beam_width=(n + 1) ** T))[0]
    assert top[0] == winners[0]
    assert math.exp(top[1]) == pytest.approx(best_p, abs=1e-9)
