"""Fingerspelling detection, recognition, search and sign spotting toolkit."""

from .core import (NOLETTER, Alphabet, Box2D, LabeledSegment, ScoredSegment, TimeSegment, ValidationError,
                   edit_distance, letter_accuracy, normalized_edit_distance, temporal_iou)
from .ctc import BeamConfig, Posteriorgram, beam_decode, greedy_decode, sequence_log_prob
from .lm import NGramModel, perplexity, train_ngram

__version__ = "0.1.0"

__all__ = [
    "NOLETTER", "Alphabet", "Box2D", "LabeledSegment", "ScoredSegment", "TimeSegment", "ValidationError",
    "edit_distance", "letter_accuracy", "normalized_edit_distance", "temporal_iou",
    "BeamConfig", "Posteriorgram", "beam_decode", "greedy_decode", "sequence_log_prob",
    "NGramModel", "perplexity", "train_ngram",
]
