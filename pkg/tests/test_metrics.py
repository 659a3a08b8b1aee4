"""Metric self-tests: recall, precision, entity accuracy, BLEU, FP triage."""

import math

import numpy as np
import pytest

from nebias.corpus import NamedEntity, Utterance
from nebias.detector import DetectionResult
from nebias.metrics import (
    avg_retrieved,
    categorize_false_positive,
    corpus_bleu,
    entity_accuracy,
    precision_nested_excluded,
    recall_by_category,
)


def utt(uid, tokens, gold=(), phonemes=(), target=()):
    return Utterance(uid, list(tokens), list(phonemes), np.zeros((1, 2)),
                     list(target), list(gold), [0])


def det(ne_id, p=0.9, detected=True):
    return DetectionResult(ne_id, p, detected)


NES = {
    "g1": NamedEntity("g1", "Lisbon", [1, 2, 3], "Lisboa", "GPE"),
    "g2": NamedEntity("g2", "Porto", [4, 5], "Oporto", "GPE"),
    "p1": NamedEntity("p1", "Maro Koli", [6, 7, 8, 9], "Maro Koli", "PER"),
    "l1": NamedEntity("l1", "Treaty of Lisbon", [10, 1, 2, 3], "Tratado Lisboa", "LOC"),
}


class TestRecallAndRetrieved:
    def test_partial_recall(self):
        utts = [
            utt("u1", ["Maro", "Koli"], gold=[("p1", 0, 2)]),
            utt("u2", ["Maro", "Koli"], gold=[("p1", 0, 2)]),
            utt("u3", ["Maro", "Koli"], gold=[("p1", 0, 2)]),
        ]
        dets = {"u1": [det("p1")], "u2": [det("p1")], "u3": [det("p1", detected=False)]}
        recall = recall_by_category(dets, utts, NES)
        assert recall == {"PER": pytest.approx(2 / 3)}

    def test_detect_everything_degenerate(self):
        utts = [utt("u1", ["Lisbon"], gold=[("g1", 0, 1)])]
        dets = {"u1": [det(n) for n in NES]}
        recall = recall_by_category(dets, utts, NES)
        assert recall["GPE"] == 1.0
        assert avg_retrieved(dets) == len(NES)

    def test_no_detections(self):
        utts = [utt("u1", ["Lisbon"], gold=[("g1", 0, 1)])]
        dets = {"u1": []}
        assert recall_by_category(dets, utts, NES) == {"GPE": 0.0}
        assert avg_retrieved(dets) == 0.0

    def test_empty_gold_category_absent(self):
        utts = [utt("u1", ["Lisbon"], gold=[("g1", 0, 1)])]
        recall = recall_by_category({"u1": [det("g1")]}, utts, NES)
        assert "PER" not in recall

    def test_reorder_invariance(self):
        utts = [
            utt("u1", ["Lisbon"], gold=[("g1", 0, 1)]),
            utt("u2", ["Porto"], gold=[("g2", 0, 1)]),
        ]
        dets = {"u1": [det("g1")], "u2": [det("g2", detected=False)]}
        a = recall_by_category(dets, utts, NES)
        b = recall_by_category(dets, list(reversed(utts)), NES)
        assert a == b


class TestPrecisionNestedExcluded:
    def test_all_gold_is_one(self):
        utts = [utt("u1", ["Lisbon"], gold=[("g1", 0, 1)])]
        assert precision_nested_excluded({"u1": [det("g1")]}, utts, NES) == 1.0

    def test_nested_detection_excluded(self):
        # transcript has the longer gold NE; detecting the inner one is
        # neither a TP nor an FP
        utts = [utt("u1", ["Treaty", "of", "Lisbon"], gold=[("l1", 0, 3)])]
        dets = {"u1": [det("l1"), det("g1")]}
        assert precision_nested_excluded(dets, utts, NES) == 1.0

    def test_half_precision(self):
        utts = [utt("u1", ["Lisbon"], gold=[("g1", 0, 1)])]
        dets = {"u1": [det("g1"), det("g2")]}
        assert precision_nested_excluded(dets, utts, NES) == 0.5

    def test_not_below_naive_precision(self):
        utts = [utt("u1", ["Treaty", "of", "Lisbon"], gold=[("l1", 0, 3)])]
        dets = {"u1": [det("l1"), det("g1"), det("g2")]}
        excluded = precision_nested_excluded(dets, utts, NES)
        tp, fp = 1, 2  # naive: every non-gold detection is an FP
        assert excluded >= tp / (tp + fp)


class TestEntityAccuracy:
    def test_containment_correct(self):
        utts = [utt("u1", ["Lisbon"], gold=[("g1", 0, 1)])]
        acc = entity_accuracy({"u1": ["x", "Lisboa", "y"]}, utts, NES)
        assert acc == {"GPE": 1.0}

    def test_case_sensitive(self):
        utts = [utt("u1", ["Lisbon"], gold=[("g1", 0, 1)])]
        acc = entity_accuracy({"u1": ["lisboa"]}, utts, NES)
        assert acc == {"GPE": 0.0}

    def test_multi_token_form_must_be_contiguous(self):
        utts = [utt("u1", ["Maro", "Koli"], gold=[("p1", 0, 2)])]
        assert entity_accuracy({"u1": ["Maro", "x", "Koli"]}, utts, NES) == {"PER": 0.0}
        assert entity_accuracy({"u1": ["Maro", "Koli"]}, utts, NES) == {"PER": 1.0}

    def test_identity_hypotheses_give_one(self):
        utts = [
            utt("u1", ["Lisbon"], gold=[("g1", 0, 1)], target=["<GPE>", "Lisboa", "</GPE>"]),
            utt("u2", ["Maro", "Koli"], gold=[("p1", 0, 2)], target=["<PER>", "Maro", "Koli", "</PER>"]),
        ]
        hyps = {u.id: list(u.target_tokens) for u in utts}
        acc = entity_accuracy(hyps, utts, NES)
        assert acc == {"GPE": 1.0, "PER": 1.0}


class TestCorpusBleu:
    def test_identity_is_100(self):
        refs = [["a", "b", "c", "d", "e"], ["x", "y", "z", "w"]]
        assert corpus_bleu(refs, refs) == pytest.approx(100.0)

    def test_disjoint_is_near_zero(self):
        # smoothing keeps this positive; it decays toward 0 with length
        hyp = [[f"a{i}" for i in range(25)] for _ in range(4)]
        ref = [[f"b{i}" for i in range(25)] for _ in range(4)]
        assert corpus_bleu(hyp, ref) < 1.0

    def test_hand_computed_fixture(self):
        # worksheet: p1=8/10, p2=5/8, p3=3/6, p4=1/4 -> geometric mean 0.5
        # hyp_len=10, ref_len=11 -> brevity penalty exp(1 - 11/10)
        hyps = [["the", "cat", "sat", "on", "the", "mat"], ["a", "quick", "brown", "fox"]]
        refs = [["the", "cat", "sat", "on", "a", "mat"], ["the", "quick", "brown", "fox", "jumps"]]
        expected = 100.0 * math.exp(1.0 - 11.0 / 10.0) * 0.5
        assert corpus_bleu(hyps, refs) == pytest.approx(expected, abs=1e-6)
        assert corpus_bleu(hyps, refs) == pytest.approx(45.241870901797974, abs=1e-6)

    def test_zero_count_smoothing(self):
        # 1-gram: 1/2; 2-gram zero-count -> 1/(2*1); orders 3,4 degenerate
        hyp = [["a", "b"]]
        ref = [["a", "c"]]
        expected = 100.0 * math.exp(
            (math.log(0.5) + math.log(1 / 2) + math.log(1 / 4) + math.log(1 / 8)) / 4
        )
        assert corpus_bleu(hyp, ref) == pytest.approx(expected, abs=1e-9)

    def test_empty_corpus_errors(self):
        with pytest.raises(ValueError):
            corpus_bleu([], [])
        with pytest.raises(ValueError):
            corpus_bleu([["a"]], [])

    def test_bounds(self):
        hyp = [["a", "b", "c", "e", "f", "g"]]
        ref = [["a", "b", "c", "d", "e", "f"]]
        assert 0.0 <= corpus_bleu(hyp, ref) <= 100.0


class TestFalsePositiveTriage:
    def test_partial_match(self):
        # dictionary "Fisheries Committee" against a transcript containing
        # "Budget Committee": shared suffix token fires the partial rule
        ne = NamedEntity("o1", "Fisheries Committee", [1, 2, 3, 4], "FC", "ORG")
        u = utt("u1", ["the", "Budget", "Committee", "met"], phonemes=[9, 9, 3, 4, 9])
        assert categorize_false_positive(ne, u) == "partial_match"

    def test_acronym(self):
        ne = NamedEntity("o2", "US", [5], "US", "ORG", acronym=True)
        u = utt("u1", ["they", "told", "us", "so"], phonemes=[5, 6, 7])
        assert categorize_false_positive(ne, u) == "acronym"

    def test_similar_phonetic(self):
        ne = NamedEntity("g9", "Presidan", [1, 2, 3, 4, 5], "P", "GPE")
        u = utt("u1", ["presidency", "stuff"], phonemes=[1, 2, 3, 4, 9, 8])
        assert categorize_false_positive(ne, u) == "similar_phonetic"

    def test_other_when_nothing_fires(self):
        ne = NamedEntity("g8", "Zuk", [1, 2, 3], "Z", "GPE")
        u = utt("u1", ["totally", "different"], phonemes=[7, 8, 9, 10])
        assert categorize_false_positive(ne, u) == "other"

    def test_different_form_all_tokens_noncontiguous(self):
        ne = NamedEntity("o3", "Malaysia Government", [1, 2, 3, 4], "MG", "ORG")
        u = utt("u1", ["Government", "of", "Malaysia"], phonemes=[3, 4, 9, 1, 2])
        assert categorize_false_positive(ne, u) == "different_form_or_partial"
