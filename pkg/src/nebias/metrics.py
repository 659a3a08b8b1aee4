"""Detection and translation metrics: recall, selectivity, precision with
nested-entity exclusion, case-sensitive entity accuracy, corpus BLEU, and
heuristic false-positive triage."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .corpus import NamedEntity, Utterance, is_contiguous_subsequence

__all__ = [
    "DetectionReport",
    "TranslationReport",
    "recall_by_category",
    "avg_retrieved",
    "precision_nested_excluded",
    "entity_accuracy",
    "corpus_bleu",
    "categorize_false_positive",
    "detection_report",
    "translation_report",
    "FP_CATEGORIES",
]

RECALL_CATEGORIES = ("GPE", "LOC", "PER")
FP_CATEGORIES = ("partial_match", "similar_phonetic", "acronym", "different_form_or_partial", "other")


@dataclass
class DetectionReport:
    recall: dict  # category -> recall over gold mentions (absent if no gold)
    avg_retrieved: float
    precision: float  # nested-excluded
    threshold: float

    def macro_recall(self) -> float:
        vals = [v for v in self.recall.values() if v is not None]
        return sum(vals) / len(vals) if vals else 0.0


@dataclass
class TranslationReport:
    bleu: float
    accuracy: dict  # category -> case-sensitive entity accuracy
    macro_accuracy: float


def _detected_ids(detections) -> set:
    return {d.ne_id for d in detections if d.detected}


def recall_by_category(detections_by_utt: dict, utterances, ne_by_id) -> dict:
    """Recall per category over gold mentions; categories without gold are absent."""
    hit = Counter()
    total = Counter()
    for utt in utterances:
        detected = _detected_ids(detections_by_utt.get(utt.id, []))
        for ne_id, _, _ in utt.gold_entities:
            cat = ne_by_id[ne_id].category
            total[cat] += 1
            hit[cat] += ne_id in detected
    return {cat: hit[cat] / total[cat] for cat in total}


def avg_retrieved(detections_by_utt: dict) -> float:
    if not detections_by_utt:
        return 0.0
    counts = [len(_detected_ids(dets)) for dets in detections_by_utt.values()]
    return sum(counts) / len(counts)


def precision_nested_excluded(detections_by_utt: dict, utterances, ne_by_id) -> float:
    """TP / (TP + FP) where detections whose surface occurs verbatim in the
    transcript are excluded from the false positives (nested-NE convention)."""
    tp = fp = 0
    for utt in utterances:
        gold = set(utt.gold_ne_ids())
        for ne_id in _detected_ids(detections_by_utt.get(utt.id, [])):
            if ne_id in gold:
                tp += 1
            elif not is_contiguous_subsequence(ne_by_id[ne_id].source_tokens, utt.transcript_tokens):
                fp += 1
    return tp / (tp + fp) if tp + fp else 0.0


def entity_accuracy(hypotheses: dict, utterances, ne_by_id) -> dict:
    """Case-sensitive containment: a gold NE counts as correct iff its exact
    target-form token sequence appears contiguously in the hypothesis."""
    hit = Counter()
    total = Counter()
    for utt in utterances:
        hyp = hypotheses.get(utt.id, [])
        for ne_id, _, _ in utt.gold_entities:
            ne = ne_by_id[ne_id]
            total[ne.category] += 1
            hit[ne.category] += is_contiguous_subsequence(ne.target_tokens, hyp)
    return {cat: hit[cat] / total[cat] for cat in total}


def _macro(accuracy: dict) -> float:
    vals = [accuracy[c] for c in RECALL_CATEGORIES if c in accuracy]
    return sum(vals) / len(vals) if vals else 0.0


def corpus_bleu(hypotheses, references, max_order: int = 4) -> float:
    """Corpus BLEU with exponential smoothing of zero n-gram counts.

    Tokenized inputs (lists of token lists). Smoothing halves the effective
    numerator again for each zero-count order encountered (smooth:exp).
    """
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise ValueError("empty corpus")
    correct = [0] * max_order
    total = [0] * max_order
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp, ref = list(hyp), list(ref)
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, max_order + 1):
            hyp_ngrams = Counter(tuple(hyp[i:i + n]) for i in range(len(hyp) - n + 1))
            ref_ngrams = Counter(tuple(ref[i:i + n]) for i in range(len(ref) - n + 1))
            overlap = sum(min(c, ref_ngrams[g]) for g, c in hyp_ngrams.items())
            correct[n - 1] += overlap
            total[n - 1] += max(0, len(hyp) - n + 1)
    smooth = 1.0
    log_precisions = []
    for n in range(max_order):
        if total[n] == 0:
            # all hypotheses shorter than n: treat as the smoothed floor
            smooth *= 2.0
            log_precisions.append(math.log(1.0 / smooth))
            continue
        if correct[n] == 0:
            smooth *= 2.0
            p = 1.0 / (smooth * total[n])
        else:
            p = correct[n] / total[n]
        log_precisions.append(math.log(p))
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / max(1, hyp_len))
    return 100.0 * bp * math.exp(sum(log_precisions) / max_order)


def categorize_false_positive(fp_ne: NamedEntity, utterance: Utterance) -> str:
    """Heuristic triage of a confirmed false positive.

    Order: acronym flag first (their phonetic collapse would otherwise be
    caught by the edit-distance rule), then token overlap (all tokens present
    non-contiguously vs. partial overlap), then phonetic similarity; anything
    needing human judgement maps to "other".
    """
    if fp_ne.acronym or (fp_ne.source_surface.isupper() and len(fp_ne.source_surface) <= 4):
        return "acronym"
    ne_tokens = fp_ne.source_tokens
    transcript = set(utterance.transcript_tokens)
    present = sum(1 for t in ne_tokens if t in transcript)
    if present == len(ne_tokens) and len(ne_tokens) > 0:
        return "different_form_or_partial"
    if present > 0:
        return "partial_match"
    if _min_span_edit_ratio(fp_ne.phonemes, utterance.transcript_phonemes) < 0.4:
        return "similar_phonetic"
    return "other"


def _edit_distance(a, b) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def _min_span_edit_ratio(ne_phonemes, transcript_phonemes) -> float:
    """Min edit distance ratio between NE phonemes and same-length transcript spans."""
    n = len(ne_phonemes)
    if n == 0 or len(transcript_phonemes) == 0:
        return 1.0
    best = n
    lo, hi = max(1, n - 2), n + 2
    for width in range(lo, hi + 1):
        for start in range(0, max(1, len(transcript_phonemes) - width + 1)):
            span = transcript_phonemes[start:start + width]
            if not span:
                continue
            best = min(best, _edit_distance(ne_phonemes, span))
    return best / n


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------


def detection_report(detections_by_utt: dict, utterances, ne_by_id, threshold: float) -> DetectionReport:
    recall = recall_by_category(detections_by_utt, utterances, ne_by_id)
    return DetectionReport(
        recall={c: recall.get(c) for c in RECALL_CATEGORIES if c in recall},
        avg_retrieved=avg_retrieved(detections_by_utt),
        precision=precision_nested_excluded(detections_by_utt, utterances, ne_by_id),
        threshold=threshold,
    )


def translation_report(hypotheses: dict, utterances, ne_by_id) -> TranslationReport:
    refs = [u.target_tokens for u in utterances]
    hyps = [hypotheses.get(u.id, []) for u in utterances]
    acc = entity_accuracy(hypotheses, utterances, ne_by_id)
    return TranslationReport(
        bleu=corpus_bleu(hyps, refs),
        accuracy=acc,
        macro_accuracy=_macro(acc),
    )
