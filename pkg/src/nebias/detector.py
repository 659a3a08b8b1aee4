"""Cross-modal NE detector: does this dictionary entry occur in this utterance?

The detector head is a 3-layer transformer over the concatenation
[CLS, NE-text encodings (+TXT), SEP, speech encodings (+SPC)]; the CLS output
feeds a sigmoid. Speech-to-speech attention is windowed to 2x the NE phoneme
count; text and special positions are never masked. Training samples one
positive and one negative span per utterance, mixing gold NEs with random
word spans, and adds a margin ranking term to the BCE loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .corpus import Corpus, NamedEntity, Utterance, is_contiguous_subsequence
from .encoder import EncoderConfig, JointModel, SharedEncoder
from .numerics import (
    Adam,
    LayerNorm,
    Linear,
    NonFiniteError,
    ParameterSet,
    Tensor,
    TransformerEncoderLayer,
    bce_with_logits,
    concat,
    stack,
)
from . import store

__all__ = [
    "DetectorConfig",
    "DetectorModel",
    "DetectionResult",
    "TrainingPair",
    "SampleSpan",
    "build_input",
    "build_attention_mask",
    "score",
    "detect",
    "score_dictionary",
    "sample_training_pair",
    "train_detector",
    "cosine_baseline_scores",
    "cosine_baseline_detect",
    "speech_span_mask",
    "encode_dictionary",
    "save_detector",
    "load_detector",
]

DEFAULT_THRESHOLD = 0.86


@dataclass
class DetectorConfig:
    d_model: int = 64
    heads: int = 4
    d_ff: int = 128
    threshold: float = DEFAULT_THRESHOLD
    window_mult: int = 2
    # ablation toggles, one per studied component
    use_attention_mask: bool = True
    use_modality_embeddings: bool = True
    train_on_ne: bool = True
    ne_prob: float = 0.8
    max_words: int = 5
    margin: float = 0.2
    margin_weight: float = 1.0
    layerdrop_p: float = 0.1
    layerdrop_passes: int = 4
    head_layerdrop_p: float = 0.0  # optional LayerDrop inside the detector head
    speech_mask_fraction: float = 0.0  # off by default; harmful with LayerDrop
    # optimization
    epochs: int = 3
    lr: float = 1e-3
    batch_size: int = 8
    negative_retries: int = 30
    seed: int = 0

N_LAYERS = 3  # fixed three-layer head


@dataclass
class DetectionResult:
    ne_id: str
    probability: float
    detected: bool


@dataclass
class SampleSpan:
    phonemes: list
    provenance: str  # "ne" | "random-words"
    tokens: list


@dataclass
class TrainingPair:
    utterance_id: str
    positive: SampleSpan
    negative: SampleSpan


class DetectorModel:
    """Three transformer layers over [CLS, text+TXT, SEP, speech+SPC] -> sigmoid."""

    def __init__(self, cfg: DetectorConfig, seed: int = 0):
        self.cfg = cfg
        self.params = ParameterSet()
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xD0]))
        d = cfg.d_model
        self.cls = self.params.add("detector.cls", rng.normal(0.0, 0.5, (1, d)))
        self.sep = self.params.add("detector.sep", rng.normal(0.0, 0.5, (1, d)))
        self.txt = self.params.add("detector.txt", rng.normal(0.0, 0.5, (d,)))
        self.spc = self.params.add("detector.spc", rng.normal(0.0, 0.5, (d,)))
        self.layers = [
            TransformerEncoderLayer(self.params, f"detector.layer{i}", d, cfg.heads, cfg.d_ff, rng)
            for i in range(N_LAYERS)
        ]
        self.final_ln = LayerNorm(self.params, "detector.final_ln", d)
        self.out_proj = Linear(self.params, "detector.out_proj", d, 1, rng)

    def logit(self, ne_text_enc: Tensor, speech_enc: Tensor, mask=None,
              head_layerdrop_seed=None, weights_out=None) -> Tensor:
        """Scalar presence logit; batched inputs give a (B,) logit tensor."""
        x = build_input(ne_text_enc, speech_enc, self, self.cfg.use_modality_embeddings)
        drop_rng = None
        if head_layerdrop_seed is not None and self.cfg.head_layerdrop_p > 0.0:
            drop_rng = np.random.default_rng(head_layerdrop_seed)
        for layer in self.layers:
            if drop_rng is not None and drop_rng.random() < self.cfg.head_layerdrop_p:
                continue
            x = layer(x, mask, weights_out=weights_out)
        h = self.final_ln(x)
        return self.out_proj(h)[..., 0, 0]


def build_input(ne_text_enc: Tensor, speech_enc: Tensor, model: DetectorModel,
                use_modality_embeddings: bool = True) -> Tensor:
    """[CLS, text_1+TXT .. text_P+TXT, SEP, speech_1+SPC .. speech_S+SPC].

    CLS and SEP carry no modality embedding. Accepts (P, d)/(S, d) inputs or
    batched (B, P, d)/(B, S, d); the special rows broadcast across the batch.
    """
    if ne_text_enc.shape[-2] == 0:
        raise ValueError("empty NE encoding")
    if ne_text_enc.shape[-1] != speech_enc.shape[-1]:
        raise ValueError(
            f"text/speech dim mismatch: {ne_text_enc.shape} vs {speech_enc.shape}")
    text = ne_text_enc + model.txt if use_modality_embeddings else ne_text_enc
    speech = speech_enc + model.spc if use_modality_embeddings else speech_enc
    cls, sep = model.cls, model.sep
    if text.ndim == 3:
        b = text.shape[0]
        cls = stack([cls[0]] * b, axis=0).reshape(b, 1, text.shape[-1])
        sep = stack([sep[0]] * b, axis=0).reshape(b, 1, text.shape[-1])
    return concat([cls, text, sep, speech], axis=-2)


def build_attention_mask(P: int, S: int, window_mult: int = 2) -> np.ndarray:
    """Allow-mask over [CLS, P text, SEP, S speech] positions.

    A pair is forbidden iff both positions are speech and their offsets differ
    by more than window_mult * P; text and special tokens are never masked.
    """
    if P < 1 or S < 1:
        raise ValueError(f"need P >= 1 and S >= 1, got P={P}, S={S}")
    L = P + S + 2
    mask = np.ones((L, L), dtype=bool)
    offsets = np.arange(S)
    too_far = np.abs(offsets[:, None] - offsets[None, :]) > window_mult * P
    mask[P + 2:, P + 2:] = ~too_far
    return mask


def speech_span_mask(speech_enc: Tensor, fraction: float, seed) -> Tensor:
    """Zero one contiguous span of ceil(fraction*S) positions (training-time only)."""
    if not 0.0 <= fraction <= 0.5:
        raise ValueError(f"fraction {fraction} outside [0, 0.5]")
    if fraction == 0.0:
        return speech_enc
    S = speech_enc.shape[0]
    n = int(np.ceil(fraction * S))
    start = int(np.random.default_rng(seed).integers(0, S - n + 1))
    keep = np.ones((S, 1))
    keep[start:start + n] = 0.0
    return speech_enc * Tensor(keep)


# ---------------------------------------------------------------------------
# scoring and detection
# ---------------------------------------------------------------------------


def encode_dictionary(dictionary, encoder: SharedEncoder):
    """Deterministic (layerdrop 0) text encodings for every dictionary entry."""
    return {ne.id: Tensor(encoder.encode_text(ne.phonemes).vectors.data) for ne in dictionary}


def score(ne: NamedEntity, speech_enc: Tensor, model: DetectorModel,
          encoder: SharedEncoder, mask_toggle: bool | None = None) -> float:
    """Presence probability for one NE against one utterance encoding."""
    use_mask = model.cfg.use_attention_mask if mask_toggle is None else mask_toggle
    text_enc = Tensor(encoder.encode_text(ne.phonemes).vectors.data)
    P, S = text_enc.shape[0], speech_enc.shape[0]
    mask = build_attention_mask(P, S, model.cfg.window_mult) if use_mask else None
    z = model.logit(text_enc, speech_enc, mask)
    return float(1.0 / (1.0 + np.exp(-z.data)))


def score_dictionary(dictionary, speech_enc: Tensor, model: DetectorModel,
                     text_encs: dict) -> np.ndarray:
    """Probabilities for every dictionary entry, batched by phoneme count."""
    probs = np.zeros(len(dictionary))
    S = speech_enc.shape[0]
    by_len: dict[int, list[int]] = {}
    for i, ne in enumerate(dictionary):
        by_len.setdefault(len(ne.phonemes), []).append(i)
    for P, idxs in by_len.items():
        text_batch = stack([text_encs[dictionary[i].id] for i in idxs], axis=0)
        speech_batch = stack([speech_enc] * len(idxs), axis=0)
        mask = build_attention_mask(P, S, model.cfg.window_mult) if model.cfg.use_attention_mask else None
        z = model.logit(text_batch, speech_batch, mask)
        probs[idxs] = 1.0 / (1.0 + np.exp(-z.data))
    return probs


def detect(dictionary, utterance_speech_enc: Tensor, model: DetectorModel,
           text_encs: dict, threshold: float = DEFAULT_THRESHOLD):
    """One DetectionResult per dictionary entry, in dictionary order."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold {threshold} outside (0, 1)")
    if not dictionary:
        return []
    probs = score_dictionary(dictionary, utterance_speech_enc, model, text_encs)
    return [
        DetectionResult(ne.id, float(p), bool(p >= threshold))
        for ne, p in zip(dictionary, probs)
    ]


def cosine_baseline_scores(dictionary, utterance_speech_enc: np.ndarray,
                           text_encs: dict) -> np.ndarray:
    """Mean over NE phonemes of max over frames of cosine similarity."""
    s = np.asarray(utterance_speech_enc, dtype=np.float64)
    sn = s / (np.linalg.norm(s, axis=1, keepdims=True) + 1e-12)
    out = np.zeros(len(dictionary))
    for i, ne in enumerate(dictionary):
        t = text_encs[ne.id].data
        tn = t / (np.linalg.norm(t, axis=1, keepdims=True) + 1e-12)
        out[i] = (tn @ sn.T).max(axis=1).mean()
    return out


def cosine_baseline_detect(dictionary, utterance_speech_enc, text_encs: dict,
                           threshold: float):
    scores = cosine_baseline_scores(dictionary, utterance_speech_enc, text_encs)
    return [
        DetectionResult(ne.id, float(p), bool(p >= threshold))
        for ne, p in zip(dictionary, scores)
    ]


# ---------------------------------------------------------------------------
# training-pair sampling
# ---------------------------------------------------------------------------


def _random_span(utt: Utterance, max_words: int, rng) -> list:
    n_tokens = len(utt.transcript_tokens)
    length = min(int(rng.integers(1, max_words + 1)), n_tokens)
    start = int(rng.integers(0, n_tokens - length + 1))
    return utt.transcript_tokens[start:start + length]


def sample_training_pair(batch, corpus: Corpus, ne_prob: float = 0.8, max_words: int = 5,
                         seed=0, anchor_index: int | None = None,
                         train_on_ne: bool = True, negative_retries: int = 30) -> TrainingPair:
    """One positive span (present) and one negative span (verified absent).

    Positives come from the anchor utterance: its gold NEs with probability
    ne_prob when it has any (and train_on_ne is set), otherwise a random
    1..max_words span. Negatives are drawn the same way from other utterances
    in the batch and checked for absence at the phoneme-subsequence level.
    """
    if len(batch) < 2:
        raise ValueError("need at least 2 utterances to draw negatives from")
    rng = np.random.default_rng(seed)
    anchor = batch[int(rng.integers(len(batch))) if anchor_index is None else anchor_index]

    def ne_span(utt):
        ne_id, s, e = utt.gold_entities[int(rng.integers(len(utt.gold_entities)))]
        ne = corpus.ne_by_id[ne_id]
        return SampleSpan(list(ne.phonemes), "ne", utt.transcript_tokens[s:e])

    def word_span(utt):
        tokens = _random_span(utt, max_words, rng)
        return SampleSpan(corpus.phonemize(tokens), "random-words", tokens)

    use_ne = train_on_ne and anchor.gold_entities and rng.random() < ne_prob
    positive = ne_span(anchor) if use_ne else word_span(anchor)

    others = [u for u in batch if u.id != anchor.id]
    for _ in range(negative_retries):
        other = others[int(rng.integers(len(others)))]
        use_ne_neg = train_on_ne and other.gold_entities and rng.random() < ne_prob
        candidate = ne_span(other) if use_ne_neg else word_span(other)
        if not is_contiguous_subsequence(candidate.phonemes, anchor.transcript_phonemes):
            return TrainingPair(anchor.id, positive, candidate)
    raise RuntimeError(
        f"no absent negative found for {anchor.id} after {negative_retries} tries")


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


class DetectorDiverged(RuntimeError):
    pass


def _pair_loss(model: DetectorModel, text_pos, text_neg, speech, cfg: DetectorConfig,
               head_seed):
    S = speech.shape[0]

    def logit_of(text_enc, sub_seed):
        P = text_enc.shape[0]
        mask = build_attention_mask(P, S, cfg.window_mult) if cfg.use_attention_mask else None
        return model.logit(text_enc, speech, mask, head_layerdrop_seed=sub_seed)

    z_pos = logit_of(text_pos, None if head_seed is None else [*head_seed, 0])
    z_neg = logit_of(text_neg, None if head_seed is None else [*head_seed, 1])
    loss = bce_with_logits(z_pos, np.ones(())) + bce_with_logits(z_neg, np.zeros(()))
    if cfg.margin_weight > 0.0:
        gap = z_pos.sigmoid() - z_neg.sigmoid()
        loss = loss + cfg.margin_weight * (cfg.margin - gap).relu()
    return loss, float(z_pos.data), float(z_neg.data)


def train_detector(corpus: Corpus, joint: JointModel, cfg: DetectorConfig | None = None,
                   log=None) -> DetectorModel:
    """Train the detector head on frozen encoder features.

    Speech and span features are extracted with LayerDrop as augmentation
    (cycling through layerdrop_passes seed variants across epochs); at
    inference the encoder runs deterministically.
    """
    cfg = cfg or DetectorConfig()
    if cfg.d_model != joint.cfg.d_model:
        raise ValueError("detector dim must match encoder dim")
    train = corpus.splits.get("train", [])
    if len(train) < 2:
        raise ValueError("need at least 2 training utterances")
    model = DetectorModel(cfg, seed=cfg.seed)
    opt = Adam(model.params, lr=cfg.lr)
    encoder = joint.encoder
    order_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xD1]))
    step = 0
    for epoch in range(cfg.epochs):
        order = order_rng.permutation(len(train))
        pending, epoch_loss = 0, 0.0
        variant = epoch % max(1, cfg.layerdrop_passes)
        for j, idx in enumerate(order):
            utt = train[idx]
            pair_seed = np.random.SeedSequence([cfg.seed, 0xD2, epoch, int(idx)])
            pair = sample_training_pair(
                train, corpus, cfg.ne_prob, cfg.max_words, seed=pair_seed,
                anchor_index=int(idx), train_on_ne=cfg.train_on_ne,
                negative_retries=cfg.negative_retries)
            fseed = [cfg.seed, 0xD3, variant, int(idx)]
            speech = Tensor(encoder.encode_speech(
                utt.speech_frames, cfg.layerdrop_p, np.random.SeedSequence(fseed + [0])).vectors.data)
            if cfg.speech_mask_fraction > 0.0:
                speech = speech_span_mask(speech, cfg.speech_mask_fraction,
                                          np.random.SeedSequence(fseed + [3]))
            text_pos = Tensor(encoder.encode_text(
                pair.positive.phonemes, cfg.layerdrop_p, np.random.SeedSequence(fseed + [1])).vectors.data)
            text_neg = Tensor(encoder.encode_text(
                pair.negative.phonemes, cfg.layerdrop_p, np.random.SeedSequence(fseed + [2])).vectors.data)
            head_seed = fseed if cfg.head_layerdrop_p > 0.0 else None
            try:
                loss, _, _ = _pair_loss(model, text_pos, text_neg, speech, cfg, head_seed)
            except NonFiniteError as exc:
                raise DetectorDiverged(f"non-finite detector loss at step {step} ({utt.id})") from exc
            loss.backward()
            epoch_loss += loss.item()
            pending += 1
            step += 1
            if pending >= cfg.batch_size or j == len(order) - 1:
                for _, p in model.params.trainable_items():
                    if p.grad is not None:
                        p.grad /= pending
                opt.step()
                opt.zero_grad()
                pending = 0
        if log:
            log(f"detector epoch {epoch}: mean pair loss {epoch_loss / len(train):.4f}")
    return model


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_detector(model: DetectorModel, path):
    store.save_checkpoint(path, {"kind": "detector", "config": asdict(model.cfg)},
                          model.params.state_dict())


def load_detector(path) -> DetectorModel:
    header, tensors = store.load_checkpoint(path)
    if header.get("kind") != "detector":
        raise store.StoreFormatError(f"expected a detector checkpoint, got {header.get('kind')!r}")
    model = DetectorModel(DetectorConfig(**header["config"]))
    model.params.load_state_dict(tensors)
    return model
