"""Shared text/speech transformer encoder with joint S2T+T2T training.

Both modalities pass through one stack of pre-norm layers: text enters as
phoneme embeddings, speech as projected frame vectors. Joint training adds a
cosine alignment term that pulls paired text/speech encodings together, which
is the property the NE detector relies on. LayerDrop stochastically skips
whole shared layers, both during training and as a feature-extraction
augmentation later.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .corpus import BOS, EOS, Corpus, Utterance
from .numerics import (
    Adam,
    LayerNorm,
    Linear,
    NonFiniteError,
    ParameterSet,
    Tensor,
    TransformerDecoderLayer,
    TransformerEncoderLayer,
    causal_mask,
    embedding,
    log_softmax,
    sinusoidal_positions,
)
from . import store

__all__ = [
    "EncoderConfig",
    "EncoderOutput",
    "SharedEncoder",
    "TransformerDecoder",
    "JointModel",
    "TrainingDiverged",
    "AlignmentBelowThreshold",
    "train_joint",
    "similarity_heatmap",
    "heatmap_to_csv",
    "heatmap_to_pgm",
    "alignment_margin",
    "save_joint_model",
    "load_joint_model",
]

_MAX_POSITIONS = 512


class TrainingDiverged(RuntimeError):
    """Loss went non-finite during training."""


class AlignmentBelowThreshold(RuntimeError):
    """Trained encoder failed the dev alignment margin check."""


@dataclass
class EncoderConfig:
    d_model: int = 64
    n_layers: int = 4
    heads: int = 4
    d_ff: int = 128
    decoder_layers: int = 2
    layerdrop_p: float = 0.1
    # positions enter the encoder only as relative attention biases so that
    # outputs stay content-dominated (full-scale absolute positions would
    # inflate every cross-modal cosine and sink the heatmap contrast)
    posenc_scale: float = 0.0
    rel_bias_max: int = 16
    align_weight: float = 0.5
    align_push_weight: float = 1.0
    align_push_margin: float = 0.1
    epochs: int = 3
    lr: float = 1.5e-3
    batch_size: int = 16
    align_threshold: float = 0.2
    align_dev_samples: int = 64
    tie_embeddings: bool = True
    lr_final_scale: float = 0.25  # cosine decay floor as a fraction of lr
    warmup_steps: int = 200
    max_grad_norm: float = 5.0
    seed: int = 0


@dataclass
class EncoderOutput:
    vectors: Tensor  # L x d
    modality: str  # "text" | "speech"
    source_id: str = ""
    n_layers_skipped: int = 0


class SharedEncoder:
    """Phoneme embedding + frame projection feeding one shared layer stack."""

    def __init__(self, params: ParameterSet, name: str, n_phonemes: int, d_a: int,
                 cfg: EncoderConfig, rng: np.random.Generator):
        self.name = name
        self.cfg = cfg
        self.n_phonemes = n_phonemes
        self.emb = params.add(f"{name}.phoneme_emb", rng.normal(0.0, 0.1, (n_phonemes, cfg.d_model)))
        self.frame_proj = Linear(params, f"{name}.frame_proj", d_a, cfg.d_model, rng)
        self.layers = [
            TransformerEncoderLayer(params, f"{name}.layer{i}", cfg.d_model, cfg.heads, cfg.d_ff, rng,
                                    relative_bias_max=cfg.rel_bias_max)
            for i in range(cfg.n_layers)
        ]
        self._pos = cfg.posenc_scale * sinusoidal_positions(_MAX_POSITIONS, cfg.d_model)

    def _run_stack(self, x: Tensor, layerdrop_p: float, seed):
        if not 0.0 <= layerdrop_p <= 1.0:
            raise ValueError(f"layerdrop_p {layerdrop_p} outside [0, 1]")
        skipped = 0
        if layerdrop_p > 0.0:
            rng = np.random.default_rng(seed)
            for layer in self.layers:
                if rng.random() < layerdrop_p:
                    skipped += 1
                else:
                    x = layer(x)
        else:
            for layer in self.layers:
                x = layer(x)
        return x, skipped

    def encode_text(self, phonemes, layerdrop_p: float = 0.0, seed=0, source_id: str = "") -> EncoderOutput:
        ids = np.asarray(list(phonemes), dtype=np.intp)
        if ids.size == 0:
            raise ValueError("cannot encode an empty phoneme sequence")
        bad = [int(p) for p in ids if not 0 <= p < self.n_phonemes]
        if bad:
            raise ValueError(f"unknown phoneme ids: {bad}")
        x = embedding(self.emb, ids) + Tensor(self._pos[: ids.size])
        x, skipped = self._run_stack(x, layerdrop_p, seed)
        return EncoderOutput(x, "text", source_id, skipped)

    def encode_speech(self, frames, layerdrop_p: float = 0.0, seed=0, source_id: str = "") -> EncoderOutput:
        frames = np.asarray(frames, dtype=np.float64)
        if frames.ndim != 2 or frames.shape[0] == 0:
            raise ValueError(f"frames must be non-empty F x d_a, got {frames.shape}")
        x = self.frame_proj(Tensor(frames)) + Tensor(self._pos[: frames.shape[0]])
        x, skipped = self._run_stack(x, layerdrop_p, seed)
        return EncoderOutput(x, "speech", source_id, skipped)


class TransformerDecoder:
    """Pre-norm decoder stack with a final layer norm and vocab projection."""

    def __init__(self, params: ParameterSet, name: str, vocab_size: int,
                 cfg: EncoderConfig, rng: np.random.Generator):
        self.name = name
        d = cfg.d_model
        self.emb = params.add(f"{name}.token_emb", rng.normal(0.0, 0.1, (vocab_size, d)))
        self.layers = [
            TransformerDecoderLayer(params, f"{name}.layer{i}", d, cfg.heads, cfg.d_ff, rng)
            for i in range(cfg.decoder_layers)
        ]
        self.final_ln = LayerNorm(params, f"{name}.final_ln", d)
        # encoder outputs are content-dominated (small positional amplitude), so
        # the decoder normalizes them and re-adds full-scale positions to its keys
        self.enc_ln = LayerNorm(params, f"{name}.enc_ln", d)
        self.tie_embeddings = cfg.tie_embeddings
        if cfg.tie_embeddings:
            self.out_bias = params.add(f"{name}.out_bias", np.zeros(vocab_size))
            self.out_proj = None
        else:
            self.out_proj = Linear(params, f"{name}.out_proj", d, vocab_size, rng)
        self._pos = sinusoidal_positions(_MAX_POSITIONS, d)

    def encoder_memory(self, enc_out: Tensor):
        """Normalized cross-attention values and position-augmented keys."""
        values = self.enc_ln(enc_out)
        keys = values + Tensor(self._pos[: enc_out.shape[-2]])
        return values, keys

    def hidden(self, token_ids, enc_out: Tensor, memory=None) -> Tensor:
        """Decoder states for (possibly batched) token id prefixes."""
        ids = np.asarray(token_ids, dtype=np.intp)
        T = ids.shape[-1]
        values, keys = self.encoder_memory(enc_out) if memory is None else memory
        x = embedding(self.emb, ids) + Tensor(self._pos[:T])
        mask = causal_mask(T)
        for layer in self.layers:
            x = layer(x, values, self_mask=mask, enc_keys=keys)
        return self.final_ln(x)

    def project(self, hidden: Tensor) -> Tensor:
        if self.tie_embeddings:
            return hidden @ self.emb.transpose((1, 0)) + self.out_bias
        return self.out_proj(hidden)

    def logits(self, token_ids, enc_out: Tensor, memory=None) -> Tensor:
        return self.project(self.hidden(token_ids, enc_out, memory))


class JointModel:
    """Shared encoder plus base decoder (the pretrained ST2T stand-in)."""

    def __init__(self, corpus_meta: dict, cfg: EncoderConfig, seed: int = 0):
        self.cfg = cfg
        self.meta = corpus_meta
        self.params = ParameterSet()
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE0]))
        self.encoder = SharedEncoder(self.params, "encoder", corpus_meta["n_phonemes"],
                                     corpus_meta["d_a"], cfg, rng)
        self.decoder = TransformerDecoder(self.params, "decoder", len(corpus_meta["target_vocab"]),
                                          cfg, rng)
        self.target_vocab = list(corpus_meta["target_vocab"])
        self.token_to_id = {t: i for i, t in enumerate(self.target_vocab)}
        self.bos_id = self.token_to_id[BOS]
        self.eos_id = self.token_to_id[EOS]

    @classmethod
    def for_corpus(cls, corpus: Corpus, cfg: EncoderConfig | None = None, seed: int = 0):
        meta = {
            "n_phonemes": len(corpus.phoneme_inventory),
            "d_a": corpus.config.d_a,
            "target_vocab": list(corpus.target_vocab),
        }
        return cls(meta, cfg or EncoderConfig(), seed)

    def target_ids(self, tokens) -> np.ndarray:
        try:
            return np.array([self.token_to_id[t] for t in tokens], dtype=np.intp)
        except KeyError as exc:
            raise ValueError(f"unknown target token: {exc.args[0]!r}") from None


def _normalize_rows(x: Tensor) -> Tensor:
    norms = ((x * x).sum(axis=-1, keepdims=True) + 1e-12) ** 0.5
    return x / norms


def _alignment_loss(text: Tensor, speech_anchors: Tensor, phonemes, push_weight: float,
                    push_margin: float) -> Tensor:
    """Pull matched text/speech pairs together, push different-phoneme pairs apart.

    The repulsion term is what creates heatmap contrast: without it the
    matched-cosine objective is satisfied by collapsing every encoding onto a
    shared direction. Pairs sharing a phoneme id are exempt from the push.
    """
    tn = _normalize_rows(text)
    sn = _normalize_rows(speech_anchors)
    cos = tn @ sn.transpose((1, 0))
    n = cos.shape[0]
    pull = 1.0 - cos[np.arange(n), np.arange(n)].mean()
    ph = np.asarray(phonemes)
    mismatch = ph[:, None] != ph[None, :]
    if push_weight == 0.0 or not mismatch.any():
        return pull
    push = (cos[mismatch] - push_margin).relu().mean()
    return pull + push_weight * push


def _alignment_anchor_frames(alignment) -> np.ndarray:
    """Middle frame of each phoneme's run: nearest-neighbor speech position."""
    alignment = np.asarray(alignment)
    anchors = []
    for ph in range(alignment.max() + 1):
        frames = np.nonzero(alignment == ph)[0]
        anchors.append(int(frames[len(frames) // 2]))
    return np.asarray(anchors, dtype=np.intp)


def _joint_loss(model: JointModel, utt: Utterance, layerdrop_p: float, seeds) -> Tensor:
    text_enc = model.encoder.encode_text(utt.transcript_phonemes, layerdrop_p, seeds[0])
    speech_enc = model.encoder.encode_speech(utt.speech_frames, layerdrop_p, seeds[1])
    ids = np.concatenate([[model.bos_id], model.target_ids(utt.target_tokens), [model.eos_id]])
    labels = ids[1:]
    ce = Tensor(np.zeros(()))
    for enc in (speech_enc, text_enc):
        ls = log_softmax(model.decoder.logits(ids[:-1], enc.vectors))
        ce = ce + (-(ls[np.arange(labels.size), labels]).mean())
    anchors = _alignment_anchor_frames(utt.frame_alignment)
    align = _alignment_loss(text_enc.vectors, speech_enc.vectors[anchors],
                            utt.transcript_phonemes, model.cfg.align_push_weight,
                            model.cfg.align_push_margin)
    return ce + model.cfg.align_weight * align


def alignment_margin(model: JointModel, utts) -> float:
    """Mean (diagonal - off-diagonal) heatmap cosine over utterances."""
    diag, off = [], []
    for utt in utts:
        text_enc = model.encoder.encode_text(utt.transcript_phonemes)
        speech_enc = model.encoder.encode_speech(utt.speech_frames)
        heat = similarity_heatmap(text_enc, speech_enc)
        align = np.asarray(utt.frame_alignment)
        mask = np.zeros_like(heat, dtype=bool)
        mask[np.arange(heat.shape[0]), align] = True
        diag.append(heat[mask].mean())
        off.append(heat[~mask].mean())
    return float(np.mean(diag) - np.mean(off))


def train_joint(corpus: Corpus, cfg: EncoderConfig | None = None, log=None) -> JointModel:
    """Train encoder+decoder on S2T CE + T2T CE + cosine alignment."""
    cfg = cfg or EncoderConfig()
    train = corpus.splits.get("train", [])
    if not train:
        raise ValueError("training split is empty")
    model = JointModel.for_corpus(corpus, cfg, seed=cfg.seed)
    opt = Adam(model.params, lr=cfg.lr, max_grad_norm=cfg.max_grad_norm)
    order_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xE1]))
    step = 0
    n_updates = 0
    for epoch in range(cfg.epochs):
        frac = epoch / max(1, cfg.epochs - 1)
        floor = cfg.lr_final_scale
        epoch_lr = cfg.lr * (floor + (1.0 - floor) * 0.5 * (1.0 + np.cos(np.pi * frac)))
        order = order_rng.permutation(len(train))
        pending = 0
        epoch_loss = 0.0
        for j, idx in enumerate(order):
            utt = train[idx]
            seeds = (
                np.random.SeedSequence([cfg.seed, 0xE2, epoch, int(idx), 0]),
                np.random.SeedSequence([cfg.seed, 0xE2, epoch, int(idx), 1]),
            )
            try:
                loss = _joint_loss(model, utt, cfg.layerdrop_p, seeds)
            except NonFiniteError as exc:
                raise TrainingDiverged(f"non-finite joint loss at step {step} ({utt.id})") from exc
            loss.backward()
            epoch_loss += loss.item()
            pending += 1
            step += 1
            if pending >= cfg.batch_size or j == len(order) - 1:
                for _, p in model.params.trainable_items():
                    if p.grad is not None:
                        p.grad /= pending
                n_updates += 1
                opt.lr = epoch_lr * min(1.0, n_updates / max(1, cfg.warmup_steps))
                opt.step()
                opt.zero_grad()
                pending = 0
        if log:
            log(f"epoch {epoch}: mean joint loss {epoch_loss / len(train):.4f}")
    dev = corpus.splits.get("dev", [])[: cfg.align_dev_samples]
    if dev:
        margin = alignment_margin(model, dev)
        if log:
            log(f"dev alignment margin {margin:.3f} (threshold {cfg.align_threshold})")
        if margin < cfg.align_threshold:
            raise AlignmentBelowThreshold(
                f"dev alignment margin {margin:.3f} below threshold {cfg.align_threshold}")
    return model


# ---------------------------------------------------------------------------
# heatmaps
# ---------------------------------------------------------------------------


def similarity_heatmap(text_enc: EncoderOutput, speech_enc: EncoderOutput) -> np.ndarray:
    """Cosine similarity matrix, speech frames on rows, phonemes on columns."""
    t = text_enc.vectors.data
    s = speech_enc.vectors.data
    tn = np.linalg.norm(t, axis=1)
    sn = np.linalg.norm(s, axis=1)
    if (tn == 0).any() or (sn == 0).any():
        raise ValueError("zero-norm encoding vector in heatmap input")
    return (s / sn[:, None]) @ (t / tn[:, None]).T


def heatmap_to_csv(heat: np.ndarray, path):
    with open(path, "w") as fh:
        for row in heat:
            fh.write(",".join(f"{v:.6f}" for v in row) + "\n")


def heatmap_to_pgm(heat: np.ndarray, path):
    """Plain-text PGM, lighter = more similar, values mapped from [-1, 1]."""
    gray = np.clip(((heat + 1.0) / 2.0 * 255.0).round(), 0, 255).astype(int)
    with open(path, "w") as fh:
        fh.write(f"P2\n{gray.shape[1]} {gray.shape[0]}\n255\n")
        for row in gray:
            fh.write(" ".join(str(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_joint_model(model: JointModel, path):
    header = {"kind": "joint", "config": asdict(model.cfg), "meta": model.meta}
    store.save_checkpoint(path, header, model.params.state_dict())


def load_joint_model(path) -> JointModel:
    header, tensors = store.load_checkpoint(path)
    if header.get("kind") != "joint":
        raise store.StoreFormatError(f"expected a joint checkpoint, got kind={header.get('kind')!r}")
    cfg = EncoderConfig(**header["config"])
    model = JointModel(header["meta"], cfg)
    model.params.load_state_dict(tensors)
    return model
