"""Synthetic speech-translation corpus with named-entity dictionaries.

The generator builds a two-language pseudo-word world: a source vocabulary
with a pronunciation lexicon, a dictionary of named entities whose surface
forms reuse "sound stems" (spelling variants of one stem differ in at most
one phoneme, giving controlled confusability), and utterances pairing
synthetic speech frames with NE-tagged target translations.

Speech is phoneme-prototype-plus-noise with variable frame durations: each
phoneme emits 1-4 frames of its prototype vector corrupted by Gaussian
noise, and the frame -> phoneme alignment is recorded for diagnostics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .store import StoreFormatError, read_blocks, write_blocks

__all__ = [
    "CATEGORIES",
    "TAG_TOKENS",
    "CorpusConfig",
    "CorpusError",
    "NamedEntity",
    "Utterance",
    "Lexicon",
    "Corpus",
    "phonemize",
    "synthesize_speech",
    "generate_corpus",
    "save_corpus",
    "load_corpus",
    "is_contiguous_subsequence",
    "open_tag",
    "close_tag",
]

CATEGORIES = ("GPE", "LOC", "PER", "ORG")
TAG_TOKENS = tuple(f"<{c}>" for c in CATEGORIES) + tuple(f"</{c}>" for c in CATEGORIES)
BOS, EOS = "<bos>", "<eos>"
CORPUS_FORMAT_VERSION = "nebias-corpus-v1"

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


class CorpusError(ValueError):
    """Invalid corpus configuration or malformed corpus data."""


def open_tag(category: str) -> str:
    return f"<{category}>"


def close_tag(category: str) -> str:
    return f"</{category}>"


@dataclass
class NamedEntity:
    """Dictionary entry: source surface form, its phonemes, and the target form."""

    id: str
    source_surface: str
    phonemes: list
    target_form: str
    category: str
    acronym: bool = False

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise CorpusError(f"NE {self.id}: unknown category {self.category!r}")
        if not self.phonemes:
            raise CorpusError(f"NE {self.id}: empty phoneme sequence")

    @property
    def source_tokens(self):
        return self.source_surface.split()

    @property
    def target_tokens(self):
        return self.target_form.split()


@dataclass
class Utterance:
    id: str
    transcript_tokens: list
    transcript_phonemes: list
    speech_frames: np.ndarray
    target_tokens: list
    gold_entities: list  # (ne_id, token_start, token_end) half-open spans
    frame_alignment: list  # per frame: index into transcript_phonemes

    def gold_ne_ids(self):
        return [g[0] for g in self.gold_entities]


@dataclass
class Lexicon:
    """Pronunciations for source tokens, with the acronym failure toggle."""

    entries: dict  # token -> list of phoneme ids
    acronyms: set  # tokens pronounced letter-by-letter when handled properly
    letter_phonemes: dict  # single letter -> phoneme ids
    acronym_homographs: dict  # acronym token -> ordinary token it collapses to

    def phonemize(self, tokens, mimic_acronym_failure: bool = True):
        return phonemize(tokens, self, mimic_acronym_failure)


def phonemize(tokens, lexicon: Lexicon, mimic_acronym_failure: bool = True):
    """Concatenate per-token pronunciations into one phoneme-id sequence.

    Acronym tokens expand letter-by-letter; with the failure toggle on they
    instead collapse to the pronunciation of an ordinary homograph word,
    reproducing the converter weakness the false-positive analysis needs.
    """
    out = []
    for tok in tokens:
        if tok in lexicon.acronyms:
            if mimic_acronym_failure:
                homograph = lexicon.acronym_homographs[tok]
                out.extend(lexicon.entries[homograph])
            else:
                for letter in tok:
                    if letter not in lexicon.letter_phonemes:
                        raise CorpusError(f"no letter pronunciation for {letter!r} in {tok!r}")
                    out.extend(lexicon.letter_phonemes[letter])
        elif tok in lexicon.entries:
            out.extend(lexicon.entries[tok])
        else:
            raise CorpusError(f"out-of-vocabulary token: {tok!r}")
    return out


def synthesize_speech(phonemes, prototypes: np.ndarray, noise_sigma: float, seed,
                      min_dur: int = 1, max_dur: int = 4):
    """Emit 1-4 noisy prototype frames per phoneme.

    Returns (frames F x d_a, alignment) where alignment[f] is the index of the
    phoneme that produced frame f.
    """
    rng = np.random.default_rng(seed)
    frames, alignment = [], []
    for i, p in enumerate(phonemes):
        if not 0 <= p < prototypes.shape[0]:
            raise CorpusError(f"phoneme id {p} outside prototype table")
        dur = int(rng.integers(min_dur, max_dur + 1))
        for _ in range(dur):
            frames.append(prototypes[p] + noise_sigma * rng.standard_normal(prototypes.shape[1]))
            alignment.append(i)
    if not frames:
        return np.zeros((0, prototypes.shape[1])), []
    return np.stack(frames), alignment


@dataclass
class CorpusConfig:
    # split sizes
    n_train: int = 2000
    n_dev: int = 200
    n_test: int = 200
    # dictionary makeup
    dictionary_size: int = 294
    category_shares: dict = field(default_factory=lambda: {"PER": 0.30, "GPE": 0.26, "LOC": 0.24, "ORG": 0.20})
    n_acronyms: int = 8
    n_nested: int = 10
    # pseudo-language
    n_phonemes: int = 48
    n_regular_words: int = 140
    regular_phonemes: tuple = (2, 3)
    name_phonemes: tuple = (3, 5)
    variant_prob: float = 0.55  # chance a name stem grows an extra spelling variant
    translated_name_prob: float = 0.3  # name tokens whose target spelling differs from source
    # utterance shape
    utterance_words: tuple = (3, 8)
    train_ne_mean: float = 0.9
    test_ne_density: float = 0.34  # mean {GPE,LOC,PER} mentions per test/dev utterance
    test_org_density: float = 0.10
    # speech
    d_a: int = 32
    noise_sigma: float = 0.35
    min_duration: int = 1
    max_duration: int = 4
    # phonemizer behaviour
    mimic_acronym_failure: bool = True


@dataclass
class Corpus:
    config: CorpusConfig
    phoneme_inventory: list
    prototypes: np.ndarray
    source_vocab: list
    target_vocab: list
    lexicon: Lexicon
    token_translation: dict  # ordinary source token -> target token
    dictionary: list
    splits: dict  # split name -> list of Utterance

    def __post_init__(self):
        seen = set()
        for ne in self.dictionary:
            key = (ne.source_surface, ne.category)
            if key in seen:
                raise CorpusError(f"duplicate (surface, category) in dictionary: {key}")
            seen.add(key)
        ids = {ne.id for ne in self.dictionary}
        split_ids = set()
        for name, utts in self.splits.items():
            for u in utts:
                if u.id in split_ids:
                    raise CorpusError(f"utterance id {u.id} appears in more than one split")
                split_ids.add(u.id)
                for ne_id, start, end in u.gold_entities:
                    if ne_id not in ids:
                        raise CorpusError(f"{u.id}: unresolved NE id {ne_id}")
                    if not (0 <= start < end <= len(u.transcript_tokens)):
                        raise CorpusError(f"{u.id}: bad gold span ({start}, {end})")

    @property
    def ne_by_id(self):
        return {ne.id: ne for ne in self.dictionary}

    def target_token_to_id(self):
        return {tok: i for i, tok in enumerate(self.target_vocab)}

    def phonemize(self, tokens):
        return self.lexicon.phonemize(tokens, self.config.mimic_acronym_failure)


def is_contiguous_subsequence(needle, haystack) -> bool:
    n, h = list(needle), list(haystack)
    if not n:
        return True
    for i in range(len(h) - len(n) + 1):
        if h[i:i + len(n)] == n:
            return True
    return False


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def _pseudo_word(rng, n_syllables, capital=False):
    word = "".join(rng.choice(list(_CONSONANTS)) + rng.choice(list(_VOWELS)) for _ in range(n_syllables))
    if rng.random() < 0.4:
        word += rng.choice(list(_CONSONANTS))
    return word.capitalize() if capital else word


def _fresh_word(rng, n_syllables, taken, capital=False):
    for _ in range(10_000):
        w = _pseudo_word(rng, n_syllables, capital)
        if w not in taken:
            taken.add(w)
            return w
    raise CorpusError("exhausted pseudo-word space; reduce vocabulary sizes")


def _variant_spelling(rng, base, taken):
    """Minor respelling of a name (vowel swap or doubled consonant)."""
    for _ in range(10_000):
        chars = list(base)
        mode = rng.random()
        pos = int(rng.integers(1, len(chars)))
        if mode < 0.5:
            vowels = [i for i, c in enumerate(chars) if c in _VOWELS]
            if vowels:
                i = vowels[int(rng.integers(len(vowels)))]
                chars[i] = rng.choice([v for v in _VOWELS if v != chars[i]])
        elif mode < 0.8:
            chars.insert(pos, chars[pos - 1])
        else:
            chars.append(rng.choice(list(_CONSONANTS)))
        w = "".join(chars)
        if w not in taken:
            taken.add(w)
            return w
    raise CorpusError("could not derive a fresh spelling variant")


class _NamePool:
    """Sound stems with 1+ spelling variants differing in at most one phoneme."""

    def __init__(self, rng, cfg, taken_words):
        self.rng = rng
        self.cfg = cfg
        self.taken = taken_words
        self.tokens = {}  # token -> phonemes

    def new_token(self):
        """Return (token, phonemes) list for one stem: base plus optional variants."""
        lo, hi = self.cfg.name_phonemes
        stem = [int(self.rng.integers(self.cfg.n_phonemes)) for _ in range(int(self.rng.integers(lo, hi + 1)))]
        base = _fresh_word(self.rng, int(self.rng.integers(2, 4)), self.taken, capital=True)
        self.tokens[base] = list(stem)
        out = [base]
        while self.rng.random() < self.cfg.variant_prob and len(out) < 3:
            spelled = _variant_spelling(self.rng, base, self.taken)
            ph = list(stem)
            ph[int(self.rng.integers(len(ph)))] = int(self.rng.integers(self.cfg.n_phonemes))
            self.tokens[spelled] = ph
            out.append(spelled)
        return out


def _category_counts(cfg) -> dict:
    counts = {c: int(round(cfg.dictionary_size * cfg.category_shares.get(c, 0.0))) for c in CATEGORIES}
    drift = cfg.dictionary_size - sum(counts.values())
    counts["GPE"] += drift
    if min(counts.values()) < 0:
        raise CorpusError(f"category shares produce negative counts: {counts}")
    return counts


def _translate_name(rng, token, taken, cfg):
    if rng.random() < cfg.translated_name_prob:
        return _variant_spelling(rng, token, taken)
    return token


def _build_dictionary(rng, cfg, pool, gpe_like_tokens, org_suffixes, name_translation, acronym_pron):
    """Assemble NEs per category, with nested entries and acronyms."""
    counts = _category_counts(cfg)
    dictionary = []
    seen_surface = set()

    def target_of(tokens):
        out = []
        for t in tokens:
            if t not in name_translation:
                name_translation[t] = _translate_name(rng, t, pool.taken, cfg)
            out.append(name_translation[t])
        return " ".join(out)

    def add(category, tokens, acronym=False):
        surface = " ".join(tokens)
        if (surface, category) in seen_surface:
            return False
        seen_surface.add((surface, category))
        ne_id = f"ne-{len(dictionary):04d}"
        phonemes = [p for t in tokens for p in (acronym_pron[t] if t in acronym_pron else pool.tokens[t])]
        dictionary.append(NamedEntity(ne_id, surface, phonemes, target_of(tokens), category, acronym))
        return True

    # GPE: single-token names; stem variants become sibling entries
    gpe_tokens = []
    while sum(1 for ne in dictionary if ne.category == "GPE") < counts["GPE"]:
        for tok in pool.new_token():
            if sum(1 for ne in dictionary if ne.category == "GPE") >= counts["GPE"]:
                break
            if add("GPE", [tok]):
                gpe_tokens.append(tok)
    gpe_like_tokens.extend(gpe_tokens)

    # LOC: mostly fresh names, some nested around a GPE token ("Treaty of X" style)
    n_nested = min(cfg.n_nested, counts["LOC"])
    made_loc = 0
    while made_loc < counts["LOC"]:
        if made_loc < n_nested and gpe_tokens:
            inner = gpe_tokens[int(rng.integers(len(gpe_tokens)))]
            prefix = pool.new_token()[0]
            made_loc += add("LOC", [prefix, inner])
            continue
        variants = pool.new_token()
        tokens = [variants[0]] if rng.random() < 0.7 else [variants[0], pool.new_token()[0]]
        made_loc += add("LOC", tokens)

    # PER: first + family name, both drawn from stem pools with reuse
    firsts, lasts = [], []
    while sum(1 for ne in dictionary if ne.category == "PER") < counts["PER"]:
        if not firsts or rng.random() < 0.35:
            firsts.extend(pool.new_token())
        if not lasts or rng.random() < 0.5:
            lasts.extend(pool.new_token())
        add("PER", [firsts[int(rng.integers(len(firsts)))], lasts[int(rng.integers(len(lasts)))]])

    # ORG: acronyms plus two-token names sharing a small suffix pool
    for acr in sorted(acronym_pron):
        if sum(1 for ne in dictionary if ne.category == "ORG") < counts["ORG"]:
            name_translation[acr] = acr  # acronyms keep their form in the target
            add("ORG", [acr], acronym=True)
    while sum(1 for ne in dictionary if ne.category == "ORG") < counts["ORG"]:
        head = pool.new_token()[0]
        suffix = org_suffixes[int(rng.integers(len(org_suffixes)))]
        add("ORG", [head, suffix])
    return dictionary


def generate_corpus(config: CorpusConfig | None = None, seed: int = 0) -> Corpus:
    """Build the full synthetic corpus: language, dictionary, splits, speech."""
    cfg = config or CorpusConfig()
    root = np.random.SeedSequence([int(seed), 0xC0])
    r_lang, r_dict, r_utts, r_speech = (np.random.default_rng(s) for s in root.spawn(4))

    phoneme_inventory = [f"p{i:02d}" for i in range(cfg.n_phonemes)]
    prototypes = r_lang.standard_normal((cfg.n_phonemes, cfg.d_a))
    prototypes /= np.linalg.norm(prototypes, axis=1, keepdims=True)

    taken = set()
    regular = [_fresh_word(r_lang, int(r_lang.integers(2, 4)), taken) for _ in range(cfg.n_regular_words)]
    lo, hi = cfg.regular_phonemes
    entries = {w: [int(r_lang.integers(cfg.n_phonemes)) for _ in range(int(r_lang.integers(lo, hi + 1)))]
               for w in regular}
    letter_phonemes = {c: [int(r_lang.integers(cfg.n_phonemes)) for _ in range(2)]
                       for c in "ABCDEFGHIJKLMNOPQRSTUVWXYZ"}

    pool = _NamePool(r_dict, cfg, taken)
    org_suffixes = [pool.new_token()[0] for _ in range(6)]

    # acronym tokens and their pronunciations are fixed before the dictionary:
    # with the failure toggle on each collapses to an ordinary homograph word
    n_acr = min(cfg.n_acronyms, _category_counts(cfg)["ORG"])
    acronym_tokens = []
    while len(acronym_tokens) < n_acr:
        length = int(r_dict.integers(2, 4))
        acr = "".join(r_dict.choice(list("ABCDEFGHIKLMNOPRSTUVZ")) for _ in range(length))
        if acr not in taken:
            taken.add(acr)
            acronym_tokens.append(acr)
    regular_cycle = sorted(regular)
    homographs = {acr: regular_cycle[(i * 7) % len(regular_cycle)] for i, acr in enumerate(sorted(acronym_tokens))}
    acronym_pron = {}
    for acr in acronym_tokens:
        if cfg.mimic_acronym_failure:
            acronym_pron[acr] = list(entries[homographs[acr]])
        else:
            acronym_pron[acr] = [p for letter in acr for p in letter_phonemes[letter]]

    name_translation = {}
    gpe_like = []
    dictionary = _build_dictionary(r_dict, cfg, pool, gpe_like, org_suffixes, name_translation, acronym_pron)
    lexicon = Lexicon({**entries, **pool.tokens}, set(acronym_tokens), letter_phonemes, homographs)

    token_translation = {w: _fresh_word(r_lang, int(r_lang.integers(2, 4)), taken) for w in regular}

    source_vocab = sorted(set(regular) | set(pool.tokens))
    target_name_tokens = {t for ne in dictionary for t in ne.target_tokens}
    target_vocab = [BOS, EOS] + list(TAG_TOKENS) + sorted(set(token_translation.values()) | target_name_tokens)

    ne_index = {ne.id: ne for ne in dictionary}
    three_cat = [ne.id for ne in dictionary if ne.category in ("GPE", "LOC", "PER")]
    orgs = [ne.id for ne in dictionary if ne.category == "ORG"]

    def make_mention_plan(n_utts, rng, coverage=False, density=None, org_density=0.0):
        """Assign NE ids to utterance slots; quota-based so densities are exact."""
        plan = [[] for _ in range(n_utts)]
        mentions = []
        if coverage:
            mentions.extend(ne.id for ne in dictionary)
            extra = max(0, int(round(cfg.train_ne_mean * n_utts)) - len(mentions))
            mentions.extend(dictionary[int(rng.integers(len(dictionary)))].id for _ in range(extra))
        else:
            n3 = int(round(density * n_utts))
            n_org = int(round(org_density * n_utts))
            if (n3 and not three_cat) or (n_org and not orgs):
                raise CorpusError("dictionary has no entries for the requested test categories")
            mentions.extend(three_cat[int(rng.integers(len(three_cat)))] for _ in range(n3))
            mentions.extend(orgs[int(rng.integers(len(orgs)))] for _ in range(n_org))
        if len(mentions) > n_utts * 3:
            raise CorpusError(
                f"dictionary larger than realizable mentions: {len(mentions)} mentions for {n_utts} utterances")
        order = rng.permutation(len(mentions))
        slot = rng.permutation(n_utts)
        cursor = 0
        for k in order:
            for _ in range(n_utts):
                tgt = slot[cursor % n_utts]
                cursor += 1
                if len(plan[tgt]) < 3:
                    plan[tgt].append(mentions[k])
                    break
        return plan

    def build_utterance(uid, ne_ids, rng, speech_rng):
        n_words = int(rng.integers(cfg.utterance_words[0], cfg.utterance_words[1] + 1))
        tokens = [regular[int(rng.integers(len(regular)))] for _ in range(n_words)]
        spans = []
        for ne_id in ne_ids:
            ne = ne_index[ne_id]
            # never split an already placed entity span
            valid = [p for p in range(len(tokens) + 1) if not any(s < p < e for _, s, e in spans)]
            pos = valid[int(rng.integers(len(valid)))]
            shift = len(ne.source_tokens)
            spans = [(nid, s + (shift if s >= pos else 0), e + (shift if s >= pos else 0)) for nid, s, e in spans]
            tokens[pos:pos] = ne.source_tokens
            spans.append((ne_id, pos, pos + shift))
        spans.sort(key=lambda t: t[1])
        target = []
        covered = {i for _, s, e in spans for i in range(s, e)}
        i = 0
        while i < len(tokens):
            span = next(((nid, s, e) for nid, s, e in spans if s == i), None)
            if span is not None:
                nid, s, e = span
                ne = ne_index[nid]
                target.append(open_tag(ne.category))
                target.extend(ne.target_tokens)
                target.append(close_tag(ne.category))
                i = e
            elif i in covered:  # overlap guard; should not happen with insertion scheme
                i += 1
            else:
                target.append(token_translation[tokens[i]])
                i += 1
        phonemes = lexicon.phonemize(tokens, cfg.mimic_acronym_failure)
        frames, alignment = synthesize_speech(
            phonemes, prototypes, cfg.noise_sigma,
            np.random.SeedSequence([int(seed), 0x5E, int(speech_rng.integers(2**31))]),
            cfg.min_duration, cfg.max_duration)
        return Utterance(uid, tokens, phonemes, frames, target, spans, alignment)

    splits = {}
    for split, n_utts in (("train", cfg.n_train), ("dev", cfg.n_dev), ("test", cfg.n_test)):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xA1, {"train": 0, "dev": 1, "test": 2}[split]]))
        if split == "train":
            plan = make_mention_plan(n_utts, rng, coverage=True)
        else:
            plan = make_mention_plan(n_utts, rng, density=cfg.test_ne_density, org_density=cfg.test_org_density)
        splits[split] = [build_utterance(f"{split}-{i:04d}", plan[i], rng, r_speech) for i in range(n_utts)]

    return Corpus(cfg, phoneme_inventory, prototypes, source_vocab, target_vocab,
                  lexicon, token_translation, dictionary, splits)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def save_corpus(corpus: Corpus, path):
    """Write meta.json, dict.jsonl, {split}.jsonl and {split}.frames.bin."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": CORPUS_FORMAT_VERSION,
        "config": asdict(corpus.config),
        "phoneme_inventory": corpus.phoneme_inventory,
        "prototypes": corpus.prototypes.tolist(),
        "source_vocab": corpus.source_vocab,
        "target_vocab": corpus.target_vocab,
        "lexicon_entries": {k: corpus.lexicon.entries[k] for k in sorted(corpus.lexicon.entries)},
        "acronyms": sorted(corpus.lexicon.acronyms),
        "letter_phonemes": corpus.lexicon.letter_phonemes,
        "acronym_homographs": corpus.lexicon.acronym_homographs,
        "token_translation": {k: corpus.token_translation[k] for k in sorted(corpus.token_translation)},
        "splits": sorted(corpus.splits),
    }
    (path / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
    with open(path / "dict.jsonl", "w") as fh:
        for ne in corpus.dictionary:
            fh.write(json.dumps({
                "id": ne.id, "source_surface": ne.source_surface, "phonemes": ne.phonemes,
                "target_form": ne.target_form, "category": ne.category, "acronym": ne.acronym,
            }) + "\n")
    for split, utts in corpus.splits.items():
        with open(path / f"{split}.jsonl", "w") as fh:
            for u in utts:
                fh.write(json.dumps({
                    "id": u.id,
                    "transcript_tokens": u.transcript_tokens,
                    "transcript_phonemes": u.transcript_phonemes,
                    "target_tokens": u.target_tokens,
                    "gold_entities": [list(g) for g in u.gold_entities],
                    "frame_alignment": u.frame_alignment,
                }) + "\n")
        write_blocks(path / f"{split}.frames.bin", ((u.id, u.speech_frames) for u in utts))


def load_corpus(path) -> Corpus:
    path = Path(path)
    meta_path = path / "meta.json"
    if not meta_path.exists():
        raise CorpusError(f"{path}: not a corpus directory (missing meta.json)")
    meta = json.loads(meta_path.read_text())
    if meta.get("format") != CORPUS_FORMAT_VERSION:
        raise CorpusError(f"corpus format version mismatch: {meta.get('format')!r}")
    cfg_dict = dict(meta["config"])
    for key in ("regular_phonemes", "name_phonemes", "utterance_words"):
        cfg_dict[key] = tuple(cfg_dict[key])
    cfg = CorpusConfig(**cfg_dict)
    lexicon = Lexicon(meta["lexicon_entries"], set(meta["acronyms"]),
                      meta["letter_phonemes"], meta["acronym_homographs"])
    dictionary = []
    with open(path / "dict.jsonl") as fh:
        for line in fh:
            rec = json.loads(line)
            dictionary.append(NamedEntity(**rec))
    splits = {}
    for split in meta["splits"]:
        frames = {}
        try:
            for uid, arr in read_blocks(path / f"{split}.frames.bin"):
                frames[uid] = arr
        except StoreFormatError as exc:
            known = f" after utterance {next(reversed(frames))!r}" if frames else ""
            raise CorpusError(f"{split}.frames.bin corrupted{known}: {exc}") from exc
        utts = []
        with open(path / f"{split}.jsonl") as fh:
            for line in fh:
                rec = json.loads(line)
                if rec["id"] not in frames:
                    raise CorpusError(f"missing frame block for utterance {rec['id']!r}")
                utts.append(Utterance(
                    rec["id"], rec["transcript_tokens"], rec["transcript_phonemes"],
                    frames[rec["id"]], rec["target_tokens"],
                    [tuple(g) for g in rec["gold_entities"]], rec["frame_alignment"]))
        splits[split] = utts
    prototypes = np.asarray(meta["prototypes"], dtype=np.float64)
    return Corpus(cfg, meta["phoneme_inventory"], prototypes, meta["source_vocab"],
                  meta["target_vocab"], lexicon, meta["token_translation"], dictionary, splits)
