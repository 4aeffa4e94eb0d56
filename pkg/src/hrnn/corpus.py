"""Feature-sequence corpora: vocabulary, records, JSON I/O and a synthetic generator.

A corpus file is UTF-8 JSON::

    {"vocab": [...], "split": "train", "meta": {...},
     "records": [{"id": ..., "channels": {name: {"shape": [M, K, d], "data": [...]}},
                  "sentences": [{"tokens": [...], "interval": [s, e]}]}]}

``vocab``, ``split``, ``meta`` and ``interval`` are optional.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CorpusError, VocabularyError
from .numerics import make_rng

BOS = "<bos>"
EOS = "<eos>"
BOS_ID = 0
EOS_ID = 1


class Vocabulary:
    """Bijective token <-> id map with BOS fixed at 0 and EOS at 1."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tokens[:2] != [BOS, EOS]:
            raise VocabularyError(f"vocabulary must start with {BOS!r}, {EOS!r}")
        if len(set(tokens)) != len(tokens):
            dup = [t for t, c in Counter(tokens).items() if c > 1]
            raise VocabularyError(f"duplicate vocabulary tokens: {dup}")
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def __contains__(self, token) -> bool:
        return token in self.index

    def encode(self, tokens) -> list:
        """Token list -> ``[BOS, ids..., EOS]``."""
        unknown = [t for t in tokens if t not in self.index]
        if unknown:
            raise VocabularyError(f"unknown tokens: {sorted(set(unknown))}")
        return [BOS_ID] + [self.index[t] for t in tokens] + [EOS_ID]

    def decode(self, ids) -> list:
        return [self.tokens[i] for i in ids if i not in (BOS_ID, EOS_ID)]


def build_vocabulary(streams) -> Vocabulary:
    """Ids ordered by frequency (descending), ties broken alphabetically."""
    counts = Counter()
    for tokens in streams:
        counts.update(t for t in tokens if t not in (BOS, EOS))
    if not counts:
        raise CorpusError("cannot build a vocabulary from an empty token stream")
    ordered = sorted(counts, key=lambda t: (-counts[t], t))
    return Vocabulary([BOS, EOS] + ordered)


@dataclass
class Sentence:
    tokens: list
    interval: tuple | None = None


@dataclass
class VideoRecord:
    id: str
    channels: dict  # name -> array of shape (M, K, d)
    sentences: list

    def num_frames(self, channel: str) -> int:
        return self.channels[channel].shape[0]

    def pools(self, interval=None) -> dict:
        """Per-channel feature pools ``(K*M, d)`` for a frame window (all frames if None)."""
        out = {}
        for name, feats in self.channels.items():
            window = feats if interval is None else feats[interval[0]:interval[1]]
            out[name] = window.reshape(-1, feats.shape[2])
        return out

    def check_interval(self, interval) -> None:
        s, e = interval
        for name, feats in self.channels.items():
            if not 0 <= s < e <= feats.shape[0]:
                raise CorpusError(
                    f"record {self.id!r}: interval [{s}, {e}) outside {feats.shape[0]} frames of channel {name!r}"
                )


@dataclass
class Corpus:
    vocab: Vocabulary
    records: list
    split: str | None = None
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def encoded(self, record: VideoRecord) -> list:
        return [self.vocab.encode(s.tokens) for s in record.sentences]

    def channel_dims(self) -> dict:
        first = self.records[0]
        return {name: int(arr.shape[2]) for name, arr in first.channels.items()}

    def validate(self) -> None:
        seen = set()
        dims = None
        for rec in self.records:
            if rec.id in seen:
                raise CorpusError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)
            if not rec.channels:
                raise CorpusError(f"record {rec.id!r}: no feature channels")
            rec_dims = {}
            for name, arr in rec.channels.items():
                if arr.ndim != 3 or min(arr.shape) < 1:
                    raise CorpusError(f"record {rec.id!r}: channel {name!r} must have a nonempty [M, K, d] shape")
                if not np.all(np.isfinite(arr)):
                    raise CorpusError(f"record {rec.id!r}: channel {name!r} has non-finite features")
                rec_dims[name] = arr.shape[2]
            if dims is None:
                dims = rec_dims
            elif rec_dims != dims:
                raise CorpusError(f"record {rec.id!r}: channels {rec_dims} differ from {dims}")
            if not rec.sentences:
                raise CorpusError(f"record {rec.id!r}: no sentences")
            prev_start = -1
            for k, sent in enumerate(rec.sentences):
                if not sent.tokens:
                    raise CorpusError(f"record {rec.id!r}: sentence {k} is empty")
                unknown = sorted({t for t in sent.tokens if t not in self.vocab or t in (BOS, EOS)})
                if unknown:
                    raise CorpusError(f"record {rec.id!r}: sentence {k} has unknown tokens {unknown}")
                if sent.interval is not None:
                    rec.check_interval(sent.interval)
                    if sent.interval[0] < prev_start:
                        raise CorpusError(f"record {rec.id!r}: intervals are not ordered at sentence {k}")
                    prev_start = sent.interval[0]


# --------------------------------------------------------------------------
# JSON I/O


def corpus_to_json(corpus: Corpus) -> dict:
    out = {"vocab": list(corpus.vocab.tokens)}
    if corpus.split is not None:
        out["split"] = corpus.split
    if corpus.meta:
        out["meta"] = corpus.meta
    records = []
    for rec in corpus.records:
        channels = {
            name: {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()} for name, arr in rec.channels.items()
        }
        sentences = []
        for s in rec.sentences:
            entry = {"tokens": list(s.tokens)}
            if s.interval is not None:
                entry["interval"] = list(s.interval)
            sentences.append(entry)
        records.append({"id": rec.id, "channels": channels, "sentences": sentences})
    out["records"] = records
    return out


def dumps_corpus(corpus: Corpus) -> str:
    return json.dumps(corpus_to_json(corpus), separators=(",", ":"), ensure_ascii=False) + "\n"


def save_corpus(corpus: Corpus, path) -> None:
    Path(path).write_text(dumps_corpus(corpus), encoding="utf-8")


def _parse_record(raw, index: int) -> VideoRecord:
    where = f"record #{index}"
    if not isinstance(raw, dict):
        raise CorpusError(f"{where}: expected an object")
    rid = raw.get("id")
    if not isinstance(rid, str):
        raise CorpusError(f"{where}: missing string field 'id'")
    where = f"record {rid!r}"
    channels = {}
    for name, ch in (raw.get("channels") or {}).items():
        try:
            shape = tuple(int(x) for x in ch["shape"])
            data = np.asarray(ch["data"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise CorpusError(f"{where}: channel {name!r} malformed ({exc})") from None
        if len(shape) != 3 or data.ndim != 1 or data.size != math.prod(shape):
            raise CorpusError(f"{where}: channel {name!r} data length {data.size} does not match shape {list(shape)}")
        channels[name] = data.reshape(shape)
    sentences = []
    for k, s in enumerate(raw.get("sentences") or []):
        tokens = s.get("tokens") if isinstance(s, dict) else None
        if isinstance(tokens, str):
            tokens = tokens.split()
        if not isinstance(tokens, list):
            raise CorpusError(f"{where}: sentence {k} lacks a token list")
        interval = s.get("interval")
        if interval is not None:
            if len(interval) != 2:
                raise CorpusError(f"{where}: sentence {k} interval must be [start, end]")
            interval = (int(interval[0]), int(interval[1]))
        sentences.append(Sentence([str(t) for t in tokens], interval))
    if not sentences:
        raise CorpusError(f"{where}: no sentences")
    return VideoRecord(rid, channels, sentences)


def loads_corpus(text: str) -> Corpus:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"corpus parse error at line {exc.lineno} column {exc.colno} (char {exc.pos}): {exc.msg}") from None
    if not isinstance(raw, dict) or not isinstance(raw.get("records"), list):
        raise CorpusError("corpus must be an object with a 'records' list")
    records = [_parse_record(r, i) for i, r in enumerate(raw["records"])]
    if not records:
        raise CorpusError("corpus has no records")
    if "vocab" in raw:
        try:
            vocab = Vocabulary(raw["vocab"])
        except VocabularyError as exc:
            raise CorpusError(str(exc)) from None
    else:
        vocab = build_vocabulary(s.tokens for r in records for s in r.sentences)
    corpus = Corpus(vocab, records, raw.get("split"), raw.get("meta") or {})
    corpus.validate()
    return corpus


def load_corpus(path) -> Corpus:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus {path}: {exc}") from None
    return loads_corpus(text)


def split_corpus(corpus: Corpus, num_test: int):
    """Last ``num_test`` records become the test split; both share the vocabulary."""
    if not 0 < num_test < len(corpus):
        raise CorpusError(f"cannot hold out {num_test} of {len(corpus)} records")
    cut = len(corpus) - num_test
    train = Corpus(corpus.vocab, corpus.records[:cut], "train", dict(corpus.meta))
    test = Corpus(corpus.vocab, corpus.records[cut:], "test", dict(corpus.meta))
    return train, test


# --------------------------------------------------------------------------
# synthetic corpora

VERBS = ["take", "cut", "wash", "peel", "slice", "rinse", "open", "put",
         "stir", "pour", "fill", "chop", "grate", "dry", "place", "move"]
OBJECTS = ["knife", "potato", "onion", "board", "bowl", "carrot", "plate", "pan",
           "cup", "lime", "egg", "bread", "herb", "pot", "jar", "towel"]
SUBJECT = "person"
CHANNELS = ("appearance", "motion")


@dataclass
class SynthSpec:
    num_videos: int = 30
    sentences_per_video: int = 3
    num_activities: int = 10
    feature_dim: int = 16
    noise_sigma: float = 0.0
    ambiguity: bool = False
    seed: int = 0
    frames_per_sentence: int = 2

    def validate(self) -> None:
        for name in ("num_videos", "sentences_per_video", "num_activities", "feature_dim", "frames_per_sentence"):
            if getattr(self, name) < 1:
                raise CorpusError(f"synth: {name} must be positive")
        if self.noise_sigma < 0:
            raise CorpusError("synth: noise_sigma must be nonnegative")
        if self.ambiguity:
            if self.num_activities < 4 or self.num_activities % 2:
                raise CorpusError("synth: ambiguity needs an even number of activities >= 4")
            if self.num_activities // 2 > len(VERBS):
                raise CorpusError("synth: too many activities for the word bank")
        elif self.num_activities > min(len(VERBS), len(OBJECTS)):
            raise CorpusError(f"synth: at most {min(len(VERBS), len(OBJECTS))} activities supported")
        if self.feature_dim < self.num_classes() + 1:
            raise CorpusError(f"synth: feature_dim must be at least {self.num_classes() + 1}")

    def num_classes(self) -> int:
        return self.num_activities // 2 + 1 if self.ambiguity else self.num_activities


def _synth_chain(spec: SynthSpec, rng):
    """Activity templates, visual classes, initial distribution and transitions."""
    A = spec.num_activities
    if not spec.ambiguity:
        verbs = [VERBS[i] for i in rng.permutation(len(VERBS))[:A]]
        objects = [OBJECTS[i] for i in rng.permutation(len(OBJECTS))[:A]]
        templates = [[SUBJECT, v, o] for v, o in zip(verbs, objects)]
        visual = list(range(A))
        initial = np.full(A, 1.0 / A)
        transition = rng.dirichlet(np.full(A, 0.5), size=A)
        return templates, visual, initial, transition, []

    # Activity o*H + i is action i performed on object o. Action 0 ("take")
    # shows the object; the other actions look the same for both objects, so
    # only the preceding activity (the object persists) tells them apart.
    H = A // 2
    verbs = ["take"] + [VERBS[i] for i in rng.permutation(np.arange(1, len(VERBS)))[: H - 1]]
    objects = [OBJECTS[i] for i in rng.permutation(len(OBJECTS))[:2]]
    templates = [[SUBJECT, verbs[i], objects[o]] for o in range(2) for i in range(H)]
    visual = [(o if i == 0 else i + 1) for o in range(2) for i in range(H)]
    initial = np.zeros(A)
    initial[0] = initial[H] = 0.5
    transition = np.zeros((A, A))
    for o in range(2):
        for i in range(H):
            nexts = [j for j in range(1, H) if j != i] or [1]
            for j in nexts:
                transition[o * H + i, o * H + j] = 1.0 / len(nexts)
    pairs = [[i, H + i] for i in range(1, H)]
    return templates, visual, initial, transition, pairs


def synth_corpus(spec: SynthSpec) -> Corpus:
    """Markov-chain activity videos with one-hot (+noise) feature blocks.

    Each sentence is an activity template aligned with its own interval of
    ``frames_per_sentence`` frames. The appearance channel carries two patches
    per frame (the activity's visual class and a constant background patch);
    the motion channel carries one.
    """
    spec.validate()
    rng = make_rng(spec.seed)
    templates, visual, initial, transition, pairs = _synth_chain(spec, rng)
    A = spec.num_activities
    d = spec.feature_dim
    fps = spec.frames_per_sentence
    records = []
    for v in range(spec.num_videos):
        acts = [int(rng.choice(A, p=initial))]
        for _ in range(spec.sentences_per_video - 1):
            acts.append(int(rng.choice(A, p=transition[acts[-1]])))
        M = fps * len(acts)
        appearance = np.zeros((M, 2, d))
        motion = np.zeros((M, 1, d))
        sentences = []
        for n, a in enumerate(acts):
            frames = slice(n * fps, (n + 1) * fps)
            appearance[frames, 0, visual[a]] = 1.0
            appearance[frames, 1, d - 1] = 1.0
            motion[frames, 0, visual[a]] = 1.0
            sentences.append(Sentence(list(templates[a]), (n * fps, (n + 1) * fps)))
        if spec.noise_sigma > 0:
            appearance += rng.standard_normal(appearance.shape) * spec.noise_sigma
            motion += rng.standard_normal(motion.shape) * spec.noise_sigma
        records.append(VideoRecord(f"video{v:04d}", {"appearance": appearance, "motion": motion}, sentences))

    vocab = build_vocabulary(
        [t for t in templates] + [s.tokens for r in records for s in r.sentences]
    )
    meta = {
        "generator": "synth",
        "spec": {k: getattr(spec, k) for k in spec.__dataclass_fields__},
        "ambiguity": spec.ambiguity,
        "templates": [" ".join(t) for t in templates],
        "visual_class": visual,
        "initial": initial.tolist(),
        "transition": transition.tolist(),
        "ambiguous_pairs": pairs,
    }
    corpus = Corpus(vocab, records, None, meta)
    corpus.validate()
    return corpus


def context_information_gap(initial, transition, pairs, num_sentences: int) -> float:
    """Expected extra cost (nats) per ambiguous-activity occurrence without context.

    A predictor that sees only the features cannot separate the members of an
    ambiguous pair, so its best guess is the pair's marginal split at that
    position; a predictor that also knows the preceding activity uses the
    transition row instead. The result is the occurrence-weighted average of
    the entropy difference over positions ``1..num_sentences-1``.
    """
    initial = np.asarray(initial, dtype=np.float64)
    T = np.asarray(transition, dtype=np.float64)
    gap_total = 0.0
    weight_total = 0.0
    marg = initial
    for _ in range(1, num_sentences):
        prev = marg
        marg = prev @ T
        for a, b in pairs:
            mass = marg[a] + marg[b]
            if mass <= 0:
                continue
            free = _binary_entropy(marg[a] / mass)
            aware = 0.0
            for c in range(len(prev)):
                pc = prev[c] * (T[c, a] + T[c, b])
                if pc > 0:
                    aware += pc / mass * _binary_entropy(T[c, a] / (T[c, a] + T[c, b]))
            gap_total += mass * (free - aware)
            weight_total += mass
    return gap_total / weight_total if weight_total else 0.0


def _binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -(p * math.log(p) + (1 - p) * math.log(1 - p))
