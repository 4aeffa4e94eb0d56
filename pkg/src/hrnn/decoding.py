"""Beam search with a bounded sentence pool, greedy decoding, and the paragraph loop.

The search code talks to the model through a small duck-typed interface so
tests can plug in hand-built cost models:

``vocab_size``
    number of word ids.
``paragraph_start()``
    opaque paragraph context for a new video.
``sentence_init(ctx)``
    layer-I state for the next sentence under ``ctx``.
``step(state, word, pools)``
    ``(log_probs, new_state)`` after consuming ``word``.
``advance(ctx, words, last_state)``
    context after the finished sentence ``words``; ``last_state`` is the
    state that predicted its EOS.

:class:`ModelDecoder` adapts :class:`~hrnn.model.ModelParams`.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from .corpus import BOS_ID, EOS_ID
from .errors import ConfigError
from .model import ModelParams
from .paragraph import embedding_average, init_paragraph_state, paragraph_advance, sentence_embed
from .sentence import init_state, step
from .training import EOP, MODES


@dataclass
class BeamConfig:
    beam_width: int = 5  # L
    pool_size: int = 5  # J
    max_sentence_len: int = 30  # generated tokens per sentence, EOS included
    max_sentences: int = 15

    def __post_init__(self):
        if self.beam_width < 1 or self.pool_size < 1:
            raise ConfigError("beam width and pool size must be positive")
        if self.pool_size > self.beam_width:
            raise ConfigError(f"pool size J={self.pool_size} exceeds beam width L={self.beam_width}")
        if self.max_sentence_len < 1 or self.max_sentences < 1:
            raise ConfigError("max_sentence_len and max_sentences must be positive")


@dataclass
class Hypothesis:
    words: tuple  # starts with BOS
    cost: float
    state: object  # state before consuming words[-1]; stepping it on words[-1] scores the next word


@dataclass
class Candidate:
    """A complete sentence (BOS ... EOS) with its summed word cost."""

    words: tuple
    cost: float
    last_state: object  # the state that predicted EOS

    @property
    def key(self):
        return (self.cost, self.words)


class SentencePool:
    """The ``capacity`` cheapest complete sentences seen so far, ascending.

    Equal costs are ordered lexicographically by word ids.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigError("pool capacity must be positive")
        self.capacity = capacity
        self.entries: list = []

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def full(self) -> bool:
        return len(self.entries) >= self.capacity

    @property
    def worst_cost(self) -> float:
        return self.entries[-1].cost if self.entries else np.inf

    def admit(self, cand: Candidate) -> bool:
        keys = [c.key for c in self.entries]
        if self.full:
            if cand.key >= keys[-1]:
                return False
            self.entries.pop()
            keys.pop()
        self.entries.insert(bisect.bisect_left(keys, cand.key), cand)
        return True


class ModelDecoder:
    """Adapts trained parameters to the search interface (evaluation mode)."""

    def __init__(self, params: ModelParams, mode: str = "hier"):
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
        if mode == "hier" and not params.has_paragraph:
            mode = "sent"
        self.params = params
        self.mode = mode
        self.sg = params.sentence_gen()
        self.pp = params.paragraph_gen() if mode == "hier" else None

    @property
    def vocab_size(self) -> int:
        return self.sg.vocab_size

    def paragraph_start(self):
        pstate = init_paragraph_state(self.pp) if self.pp is not None else None
        return (pstate, None)

    def sentence_init(self, ctx):
        return init_state(self.sg, ctx[1])

    def step(self, state, word, pools):
        log_probs, new_state, _ = step(self.sg, state, word, pools)
        return log_probs, new_state

    def advance(self, ctx, words, last_state):
        pstate, _ = ctx
        if self.mode == "sent":
            return ctx
        if self.mode == "cat":
            return (None, last_state.h)
        avg = embedding_average(self.sg.emb, words, self.params.config.avg_include_bos)
        s_emb, _ = sentence_embed(self.pp, avg, last_state.h)
        init_h, pstate, _ = paragraph_advance(self.pp, pstate, s_emb)
        return (pstate, init_h)


def as_decoder(model, mode: str = "hier"):
    return ModelDecoder(model, mode) if isinstance(model, ModelParams) else model


def beam_search_sentence(model, init_state_, pools: dict, config: BeamConfig, *, prune: bool = True) -> list:
    """Beam search for one sentence; returns up to J :class:`Candidate` objects by ascending cost.

    ``init_state_`` is a layer-I state (see ``sentence_init``); for plain
    parameters a hidden vector or ``None`` (zeros) is accepted too. Partial
    hypotheses costlier than every sentence in a full pool are dropped since
    extending a sequence never lowers its cost. BOS is never generated.
    """
    dec = as_decoder(model)
    if isinstance(dec, ModelDecoder) and (init_state_ is None or isinstance(init_state_, np.ndarray)):
        init_state_ = init_state(dec.sg, init_state_)
    L = config.beam_width
    pool = SentencePool(config.pool_size)
    beams = [Hypothesis((BOS_ID,), 0.0, init_state_)]
    for _ in range(config.max_sentence_len):
        if not beams:
            break
        expansions = []
        for hyp in beams:
            log_probs, new_state = dec.step(hyp.state, hyp.words[-1], pools)
            for w in range(dec.vocab_size):
                if w == BOS_ID:
                    continue
                expansions.append((hyp.cost + -float(log_probs[w]), hyp.words + (w,), hyp, new_state))
        expansions.sort(key=lambda e: (e[0], e[1]))
        beams = []
        for cost, words, _parent, new_state in expansions[:L]:
            if words[-1] == EOS_ID:
                pool.admit(Candidate(words, cost, new_state))
            else:
                beams.append(Hypothesis(words, cost, new_state))
        if prune and pool.full:
            worst = pool.worst_cost
            beams = [b for b in beams if b.cost <= worst]
    return list(pool.entries)


def greedy_decode(model, init_state_, pools: dict, max_len: int = 30) -> list:
    """Feed back the most probable word until EOS or ``max_len`` generated tokens.

    Picks the word minimizing the running cost (ties to the lowest id), which
    is the argmax of the word distribution and agrees with width-1 beam search
    even under floating-point ties.
    """
    dec = as_decoder(model)
    if isinstance(dec, ModelDecoder) and (init_state_ is None or isinstance(init_state_, np.ndarray)):
        init_state_ = init_state(dec.sg, init_state_)
    words = [BOS_ID]
    state = init_state_
    cost = 0.0
    for _ in range(max_len):
        log_probs, state = dec.step(state, words[-1], pools)
        best = None
        for w in range(dec.vocab_size):
            if w == BOS_ID:
                continue
            c = cost + -float(log_probs[w])
            if best is None or c < best[0]:
                best = (c, w)
        cost, w = best
        words.append(w)
        if w == EOS_ID:
            break
    return words


def generate_paragraph(model, video_pools: dict, config: BeamConfig, interval_pools=None, *,
                       mode: str = "hier", greedy: bool = False) -> list:
    """Decode a paragraph as a list of candidate lists (one list per sentence).

    With ``interval_pools`` (one channel->pool dict per sentence slot) exactly
    one list is produced per interval. Otherwise sentences are generated from
    the whole-video pools until the best candidate is the end-of-paragraph
    sentence (BOS EOS), which is not included, or ``max_sentences`` is hit.
    Only the best candidate of each list is fed to the paragraph generator.
    """
    dec = as_decoder(model, mode)
    ctx = dec.paragraph_start()
    out = []

    def decode(pools):
        init = dec.sentence_init(ctx)
        if greedy:
            words = greedy_decode(dec, init, pools, config.max_sentence_len)
            return _greedy_candidates(dec, init, words, pools)
        return beam_search_sentence(dec, init, pools, config)

    if interval_pools is not None:
        for pools in interval_pools:
            cands = decode(pools)
            out.append(cands)
            if cands:
                ctx = dec.advance(ctx, cands[0].words, cands[0].last_state)
        return out

    for _ in range(config.max_sentences):
        cands = decode(video_pools)
        if not cands or tuple(cands[0].words) == EOP:
            break
        out.append(cands)
        ctx = dec.advance(ctx, cands[0].words, cands[0].last_state)
    return out


def _greedy_candidates(dec, init, words, pools) -> list:
    """Wrap a greedy sentence as a single candidate (rescored, with its last state)."""
    if words[-1] != EOS_ID:
        return []
    state = init
    cost = 0.0
    for t in range(len(words) - 1):
        log_probs, state = dec.step(state, words[t], pools)
        cost += -float(log_probs[words[t + 1]])
    return [Candidate(tuple(words), cost, state)]


def record_interval_pools(record) -> list | None:
    """Per-sentence pools when every sentence of ``record`` carries an interval."""
    if not record.sentences or any(s.interval is None for s in record.sentences):
        return None
    pools = []
    for s in record.sentences:
        record.check_interval(s.interval)
        pools.append(record.pools(s.interval))
    return pools
