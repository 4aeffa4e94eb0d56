"""Single-sentence word predictor: embedding, GRU, attention, fusion, tied softmax."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import BOS_ID, EOS_ID
from .errors import CorpusError
from .layers import (
    attention_backward,
    attention_forward,
    dropout_mask,
    embed_lookup,
    gru_backward,
    gru_step,
    multimodal_backward,
    multimodal_fuse,
    output_backward,
    output_logits,
)
from .model import SentenceGenParams, accumulate
from .numerics import Rng, check_shape, log_softmax


@dataclass
class SentenceGenState:
    h: np.ndarray
    t: int = 0


def init_state(sg: SentenceGenParams, init_h: np.ndarray | None = None) -> SentenceGenState:
    """Fresh layer-I state: zeros, or a copy of ``init_h`` (a paragraph state)."""
    if init_h is None:
        return SentenceGenState(np.zeros(sg.hidden_dim))
    init_h = np.asarray(init_h, dtype=np.float64)
    check_shape(init_h, (sg.hidden_dim,), "initial hidden state")
    return SentenceGenState(init_h.copy())


@dataclass
class StepCache:
    word: int
    attn: dict
    gru: object
    mm: object
    mask: np.ndarray | None
    out: object
    probs: np.ndarray
    h: np.ndarray
    target: int | None = None

    @property
    def attention_weights(self) -> dict:
        return {ch: c.weights for ch, c in self.attn.items()}


def step(
    sg: SentenceGenParams,
    state: SentenceGenState,
    word_id: int,
    pools: dict,
    mode: str = "eval",
    rng: Rng | None = None,
    dropout_rate: float = 0.0,
):
    """Consume one word and predict the next; returns ``(log_probs, new_state, cache)``.

    Attention for every channel looks at ``state.h``, the hidden state before
    this word is consumed. The GRU update never sees the attended features;
    they only enter through the multimodal layer.
    """
    x = embed_lookup(sg.emb, word_id)
    feats = {}
    attn_caches = {}
    for ch, ap in sg.attn.items():
        if ch not in pools:
            raise CorpusError(f"no feature pool for channel '{ch}'")
        feats[ch], attn_caches[ch] = attention_forward(ap, pools[ch], state.h)
    h, gru_cache = gru_step(sg.rnn1, x, state.h)
    m, mm_cache = multimodal_fuse(sg.mm, feats, h)
    mask = dropout_mask(m.shape, dropout_rate, mode, rng)
    if mask is not None:
        m = m * mask
    logits, out_cache = output_logits(sg.out, sg.out_emb, m)
    log_probs = log_softmax(logits)
    cache = StepCache(word_id, attn_caches, gru_cache, mm_cache, mask, out_cache, np.exp(log_probs), h)
    return log_probs, SentenceGenState(h, state.t + 1), cache


def step_backward(sg: SentenceGenParams, cache: StepCache, dlogits: np.ndarray, dh: np.ndarray, grads: dict):
    """Backward through one step.

    ``dlogits`` is the loss gradient at the logits and ``dh`` the gradient
    arriving at this step's output hidden state from later steps. Parameter
    gradients are added into ``grads``; returns the gradient w.r.t. the
    incoming hidden state.
    """
    dm, g = output_backward(sg.out, sg.out_emb, cache.out, dlogits)
    grads["emb.E"] += g.pop("E")
    accumulate(grads, "out", g)
    if cache.mask is not None:
        dm = dm * cache.mask
    dfeats, dh_mm, g = multimodal_backward(sg.mm, cache.mm, dm)
    accumulate(grads, "mm", g)
    dx, dh_prev, g = gru_backward(sg.rnn1, cache.gru, dh + dh_mm)
    accumulate(grads, "rnn1", g)
    grads["emb.E"][:, cache.word] += dx
    for ch, ap in sg.attn.items():
        _, dh_attn, g = attention_backward(ap, cache.attn[ch], dfeats[ch])
        accumulate(grads, f"attn.{ch}", g)
        dh_prev = dh_prev + dh_attn
    return dh_prev


def check_sentence(words) -> None:
    if len(words) < 2 or words[0] != BOS_ID or words[-1] != EOS_ID:
        raise CorpusError(f"sentence must start with BOS and end with EOS: {list(words)}")


@dataclass
class SentenceForward:
    """Teacher-forced pass over one sentence."""

    words: list
    per_word: list
    caches: list
    init_h: np.ndarray
    last_h: np.ndarray  # layer-I state after the last input word (the one predicting EOS)

    @property
    def cost(self) -> float:
        # Plain left-to-right sum, the same accumulation beam search performs.
        total = 0.0
        for c in self.per_word:
            total += c
        return total


def sentence_forward(
    sg: SentenceGenParams,
    init_h: np.ndarray | None,
    words,
    pools: dict,
    mode: str = "eval",
    rng: Rng | None = None,
    dropout_rate: float = 0.0,
) -> SentenceForward:
    words = [int(w) for w in words]
    check_sentence(words)
    state = init_state(sg, init_h)
    per_word, caches = [], []
    for t in range(len(words) - 1):
        log_probs, state, cache = step(sg, state, words[t], pools, mode, rng, dropout_rate)
        cache.target = words[t + 1]
        per_word.append(-float(log_probs[words[t + 1]]))
        caches.append(cache)
    start = init_state(sg, init_h).h
    return SentenceForward(words, per_word, caches, start, state.h)


def sentence_backward(sg: SentenceGenParams, fwd: SentenceForward, dlast_h: np.ndarray | None, grads: dict):
    """BPTT over a sentence; returns the gradient w.r.t. its initial state."""
    dh = np.zeros_like(fwd.last_h) if dlast_h is None else dlast_h.copy()
    for cache in reversed(fwd.caches):
        dlogits = cache.probs.copy()
        dlogits[cache.target] -= 1.0
        dh = step_backward(sg, cache, dlogits, dh, grads)
    return dh


def sentence_cost(sg: SentenceGenParams, init_h: np.ndarray | None, words, pools: dict):
    """Negative log-likelihood of ``words`` under teacher forcing.

    Returns ``(cost, per_word_costs)``; BOS is consumed as input and never
    scored, EOS is scored as the final target.
    """
    fwd = sentence_forward(sg, init_h, words, pools)
    return fwd.cost, fwd.per_word
