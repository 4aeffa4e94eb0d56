"""Sentence embedding, the sentence-level GRU, and the paragraph state layer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import BOS_ID, EOS_ID
from .layers import EmbeddingParams, gru_backward, gru_step
from .model import ParagraphGenParams
from .numerics import check_shape, stanh, stanh_grad


def average_ids(words, include_bos: bool = False) -> list:
    """Word ids that enter the embedding average (BOS dropped by default)."""
    ids = [int(w) for w in words if include_bos or w != BOS_ID]
    return ids or [EOS_ID]


def embedding_average(emb: EmbeddingParams, words, include_bos: bool = False) -> np.ndarray:
    ids = average_ids(words, include_bos)
    return emb.E[:, ids].mean(axis=1)


def embedding_average_backward(emb: EmbeddingParams, words, davg: np.ndarray, dE: np.ndarray,
                               include_bos: bool = False) -> None:
    ids = average_ids(words, include_bos)
    scale = 1.0 / len(ids)
    for i in ids:
        dE[:, i] += davg * scale


@dataclass
class SentenceEmbedCache:
    inp: np.ndarray
    pre: np.ndarray


def sentence_embed(pp: ParagraphGenParams, avg: np.ndarray, last_h: np.ndarray):
    """``stanh(W_s [avg ; last_h] + b_s)``; returns ``(s_emb, cache)``."""
    d_e = avg.shape[0]
    check_shape(last_h, (pp.W_s.shape[1] - d_e,), "sentence embed last_h")
    inp = np.concatenate([avg, last_h])
    pre = pp.W_s @ inp + pp.b_s
    return stanh(pre), SentenceEmbedCache(inp, pre)


def sentence_embed_backward(pp: ParagraphGenParams, cache: SentenceEmbedCache, ds: np.ndarray, d_e: int):
    """Returns ``(davg, dlast_h, grads)``."""
    dpre = ds * stanh_grad(cache.pre)
    dinp = pp.W_s.T @ dpre
    grads = {"W": np.outer(dpre, cache.inp), "b": dpre}
    return dinp[:d_e], dinp[d_e:], grads


@dataclass
class ParagraphRnnState:
    h2: np.ndarray
    sentence_index: int = 0


def init_paragraph_state(pp: ParagraphGenParams) -> ParagraphRnnState:
    return ParagraphRnnState(np.zeros(pp.rnn2.hidden_dim))


@dataclass
class AdvanceCache:
    gru: object
    inp: np.ndarray
    pre: np.ndarray


def paragraph_advance(pp: ParagraphGenParams, state: ParagraphRnnState, s_emb: np.ndarray):
    """Step the sentence-level GRU once and emit the next layer-I initial state.

    Returns ``(next_init_h, new_state, cache)``.
    """
    h2, gru_cache = gru_step(pp.rnn2, s_emb, state.h2)
    inp = np.concatenate([h2, s_emb])
    pre = pp.W_p @ inp + pp.b_p
    return stanh(pre), ParagraphRnnState(h2, state.sentence_index + 1), AdvanceCache(gru_cache, inp, pre)


def paragraph_advance_backward(pp: ParagraphGenParams, cache: AdvanceCache, dnext: np.ndarray, dh2: np.ndarray):
    """Backward of :func:`paragraph_advance`.

    ``dnext`` is the gradient at the emitted initial state and ``dh2`` the
    gradient reaching the new layer-II state from later sentences. Returns
    ``(ds_emb, dh2_prev, grads)``; ``grads`` maps ``"rnn2"`` and
    ``"para_state"`` to per-layer gradient dicts.
    """
    d_p = pp.rnn2.hidden_dim
    dpre = dnext * stanh_grad(cache.pre)
    dinp = pp.W_p.T @ dpre
    ds = dinp[d_p:].copy()
    dx, dh2_prev, rnn2_grads = gru_backward(pp.rnn2, cache.gru, dh2 + dinp[:d_p])
    ds += dx
    para_grads = {"W": np.outer(dpre, cache.inp), "b": dpre}
    return ds, dh2_prev, {"rnn2": rnn2_grads, "para_state": para_grads}
