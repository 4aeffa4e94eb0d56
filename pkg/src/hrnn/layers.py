"""Individual layers of the captioner, each with a hand-written backward pass.

Parameter containers are small dataclasses holding *references* into the
model's tensor store, so in-place optimizer updates are visible everywhere and
the embedding table shared by the input and output layers is one array.

Backward functions return input gradients plus a ``{field: grad}`` dict for
the layer's parameters; the caller decides where to accumulate them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import ConfigError, DimensionError, VocabularyError
from .numerics import (
    ACTIVATIONS,
    Rng,
    check_shape,
    sigmoid,
    softmax,
    stanh,
    stanh_grad,
)


# --------------------------------------------------------------------------
# word embedding


@dataclass
class EmbeddingParams:
    E: np.ndarray  # (d_e, N); column i is the embedding of word i

    @property
    def dim(self) -> int:
        return self.E.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.E.shape[1]


def embed_lookup(params: EmbeddingParams, word_id: int) -> np.ndarray:
    if not 0 <= word_id < params.vocab_size:
        raise VocabularyError(f"word id {word_id} outside vocabulary of size {params.vocab_size}")
    return params.E[:, word_id].copy()


def embed_backward(params: EmbeddingParams, word_id: int, dx: np.ndarray) -> dict:
    dE = np.zeros_like(params.E)
    dE[:, word_id] = dx
    return {"E": dE}


# --------------------------------------------------------------------------
# GRU


GRU_FIELDS = ("W_r", "U_r", "b_r", "W_z", "U_z", "b_z", "W_h", "U_h", "b_h")


@dataclass
class GruParams:
    W_r: np.ndarray
    U_r: np.ndarray
    b_r: np.ndarray
    W_z: np.ndarray
    U_z: np.ndarray
    b_z: np.ndarray
    W_h: np.ndarray
    U_h: np.ndarray
    b_h: np.ndarray
    state_activation: str = "relu"

    @property
    def input_dim(self) -> int:
        return self.W_r.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.U_r.shape[0]


@dataclass
class GruCache:
    x: np.ndarray
    h_prev: np.ndarray
    r: np.ndarray
    z: np.ndarray
    a_h: np.ndarray  # candidate pre-activation
    h_tilde: np.ndarray


def gru_step(params: GruParams, x: np.ndarray, h_prev: np.ndarray, *, gates: Mapping | None = None):
    """One GRU update; returns ``(h, cache)``.

    ``gates`` is a testing hook: a mapping with optional ``"r"``/``"z"`` arrays
    that replace the computed gate activations.
    """
    check_shape(x, (params.input_dim,), "gru input")
    check_shape(h_prev, (params.hidden_dim,), "gru h_prev")
    act, _ = ACTIVATIONS[params.state_activation]
    r = sigmoid(params.W_r @ x + params.U_r @ h_prev + params.b_r)
    z = sigmoid(params.W_z @ x + params.U_z @ h_prev + params.b_z)
    if gates:
        r = np.asarray(gates.get("r", r), dtype=np.float64)
        z = np.asarray(gates.get("z", z), dtype=np.float64)
    a_h = params.W_h @ x + params.U_h @ (r * h_prev) + params.b_h
    h_tilde = act(a_h)
    h = z * h_prev + (1.0 - z) * h_tilde
    return h, GruCache(x, h_prev, r, z, a_h, h_tilde)


def gru_backward(params: GruParams, cache: GruCache, dh: np.ndarray):
    """Returns ``(dx, dh_prev, grads)``."""
    _, act_grad = ACTIVATIONS[params.state_activation]
    x, hp, r, z = cache.x, cache.h_prev, cache.r, cache.z
    dz = dh * (hp - cache.h_tilde)
    da_h = dh * (1.0 - z) * act_grad(cache.a_h)
    dhp = dh * z

    rh = r * hp
    drh = params.U_h.T @ da_h
    dhp += drh * r
    da_r = drh * hp * r * (1.0 - r)
    da_z = dz * z * (1.0 - z)

    dx = params.W_h.T @ da_h + params.W_z.T @ da_z + params.W_r.T @ da_r
    dhp += params.U_z.T @ da_z + params.U_r.T @ da_r
    grads = {
        "W_r": np.outer(da_r, x), "U_r": np.outer(da_r, hp), "b_r": da_r,
        "W_z": np.outer(da_z, x), "U_z": np.outer(da_z, hp), "b_z": da_z,
        "W_h": np.outer(da_h, x), "U_h": np.outer(da_h, rh), "b_h": da_h,
    }
    return dx, dhp, grads


# --------------------------------------------------------------------------
# attention over a feature pool


@dataclass
class AttentionParams:
    W_q: np.ndarray  # (d_a, d_v)
    U_q: np.ndarray  # (d_a, d_h)
    b_q: np.ndarray  # (d_a,)
    w: np.ndarray  # (d_a,)


@dataclass
class AttentionCache:
    pool: np.ndarray
    h_prev: np.ndarray
    pre: np.ndarray  # (KM, d_a)
    act: np.ndarray  # stanh(pre)
    weights: np.ndarray


def _check_pool(pool: np.ndarray) -> None:
    if pool.ndim != 2 or pool.shape[0] == 0:
        raise DimensionError(f"feature pool must be a nonempty (KM, d_v) matrix, got shape {pool.shape}")


def _attention_pre(params: AttentionParams, pool: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
    _check_pool(pool)
    if pool.shape[1] != params.W_q.shape[1]:
        raise DimensionError(f"pool feature dim {pool.shape[1]} != W_q input dim {params.W_q.shape[1]}")
    check_shape(h_prev, (params.U_q.shape[1],), "attention h_prev")
    return pool @ params.W_q.T + (params.U_q @ h_prev + params.b_q)


def attention_scores(params: AttentionParams, pool: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
    """One relevance score per pooled feature, conditioned on ``h_prev``."""
    return stanh(_attention_pre(params, pool, h_prev)) @ params.w


def attend(scores: np.ndarray, pool: np.ndarray):
    """Softmax the scores and return ``(weighted_average, weights)``."""
    _check_pool(pool)
    if scores.shape != (pool.shape[0],):
        raise DimensionError(f"{scores.shape[0]} scores for a pool of {pool.shape[0]} features")
    weights = softmax(scores)
    return weights @ pool, weights


def attention_forward(params: AttentionParams, pool: np.ndarray, h_prev: np.ndarray):
    pre = _attention_pre(params, pool, h_prev)
    act = stanh(pre)
    u, weights = attend(act @ params.w, pool)
    return u, AttentionCache(pool, h_prev, pre, act, weights)


def attention_backward(params: AttentionParams, cache: AttentionCache, du: np.ndarray):
    """Returns ``(dpool, dh_prev, grads)``."""
    beta = cache.weights
    dbeta = cache.pool @ du
    dq = beta * (dbeta - beta @ dbeta)
    dpre = np.outer(dq, params.w) * stanh_grad(cache.pre)
    dpre_sum = dpre.sum(axis=0)
    dpool = np.outer(beta, du) + dpre @ params.W_q
    grads = {
        "W_q": dpre.T @ cache.pool,
        "U_q": np.outer(dpre_sum, cache.h_prev),
        "b_q": dpre_sum,
        "w": cache.act.T @ dq,
    }
    return dpool, params.U_q.T @ dpre_sum, grads


# --------------------------------------------------------------------------
# multimodal fusion


@dataclass
class MultimodalParams:
    W: dict  # channel name -> (d_m, d_v)
    U_m: np.ndarray  # (d_m, d_h)
    b_m: np.ndarray  # (d_m,)


@dataclass
class MultimodalCache:
    feats: dict
    h: np.ndarray
    pre: np.ndarray


def multimodal_fuse(params: MultimodalParams, feats: Mapping[str, np.ndarray], h: np.ndarray):
    """``stanh(sum_c W_c u_c + U_m h + b_m)``; returns ``(m, cache)``."""
    if set(feats) != set(params.W):
        raise DimensionError(f"channels {sorted(feats)} do not match multimodal weights {sorted(params.W)}")
    check_shape(h, (params.U_m.shape[1],), "multimodal h")
    pre = params.U_m @ h + params.b_m
    for name, W in params.W.items():
        u = feats[name]
        check_shape(u, (W.shape[1],), f"attended feature '{name}'")
        pre = pre + W @ u
    return stanh(pre), MultimodalCache(dict(feats), h, pre)


def multimodal_backward(params: MultimodalParams, cache: MultimodalCache, dm: np.ndarray):
    """Returns ``(dfeats, dh, grads)``; weight grads are keyed ``W.<channel>``."""
    dpre = dm * stanh_grad(cache.pre)
    dfeats = {}
    grads = {"U_m": np.outer(dpre, cache.h), "b_m": dpre}
    for name, W in params.W.items():
        dfeats[name] = W.T @ dpre
        grads[f"W.{name}"] = np.outer(dpre, cache.feats[name])
    return dfeats, params.U_m.T @ dpre, grads


# --------------------------------------------------------------------------
# dropout


def dropout_mask(shape, rate: float, mode: str, rng: Rng | None) -> np.ndarray | None:
    """Inverted-dropout mask, or ``None`` when dropout is a passthrough."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ConfigError(f"unknown mode {mode!r}")
    if mode == "eval" or rate == 0.0:
        return None
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def dropout(x: np.ndarray, rate: float, mode: str, rng: Rng | None = None) -> np.ndarray:
    mask = dropout_mask(x.shape, rate, mode, rng)
    return x if mask is None else x * mask


# --------------------------------------------------------------------------
# hidden layer + softmax projection tied to the embedding table


@dataclass
class OutputParams:
    W_hid: np.ndarray  # (d_e, d_m)
    b_hid: np.ndarray  # (d_e,)
    b_soft: np.ndarray | None = None  # (N,); None disables the softmax bias


@dataclass
class OutputCache:
    m: np.ndarray
    pre: np.ndarray
    y: np.ndarray


def output_logits(out: OutputParams, emb: EmbeddingParams, m: np.ndarray):
    """Logits ``E^T stanh(W_hid m + b_hid) + b_soft``; returns ``(logits, cache)``."""
    check_shape(m, (out.W_hid.shape[1],), "output input")
    if out.W_hid.shape[0] != emb.dim:
        raise DimensionError(f"hidden layer dim {out.W_hid.shape[0]} != embedding dim {emb.dim}")
    pre = out.W_hid @ m + out.b_hid
    y = stanh(pre)
    logits = emb.E.T @ y
    if out.b_soft is not None:
        logits = logits + out.b_soft
    return logits, OutputCache(m, pre, y)


def output_backward(out: OutputParams, emb: EmbeddingParams, cache: OutputCache, dlogits: np.ndarray):
    """Returns ``(dm, grads)``; ``grads["E"]`` is the tied-table contribution."""
    grads = {"E": np.outer(cache.y, dlogits)}
    if out.b_soft is not None:
        grads["b_soft"] = dlogits.copy()
    dpre = (emb.E @ dlogits) * stanh_grad(cache.pre)
    grads["W_hid"] = np.outer(dpre, cache.m)
    grads["b_hid"] = dpre
    return out.W_hid.T @ dpre, grads

