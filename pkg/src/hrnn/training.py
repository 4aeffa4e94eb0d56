"""Paragraph loss, BPTT through both recurrences, RMSPROP, and the training loop.

Three training modes share one code path:

* ``hier`` -- sentences are chained through the paragraph generator and an
  end-of-paragraph sentence (BOS EOS) is appended as an extra target;
* ``sent`` -- every sentence starts from a zero layer-I state;
* ``cat``  -- the layer-I state carries across sentence boundaries and is
  zero only at the start of the paragraph.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .corpus import BOS_ID, EOS_ID, Corpus, VideoRecord
from .errors import ConfigError, CorpusError, TrainingError
from .model import ModelParams, accumulate
from .numerics import make_rng
from .paragraph import (
    embedding_average,
    embedding_average_backward,
    init_paragraph_state,
    paragraph_advance,
    paragraph_advance_backward,
    sentence_embed,
    sentence_embed_backward,
)
from .sentence import sentence_backward, sentence_forward

log = logging.getLogger(__name__)

MODES = ("hier", "sent", "cat")
EOP = (BOS_ID, EOS_ID)


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-6
    l1: float = 1e-6
    l2: float = 1e-4
    grad_clip: float | None = None
    epochs: int = 10
    seed: int = 0
    mode: str = "hier"
    dropout_rate: float = 0.5
    patience: int | None = None  # early stop on held-out perplexity

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be nonnegative")
        if not 0 <= self.rmsprop_decay < 1:
            raise ConfigError("rmsprop_decay must lie in [0, 1)")
        if self.rmsprop_epsilon <= 0:
            raise ConfigError("rmsprop_epsilon must be positive")
        if self.l1 < 0 or self.l2 < 0:
            raise ConfigError("regularization weights must be nonnegative")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ConfigError("grad_clip must be positive")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigError("dropout_rate must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


# --------------------------------------------------------------------------
# paragraphs


@dataclass
class Paragraph:
    """A record with its sentences encoded and feature pools sliced."""

    id: str
    sentences: list  # word-id lists, each BOS ... EOS
    pools: list  # one channel->pool dict per sentence
    video_pools: dict  # whole-video pools (used by the EOP sentence)

    @property
    def num_words(self) -> int:
        return sum(len(s) - 1 for s in self.sentences)


def prepare(corpus: Corpus, record: VideoRecord) -> Paragraph:
    sentences = corpus.encoded(record)
    pools = []
    for s in record.sentences:
        if s.interval is not None:
            record.check_interval(s.interval)
        pools.append(record.pools(s.interval))
    return Paragraph(record.id, sentences, pools, record.pools())


def prepare_corpus(corpus: Corpus) -> list:
    return [prepare(corpus, r) for r in corpus.records]


@dataclass
class ParagraphForward:
    mode: str
    sentences: list  # word-id lists actually scored (EOP included in hier mode)
    forwards: list  # SentenceForward per sentence
    embeds: list = field(default_factory=list)  # SentenceEmbedCache per chained sentence
    advances: list = field(default_factory=list)  # AdvanceCache per chained sentence
    include_bos: bool = False

    @property
    def nll(self) -> float:
        total = 0.0
        for f in self.forwards:
            total += f.cost
        return total

    @property
    def word_count(self) -> int:
        return sum(len(f.per_word) for f in self.forwards)


def paragraph_loss(
    params: ModelParams,
    para: Paragraph,
    mode: str = "hier",
    *,
    train: bool = False,
    rng=None,
    dropout_rate: float = 0.0,
) -> ParagraphForward:
    """Forward pass over a paragraph.

    The result carries the summed negative log-likelihood (``.nll``), the
    number of scored words (``.word_count``) and every cache needed by
    :func:`backprop`.
    """
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    if not para.sentences:
        raise CorpusError(f"record {para.id!r} has no sentences")
    sg = params.sentence_gen()
    phase = "train" if train else "eval"
    sentences = list(para.sentences)
    pools = list(para.pools)
    pp = None
    if mode == "hier":
        pp = params.paragraph_gen()
        sentences.append(list(EOP))
        pools.append(para.video_pools)
    include_bos = params.config.avg_include_bos

    fwd = ParagraphForward(mode, sentences, [], include_bos=include_bos)
    init_h = None
    pstate = init_paragraph_state(pp) if pp is not None else None
    last = len(sentences) - 1
    for n, (words, pl) in enumerate(zip(sentences, pools)):
        sf = sentence_forward(sg, init_h, words, pl, phase, rng, dropout_rate)
        fwd.forwards.append(sf)
        if n == last:
            break
        if mode == "hier":
            avg = embedding_average(sg.emb, words, include_bos)
            s_emb, se_cache = sentence_embed(pp, avg, sf.last_h)
            init_h, pstate, adv_cache = paragraph_advance(pp, pstate, s_emb)
            fwd.embeds.append(se_cache)
            fwd.advances.append(adv_cache)
        elif mode == "cat":
            init_h = sf.last_h
        else:
            init_h = None
    return fwd


def backprop(params: ModelParams, fwd: ParagraphForward) -> dict:
    """Gradients of ``fwd.nll`` w.r.t. every tensor in ``params``."""
    grads = params.zeros_like()
    sg = params.sentence_gen()
    pp = params.paragraph_gen() if fwd.mode == "hier" else None
    d_e = params.config.d_e
    dinit_next = None
    dh2 = np.zeros(params.config.d_p) if pp is not None else None
    last = len(fwd.forwards) - 1
    for n in range(last, -1, -1):
        sf = fwd.forwards[n]
        dlast = None
        if n < last and fwd.mode == "hier":
            ds, dh2, g = paragraph_advance_backward(pp, fwd.advances[n], dinit_next, dh2)
            accumulate(grads, "rnn2", g["rnn2"])
            accumulate(grads, "para_state", g["para_state"])
            davg, dlast, g = sentence_embed_backward(pp, fwd.embeds[n], ds, d_e)
            accumulate(grads, "sent_embed", g)
            embedding_average_backward(sg.emb, sf.words, davg, grads["emb.E"], fwd.include_bos)
        elif n < last and fwd.mode == "cat":
            dlast = dinit_next
        dinit_next = sentence_backward(sg, sf, dlast, grads)
    return grads


def loss_and_grads(params, para, mode="hier", **kw):
    fwd = paragraph_loss(params, para, mode, **kw)
    return fwd.nll, fwd.word_count, backprop(params, fwd)


def corpus_perplexity(params: ModelParams, paragraphs, mode: str = "hier") -> float:
    """Total negative log-likelihood over total scored words (natural log)."""
    paragraphs = list(paragraphs)
    if not paragraphs:
        raise CorpusError("corpus_perplexity needs at least one paragraph")
    nll = 0.0
    count = 0
    for para in paragraphs:
        fwd = paragraph_loss(params, para, mode)
        nll += fwd.nll
        count += fwd.word_count
    return nll / count


# --------------------------------------------------------------------------
# optimizer


@dataclass
class RmspropState:
    cache: dict  # name -> running mean of squared gradients

    @classmethod
    def zeros(cls, params: ModelParams) -> "RmspropState":
        return cls(params.zeros_like())


def regularized_gradients(params: ModelParams, grads: dict, config: TrainConfig) -> dict:
    out = {}
    for name, g in grads.items():
        p = params.tensors[name]
        total = g
        if config.l2:
            total = total + 2.0 * config.l2 * p
        if config.l1:
            total = total + config.l1 * np.sign(p)
        out[name] = total
    if config.grad_clip is not None:
        norm = math.sqrt(sum(float(np.sum(g * g)) for g in out.values()))
        if norm > config.grad_clip:
            scale = config.grad_clip / norm
            out = {k: g * scale for k, g in out.items()}
    return out


def rmsprop_update(params: ModelParams, grads: dict, state: RmspropState, config: TrainConfig) -> None:
    """In-place RMSPROP step on the L1/L2-regularized gradient."""
    decay = config.rmsprop_decay
    for name, g in regularized_gradients(params, grads, config).items():
        cache = state.cache[name]
        cache *= decay
        cache += (1.0 - decay) * g * g
        params.tensors[name] -= config.learning_rate * g / (np.sqrt(cache) + config.rmsprop_epsilon)


# --------------------------------------------------------------------------
# training loop


def train(
    params: ModelParams,
    paragraphs,
    config: TrainConfig,
    opt_state: RmspropState | None = None,
    *,
    heldout=None,
    callbacks=(),
    start_epoch: int = 0,
) -> list:
    """Per-paragraph SGD with RMSPROP; returns one log dict per epoch.

    The shuffle order and dropout masks of epoch ``k`` come from streams seeded
    by ``(seed, k)``, so a run resumed at ``start_epoch`` replays exactly.
    ``params`` and ``opt_state`` are updated in place.
    """
    paragraphs = list(paragraphs)
    if not paragraphs:
        raise CorpusError("training corpus is empty")
    if opt_state is None:
        opt_state = RmspropState.zeros(params)
    history = []
    best = math.inf
    stale = 0
    for epoch in range(start_epoch, config.epochs):
        order = make_rng([config.seed, epoch, 0]).permutation(len(paragraphs))
        drop_rng = make_rng([config.seed, epoch, 1])
        run_nll = 0.0
        run_words = 0
        for idx in order:
            para = paragraphs[idx]
            fwd = paragraph_loss(params, para, config.mode, train=True, rng=drop_rng,
                                 dropout_rate=config.dropout_rate)
            if not math.isfinite(fwd.nll):
                raise TrainingError(f"non-finite loss on record {para.id!r} in epoch {epoch + 1}")
            grads = backprop(params, fwd)
            rmsprop_update(params, grads, opt_state, config)
            run_nll += fwd.nll
            run_words += fwd.word_count
        entry = {
            "epoch": epoch + 1,
            "train_nll": run_nll,
            "train_loss": run_nll / run_words,
            "ppl": corpus_perplexity(params, paragraphs, config.mode),
        }
        if heldout:
            entry["heldout_ppl"] = corpus_perplexity(params, heldout, config.mode)
        if not math.isfinite(entry["ppl"]):
            raise TrainingError(f"non-finite perplexity after epoch {epoch + 1}")
        history.append(entry)
        log.info("epoch %d ppl %.6f", entry["epoch"], entry["ppl"])
        for cb in callbacks:
            cb(entry)
        if heldout and config.patience is not None:
            if entry["heldout_ppl"] < best:
                best = entry["heldout_ppl"]
                stale = 0
            else:
                stale += 1
                if stale >= config.patience:
                    break
    return history
