"""Shared builders for small random models."""

import numpy as np

from hrnn.model import ModelConfig, ModelParams, is_bias
from hrnn.numerics import make_rng


def random_params(seed=0, vocab=11, d_e=6, d_h=6, d_m=8, d_a=5, channels=None, hierarchical=True,
                  scale=0.5, softmax_bias=True):
    channels = channels or {"appearance": 5, "motion": 4}
    cfg = ModelConfig(vocab_size=vocab, channels=channels, d_e=d_e, d_h=d_h, d_m=d_m, d_a=d_a,
                      d_s=5, d_p=4, hierarchical=hierarchical, softmax_bias=softmax_bias)
    params = ModelParams.initialize(cfg, seed, scale=scale)
    rng = make_rng(seed + 1000)
    for name, arr in params.tensors.items():
        if is_bias(name):
            arr[...] = rng.uniform(-0.3, 0.3, size=arr.shape)
    return params


def random_pools(rng, channels=None, rows=(4, 3)):
    channels = channels or {"appearance": 5, "motion": 4}
    return {ch: rng.standard_normal((k, d)) for (ch, d), k in zip(channels.items(), rows)}
