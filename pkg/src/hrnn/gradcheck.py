"""Full-model gradient check against central finite differences."""

from __future__ import annotations

import numpy as np

from .corpus import BOS_ID, EOS_ID
from .model import ModelConfig, ModelParams, is_bias
from .numerics import finite_diff_grad, make_rng, relative_error
from .training import Paragraph, backprop, paragraph_loss

TOLERANCE = 1e-4
KINK_MARGIN = 1e-3  # smallest |ReLU pre-activation| accepted in a check instance
MAX_ATTEMPTS = 100


def relu_margin(params: ModelParams, para: Paragraph, mode: str = "hier") -> float:
    """Distance of the closest ReLU pre-activation to its kink at 0.

    Dropout acts after the recurrent layers, so the evaluation-mode pass sees
    the same pre-activations as any training-mode pass.
    """
    fwd = paragraph_loss(params, para, mode)
    margin = np.inf
    for sf in fwd.forwards:
        for cache in sf.caches:
            margin = min(margin, float(np.min(np.abs(cache.gru.a_h))))
    if params.config.rnn2_activation == "relu":
        for adv in fwd.advances:
            margin = min(margin, float(np.min(np.abs(adv.gru.a_h))))
    return margin


def random_instance(seed: int, vocab_size: int = 12, dim: int = 8, mode: str = "hier"):
    """Small random model plus a two-sentence, two-channel paragraph.

    Weights are drawn wider than the training init (and biases are nonzero)
    so every gate and activation sits away from its trivial regime. Central
    differences are meaningless across a ReLU kink, so a draw with a
    pre-activation within ``KINK_MARGIN`` of zero is replaced by the next
    draw from the ``(seed, attempt)`` stream.
    """
    for attempt in range(MAX_ATTEMPTS):
        params, para = _draw_instance(seed, attempt, vocab_size, dim, mode)
        if relu_margin(params, para, mode) >= KINK_MARGIN:
            return params, para
    raise RuntimeError(f"no kink-free gradient-check instance for seed {seed}")


def _draw_instance(seed, attempt, vocab_size, dim, mode):
    rng = make_rng(seed if attempt == 0 else [seed, attempt])
    channels = {"appearance": dim - 2, "motion": dim - 3}
    cfg = ModelConfig(vocab_size=vocab_size, channels=channels, d_e=dim, d_h=dim - 1, d_m=dim,
                      d_a=dim - 3, d_s=dim - 2, d_p=dim - 1, hierarchical=(mode == "hier"))
    params = ModelParams.initialize(cfg, seed if attempt == 0 else 1_000_003 * attempt + seed, scale=0.5)
    for name, arr in params.tensors.items():
        if is_bias(name):
            arr[...] = rng.uniform(-0.3, 0.3, size=arr.shape)

    def pools(frames):
        return {"appearance": rng.standard_normal((2 * frames, channels["appearance"])),
                "motion": rng.standard_normal((frames, channels["motion"]))}

    words = lambda n: [BOS_ID] + [int(w) for w in rng.integers(2, vocab_size, size=n)] + [EOS_ID]
    para = Paragraph(f"gradcheck{seed}", [words(4), words(3)], [pools(2), pools(3)], pools(5))
    return params, para


def check_gradients(params: ModelParams, para: Paragraph, mode: str = "hier", *,
                    eps: float = 1e-5, dropout_rate: float = 0.5, seed: int = 0) -> dict:
    """Relative error of the analytic gradient for every tensor.

    Dropout stays on with a mask stream re-seeded for each evaluation, so the
    masked path is checked too.
    """
    def loss(_=None):
        return paragraph_loss(params, para, mode, train=True, rng=make_rng(seed),
                              dropout_rate=dropout_rate).nll

    fwd = paragraph_loss(params, para, mode, train=True, rng=make_rng(seed), dropout_rate=dropout_rate)
    analytic = backprop(params, fwd)
    report = {}
    for name in params.names():
        numeric = finite_diff_grad(loss, params.tensors[name], eps)
        report[name] = relative_error(analytic[name], numeric)
    return report


def worst(report: dict):
    name = max(report, key=report.get)
    return name, report[name]


def passes(report: dict, tol: float = TOLERANCE) -> bool:
    return all(np.isfinite(v) and v < tol for v in report.values())
