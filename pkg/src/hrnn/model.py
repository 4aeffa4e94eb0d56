"""Model configuration and the named tensor store behind every layer view."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError
from .layers import (
    GRU_FIELDS,
    AttentionParams,
    EmbeddingParams,
    GruParams,
    MultimodalParams,
    OutputParams,
)
from .numerics import make_rng

INIT_SCALE = 0.08

FULL_DIMS = dict(d_e=512, d_h=512, d_m=1024, d_a=64, d_s=512, d_p=512)
DESK_DIMS = dict(d_e=64, d_h=64, d_m=128, d_a=32, d_s=64, d_p=64)


@dataclass
class ModelConfig:
    vocab_size: int
    channels: dict  # name -> feature dim, in declaration order
    d_e: int = DESK_DIMS["d_e"]
    d_h: int = DESK_DIMS["d_h"]
    d_m: int = DESK_DIMS["d_m"]
    d_a: int = DESK_DIMS["d_a"]
    d_s: int = DESK_DIMS["d_s"]
    d_p: int = DESK_DIMS["d_p"]
    hierarchical: bool = True  # allocate the paragraph generator tensors
    softmax_bias: bool = True
    rnn1_activation: str = "relu"
    rnn2_activation: str = "stanh"
    avg_include_bos: bool = False

    def __post_init__(self):
        self.channels = {str(k): int(v) for k, v in dict(self.channels).items()}
        if self.vocab_size < 3:
            raise ConfigError("vocabulary must hold BOS, EOS and at least one word")
        if not self.channels:
            raise ConfigError("at least one feature channel is required")
        for name in ("d_e", "d_h", "d_m", "d_a", "d_s", "d_p"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        for act in (self.rnn1_activation, self.rnn2_activation):
            if act not in ("relu", "stanh"):
                raise ConfigError(f"unknown activation {act!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        # A pair list keeps declaration order even under sort_keys serialization.
        d["channels"] = [[k, v] for k, v in self.channels.items()]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


def tensor_shapes(cfg: ModelConfig) -> dict:
    """Ordered ``name -> shape`` map of every learnable tensor."""
    shapes = {"emb.E": (cfg.d_e, cfg.vocab_size)}
    shapes.update(_gru_shapes("rnn1", cfg.d_e, cfg.d_h))
    for ch, d_v in cfg.channels.items():
        shapes[f"attn.{ch}.W_q"] = (cfg.d_a, d_v)
        shapes[f"attn.{ch}.U_q"] = (cfg.d_a, cfg.d_h)
        shapes[f"attn.{ch}.b_q"] = (cfg.d_a,)
        shapes[f"attn.{ch}.w"] = (cfg.d_a,)
    for ch, d_v in cfg.channels.items():
        shapes[f"mm.W.{ch}"] = (cfg.d_m, d_v)
    shapes["mm.U_m"] = (cfg.d_m, cfg.d_h)
    shapes["mm.b_m"] = (cfg.d_m,)
    shapes["out.W_hid"] = (cfg.d_e, cfg.d_m)
    shapes["out.b_hid"] = (cfg.d_e,)
    if cfg.softmax_bias:
        shapes["out.b_soft"] = (cfg.vocab_size,)
    if cfg.hierarchical:
        shapes["sent_embed.W"] = (cfg.d_s, cfg.d_e + cfg.d_h)
        shapes["sent_embed.b"] = (cfg.d_s,)
        shapes.update(_gru_shapes("rnn2", cfg.d_s, cfg.d_p))
        shapes["para_state.W"] = (cfg.d_h, cfg.d_p + cfg.d_s)
        shapes["para_state.b"] = (cfg.d_h,)
    return shapes


def _gru_shapes(prefix: str, d_in: int, d_hid: int) -> dict:
    out = {}
    for f in GRU_FIELDS:
        if f[0] == "W":
            out[f"{prefix}.{f}"] = (d_hid, d_in)
        elif f[0] == "U":
            out[f"{prefix}.{f}"] = (d_hid, d_hid)
        else:
            out[f"{prefix}.{f}"] = (d_hid,)
    return out


def is_bias(name: str) -> bool:
    return name.rsplit(".", 1)[-1].startswith("b")


@dataclass
class SentenceGenParams:
    emb: EmbeddingParams
    rnn1: GruParams
    attn: dict  # channel -> AttentionParams
    mm: MultimodalParams
    out: OutputParams
    # Table used by the softmax projection; the same object as ``emb`` unless
    # the model was deliberately untied.
    out_emb: EmbeddingParams

    @property
    def vocab_size(self) -> int:
        return self.emb.vocab_size

    @property
    def hidden_dim(self) -> int:
        return self.rnn1.hidden_dim


@dataclass
class ParagraphGenParams:
    W_s: np.ndarray  # (d_s, d_e + d_h)
    b_s: np.ndarray
    rnn2: GruParams
    W_p: np.ndarray  # (d_h, d_p + d_s)
    b_p: np.ndarray


@dataclass
class ModelParams:
    config: ModelConfig
    tensors: dict = field(default_factory=dict)
    untied_table: np.ndarray | None = None

    @classmethod
    def zeros(cls, config: ModelConfig) -> "ModelParams":
        return cls(config, {k: np.zeros(s) for k, s in tensor_shapes(config).items()})

    @classmethod
    def initialize(cls, config: ModelConfig, seed: int, scale: float = INIT_SCALE) -> "ModelParams":
        """Weights uniform in ``[-scale, scale]``, biases zero, one seeded stream."""
        rng = make_rng(seed)
        tensors = {}
        for name, shape in tensor_shapes(config).items():
            if is_bias(name):
                tensors[name] = np.zeros(shape)
            else:
                tensors[name] = rng.uniform(-scale, scale, size=shape)
        return cls(config, tensors)

    def names(self) -> list:
        return list(self.tensors)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    @property
    def num_parameters(self) -> int:
        return int(sum(t.size for t in self.tensors.values()))

    @property
    def has_paragraph(self) -> bool:
        return "sent_embed.W" in self.tensors

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> dict:
        return {k: np.zeros_like(v) for k, v in self.tensors.items()}

    def untie(self) -> None:
        """Give the softmax projection a private copy of the embedding table.

        Only meant for mutation-testing the gradient checker: the copy is not
        a registered tensor, so its gradient goes nowhere.
        """
        self.untied_table = self.tensors["emb.E"].copy()

    def _gru(self, prefix: str, activation: str) -> GruParams:
        return GruParams(*(self.tensors[f"{prefix}.{f}"] for f in GRU_FIELDS), state_activation=activation)

    def sentence_gen(self) -> SentenceGenParams:
        t = self.tensors
        cfg = self.config
        emb = EmbeddingParams(t["emb.E"])
        out_emb = emb if self.untied_table is None else EmbeddingParams(self.untied_table)
        attn = {
            ch: AttentionParams(t[f"attn.{ch}.W_q"], t[f"attn.{ch}.U_q"], t[f"attn.{ch}.b_q"], t[f"attn.{ch}.w"])
            for ch in cfg.channels
        }
        mm = MultimodalParams({ch: t[f"mm.W.{ch}"] for ch in cfg.channels}, t["mm.U_m"], t["mm.b_m"])
        out = OutputParams(t["out.W_hid"], t["out.b_hid"], t.get("out.b_soft"))
        return SentenceGenParams(emb, self._gru("rnn1", cfg.rnn1_activation), attn, mm, out, out_emb)

    def paragraph_gen(self) -> ParagraphGenParams:
        if not self.has_paragraph:
            raise ConfigError("model was built without paragraph generator tensors")
        t = self.tensors
        return ParagraphGenParams(
            t["sent_embed.W"], t["sent_embed.b"],
            self._gru("rnn2", self.config.rnn2_activation),
            t["para_state.W"], t["para_state.b"],
        )

    def zero_paragraph(self) -> None:
        for name, arr in self.tensors.items():
            if name.split(".", 1)[0] in ("sent_embed", "rnn2", "para_state"):
                arr[...] = 0.0


def accumulate(grads: dict, prefix: str, layer_grads: dict) -> None:
    for k, g in layer_grads.items():
        grads[f"{prefix}.{k}"] += g
