import json
import struct

import numpy as np
import pytest

from hrnn.checkpoint import (
    Checkpoint,
    CheckpointCorruptError,
    CheckpointError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    dumps_checkpoint,
    load_checkpoint,
    loads_checkpoint,
    save_checkpoint,
)
from hrnn.corpus import SynthSpec, synth_corpus
from hrnn.model import ModelConfig, ModelParams, tensor_shapes
from hrnn.training import RmspropState, TrainConfig, prepare_corpus, train

from helpers import random_params

HEADER = struct.Struct("<8sQ32s")


def make_checkpoint(hierarchical=True):
    p = random_params(hierarchical=hierarchical)
    opt = RmspropState.zeros(p)
    for i, arr in enumerate(opt.cache.values()):
        arr[...] = 0.1 * i
    return Checkpoint(p, opt, TrainConfig(learning_rate=3e-3, grad_clip=5.0), 4, {"vocab": ["<bos>", "<eos>"]})


def rebuild(blob, manifest):
    import hashlib
    mbytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    _, mlen, _ = HEADER.unpack_from(blob)
    data = blob[HEADER.size + mlen:]
    return HEADER.pack(b"HRNNCKPT", len(mbytes), hashlib.sha256(mbytes).digest()) + mbytes + data


def manifest_of(blob):
    _, mlen, _ = HEADER.unpack_from(blob)
    return json.loads(blob[HEADER.size:HEADER.size + mlen])


@pytest.mark.parametrize("hierarchical", [True, False])
def test_round_trip_bit_exact(tmp_path, hierarchical):
    ckpt = make_checkpoint(hierarchical)
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, ckpt)
    back = load_checkpoint(path)
    assert back.params.config == ckpt.params.config
    assert back.params.names() == ckpt.params.names()
    for n in ckpt.params.names():
        assert np.array_equal(back.params[n], ckpt.params[n])
        assert np.array_equal(back.opt_state.cache[n], ckpt.opt_state.cache[n])
    assert back.train_config == ckpt.train_config
    assert (back.epochs_done, back.extra) == (4, ckpt.extra)
    save_checkpoint(tmp_path / "again.ckpt", back)
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def test_channel_order_preserved():
    ckpt = make_checkpoint()
    back = loads_checkpoint(dumps_checkpoint(ckpt))
    assert list(back.params.config.channels) == list(ckpt.params.config.channels)


def test_every_manifest_byte_is_protected():
    blob = dumps_checkpoint(make_checkpoint())
    _, mlen, _ = HEADER.unpack_from(blob)
    for pos in range(0, HEADER.size + mlen, 7):
        bad = bytearray(blob)
        bad[pos] ^= 0x41
        with pytest.raises(CheckpointError):
            loads_checkpoint(bytes(bad))


def test_corrupt_data_byte():
    blob = bytearray(dumps_checkpoint(make_checkpoint()))
    blob[-5] ^= 0xFF
    with pytest.raises(CheckpointCorruptError):
        loads_checkpoint(bytes(blob))


def test_truncated():
    blob = dumps_checkpoint(make_checkpoint())
    for cut in (10, HEADER.size + 5, len(blob) - 1):
        with pytest.raises(CheckpointTruncatedError):
            loads_checkpoint(blob[:cut])


def test_trailing_bytes():
    with pytest.raises(CheckpointCorruptError):
        loads_checkpoint(dumps_checkpoint(make_checkpoint()) + b"\0")


def test_version_mismatch():
    blob = dumps_checkpoint(make_checkpoint())
    m = manifest_of(blob)
    m["format_version"] = 99
    with pytest.raises(CheckpointVersionError):
        loads_checkpoint(rebuild(blob, m))


def test_shape_mismatch():
    blob = dumps_checkpoint(make_checkpoint())
    m = manifest_of(blob)
    m["model_config"]["d_a"] += 1
    with pytest.raises(CheckpointShapeError):
        loads_checkpoint(rebuild(blob, m))
    m = manifest_of(blob)
    m["tensors"] = m["tensors"][:-1]
    with pytest.raises(CheckpointShapeError):
        loads_checkpoint(rebuild(blob, m))


def test_distinct_error_classes():
    classes = {CheckpointVersionError, CheckpointTruncatedError, CheckpointCorruptError, CheckpointShapeError}
    assert len(classes) == 4
    assert all(issubclass(c, CheckpointError) for c in classes)


def test_resume_zero_epochs_equals_saved(tmp_path):
    corpus = synth_corpus(SynthSpec(num_videos=3, sentences_per_video=2, num_activities=4, feature_dim=6))
    paras = prepare_corpus(corpus)
    cfg = ModelConfig(vocab_size=len(corpus.vocab), channels=corpus.channel_dims(), d_e=6, d_h=6, d_m=8, d_a=4,
                      d_s=6, d_p=6)
    p = ModelParams.initialize(cfg, 0)
    opt = RmspropState.zeros(p)
    tc = TrainConfig(learning_rate=1e-3, epochs=1)
    train(p, paras, tc, opt)
    blob = dumps_checkpoint(Checkpoint(p, opt, tc, 1))
    back = loads_checkpoint(blob)
    train(back.params, paras, back.train_config, back.opt_state, start_epoch=back.epochs_done)
    assert dumps_checkpoint(Checkpoint(back.params, back.opt_state, tc, 1)) == blob


def test_tensor_enumeration_stable():
    cfg = random_params().config
    assert list(tensor_shapes(cfg)) == list(tensor_shapes(ModelConfig.from_dict(cfg.to_dict())))
