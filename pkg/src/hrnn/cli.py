"""Command line entry point: ``hrnn <synth|train|generate|eval|gradcheck>``.

Settings resolve as command-line flags > ``--config`` JSON file > defaults.
Every command prints machine-readable ``key=value`` lines. Exit codes: 0 on
success, 1 when a check fails, 2 for usage, configuration or input errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from pathlib import Path

from . import __version__
from .bleu import bleu_report
from .checkpoint import Checkpoint, CheckpointError, load_checkpoint, save_checkpoint
from .corpus import Corpus, SynthSpec, load_corpus, save_corpus, split_corpus, synth_corpus
from .decoding import BeamConfig, generate_paragraph, record_interval_pools
from .errors import HrnnError, TrainingError
from .gradcheck import TOLERANCE, check_gradients, random_instance, worst
from .model import DESK_DIMS, FULL_DIMS, ModelConfig, ModelParams
from .training import RmspropState, TrainConfig, corpus_perplexity, prepare_corpus, train

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def default_seed() -> int:
    try:
        return int(os.environ.get("HRNN_SEED", "0"))
    except ValueError:
        raise UsageError("HRNN_SEED must be an integer") from None


DEFAULTS = {
    "synth": dict(videos=30, sentences=3, activities=10, feature_dim=16, noise=0.0, ambiguity=False,
                  frames=2, test_videos=0, out=None, test_out=None),
    "train": dict(corpus=None, heldout=None, out=None, resume=None, mode="hier", lr=1e-4, epochs=10,
                  dropout=0.5, l1=1e-6, l2=1e-4, clip=None, decay=0.9, rms_eps=1e-6, patience=None,
                  paper_dims=False, d_e=None, d_h=None, d_m=None, d_a=None, d_s=None, d_p=None,
                  softmax_bias=True, exp_ppl=False),
    "generate": dict(checkpoint=None, corpus=None, out=None, beam=5, pool=5, max_len=30, max_sentences=15,
                     greedy=False, mode=None, open_ended=False),
    "eval": dict(captions=None, corpus=None, checkpoint=None, mode=None, smooth=False),
    "gradcheck": dict(seeds=1, mode="hier", break_tied_weights=False, vocab=12, dim=8),
}


def _add(p, *names, **kw):
    p.add_argument(*names, default=argparse.SUPPRESS, **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hrnn", description="Hierarchical RNN video paragraph captioner.")
    parser.add_argument("--version", action="version", version=f"hrnn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        _add(p, "--config", help="JSON file of option overrides")
        _add(p, "--seed", type=int, help="random seed (default: $HRNN_SEED or 0)")

    p = sub.add_parser("synth", help="write a synthetic feature-sequence corpus")
    common(p)
    _add(p, "--videos", type=int)
    _add(p, "--sentences", type=int, help="sentences per video")
    _add(p, "--activities", type=int)
    _add(p, "--feature-dim", type=int, dest="feature_dim")
    _add(p, "--noise", type=float, help="gaussian feature noise sigma")
    _add(p, "--ambiguity", action="store_true", help="visually identical activity pairs")
    _add(p, "--frames", type=int, help="frames per sentence interval")
    _add(p, "--test-videos", type=int, dest="test_videos", help="hold out this many videos")
    _add(p, "--out", required=False)
    _add(p, "--test-out", dest="test_out")

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    common(p)
    _add(p, "--corpus")
    _add(p, "--heldout")
    _add(p, "--out", help="checkpoint path")
    _add(p, "--resume", help="continue from a checkpoint")
    _add(p, "--mode", choices=["hier", "sent", "cat"])
    _add(p, "--lr", type=float)
    _add(p, "--epochs", type=int)
    _add(p, "--dropout", type=float)
    _add(p, "--l1", type=float)
    _add(p, "--l2", type=float)
    _add(p, "--clip", type=float, help="global gradient-norm clip")
    _add(p, "--decay", type=float, help="RMSPROP decay")
    _add(p, "--rms-eps", type=float, dest="rms_eps")
    _add(p, "--patience", type=int, help="early stop after this many epochs without held-out gain")
    _add(p, "--paper-dims", action="store_true", dest="paper_dims", help="full-size preset (512/512/1024)")
    for d in ("d_e", "d_h", "d_m", "d_a", "d_s", "d_p"):
        _add(p, f"--{d.replace('_', '-')}", type=int, dest=d)
    _add(p, "--no-softmax-bias", action="store_false", dest="softmax_bias")
    _add(p, "--exp-ppl", action="store_true", dest="exp_ppl", help="also print exp(ppl)")

    p = sub.add_parser("generate", help="decode paragraphs for a corpus")
    common(p)
    _add(p, "--checkpoint")
    _add(p, "--corpus")
    _add(p, "--out")
    _add(p, "--beam", type=int, help="beam width L")
    _add(p, "--pool", type=int, help="sentence pool size J")
    _add(p, "--max-len", type=int, dest="max_len")
    _add(p, "--max-sentences", type=int, dest="max_sentences")
    _add(p, "--greedy", action="store_true")
    _add(p, "--mode", choices=["hier", "sent", "cat"])
    _add(p, "--open-ended", action="store_true", dest="open_ended", help="ignore intervals, stop at EOP")

    p = sub.add_parser("eval", help="BLEU@1-4 of a captions file, plus perplexity")
    common(p)
    _add(p, "--captions")
    _add(p, "--corpus")
    _add(p, "--checkpoint")
    _add(p, "--mode", choices=["hier", "sent", "cat"])
    _add(p, "--smooth", action="store_true")

    p = sub.add_parser("gradcheck", help="finite-difference check of the full model")
    common(p)
    _add(p, "--seeds", type=int, help="number of random instances")
    _add(p, "--mode", choices=["hier", "sent", "cat"])
    _add(p, "--break-tied-weights", action="store_true", dest="break_tied_weights")
    _add(p, "--vocab", type=int)
    _add(p, "--dim", type=int)
    return parser


def resolve(command: str, flags: dict) -> dict:
    """Merge defaults, the optional JSON config file, and explicit flags."""
    opts = dict(DEFAULTS[command])
    opts["seed"] = default_seed()
    path = flags.pop("config", None)
    if path:
        try:
            file_opts = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from None
        if not isinstance(file_opts, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = sorted(set(file_opts) - set(opts))
        if unknown:
            raise UsageError(f"unknown config keys for '{command}': {unknown}")
        opts.update(file_opts)
    opts.update(flags)
    return opts


def _need(opts, *keys):
    missing = [k for k in keys if not opts.get(k)]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + k.replace("_", "-") for k in missing))


def emit(**fields) -> None:
    print(" ".join(f"{k}={_fmt(v)}" for k, v in fields.items()), flush=True)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


# --------------------------------------------------------------------------
# commands


def cmd_synth(o: dict) -> int:
    _need(o, "out")
    spec = SynthSpec(num_videos=o["videos"], sentences_per_video=o["sentences"], num_activities=o["activities"],
                     feature_dim=o["feature_dim"], noise_sigma=o["noise"], ambiguity=bool(o["ambiguity"]),
                     seed=o["seed"], frames_per_sentence=o["frames"])
    corpus = synth_corpus(spec)
    if o["test_videos"]:
        _need(o, "test_out")
        train_c, test_c = split_corpus(corpus, o["test_videos"])
        save_corpus(train_c, o["out"])
        save_corpus(test_c, o["test_out"])
        parts = [("train", train_c, o["out"]), ("test", test_c, o["test_out"])]
    else:
        save_corpus(corpus, o["out"])
        parts = [("all", corpus, o["out"])]
    for split, c, path in parts:
        emit(split=split, videos=len(c), sentences=sum(len(r.sentences) for r in c.records),
             vocab=len(c.vocab), ambiguity=spec.ambiguity, path=path)
    return EXIT_OK


def _model_config(o: dict, corpus: Corpus) -> ModelConfig:
    dims = dict(FULL_DIMS if o["paper_dims"] else DESK_DIMS)
    for d in dims:
        if o.get(d) is not None:
            dims[d] = int(o[d])
    return ModelConfig(vocab_size=len(corpus.vocab), channels=corpus.channel_dims(),
                       hierarchical=(o["mode"] == "hier"), softmax_bias=bool(o["softmax_bias"]), **dims)


def cmd_train(o: dict) -> int:
    _need(o, "corpus", "out")
    corpus = load_corpus(o["corpus"])
    heldout = prepare_corpus(load_corpus(o["heldout"])) if o["heldout"] else None
    tc = TrainConfig(learning_rate=o["lr"], rmsprop_decay=o["decay"], rmsprop_epsilon=o["rms_eps"], l1=o["l1"],
                     l2=o["l2"], grad_clip=o["clip"], epochs=o["epochs"], seed=o["seed"], mode=o["mode"],
                     dropout_rate=o["dropout"], patience=o["patience"])
    start = 0
    if o["resume"]:
        ckpt = load_checkpoint(o["resume"])
        if ckpt.extra.get("vocab") not in (None, corpus.vocab.tokens):
            raise UsageError("checkpoint vocabulary does not match the corpus")
        params, opt, start = ckpt.params, ckpt.opt_state, ckpt.epochs_done
    else:
        params = ModelParams.initialize(_model_config(o, corpus), tc.seed)
        opt = RmspropState.zeros(params)
    emit(mode=tc.mode, params=params.num_parameters, tensors=len(params.names()),
         paragraph_tensors=params.has_paragraph, records=len(corpus), vocab=len(corpus.vocab))

    def report(entry):
        extra = {"perplexity": math.exp(entry["ppl"])} if o["exp_ppl"] else {}
        emit(epoch=entry["epoch"], split="train", ppl=entry["ppl"], **extra)
        if "heldout_ppl" in entry:
            extra = {"perplexity": math.exp(entry["heldout_ppl"])} if o["exp_ppl"] else {}
            emit(epoch=entry["epoch"], split="heldout", ppl=entry["heldout_ppl"], **extra)

    history = train(params, prepare_corpus(corpus), tc, opt, heldout=heldout, callbacks=[report], start_epoch=start)
    done = history[-1]["epoch"] if history else start
    save_checkpoint(o["out"], Checkpoint(params, opt, tc, done, {"vocab": corpus.vocab.tokens}))
    emit(checkpoint=o["out"], epochs=done)
    return EXIT_OK


def _check_vocab(ckpt: Checkpoint, corpus: Corpus) -> None:
    if ckpt.params.config.vocab_size != len(corpus.vocab):
        raise UsageError(f"checkpoint vocabulary size {ckpt.params.config.vocab_size} "
                         f"!= corpus vocabulary size {len(corpus.vocab)}")
    vocab = ckpt.extra.get("vocab")
    if vocab is not None and vocab != corpus.vocab.tokens:
        raise UsageError("checkpoint vocabulary does not match the corpus vocabulary")
    if ckpt.params.config.channels != corpus.channel_dims():
        raise UsageError(f"checkpoint channels {ckpt.params.config.channels} != corpus channels {corpus.channel_dims()}")


def cmd_generate(o: dict) -> int:
    _need(o, "checkpoint", "corpus", "out")
    ckpt = load_checkpoint(o["checkpoint"])
    corpus = load_corpus(o["corpus"])
    _check_vocab(ckpt, corpus)
    beam = BeamConfig(o["beam"], o["pool"], o["max_len"], o["max_sentences"])
    mode = o["mode"] or ckpt.train_config.mode
    lines = []
    for rec in corpus.records:
        intervals = None if o["open_ended"] else record_interval_pools(rec)
        if intervals is None and not o["open_ended"] and len(rec.sentences) == 1:
            intervals = [rec.pools()]
        para = generate_paragraph(ckpt.params, rec.pools(), beam, intervals, mode=mode, greedy=o["greedy"])
        for i, cands in enumerate(para):
            text = " ".join(corpus.vocab.decode(cands[0].words)) if cands else ""
            lines.append(f"{rec.id}\t{i}\t{text}")
    Path(o["out"]).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    emit(records=len(corpus), sentences=len(lines), beam=beam.beam_width, pool=beam.pool_size,
         greedy=bool(o["greedy"]), out=o["out"])
    return EXIT_OK


def read_captions(path) -> list:
    """Parse ``<video_id>\\t<sentence_index>\\t<tokens>`` lines."""
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise UsageError(f"{path}:{lineno}: expected 3 tab-separated fields")
        try:
            idx = int(parts[1])
        except ValueError:
            raise UsageError(f"{path}:{lineno}: sentence index must be an integer") from None
        rows.append((parts[0], idx, parts[2].split()))
    return rows


def write_captions(path, rows) -> None:
    Path(path).write_text("".join(f"{vid}\t{i}\t{' '.join(toks)}\n" for vid, i, toks in rows), encoding="utf-8")


def reference_rows(corpus: Corpus) -> list:
    return [(r.id, i, list(s.tokens)) for r in corpus.records for i, s in enumerate(r.sentences)]


def cmd_eval(o: dict) -> int:
    _need(o, "captions", "corpus")
    corpus = load_corpus(o["corpus"])
    rows = read_captions(o["captions"])
    if not rows:
        raise UsageError(f"captions file {o['captions']} is empty")
    by_id = {r.id: r for r in corpus.records}
    unknown = sorted({vid for vid, _, _ in rows if vid not in by_id})
    if unknown:
        raise UsageError(f"caption ids not in corpus: {unknown}")
    cands, refs = [], []
    for vid, idx, toks in rows:
        rec = by_id[vid]
        aligned = 0 <= idx < len(rec.sentences) and all(s.interval is not None for s in rec.sentences)
        cands.append(toks)
        refs.append([rec.sentences[idx].tokens] if aligned else [s.tokens for s in rec.sentences])
    report = bleu_report(cands, refs, smooth=bool(o["smooth"]))
    fields = dict(report)
    if o["checkpoint"]:
        ckpt = load_checkpoint(o["checkpoint"])
        _check_vocab(ckpt, corpus)
        fields["ppl"] = corpus_perplexity(ckpt.params, prepare_corpus(corpus), o["mode"] or ckpt.train_config.mode)
    emit(**fields)
    return EXIT_OK


def cmd_gradcheck(o: dict) -> int:
    overall = {}
    for k in range(o["seeds"]):
        params, para = random_instance(o["seed"] + k, vocab_size=o["vocab"], dim=o["dim"], mode=o["mode"])
        if o["break_tied_weights"]:
            params.untie()
        report = check_gradients(params, para, o["mode"], seed=o["seed"] + k)
        for name, err in report.items():
            overall[name] = max(overall.get(name, 0.0), err)
    for name, err in overall.items():
        emit(tensor=name, rel_err=err)
    name, err = worst(overall)
    ok = err < TOLERANCE
    emit(status="pass" if ok else "fail", worst=name, rel_err=err, tolerance=TOLERANCE)
    return EXIT_OK if ok else EXIT_FAIL


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "generate": cmd_generate, "eval": cmd_eval,
            "gradcheck": cmd_gradcheck}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    flags = {k: v for k, v in vars(ns).items() if k != "command"}
    try:
        opts = resolve(ns.command, flags)
        return COMMANDS[ns.command](opts)
    except TrainingError as exc:
        print(f"hrnn {ns.command}: training aborted: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (UsageError, HrnnError, CheckpointError, OSError, ValueError, TypeError) as exc:
        print(f"hrnn {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
