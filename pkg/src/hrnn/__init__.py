"""Hierarchical RNN video paragraph captioner, built on numpy."""

__version__ = "0.1.0"

from .corpus import Corpus, SynthSpec, Vocabulary, load_corpus, save_corpus, synth_corpus
from .decoding import BeamConfig, beam_search_sentence, generate_paragraph, greedy_decode
from .model import ModelConfig, ModelParams
from .training import TrainConfig, corpus_perplexity, paragraph_loss, train

__all__ = [
    "BeamConfig", "Corpus", "ModelConfig", "ModelParams", "SynthSpec", "TrainConfig", "Vocabulary",
    "beam_search_sentence", "corpus_perplexity", "generate_paragraph", "greedy_decode", "load_corpus",
    "paragraph_loss", "save_corpus", "synth_corpus", "train",
]
