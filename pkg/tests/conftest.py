import warnings

import numpy as np
import pytest

from biasasr.backend import MockBackend
from biasasr.dataset_gen import SamplingConfig, Vocabulary, build_kws_dataset
from biasasr.kws import ClassifierConfig, train
from biasasr.synthetic import make_corpus, make_vocab
from biasasr.tts import TtsClient

warnings.filterwarnings("ignore", category=UserWarning)

# desk-scale training; the 5e-5 default suits ResNet-50 on ~485k maps
DESK_LR = 1e-3
DESK_SAMPLES = 2000


@pytest.fixture
def backend():
    return MockBackend()


@pytest.fixture
def tts(tmp_path):
    return TtsClient(cache_dir=tmp_path / "tts-cache")


class DeskWorld:
    """Synthetic vocabulary, corpora and the two desk-scale classifiers."""

    def __init__(self, seed: int = 0):
        rng = np.random.default_rng(seed)
        self.words = make_vocab(rng, 300, 3, 5)
        self.vocab = Vocabulary.from_words(self.words)
        self.train_corpus = make_corpus(rng, self.words, 500)
        self.test_corpus = make_corpus(np.random.default_rng(seed + 99), self.words, 300, prefix="test")
        self.backend = MockBackend()
        self.tts = TtsClient()
        self.confusing_samples, self.confusing_manifest = build_kws_dataset(
            self.train_corpus, self.vocab, self.tts, self.backend, SamplingConfig(1, 1, 2, 5, seed))
        self.random_samples, self.random_manifest = build_kws_dataset(
            self.train_corpus, self.vocab, self.tts, self.backend, SamplingConfig(1, 3, 0, 5, seed))
        # hard held-out set: unseen utterances, every negative a confusing one
        self.heldout, _ = build_kws_dataset(
            self.test_corpus, self.vocab, self.tts, self.backend, SamplingConfig(1, 0, 3, 5, seed + 1))
        self.cfg = ClassifierConfig(architecture="small_cnn", learning_rate=DESK_LR, seed=seed)
        self.classifier, self.report = train(self.confusing_samples[:DESK_SAMPLES], self.cfg)
        self.random_classifier, self.random_report = train(self.random_samples[:DESK_SAMPLES], self.cfg)


@pytest.fixture(scope="session")
def desk():
    return DeskWorld()
