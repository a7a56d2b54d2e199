import pytest

from fewtag.corpus import Corpus
from fewtag.synth import generate, separable_spec
from fewtag.types import LabeledSentence, LabelSet


@pytest.fixture(scope="session")
def small_synth():
    """Separable synthetic corpus + store shared by read-only tests."""
    return generate(separable_spec(n_types=6, seed=123, sentences=160))


@pytest.fixture()
def tiny_corpus():
    """Hand-built corpus: 6 sentences, 2 entity types (A=1, B=2)."""
    ls = LabelSet(("A", "B"))
    sents = [
        LabeledSentence(0, ("a0", "x"), (1, 0)),
        LabeledSentence(1, ("b0", "y"), (2, 0)),
        LabeledSentence(2, ("a1", "z"), (1, 0)),
        LabeledSentence(3, ("b1", "w"), (2, 0)),
        LabeledSentence(4, ("a2", "b2"), (1, 2)),
        LabeledSentence(5, ("q", "r"), (0, 0)),
    ]
    return Corpus.from_sentences(sents, ls)
