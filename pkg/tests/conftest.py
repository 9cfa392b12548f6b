import numpy as np
import pytest
import torch

from fckt.config import RunConfig
from fckt.corpus import AnnotatedSentence, AspectAnnotation
from fckt.encoder import ToyEncoder, Vocab
from fckt.model import FCKTModel


def sentence(tokens, *aspects, sid="s"):
    return AnnotatedSentence(
        tokens=list(tokens),
        aspects=[AspectAnnotation(s, e, p) for s, e, p in aspects],
        source_id=sid,
    )


@pytest.fixture
def small_corpus():
    return [
        sentence("the lens and the autofocus are great".split(), (1, 1, "positive"), (4, 4, "positive"), sid="a"),
        sentence("great screen except the battery life".split(), (1, 1, "positive"), (4, 5, "negative"), sid="b"),
        sentence("the keyboard is fine".split(), (1, 1, "neutral"), sid="c"),
        sentence("nothing to say here".split(), sid="d"),
    ]


def make_model(sentences, dim=8, layers=2, heads=2, dropout=0.0, seed=0, dtype=torch.float64):
    torch.manual_seed(seed)
    vocab = Vocab.build(s.tokens for s in sentences)
    model = FCKTModel(ToyEncoder(vocab, dim=dim, layers=layers, heads=heads, max_len=32, dropout=dropout))
    return model.to(dtype)


@pytest.fixture
def tiny_model(small_corpus):
    model = make_model(small_corpus)
    model.eval()
    return model


@pytest.fixture
def tiny_config():
    cfg = RunConfig()
    cfg.encoder.dim = 8
    cfg.encoder.heads = 2
    cfg.encoder.dropout = 0.0
    return cfg


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def split_and_multi_objectives(model, sentences, config, real_path):
    """(summed split-example objective, multi-aspect objective) with one shared
    path assignment, in (sentence, aspect) order."""
    from fckt.corpus import split_sentences
    from fckt.trainer import batch_objective, multi_aspect_objective

    examples = split_sentences(sentences)
    split = batch_objective(model, examples, config, real_path=np.asarray(real_path)).total
    multi = multi_aspect_objective(model, sentences, config, real_path)
    return split, multi


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
