import json
import os
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fckt.corpus import (
    AnnotatedSentence,
    AspectAnnotation,
    DatasetError,
    SplitReport,
    TrainingExample,
    build_targets,
    corpus_stats,
    load_dataset,
    make_folds,
    split_sentences,
    write_jsonl,
)

from conftest import sentence


def write_lines(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n")
    return path


def test_jsonl_round_trip(tmp_path):
    p = write_lines(tmp_path / "d.jsonl", [
        {"tokens": ["good", "camera"], "aspects": [{"start": 1, "end": 1, "polarity": "positive"}], "id": "x1"},
    ])
    (sent,) = load_dataset(p, "jsonl")
    assert sent.tokens == ["good", "camera"]
    assert sent.aspects == [AspectAnnotation(1, 1, "positive")]
    assert sent.source_id == "x1"
    write_jsonl([sent], tmp_path / "out.jsonl")
    assert load_dataset(tmp_path / "out.jsonl") == [sent]


def test_reversed_span_rejected_with_record_and_line(tmp_path):
    p = write_lines(tmp_path / "d.jsonl", [
        {"tokens": ["a", "b"], "aspects": [], "id": "ok"},
        {"tokens": ["a", "b", "c"], "aspects": [{"start": 2, "end": 1, "polarity": "negative"}], "id": "bad7"},
    ])
    with pytest.raises(DatasetError) as exc:
        load_dataset(p)
    assert exc.value.line == 2
    assert "bad7" in str(exc.value)


@pytest.mark.parametrize("aspects, fragment", [
    ([{"start": 0, "end": 5, "polarity": "positive"}], "out of range"),
    ([{"start": 0, "end": 1, "polarity": "positive"}, {"start": 1, "end": 2, "polarity": "negative"}], "overlapping"),
    ([{"start": 0, "end": 0, "polarity": "conflict"}], "unknown polarity"),
])
def test_invalid_records(tmp_path, aspects, fragment):
    p = write_lines(tmp_path / "d.jsonl", [{"tokens": ["a", "b", "c"], "aspects": aspects, "id": "r"}])
    with pytest.raises(DatasetError, match=fragment):
        load_dataset(p)


def test_unreadable_file(tmp_path):
    with pytest.raises(DatasetError):
        load_dataset(tmp_path / "missing.jsonl")


def test_bad_json_line(tmp_path):
    p = tmp_path / "d.jsonl"
    p.write_text('{"tokens": ["a"], "aspects": []}\n{not json\n')
    with pytest.raises(DatasetError) as exc:
        load_dataset(p)
    assert exc.value.line == 2


def test_split_two_aspects():
    s = sentence("the lens and the autofocus".split(), (1, 1, "positive"), (4, 4, "negative"), sid="s0")
    ex = split_sentences([s])
    assert len(ex) == 2
    assert ex[0].tokens == ex[1].tokens == s.tokens
    assert ex[0].tokens is not s.tokens
    assert (ex[0].start, ex[0].polarity) == (1, "positive")
    assert (ex[1].start, ex[1].polarity) == (4, "negative")
    assert ex[0].origin == ("s0", 0) and ex[1].origin == ("s0", 1)


def test_split_single_aspect_identity():
    s = sentence("good camera".split(), (1, 1, "positive"))
    (ex,) = split_sentences([s])
    np.testing.assert_array_equal(ex.start_target, [0, 1])
    np.testing.assert_array_equal(ex.end_target, [0, 1])


def test_split_counts_and_zero_aspect_report():
    corpus = [
        sentence(list("abcdef"), (0, 0, "positive"), (2, 3, "neutral"), sid="s0"),
        sentence(list("abc"), sid="s1"),
        sentence(list("abcdef"), (0, 0, "negative"), (2, 2, "positive"), (4, 5, "neutral"), sid="s2"),
    ]
    report = SplitReport(0, 0, [])
    ex = split_sentences(corpus, report)
    # enumeration: 2 + 0 + 3
    assert len(ex) == 5
    assert report.num_examples == 5 and report.zero_aspect_sentences == ["s1"]


@pytest.mark.parametrize("n, span, start, end", [
    (4, (1, 2), [0, 1, 0, 0], [0, 0, 1, 0]),
    (4, (3, 3), [0, 0, 0, 1], [0, 0, 0, 1]),
    (2, (0, 1), [1, 0], [0, 1]),
])
def test_build_targets(n, span, start, end):
    ex = TrainingExample(["w"] * n, span[0], span[1], "positive", ("x", 0))
    s, e = build_targets(ex, n)
    np.testing.assert_array_equal(s, start)
    np.testing.assert_array_equal(e, end)


def test_build_targets_out_of_range():
    ex = TrainingExample(["w"] * 3, 1, 3, "positive", ("x", 0))
    with pytest.raises(IndexError):
        build_targets(ex, 3)


@st.composite
def sentences(draw):
    n = draw(st.integers(1, 12))
    # non-overlapping spans: pick sorted cut points
    cuts = sorted(draw(st.sets(st.integers(0, n - 1), max_size=n)))
    aspects, pos = [], 0
    for c in cuts:
        if c < pos:
            continue
        end = draw(st.integers(c, min(n - 1, c + 2)))
        aspects.append(AspectAnnotation(c, end, draw(st.sampled_from(["positive", "negative", "neutral"]))))
        pos = end + 1
        if pos >= n:
            break
    return AnnotatedSentence([f"t{i}" for i in range(n)], aspects, f"id{draw(st.integers(0, 10**6))}")


@settings(max_examples=60, deadline=None)
@given(st.lists(sentences(), max_size=8))
def test_split_preserves_supervision_mass(corpus):
    for s in corpus:
        s.validate()
    ex = split_sentences(corpus)
    assert len(ex) == sum(len(s.aspects) for s in corpus)
    for e in ex:
        st_, en = e.start_target, e.end_target
        assert st_.sum() == 1 and en.sum() == 1
        assert st_.argmax() <= en.argmax()


SEMEVAL_2014 = """<?xml version="1.0" encoding="UTF-8"?>
<sentences>
  <sentence id="1">
    <text>I charge it at night and skip taking the cord with me.</text>
    <aspectTerms>
      <aspectTerm term="cord" polarity="neutral" from="41" to="45"/>
    </aspectTerms>
  </sentence>
  <sentence id="2">
    <text>The battery life is great, except the screen.</text>
    <aspectTerms>
      <aspectTerm term="battery life" polarity="positive" from="4" to="16"/>
      <aspectTerm term="screen" polarity="negative" from="38" to="44"/>
    </aspectTerms>
  </sentence>
  <sentence id="3">
    <text>Price is mixed.</text>
    <aspectTerms>
      <aspectTerm term="Price" polarity="conflict" from="0" to="5"/>
    </aspectTerms>
  </sentence>
  <sentence id="4"><text>No aspects here.</text></sentence>
</sentences>
"""

SEMEVAL_2016 = """<?xml version="1.0" encoding="UTF-8"?>
<Reviews><Review rid="r1"><sentences>
  <sentence id="r1:0">
    <text>Great food but the service was dreadful!</text>
    <Opinions>
      <Opinion target="food" category="FOOD#QUALITY" polarity="positive" from="6" to="10"/>
      <Opinion target="service" category="SERVICE#GENERAL" polarity="negative" from="19" to="26"/>
      <Opinion target="service" category="SERVICE#STAFF" polarity="negative" from="19" to="26"/>
      <Opinion target="NULL" category="RESTAURANT#GENERAL" polarity="positive" from="0" to="0"/>
    </Opinions>
  </sentence>
</sentences></Review></Reviews>
"""


def test_semeval_2014_import(tmp_path):
    p = tmp_path / "lap.xml"
    p.write_text(SEMEVAL_2014)
    sents = load_dataset(p, "semeval-xml")
    assert len(sents) == 4
    s1 = sents[0]
    (a,) = s1.aspects
    assert s1.tokens[a.start : a.end + 1] == ["cord"] and a.polarity == "neutral"
    s2 = sents[1]
    assert [s2.tokens[a.start : a.end + 1] for a in s2.aspects] == [["battery", "life"], ["screen"]]
    assert sents[2].aspects == []  # conflict dropped
    assert corpus_stats(sents)["aspects"] == 3


def test_semeval_2016_import_dedupes_categories(tmp_path):
    p = tmp_path / "rest.xml"
    p.write_text(SEMEVAL_2016)
    (s,) = load_dataset(p, "semeval-xml")
    assert [(s.tokens[a.start], a.polarity) for a in s.aspects] == [("food", "positive"), ("service", "negative")]


def test_malformed_xml(tmp_path):
    p = tmp_path / "bad.xml"
    p.write_text("<sentences><sentence id='1'><text>x</text>")
    with pytest.raises(DatasetError):
        load_dataset(p, "semeval-xml")


@pytest.mark.skipif(not os.environ.get("FCKT_LAPTOP_XML"), reason="set FCKT_LAPTOP_XML to the SemEval-14 laptop file(s)")
def test_laptop_statistics():
    paths = os.environ["FCKT_LAPTOP_XML"].split(os.pathsep)
    sents = [s for p in paths for s in load_dataset(Path(p), "semeval-xml")]
    stats = corpus_stats(sents)
    assert (stats["sentences"], stats["aspects"]) == (1869, 2936)


def test_folds_partition_and_determinism():
    folds = make_folds(100, 10, seed=3)
    assert [len(f) for f in folds] == [10] * 10
    flat = sorted(i for f in folds for i in f)
    assert flat == list(range(100))
    assert make_folds(100, 10, seed=3) == folds
    assert make_folds(100, 10, seed=4) != folds
