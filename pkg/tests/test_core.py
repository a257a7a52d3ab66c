import json
from datetime import timedelta

import pytest
from hypothesis import given, strategies as st

from conftest import T0, make_meta
from newsrag.core import (
    Answer,
    Document,
    DocumentChunk,
    EmbeddingVector,
    QAPair,
    SearchHit,
    ValidationError,
    check_hits,
    format_chunk_id,
    parse_chunk_id,
    validate_metadata,
)


def codes(m):
    return [v.code for v in validate_metadata(m)]


def test_zero_duration_is_valid():
    assert validate_metadata(make_meta("r1", "en", duration=0.0)) == []


def test_empty_id():
    assert "EMPTY_ID" in codes(make_meta(""))


def test_unsupported_language():
    assert codes(make_meta(language="it")) == ["UNSUPPORTED_LANGUAGE"]


def test_end_before_start():
    assert "END_BEFORE_START" in codes(make_meta(end=T0 - timedelta(seconds=5)))


@pytest.mark.parametrize("duration,ok", [(60.0, True), (60.9, True), (61.5, False), (58.5, False)])
def test_duration_tolerance(duration, ok):
    m = make_meta(duration=duration, end=T0 + timedelta(seconds=60))
    assert (codes(m) == []) is ok


def test_negative_duration():
    assert "NEGATIVE_DURATION" in codes(make_meta(duration=-1.0))


def test_reports_every_violation():
    m = make_meta("", language="xx", duration=-3.0)
    assert set(codes(m)) >= {"EMPTY_ID", "UNSUPPORTED_LANGUAGE", "NEGATIVE_DURATION"}


ids = st.text(st.characters(blacklist_characters="#", blacklist_categories=("Cs",)), min_size=1)


@given(ids, st.integers(min_value=0, max_value=10**9))
def test_chunk_id_roundtrip(doc_id, ordinal):
    assert parse_chunk_id(format_chunk_id(doc_id, ordinal)) == (doc_id, ordinal)


def test_chunk_id_rejects_hash_in_doc_id():
    with pytest.raises(ValidationError):
        format_chunk_id("a#b", 0)


def roundtrip(obj):
    return type(obj).from_dict(json.loads(json.dumps(obj.to_dict())))


meta_st = st.builds(
    make_meta,
    recording_id=st.text(min_size=1, max_size=20),
    language=st.sampled_from(["en", "es", "fr", "de", "pt"]),
    source=st.text(max_size=10),
    duration=st.floats(min_value=0, max_value=1e6),
    start=st.datetimes(timezones=st.just(T0.tzinfo)),
    resolution=st.none() | st.text(max_size=8),
    collection=st.none() | st.text(max_size=8),
)


@given(meta_st)
def test_metadata_roundtrip(m):
    assert roundtrip(m) == m


@given(meta_st, st.text(min_size=1))
def test_document_and_chunk_roundtrip(m, text):
    doc = Document("d", text, m)
    assert roundtrip(doc) == doc
    chunk = DocumentChunk("d#0", "d", 0, text, (0, len(text)), m)
    assert roundtrip(chunk) == chunk


@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=32), min_size=1, max_size=16))
def test_vector_roundtrip(values):
    v = EmbeddingVector(tuple(values))
    assert roundtrip(v) == v
    assert v.dim == len(values)


def test_vector_invariants():
    with pytest.raises(ValidationError):
        EmbeddingVector((1.0, float("nan")))
    with pytest.raises(Exception):
        EmbeddingVector((1.0, 2.0), dim=3)
    assert EmbeddingVector((0.0, 0.0)).is_zero


def test_qapair_and_answer_roundtrip():
    p = QAPair("Who won?", "The senator.", "en", source_recording_id="r1")
    assert roundtrip(p) == p
    assert p.validate() == []
    assert {v.code for v in QAPair("", "", "xx").validate()} == {"EMPTY_INSTRUCTION", "EMPTY_OUTPUT", "UNSUPPORTED_LANGUAGE"}
    a = Answer("text", (SearchHit("d#0", 0.5, 1),), "q", "m", "v1", {"k": 4})
    assert roundtrip(a) == a


def test_check_hits():
    check_hits([SearchHit("a", 0.9, 1), SearchHit("b", 0.9, 2), SearchHit("c", 0.1, 3)])
    with pytest.raises(ValidationError):
        check_hits([SearchHit("a", 0.1, 1), SearchHit("b", 0.9, 2)])
    with pytest.raises(ValidationError):
        check_hits([SearchHit("a", 0.9, 2)])
