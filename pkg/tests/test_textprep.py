import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from notetopics.errors import DataError
from notetopics.textprep import (
    DEFAULT_STOPWORDS, TOKEN_GRAMMAR, DocTermMatrix, TokenStream, Vocabulary,
    build_vocabulary, lemmatize, load_stopwords, normalize, remove_stopwords,
    to_doc_term_matrix, tokenize,
)


@pytest.mark.parametrize("text, expected", [
    ("Denies DEPRESSION, anxiety.", ["denies", "depression", "anxiety"]),
    ("CD4 count 250", ["cd", "count"]),
    ("", []),
    ("self-image isn't good -- ok", ["self-image", "isn't", "good", "ok"]),
    ("Patient’s café", ["patient's", "caf"]),
])
def test_tokenize(text, expected):
    assert tokenize(text) == expected


def test_stopwords_default():
    assert "the" in DEFAULT_STOPWORDS and "is" in DEFAULT_STOPWORDS
    assert remove_stopwords(["the", "patient", "is", "anxious"]) == ["patient", "anxious"]
    assert remove_stopwords([]) == []
    assert remove_stopwords(["hiv", "fear"]) == ["hiv", "fear"]


def test_stopword_override_file(tmp_path):
    f = tmp_path / "stop.txt"
    f.write_text("# custom\nPatient\n\nfear  # trailing comment\n", encoding="utf-8")
    assert load_stopwords(f) == frozenset({"patient", "fear"})


@pytest.mark.parametrize("word, lemma", [
    ("denies", "deny"), ("feet", "foot"), ("hiv", "hiv"), ("violated", "violate"),
    ("denied", "deny"), ("notes", "note"), ("boxes", "box"), ("stopped", "stop"),
    ("smoking", "smoke"), ("isolated", "isolate"), ("treated", "treat"),
    ("stress", "stress"), ("aids", "aids"), ("diagnoses", "diagnosis"),
    ("children", "child"), ("feelings", "feel"),
])
def test_lemmatize_examples(word, lemma):
    assert lemmatize(word) == lemma


words = st.from_regex(r"[a-z]{1,12}(?:[-'][a-z]{1,5})?", fullmatch=True)


@settings(max_examples=500)
@given(words)
def test_lemmatize_idempotent_and_grammatical(w):
    lem = lemmatize(w)
    assert lemmatize(lem) == lem
    assert TOKEN_GRAMMAR.match(lem)


@given(st.text(max_size=200))
def test_normalize_invariants(text):
    toks = normalize(text)
    assert toks == normalize(text)
    assert all(TOKEN_GRAMMAR.match(t) for t in toks)
    assert not set(toks) & DEFAULT_STOPWORDS
    assert len(toks) <= len(tokenize(text))


def streams_from(docs):
    return [TokenStream(f"u{i}", tuple(d)) for i, d in enumerate(docs)]


def test_vocabulary_thresholds():
    docs = [["rare"]] + [["common"]] * 60 + [["mid"]] * 10 + [["pad"]] * 29
    assert len(docs) == 100
    vocab = build_vocabulary(streams_from(docs), min_df=2, max_df_fraction=0.5)
    assert "rare" not in vocab.term_to_id
    assert "common" not in vocab.term_to_id
    assert "mid" in vocab.term_to_id
    assert vocab.terms == sorted(vocab.terms)
    assert all(vocab.term_to_id[t] == i for i, t in enumerate(vocab.terms))
    assert all(df >= 1 for df in vocab.doc_freq)


def test_vocabulary_empty_after_pruning():
    with pytest.raises(DataError, match="min-df"):
        build_vocabulary(streams_from([["a"], ["b"]]))


def test_doc_term_matrix_rows(caplog):
    vocab = Vocabulary(["deny", "fear"], [2, 2])
    dtm = to_doc_term_matrix(streams_from([["deny", "deny", "fear"], ["zzz"], ["deny", "deny", "fear"]]), vocab)
    assert dtm.unit_ids == ["u0", "u2"]
    for ids, cnt in dtm.rows:
        assert ids.tolist() == [0, 1] and cnt.tolist() == [2, 1]
    assert dtm.total_tokens == 6
    assert "u1" in caplog.text or "dropped" in caplog.text


@given(st.lists(st.lists(st.sampled_from("abcdefg"), max_size=8), min_size=3, max_size=20))
def test_matrix_conservation(docs):
    streams = streams_from(docs)
    try:
        vocab = build_vocabulary(streams, min_df=1, max_df_fraction=1.0)
    except DataError:
        return
    dtm = to_doc_term_matrix(streams, vocab)
    lengths = {s.unit_id: sum(t in vocab.term_to_id for t in s.tokens) for s in streams}
    for uid, (ids, cnt) in zip(dtm.unit_ids, dtm.rows):
        assert cnt.sum() == lengths[uid] and (cnt >= 1).all()
        assert (ids < len(vocab)).all()
    assert dtm.total_tokens == sum(int(c.sum()) for _, c in dtm.rows)
    assert dtm.total_tokens == sum(lengths.values())


def test_matrix_and_vocab_roundtrip(tmp_path):
    vocab = Vocabulary(["a", "b", "c"], [3, 2, 2])
    dtm = DocTermMatrix.from_dense(np.array([[1, 0, 2], [0, 3, 0]]))
    dtm.save(tmp_path / "m.txt")
    vocab.save(tmp_path / "v.tsv")
    back = DocTermMatrix.load(tmp_path / "m.txt")
    assert back.unit_ids == dtm.unit_ids
    assert np.array_equal(back.to_csr().toarray(), dtm.to_csr().toarray())
    assert Vocabulary.load(tmp_path / "v.tsv").terms == vocab.terms


def test_token_arrays_order():
    dtm = DocTermMatrix.from_dense(np.array([[2, 0, 1], [0, 1, 0]]))
    doc_ptr, words = dtm.token_arrays()
    assert doc_ptr.tolist() == [0, 3, 4]
    assert words.tolist() == [0, 0, 2, 1]
