import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmsg.chem import TokenDictionary, TokenKind, build_dictionary, split_tokens, tokenize
from mmsg.chem.tokenizer import PAD, UNK
from mmsg.errors import EmptyCorpus, EmptySequence, TokenizeError, UnknownToken


def texts(smiles):
    return [t.text for t in split_tokens(smiles)]


def test_benzene_tokens():
    assert texts("c1ccccc1") == ["c", "1", "c", "c", "c", "c", "c", "1"]


def test_two_letter_halogens_are_single_tokens():
    assert texts("CCl") == ["C", "Cl"]
    assert texts("BrCBr") == ["Br", "C", "Br"]


def test_invalid_bracket_element():
    with pytest.raises(TokenizeError):
        split_tokens("C[X]")


def test_unterminated_bracket_reports_position():
    with pytest.raises(TokenizeError) as info:
        split_tokens("CC[NH4+")
    assert info.value.position == 2


@pytest.mark.parametrize("bad", ["C%1", "C%ab", "C*C", "C C"])
def test_malformed_inputs_rejected(bad):
    with pytest.raises(TokenizeError):
        split_tokens(bad)


def test_empty_string():
    with pytest.raises(EmptySequence):
        split_tokens("")


def test_token_kinds():
    toks = split_tokens("C(=O)[O-].[Na+]%12")
    assert [t.kind for t in toks] == [
        TokenKind.ATOM,
        TokenKind.BRANCH_OPEN,
        TokenKind.BOND,
        TokenKind.ATOM,
        TokenKind.BRANCH_CLOSE,
        TokenKind.BRACKET_ATOM,
        TokenKind.DOT,
        TokenKind.BRACKET_ATOM,
        TokenKind.RING_CLOSURE,
    ]
    assert toks[-1].text == "%12"


def test_bracket_tokens_start_and_end_with_brackets():
    for t in split_tokens("[13CH3][C@@H](N)[nH+]"):
        if t.kind is TokenKind.BRACKET_ATOM:
            assert t.text.startswith("[") and t.text.endswith("]")


def test_dictionary_small_corpus():
    d = build_dictionary(["CC", "C=O"])
    assert d.tokens == [PAD, UNK, "C", "=", "O"]
    assert [d.index[t] for t in d.tokens] == [0, 1, 2, 3, 4]


def test_dictionary_benzene():
    assert build_dictionary(["c1ccccc1"]).tokens == [PAD, UNK, "c", "1"]


def test_dictionary_empty_corpus():
    with pytest.raises(EmptyCorpus):
        build_dictionary([])


def test_dictionary_propagates_tokenize_errors():
    with pytest.raises(TokenizeError):
        build_dictionary(["CC", "C[Xx]"])


def test_unknown_tokens():
    d = build_dictionary(["CC"])
    assert tokenize("CO", d).ids == (2, d.unk_id)
    with pytest.raises(UnknownToken) as info:
        tokenize("CO", d, allow_unknown=False)
    assert info.value.position == 1


def test_dictionary_roundtrip(tmp_path, esol):
    d = build_dictionary(esol.smiles)
    d.save(tmp_path / "vocab.txt")
    assert TokenDictionary.load(tmp_path / "vocab.txt") == d
    lines = (tmp_path / "vocab.txt").read_text().splitlines()
    assert lines[:2] == [PAD, UNK]
    assert len(set(lines)) == len(lines)


def test_corpus_roundtrip(esol, freesolv, lipo):
    for table in (esol, freesolv, lipo):
        for s in table.smiles:
            assert "".join(texts(s)) == s


def test_ids_below_dictionary_size(esol):
    d = build_dictionary(esol.smiles)
    for s in esol.smiles[:200]:
        seq = tokenize(s, d)
        assert seq.length >= 1
        assert max(seq.ids) < len(d)


_piece = st.sampled_from(
    ["C", "c", "N", "O", "Cl", "Br", "=", "#", "(", ")", "1", "2", "%10", "[NH4+]", "[C@@H]", "[13C]", ".", "/", "\\"]
)


@given(st.lists(_piece, min_size=1, max_size=30))
@settings(max_examples=200, deadline=None)
def test_roundtrip_property(pieces):
    s = "".join(pieces)
    assert "".join(texts(s)) == s
