import pytest

from retrocap.errors import DataFormatError
from retrocap.tagging import TaggedWord, extract_ws, load_lexicon, load_prepositions, pos_tag


@pytest.fixture()
def lexicon():
    return {"man": "noun", "bike": "noun", "riding": "gerund", "a": "other", "sits": "verb"}


@pytest.fixture()
def preps():
    return frozenset({"on", "with", "near"})


def test_hand_derived_example(lexicon, preps):
    tags = [tw.tag for tw in pos_tag("a man riding a bike", lexicon, preps)]
    assert tags == ["other", "noun", "gerund", "other", "noun"]


def test_empty_sentence(lexicon, preps):
    assert pos_tag("", lexicon, preps) == []


def test_suffix_rule_for_unknown_gerund(lexicon, preps):
    (tw,) = pos_tag("glorping", lexicon, preps)
    assert tw == TaggedWord("glorping", "gerund")


def test_short_ing_words_stay_nouns(lexicon, preps):
    (tw,) = pos_tag("ring", lexicon, preps)
    assert tw.tag == "noun"


def test_closed_list_preposition(lexicon, preps):
    (tw,) = pos_tag("near", lexicon, preps)
    assert tw.tag == "preposition"


def test_lexicon_takes_precedence(preps):
    # lexicon wins over the suffix rule
    (tw,) = pos_tag("riding", {"riding": "noun"}, preps)
    assert tw.tag == "noun"


def test_punctuation_stripped(lexicon, preps):
    tags = pos_tag("man, bike!", lexicon, preps)
    assert [tw.surface for tw in tags] == ["man", "bike"]


def test_extract_ws_filters_other(lexicon, preps):
    ws = extract_ws(["a man riding a bike", "a man sits on a bike"], lexicon, preps)
    assert ws == {
        TaggedWord("man", "noun"), TaggedWord("bike", "noun"),
        TaggedWord("riding", "gerund"), TaggedWord("sits", "verb"),
        TaggedWord("on", "preposition"),
    }


def test_extract_ws_all_filtered(preps):
    lexicon = {"the": "other", "red": "other"}
    assert extract_ws(["the red"], lexicon, preps) == set()


def test_lexicon_file_round_trip(tmp_path):
    path = tmp_path / "lex.tsv"
    path.write_text("man\tnoun\nriding\tgerund\n")
    assert load_lexicon(path) == {"man": "noun", "riding": "gerund"}


def test_lexicon_rejects_bad_tag(tmp_path):
    path = tmp_path / "lex.tsv"
    path.write_text("man\tadjective\n")
    with pytest.raises(DataFormatError, match="adjective"):
        load_lexicon(path)


def test_shipped_preposition_list_loads():
    preps = load_prepositions()
    assert {"on", "in", "with", "under", "beside"} <= preps
    assert len(preps) >= 40
