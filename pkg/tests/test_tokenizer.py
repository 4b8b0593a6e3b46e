import pytest

from retrocap.errors import DataFormatError
from retrocap.tokenizer import BOS, EOS, NULL, PAD, Tokenizer, detokenize, split_words


@pytest.fixture()
def tok():
    return Tokenizer.from_corpus(["a man riding a bike", "the dog sits on grass"])


def test_specials_are_first_four(tok):
    assert (PAD, BOS, EOS, NULL) == (0, 1, 2, 3)
    assert tok.decode([NULL]) == "null"


def test_encode_decode_identity_on_corpus(tok):
    for text in ["a man riding a bike", "the dog sits on grass"]:
        assert tok.decode(tok.encode(text)) == text


def test_template_round_trip(tok):
    rendered = (
        "a photo contains objects: man, bike, null, null, null, null, "
        "and the relations are riding, null, null. Its caption is"
    )
    assert tok.decode(tok.encode(rendered)) == rendered


def test_null_maps_to_special(tok):
    assert tok.encode("null") == [NULL]
    assert tok.encode("man null bike")[1] == NULL


def test_specials_dropped_on_decode(tok):
    ids = [BOS] + tok.encode("a man") + [EOS, PAD]
    assert tok.decode(ids) == "a man"


def test_unknown_token_raises(tok):
    with pytest.raises(KeyError, match="zyzzyva"):
        tok.encode("zyzzyva")


def test_vocab_file_round_trip(tok, tmp_path):
    path = tmp_path / "vocab.txt"
    tok.save(path)
    lines = path.read_text().splitlines()
    assert lines[:4] == ["<pad>", "<bos>", "<eos>", "<null>"]
    back = Tokenizer.load(path)
    assert back.vocab_size == tok.vocab_size
    assert back.encode("a man riding a bike") == tok.encode("a man riding a bike")


def test_vocab_must_start_with_specials():
    with pytest.raises(DataFormatError, match="specials"):
        Tokenizer(["a", "b"])


def test_split_words_separates_punctuation():
    assert split_words("objects: man, bike.") == ["objects", ":", "man", ",", "bike", "."]


def test_detokenize_attaches_punctuation():
    assert detokenize(["objects", ":", "man", ",", "bike", "."]) == "objects: man, bike."


def test_all_templates_round_trip(tok):
    from retrocap.orem import render_template

    for template_id in (1, 2, 3):
        rendered = render_template(["man", "bike"], ["riding"], template_id)
        assert tok.decode(tok.encode(rendered)) == rendered
