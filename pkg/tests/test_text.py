import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import chain_doc
from textplay.game_model import game_from_dict
from textplay.harness import bundled_games, load_game
from textplay.text import PAD_ID, UNK_ID, TokenSeq, Vocabulary, build_vocabulary, encode, pad_batch, preprocess_text, unpad


def _game_with_texts(*texts, name="g"):
    doc = chain_doc(steps=1, name=name)
    doc["nodes"]["n0"]["descriptions"] = [{"text": texts[0]}]
    doc["nodes"]["n0"]["actions"][0]["text"] = texts[1]
    doc["nodes"]["n1"]["descriptions"] = [{"text": texts[2]}]
    return game_from_dict(doc)


@pytest.mark.parametrize("raw, tokens", [
    ("There is a Dragon!", ["there", "is", "a", "dragon"]),
    ("", []),
    ("chest-to-your-left", ["chest", "to", "your", "left"]),
    ("<b>Bold</b> move_now", ["bold", "move", "now"]),
    ("  ...  ", []),
])
def test_preprocess(raw, tokens):
    assert preprocess_text(raw) == tokens


def test_vocabulary_of_two_tokens():
    v = build_vocabulary([_game_with_texts("Go north", "go", "NORTH!")])
    assert len(v) == 4
    assert v.id_to_token == ["<pad>", "<unk>", "go", "north"]


def test_shared_vocabulary_does_not_grow():
    a = _game_with_texts("go north", "north", "go", name="a")
    b = _game_with_texts("north go", "go", "go north", name="b")
    assert len(build_vocabulary([a, b])) == len(build_vocabulary([a]))


def test_bundled_token_counts_stay_small():
    for name in bundled_games():
        assert len(build_vocabulary([load_game(name)])) < 1000


def test_encode_known_and_unknown():
    v = build_vocabulary([_game_with_texts("go north", "go", "north")])
    assert encode(v, "Go, north").ids == (2, 3)
    assert encode(v, "zxqv").ids == (UNK_ID,)
    assert encode(v, "").ids == ()


def test_vocabulary_save_load(tmp_path):
    v = build_vocabulary([load_game("marsh")])
    v.save(tmp_path / "v.txt")
    assert Vocabulary.load(tmp_path / "v.txt").id_to_token == v.id_to_token


def test_vocabulary_rejects_bad_header():
    with pytest.raises(ValueError):
        Vocabulary(["a", "b"])


def test_pad_batch_shapes():
    ids, lengths = pad_batch([TokenSeq((5, 6, 7)), TokenSeq((8,))])
    assert ids.shape == (2, 3)
    assert ids[1].tolist() == [8, PAD_ID, PAD_ID]
    assert lengths == [3, 1]


def test_pad_batch_no_padding_needed():
    ids, _ = pad_batch([TokenSeq((2, 3))])
    assert ids.tolist() == [[2, 3]]
    ids, lengths = pad_batch([(2, 3), (4, 5), (6, 7)])
    assert ids.shape == (3, 2) and PAD_ID not in ids and lengths == [2, 2, 2]


def test_pad_batch_errors():
    with pytest.raises(ValueError):
        pad_batch([TokenSeq(()), TokenSeq(())])
    with pytest.raises(ValueError):
        pad_batch([])


@given(st.lists(st.lists(st.integers(1, 50), max_size=8), min_size=1, max_size=6).filter(lambda b: any(b)))
def test_unpad_inverts_pad(batch):
    ids, lengths = pad_batch(batch)
    assert unpad(ids, lengths) == [tuple(b) for b in batch]
