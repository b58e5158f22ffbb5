import pytest

from src.domain.exceptions import InputError
from src.processing.tokenizer import PAD_ID, UNK_ID, Vocabulary, split_words, tokenize


@pytest.fixture
def vocab():
    return Vocabulary.build(["walk", "to", "the", "Kitchen", "walk", "."])


def test_build_reserves_specials_and_dedupes(vocab):
    assert vocab.token_to_id == {"<pad>": PAD_ID, "<unk>": UNK_ID, "walk": 2, "to": 3, "the": 4, "kitchen": 5, ".": 6}
    assert len(vocab) == 7
    assert "kitchen" in vocab


def test_split_words_isolates_punctuation():
    assert split_words("Walk left, then STOP.") == ["walk", "left", ",", "then", "stop", "."]
    assert split_words("a;b") == ["a", ";", "b"]


def test_tokenize_maps_unknown_words(vocab):
    inst = tokenize("Walk to the garden.", vocab)
    assert inst.tokens == [2, 3, 4, UNK_ID, 6]
    assert inst.token_texts == ["walk", "to", "the", "garden", "."]
    assert len(inst) == 5


@pytest.mark.parametrize("raw", ["", "   \n"])
def test_empty_instruction_is_input_error(vocab, raw):
    with pytest.raises(InputError):
        tokenize(raw, vocab)


def test_save_and_load_keep_ids(tmp_path, vocab):
    path = vocab.save(tmp_path / "vocab.txt")
    assert path.read_text(encoding="utf-8").splitlines() == ["walk", "to", "the", "kitchen", "."]
    assert Vocabulary.load(path) == vocab


def test_vocabulary_requires_reserved_ids():
    with pytest.raises(ValueError):
        Vocabulary(token_to_id={"<pad>": 1, "<unk>": 0})
    with pytest.raises(ValueError):
        Vocabulary(token_to_id={"<pad>": 0, "<unk>": 1, "walk": 5})
