import re
from collections.abc import Iterable
from pathlib import Path

from pydantic import BaseModel, Field, model_validator

from src.domain.entities import Instruction
from src.domain.exceptions import InputError

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1
SPECIAL_TOKENS = (PAD_TOKEN, UNK_TOKEN)

# Punctuation split off into standalone tokens
_PUNCTUATION = re.compile(r"([.,;])")


class Vocabulary(BaseModel):
    """
    Word-level vocabulary. PAD=0 and UNK=1 are reserved; ordinary words
    follow in file order.
    """
    token_to_id: dict[str, int] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_specials(self) -> "Vocabulary":
        if self.token_to_id.get(PAD_TOKEN) != PAD_ID or self.token_to_id.get(UNK_TOKEN) != UNK_ID:
            raise ValueError("vocabulary must map <pad> to 0 and <unk> to 1")
        if sorted(self.token_to_id.values()) != list(range(len(self.token_to_id))):
            raise ValueError("vocabulary ids must be dense and unique")
        return self

    @classmethod
    def build(cls, words: Iterable[str]) -> "Vocabulary":
        mapping = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
        for word in words:
            word = word.lower()
            if word not in mapping:
                mapping[word] = len(mapping)
        return cls(token_to_id=mapping)

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        """One token per line; line n (0-based) gets id n + 2."""
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls.build(line.strip() for line in lines if line.strip())

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        words = [w for w, _ in sorted(self.token_to_id.items(), key=lambda item: item[1]) if w not in SPECIAL_TOKENS]
        path.write_text("\n".join(words) + "\n", encoding="utf-8")
        return path

    @property
    def size(self) -> int:
        return len(self.token_to_id)

    def __len__(self) -> int:
        return self.size

    def __contains__(self, word: str) -> bool:
        return word in self.token_to_id

    def lookup(self, word: str) -> int:
        return self.token_to_id.get(word, UNK_ID)


def split_words(raw: str) -> list[str]:
    """Lowercases, isolates '.', ',' and ';', and splits on whitespace."""
    return _PUNCTUATION.sub(r" \1 ", raw.lower()).split()


def tokenize(raw: str, vocab: Vocabulary) -> Instruction:
    words = split_words(raw)
    if not words:
        raise InputError("Cannot tokenize an empty instruction")
    return Instruction(raw=raw, tokens=[vocab.lookup(w) for w in words], token_texts=words)
