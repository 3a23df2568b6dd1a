"""Text normalization, vocabulary, token encoding and batch padding."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .game_model import GameDefinition

PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

_TAG = re.compile(r"<[^>]*>")
_NON_ALNUM = re.compile(r"[\W_]+")


def preprocess_text(raw: str) -> list[str]:
    """Lowercase, drop HTML tags, turn every non-alphanumeric run into a space, split."""
    text = _TAG.sub(" ", raw.lower())
    return _NON_ALNUM.sub(" ", text).split()


@dataclass(frozen=True)
class TokenSeq:
    ids: tuple[int, ...]
    source_text: str = ""

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class Vocabulary:
    id_to_token: list[str] = field(default_factory=lambda: [PAD_TOKEN, UNK_TOKEN])
    token_to_id: dict[str, int] = field(init=False)

    def __post_init__(self):
        if self.id_to_token[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("vocabulary must start with the pad and unknown tokens")
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def _add(self, token: str) -> None:
        if token not in self.token_to_id:
            self.token_to_id[token] = len(self.id_to_token)
            self.id_to_token.append(token)

    def encode(self, text: str) -> TokenSeq:
        ids = tuple(self.token_to_id.get(tok, UNK_ID) for tok in preprocess_text(text))
        return TokenSeq(ids, text)

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.id_to_token) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(lines)


def build_vocabulary(games: Iterable[GameDefinition]) -> Vocabulary:
    """Ids follow first occurrence over the games' texts, in the order given."""
    vocab = Vocabulary()
    for game in games:
        for text in game.texts():
            for tok in preprocess_text(text):
                vocab._add(tok)
    return vocab


def encode(vocab: Vocabulary, text: str) -> TokenSeq:
    return vocab.encode(text)


def pad_batch(seqs: Sequence[TokenSeq | Sequence[int]]) -> tuple[np.ndarray, list[int]]:
    """Right-pad with PAD_ID to the longest sequence; returns ``(ids, lengths)``."""
    if not seqs:
        raise ValueError("cannot pad an empty batch")
    rows = [s.ids if isinstance(s, TokenSeq) else tuple(s) for s in seqs]
    lengths = [len(r) for r in rows]
    width = max(lengths)
    if width == 0:
        raise ValueError("all sequences in the batch are empty")
    out = np.full((len(rows), width), PAD_ID, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, : len(r)] = r
    return out, lengths


def unpad(ids: np.ndarray, lengths: Sequence[int]) -> list[tuple[int, ...]]:
    return [tuple(int(x) for x in row[:n]) for row, n in zip(ids, lengths)]
