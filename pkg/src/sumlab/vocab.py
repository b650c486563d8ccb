"""Word and subword vocabularies with fixed special tokens.

Ids 0..3 are PAD, UNK, BOS, EOS in that order. Non-special ids are ordered
by descending frequency with lexicographic tie-break, so id order is a
deterministic function of the corpus.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Document
from .errors import ConfigurationError, DataError

PAD, UNK, BOS, EOS = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<unk>", "<s>", "</s>")
VOCAB_FORMAT_VERSION = 1


@dataclass
class Vocabulary:
    id_to_token: list[str]
    frequency: list[int]

    def __post_init__(self):
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ConfigurationError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def id_of(self, token: str) -> int:
        return self.token_to_id.get(token, UNK)

    def token_of(self, idx: int) -> str:
        return self.id_to_token[idx]

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self.id_of(t) for t in tokens]

    def decode(self, ids: Sequence[int], strip_special: bool = True) -> list[str]:
        tokens = [self.id_to_token[i] for i in ids]
        if strip_special:
            tokens = [t for t in tokens if t not in SPECIAL_TOKENS]
        return tokens


def build_vocabulary(counts: dict[str, int], max_size: int, min_freq: int = 1) -> Vocabulary:
    """Specials first, then tokens with frequency >= min_freq, most frequent
    first (ties lexicographic), truncated to max_size entries total."""
    if max_size < len(SPECIAL_TOKENS):
        raise ConfigurationError(
            f"max_size={max_size} cannot hold the {len(SPECIAL_TOKENS)} special tokens"
        )
    ranked = sorted(
        ((t, c) for t, c in counts.items() if c >= min_freq and t not in SPECIAL_TOKENS),
        key=lambda tc: (-tc[1], tc[0]),
    )
    ranked = ranked[: max_size - len(SPECIAL_TOKENS)]
    id_to_token = list(SPECIAL_TOKENS) + [t for t, _ in ranked]
    frequency = [0] * len(SPECIAL_TOKENS) + [c for _, c in ranked]
    return Vocabulary(id_to_token=id_to_token, frequency=frequency)


def count_tokens(docs: Iterable[Document], include_target: bool = True) -> dict[str, int]:
    counts: dict[str, int] = {}
    for doc in docs:
        tokens = doc.source_tokens + doc.target_tokens if include_target else doc.source_tokens
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
    return counts


def build_word_vocab(
    train: Sequence[Document], max_size: int = 123000, min_freq: int = 1
) -> Vocabulary:
    """Word vocabulary over source and target tokens of the training split."""
    if not train:
        raise ConfigurationError("cannot build a vocabulary from an empty training set")
    return build_vocabulary(count_tokens(train), max_size=max_size, min_freq=min_freq)


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    """One `token<TAB>frequency` line per id, specials first."""
    lines = [f"#version={VOCAB_FORMAT_VERSION}"]
    for token, freq in zip(vocab.id_to_token, vocab.frequency):
        lines.append(f"{token}\t{freq}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_vocabulary(path: str | Path) -> Vocabulary:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != f"#version={VOCAB_FORMAT_VERSION}":
        raise DataError(f"unsupported vocabulary file header in {path}")
    id_to_token: list[str] = []
    frequency: list[int] = []
    for line in lines[1:]:
        if not line:
            continue
        token, _, freq = line.partition("\t")
        id_to_token.append(token)
        frequency.append(int(freq))
    if tuple(id_to_token[:4]) != SPECIAL_TOKENS:
        raise DataError(f"vocabulary file {path} does not start with the special tokens")
    return Vocabulary(id_to_token=id_to_token, frequency=frequency)
