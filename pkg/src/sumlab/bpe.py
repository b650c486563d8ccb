"""Byte-pair encoding over whitespace tokens.

Words are split into characters plus a trailing end-of-word marker; learning
greedily merges the most frequent adjacent symbol pair. Ties are broken
lexicographically with the marker ordered after every ordinary symbol, which
keeps boundary merges last among equally frequent candidates and makes
learning a pure function of (corpus, num_merges).
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterable, Sequence

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import ConfigurationError, DataError
from .vocab import BOS, EOS, PAD, SPECIAL_TOKENS, UNK, Vocabulary, build_vocabulary

END_OF_WORD = "</w>"
BPE_FORMAT_VERSION = 1

Pair = tuple[str, str]


def word_to_symbols(word: str) -> tuple[str, ...]:
    return tuple(word) + (END_OF_WORD,)


def _pair_sort_key(pair: Pair):
    # Marker sorts after any ordinary symbol so boundary merges lose ties.
    left, right = pair
    return (
        (1,) if left == END_OF_WORD else (0, left),
        (1,) if right == END_OF_WORD else (0, right),
    )


def count_pairs(words: dict[tuple[str, ...], int]) -> dict[Pair, int]:
    counts: dict[Pair, int] = {}
    for seq, freq in words.items():
        for pair in zip(seq, seq[1:]):
            counts[pair] = counts.get(pair, 0) + freq
    return counts


def merge_sequence(seq: tuple[str, ...], pair: Pair) -> tuple[str, ...]:
    """Replace non-overlapping occurrences of `pair`, scanning left to right."""
    left, right = pair
    merged = left + right
    out: list[str] = []
    i = 0
    while i < len(seq):
        if i + 1 < len(seq) and seq[i] == left and seq[i + 1] == right:
            out.append(merged)
            i += 2
        else:
            out.append(seq[i])
            i += 1
    return tuple(out)


def learn_merges(
    word_counts: dict[str, int], num_merges: int
) -> tuple[list[Pair], dict[tuple[str, ...], int]]:
    """Greedy merge learning; returns the merge list and the final segmented
    word table (symbol sequence -> corpus frequency)."""
    if num_merges < 0:
        raise ConfigurationError(f"num_merges={num_merges} must be >= 0")
    words: dict[tuple[str, ...], int] = {}
    for word, freq in word_counts.items():
        seq = word_to_symbols(word)
        words[seq] = words.get(seq, 0) + freq
    merges: list[Pair] = []
    for _ in range(num_merges):
        pairs = count_pairs(words)
        if not pairs:
            break
        best = min(pairs, key=lambda p: (-pairs[p], _pair_sort_key(p)))
        merges.append(best)
        new_words: dict[tuple[str, ...], int] = {}
        for seq, freq in words.items():
            merged = merge_sequence(seq, best)
            new_words[merged] = new_words.get(merged, 0) + freq
        words = new_words
    return merges, words


class BpeTokenizer(BaseEstimator, TransformerMixin):
    """Subword tokenizer with fit/transform over token sequences.

    fit() expects an iterable of token lists; transform() maps each token
    list to a flat list of subword ids. Characters unseen at fit time encode
    to the UNK id. Fitted models are immutable and safe to share.
    """

    def __init__(self, num_merges: int = 32000):
        self.num_merges = num_merges

    def fit(self, X: Iterable[Sequence[str]], y=None):
        word_counts: dict[str, int] = {}
        for tokens in X:
            for t in tokens:
                word_counts[t] = word_counts.get(t, 0) + 1
        self.merges_, final_words = learn_merges(word_counts, self.num_merges)
        # The symbol inventory covers every initial character, the marker,
        # and every merge output: partially merged segmentations of unseen
        # words must still map to known ids.
        symbol_freq: dict[str, int] = {}
        for word in word_counts:
            for sym in word_to_symbols(word):
                symbol_freq.setdefault(sym, 0)
        for left, right in self.merges_:
            symbol_freq.setdefault(left + right, 0)
        for seq, freq in final_words.items():
            for sym in seq:
                symbol_freq[sym] = symbol_freq.get(sym, 0) + freq
        self.vocab_ = build_vocabulary(symbol_freq, max_size=len(symbol_freq) + 4, min_freq=0)
        self._segment_cache: dict[str, tuple[str, ...]] = {}
        return self

    def segment_word(self, word: str) -> tuple[str, ...]:
        """Symbol sequence for one word after applying all merges in order."""
        check_is_fitted(self, "merges_")
        cached = self._segment_cache.get(word)
        if cached is not None:
            return cached
        seq = word_to_symbols(word)
        for pair in self.merges_:
            if len(seq) < 2:
                break
            seq = merge_sequence(seq, pair)
        self._segment_cache[word] = seq
        return seq

    def encode(self, tokens: Sequence[str]) -> list[int]:
        check_is_fitted(self, "vocab_")
        ids: list[int] = []
        for word in tokens:
            for sym in self.segment_word(word):
                ids.append(self.vocab_.token_to_id.get(sym, UNK))
        return ids

    def decode(self, ids: Sequence[int]) -> list[str]:
        check_is_fitted(self, "vocab_")
        pieces: list[str] = []
        for i in ids:
            if not 0 <= i < len(self.vocab_):
                raise DataError(f"subword id {i} out of range [0, {len(self.vocab_)})")
            if i in (PAD, BOS, EOS):
                continue
            pieces.append(self.vocab_.id_to_token[i])
        text = "".join(pieces)
        return [w for w in text.split(END_OF_WORD) if w]

    def transform(self, X: Iterable[Sequence[str]]) -> list[list[int]]:
        return [self.encode(tokens) for tokens in X]


def save_bpe(tokenizer: BpeTokenizer, path: str | Path) -> None:
    """Merge table, one pair per line in learned order, with a header."""
    check_is_fitted(tokenizer, "merges_")
    lines = [
        f"#version={BPE_FORMAT_VERSION}",
        f"#num_merges={len(tokenizer.merges_)}",
        f"#marker={END_OF_WORD}",
    ]
    lines += [f"{left} {right}" for left, right in tokenizer.merges_]
    lines.append("#symbols")
    for token, freq in zip(tokenizer.vocab_.id_to_token, tokenizer.vocab_.frequency):
        if token in SPECIAL_TOKENS:
            continue
        lines.append(f"{token}\t{freq}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_bpe(path: str | Path) -> BpeTokenizer:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != f"#version={BPE_FORMAT_VERSION}":
        raise DataError(f"unsupported subword model header in {path}")
    header = {}
    body_start = 1
    for i, line in enumerate(lines[1:3], start=1):
        if line.startswith("#") and "=" in line:
            key, _, value = line[1:].partition("=")
            header[key] = value
            body_start = i + 1
    if header.get("marker") != END_OF_WORD:
        raise DataError(f"unsupported end-of-word marker in {path}")
    num_merges = int(header.get("num_merges", "0"))
    merges: list[Pair] = []
    symbol_freq: dict[str, int] = {}
    in_symbols = False
    for line in lines[body_start:]:
        if line == "#symbols":
            in_symbols = True
            continue
        if not line:
            continue
        if in_symbols:
            token, _, freq = line.partition("\t")
            symbol_freq[token] = int(freq)
        else:
            left, _, right = line.partition(" ")
            merges.append((left, right))
    if len(merges) != num_merges:
        raise DataError(
            f"merge count mismatch in {path}: header says {num_merges}, found {len(merges)}"
        )
    tok = BpeTokenizer(num_merges=num_merges)
    tok.merges_ = merges
    tok.vocab_ = build_vocabulary(symbol_freq, max_size=len(symbol_freq) + 4, min_freq=0)
    tok._segment_cache = {}
    return tok
