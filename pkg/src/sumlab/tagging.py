"""Part-of-speech tagging over a fixed 12-tag coarse tag set.

A tagger is any callable mapping a token list to an equal-length tag list.
The bundled LexiconTagger keeps the repo self-contained: a closed-class
lexicon plus suffix rules, with "X" as the catch-all. Externally supplied
tags (carried in corpus records) take precedence over any tagger.
"""

from __future__ import annotations

import re
from typing import Callable, Sequence

TAG_SET = (
    "ADJ", "ADP", "ADV", "CONJ", "DET", "NOUN",
    "NUM", "PRON", "PRT", "VERB", "PUNC", "X",
)
FALLBACK_TAG = "X"

Tagger = Callable[[Sequence[str]], list[str]]

_NUMBER_RE = re.compile(r"^[+-]?\d+([.,]\d+)*$")
_PUNC_RE = re.compile(r"^[^\w\s]+$")

# Closed classes and a seed of frequent open-class words. Lowercase only;
# the corpus pipeline lowercases before tagging.
_LEXICON = {
    "DET": ["the", "a", "an", "this", "that", "these", "those", "each",
            "every", "no", "any", "some", "all", "both"],
    "ADP": ["in", "on", "at", "of", "to", "from", "with", "by", "for",
            "about", "against", "between", "into", "through", "during",
            "before", "after", "above", "below", "under", "over", "near"],
    "CONJ": ["and", "or", "but", "nor", "so", "yet", "because", "although",
             "while", "if", "unless", "since", "whether"],
    "PRON": ["i", "you", "he", "she", "it", "we", "they", "me", "him",
             "her", "us", "them", "my", "your", "his", "its", "our",
             "their", "who", "whom", "whose", "which", "what"],
    "PRT": ["not", "n't", "'s", "up", "out", "off", "down", "away"],
    "ADV": ["very", "too", "also", "now", "then", "here", "there", "again",
            "ever", "never", "always", "often", "soon", "just", "still",
            "already", "almost", "perhaps", "however", "today", "friday"],
    "VERB": ["is", "are", "was", "were", "be", "been", "being", "am",
             "has", "have", "had", "do", "does", "did", "will", "would",
             "can", "could", "may", "might", "shall", "should", "must",
             "say", "says", "said", "make", "makes", "made", "go", "goes",
             "went", "get", "gets", "got", "take", "takes", "took",
             "see", "sees", "saw", "know", "knows", "knew", "sat", "sits",
             "runs", "run", "ran", "gain", "gained", "sent", "stop"],
    "ADJ": ["good", "new", "old", "big", "small", "high", "low", "long",
            "large", "little", "own", "other", "last", "first", "same",
            "great", "major", "top", "several", "former", "chief"],
    "NUM": ["one", "two", "three", "four", "five", "six", "seven",
            "eight", "nine", "ten", "hundred", "thousand", "million",
            "billion", "dozen", "half"],
}

_SUFFIX_RULES = (
    # (suffix, min token length, tag); first match wins.
    ("ness", 6, "NOUN"),
    ("ment", 6, "NOUN"),
    ("tion", 6, "NOUN"),
    ("sion", 6, "NOUN"),
    ("ship", 6, "NOUN"),
    ("ism", 5, "NOUN"),
    ("ist", 5, "NOUN"),
    ("ity", 5, "NOUN"),
    ("ers", 5, "NOUN"),
    ("er", 4, "NOUN"),
    ("ous", 5, "ADJ"),
    ("ful", 5, "ADJ"),
    ("able", 6, "ADJ"),
    ("ible", 6, "ADJ"),
    ("ive", 5, "ADJ"),
    ("al", 4, "ADJ"),
    ("ic", 4, "ADJ"),
    ("ly", 4, "ADV"),
    ("ing", 5, "VERB"),
    ("ized", 6, "VERB"),
    ("ised", 6, "VERB"),
    ("ed", 4, "VERB"),
    ("ies", 5, "NOUN"),
    ("s", 3, "NOUN"),
)


class LexiconTagger:
    """Lexicon lookup, then number/punctuation patterns, then suffix rules.

    Deterministic and pure; unknown tokens fall back to "X".
    """

    def __init__(self, extra_lexicon: dict[str, str] | None = None):
        self._word_to_tag: dict[str, str] = {}
        for tag, words in _LEXICON.items():
            for w in words:
                self._word_to_tag[w] = tag
        if extra_lexicon:
            for w, tag in extra_lexicon.items():
                if tag not in TAG_SET:
                    raise ValueError(f"unknown tag {tag!r} for lexicon entry {w!r}")
                self._word_to_tag[w.lower()] = tag

    def tag_token(self, token: str) -> str:
        token = token.lower()
        tag = self._word_to_tag.get(token)
        if tag is not None:
            return tag
        if _NUMBER_RE.match(token):
            return "NUM"
        if _PUNC_RE.match(token):
            return "PUNC"
        for suffix, min_len, tag in _SUFFIX_RULES:
            if len(token) >= min_len and token.endswith(suffix):
                return tag
        return FALLBACK_TAG

    def __call__(self, tokens: Sequence[str]) -> list[str]:
        return [self.tag_token(t) for t in tokens]


def annotate_pos(tokens: Sequence[str], tagger: Tagger) -> list[str]:
    """Tag `tokens`, forcing per-token fallback to "X" on tagger failure.

    The output always has the input length and only tags from TAG_SET.
    """
    tokens = list(tokens)
    if not tokens:
        return []
    try:
        tags = list(tagger(tokens))
    except Exception:
        tags = [FALLBACK_TAG] * len(tokens)
    if len(tags) != len(tokens):
        tags = [FALLBACK_TAG] * len(tokens)
    return [t if t in TAG_SET else FALLBACK_TAG for t in tags]


def tag_index(tag: str) -> int:
    """Position of `tag` inside TAG_SET; used for one-hot feature spans."""
    try:
        return TAG_SET.index(tag)
    except ValueError:
        return TAG_SET.index(FALLBACK_TAG)
