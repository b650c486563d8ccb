"""Corpus ingestion, deduplication, splitting, and per-token annotation.

Records arrive as line-delimited JSON, one object per line, with required
"source" and "target" strings and an optional "pos" tag list aligned to the
source tokens. Annotation attaches POS tags plus term-frequency and
inverse-document-frequency bin indices to every source token.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ConfigurationError, DataError
from .tagging import TAG_SET, Tagger, annotate_pos

STATS_FORMAT_VERSION = 1


@dataclass
class Document:
    """One source/target pair with optional per-source-token annotations."""

    id: str
    source_tokens: list[str]
    target_tokens: list[str]
    pos_tags: list[str] = field(default_factory=list)
    tf_bins: list[int] = field(default_factory=list)
    idf_bins: list[int] = field(default_factory=list)

    def pair_key(self) -> tuple[str, str]:
        return (" ".join(self.source_tokens), " ".join(self.target_tokens))

    def is_annotated(self) -> bool:
        n = len(self.source_tokens)
        return (
            len(self.pos_tags) == n
            and len(self.tf_bins) == n
            and len(self.idf_bins) == n
        )


@dataclass
class IngestReport:
    """Counters accumulated while reading a corpus file."""

    read: int = 0
    skipped_empty: int = 0
    errors: int = 0


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace."""
    return text.lower().split()


def ingest(
    path: str | Path,
    report: IngestReport | None = None,
    strict: bool = True,
) -> Iterator[Document]:
    """Yield Documents from a line-delimited JSON corpus file, in file order.

    Records with empty source or target are skipped (counted in the report).
    Malformed lines raise DataError naming the line number; with
    strict=False they are counted in the report and skipped instead.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus file not found: {path}")
    report = report if report is not None else IngestReport()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                source = record["source"]
                target = record["target"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                if strict:
                    raise DataError(f"malformed record at line {lineno}: {exc}") from exc
                report.errors += 1
                continue
            src_tokens = tokenize(source)
            tgt_tokens = tokenize(target)
            report.read += 1
            if not src_tokens or not tgt_tokens:
                report.skipped_empty += 1
                continue
            doc = Document(
                id=str(record.get("id", lineno)),
                source_tokens=src_tokens,
                target_tokens=tgt_tokens,
            )
            pos = record.get("pos")
            if pos is not None and len(pos) == len(src_tokens):
                doc.pos_tags = [t if t in TAG_SET else "X" for t in pos]
            for key in ("tf_bin", "idf_bin"):
                bins = record.get(key)
                if bins is not None and len(bins) == len(src_tokens):
                    target_attr = "tf_bins" if key == "tf_bin" else "idf_bins"
                    setattr(doc, target_attr, [int(b) for b in bins])
            yield doc


def write_corpus(docs: Iterable[Document], path: str | Path) -> int:
    """Write Documents as line-delimited JSON; returns the record count."""
    path = Path(path)
    n = 0
    with path.open("w", encoding="utf-8") as fh:
        for doc in docs:
            record = {
                "id": doc.id,
                "source": " ".join(doc.source_tokens),
                "target": " ".join(doc.target_tokens),
            }
            if doc.pos_tags:
                record["pos"] = doc.pos_tags
            if doc.tf_bins:
                record["tf_bin"] = doc.tf_bins
            if doc.idf_bins:
                record["idf_bin"] = doc.idf_bins
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            n += 1
    return n


def deduplicate(docs: Iterable[Document]) -> Iterator[Document]:
    """Keep the first occurrence of each (source, target) pair, in order."""
    seen: set[tuple[str, str]] = set()
    for doc in docs:
        key = doc.pair_key()
        if key in seen:
            continue
        seen.add(key)
        yield doc


def split_documents(
    docs: Sequence[Document], n_valid: int, seed: int = 0
) -> tuple[list[Document], list[Document]]:
    """Shuffle with `seed` and split off `n_valid` validation documents."""
    docs = list(docs)
    if n_valid < 0 or n_valid > len(docs):
        raise ConfigurationError(
            f"n_valid={n_valid} must lie in [0, {len(docs)}] (corpus size)"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(docs))
    valid = [docs[i] for i in order[:n_valid]]
    train = [docs[i] for i in order[n_valid:]]
    return train, valid


@dataclass
class CorpusStats:
    """Document frequencies and TF/IDF bin boundaries from a training split."""

    num_documents: int
    document_frequency: dict[str, int]
    tf_bin_boundaries: list[float]
    idf_bin_boundaries: list[float]
    n_tf_bins: int
    n_idf_bins: int

    def idf(self, term: str) -> float:
        df = self.document_frequency.get(term, 0)
        return inverse_document_frequency(self.num_documents, df)

    def tf_bin(self, value: float) -> int:
        return assign_bin(value, self.tf_bin_boundaries)

    def idf_bin(self, value: float) -> int:
        return assign_bin(value, self.idf_bin_boundaries)


def term_frequency(term: str, tokens: Sequence[str]) -> float:
    """Relative in-document frequency: count / document length."""
    if not tokens:
        return 0.0
    return tokens.count(term) / len(tokens)


def inverse_document_frequency(num_documents: int, df: int) -> float:
    """Smoothed IDF, finite even when a term occurs in every document."""
    return 1.0 + math.log(num_documents / (1.0 + df))


def quantile_boundaries(values: Sequence[float], n_bins: int) -> list[float]:
    """Strictly increasing equal-frequency cut points (at most n_bins - 1)."""
    if n_bins < 1:
        raise ConfigurationError(f"n_bins={n_bins} must be >= 1")
    if not values:
        return []
    qs = [i / n_bins for i in range(1, n_bins)]
    cuts = np.quantile(np.asarray(values, dtype=float), qs)
    boundaries: list[float] = []
    for c in cuts:
        c = float(c)
        if not boundaries or c > boundaries[-1]:
            boundaries.append(c)
    return boundaries


def assign_bin(value: float, boundaries: Sequence[float]) -> int:
    """Bin index of `value`; out-of-range values clamp to the edge bins."""
    return bisect_right(boundaries, value)


def compute_corpus_stats(
    train: Sequence[Document], n_tf_bins: int = 10, n_idf_bins: int = 10
) -> CorpusStats:
    """Count document frequencies over source texts and fit bin boundaries.

    One TF value is observed per distinct (term, document) pair and one IDF
    value per distinct term; boundaries are the quantile cut points of those
    observations.
    """
    if not train:
        raise ConfigurationError("cannot compute corpus statistics on an empty training set")
    df: dict[str, int] = {}
    tf_values: list[float] = []
    for doc in train:
        tokens = doc.source_tokens
        counts: dict[str, int] = {}
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
        for term, count in counts.items():
            df[term] = df.get(term, 0) + 1
            tf_values.append(count / len(tokens))
    n_docs = len(train)
    idf_values = [inverse_document_frequency(n_docs, d) for d in df.values()]
    return CorpusStats(
        num_documents=n_docs,
        document_frequency=df,
        tf_bin_boundaries=quantile_boundaries(tf_values, n_tf_bins),
        idf_bin_boundaries=quantile_boundaries(idf_values, n_idf_bins),
        n_tf_bins=n_tf_bins,
        n_idf_bins=n_idf_bins,
    )


def merge_document_frequencies(parts: Iterable[dict[str, int]]) -> dict[str, int]:
    """Commutative DF merge for sharded counting."""
    merged: dict[str, int] = {}
    for part in parts:
        for term, count in part.items():
            merged[term] = merged.get(term, 0) + count
    return merged


def annotate_document(doc: Document, stats: CorpusStats, tagger: Tagger) -> Document:
    """Fill pos/tf/idf annotations in place; existing POS tags are kept."""
    tokens = doc.source_tokens
    if len(doc.pos_tags) != len(tokens):
        doc.pos_tags = annotate_pos(tokens, tagger)
    doc.tf_bins = [stats.tf_bin(term_frequency(t, tokens)) for t in tokens]
    doc.idf_bins = [stats.idf_bin(stats.idf(t)) for t in tokens]
    return doc


def annotate_documents(
    docs: Iterable[Document], stats: CorpusStats, tagger: Tagger
) -> list[Document]:
    return [annotate_document(doc, stats, tagger) for doc in docs]


def save_stats(stats: CorpusStats, path: str | Path) -> None:
    payload = {
        "format_version": STATS_FORMAT_VERSION,
        "num_documents": stats.num_documents,
        "document_frequency": stats.document_frequency,
        "tf_bin_boundaries": stats.tf_bin_boundaries,
        "idf_bin_boundaries": stats.idf_bin_boundaries,
        "n_tf_bins": stats.n_tf_bins,
        "n_idf_bins": stats.n_idf_bins,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_stats(path: str | Path) -> CorpusStats:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    version = payload.get("format_version")
    if version != STATS_FORMAT_VERSION:
        raise DataError(f"unsupported stats file version: {version!r}")
    return CorpusStats(
        num_documents=payload["num_documents"],
        document_frequency=payload["document_frequency"],
        tf_bin_boundaries=[float(b) for b in payload["tf_bin_boundaries"]],
        idf_bin_boundaries=[float(b) for b in payload["idf_bin_boundaries"]],
        n_tf_bins=payload["n_tf_bins"],
        n_idf_bins=payload["n_idf_bins"],
    )
