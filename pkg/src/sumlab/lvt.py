"""Per-batch restricted decoder vocabularies.

During training the decoder embedding and output projection touch only the
rows named by the batch vocabulary; every other row (parameters and
optimizer moments alike) stays bit-identical. Inference always uses the
full vocabulary.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import Document
from .errors import ConfigurationError, ContractViolation
from .vocab import UNK, Vocabulary

N_SPECIALS = 4


@dataclass
class BatchVocab:
    """Bijection between local rows and a subset of global ids."""

    local_to_global: np.ndarray  # (L,) int64, no duplicates
    global_to_local: dict[int, int]

    @property
    def size(self) -> int:
        return int(self.local_to_global.shape[0])

    def __contains__(self, global_id: int) -> bool:
        return int(global_id) in self.global_to_local


def build_batch_vocab(
    batch: Sequence[Document],
    full_vocab: Vocabulary,
    size: int,
    scope: str = "source_and_target",
) -> BatchVocab:
    """Specials, then the batch's in-vocabulary tokens, then globally
    frequent fill tokens, up to `size` entries.

    Batch tokens and fill tokens are both taken in ascending global id
    order, which equals descending global frequency with deterministic
    ties. When the batch tokens alone overflow, the most frequent win.
    """
    if size < N_SPECIALS:
        raise ConfigurationError(
            f"batch vocabulary size {size} cannot hold the {N_SPECIALS} special tokens"
        )
    if scope not in ("source_and_target", "source"):
        raise ConfigurationError(f"unknown batch vocabulary scope: {scope!r}")
    batch_ids: set[int] = set()
    for doc in batch:
        tokens = list(doc.source_tokens)
        if scope == "source_and_target":
            tokens += doc.target_tokens
        for t in tokens:
            gid = full_vocab.id_of(t)
            if gid >= N_SPECIALS:
                batch_ids.add(gid)
    members = list(range(N_SPECIALS))
    members += sorted(batch_ids)[: max(0, size - N_SPECIALS)]
    if len(members) < size:
        seen = set(members)
        for gid in range(N_SPECIALS, len(full_vocab)):
            if gid in seen:
                continue
            members.append(gid)
            if len(members) == size:
                break
    local_to_global = np.asarray(members, dtype=np.int64)
    return BatchVocab(
        local_to_global=local_to_global,
        global_to_local={int(g): i for i, g in enumerate(members)},
    )


def remap_targets(
    target_ids: Sequence[int], bv: BatchVocab, missing: str = "error"
) -> np.ndarray:
    """Global ids -> local ids; absence signals a construction bug.

    missing="unk" instead demotes absent ids to the UNK row, which keeps the
    loss computable when batch tokens overflow the configured size.
    """
    out = np.empty(len(target_ids), dtype=np.int64)
    for i, gid in enumerate(target_ids):
        local = bv.global_to_local.get(int(gid))
        if local is None:
            if missing == "unk":
                local = bv.global_to_local[UNK]
            else:
                raise ContractViolation(f"target id {gid} is not in the batch vocabulary")
        out[i] = local
    return out


def gather_rows(weights: np.ndarray, bv: BatchVocab) -> np.ndarray:
    """Copy of the batch-vocabulary rows, local order."""
    if weights.ndim != 2:
        raise ContractViolation(f"expected a 2-d weight matrix, got shape {weights.shape}")
    if bv.local_to_global.max(initial=-1) >= weights.shape[0]:
        raise ContractViolation("batch vocabulary refers to rows beyond the weight matrix")
    return weights[bv.local_to_global].copy()


def scatter_row_gradients(
    accumulator: np.ndarray, local_grads: np.ndarray, bv: BatchVocab
) -> np.ndarray:
    """accumulator[local_to_global[i]] += local_grads[i]; other rows untouched."""
    if local_grads.shape != (bv.size, accumulator.shape[1]):
        raise ContractViolation(
            f"local gradient shape {local_grads.shape} does not match "
            f"({bv.size}, {accumulator.shape[1]})"
        )
    np.add.at(accumulator, bv.local_to_global, local_grads)
    return accumulator


def scatter_rows(target: np.ndarray, local_rows: np.ndarray, bv: BatchVocab) -> np.ndarray:
    """Overwrite the batch-vocabulary rows of `target` with `local_rows`."""
    if local_rows.shape != (bv.size, target.shape[1]):
        raise ContractViolation(
            f"local row shape {local_rows.shape} does not match ({bv.size}, {target.shape[1]})"
        )
    target[bv.local_to_global] = local_rows
    return target
