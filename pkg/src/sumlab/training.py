"""Batch construction, the optimizer, and the training loop.

One train step is: build the computation graph for the batch loss, run
backward, apply an Adam update under an inverse-square-root warmup schedule.
With restricted-vocabulary training the decoder-side tables are gathered to
the batch vocabulary first, and parameters *and* Adam moments of all other
rows stay bit-identical through the step.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .autodiff import Tensor
from .bpe import BpeTokenizer
from .corpus import CorpusStats, Document, annotate_document
from .errors import ConfigurationError, ContractViolation, TrainingError
from .features import FEATURE_VARIANTS
from .lvt import BatchVocab, build_batch_vocab, gather_rows, remap_targets
from .model import (
    Batch,
    ModelState,
    as_param_tensors,
    cross_entropy_loss,
    forward,
)
from .tagging import LexiconTagger, Tagger, tag_index
from .vocab import BOS, EOS, PAD, Vocabulary


@dataclass
class OptimizerConfig:
    warmup_steps: int = 4000
    lr_scale: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.98
    epsilon: float = 1e-9


def learning_rate(step: int, d_model: int, opt: OptimizerConfig) -> float:
    """Inverse-square-root decay after a linear warmup."""
    if step < 1:
        raise ContractViolation("schedule steps start at 1")
    return (
        opt.lr_scale
        * d_model ** -0.5
        * min(step ** -0.5, step * opt.warmup_steps ** -1.5)
    )


class BatchBuilder:
    """Turns annotated Documents into padded id batches for one model config."""

    def __init__(
        self,
        config,
        word_vocab: Optional[Vocabulary] = None,
        bpe: Optional[BpeTokenizer] = None,
        stats: Optional[CorpusStats] = None,
        tagger: Optional[Tagger] = None,
    ):
        self.config = config
        self.word_vocab = word_vocab
        self.bpe = bpe
        self.stats = stats
        self.tagger = tagger or LexiconTagger()
        if config.embedding_variant == "shared_bpe":
            if bpe is None:
                raise ConfigurationError("shared_bpe needs a fitted subword tokenizer")
        else:
            if word_vocab is None:
                raise ConfigurationError(f"{config.embedding_variant} needs a word vocabulary")
        if config.embedding_variant in FEATURE_VARIANTS and stats is None:
            raise ConfigurationError(
                f"{config.embedding_variant} needs corpus statistics for TF/IDF bins"
            )

    def _features(self, doc: Document) -> Document:
        if not doc.is_annotated():
            doc = annotate_document(doc, self.stats, self.tagger)
        return doc

    def encode_source(self, doc: Document) -> dict[str, list[int]]:
        cfg = self.config
        max_len = cfg.max_positions
        if cfg.embedding_variant == "shared_bpe":
            return {"ids": self.bpe.encode(doc.source_tokens)[:max_len]}
        ids = self.word_vocab.encode(doc.source_tokens)[:max_len]
        if cfg.embedding_variant not in FEATURE_VARIANTS:
            return {"ids": ids}
        doc = self._features(doc)
        n = len(ids)
        layout = cfg.feature_layout()
        return {
            "ids": ids,
            "pos": [tag_index(t) for t in doc.pos_tags[:n]],
            "tf": [min(b, layout.tf_dim - 1) for b in doc.tf_bins[:n]],
            "idf": [min(b, layout.idf_dim - 1) for b in doc.idf_bins[:n]],
        }

    def encode_target(self, doc: Document) -> list[int]:
        limit = self.config.max_positions - 1  # one slot goes to BOS
        if self.config.embedding_variant == "shared_bpe":
            return self.bpe.encode(doc.target_tokens)[:limit]
        return self.word_vocab.encode(doc.target_tokens)[:limit]

    def make_batch(self, docs: Sequence[Document], with_batch_vocab: bool = False) -> Batch:
        if not docs:
            raise ContractViolation("cannot build an empty batch")
        sources = [self.encode_source(d) for d in docs]
        targets = [self.encode_target(d) for d in docs]
        b = len(docs)
        t_src = max(len(s["ids"]) for s in sources)
        t_tgt = max(len(t) for t in targets) + 1  # BOS shift / EOS append
        src_ids = np.full((b, t_src), PAD, dtype=np.int64)
        src_mask = np.zeros((b, t_src), dtype=np.float64)
        dec_in = np.full((b, t_tgt), PAD, dtype=np.int64)
        target = np.full((b, t_tgt), PAD, dtype=np.int64)
        tgt_mask = np.zeros((b, t_tgt), dtype=np.float64)
        feats = None
        if self.config.embedding_variant in FEATURE_VARIANTS:
            feats = {k: np.zeros((b, t_src), dtype=np.int64) for k in ("pos", "tf", "idf")}
        for i, (src, tgt) in enumerate(zip(sources, targets)):
            n = len(src["ids"])
            src_ids[i, :n] = src["ids"]
            src_mask[i, :n] = 1.0
            if feats is not None:
                for k in feats:
                    feats[k][i, :n] = src[k]
            m = len(tgt)
            dec_in[i, 0] = BOS
            dec_in[i, 1 : m + 1] = tgt
            target[i, :m] = tgt
            target[i, m] = EOS
            tgt_mask[i, : m + 1] = 1.0
        batch = Batch(
            src_ids=src_ids,
            src_mask=src_mask,
            dec_in_ids=dec_in,
            target_ids=target,
            tgt_mask=tgt_mask,
            pos_ids=feats["pos"] if feats else None,
            tf_ids=feats["tf"] if feats else None,
            idf_ids=feats["idf"] if feats else None,
            documents=tuple(docs),
        )
        if with_batch_vocab:
            if self.word_vocab is None:
                raise ConfigurationError("restricted training requires a word vocabulary")
            batch.batch_vocab = build_batch_vocab(
                docs, self.word_vocab, self.config.lvt_size, self.config.lvt_scope
            )
        return batch


def _remap_ids(ids: np.ndarray, bv: BatchVocab) -> np.ndarray:
    return remap_targets(ids.ravel().tolist(), bv, missing="unk").reshape(ids.shape)


def _step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng((seed, step))


def batch_vocab_coverage(batch: Batch) -> float:
    """Fraction of real target positions whose id sits in the batch vocabulary."""
    bv = batch.batch_vocab
    if bv is None:
        return 1.0
    mask = batch.tgt_mask.astype(bool)
    ids = batch.target_ids[mask]
    if ids.size == 0:
        return 1.0
    member = np.isin(ids, bv.local_to_global)
    return float(member.mean())


def train_step(state: ModelState, batch: Batch, opt: OptimizerConfig) -> float:
    """One forward/backward/update; returns the batch loss.

    Raises TrainingError (leaving the state untouched) on non-finite loss or
    gradients.
    """
    cfg = state.config
    step = state.step + 1
    rng = _step_rng(cfg.seed, step)
    restricted = cfg.lvt_enabled and batch.batch_vocab is not None
    if restricted:
        bv = batch.batch_vocab
        lvt_names = state.lvt_param_names()
        local_params = dict(state.params)
        for name in lvt_names:
            local_params[name] = gather_rows(state.params[name], bv)
        local_batch = replace(
            batch,
            dec_in_ids=_remap_ids(batch.dec_in_ids, bv),
            target_ids=_remap_ids(batch.target_ids, bv),
        )
        tensors = as_param_tensors(local_params, requires_grad=True)
        logits = forward(tensors, cfg, local_batch, train=True, dropout_rng=rng)
        loss = cross_entropy_loss(
            logits, local_batch.target_ids, local_batch.tgt_mask, cfg.label_smoothing
        )
    else:
        lvt_names = ()
        tensors = as_param_tensors(state.params, requires_grad=True)
        logits = forward(tensors, cfg, batch, train=True, dropout_rng=rng)
        loss = cross_entropy_loss(
            logits, batch.target_ids, batch.tgt_mask, cfg.label_smoothing
        )
    loss_value = float(loss.data)
    if not np.isfinite(loss_value):
        raise TrainingError(f"non-finite loss at step {step}")
    loss.backward()
    grads: dict[str, np.ndarray] = {}
    for name, tensor in tensors.items():
        g = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name} at step {step}")
        grads[name] = g

    lr = learning_rate(step, cfg.d_model, opt)
    if lr != 0.0:
        b1, b2, eps = opt.beta1, opt.beta2, opt.epsilon
        bias1 = 1.0 - b1 ** step
        bias2 = 1.0 - b2 ** step
        for name, g in grads.items():
            if name in lvt_names:
                rows = batch.batch_vocab.local_to_global
                m = state.adam_m[name][rows]
                v = state.adam_v[name][rows]
                m = b1 * m + (1.0 - b1) * g
                v = b2 * v + (1.0 - b2) * g * g
                state.adam_m[name][rows] = m
                state.adam_v[name][rows] = v
                state.params[name][rows] -= lr * (m / bias1) / (np.sqrt(v / bias2) + eps)
            else:
                m = state.adam_m[name]
                v = state.adam_v[name]
                m *= b1
                m += (1.0 - b1) * g
                v *= b2
                v += (1.0 - b2) * g * g
                state.params[name] -= lr * (m / bias1) / (np.sqrt(v / bias2) + eps)
    state.step = step
    return loss_value


def evaluate_loss(state: ModelState, batches: Sequence[Batch]) -> float:
    """Mean full-vocabulary loss over batches, eval mode."""
    total, weight = 0.0, 0.0
    for batch in batches:
        tensors = as_param_tensors(state.params, requires_grad=False)
        logits = forward(tensors, state.config, batch, train=False)
        loss = cross_entropy_loss(logits, batch.target_ids, batch.tgt_mask)
        n = float(batch.tgt_mask.sum())
        total += float(loss.data) * n
        weight += n
    return total / weight if weight else float("nan")


class TrainingLogger:
    """Line-delimited JSON log; one record per event."""

    def __init__(self, path: Optional[str | Path] = None):
        self.path = Path(path) if path else None
        self.records: list[dict] = []
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = self.path.open("w", encoding="utf-8")
        else:
            self._fh = None

    def log(self, record: dict) -> None:
        self.records.append(record)
        if self._fh:
            self._fh.write(json.dumps(record, sort_keys=True) + "\n")
            self._fh.flush()

    def close(self) -> None:
        if self._fh:
            self._fh.close()
            self._fh = None


def iterate_batches(
    docs: Sequence[Document], batch_size: int, seed: int, epoch: int
) -> list[list[Document]]:
    """Deterministic shuffled batching for one epoch."""
    rng = np.random.default_rng((seed, epoch))
    order = rng.permutation(len(docs))
    shuffled = [docs[i] for i in order]
    return [shuffled[i : i + batch_size] for i in range(0, len(shuffled), batch_size)]


def run_training(
    state: ModelState,
    builder: BatchBuilder,
    train_docs: Sequence[Document],
    valid_docs: Sequence[Document],
    max_steps: int,
    batch_size: int,
    opt: OptimizerConfig,
    logger: Optional[TrainingLogger] = None,
    eval_interval: int = 0,
    eval_fn: Optional[Callable[[ModelState], dict]] = None,
    checkpoint_fn: Optional[Callable[[ModelState], None]] = None,
    checkpoint_interval: int = 0,
) -> list[dict]:
    """Step-driven loop: epochs of shuffled batches until max_steps."""
    if not train_docs:
        raise ConfigurationError("no training documents")
    logger = logger or TrainingLogger()
    cfg = state.config
    with_bv = cfg.lvt_enabled
    epoch = 0
    valid_batches = (
        [builder.make_batch(valid_docs[i : i + batch_size]) for i in range(0, len(valid_docs), batch_size)]
        if valid_docs
        else []
    )
    while state.step < max_steps:
        epoch += 1
        for doc_group in iterate_batches(train_docs, batch_size, cfg.seed, epoch):
            if state.step >= max_steps:
                break
            batch = builder.make_batch(doc_group, with_batch_vocab=with_bv)
            t0 = time.perf_counter()
            loss = train_step(state, batch, opt)
            record = {
                "step": state.step,
                "train_loss": loss,
                "wall_ms": round((time.perf_counter() - t0) * 1000.0, 3),
            }
            if with_bv:
                record["lvt_size"] = batch.batch_vocab.size
                record["lvt_coverage"] = batch_vocab_coverage(batch)
            logger.log(record)
            if eval_interval and state.step % eval_interval == 0:
                eval_record = {"step": state.step}
                if valid_batches:
                    eval_record["valid_loss"] = evaluate_loss(state, valid_batches)
                if eval_fn is not None:
                    eval_record.update(eval_fn(state))
                logger.log(eval_record)
            if checkpoint_interval and checkpoint_fn and state.step % checkpoint_interval == 0:
                checkpoint_fn(state)
    return logger.records
