"""Encoder-decoder transformer with pluggable embedding variants.

Pre-norm residual blocks, sinusoidal positions, exact float64 gradients via
the autodiff engine. The decoder side can run against a per-batch restricted
vocabulary during training; inference always scores the full vocabulary.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .autodiff import Tensor, concat, log_softmax, softmax, take_along_last, take_rows
from .errors import ConfigurationError, ContractViolation, DataError
from .features import (
    EMBEDDING_VARIANTS,
    FEATURE_VARIANTS,
    FeatureLayout,
    feature_one_hots,
    fit_to_hidden_layout,
    map_to_hidden_layout,
)
from .lvt import BatchVocab

MASKED_SCORE = -1e9
LAYER_NORM_EPS = 1e-6
CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class ModelConfig:
    d_model: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ffn_dim: int = 256
    dropout_rate: float = 0.1
    max_positions: int = 256
    embedding_variant: str = "word"
    encoder_vocab_size: int = 0
    decoder_vocab_size: int = 0
    n_tf_bins: int = 10
    n_idf_bins: int = 10
    tie_output_to_embedding: bool = False
    lvt_enabled: bool = False
    lvt_size: int = 2000
    lvt_scope: str = "source_and_target"
    label_smoothing: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.d_model % self.num_heads != 0:
            raise ConfigurationError(
                f"d_model={self.d_model} must be divisible by num_heads={self.num_heads}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigurationError(f"dropout_rate={self.dropout_rate} must lie in [0, 1)")
        if self.embedding_variant not in EMBEDDING_VARIANTS:
            raise ConfigurationError(
                f"embedding_variant={self.embedding_variant!r} is not one of {EMBEDDING_VARIANTS}"
            )
        if self.encoder_vocab_size < 4 or self.decoder_vocab_size < 4:
            raise ConfigurationError("vocabulary sizes must include the 4 special tokens")
        if self.embedding_variant == "shared_bpe":
            if self.encoder_vocab_size != self.decoder_vocab_size:
                raise ConfigurationError(
                    "shared_bpe requires equal encoder and decoder vocabulary sizes"
                )
            if self.lvt_enabled:
                raise ConfigurationError(
                    "restricted-vocabulary training needs a decoder-only embedding "
                    "table; it cannot be combined with a shared encoder/decoder table"
                )
        if self.lvt_enabled and self.lvt_size < 4:
            raise ConfigurationError(f"lvt_size={self.lvt_size} must be >= 4")
        if self.embedding_variant in FEATURE_VARIANTS:
            self.feature_layout()  # raises when the dims don't fit

    def feature_layout(self) -> Optional[FeatureLayout]:
        if self.embedding_variant == "feature_fit":
            return fit_to_hidden_layout(self.d_model, self.n_tf_bins, self.n_idf_bins)
        if self.embedding_variant == "feature_map":
            return map_to_hidden_layout(self.d_model, self.n_tf_bins, self.n_idf_bins)
        return None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class Batch:
    """Padded id arrays plus masks; feature ids only for feature variants.

    Decoder input is the target shifted right behind BOS; target rows end
    with EOS and are PAD beyond it.
    """

    src_ids: np.ndarray  # (B, Ts) int64
    src_mask: np.ndarray  # (B, Ts) float64, 1.0 at real tokens
    dec_in_ids: np.ndarray  # (B, Tt)
    target_ids: np.ndarray  # (B, Tt)
    tgt_mask: np.ndarray  # (B, Tt)
    pos_ids: Optional[np.ndarray] = None
    tf_ids: Optional[np.ndarray] = None
    idf_ids: Optional[np.ndarray] = None
    batch_vocab: Optional[BatchVocab] = None
    documents: tuple = ()


def positional_encoding(length: int, d_model: int, max_positions: Optional[int] = None) -> np.ndarray:
    """Sinusoidal position table: sin at even dims, cos at odd dims."""
    if max_positions is not None and length > max_positions:
        raise ContractViolation(f"sequence length {length} exceeds max_positions {max_positions}")
    positions = np.arange(length, dtype=np.float64)[:, None]
    dims = np.arange(d_model, dtype=np.float64)[None, :]
    angles = positions / np.power(10000.0, 2.0 * (dims // 2) / d_model)
    pe = np.zeros((length, d_model), dtype=np.float64)
    pe[:, 0::2] = np.sin(angles[:, 0::2])
    pe[:, 1::2] = np.cos(angles[:, 1::2])
    return pe


def scaled_dot_attention(q, k, v, allowed: Optional[np.ndarray] = None):
    """softmax(q kT / sqrt(d_k)) v with boolean key masking.

    `allowed` marks permitted key positions; fully masked query rows yield
    zero output rows. Returns (output, attention_weights).
    """
    q = q if isinstance(q, Tensor) else Tensor(q)
    k = k if isinstance(k, Tensor) else Tensor(k)
    v = v if isinstance(v, Tensor) else Tensor(v)
    d_k = q.shape[-1]
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(d_k))
    if allowed is not None:
        allowed = np.asarray(allowed, dtype=bool)
        scores = scores + Tensor(np.where(allowed, 0.0, MASKED_SCORE))
    weights = softmax(scores, axis=-1)
    if allowed is not None:
        valid_q = np.broadcast_to(allowed.any(axis=-1, keepdims=True), weights.shape)
        weights = weights * Tensor(valid_q.astype(np.float64))
    return weights @ v, weights


def cross_entropy_loss(
    logits: Tensor,
    targets: np.ndarray,
    mask: np.ndarray,
    label_smoothing: float = 0.0,
) -> Tensor:
    """Mean negative log-likelihood over unmasked target positions."""
    mask = np.asarray(mask, dtype=np.float64)
    denom = float(mask.sum())
    if denom <= 0.0:
        raise ContractViolation("cross entropy over a fully padded batch")
    logp = log_softmax(logits, axis=-1)
    nll = -take_along_last(logp, np.asarray(targets, dtype=np.int64))
    if label_smoothing > 0.0:
        uniform = -logp.mean(axis=-1)
        nll = nll * (1.0 - label_smoothing) + uniform * label_smoothing
    return (nll * Tensor(mask)).sum() * (1.0 / denom)


# ---------------------------------------------------------------------------
# Parameters


def param_specs(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    """Names and shapes of every trainable tensor, in creation order."""
    d, ffn = config.d_model, config.ffn_dim
    specs: list[tuple[str, tuple[int, ...]]] = []
    variant = config.embedding_variant
    if variant == "shared_bpe":
        specs.append(("shared_embedding", (config.encoder_vocab_size, d)))
    elif variant == "word":
        specs.append(("encoder_embedding", (config.encoder_vocab_size, d)))
        specs.append(("decoder_embedding", (config.decoder_vocab_size, d)))
    else:
        layout = config.feature_layout()
        specs.append(("encoder_word_embedding", (config.encoder_vocab_size, layout.word_dim)))
        if variant == "feature_map":
            specs.append(("feature_projection", (layout.concat_dim, d)))
        specs.append(("decoder_embedding", (config.decoder_vocab_size, d)))

    def attention(prefix: str) -> None:
        for w in ("wq", "wk", "wv", "wo"):
            specs.append((f"{prefix}.{w}", (d, d)))

    def norm(prefix: str) -> None:
        specs.append((f"{prefix}.scale", (d,)))
        specs.append((f"{prefix}.bias", (d,)))

    def ffn_block(prefix: str) -> None:
        specs.append((f"{prefix}.w1", (d, ffn)))
        specs.append((f"{prefix}.b1", (ffn,)))
        specs.append((f"{prefix}.w2", (ffn, d)))
        specs.append((f"{prefix}.b2", (d,)))

    for i in range(config.num_layers):
        norm(f"encoder.layer{i}.norm1")
        attention(f"encoder.layer{i}.attn")
        norm(f"encoder.layer{i}.norm2")
        ffn_block(f"encoder.layer{i}.ffn")
    norm("encoder.norm")
    for i in range(config.num_layers):
        norm(f"decoder.layer{i}.norm1")
        attention(f"decoder.layer{i}.self_attn")
        norm(f"decoder.layer{i}.norm2")
        attention(f"decoder.layer{i}.cross_attn")
        norm(f"decoder.layer{i}.norm3")
        ffn_block(f"decoder.layer{i}.ffn")
    norm("decoder.norm")
    if not config.tie_output_to_embedding:
        # Stored row-per-vocab-entry so restricted training can gather and
        # scatter rows exactly like the decoder embedding.
        specs.append(("output_projection", (config.decoder_vocab_size, d)))
    return specs


def _init_param(name: str, shape: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    if name.endswith(".scale"):
        return np.ones(shape, dtype=np.float64)
    if name.endswith((".bias", ".b1", ".b2")):
        return np.zeros(shape, dtype=np.float64)
    if "embedding" in name or name == "output_projection":
        bound = 1.0 / math.sqrt(shape[-1])
    else:
        bound = 1.0 / math.sqrt(shape[0])
    return rng.uniform(-bound, bound, size=shape).astype(np.float64)


@dataclass
class ModelState:
    """Trainable tensors plus Adam moments and the step counter."""

    config: ModelConfig
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    step: int = 0

    def check_finite(self) -> None:
        for name, value in self.params.items():
            if not np.all(np.isfinite(value)):
                raise ContractViolation(f"non-finite entries in parameter {name}")

    def lvt_param_names(self) -> tuple[str, ...]:
        """Tensors whose rows/columns are restricted under batch vocabularies."""
        names = ["decoder_embedding"]
        if not self.config.tie_output_to_embedding:
            names.append("output_projection")
        return tuple(n for n in names if n in self.params)


def init_model_state(config: ModelConfig) -> ModelState:
    config.validate()
    rng = np.random.default_rng(config.seed)
    params = {name: _init_param(name, shape, rng) for name, shape in param_specs(config)}
    return ModelState(
        config=config,
        params=params,
        adam_m={n: np.zeros_like(p) for n, p in params.items()},
        adam_v={n: np.zeros_like(p) for n, p in params.items()},
    )


# ---------------------------------------------------------------------------
# Forward pass


def _layer_norm(x: Tensor, scale: Tensor, bias: Tensor) -> Tensor:
    mu = x.mean(axis=-1, keepdims=True)
    centered = x - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = (var + LAYER_NORM_EPS) ** -0.5
    return centered * inv * scale + bias


def _dropout(x: Tensor, rate: float, train: bool, rng: Optional[np.random.Generator]) -> Tensor:
    if not train or rate <= 0.0:
        return x
    keep = (rng.random(x.shape) >= rate).astype(np.float64) / (1.0 - rate)
    return x * Tensor(keep)


def _multi_head(
    p: dict[str, Tensor],
    prefix: str,
    q_in: Tensor,
    kv_in: Tensor,
    allowed: np.ndarray,
    num_heads: int,
) -> Tensor:
    b, t_q, d = q_in.shape
    t_k = kv_in.shape[1]
    d_k = d // num_heads

    def split_heads(x: Tensor, t: int) -> Tensor:
        return x.reshape(b, t, num_heads, d_k).swapaxes(1, 2)  # (B, h, T, d_k)

    q = split_heads(q_in @ p[f"{prefix}.wq"], t_q)
    k = split_heads(kv_in @ p[f"{prefix}.wk"], t_k)
    v = split_heads(kv_in @ p[f"{prefix}.wv"], t_k)
    ctx, _ = scaled_dot_attention(q, k, v, allowed)
    merged = ctx.swapaxes(1, 2).reshape(b, t_q, d)
    return merged @ p[f"{prefix}.wo"]


def _encoder_input(
    p: dict[str, Tensor], config: ModelConfig, batch: Batch
) -> Tensor:
    variant = config.embedding_variant
    if variant == "shared_bpe":
        return take_rows(p["shared_embedding"], batch.src_ids)
    if variant == "word":
        return take_rows(p["encoder_embedding"], batch.src_ids)
    layout = config.feature_layout()
    if batch.pos_ids is None or batch.tf_ids is None or batch.idf_ids is None:
        raise ContractViolation(f"{variant} needs pos/tf/idf feature ids in the batch")
    word = take_rows(p["encoder_word_embedding"], batch.src_ids)
    onehots = feature_one_hots(batch.pos_ids, batch.tf_ids, batch.idf_ids, layout)
    x = concat([word, Tensor(onehots)], axis=-1)
    if variant == "feature_map":
        x = x @ p["feature_projection"]
    return x


def _decoder_table(p: dict[str, Tensor], config: ModelConfig) -> Tensor:
    if config.embedding_variant == "shared_bpe":
        return p["shared_embedding"]
    return p["decoder_embedding"]


def forward(
    p: dict[str, Tensor],
    config: ModelConfig,
    batch: Batch,
    train: bool = False,
    dropout_rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Logits over the decoder vocabulary: (B, Tt, V_out).

    V_out is the row count of the decoder-side tables in `p`, so restricted
    training works by passing gathered tables and locally remapped ids.
    """
    b, t_src = batch.src_ids.shape
    t_tgt = batch.dec_in_ids.shape[1]
    d = config.d_model
    rate = config.dropout_rate if train else 0.0

    # --- encoder ---
    x = _encoder_input(p, config, batch) * math.sqrt(d)
    x = x + Tensor(positional_encoding(t_src, d, config.max_positions))
    x = _dropout(x, rate, train, dropout_rng)
    src_allowed = batch.src_mask[:, None, None, :].astype(bool)  # (B,1,1,Ts)
    for i in range(config.num_layers):
        pre = f"encoder.layer{i}"
        h = _layer_norm(x, p[f"{pre}.norm1.scale"], p[f"{pre}.norm1.bias"])
        h = _multi_head(p, f"{pre}.attn", h, h, src_allowed, config.num_heads)
        x = x + _dropout(h, rate, train, dropout_rng)
        h = _layer_norm(x, p[f"{pre}.norm2.scale"], p[f"{pre}.norm2.bias"])
        h = (h @ p[f"{pre}.ffn.w1"] + p[f"{pre}.ffn.b1"]).relu() @ p[f"{pre}.ffn.w2"] + p[f"{pre}.ffn.b2"]
        x = x + _dropout(h, rate, train, dropout_rng)
    enc_out = _layer_norm(x, p["encoder.norm.scale"], p["encoder.norm.bias"])

    # --- decoder ---
    table = _decoder_table(p, config)
    y = take_rows(table, batch.dec_in_ids) * math.sqrt(d)
    y = y + Tensor(positional_encoding(t_tgt, d, config.max_positions))
    y = _dropout(y, rate, train, dropout_rng)
    causal = np.tril(np.ones((t_tgt, t_tgt), dtype=bool))
    self_allowed = causal[None, None, :, :] & batch.tgt_mask[:, None, None, :].astype(bool)
    for i in range(config.num_layers):
        pre = f"decoder.layer{i}"
        h = _layer_norm(y, p[f"{pre}.norm1.scale"], p[f"{pre}.norm1.bias"])
        h = _multi_head(p, f"{pre}.self_attn", h, h, self_allowed, config.num_heads)
        y = y + _dropout(h, rate, train, dropout_rng)
        h = _layer_norm(y, p[f"{pre}.norm2.scale"], p[f"{pre}.norm2.bias"])
        h = _multi_head(p, f"{pre}.cross_attn", h, enc_out, src_allowed, config.num_heads)
        y = y + _dropout(h, rate, train, dropout_rng)
        h = _layer_norm(y, p[f"{pre}.norm3.scale"], p[f"{pre}.norm3.bias"])
        h = (h @ p[f"{pre}.ffn.w1"] + p[f"{pre}.ffn.b1"]).relu() @ p[f"{pre}.ffn.w2"] + p[f"{pre}.ffn.b2"]
        y = y + _dropout(h, rate, train, dropout_rng)
    dec_out = _layer_norm(y, p["decoder.norm.scale"], p["decoder.norm.bias"])

    if config.tie_output_to_embedding:
        logits = dec_out @ table.swapaxes(0, 1)
    else:
        logits = dec_out @ p["output_projection"].swapaxes(0, 1)
    return logits


def as_param_tensors(params: dict[str, np.ndarray], requires_grad: bool = True) -> dict[str, Tensor]:
    return {name: Tensor(value, requires_grad=requires_grad) for name, value in params.items()}


def batch_loss(
    state: ModelState,
    batch: Batch,
    train: bool = False,
    dropout_rng: Optional[np.random.Generator] = None,
) -> tuple[Tensor, dict[str, Tensor]]:
    """Full-vocabulary forward and loss; tensors returned for backward."""
    tensors = as_param_tensors(state.params, requires_grad=train)
    logits = forward(tensors, state.config, batch, train=train, dropout_rng=dropout_rng)
    loss = cross_entropy_loss(
        logits, batch.target_ids, batch.tgt_mask, state.config.label_smoothing
    )
    return loss, tensors


# ---------------------------------------------------------------------------
# Checkpoints


def save_checkpoint(state: ModelState, path: str | Path, extras: Optional[dict] = None) -> None:
    """Single-file checkpoint: config header, artifacts, tensors, moments."""
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": state.config.to_dict(),
        "step": state.step,
        "extras": extras or {},
    }
    arrays = {f"param/{n}": v for n, v in state.params.items()}
    arrays.update({f"adam_m/{n}": v for n, v in state.adam_m.items()})
    arrays.update({f"adam_v/{n}": v for n, v in state.adam_v.items()})
    arrays["header"] = np.frombuffer(json.dumps(header, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    np.savez(Path(path), **arrays)


def load_checkpoint(path: str | Path, expect_config: Optional[ModelConfig] = None):
    """Returns (ModelState, extras); raises on version or config mismatch."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    with np.load(path) as archive:
        header = json.loads(bytes(archive["header"].tobytes()).decode("utf-8"))
        if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise DataError(f"unsupported checkpoint version in {path}")
        config = ModelConfig.from_dict(header["config"])
        if expect_config is not None and expect_config.to_dict() != config.to_dict():
            diff = [
                k
                for k in config.to_dict()
                if config.to_dict()[k] != expect_config.to_dict()[k]
            ]
            raise ConfigurationError(
                f"checkpoint config does not match the requested config (fields: {diff})"
            )
        params: dict[str, np.ndarray] = {}
        adam_m: dict[str, np.ndarray] = {}
        adam_v: dict[str, np.ndarray] = {}
        for key in archive.files:
            if key.startswith("param/"):
                params[key[len("param/"):]] = archive[key]
            elif key.startswith("adam_m/"):
                adam_m[key[len("adam_m/"):]] = archive[key]
            elif key.startswith("adam_v/"):
                adam_v[key[len("adam_v/"):]] = archive[key]
    expected = {name for name, _ in param_specs(config)}
    if set(params) != expected:
        raise DataError(f"checkpoint {path} parameter names do not match its config")
    state = ModelState(
        config=config, params=params, adam_m=adam_m, adam_v=adam_v, step=int(header["step"])
    )
    return state, header.get("extras", {})
