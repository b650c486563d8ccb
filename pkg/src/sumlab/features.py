"""Feature-rich encoder inputs: word embedding plus one-hot sub-vectors.

Every assembled vector is the concatenation word | POS | TF-bin | IDF-bin.
Two layouts exist: "feature_fit" shrinks the word span so the concatenation
equals the model hidden size exactly (no projection), while "feature_map"
keeps an arbitrary concatenation width and projects it to hidden size with
a bias-free linear map.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolation
from .tagging import TAG_SET

EMBEDDING_VARIANTS = ("shared_bpe", "word", "feature_fit", "feature_map")
FEATURE_VARIANTS = ("feature_fit", "feature_map")


@dataclass(frozen=True)
class FeatureLayout:
    """Span bookkeeping for the concatenated encoder input vector."""

    word_dim: int
    pos_dim: int
    tf_dim: int
    idf_dim: int

    @property
    def concat_dim(self) -> int:
        return self.word_dim + self.pos_dim + self.tf_dim + self.idf_dim

    def spans(self) -> dict[str, tuple[int, int]]:
        """Half-open [start, stop) spans of each sub-vector."""
        w, p, t = self.word_dim, self.pos_dim, self.tf_dim
        return {
            "word": (0, w),
            "pos": (w, w + p),
            "tf": (w + p, w + p + t),
            "idf": (w + p + t, self.concat_dim),
        }


def fit_to_hidden_layout(d_model: int, n_tf_bins: int, n_idf_bins: int) -> FeatureLayout:
    """Layout whose concatenation equals d_model: the word span absorbs
    whatever the one-hot spans leave free."""
    pos_dim = len(TAG_SET)
    word_dim = d_model - pos_dim - n_tf_bins - n_idf_bins
    if word_dim < 1:
        raise ConfigurationError(
            f"d_model={d_model} leaves no room for a word embedding next to "
            f"{pos_dim}+{n_tf_bins}+{n_idf_bins} one-hot feature dims"
        )
    return FeatureLayout(word_dim=word_dim, pos_dim=pos_dim, tf_dim=n_tf_bins, idf_dim=n_idf_bins)


def map_to_hidden_layout(d_model: int, n_tf_bins: int, n_idf_bins: int) -> FeatureLayout:
    """Layout for the projected variant: the word span keeps full width."""
    return FeatureLayout(
        word_dim=d_model, pos_dim=len(TAG_SET), tf_dim=n_tf_bins, idf_dim=n_idf_bins
    )


def one_hot(index: int, size: int) -> np.ndarray:
    if not 0 <= index < size:
        raise ContractViolation(f"one-hot index {index} out of range [0, {size})")
    v = np.zeros(size, dtype=np.float64)
    v[index] = 1.0
    return v


def assemble_feature_vector(
    word_emb: np.ndarray,
    pos_index: int,
    tf_bin: int,
    idf_bin: int,
    layout: FeatureLayout,
) -> np.ndarray:
    """Concatenate word | POS one-hot | TF one-hot | IDF one-hot."""
    word_emb = np.asarray(word_emb, dtype=np.float64)
    if word_emb.shape != (layout.word_dim,):
        raise ContractViolation(
            f"word embedding has shape {word_emb.shape}, layout expects ({layout.word_dim},)"
        )
    return np.concatenate(
        [
            word_emb,
            one_hot(pos_index, layout.pos_dim),
            one_hot(tf_bin, layout.tf_dim),
            one_hot(idf_bin, layout.idf_dim),
        ]
    )


def feature_one_hots(
    pos_indices: np.ndarray,
    tf_bins: np.ndarray,
    idf_bins: np.ndarray,
    layout: FeatureLayout,
) -> np.ndarray:
    """Vectorized one-hot block for a batch: (..., pos+tf+idf dims).

    Row i of the result equals the non-word spans of assemble_feature_vector
    applied to element i.
    """
    pos_indices = np.asarray(pos_indices)
    for name, idx, size in (
        ("pos", pos_indices, layout.pos_dim),
        ("tf", tf_bins, layout.tf_dim),
        ("idf", idf_bins, layout.idf_dim),
    ):
        idx = np.asarray(idx)
        if idx.size and (idx.min() < 0 or idx.max() >= size):
            raise ContractViolation(f"{name} index out of range [0, {size})")
    eye_pos = np.eye(layout.pos_dim, dtype=np.float64)
    eye_tf = np.eye(layout.tf_dim, dtype=np.float64)
    eye_idf = np.eye(layout.idf_dim, dtype=np.float64)
    return np.concatenate(
        [eye_pos[np.asarray(pos_indices)], eye_tf[np.asarray(tf_bins)], eye_idf[np.asarray(idf_bins)]],
        axis=-1,
    )


def project_to_hidden(
    concat: np.ndarray,
    variant: str,
    projection: np.ndarray | None = None,
) -> np.ndarray:
    """Map an assembled vector to hidden size.

    feature_fit is the identity (the layout already matches hidden size);
    feature_map multiplies by the bias-free projection matrix.
    """
    concat = np.asarray(concat, dtype=np.float64)
    if variant == "feature_fit":
        return concat
    if variant == "feature_map":
        if projection is None:
            raise ContractViolation("feature_map requires a projection matrix")
        if concat.shape[-1] != projection.shape[0]:
            raise ContractViolation(
                f"concat dim {concat.shape[-1]} does not match projection rows {projection.shape[0]}"
            )
        return concat @ projection
    raise ContractViolation(f"not a feature variant: {variant!r}")
