"""Task tokens (per-class feature centers) and the learnable model-token
store.

A general task token comes from the designated probe bank; a
model-specific one is built from that model's own features and projected
into the shared d-dimensional space.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .banks import FeatureBank
from .codec import read_matrix, write_matrix
from .errors import DegenerateInputError, FormatError, ShapeError

GENERAL = "general"
SPECIFIC = "specific"


@dataclass(frozen=True)
class TaskToken:
    centers: np.ndarray            # d x C, one column per class, ascending class_id
    class_ids: np.ndarray          # length C
    kind: str = GENERAL
    model_id: str | None = None    # set for kind == SPECIFIC

    def __post_init__(self):
        centers = np.asarray(self.centers, dtype=np.float64)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "class_ids", np.asarray(self.class_ids, dtype=np.int64))
        if centers.ndim != 2 or centers.shape[1] != self.class_ids.shape[0]:
            raise ShapeError("centers must be d x C with one column per class id")
        if not np.isfinite(centers).all():
            raise ShapeError("task token centers must be finite")


@dataclass
class ModelTokens:
    theta: np.ndarray              # M x d
    model_ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if len(set(self.model_ids)) != len(self.model_ids):
            raise ShapeError("model_ids must be distinct")
        if self.theta.shape[0] != len(self.model_ids):
            raise ShapeError("theta rows must match model_ids")


def class_centers(features, labels):
    """Per-class mean rows, columns ordered by ascending class id."""
    f = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    ids = np.unique(y)
    centers = np.empty((f.shape[1], ids.shape[0]))
    for j, c in enumerate(ids):
        mask = y == c
        if not mask.any():
            raise DegenerateInputError(f"empty class {c}")
        centers[:, j] = f[mask].mean(axis=0)
    return centers, ids


def build_task_token(probe_bank: FeatureBank) -> TaskToken:
    centers, ids = class_centers(probe_bank.features, probe_bank.labels)
    if ids.shape[0] < probe_bank.manifest.n_classes:
        missing = sorted(set(range(probe_bank.manifest.n_classes)) - set(ids.tolist()))
        raise DegenerateInputError(f"empty class {missing[0]}")
    return TaskToken(centers, ids, kind=GENERAL)


def build_specific_token(model_bank: FeatureBank, projection) -> TaskToken:
    """Class centers in the model's own feature space, mapped to R^d by the
    transpose of its learned projection."""
    p = np.asarray(projection, dtype=np.float64)
    if p.ndim != 2 or p.shape[0] != model_bank.manifest.feat_dim:
        raise ShapeError(
            f"projection rows {p.shape} do not match feat_dim {model_bank.manifest.feat_dim}"
        )
    centers, ids = class_centers(model_bank.features, model_bank.labels)
    return TaskToken(p.T @ centers, ids, kind=SPECIFIC, model_id=model_bank.model_id)


def init_model_tokens(n_models, d, seed, model_ids=None) -> ModelTokens:
    """I.i.d. Gaussian tokens with std 1/sqrt(d) so initial attention logits
    stay O(1)."""
    if n_models < 1 or d < 1:
        raise ShapeError("need n_models >= 1 and d >= 1")
    rng = np.random.default_rng(seed)
    theta = rng.normal(0.0, 1.0 / np.sqrt(d), size=(n_models, d))
    if model_ids is None:
        model_ids = [f"model_{m:03d}" for m in range(n_models)]
    return ModelTokens(theta, list(model_ids))


def save_model_tokens(tokens: ModelTokens, path) -> None:
    path = Path(path)
    path.mkdir(exist_ok=True)
    with open(path / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(
            {
                "n_models": tokens.theta.shape[0],
                "d": tokens.theta.shape[1],
                "model_ids": tokens.model_ids,
            },
            fh,
            indent=2,
        )
        fh.write("\n")
    write_matrix(path / "theta.mat", tokens.theta)


def load_model_tokens(path) -> ModelTokens:
    path = Path(path)
    with open(path / "manifest.json", encoding="utf-8") as fh:
        manifest = json.load(fh)
    theta = read_matrix(path / "theta.mat").astype(np.float64)
    if theta.shape != (manifest["n_models"], manifest["d"]):
        raise FormatError(f"dimension mismatch in {path / 'theta.mat'}")
    return ModelTokens(theta, list(manifest["model_ids"]))
