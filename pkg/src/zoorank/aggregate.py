"""Score vectors, descending orderings and Copeland rank aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass(frozen=True)
class ScoreVector:
    values: np.ndarray
    method_tag: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 1:
            raise ShapeError("ScoreVector values must be 1-D")
        if not np.isfinite(self.values).all():
            raise ShapeError("ScoreVector values must be finite")

    def __len__(self):
        return self.values.shape[0]


@dataclass(frozen=True)
class Permutation:
    order: np.ndarray

    def __post_init__(self):
        order = np.asarray(self.order, dtype=np.int64)
        object.__setattr__(self, "order", order)
        if sorted(order.tolist()) != list(range(order.shape[0])):
            raise ShapeError("order must be a permutation of 0..M-1")


def dsc_order(scores) -> Permutation:
    """Indices of scores sorted descending; ties broken by ascending index."""
    values = scores.values if isinstance(scores, ScoreVector) else np.asarray(scores)
    return Permutation(np.argsort(-values, kind="stable"))


def ranks_from_scores(scores) -> np.ndarray:
    """Zero-indexed rank of each entry under dsc_order (0 = largest)."""
    order = dsc_order(scores).order
    ranks = np.empty_like(order)
    ranks[order] = np.arange(order.shape[0])
    return ranks


def copeland_aggregate(rankings) -> ScoreVector:
    """Pairwise-majority (Copeland) aggregation of several score vectors.

    For each ordered model pair, the number of input vectors strictly
    preferring one side is counted; exact within-vector score ties count
    toward neither side.  A model's aggregated score is the number of
    opponents it beats plus half the number it ties with.
    """
    mats = [r.values if isinstance(r, ScoreVector) else np.asarray(r, float) for r in rankings]
    if not mats:
        raise ShapeError("copeland_aggregate needs at least one ranking")
    m = mats[0].shape[0]
    for r in mats:
        if r.shape != (m,):
            raise ShapeError(f"ranking length {r.shape} != {m}")
    stacked = np.stack(mats)                       # A x M
    wins = (stacked[:, :, None] > stacked[:, None, :]).sum(axis=0)  # W[m, l]
    beats = (wins > wins.T).sum(axis=1)
    ties = (wins == wins.T).sum(axis=1) - 1        # drop the diagonal self-tie
    return ScoreVector(beats + 0.5 * ties, method_tag="rankagg")
