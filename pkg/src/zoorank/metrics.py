"""Ranking-quality metrics and the per-cluster similarity export."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .aggregate import ScoreVector, dsc_order, ranks_from_scores
from .errors import DegenerateInputError
from .ranker import RankerParams, similarity


@dataclass(frozen=True)
class TauResult:
    tau_w: float
    tau: float
    n_pairs: int


def weighted_kendall_tau(predicted, ground_truth, symmetric=False) -> TauResult:
    """Weighted Kendall correlation with hyperbolic additive weights
    anchored on the ground-truth ranks: pair (i, j) weighs
    1/(r_i+1) + 1/(r_j+1).

    Ties in either vector contribute sign 0 but keep their weight in the
    denominator, so a constant prediction scores exactly 0.  With
    symmetric=True the weights average the ground-truth-anchored and
    prediction-anchored variants.
    """
    p = np.asarray(predicted.values if isinstance(predicted, ScoreVector) else predicted, float)
    g = np.asarray(
        ground_truth.values if isinstance(ground_truth, ScoreVector) else ground_truth, float
    )
    m = p.shape[0]
    if g.shape[0] != m or m < 2:
        raise DegenerateInputError("need two equal-length vectors with M >= 2")
    rg = ranks_from_scores(g)
    wg = 1.0 / (rg + 1.0)
    if symmetric:
        wp = 1.0 / (ranks_from_scores(p) + 1.0)
        w1 = 0.5 * ((wg[:, None] + wg[None, :]) + (wp[:, None] + wp[None, :]))
    else:
        w1 = wg[:, None] + wg[None, :]
    sp = np.sign(p[:, None] - p[None, :])
    sg = np.sign(g[:, None] - g[None, :])
    iu = np.triu_indices(m, k=1)
    num = float(np.sum(w1[iu] * sp[iu] * sg[iu]))
    den = float(np.sum(w1[iu]))
    tau_w = num / den
    tau = float(np.sum(sp[iu] * sg[iu])) / iu[0].shape[0]
    return TauResult(tau_w=tau_w, tau=tau, n_pairs=iu[0].shape[0])


def topk_overlap(predicted, ground_truth, k) -> float:
    p = dsc_order(predicted).order[:k]
    g = dsc_order(ground_truth).order[:k]
    return len(set(p.tolist()) & set(g.tolist())) / k


def spider_chart_data(params: RankerParams, cluster_tokens) -> dict:
    """Mean similarity of every model token to every cluster of task
    tokens; the raw numbers behind a per-model capability chart."""
    chart = {}
    for name, tokens in cluster_tokens.items():
        if not tokens:
            raise DegenerateInputError(f"empty cluster {name!r}")
    for m, model_id in enumerate(params.model_ids):
        theta = params.model_tokens.theta[m]
        chart[model_id] = {
            name: float(np.mean([similarity(theta, t, params) for t in tokens]))
            for name, tokens in cluster_tokens.items()
        }
    return chart


def write_chart_csv(chart, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model_id", "cluster", "score"])
        for model_id in chart:
            for cluster, score in chart[model_id].items():
                writer.writerow([model_id, cluster, repr(score)])


def write_chart_json(chart, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(chart, fh, indent=2, sort_keys=True)
        fh.write("\n")
