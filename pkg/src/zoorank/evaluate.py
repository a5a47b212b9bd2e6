"""Held-out evaluation harness: weighted Kendall correlation of the
ranker and the baseline estimators against the probe-oracle ground
truth."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aggregate import ScoreVector, copeland_aggregate
from .estimators import METHODS, score_zoo
from .metrics import weighted_kendall_tau
from .ranker import RankerParams, rank_zoo, rerank_top_k
from .tokens import build_task_token


def baseline_scores(task, model_ids, method) -> ScoreVector:
    return score_zoo([task.model_banks[mid] for mid in model_ids], method)


def rankagg_scores(task, model_ids, methods=METHODS) -> ScoreVector:
    return copeland_aggregate([baseline_scores(task, model_ids, m) for m in methods])


def ranker_scores(task, params: RankerParams, k=0) -> ScoreVector:
    ranking = rank_zoo(build_task_token(task.probe_bank), params)
    if k > 0:
        ranking = rerank_top_k(ranking, task.model_banks, min(k, params.n_models), params)
    return ranking.scores


@dataclass
class EvalResult:
    per_task: dict = field(default_factory=dict)   # name -> list of tau_w
    mean: dict = field(default_factory=dict)

    def add(self, name, taus):
        self.per_task[name] = list(taus)
        self.mean[name] = float(np.mean(taus))


def evaluate(benchmark, params: RankerParams | None = None, ks=(0,),
             methods=METHODS, include_rankagg=True,
             precomputed_baselines=None) -> EvalResult:
    """tau_w per eval task for each baseline, RankAgg, and the ranker at
    every requested k.  precomputed_baselines (task index -> method ->
    ScoreVector) lets callers reuse estimator runs across calls."""
    model_ids = benchmark.model_ids
    gt = benchmark.ground_truth
    result = EvalResult()

    base = {}
    for method in methods:
        taus = []
        for t, task in enumerate(benchmark.eval_tasks):
            if precomputed_baselines is not None and (t, method) in precomputed_baselines:
                sv = precomputed_baselines[(t, method)]
            else:
                sv = baseline_scores(task, model_ids, method)
                if precomputed_baselines is not None:
                    precomputed_baselines[(t, method)] = sv
            base[(t, method)] = sv
            taus.append(weighted_kendall_tau(sv, gt[t]).tau_w)
        result.add(method, taus)

    if include_rankagg:
        taus = []
        for t in range(len(benchmark.eval_tasks)):
            agg = copeland_aggregate([base[(t, m)] for m in methods])
            taus.append(weighted_kendall_tau(agg, gt[t]).tau_w)
        result.add("rankagg", taus)

    if params is not None:
        for k in ks:
            taus = []
            for t, task in enumerate(benchmark.eval_tasks):
                sv = ranker_scores(task, params, k=k)
                taus.append(weighted_kendall_tau(sv, gt[t]).tau_w)
            result.add(f"ranker_k{k}", taus)
    return result
