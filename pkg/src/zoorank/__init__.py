"""Pre-trained-model selection over feature banks: estimators, rank
aggregation, a learned attention ranker, and a synthetic benchmark."""

from .aggregate import Permutation, ScoreVector, copeland_aggregate, dsc_order
from .banks import BankManifest, FeatureBank, make_bank, read_bank, validate_bank, write_bank
from .estimators import EstimatorScore, h_score, leep, logme, nce, score_zoo
from .metrics import TauResult, topk_overlap, weighted_kendall_tau
from .ranker import RankerParams, Ranking, attention_forward, rank_zoo, rerank_top_k, similarity
from .sklearn_api import ZooRanker
from .synth import ZooConfig, build_benchmark, generate_zoo, probe_oracle
from .tokens import ModelTokens, TaskToken, build_specific_token, build_task_token, init_model_tokens
from .training import TrainConfig, TrainingPool, finite_diff_check, ranking_loss, train

__all__ = [
    "BankManifest", "FeatureBank", "make_bank", "read_bank", "validate_bank", "write_bank",
    "EstimatorScore", "h_score", "nce", "leep", "logme", "score_zoo",
    "ScoreVector", "Permutation", "dsc_order", "copeland_aggregate",
    "TaskToken", "ModelTokens", "build_task_token", "build_specific_token", "init_model_tokens",
    "RankerParams", "Ranking", "attention_forward", "similarity", "rank_zoo", "rerank_top_k",
    "TauResult", "weighted_kendall_tau", "topk_overlap",
    "ZooConfig", "generate_zoo", "probe_oracle", "build_benchmark",
    "TrainConfig", "TrainingPool", "train", "ranking_loss", "finite_diff_check",
    "ZooRanker",
]
