"""Model-task similarity head: one residual self-attention block over the
(1 + C) token sequence, token-type prompts, and an affine output head
reading position 0 (the model token's slot).

The forward pass is written so its exact reverse-mode derivatives can be
assembled in the training module: `similarity_forward` returns every
intermediate needed by `similarity_backward`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aggregate import Permutation, ScoreVector, dsc_order
from .banks import FeatureBank
from .codec import read_matrix, write_matrix
from .errors import CapabilityError, FormatError, ShapeError
from .tokens import GENERAL, SPECIFIC, ModelTokens, TaskToken, build_specific_token


@dataclass
class RankerParams:
    model_tokens: ModelTokens
    wq: np.ndarray                     # d x d
    wk: np.ndarray
    wv: np.ndarray
    fc_w: np.ndarray                   # length d
    fc_b: float
    prompt_general: np.ndarray         # length d
    prompt_specific: np.ndarray
    projections: dict = field(default_factory=dict)  # model_id -> d_m x d

    @property
    def d(self):
        return self.model_tokens.theta.shape[1]

    @property
    def n_models(self):
        return self.model_tokens.theta.shape[0]

    @property
    def model_ids(self):
        return self.model_tokens.model_ids


@dataclass(frozen=True)
class Ranking:
    scores: ScoreVector
    order: Permutation
    k_used: int = 0


def init_ranker_params(model_tokens: ModelTokens, seed, feat_dims=None) -> RankerParams:
    """Gaussian 1/sqrt(d) weights, zero prompts and bias.

    feat_dims maps model_id -> d_m for models that get a re-ranking
    projection.
    """
    d = model_tokens.theta.shape[1]
    rng = np.random.default_rng(seed)
    scale = 1.0 / np.sqrt(d)
    projections = {}
    for model_id, dm in (feat_dims or {}).items():
        projections[model_id] = rng.normal(0.0, 1.0 / np.sqrt(dm), size=(dm, d))
    # Query/key weights start smaller than the value path so initial
    # attention is close to uniform; task-dependent attention then grows
    # only as far as the training signal demands.
    return RankerParams(
        model_tokens=model_tokens,
        wq=rng.normal(0.0, 0.3 * scale, size=(d, d)),
        wk=rng.normal(0.0, 0.3 * scale, size=(d, d)),
        wv=rng.normal(0.0, scale, size=(d, d)),
        fc_w=rng.normal(0.0, scale, size=d),
        fc_b=0.0,
        prompt_general=np.zeros(d),
        prompt_specific=np.zeros(d),
        projections=projections,
    )


def _row_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def attention_forward(z, params: RankerParams):
    """Residual single-head attention over the d x (1+C) token matrix."""
    z = np.asarray(z, dtype=np.float64)
    zt = z.T                                   # (1+C) x d
    q = zt @ params.wq
    k = zt @ params.wk
    v = zt @ params.wv
    a = _row_softmax(q @ k.T / np.sqrt(params.d))
    return z + (a @ v).T


def similarity_forward(theta, task_token: TaskToken, params: RankerParams):
    """Score one model against one task; returns (score, cache)."""
    d = params.d
    if task_token.centers.shape[0] != d:
        raise ShapeError(
            f"task token has {task_token.centers.shape[0]} rows, ranker d = {d}"
        )
    prompt = params.prompt_general if task_token.kind == GENERAL else params.prompt_specific
    z = np.empty((d, 1 + task_token.centers.shape[1]))
    z[:, 0] = theta + prompt
    z[:, 1:] = task_token.centers + prompt[:, None]
    zt = z.T
    q = zt @ params.wq
    k = zt @ params.wk
    v = zt @ params.wv
    a = _row_softmax(q @ k.T / np.sqrt(d))
    out0 = z[:, 0] + (a[0] @ v)
    score = float(params.fc_w @ out0 + params.fc_b)
    cache = {"zt": zt, "q": q, "k": k, "v": v, "a": a, "out0": out0, "kind": task_token.kind}
    return score, cache


def similarity_backward(dscore, cache, params: RankerParams):
    """Exact gradients of `dscore * score` w.r.t. theta, the attention
    weights, the head, the prompt used, and the token columns.

    Returns a dict with keys theta, wq, wk, wv, fc_w, fc_b, prompt,
    centers (d x C, gradient w.r.t. the token columns before the prompt
    was added) and the prompt kind it applies to.
    """
    zt, q, k, v, a = cache["zt"], cache["q"], cache["k"], cache["v"], cache["a"]
    d = params.d
    d_fc_w = dscore * cache["out0"]
    d_out0 = dscore * params.fc_w

    # out0 = z[:,0] + a[0] @ v; only row 0 of the attention output is read.
    d_a0 = d_out0 @ v.T                        # length 1+C
    d_v = np.outer(a[0], d_out0)               # (1+C) x d
    # softmax backward on row 0 only
    d_s0 = a[0] * (d_a0 - float(d_a0 @ a[0]))
    inv = 1.0 / np.sqrt(d)
    d_q0 = d_s0 @ k * inv                      # length d
    d_k = np.outer(d_s0, q[0]) * inv           # (1+C) x d

    d_zt = np.zeros_like(zt)
    d_zt[0] += d_q0 @ params.wq.T
    d_zt += d_k @ params.wk.T
    d_zt += d_v @ params.wv.T
    d_wq = np.outer(zt[0], d_q0)
    d_wk = zt.T @ d_k
    d_wv = zt.T @ d_v

    d_z = d_zt.T                               # d x (1+C)
    d_z[:, 0] += d_out0                        # residual path
    return {
        "theta": d_z[:, 0].copy(),
        "wq": d_wq,
        "wk": d_wk,
        "wv": d_wv,
        "fc_w": d_fc_w,
        "fc_b": dscore,
        "prompt": d_z.sum(axis=1),
        "prompt_kind": cache["kind"],
        "centers": d_z[:, 1:].copy(),
    }


def similarity(theta, task_token: TaskToken, params: RankerParams) -> float:
    score, _ = similarity_forward(theta, task_token, params)
    return score


def rank_zoo(task_token: TaskToken, params: RankerParams) -> Ranking:
    if task_token.kind != GENERAL:
        raise ShapeError("rank_zoo expects a general task token")
    values = np.array(
        [similarity(params.model_tokens.theta[m], task_token, params) for m in range(params.n_models)]
    )
    scores = ScoreVector(values, method_tag="ranker")
    return Ranking(scores, dsc_order(scores), k_used=0)


def rerank_top_k(base: Ranking, task_banks, k, params: RankerParams) -> Ranking:
    """Refresh the top-k scores with model-specific task tokens (Alg. 2
    style in-place score updates, same scale as the general scores)."""
    m_total = len(base.scores)
    if not 0 <= k <= m_total:
        raise ShapeError(f"k={k} out of range 0..{m_total}")
    values = base.scores.values.copy()
    for m in base.order.order[:k]:
        model_id = params.model_ids[m]
        if model_id not in task_banks:
            raise CapabilityError(f"no task bank for model {model_id!r}", model_id=model_id)
        if model_id not in params.projections:
            raise CapabilityError(f"no projection for model {model_id!r}", model_id=model_id)
        token = build_specific_token(task_banks[model_id], params.projections[model_id])
        values[m] = similarity(params.model_tokens.theta[m], token, params)
    scores = ScoreVector(values, method_tag="ranker")
    return Ranking(scores, dsc_order(scores), k_used=int(k))


def save_params(params: RankerParams, path) -> None:
    path = Path(path)
    path.mkdir(exist_ok=True)
    manifest = {
        "d": params.d,
        "n_models": params.n_models,
        "model_ids": params.model_ids,
        "fc_b": params.fc_b,
        "projection_ids": sorted(params.projections),
    }
    with open(path / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    write_matrix(path / "theta.mat", params.model_tokens.theta)
    write_matrix(path / "wq.mat", params.wq)
    write_matrix(path / "wk.mat", params.wk)
    write_matrix(path / "wv.mat", params.wv)
    write_matrix(path / "fc_w.mat", params.fc_w.reshape(1, -1))
    write_matrix(path / "prompt_general.mat", params.prompt_general.reshape(1, -1))
    write_matrix(path / "prompt_specific.mat", params.prompt_specific.reshape(1, -1))
    for i, model_id in enumerate(sorted(params.projections)):
        write_matrix(path / f"projection_{i:03d}.mat", params.projections[model_id])


def load_params(path) -> RankerParams:
    path = Path(path)
    try:
        with open(path / "manifest.json", encoding="utf-8") as fh:
            manifest = json.load(fh)
    except OSError as exc:
        raise FormatError(f"cannot read ranker params at {path}: {exc}") from exc
    theta = read_matrix(path / "theta.mat").astype(np.float64)
    if theta.shape != (manifest["n_models"], manifest["d"]):
        raise FormatError(f"dimension mismatch in {path / 'theta.mat'}")
    projections = {}
    for i, model_id in enumerate(manifest["projection_ids"]):
        projections[model_id] = read_matrix(path / f"projection_{i:03d}.mat").astype(np.float64)
    return RankerParams(
        model_tokens=ModelTokens(theta, list(manifest["model_ids"])),
        wq=read_matrix(path / "wq.mat").astype(np.float64),
        wk=read_matrix(path / "wk.mat").astype(np.float64),
        wv=read_matrix(path / "wv.mat").astype(np.float64),
        fc_w=read_matrix(path / "fc_w.mat").astype(np.float64)[0],
        fc_b=float(manifest["fc_b"]),
        prompt_general=read_matrix(path / "prompt_general.mat").astype(np.float64)[0],
        prompt_specific=read_matrix(path / "prompt_specific.mat").astype(np.float64)[0],
        projections=projections,
    )
