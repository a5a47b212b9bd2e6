import numpy as np
import pytest

from conftest import random_bank
from zoorank.errors import CapabilityError, ShapeError
from zoorank.ranker import (
    attention_forward,
    init_ranker_params,
    load_params,
    rank_zoo,
    rerank_top_k,
    save_params,
    similarity,
    similarity_forward,
)
from zoorank.tokens import GENERAL, SPECIFIC, TaskToken, build_task_token, init_model_tokens


def make_params(m=3, d=6, seed=0, feat_dims=None):
    tokens = init_model_tokens(m, d, seed=seed)
    return init_ranker_params(tokens, seed=seed + 1, feat_dims=feat_dims)


def zero_attention(params):
    params.wq[:] = 0.0
    params.wk[:] = 0.0
    params.wv[:] = 0.0
    return params


# ------------------------------------------------------------- attention

def test_attention_zero_weights_is_identity():
    params = zero_attention(make_params(d=5))
    z = np.random.default_rng(0).standard_normal((5, 4))
    assert np.allclose(attention_forward(z, params), z)


def test_attention_single_position_identity_values():
    params = zero_attention(make_params(d=4))
    params.wv[:] = np.eye(4)
    z = np.random.default_rng(1).standard_normal((4, 1))
    assert np.allclose(attention_forward(z, params), 2.0 * z)


def test_attention_matches_dense_oracle():
    params = make_params(d=4)
    z = np.random.default_rng(2).standard_normal((4, 3))
    zt = z.T
    q, k, v = zt @ params.wq, zt @ params.wk, zt @ params.wv
    logits = q @ k.T / np.sqrt(4)
    a = np.exp(logits - logits.max(axis=1, keepdims=True))
    a /= a.sum(axis=1, keepdims=True)
    assert np.allclose(attention_forward(z, params), z + (a @ v).T, atol=1e-7)


# ------------------------------------------------------------ similarity

def test_similarity_residual_only():
    params = zero_attention(make_params(d=5))
    params.fc_b = 0.0
    token = TaskToken(np.random.default_rng(3).standard_normal((5, 2)), np.array([0, 1]))
    theta = params.model_tokens.theta[0]
    want = float(params.fc_w @ (theta + params.prompt_general))
    assert similarity(theta, token, params) == pytest.approx(want, abs=1e-12)


def test_similarity_constant_head():
    params = make_params(d=5)
    params.fc_w[:] = 0.0
    params.fc_b = 1.25
    token = TaskToken(np.random.default_rng(4).standard_normal((5, 3)), np.arange(3))
    assert similarity(params.model_tokens.theta[1], token, params) == 1.25


def test_similarity_column_permutation_invariant():
    params = make_params(d=6)
    rng = np.random.default_rng(5)
    centers = rng.standard_normal((6, 4))
    token = TaskToken(centers, np.arange(4))
    permuted = TaskToken(centers[:, [2, 0, 3, 1]], np.arange(4))
    theta = params.model_tokens.theta[0]
    assert similarity(theta, permuted, params) == pytest.approx(
        similarity(theta, token, params), abs=1e-9
    )


def test_similarity_uses_prompt_by_token_kind():
    params = make_params(d=5)
    params.prompt_general[:] = 0.0
    params.prompt_specific[:] = 3.0
    centers = np.random.default_rng(6).standard_normal((5, 2))
    theta = params.model_tokens.theta[0]
    g = similarity(theta, TaskToken(centers, np.arange(2), kind=GENERAL), params)
    s = similarity(theta, TaskToken(centers, np.arange(2), kind=SPECIFIC, model_id="x"), params)
    assert g != s


def test_similarity_rejects_dimension_mismatch():
    params = make_params(d=5)
    token = TaskToken(np.zeros((4, 2)), np.arange(2))
    with pytest.raises(ShapeError):
        similarity_forward(params.model_tokens.theta[0], token, params)


# --------------------------------------------------------------- ranking

def test_rank_zoo_single_model():
    params = make_params(m=1, d=4)
    token = TaskToken(np.zeros((4, 2)), np.arange(2))
    assert rank_zoo(token, params).order.order.tolist() == [0]


def test_rank_zoo_duplicate_tokens_tie_break_by_index():
    params = zero_attention(make_params(m=3, d=4))
    params.model_tokens.theta[:] = 1.0
    token = TaskToken(np.zeros((4, 2)), np.arange(2))
    ranking = rank_zoo(token, params)
    assert np.ptp(ranking.scores.values) == 0.0
    assert ranking.order.order.tolist() == [0, 1, 2]


def test_rank_zoo_engineered_alignment():
    params = zero_attention(make_params(m=2, d=4))
    params.fc_b = 0.0
    params.fc_w[:] = np.array([1.0, 0.0, 0.0, 0.0])
    params.model_tokens.theta[0] = np.array([1.0, 0.0, 0.0, 0.0])
    params.model_tokens.theta[1] = np.array([0.0, 1.0, 0.0, 0.0])
    token = TaskToken(np.zeros((4, 2)), np.arange(2))
    ranking = rank_zoo(token, params)
    assert ranking.order.order.tolist() == [0, 1]
    for m in range(2):
        assert ranking.scores.values[m] == similarity(
            params.model_tokens.theta[m], token, params
        )


def test_rank_zoo_rejects_specific_token():
    params = make_params()
    token = TaskToken(np.zeros((6, 2)), np.arange(2), kind=SPECIFIC, model_id="x")
    with pytest.raises(ShapeError):
        rank_zoo(token, params)


# --------------------------------------------------------------- rerank

def _task_setup(d=5, m=2, seed=7):
    rng = np.random.default_rng(seed)
    banks = {
        f"model_{i:03d}": random_bank(rng, d=d, model_id=f"model_{i:03d}",
                                      with_probs=False)
        for i in range(m)
    }
    params = make_params(m=m, d=d, feat_dims={mid: d for mid in banks})
    return params, banks


def test_rerank_k_zero_is_noop():
    params, banks = _task_setup()
    token = build_task_token(next(iter(banks.values())))
    base = rank_zoo(token, params)
    out = rerank_top_k(base, banks, 0, params)
    assert np.array_equal(out.scores.values, base.scores.values)
    assert out.k_used == 0


def test_rerank_degenerate_equality():
    # Specific tokens equal to the general token (identity projections over
    # the same bank) and equal prompts leave the ranking unchanged.
    params, banks = _task_setup()
    shared = next(iter(banks.values()))
    import dataclasses
    banks = {mid: dataclasses.replace(shared, manifest=dataclasses.replace(
        shared.manifest, model_id=mid)) for mid in banks}
    for mid in banks:
        params.projections[mid] = np.eye(5)
    params.prompt_specific[:] = params.prompt_general
    token = build_task_token(shared)
    base = rank_zoo(token, params)
    out = rerank_top_k(base, banks, len(banks), params)
    assert np.allclose(out.scores.values, base.scores.values, atol=1e-9)
    assert out.order.order.tolist() == base.order.order.tolist()


def test_rerank_out_of_range_and_capability():
    params, banks = _task_setup()
    token = build_task_token(next(iter(banks.values())))
    base = rank_zoo(token, params)
    with pytest.raises(ShapeError):
        rerank_top_k(base, banks, 5, params)
    with pytest.raises(CapabilityError):
        rerank_top_k(base, {}, 1, params)
    params.projections.clear()
    with pytest.raises(CapabilityError):
        rerank_top_k(base, banks, 1, params)


# --------------------------------------------------------- serialization

def test_params_round_trip(tmp_path):
    params = make_params(m=3, d=6, feat_dims={"model_000": 4, "model_002": 5})
    params.fc_b = 0.5
    save_params(params, tmp_path / "p")
    back = load_params(tmp_path / "p")
    assert back.model_ids == params.model_ids
    assert back.fc_b == params.fc_b
    assert sorted(back.projections) == sorted(params.projections)
    for name in ("wq", "wk", "wv", "fc_w", "prompt_general", "prompt_specific"):
        assert np.allclose(getattr(back, name), getattr(params, name), atol=1e-6)
    assert np.allclose(back.model_tokens.theta, params.model_tokens.theta, atol=1e-6)
    # a second round trip is exact: float32 is now the fixed point
    save_params(back, tmp_path / "p2")
    again = load_params(tmp_path / "p2")
    assert np.array_equal(again.wq, back.wq)
    assert np.array_equal(again.projections["model_002"], back.projections["model_002"])
