import numpy as np
import pytest
from sklearn.base import clone

from zoorank.errors import ValidationError
from zoorank.sklearn_api import ZooRanker


def small_ranker(**overrides):
    base = dict(n_tasks=6, classes_per_task=(3, 4), samples_per_class=(5, 8),
                epochs=2, batch_size=4, seed=0)
    base.update(overrides)
    return ZooRanker(**base)


def test_get_set_params_round_trip():
    est = small_ranker()
    params = est.get_params()
    assert params["n_tasks"] == 6
    est.set_params(epochs=5)
    assert est.get_params()["epochs"] == 5


def test_clone_preserves_params():
    est = small_ranker(seed=3)
    cloned = clone(est)
    assert cloned.get_params() == est.get_params()
    assert not hasattr(cloned, "params_")


def test_predict_before_fit_raises():
    with pytest.raises(ValidationError):
        small_ranker().predict([])


def test_fit_predict_score(tiny_benchmark):
    est = small_ranker()
    assert est.fit(tiny_benchmark.pool) is est
    assert est.model_ids_ == tiny_benchmark.model_ids
    pred = est.predict(tiny_benchmark.eval_tasks)
    assert pred.shape == (len(tiny_benchmark.eval_tasks), 4)
    assert np.isfinite(pred).all()
    tau = est.score(tiny_benchmark.eval_tasks, tiny_benchmark.ground_truth)
    assert -1.0 <= tau <= 1.0


def test_fit_is_seed_deterministic(tiny_benchmark):
    a = small_ranker().fit(tiny_benchmark.pool)
    b = small_ranker().fit(tiny_benchmark.pool)
    assert np.array_equal(a.params_.wq, b.params_.wq)
    assert a.loss_trace_ == b.loss_trace_
