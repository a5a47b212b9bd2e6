import numpy as np
import pytest

from zoorank.banks import make_bank
from zoorank.synth import ZooConfig, build_benchmark


def tiny_zoo_config(**overrides):
    base = dict(
        n_models=4,
        n_global_classes=16,
        source_subset_size=14,
        n_eval_classes=6,
        n_eval_tasks=3,
        classes_per_eval_task=4,
        pool_samples_per_class=12,
        train_samples_per_class=8,
        test_samples_per_class=8,
        oracle_samples_per_class=12,
        seed=0,
    )
    base.update(overrides)
    return ZooConfig(**base)


@pytest.fixture(scope="session")
def tiny_benchmark():
    return build_benchmark(tiny_zoo_config())


def random_bank(rng, n_per_class=8, n_classes=3, d=5, model_id="m", dataset_id="ds",
                with_probs=True, source_dim=4):
    n = n_per_class * n_classes
    labels = np.repeat(np.arange(n_classes), n_per_class)
    feats = rng.standard_normal((n, d)) + 2.0 * labels[:, None]
    probs = None
    if with_probs:
        raw = rng.random((n, source_dim)) + 1e-3
        probs = raw / raw.sum(axis=1, keepdims=True)
    return make_bank(model_id, dataset_id, feats, labels, probs, seed=0)
