"""Estimator-style facade so the ranker composes with sklearn pipelines
and model-selection tooling (get_params/set_params, fit/predict/score)."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .errors import ValidationError
from .evaluate import ranker_scores
from .metrics import weighted_kendall_tau
from .training import TrainConfig, TrainingPool, train


class ZooRanker(BaseEstimator):
    """Learns to rank a model zoo for downstream tasks.

    fit takes a :class:`TrainingPool`; predict takes eval-task objects
    (anything with probe_bank and model_banks attributes) and returns the
    predicted score matrix, one row per task.
    """

    def __init__(self, n_tasks=256, classes_per_task=(4, 8), samples_per_class=(10, 25),
                 d=64, learning_rate=1e-3, batch_size=16, epochs=30,
                 p_spec=0.5, k_spec=(1, 3), loss="rank", seed=0, k=0):
        self.n_tasks = n_tasks
        self.classes_per_task = classes_per_task
        self.samples_per_class = samples_per_class
        self.d = d
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.epochs = epochs
        self.p_spec = p_spec
        self.k_spec = k_spec
        self.loss = loss
        self.seed = seed
        self.k = k

    def _config(self):
        return TrainConfig(
            n_tasks=self.n_tasks,
            classes_per_task=tuple(self.classes_per_task),
            samples_per_class=tuple(self.samples_per_class),
            d=self.d,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            epochs=self.epochs,
            p_spec=self.p_spec,
            k_spec=tuple(self.k_spec),
            loss=self.loss,
            seed=self.seed,
        )

    def fit(self, pool: TrainingPool, y=None):
        result = train(pool, self._config())
        self.params_ = result.params
        self.loss_trace_ = result.loss_trace
        self.model_ids_ = result.params.model_ids
        return self

    def predict(self, tasks):
        self._check_fitted()
        return np.stack([ranker_scores(t, self.params_, k=self.k).values for t in tasks])

    def score(self, tasks, ground_truth):
        """Mean weighted Kendall correlation against per-task ground truth."""
        self._check_fitted()
        pred = self.predict(tasks)
        gt = np.asarray(ground_truth)
        return float(
            np.mean([weighted_kendall_tau(pred[t], gt[t]).tau_w for t in range(len(tasks))])
        )

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise ValidationError("ZooRanker is not fitted")
