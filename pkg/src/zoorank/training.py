"""Training loop: task sampling, rank-aggregation supervision with
class-set caching, the listwise ranking loss, exact reverse-mode
gradients for every ranker parameter, and Adam-style optimization.

Everything runs in 64-bit arithmetic and is deterministic given the
config seed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .aggregate import ScoreVector, copeland_aggregate, dsc_order
from .banks import FeatureBank
from .errors import CapacityError, ShapeError, TrainingError
from .estimators import METHODS, h_score, leep, logme, nce, pseudo_labels
from .ranker import (
    RankerParams,
    init_ranker_params,
    similarity_backward,
    similarity_forward,
)
from .tokens import GENERAL, SPECIFIC, TaskToken, class_centers, init_model_tokens

LOSS_KINDS = ("rank", "listmle", "mse")


@dataclass(frozen=True)
class TrainTask:
    class_ids: tuple                 # sorted global class labels
    sample_indices: dict             # class_id -> np.ndarray of row indices
    signature: str

    @staticmethod
    def make(class_ids, sample_indices):
        ids = tuple(sorted(int(c) for c in class_ids))
        sig = hashlib.sha256(",".join(map(str, ids)).encode()).hexdigest()[:16]
        return TrainTask(ids, sample_indices, sig)


@dataclass
class TrainConfig:
    n_tasks: int = 256
    classes_per_task: tuple = (4, 8)
    samples_per_class: tuple = (10, 25)
    d: int = 64
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 16
    epochs: int = 30
    p_spec: float = 0.5
    k_spec: tuple = (1, 3)
    seed: int = 0
    loss: str = "rank"

    def __post_init__(self):
        if not 0.0 <= self.p_spec <= 1.0:
            raise ShapeError("p_spec must be a probability")
        for name in ("classes_per_task", "samples_per_class", "k_spec"):
            lo, hi = getattr(self, name)
            if lo > hi or lo < 1:
                raise ShapeError(f"empty range for {name}")
        if self.loss not in LOSS_KINDS:
            raise ShapeError(f"loss must be one of {LOSS_KINDS}")


@dataclass
class TrainingPool:
    """Pre-extracted training data: one probe bank plus one bank per zoo
    model, all over the same rows.  class_groups optionally records which
    source dataset each class came from."""

    probe_bank: FeatureBank
    model_banks: dict                 # model_id -> FeatureBank, insertion order = model order
    class_groups: list = field(default_factory=list)

    @property
    def model_ids(self):
        return list(self.model_banks)

    def rows_by_class(self):
        labels = self.probe_bank.labels
        return {int(c): np.flatnonzero(labels == c) for c in np.unique(labels)}


def sample_tasks(pool: TrainingPool, config: TrainConfig, seed) -> list:
    rng = np.random.default_rng(seed)
    rows = pool.rows_by_class()
    all_classes = sorted(rows)
    groups = pool.class_groups or [all_classes]
    cls_lo, cls_hi = config.classes_per_task
    spc_lo, spc_hi = config.samples_per_class
    if len(all_classes) < cls_hi:
        raise CapacityError(
            f"pool has {len(all_classes)} classes, tasks need up to {cls_hi}"
        )
    tasks = []
    for _ in range(config.n_tasks):
        n_groups = int(rng.integers(1, min(4, len(groups)) + 1))
        chosen = list(rng.choice(len(groups), size=n_groups, replace=False))
        candidates = sorted({c for g in chosen for c in groups[g]})
        n_cls = int(rng.integers(cls_lo, cls_hi + 1))
        while len(candidates) < n_cls:
            extra = int(rng.integers(0, len(groups)))
            candidates = sorted(set(candidates) | set(groups[extra]))
        classes = sorted(int(c) for c in rng.choice(candidates, size=n_cls, replace=False))
        n_spc = int(rng.integers(spc_lo, spc_hi + 1))
        indices = {}
        for c in classes:
            avail = rows[c]
            if avail.shape[0] < n_spc:
                raise CapacityError(
                    f"class {c} has {avail.shape[0]} samples, task needs {n_spc}"
                )
            indices[c] = np.sort(rng.choice(avail, size=n_spc, replace=False))
        tasks.append(TrainTask.make(classes, indices))
    return tasks


def task_rows(task: TrainTask):
    """Concatenated row indices (class-major) and the local labels."""
    parts, labels = [], []
    for j, c in enumerate(task.class_ids):
        parts.append(task.sample_indices[c])
        labels.append(np.full(task.sample_indices[c].shape[0], j))
    return np.concatenate(parts), np.concatenate(labels)


def compute_supervision(task: TrainTask, pool: TrainingPool, cache, methods=METHODS) -> ScoreVector:
    """Aggregated estimator ranking for one task; cached by class-set
    signature since tasks over the same classes share supervision."""
    key = (task.signature, tuple(methods))
    if cache is not None and key in cache:
        return cache[key]
    rows, labels = task_rows(task)
    per_method = {m: [] for m in methods}
    for bank in pool.model_banks.values():
        feats = bank.features[rows].astype(np.float64)
        if "hscore" in methods:
            per_method["hscore"].append(h_score(feats, labels).value)
        if "logme" in methods:
            per_method["logme"].append(logme(feats, labels).value)
        if "nce" in methods or "leep" in methods:
            probs = bank.source_probs
            if probs is None:
                from .errors import CapabilityError

                raise CapabilityError(
                    f"bank for model {bank.model_id!r} has no source_probs",
                    model_id=bank.model_id,
                )
            sub = probs[rows].astype(np.float64)
            sub = sub / sub.sum(axis=1, keepdims=True)
            if "nce" in methods:
                per_method["nce"].append(nce(pseudo_labels(sub), labels).value)
            if "leep" in methods:
                per_method["leep"].append(leep(sub, labels).value)
    vectors = [ScoreVector(per_method[m], method_tag=m) for m in methods]
    agg = copeland_aggregate(vectors)
    if cache is not None:
        cache[key] = agg
    return agg


def _gt_descending_order(gt):
    # Copeland scores tie often; stable argsort gives the ascending-index
    # tie-break the loss needs for a total order.
    return dsc_order(gt).order


def ranking_loss(scores, gt, kind="rank") -> float:
    loss, _ = loss_and_score_grads(
        np.asarray(scores.values if isinstance(scores, ScoreVector) else scores, float),
        np.asarray(gt.values if isinstance(gt, ScoreVector) else gt, float),
        kind,
    )
    return loss


def loss_and_score_grads(pred, gt, kind="rank"):
    """Loss value and its exact gradient w.r.t. the predicted scores."""
    m = pred.shape[0]
    if gt.shape[0] != m:
        raise ShapeError("score/supervision length mismatch")
    if kind == "mse":
        diff = pred - gt
        return float(np.mean(diff ** 2)), 2.0 * diff / m
    # "rank" and "listmle" coincide here: both are the Plackett-Luce
    # negative log-likelihood of the supervision's descending order.
    order = _gt_descending_order(gt)
    s = pred[order]
    loss = 0.0
    grad_ordered = np.zeros(m)
    for i in range(m):
        suffix = s[i:]
        mx = suffix.max()
        e = np.exp(suffix - mx)
        z = e.sum()
        loss += float(np.log(z) + mx - s[i])
        grad_ordered[i:] += e / z
        grad_ordered[i] -= 1.0
    grads = np.zeros(m)
    grads[order] = grad_ordered
    return loss, grads


@dataclass
class PreparedTask:
    token: TaskToken                  # general task token
    gt: np.ndarray                    # supervision scores, length M
    specific_centers: dict = field(default_factory=dict)
    # model index -> (model_id, d_m x C center matrix in the model's space)


def zero_grads(params: RankerParams):
    return {
        "theta": np.zeros_like(params.model_tokens.theta),
        "wq": np.zeros_like(params.wq),
        "wk": np.zeros_like(params.wk),
        "wv": np.zeros_like(params.wv),
        "fc_w": np.zeros_like(params.fc_w),
        "fc_b": 0.0,
        "prompt_general": np.zeros_like(params.prompt_general),
        "prompt_specific": np.zeros_like(params.prompt_specific),
        "projections": {k: np.zeros_like(v) for k, v in params.projections.items()},
    }


def batch_loss_and_grad(params: RankerParams, batch, loss_kind="rank"):
    """Mean loss over the batch and its exact reverse-mode gradient."""
    grads = zero_grads(params)
    total = 0.0
    scale = 1.0 / len(batch)
    for task in batch:
        scores = np.empty(params.n_models)
        caches = []
        for m in range(params.n_models):
            if m in task.specific_centers:
                model_id, centers_dm = task.specific_centers[m]
                proj = params.projections[model_id]
                token = TaskToken(
                    proj.T @ centers_dm, task.token.class_ids, kind=SPECIFIC, model_id=model_id
                )
            else:
                token = task.token
            score, cache = similarity_forward(params.model_tokens.theta[m], token, params)
            scores[m] = score
            caches.append(cache)
        loss, dscores = loss_and_score_grads(scores, task.gt, loss_kind)
        total += loss * scale
        for m in range(params.n_models):
            g = similarity_backward(dscores[m] * scale, caches[m], params)
            grads["theta"][m] += g["theta"]
            grads["wq"] += g["wq"]
            grads["wk"] += g["wk"]
            grads["wv"] += g["wv"]
            grads["fc_w"] += g["fc_w"]
            grads["fc_b"] += g["fc_b"]
            if g["prompt_kind"] == GENERAL:
                grads["prompt_general"] += g["prompt"]
            else:
                grads["prompt_specific"] += g["prompt"]
            if m in task.specific_centers:
                model_id, centers_dm = task.specific_centers[m]
                grads["projections"][model_id] += centers_dm @ g["centers"].T
    return total, grads


def loss_gradient(params: RankerParams, batch, loss_kind="rank"):
    return batch_loss_and_grad(params, batch, loss_kind)[1]


def grad_norm(grads) -> float:
    sq = float(grads["fc_b"]) ** 2
    for key in ("theta", "wq", "wk", "wv", "fc_w", "prompt_general", "prompt_specific"):
        sq += float(np.sum(grads[key] ** 2))
    for g in grads["projections"].values():
        sq += float(np.sum(g ** 2))
    return float(np.sqrt(sq))


class _Adam:
    def __init__(self, config: TrainConfig):
        self.lr = config.learning_rate
        self.b1 = config.adam_beta1
        self.b2 = config.adam_beta2
        self.eps = config.epsilon
        self.t = 0
        self.m = None
        self.v = None

    def step(self, params: RankerParams, grads):
        if self.m is None:
            self.m = zero_grads(params)
            self.v = zero_grads(params)
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t

        def upd(m, v, g):
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g ** 2
            return self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

        for key in ("theta", "wq", "wk", "wv", "fc_w", "prompt_general", "prompt_specific"):
            delta = upd(self.m[key], self.v[key], grads[key])
            getattr_target = {
                "theta": params.model_tokens.theta,
                "wq": params.wq,
                "wk": params.wk,
                "wv": params.wv,
                "fc_w": params.fc_w,
                "prompt_general": params.prompt_general,
                "prompt_specific": params.prompt_specific,
            }[key]
            getattr_target -= delta
        gb = grads["fc_b"]
        self.m["fc_b"] = self.b1 * self.m["fc_b"] + (1 - self.b1) * gb
        self.v["fc_b"] = self.b2 * self.v["fc_b"] + (1 - self.b2) * gb ** 2
        params.fc_b -= self.lr * (self.m["fc_b"] / c1) / (
            np.sqrt(self.v["fc_b"] / c2) + self.eps
        )
        for model_id, g in grads["projections"].items():
            delta = upd(self.m["projections"][model_id], self.v["projections"][model_id], g)
            params.projections[model_id] -= delta


@dataclass
class TrainResult:
    params: RankerParams
    loss_trace: list                  # dicts: step, loss, grad_norm
    supervision_cache: dict
    tasks: list


def prepare_task(task: TrainTask, pool: TrainingPool, gt, model_center_cache=None):
    rows, labels = task_rows(task)
    centers, _ = class_centers(pool.probe_bank.features[rows], labels)
    token = TaskToken(centers, np.array(task.class_ids), kind=GENERAL)
    return PreparedTask(token=token, gt=np.asarray(gt.values, float))


def _model_centers(task_idx, m, task, bank, cache):
    key = (task_idx, m)
    if key not in cache:
        rows, labels = task_rows(task)
        centers, _ = class_centers(bank.features[rows], labels)
        cache[key] = centers
    return cache[key]


def train(pool: TrainingPool, config: TrainConfig, supervision_methods=METHODS,
          supervision_cache=None, progress=None) -> TrainResult:
    """Full training: sample tasks, build supervision, optimize the ranker."""
    tasks = sample_tasks(pool, config, seed=np.random.default_rng([config.seed, 0]))
    cache = supervision_cache if supervision_cache is not None else {}
    prepared = []
    for task in tasks:
        gt = compute_supervision(task, pool, cache, methods=supervision_methods)
        prepared.append(prepare_task(task, pool, gt))

    model_ids = pool.model_ids
    feat_dims = {mid: pool.model_banks[mid].manifest.feat_dim for mid in model_ids}
    model_tokens = init_model_tokens(
        len(model_ids), config.d, seed=np.random.default_rng([config.seed, 1]),
        model_ids=model_ids,
    )
    params = init_ranker_params(
        model_tokens, seed=np.random.default_rng([config.seed, 2]), feat_dims=feat_dims
    )

    rng = np.random.default_rng([config.seed, 3])
    adam = _Adam(config)
    center_cache = {}
    trace = []
    step = 0
    n = len(prepared)
    k_lo, k_hi = config.k_spec
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = []
            for ti in order[start:start + config.batch_size]:
                p = prepared[ti]
                specific = {}
                if rng.random() < config.p_spec:
                    k = int(rng.integers(k_lo, min(k_hi, len(model_ids)) + 1))
                    for m in sorted(rng.choice(len(model_ids), size=k, replace=False)):
                        m = int(m)
                        mid = model_ids[m]
                        centers = _model_centers(
                            int(ti), m, tasks[ti], pool.model_banks[mid], center_cache
                        )
                        specific[m] = (mid, centers)
                batch.append(PreparedTask(p.token, p.gt, specific))
            loss, grads = batch_loss_and_grad(params, batch, config.loss)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at step {step}", step=step)
            adam.step(params, grads)
            trace.append({"step": step, "loss": loss, "grad_norm": grad_norm(grads)})
            step += 1
        if progress is not None:
            progress(epoch, trace[-1]["loss"])
    return TrainResult(params=params, loss_trace=trace, supervision_cache=cache, tasks=tasks)


@dataclass
class FDReport:
    max_rel_err: float
    worst_coordinate: tuple           # (param name, flat index)
    n_checked: int
    h: float
    passed: bool
    discretization_warning: bool = False


def _flat_params(params: RankerParams):
    items = [
        ("theta", params.model_tokens.theta),
        ("wq", params.wq),
        ("wk", params.wk),
        ("wv", params.wv),
        ("fc_w", params.fc_w),
        ("prompt_general", params.prompt_general),
        ("prompt_specific", params.prompt_specific),
    ]
    for model_id in sorted(params.projections):
        items.append((f"proj:{model_id}", params.projections[model_id]))
    return items


def finite_diff_check(params: RankerParams, batch, h=1e-4, tolerance=1e-4,
                      max_coords=10_000, seed=0, loss_kind="rank",
                      analytic=None) -> FDReport:
    """Central-difference audit of the analytic gradient.

    An externally supplied `analytic` gradient record (e.g. with a
    coordinate deliberately zeroed) can be checked instead of the one
    computed here.
    """
    if h <= 0:
        raise ShapeError("h must be positive")
    if analytic is None:
        analytic = loss_gradient(params, batch, loss_kind)
    items = _flat_params(params)
    coords = [(name, i) for name, arr in items for i in range(arr.size)]
    coords.append(("fc_b", 0))
    if len(coords) > max_coords:
        rng = np.random.default_rng(seed)
        picked = rng.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[int(i)] for i in picked]
    arrays = dict(items)

    worst = ("", 0)
    max_err = 0.0
    for name, i in coords:
        if name == "fc_b":
            orig = params.fc_b
            params.fc_b = orig + h
            lp = batch_loss_and_grad(params, batch, loss_kind)[0]
            params.fc_b = orig - h
            lm = batch_loss_and_grad(params, batch, loss_kind)[0]
            params.fc_b = orig
            a = float(analytic["fc_b"])
        else:
            arr = arrays[name]
            flat = arr.reshape(-1)
            orig = flat[i]
            flat[i] = orig + h
            lp = batch_loss_and_grad(params, batch, loss_kind)[0]
            flat[i] = orig - h
            lm = batch_loss_and_grad(params, batch, loss_kind)[0]
            flat[i] = orig
            if name.startswith("proj:"):
                a = float(analytic["projections"][name[5:]].reshape(-1)[i])
            else:
                a = float(analytic[name].reshape(-1)[i])
        numeric = (lp - lm) / (2.0 * h)
        rel = abs(a - numeric) / max(abs(a), abs(numeric), 1e-3)
        if rel > max_err:
            max_err = rel
            worst = (name, i)
    return FDReport(
        max_rel_err=max_err,
        worst_coordinate=worst,
        n_checked=len(coords),
        h=h,
        passed=max_err < tolerance,
        discretization_warning=h >= 0.1,
    )
