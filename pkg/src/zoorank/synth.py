"""Synthetic model zoo, benchmark builder, and the nearest-class-mean
probe oracle that stands in for fine-tuning ground truth.

Every model is a random linear extractor over a shared latent space
whose row space is biased toward the span of its source classes.
Quality is spread along three axes: feature width d_m (narrow
extractors truncate the latent space), a per-model noise multiplier,
and a specialty direction that modulates noise per class.  A model is
therefore good at tasks whose classes it effectively "pre-trained" on.
All randomness flows through seed-sequence splitting, so generation is
reproducible and parallelizable per (task, model).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .banks import FeatureBank, make_bank, read_bank, write_bank
from .errors import CapacityError, DegenerateInputError, ValidationError
from .training import TrainingPool


@dataclass
class ZooConfig:
    n_models: int = 10
    latent_dim: int = 32
    n_global_classes: int = 40
    source_subset_size: int | tuple = 36
    feat_dim_range: tuple = (4, 40)
    noise_sigma: float = 0.25
    model_noise_spread: tuple = (0.8, 1.25)
    feature_noise_scale: float = 2.0
    subspace_weight: float = 0.7
    direction_gamma: float = 0.1
    softmax_temperature: float = 0.1
    probe_dim: int = 64
    n_eval_classes: int = 12
    n_eval_tasks: int = 50
    classes_per_eval_task: int = 8
    train_samples_per_class: int = 15
    test_samples_per_class: int = 15
    oracle_samples_per_class: int = 50
    pool_samples_per_class: int = 30
    n_class_groups: int = 3
    seed: int = 0

    def subset_size_range(self):
        s = self.source_subset_size
        return (s, s) if np.isscalar(s) else (int(s[0]), int(s[1]))

    def validate(self):
        for name in ("n_models", "latent_dim", "n_global_classes", "probe_dim",
                     "n_eval_tasks", "classes_per_eval_task",
                     "train_samples_per_class", "test_samples_per_class",
                     "oracle_samples_per_class", "pool_samples_per_class"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be positive")
        lo, hi = self.subset_size_range()
        if lo < 1 or lo > hi:
            raise ValidationError("source subset size range is empty")
        if hi > self.n_global_classes:
            raise ValidationError("source subset size exceeds n_global_classes")
        if self.latent_dim < self.classes_per_eval_task:
            raise ValidationError("latent_dim must be >= classes_per_eval_task")
        if self.n_eval_classes < 1:
            raise CapacityError("need at least one evaluation-only class")
        if self.classes_per_eval_task > self.n_eval_classes:
            raise CapacityError(
                f"{self.classes_per_eval_task} classes per eval task but only "
                f"{self.n_eval_classes} evaluation-only classes"
            )
        if self.n_eval_classes >= self.n_global_classes:
            raise CapacityError("no classes left for training after the eval split")


@dataclass
class SyntheticZoo:
    """Generators and metadata for one sampled zoo."""

    config: ZooConfig
    prototypes: np.ndarray            # n_classes x D, unit rows
    extractors: list                  # d_m x D per model, unit rows
    feat_dims: list
    source_subsets: list              # sorted class-id arrays per model
    specialties: list                 # unit latent direction per model
    noise_multipliers: np.ndarray
    probe_extractor: np.ndarray       # probe_dim x D
    model_ids: list

    def sample_latent(self, class_ids, n_per_class, rng):
        labels = np.repeat(np.arange(len(class_ids)), n_per_class)
        x = self.prototypes[np.repeat(class_ids, n_per_class)]
        x = x + self.config.noise_sigma * rng.standard_normal(x.shape)
        return x, labels

    def noise_scale(self, m, class_ids):
        """Per-sample noise level: the model-wide multiplier modulated by how
        well each sample's class aligns with the model's specialty direction.
        Alignment is standardized so gamma has the same meaning at any
        latent_dim."""
        cfg = self.config
        base = cfg.noise_sigma * cfg.feature_noise_scale * self.noise_multipliers[m]
        align = np.sqrt(cfg.latent_dim) * (self.prototypes[class_ids] @ self.specialties[m])
        align = np.clip(align, -2.0, 2.0)
        # / sqrt(d_m): angular perturbation of a unit feature grows like
        # scale * sqrt(d_m), so this keeps quality dimension-neutral.
        return base * np.exp(-cfg.direction_gamma * align) / np.sqrt(self.feat_dims[m])

    def model_bank(self, m, x, labels, class_ids, dataset_id, rng) -> FeatureBank:
        cfg = self.config
        feats = x @ self.extractors[m].T
        scale = self.noise_scale(m, np.asarray(class_ids)[labels])
        feats = feats + scale[:, None] * rng.standard_normal(feats.shape)
        feats = _unit_rows(feats)
        # Source head reads the noisy features, so a noisier model also has
        # a less reliable head; logits are cosines against the source-class
        # prototypes pushed through the same extractor.
        proto_feats = _unit_rows(self.prototypes[self.source_subsets[m]] @ self.extractors[m].T)
        logits = feats @ proto_feats.T / cfg.softmax_temperature
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        return make_bank(self.model_ids[m], dataset_id, feats, labels, probs, seed=cfg.seed)

    def probe_bank(self, x, labels, dataset_id) -> FeatureBank:
        return make_bank("probe", dataset_id, x @ self.probe_extractor.T, labels, seed=self.config.seed)


def _unit_rows(a):
    return a / np.linalg.norm(a, axis=1, keepdims=True)


def generate_zoo(config: ZooConfig) -> SyntheticZoo:
    config.validate()
    rng = np.random.default_rng([config.seed, 100])
    prototypes = _unit_rows(rng.standard_normal((config.n_global_classes, config.latent_dim)))
    probe = _unit_rows(rng.standard_normal((config.probe_dim, config.latent_dim)))

    extractors, feat_dims, subsets, specialties = [], [], [], []
    lo, hi = config.feat_dim_range
    for m in range(config.n_models):
        mrng = np.random.default_rng([config.seed, 200, m])
        dm = int(mrng.integers(lo, hi + 1))
        # Breadth of pre-training is the main quality axis: a model that saw
        # few source classes keeps only a thin slice of the latent space.
        s_lo, s_hi = config.subset_size_range()
        n_src = int(mrng.integers(s_lo, s_hi + 1))
        subset = np.sort(mrng.choice(config.n_global_classes, n_src, replace=False))
        basis = np.linalg.qr(prototypes[subset].T)[0]     # D x r orthonormal
        raw = mrng.standard_normal((dm, config.latent_dim))
        w = config.subspace_weight
        blended = w * (raw @ basis @ basis.T) + (1.0 - w) * raw
        extractors.append(_unit_rows(blended))
        feat_dims.append(dm)
        subsets.append(subset)
        u = mrng.standard_normal(config.latent_dim)
        specialties.append(u / np.linalg.norm(u))
    multipliers = np.random.default_rng([config.seed, 300]).uniform(
        *config.model_noise_spread, size=config.n_models
    )
    model_ids = [f"model_{m:03d}" for m in range(config.n_models)]
    return SyntheticZoo(
        config=config,
        prototypes=prototypes,
        extractors=extractors,
        feat_dims=feat_dims,
        source_subsets=subsets,
        specialties=specialties,
        noise_multipliers=multipliers,
        probe_extractor=probe,
        model_ids=model_ids,
    )


def _split_keys(features, seed):
    """Content-derived shuffle keys: identical rows get identical keys, so
    duplicating every sample leaves the stratified split's unique
    membership unchanged."""
    keys = np.empty(features.shape[0])
    for i, row in enumerate(np.asarray(features, dtype=np.float32)):
        digest = hashlib.sha256(str(seed).encode() + row.tobytes()).digest()
        keys[i] = int.from_bytes(digest[:8], "little")
    return keys


def probe_oracle(task_bank: FeatureBank, split_fraction=0.5, seed=0) -> float:
    """Nearest-class-mean accuracy under a deterministic stratified split."""
    feats = task_bank.features.astype(np.float64)
    labels = task_bank.labels
    keys = _split_keys(task_bank.features, seed)
    train_mask = np.zeros(labels.shape[0], dtype=bool)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if idx.shape[0] < 2:
            raise DegenerateInputError(f"class {c} has fewer than 2 samples")
        order = idx[np.lexsort((idx, keys[idx]))]
        n_train = int(np.clip(round(split_fraction * idx.shape[0]), 1, idx.shape[0] - 1))
        train_mask[order[:n_train]] = True

    classes = np.unique(labels)
    means = np.stack([feats[train_mask & (labels == c)].mean(axis=0) for c in classes])
    test = feats[~train_mask]
    dists = ((test[:, None, :] - means[None, :, :]) ** 2).sum(axis=2)
    pred = classes[np.argmin(dists, axis=1)]
    return float(np.mean(pred == labels[~train_mask]))


@dataclass
class EvalTask:
    task_id: str
    class_ids: np.ndarray             # global class labels
    probe_bank: FeatureBank
    model_banks: dict                 # model_id -> FeatureBank


@dataclass
class Benchmark:
    config: ZooConfig
    zoo: SyntheticZoo
    pool: TrainingPool
    pool_class_ids: list              # local label -> global class id
    train_class_ids: list
    eval_class_ids: list
    eval_tasks: list
    ground_truth: np.ndarray          # n_eval_tasks x n_models, accuracies

    @property
    def model_ids(self):
        return self.zoo.model_ids


def build_benchmark(config: ZooConfig) -> Benchmark:
    """Generate the zoo, split classes disjointly into training-visible and
    evaluation-only sets, and compute probe-oracle ground truth."""
    zoo = generate_zoo(config)
    cfg = config
    rng = np.random.default_rng([cfg.seed, 400])
    perm = rng.permutation(cfg.n_global_classes)
    eval_classes = sorted(int(c) for c in perm[: cfg.n_eval_classes])
    train_classes = sorted(int(c) for c in perm[cfg.n_eval_classes:])

    # Training pool over the visible classes, local labels by ascending
    # global id; class provenance groups give the task sampler its
    # mixed-dataset texture.
    pool_rng = np.random.default_rng([cfg.seed, 500])
    x_pool, labels = zoo.sample_latent(
        np.array(train_classes), cfg.pool_samples_per_class, pool_rng
    )
    probe_bank = zoo.probe_bank(x_pool, labels, "train_pool")
    model_banks = {}
    for m, mid in enumerate(zoo.model_ids):
        brng = np.random.default_rng([cfg.seed, 500, m])
        model_banks[mid] = zoo.model_bank(m, x_pool, labels, train_classes, "train_pool", brng)
    n_groups = max(1, min(cfg.n_class_groups, len(train_classes)))
    group_of = np.array_split(np.arange(len(train_classes)), n_groups)
    class_groups = [[int(c) for c in g] for g in group_of]
    pool = TrainingPool(probe_bank=probe_bank, model_banks=model_banks, class_groups=class_groups)

    n_per_class = cfg.train_samples_per_class + cfg.test_samples_per_class
    eval_tasks = []
    ground_truth = np.zeros((cfg.n_eval_tasks, cfg.n_models))
    for t in range(cfg.n_eval_tasks):
        trng = np.random.default_rng([cfg.seed, 600, t])
        classes = np.sort(trng.choice(eval_classes, cfg.classes_per_eval_task, replace=False))
        x, task_labels = zoo.sample_latent(classes, n_per_class, trng)
        dataset_id = f"eval_{t:03d}"
        task_probe = zoo.probe_bank(x, task_labels, dataset_id)
        # Ground truth comes from an independent, larger draw of the same
        # classes: transferability is an expectation, so scoring the oracle
        # on the very samples the estimators see would leak shared sampling
        # noise into the target.
        orng = np.random.default_rng([cfg.seed, 700, t])
        x_oracle, oracle_labels = zoo.sample_latent(classes, cfg.oracle_samples_per_class, orng)
        banks = {}
        for m, mid in enumerate(zoo.model_ids):
            brng = np.random.default_rng([cfg.seed, 600, t, m])
            banks[mid] = zoo.model_bank(m, x, task_labels, classes, dataset_id, brng)
            mrng = np.random.default_rng([cfg.seed, 700, t, m])
            oracle_bank = zoo.model_bank(m, x_oracle, oracle_labels, classes, dataset_id, mrng)
            ground_truth[t, m] = probe_oracle(oracle_bank, 0.5, seed=cfg.seed)
        eval_tasks.append(EvalTask(dataset_id, classes, task_probe, banks))
    return Benchmark(
        config=cfg,
        zoo=zoo,
        pool=pool,
        pool_class_ids=train_classes,
        train_class_ids=train_classes,
        eval_class_ids=eval_classes,
        eval_tasks=eval_tasks,
        ground_truth=ground_truth,
    )


def write_benchmark(benchmark: Benchmark, outdir) -> None:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "train").mkdir(exist_ok=True)
    (outdir / "train" / "models").mkdir(exist_ok=True)
    write_bank(benchmark.pool.probe_bank, outdir / "train" / "probe")
    for mid, bank in benchmark.pool.model_banks.items():
        write_bank(bank, outdir / "train" / "models" / mid)
    (outdir / "eval").mkdir(exist_ok=True)
    for task in benchmark.eval_tasks:
        tdir = outdir / "eval" / task.task_id
        tdir.mkdir(exist_ok=True)
        (tdir / "models").mkdir(exist_ok=True)
        write_bank(task.probe_bank, tdir / "probe")
        for mid, bank in task.model_banks.items():
            write_bank(bank, tdir / "models" / mid)
    meta = {
        "config": asdict(benchmark.config),
        "model_ids": benchmark.model_ids,
        "feat_dims": benchmark.zoo.feat_dims,
        "train_class_ids": benchmark.train_class_ids,
        "eval_class_ids": benchmark.eval_class_ids,
        "class_groups": benchmark.pool.class_groups,
        "eval_tasks": [
            {
                "task_id": task.task_id,
                "class_ids": [int(c) for c in task.class_ids],
                "ground_truth": benchmark.ground_truth[t].tolist(),
            }
            for t, task in enumerate(benchmark.eval_tasks)
        ],
    }
    with open(outdir / "benchmark.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class LoadedBenchmark:
    config: ZooConfig
    model_ids: list
    pool: TrainingPool
    eval_tasks: list                  # EvalTask
    ground_truth: np.ndarray
    eval_class_ids: list


def load_benchmark(path) -> LoadedBenchmark:
    path = Path(path)
    with open(path / "benchmark.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    cfg_fields = {k: tuple(v) if isinstance(v, list) else v for k, v in meta["config"].items()}
    config = ZooConfig(**cfg_fields)
    model_ids = meta["model_ids"]
    probe = read_bank(path / "train" / "probe")
    banks = {mid: read_bank(path / "train" / "models" / mid) for mid in model_ids}
    pool = TrainingPool(
        probe_bank=probe,
        model_banks=banks,
        class_groups=[list(g) for g in meta["class_groups"]],
    )
    tasks = []
    gt = []
    for entry in meta["eval_tasks"]:
        tdir = path / "eval" / entry["task_id"]
        tasks.append(
            EvalTask(
                task_id=entry["task_id"],
                class_ids=np.array(entry["class_ids"]),
                probe_bank=read_bank(tdir / "probe"),
                model_banks={mid: read_bank(tdir / "models" / mid) for mid in model_ids},
            )
        )
        gt.append(entry["ground_truth"])
    return LoadedBenchmark(
        config=config,
        model_ids=model_ids,
        pool=pool,
        eval_tasks=tasks,
        ground_truth=np.array(gt),
        eval_class_ids=list(meta["eval_class_ids"]),
    )
