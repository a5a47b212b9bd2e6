"""Feature banks: the persisted (features, labels, source-probs) view of a
pre-trained model on one dataset.

A bank directory holds ``manifest.json`` plus ``features.mat``,
``labels.mat`` and optionally ``source_probs.mat`` in the binary codec
from :mod:`zoorank.codec`.  Banks are immutable after load and safe to
share across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codec import read_matrix, write_matrix
from .errors import FormatError, ValidationError

MANIFEST_KEYS = (
    "model_id",
    "dataset_id",
    "n_samples",
    "feat_dim",
    "n_classes",
    "has_source_probs",
    "source_dim",
    "seed",
)

ROW_SUM_TOL = 1e-5
LABEL_INT_TOL = 1e-6


@dataclass(frozen=True)
class BankManifest:
    model_id: str
    dataset_id: str
    n_samples: int
    feat_dim: int
    n_classes: int
    has_source_probs: bool
    source_dim: int = 0
    seed: int = 0

    def to_dict(self):
        return {k: getattr(self, k) for k in MANIFEST_KEYS}

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(MANIFEST_KEYS)
        if unknown:
            raise FormatError(f"unknown manifest keys: {sorted(unknown)}")
        missing = set(MANIFEST_KEYS) - set(d)
        if missing:
            raise FormatError(f"missing manifest keys: {sorted(missing)}")
        return cls(**d)


@dataclass(frozen=True)
class FeatureBank:
    manifest: BankManifest
    features: np.ndarray  # n_samples x feat_dim, float32
    labels: np.ndarray    # n_samples, int
    source_probs: np.ndarray | None = None  # n_samples x source_dim

    @property
    def model_id(self):
        return self.manifest.model_id

    @property
    def dataset_id(self):
        return self.manifest.dataset_id


def make_bank(model_id, dataset_id, features, labels, source_probs=None, seed=0):
    """Convenience constructor deriving the manifest from the arrays."""
    features = np.asarray(features, dtype=np.float32)
    labels = np.asarray(labels, dtype=np.int64)
    if source_probs is not None:
        source_probs = np.asarray(source_probs, dtype=np.float32)
    n_classes = int(labels.max()) + 1 if labels.size else 0
    manifest = BankManifest(
        model_id=model_id,
        dataset_id=dataset_id,
        n_samples=int(features.shape[0]),
        feat_dim=int(features.shape[1]),
        n_classes=n_classes,
        has_source_probs=source_probs is not None,
        source_dim=int(source_probs.shape[1]) if source_probs is not None else 0,
        seed=int(seed),
    )
    return FeatureBank(manifest, features, labels, source_probs)


def validate_bank(bank: FeatureBank) -> list[str]:
    """Return the list of violated invariants; an empty list means valid."""
    v = []
    m = bank.manifest
    if m.n_samples <= 0:
        v.append("n_samples must be positive")
    if m.feat_dim <= 0:
        v.append("feat_dim must be positive")
    if m.n_classes < 2:
        v.append("n_classes must be at least 2")
    if m.n_samples < m.n_classes:
        v.append("n_samples must be >= n_classes")
    if m.has_source_probs and m.source_dim < 2:
        v.append("has_source_probs requires source_dim >= 2")
    if not m.has_source_probs and m.source_dim != 0:
        v.append("source_dim must be 0 when has_source_probs is false")

    if bank.features.shape != (m.n_samples, m.feat_dim):
        v.append(
            f"features shape {bank.features.shape} does not match manifest "
            f"({m.n_samples}, {m.feat_dim})"
        )
    else:
        bad = np.flatnonzero(~np.isfinite(bank.features).all(axis=1))
        if bad.size:
            v.append(f"non-finite feature at row {int(bad[0])}")

    if bank.labels.shape != (m.n_samples,):
        v.append(f"labels shape {bank.labels.shape} does not match n_samples {m.n_samples}")
    else:
        out = np.flatnonzero((bank.labels < 0) | (bank.labels >= m.n_classes))
        if out.size:
            v.append(f"label out of range at row {int(out[0])}")
        else:
            present = np.bincount(bank.labels, minlength=m.n_classes) > 0
            for c in np.flatnonzero(~present):
                v.append(f"empty class {int(c)}")

    if m.has_source_probs:
        if bank.source_probs is None:
            v.append("manifest declares source_probs but matrix is absent")
        elif bank.source_probs.shape != (m.n_samples, m.source_dim):
            v.append(
                f"source_probs shape {bank.source_probs.shape} does not match manifest "
                f"({m.n_samples}, {m.source_dim})"
            )
        else:
            if (bank.source_probs < 0).any():
                row = int(np.flatnonzero((bank.source_probs < 0).any(axis=1))[0])
                v.append(f"negative source probability at row {row}")
            sums = bank.source_probs.sum(axis=1, dtype=np.float64)
            bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
            if bad.size:
                v.append(f"source_probs row {int(bad[0])} does not sum to 1")
    elif bank.source_probs is not None:
        v.append("source_probs present but manifest has has_source_probs=false")
    return v


def write_bank(bank: FeatureBank, path) -> None:
    violations = validate_bank(bank)
    if violations:
        raise ValidationError(violations[0])
    path = Path(path)
    try:
        path.mkdir(exist_ok=True)
        with open(path / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(bank.manifest.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        write_matrix(path / "features.mat", bank.features)
        write_matrix(path / "labels.mat", bank.labels.astype(np.float32).reshape(-1, 1))
        if bank.source_probs is not None:
            write_matrix(path / "source_probs.mat", bank.source_probs)
    except OSError as exc:
        raise FormatError(f"cannot write bank at {path}: {exc}") from exc


def read_bank(path) -> FeatureBank:
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.is_file():
        raise FormatError(f"missing file {manifest_path}")
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = BankManifest.from_dict(json.load(fh))

    features = _read_checked(path / "features.mat", manifest.n_samples, manifest.feat_dim)
    raw_labels = _read_checked(path / "labels.mat", manifest.n_samples, 1)[:, 0]
    rounded = np.rint(raw_labels.astype(np.float64))
    if np.abs(raw_labels - rounded).max(initial=0.0) > LABEL_INT_TOL:
        raise FormatError(f"non-integer label in {path / 'labels.mat'}")
    labels = rounded.astype(np.int64)

    source_probs = None
    if manifest.has_source_probs:
        source_probs = _read_checked(
            path / "source_probs.mat", manifest.n_samples, manifest.source_dim
        )

    bank = FeatureBank(manifest, features, labels, source_probs)
    violations = validate_bank(bank)
    if violations:
        raise ValidationError(f"bank at {path} is invalid: {violations[0]}")
    return bank


def _read_checked(path, rows, cols):
    if not path.is_file():
        raise FormatError(f"missing file {path}")
    mat = read_matrix(path)
    if mat.shape != (rows, cols):
        raise FormatError(
            f"dimension mismatch in {path}: header says {mat.shape}, "
            f"manifest says ({rows}, {cols})"
        )
    return mat
