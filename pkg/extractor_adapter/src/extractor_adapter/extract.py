"""Image folder -> feature-bank directory.

The dataset root must contain one subdirectory per class; class indices
are assigned alphabetically by subdirectory name.  Features are the
backbone's penultimate-layer activations; source probabilities, when
requested, are the classification head's softmax.  All inference runs in
eval mode with a single torch thread so repeated CPU extraction is
bit-identical.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from .codec import write_matrix
from .registry import build_backbone, weight_seed

log = logging.getLogger("extractor_adapter")

IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp")

# Standard ImageNet preprocessing constants; part of the determinism
# contract, so changing them is a format-visible change.
RESIZE = 256
CROP = 224
MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)


class DatasetError(ValueError):
    """Dataset root does not satisfy the layout invariants."""


@dataclass
class ExtractionJob:
    model: str
    dataset_root: str
    out: str
    batch_size: int = 16
    device: str = "cpu"
    include_source_probs: bool = False
    weights: str = "pretrained"       # or "random" (deterministic offline mode)
    strict: bool = False              # fail on undecodable images instead of skipping


def preprocess(image: Image.Image) -> np.ndarray:
    """Resize-shorter-side, center-crop, scale, normalize; returns C x H x W."""
    image = image.convert("RGB")
    w, h = image.size
    scale = RESIZE / min(w, h)
    image = image.resize((round(w * scale), round(h * scale)), Image.BILINEAR)
    w, h = image.size
    left, top = (w - CROP) // 2, (h - CROP) // 2
    image = image.crop((left, top, left + CROP, top + CROP))
    arr = np.asarray(image, dtype=np.float32) / 255.0
    arr = (arr - MEAN) / STD
    return arr.transpose(2, 0, 1)


def scan_dataset(root):
    """(class_names, [(path, class_index)]) with alphabetical class order."""
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    if len(class_dirs) < 2:
        raise DatasetError(f"dataset root {root} needs at least 2 class subdirectories")
    samples = []
    for idx, cdir in enumerate(class_dirs):
        files = sorted(
            p for p in cdir.iterdir()
            if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS
        )
        if not files:
            raise DatasetError(f"class directory {cdir} has no images")
        samples.extend((p, idx) for p in files)
    return [d.name for d in class_dirs], samples


def _load_batch(paths, strict):
    arrays, kept = [], []
    for path, label in paths:
        try:
            with Image.open(path) as img:
                arrays.append(preprocess(img))
            kept.append(label)
        except (OSError, SyntaxError) as exc:
            if strict:
                raise DatasetError(f"cannot decode {path}: {exc}") from exc
            log.warning("skipping undecodable image %s (%s)", path, exc)
    return arrays, kept


def extract(job: ExtractionJob) -> Path:
    """Run the backbone over the dataset and write a bank directory."""
    torch.set_num_threads(1)
    parts = build_backbone(job.model, job.weights)
    device = torch.device(job.device)
    trunk = parts.trunk.to(device)
    head = parts.head.to(device)

    class_names, samples = scan_dataset(job.dataset_root)
    feats, labels, probs = [], [], []
    with torch.no_grad():
        for start in range(0, len(samples), job.batch_size):
            arrays, kept = _load_batch(samples[start:start + job.batch_size], job.strict)
            if not arrays:
                continue
            batch = torch.from_numpy(np.stack(arrays)).to(device)
            f = trunk(batch)
            feats.append(f.cpu().numpy())
            labels.extend(kept)
            if job.include_source_probs:
                probs.append(torch.softmax(head(f), dim=1).cpu().numpy())

    if not labels:
        raise DatasetError(f"no decodable images under {job.dataset_root}")
    features = np.concatenate(feats)
    labels = np.asarray(labels, dtype=np.int64)
    present = {int(c) for c in np.unique(labels)}
    missing = sorted(set(range(len(class_names))) - present)
    if missing:
        raise DatasetError(
            f"class {class_names[missing[0]]!r} lost all its images during extraction"
        )

    out = Path(job.out)
    out.mkdir(parents=True, exist_ok=True)
    source_probs = np.concatenate(probs) if job.include_source_probs else None
    manifest = {
        "model_id": job.model,
        "dataset_id": Path(job.dataset_root).name,
        "n_samples": int(features.shape[0]),
        "feat_dim": int(features.shape[1]),
        "n_classes": len(class_names),
        "has_source_probs": job.include_source_probs,
        "source_dim": int(source_probs.shape[1]) if source_probs is not None else 0,
        "seed": weight_seed(job.model) if job.weights == "random" else 0,
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    # The consumer's manifest schema is closed, so the class-name mapping
    # lives in a sibling file.
    with open(out / "classes.json", "w", encoding="utf-8") as fh:
        json.dump({"class_names": class_names}, fh, indent=2)
        fh.write("\n")
    write_matrix(out / "features.mat", features)
    write_matrix(out / "labels.mat", labels.astype(np.float32).reshape(-1, 1))
    if source_probs is not None:
        write_matrix(out / "source_probs.mat", source_probs)
    return out
