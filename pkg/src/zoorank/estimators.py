"""Base transferability estimators: H-Score, NCE, LEEP and LogME.

All four are deterministic, use natural logarithms, and return an
:class:`EstimatorScore` where higher means more transferable.  Their
rankings (not absolute values) feed the rank-aggregation supervision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .banks import FeatureBank
from .errors import (
    CapabilityError,
    ConsistencyError,
    DegenerateInputError,
    ShapeError,
    ValidationError,
)

METHODS = ("hscore", "nce", "leep", "logme")


@dataclass(frozen=True)
class EstimatorScore:
    method: str
    value: float
    converged: bool = True


def h_score(features, labels) -> EstimatorScore:
    """tr(pinv(cov(F)) @ cov_between) with frequency-weighted class means.

    Covariances use the unbiased (N-1) normalization; the pseudo-inverse
    truncates singular values below 1e-10 * sigma_max.
    """
    f = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if f.shape[0] != y.shape[0]:
        raise ShapeError(f"features rows {f.shape[0]} != labels length {y.shape[0]}")
    classes = np.unique(y)
    if classes.size < 2:
        raise DegenerateInputError("h_score needs at least 2 classes")
    n = f.shape[0]
    centered = f - f.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    # Replace every row by its class mean; same centering, same normalization.
    g = np.empty_like(f)
    for c in classes:
        mask = y == c
        g[mask] = f[mask].mean(axis=0)
    g -= f.mean(axis=0)
    cov_between = g.T @ g / (n - 1)
    value = float(np.trace(np.linalg.pinv(cov, rcond=1e-10) @ cov_between))
    return EstimatorScore("hscore", value)


def nce(source_pseudo_labels, labels) -> EstimatorScore:
    """Negative conditional entropy -H(Y|Z) from empirical joint counts."""
    z = np.asarray(source_pseudo_labels)
    y = np.asarray(labels)
    if z.shape != y.shape:
        raise ShapeError(f"pseudo-label length {z.shape} != label length {y.shape}")
    n = z.shape[0]
    _, zi = np.unique(z, return_inverse=True)
    _, yi = np.unique(y, return_inverse=True)
    joint = np.zeros((zi.max() + 1, yi.max() + 1))
    np.add.at(joint, (zi, yi), 1.0 / n)
    pz = joint.sum(axis=1, keepdims=True)
    nz = joint > 0
    value = float(np.sum(joint[nz] * np.log(joint[nz] / np.broadcast_to(pz, joint.shape)[nz])))
    return EstimatorScore("nce", min(value, 0.0))


def leep(source_probs, labels) -> EstimatorScore:
    """Log expected empirical prediction via the source head's soft outputs."""
    p = np.asarray(source_probs, dtype=np.float64)
    y = np.asarray(labels)
    if p.shape[0] != y.shape[0]:
        raise ShapeError(f"source_probs rows {p.shape[0]} != labels length {y.shape[0]}")
    if np.abs(p.sum(axis=1) - 1.0).max() > 1e-5:
        raise ValidationError("source_probs rows must sum to 1")
    n = p.shape[0]
    classes, yi = np.unique(y, return_inverse=True)
    onehot = np.zeros((n, classes.size))
    onehot[np.arange(n), yi] = 1.0
    joint = p.T @ onehot / n                      # C_s x C
    pz = joint.sum(axis=1, keepdims=True)
    cond = np.zeros_like(joint)
    nz = pz[:, 0] > 0
    cond[nz] = joint[nz] / pz[nz]
    # per-sample predicted probability of its own label
    pred = p @ cond                               # N x C
    value = float(np.mean(np.log(pred[np.arange(n), yi])))
    return EstimatorScore("leep", min(value, 0.0))


def logme(features, labels, max_iter=100, rtol=1e-6) -> EstimatorScore:
    """Mean per-sample maximum log-evidence of Bayesian linear regression
    onto the one-hot label targets, maximized by the SVD-based fixed point."""
    f = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if f.shape[0] != y.shape[0]:
        raise ShapeError(f"features rows {f.shape[0]} != labels length {y.shape[0]}")
    n, d = f.shape
    if n < 2:
        raise DegenerateInputError("logme needs at least 2 samples")
    classes, yi = np.unique(y, return_inverse=True)
    u, s, _ = np.linalg.svd(f, full_matrices=False)
    sigma = s ** 2
    total = 0.0
    converged = True
    for c in range(classes.size):
        target = (yi == c).astype(np.float64)
        evidence, ok, _ = _logme_column(u, sigma, target, d, max_iter, rtol)
        total += evidence
        converged = converged and ok
    value = total / classes.size
    return EstimatorScore("logme", value, converged=converged)


def logme_evidence_trace(features, labels, max_iter=100, rtol=1e-6):
    """Per-iteration evidence values for every target column (diagnostics)."""
    f = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    classes, yi = np.unique(y, return_inverse=True)
    u, s, _ = np.linalg.svd(f, full_matrices=False)
    sigma = s ** 2
    traces = []
    for c in range(classes.size):
        target = (yi == c).astype(np.float64)
        _, _, trace = _logme_column(u, sigma, target, f.shape[1], max_iter, rtol)
        traces.append(trace)
    return traces


def _logme_column(u, sigma, target, d, max_iter, rtol):
    """Evidence maximization for one regression target.

    Works entirely on the singular spectrum: x holds the projections of the
    target onto the left singular vectors, res_x2 the energy outside the
    column space.
    """
    n = target.shape[0]
    x = u.T @ target
    x2 = x ** 2
    res_x2 = max(float(target @ target - x2.sum()), 0.0)
    tiny = 1e-12

    def stats(alpha, beta):
        # weight vector m has m_i = beta * s_i * x_i / (alpha + beta * sigma_i)
        m2 = float(np.sum(beta ** 2 * sigma * x2 / (alpha + beta * sigma) ** 2))
        res2 = float(np.sum(x2 * (alpha / (alpha + beta * sigma)) ** 2)) + res_x2
        return m2, res2, _evidence(alpha, beta, sigma, m2, res2, n, d)

    alpha, beta = 1.0, 1.0
    m2, res2, ev = stats(alpha, beta)
    trace = [ev]
    ok = False
    for _ in range(max_iter):
        t = alpha / beta
        gamma = float(np.sum(sigma / (sigma + t)))
        new_alpha = gamma / (m2 + tiny)
        new_beta = (n - gamma) / (res2 + tiny)
        # Safeguarded step: the raw fixed point can oscillate around the
        # optimum, so damp toward it until the evidence does not decrease.
        step = 1.0
        for _ in range(40):
            cand_alpha = alpha + step * (new_alpha - alpha)
            cand_beta = beta + step * (new_beta - beta)
            cand = stats(cand_alpha, cand_beta)
            if cand[2] >= ev:
                break
            step *= 0.5
        else:
            ok = True        # no ascent direction left: at the optimum
            break
        converged = (
            abs(cand_alpha - alpha) <= rtol * abs(alpha)
            and abs(cand_beta - beta) <= rtol * abs(beta)
        )
        alpha, beta = cand_alpha, cand_beta
        m2, res2, ev = cand
        trace.append(ev)
        if converged:
            ok = True
            break
    return ev / n, ok, trace


def _evidence(alpha, beta, sigma, m2, res2, n, d):
    # log|A| with A = alpha*I_d + beta * F^T F: the spectrum is
    # alpha + beta*sigma_i on the column space and alpha elsewhere.
    logdet = float(np.sum(np.log(alpha + beta * sigma))) + (d - sigma.size) * np.log(alpha)
    return (
        n / 2.0 * np.log(beta)
        + d / 2.0 * np.log(alpha)
        - n / 2.0 * np.log(2.0 * np.pi)
        - beta / 2.0 * res2
        - alpha / 2.0 * m2
        - logdet / 2.0
    )


def pseudo_labels(source_probs):
    """Argmax pseudo-labels; ties broken toward the lowest class index."""
    return np.argmax(np.asarray(source_probs), axis=1)


def score_bank(bank: FeatureBank, method: str) -> EstimatorScore:
    """Run one estimator on one bank."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    if method == "hscore":
        return h_score(bank.features, bank.labels)
    if method == "logme":
        return logme(bank.features, bank.labels)
    if bank.source_probs is None:
        raise CapabilityError(
            f"bank for model {bank.model_id!r} has no source_probs (needed by {method})",
            model_id=bank.model_id,
        )
    if method == "nce":
        return nce(pseudo_labels(bank.source_probs), bank.labels)
    return leep(bank.source_probs, bank.labels)


def score_zoo(banks, method: str):
    """Score every bank of one task; returns values in input order."""
    banks = list(banks)
    if not banks:
        raise ShapeError("score_zoo needs at least one bank")
    first = banks[0]
    for b in banks[1:]:
        if b.dataset_id != first.dataset_id:
            raise ConsistencyError(
                f"mixed dataset_ids: {first.dataset_id!r} vs {b.dataset_id!r}"
            )
        if b.manifest.n_samples != first.manifest.n_samples or not np.array_equal(
            b.labels, first.labels
        ):
            raise ConsistencyError(f"labels differ between banks (model {b.model_id!r})")
    from .aggregate import ScoreVector

    values = np.array([score_bank(b, method).value for b in banks])
    return ScoreVector(values=values, method_tag=method)
