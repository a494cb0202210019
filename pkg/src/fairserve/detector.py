"""Epoch bias detector: PCA (4 -> 3) followed by logistic regression.

The detector is fitted once, offline, on issue vectors labelled by a
synthetic rater, and is then used read-only during training.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateData, FormatVersionError, SingleClass
from .metrics import IssueScoreVector, total_issue_scalar

N_COMPONENTS = 3
CHECKPOINT_HEADER = "fairserve-detector"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray              # (4,)
    components: np.ndarray        # (3, 4), orthonormal rows
    explained_variance: np.ndarray  # (3,), non-increasing
    total_variance: float = float("nan")


@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray  # (3,)
    bias_term: float
    threshold: float = 0.5


@dataclass(frozen=True)
class LabeledEpoch:
    issue_vector: IssueScoreVector
    label: int

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


def oracle_label(v: IssueScoreVector, threshold: float, noise_rate: float,
                 rng: np.random.Generator | None = None,
                 reduction: str = "mean") -> int:
    """Synthetic rater: biased iff the issue scalar exceeds `threshold`.

    The verdict is flipped with probability `noise_rate`. One uniform is
    drawn per call whenever an rng is supplied, so label streams stay
    aligned across noise settings.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    if not 0.0 <= noise_rate < 0.5:
        raise ValueError("noise_rate must lie in [0, 0.5)")
    label = int(total_issue_scalar(v, reduction) > threshold)
    if rng is not None:
        if rng.random() < noise_rate:
            label = 1 - label
    elif noise_rate > 0:
        raise ValueError("noise_rate > 0 needs an rng")
    return label


def fit_pca(data, n_components: int = N_COMPONENTS, rank_tol: float = 1e-12) -> PcaModel:
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[1] != 4:
        raise ValueError("expected an (n, 4) array")
    if x.shape[0] < 4:
        raise DegenerateData(f"need at least 4 samples, got {x.shape[0]}")
    mean = x.mean(axis=0)
    cov = np.cov(x - mean, rowvar=False)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    top = max(evals[0], 0.0)
    if top == 0.0 or evals[n_components - 1] <= rank_tol * top:
        raise DegenerateData(
            f"covariance rank below {n_components}; eigenvalues {evals.tolist()}. "
            "Add small isotropic jitter (see jitter_data) or supply more varied epochs.")
    comps = evecs[:, :n_components].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    return PcaModel(mean, comps, evals[:n_components].copy(), float(np.trace(cov)))


def jitter_data(data, scale: float, rng: np.random.Generator) -> np.ndarray:
    """Isotropic Gaussian padding for rank-deficient PCA input."""
    x = np.asarray(data, dtype=float)
    return x + scale * rng.standard_normal(x.shape)


def project(m: PcaModel, v) -> np.ndarray:
    """Project one 4-vector or an (n, 4) batch."""
    if isinstance(v, IssueScoreVector):
        v = v.as_array()
    return (np.asarray(v, dtype=float) - m.mean) @ m.components.T


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def logistic_loss(w, b, x, y) -> float:
    """Summed cross-entropy of labels `y` against sigmoid(x @ w + b)."""
    z = np.asarray(x) @ w + b
    # log(1 + e^z) - y z, evaluated stably
    return float(np.sum(np.logaddexp(0.0, z) - y * z))


def logistic_grad(w, b, x, y) -> tuple[np.ndarray, float]:
    x = np.asarray(x)
    err = sigmoid(x @ w + b) - y
    return x.T @ err, float(err.sum())


def fit_logistic(x, y, lr: float = 0.1, iters: int = 2000, threshold: float = 0.5,
                 standardize: bool = True, losses: list | None = None) -> LogisticModel:
    """Full-batch gradient descent on the cross-entropy.

    Steps use the per-sample mean gradient. With `standardize`, descent runs
    on z-scored features and the result is mapped back to raw-feature
    weights, which leaves predictions unchanged but conditions the problem.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("expected a non-empty (n, d) feature array")
    if np.all(y == y[0]):
        raise SingleClass(f"all {len(y)} labels equal {int(y[0])}")
    mu = x.mean(axis=0) if standardize else np.zeros(x.shape[1])
    sd = x.std(axis=0) if standardize else np.ones(x.shape[1])
    sd = np.where(sd > 0, sd, 1.0)
    z = (x - mu) / sd
    n = len(z)
    w = np.zeros(z.shape[1])
    b = 0.0
    for _ in range(iters):
        if losses is not None:
            losses.append(logistic_loss(w, b, z, y))
        gw, gb = logistic_grad(w, b, z, y)
        w = w - lr * gw / n
        b = b - lr * gb / n
    raw_w = w / sd
    raw_b = b - float(raw_w @ mu)
    return LogisticModel(raw_w, raw_b, threshold)


def predict(pca: PcaModel, model: LogisticModel, v) -> tuple[float, bool]:
    p = float(sigmoid(np.atleast_1d(model.weights @ project(pca, v) + model.bias_term))[0])
    return p, p > model.threshold


def predict_batch(pca: PcaModel, model: LogisticModel, vs) -> np.ndarray:
    return sigmoid(project(pca, np.asarray(vs)) @ model.weights + model.bias_term)


@dataclass(frozen=True)
class Detector:
    pca: PcaModel
    model: LogisticModel

    def predict(self, v) -> tuple[float, bool]:
        return predict(self.pca, self.model, v)

    def is_biased(self, v) -> bool:
        return self.predict(v)[1]


def fit_detector(vectors, labels, lr: float = 0.1, iters: int = 2000,
                 threshold: float = 0.5) -> Detector:
    vectors = np.asarray(vectors, dtype=float)
    labels = np.asarray(labels)
    if np.all(labels == labels[0]):
        raise SingleClass(f"all {len(labels)} labels equal {int(labels[0])}")
    pca = fit_pca(vectors)
    model = fit_logistic(project(pca, vectors), labels, lr, iters, threshold)
    return Detector(pca, model)


def _fmt(values) -> str:
    return " ".join(format(float(v), ".17g") for v in np.ravel(values))


def save_detector(det: Detector, path) -> None:
    lines = [
        f"{CHECKPOINT_HEADER} v{CHECKPOINT_VERSION}",
        "mean " + _fmt(det.pca.mean),
        "components " + _fmt(det.pca.components),
        "explained_variance " + _fmt(det.pca.explained_variance),
        "total_variance " + _fmt([det.pca.total_variance]),
        "weights " + _fmt(det.model.weights),
        "bias " + _fmt([det.model.bias_term]),
        "threshold " + _fmt([det.model.threshold]),
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_detector(path) -> Detector:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != f"{CHECKPOINT_HEADER} v{CHECKPOINT_VERSION}":
        head = lines[0] if lines else "<empty>"
        raise FormatVersionError(f"{path}: unsupported detector header {head!r}")
    fields = {}
    for line in lines[1:]:
        if line.strip():
            key, *vals = line.split()
            fields[key] = np.array([float(v) for v in vals])
    try:
        pca = PcaModel(fields["mean"], fields["components"].reshape(3, 4),
                       fields["explained_variance"], float(fields["total_variance"][0]))
        model = LogisticModel(fields["weights"], float(fields["bias"][0]),
                              float(fields["threshold"][0]))
    except KeyError as e:
        raise FormatVersionError(f"{path}: missing field {e}") from None
    return Detector(pca, model)
