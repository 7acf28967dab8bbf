"""K-nearest-neighbour identification with Minkowski distances, and a PCA baseline."""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field

import numpy as np


@dataclass
class KnnConfig:
    K: int = 3
    p: int = 2

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if self.p not in (1, 2, 3):
            raise ValueError("p must be 1, 2 or 3")


@dataclass
class Gallery:
    vectors: np.ndarray  # (n, dim)
    labels: list
    ids: list = field(default_factory=list)

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        self.labels = list(self.labels)
        if not self.ids:
            self.ids = [str(i) for i in range(len(self.labels))]
        if len(self.labels) == 0 or self.vectors.shape[0] == 0:
            raise ValueError("gallery is empty")
        if self.vectors.shape[0] != len(self.labels) or len(self.ids) != len(self.labels):
            raise ValueError("gallery vectors, labels and ids differ in count")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def classes(self) -> list:
        return sorted(set(self.labels), key=_label_key)


@dataclass
class DecisionRecord:
    query_id: str
    label: object
    distance: float  # to the nearest gallery sample of the predicted class
    class_distances: dict  # label -> nearest distance

    def ranked_labels(self) -> list:
        """Classes ordered by nearest distance (ties by label)."""
        return sorted(self.class_distances, key=lambda c: (self.class_distances[c], _label_key(c)))


def _label_key(label):
    # mixed int/str labels still sort deterministically
    return (str(type(label).__name__), label)


def minkowski(a, b, p: int = 2) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float((np.abs(a - b) ** p).sum() ** (1.0 / p))


def distances(query, vectors: np.ndarray, p: int = 2) -> np.ndarray:
    query = np.asarray(query, dtype=float)
    if query.shape[-1] != vectors.shape[1]:
        raise ValueError(f"length mismatch: query {query.shape[-1]} vs gallery {vectors.shape[1]}")
    diff = np.abs(vectors - query)
    if p == 1:
        return diff.sum(axis=1)
    if p == 2:
        return np.sqrt((diff * diff).sum(axis=1))
    return (diff**p).sum(axis=1) ** (1.0 / p)


def knn_classify(query, gallery: Gallery, cfg: KnnConfig = KnnConfig(), query_id: str = "") -> DecisionRecord:
    """Majority vote among the K nearest samples.

    Equal distances keep gallery order (stable sort).  When several labels
    share the top vote count, the one owning the nearest of the K neighbours wins.
    """
    if len(gallery) == 0:
        raise ValueError("gallery is empty")
    if cfg.K > len(gallery):
        raise ValueError(f"K={cfg.K} exceeds gallery size {len(gallery)}")
    d = distances(query, gallery.vectors, cfg.p)
    order = np.argsort(d, kind="stable")[: cfg.K]
    votes = Counter(gallery.labels[i] for i in order)
    top = max(votes.values())
    label = next(gallery.labels[i] for i in order if votes[gallery.labels[i]] == top)
    per_class: dict = {}
    for lab, dist in zip(gallery.labels, d):
        if lab not in per_class or dist < per_class[lab]:
            per_class[lab] = float(dist)
    return DecisionRecord(query_id, label, per_class[label], per_class)


# ---------------------------------------------------------------------------
# PCA


@dataclass
class PcaModel:
    mean: np.ndarray
    basis: np.ndarray  # (dim, m), orthonormal columns
    eigenvalues: np.ndarray

    @property
    def m(self) -> int:
        return self.basis.shape[1]


def pca_train(vectors, m: int | None = None, variance: float = 0.95) -> PcaModel:
    """Top-m principal directions via the Gram-matrix trick.

    With ``m`` None, keeps the fewest components whose eigenvalues cover
    ``variance`` of the total.  ``m`` above nsamples - 1 is clamped with a warning.
    """
    X = np.atleast_2d(np.asarray(vectors, dtype=float))
    n = X.shape[0]
    if n < 2:
        raise ValueError("pca_train needs at least 2 samples")
    mean = X.mean(axis=0)
    A = X - mean
    gram = A @ A.T / (n - 1)
    vals, vecs = np.linalg.eigh(gram)
    order = np.argsort(vals)[::-1]
    vals, vecs = np.clip(vals[order], 0.0, None), vecs[:, order]
    rank_cap = n - 1
    if m is None:
        total = vals.sum()
        if total <= 0:
            m = 1
        else:
            m = int(np.searchsorted(np.cumsum(vals) / total, variance - 1e-12) + 1)
        m = min(m, rank_cap)
    elif m < 1:
        raise ValueError("m must be >= 1")
    elif m > rank_cap:
        warnings.warn(f"m={m} exceeds nsamples-1={rank_cap}; clamped", stacklevel=2)
        m = rank_cap
    vals, vecs = vals[:m], vecs[:, :m]
    # u_i = A^T v_i / sqrt((n-1) lambda_i); null directions dropped from the basis
    basis = A.T @ vecs
    norms = np.linalg.norm(basis, axis=0)
    keep = norms > 1e-12 * max(1.0, norms.max(initial=0.0))
    basis = basis[:, keep] / norms[keep]
    if basis.shape[1] == 0:
        basis = np.zeros((X.shape[1], 0))
    return PcaModel(mean, basis, vals[keep])


def pca_project(model: PcaModel, vector) -> np.ndarray:
    v = np.asarray(vector, dtype=float)
    if v.shape[-1] != model.mean.size:
        raise ValueError(f"length mismatch: {v.shape[-1]} vs model dim {model.mean.size}")
    return (v - model.mean) @ model.basis


def pca_reconstruct(model: PcaModel, coeffs) -> np.ndarray:
    return model.mean + np.asarray(coeffs) @ model.basis.T
