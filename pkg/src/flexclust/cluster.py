"""Standardisation, restarted Lloyd k-means and cluster labelling."""

from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, ContractError, InvariantError
from .features import FeatureVector, attribute_names

logger = logging.getLogger(__name__)

DEFAULT_K = 4
DEFAULT_RESTARTS = 50
DEFAULT_MAX_ITER = 300
DEFAULT_TOL = 1e-9

LABELS = ("high_usage", "high_variability", "stable_low", "mid")
USAGE, VARIABILITY = 0, 1  # attribute columns used by the labelling rule


@dataclass(frozen=True)
class StandardizationParams:
    names: tuple[str, ...]
    means: np.ndarray
    sds: np.ndarray
    constant: tuple[bool, ...]
    enabled: bool = True

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.means) / self.sds

    def inverse(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) * self.sds + self.means


def standardize_matrix(
    x: np.ndarray, names: Sequence[str] | None = None, enabled: bool = True
) -> tuple[np.ndarray, StandardizationParams]:
    """Z-score each column with the population sd.

    A constant column is only centred (divisor 1) and flagged. With
    ``enabled=False`` the transform is the identity.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ContractError("expected a 2-D array of points")
    d = x.shape[1]
    names = tuple(names) if names is not None else tuple(f"x{i}" for i in range(d))
    if not enabled:
        params = StandardizationParams(names, np.zeros(d), np.ones(d), (False,) * d, enabled=False)
        return x.copy(), params
    means = x.mean(axis=0)
    sds = x.std(axis=0)
    constant = tuple(bool(s == 0) for s in sds)
    sds = np.where(sds == 0, 1.0, sds)
    params = StandardizationParams(names, means, sds, constant)
    return params.transform(x), params


def standardize(
    features: Sequence[FeatureVector], mode: str, k: int = DEFAULT_K, enabled: bool = True
) -> tuple[np.ndarray, list[str], StandardizationParams]:
    """Feature vectors to standardised points, sorted by household id."""
    if len(features) < k:
        raise ConfigError(f"need at least k={k} households to cluster, got {len(features)}")
    ordered = sorted(features, key=lambda f: f.household_id)
    x = np.array([f.attributes(mode) for f in ordered], dtype=np.float64)
    z, params = standardize_matrix(x, attribute_names(mode), enabled)
    return z, [f.household_id for f in ordered], params


@dataclass(frozen=True, eq=False)
class ClusterModel:
    k: int
    centroids: np.ndarray  # (k, d) in the space the points were given in
    labels_: np.ndarray  # cluster index per point, in input order
    household_ids: tuple[str, ...]
    wcss: float
    seed: int
    restarts: int = 1
    iterations_used: int = 0
    wcss_history: tuple[float, ...] = ()
    labels: dict[int, str] = field(default_factory=dict)

    @property
    def assignments(self) -> dict[str, int]:
        return dict(zip(self.household_ids, self.labels_.tolist()))


def squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def assign(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # argmin takes the first minimum, so ties go to the lowest cluster index
    return np.argmin(squared_distances(points, centroids), axis=1)


def compute_wcss(points: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    diff = points - centroids[labels]
    return float(np.einsum("nd,nd->", diff, diff))


def _centroids(points: np.ndarray, labels: np.ndarray, k: int, old: np.ndarray) -> np.ndarray:
    out = old.copy()
    for j in range(k):
        members = points[labels == j]
        if len(members):
            out[j] = members.mean(axis=0)
    return out


def _repair_empty(points: np.ndarray, labels: np.ndarray, centroids: np.ndarray, k: int) -> np.ndarray:
    """Move the point farthest from its centroid into each empty cluster."""
    labels = labels.copy()
    for j in range(k):
        counts = np.bincount(labels, minlength=k)
        if counts[j]:
            continue
        dist = np.einsum("nd,nd->n", points - centroids[labels], points - centroids[labels])
        dist[counts[labels] <= 1] = -1.0  # never empty another cluster
        labels[int(np.argmax(dist))] = j
    return labels


def _n_distinct(points: np.ndarray) -> int:
    return len(np.unique(points, axis=0))


def _init_centroids(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    chosen: list[np.ndarray] = []
    for i in rng.permutation(len(points)):
        p = points[i]
        if not any(np.array_equal(p, c) for c in chosen):
            chosen.append(p)
            if len(chosen) == k:
                break
    return np.array(chosen, dtype=np.float64)


def _id_order(n: int, ids: Sequence[str] | None) -> tuple[np.ndarray, tuple[str, ...]]:
    if ids is None:
        ids = tuple(str(i) for i in range(n))
        return np.arange(n), ids
    ids = tuple(ids)
    if len(ids) != n or len(set(ids)) != n:
        raise ContractError("ids must be unique and match the number of points")
    return np.array(sorted(range(n), key=ids.__getitem__), dtype=np.int64), ids


def _lloyd(points: np.ndarray, k: int, seed: int, max_iter: int, tol: float):
    rng = np.random.default_rng(seed)
    centroids = _init_centroids(points, k, rng)
    labels = _repair_empty(points, assign(points, centroids), centroids, k)
    history: list[float] = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        centroids = _centroids(points, labels, k, centroids)
        wcss = compute_wcss(points, centroids, labels)
        if history and wcss > history[-1] * (1 + 1e-12) + 1e-300:
            raise InvariantError(f"wcss increased from {history[-1]!r} to {wcss!r} at iteration {iterations}")
        prev = history[-1] if history else None
        history.append(wcss)
        new = assign(points, centroids)
        if np.array_equal(new, labels):
            break
        if prev is not None and (prev - wcss) <= tol * prev:
            break
        labels = _repair_empty(points, new, centroids, k)
    # final assignment step so every point sits with its nearest centroid
    labels = assign(points, centroids)
    wcss = compute_wcss(points, centroids, labels)
    if wcss > history[-1] * (1 + 1e-12) + 1e-300:
        raise InvariantError("wcss increased in the final assignment step")
    if wcss != history[-1]:
        history.append(wcss)
    return centroids, labels, wcss, iterations, tuple(history)


def kmeans_once(
    points: np.ndarray,
    k: int = DEFAULT_K,
    seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    ids: Sequence[str] | None = None,
) -> ClusterModel:
    """One seeded run of Lloyd's algorithm.

    Initial centroids are k distinct points sampled without replacement,
    where sampling runs over the points sorted by ``ids``; the result
    therefore depends on ids and seed, not on the order points are given in.
    wcss is checked to be non-increasing at every iteration.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or len(points) == 0:
        raise ContractError("points must be a non-empty 2-D array")
    if k < 1:
        raise ConfigError("k must be at least 1")
    if max_iter < 1:
        raise ConfigError("max_iter must be at least 1")
    n_distinct = _n_distinct(points)
    if k > n_distinct:
        raise ConfigError(f"k={k} exceeds the number of distinct points ({n_distinct})")
    order, ids = _id_order(len(points), ids)
    centroids, sorted_labels, wcss, iters, history = _lloyd(points[order], k, seed, max_iter, tol)
    labels = np.empty(len(points), dtype=np.int64)
    labels[order] = sorted_labels
    return ClusterModel(k, centroids, labels, ids, wcss, seed, 1, iters, history)


def kmeans_best(
    points: np.ndarray,
    k: int = DEFAULT_K,
    restarts: int = DEFAULT_RESTARTS,
    base_seed: int = 0,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    ids: Sequence[str] | None = None,
    threads: int = 1,
    return_candidates: bool = False,
):
    """Run ``restarts`` seeded k-means and keep the lowest wcss (ties: lowest seed)."""
    if restarts < 1:
        raise ConfigError("restarts must be at least 1")
    seeds = range(base_seed, base_seed + restarts)

    def run(seed: int) -> ClusterModel:
        return kmeans_once(points, k, seed, max_iter, tol, ids)

    if threads > 1 and restarts > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            candidates = list(pool.map(run, seeds))
    else:
        candidates = [run(s) for s in seeds]
    best = min(candidates, key=lambda m: (m.wcss, m.seed))
    best = replace(best, restarts=restarts)
    logger.info("k-means: best wcss %.6g from seed %d over %d restarts", best.wcss, best.seed, restarts)
    if return_candidates:
        return best, candidates
    return best


def label_centroids(centroids_original: np.ndarray) -> dict[int, str]:
    """Name four centroids given in original units.

    Order of assignment: high_variability (max sd of time-of-max), then
    high_usage (max mean evening power among the rest), then stable_low (min
    of min-max normalised usage + sd among the rest), then mid. Ties go to
    the lowest cluster index.
    """
    c = np.asarray(centroids_original, dtype=np.float64)
    if c.shape[0] != 4:
        raise ContractError("labelling needs exactly four centroids")
    usage, sd = c[:, USAGE], c[:, VARIABILITY]

    def normalised(v):
        span = v.max() - v.min()
        return (v - v.min()) / span if span > 0 else np.zeros_like(v)

    score = normalised(usage) + normalised(sd)
    remaining = list(range(4))
    labels: dict[int, str] = {}

    def take(values, name, pick_max):
        best = remaining[0]
        for j in remaining[1:]:
            if (values[j] > values[best]) if pick_max else (values[j] < values[best]):
                best = j
        labels[best] = name
        remaining.remove(best)

    take(sd, "high_variability", True)
    take(usage, "high_usage", True)
    take(score, "stable_low", False)
    labels[remaining[0]] = "mid"
    return dict(sorted(labels.items()))


def label_clusters(model: ClusterModel, params: StandardizationParams) -> ClusterModel:
    if model.k != 4:
        warnings.warn(f"labelling skipped: k={model.k}, rule needs k=4", stacklevel=2)
        logger.warning("labelling skipped for k=%d", model.k)
        return replace(model, labels={})
    return replace(model, labels=label_centroids(params.inverse(model.centroids)))


def _num(x: float) -> float:
    return float(f"{float(x):.9g}")


def cluster_document(model: ClusterModel, params: StandardizationParams) -> dict:
    """The clusters JSON document; key order is part of the format."""
    original = params.inverse(model.centroids)
    assignments = sorted(model.assignments.items())
    return {
        "k": model.k,
        "seed": model.seed,
        "restarts": model.restarts,
        "wcss": _num(model.wcss),
        "iterations_used": model.iterations_used,
        "standardization": {
            "enabled": params.enabled,
            "attributes": list(params.names),
            "means": [_num(v) for v in params.means],
            "sds": [_num(v) for v in params.sds],
            "constant": list(params.constant),
        },
        "centroids": {
            "standardized": [[_num(v) for v in row] for row in model.centroids],
            "original": [[_num(v) for v in row] for row in original],
        },
        "labels": {str(j): model.labels[j] for j in sorted(model.labels)},
        "assignments": [
            {"household_id": hid, "cluster": c, "label": model.labels.get(c)}
            for hid, c in assignments
        ],
    }


def write_clusters_json(model: ClusterModel, params: StandardizationParams, path: str | Path) -> None:
    doc = cluster_document(model, params)
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def read_clusters_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
