"""Server-side aggregation rules for device gradient uploads."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidConfig, TooFewVectors

AGGREGATOR_KINDS = (
    "mean",
    "coord_trimmed",
    "norm_trimmed",
    "coord_median",
    "geo_median",
    "krum",
    "bulyan",
    "mkrum",
)


@dataclass(frozen=True)
class AggregatorSpec:
    """Aggregation rule plus its parameters.

    ``mkrum`` selects like plain krum; the per-device momentum that feeds it
    lives in the simulation loop.
    """

    kind: str = "mean"
    beta: float = 0.0
    f: int = 0
    momentum: float = 0.9
    tol: float = 1e-8
    max_iter: int = 1000

    def __post_init__(self):
        if self.kind not in AGGREGATOR_KINDS:
            raise InvalidConfig(f"unknown aggregator kind {self.kind!r}")
        if not 0.0 <= self.beta < 0.5:
            raise InvalidConfig(f"trim fraction beta must lie in [0, 0.5), got {self.beta}")
        if self.f < 0:
            raise InvalidConfig(f"tolerated byzantine count f must be >= 0, got {self.f}")
        if not 0.0 <= self.momentum < 1.0:
            raise InvalidConfig(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.tol <= 0.0 or self.max_iter < 1:
            raise InvalidConfig("geo_median needs tol > 0 and max_iter >= 1")


def _as_matrix(vectors):
    U = np.asarray(vectors, dtype=float)
    if U.ndim != 2 or U.shape[0] == 0:
        raise TooFewVectors("aggregation needs a non-empty list of equal-length vectors")
    return U


def trim_count(beta: float, m: int) -> int:
    """Entries removed per trimmed side: ceil(beta * m), tolerant of fp noise."""
    if not 0.0 <= beta < 0.5:
        raise InvalidConfig(f"trim fraction beta must lie in [0, 0.5), got {beta}")
    return int(math.ceil(round(beta * m, 12)))


def mean(vectors) -> np.ndarray:
    return _as_matrix(vectors).mean(axis=0)


def coord_trimmed_mean(vectors, beta: float) -> np.ndarray:
    """Per coordinate: sort, drop the ceil(beta*m) smallest and largest, average."""
    U = _as_matrix(vectors)
    m = U.shape[0]
    k = trim_count(beta, m)
    if m - 2 * k < 1:
        raise TooFewVectors(f"trimming {k} per side leaves nothing of {m} vectors")
    if k == 0:
        return U.mean(axis=0)
    return np.sort(U, axis=0)[k : m - k].mean(axis=0)


def norm_trimmed_mean(vectors, beta: float) -> np.ndarray:
    """Drop the ceil(beta*m) vectors of largest Euclidean norm, average the rest."""
    U = _as_matrix(vectors)
    m = U.shape[0]
    k = trim_count(beta, m)
    if m - k < 1:
        raise TooFewVectors(f"trimming {k} vectors leaves nothing of {m}")
    if k == 0:
        return U.mean(axis=0)
    order = np.argsort(np.linalg.norm(U, axis=1), kind="stable")
    return U[order[: m - k]].mean(axis=0)


def coord_median(vectors) -> np.ndarray:
    """Per-coordinate median; central pair averaged for even counts."""
    return np.median(_as_matrix(vectors), axis=0)


def geometric_median(vectors, tol: float = 1e-8, max_iter: int = 1000) -> np.ndarray:
    """Weiszfeld iteration for the minimizer of sum_i ||y - g_i||_2.

    Starts from the mean; an iterate that lands on an input point is nudged
    off it so that the inverse-distance weights stay defined.  Returns the
    last iterate if max_iter is exhausted.
    """
    U = _as_matrix(vectors)
    if U.shape[0] == 1:
        return U[0].copy()
    centroid = U.mean(axis=0)
    scale = max(float(np.linalg.norm(U, axis=1).max()), 1.0)
    y = centroid
    for _ in range(max_iter):
        dist = np.linalg.norm(U - y, axis=1)
        hits = dist < 1e-12 * scale
        if np.any(hits):
            j = int(np.argmax(hits))
            away = centroid - U[j]
            norm = float(np.linalg.norm(away))
            if norm == 0.0:
                return U[j].copy()
            y = U[j] + (1e-6 * scale / norm) * away
            dist = np.linalg.norm(U - y, axis=1)
        weights = 1.0 / dist
        y_next = (weights[:, None] * U).sum(axis=0) / weights.sum()
        if np.linalg.norm(y_next - y) < tol:
            return y_next
        y = y_next
    return y


def _krum_scores(U, f, min_neighbours=0):
    # Sum of squared distances to the m - f - 2 nearest peers.  Small pools
    # inside bulyan keep at least min_neighbours so the scores stay
    # distance-based (an all-zero score vector would make the pick depend on
    # input order).
    m = U.shape[0]
    sq = np.sum((U[:, None, :] - U[None, :, :]) ** 2, axis=2)
    keep = min(max(m - f - 2, min_neighbours), m - 1)
    scores = np.empty(m)
    for i in range(m):
        others = np.sort(np.delete(sq[i], i))
        scores[i] = others[:keep].sum()
    return scores


def krum(vectors, f: int = 0) -> np.ndarray:
    """Return the upload closest (in summed squared distance) to its peers."""
    U = _as_matrix(vectors)
    if f < 0:
        raise InvalidConfig(f"f must be >= 0, got {f}")
    if U.shape[0] < f + 3:
        raise TooFewVectors(f"krum needs at least f + 3 = {f + 3} vectors, got {U.shape[0]}")
    return U[int(np.argmin(_krum_scores(U, f)))].copy()


def krum_index(vectors, f: int = 0) -> int:
    """Index of the vector krum selects (ties to the lowest index)."""
    U = _as_matrix(vectors)
    if U.shape[0] < f + 3:
        raise TooFewVectors(f"krum needs at least f + 3 = {f + 3} vectors, got {U.shape[0]}")
    return int(np.argmin(_krum_scores(U, f)))


def bulyan(vectors, f: int = 0) -> np.ndarray:
    """Krum-select m - 2f uploads, then average the m - 4f values closest to
    the coordinate median of the selection."""
    U = _as_matrix(vectors)
    m = U.shape[0]
    if f < 0:
        raise InvalidConfig(f"f must be >= 0, got {f}")
    if m < 4 * f + 3:
        raise TooFewVectors(f"bulyan needs at least 4f + 3 = {4 * f + 3} vectors, got {m}")
    pool = list(range(m))
    chosen = []
    while len(chosen) < m - 2 * f:
        if len(pool) == 1:
            pick = 0
        else:
            scores = _krum_scores(U[pool], f, min_neighbours=1)
            best = np.flatnonzero(scores == scores.min())
            # exact score ties are structural in tiny pools (mutual nearest
            # neighbours); break them by vector value so the selected set
            # does not depend on input order
            pick = int(min(best, key=lambda j: tuple(U[pool[j]])))
        chosen.append(pool.pop(pick))
    selected = U[chosen]
    median = np.median(selected, axis=0)
    keep = selected.shape[0] - 2 * f
    order = np.argsort(np.abs(selected - median), axis=0, kind="stable")
    return np.take_along_axis(selected, order[:keep], axis=0).mean(axis=0)


def aggregate(spec: AggregatorSpec, vectors) -> np.ndarray:
    """Dispatch to the rule named by the spec."""
    if spec.kind == "mean":
        return mean(vectors)
    if spec.kind == "coord_trimmed":
        return coord_trimmed_mean(vectors, spec.beta)
    if spec.kind == "norm_trimmed":
        return norm_trimmed_mean(vectors, spec.beta)
    if spec.kind == "coord_median":
        return coord_median(vectors)
    if spec.kind == "geo_median":
        return geometric_median(vectors, spec.tol, spec.max_iter)
    if spec.kind == "bulyan":
        return bulyan(vectors, spec.f)
    # krum and mkrum share the selection rule
    return krum(vectors, spec.f)
