"""Clustering candidate masks into correction proposals and sampling feedback."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rle
from .phantom import PhantomImage
from .segmenter import binarize


@dataclass(frozen=True)
class CorrectionProposal:
    cluster_id: int
    representative_soft: np.ndarray
    representative_binary: np.ndarray
    diff: np.ndarray  # {-1, 0, +1}: add / keep / remove vs the aggregate
    member_count: int

    def to_dict(self) -> dict:
        return {
            "cluster_id": self.cluster_id,
            "member_count": self.member_count,
            "representative_rle": rle.encode(self.representative_binary),
            "add_rle": rle.encode((self.diff > 0).astype(np.uint8)),
            "remove_rle": rle.encode((self.diff < 0).astype(np.uint8)),
        }


@dataclass(frozen=True)
class DiffPointSet:
    points: list[tuple[int, int]]
    scores: list[float]


@dataclass(frozen=True)
class FeedbackSignal:
    point: tuple[int, int]
    label: int  # 1 foreground, 0 background

    def to_dict(self) -> dict:
        return {"point": list(self.point), "label": int(self.label)}


def _pairwise_sq(X: np.ndarray, centers: np.ndarray, x2: np.ndarray) -> np.ndarray:
    d2 = x2[:, None] - 2.0 * (X @ centers.T) + np.sum(centers**2, axis=1)[None, :]
    return np.maximum(d2, 0.0)


def _lloyd(
    X: np.ndarray, K: int, rng: np.random.Generator, max_iter: int, tol: float
) -> tuple[np.ndarray, float]:
    """One k-means++ seeded Lloyd run; returns labels and final inertia."""
    N = X.shape[0]
    x2 = np.sum(X**2, axis=1)
    # k-means++ seeding
    centers = np.empty((K, X.shape[1]))
    first = int(rng.integers(N))
    centers[0] = X[first]
    closest = _pairwise_sq(X, centers[:1], x2)[:, 0]
    for k in range(1, K):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(N))
        else:
            idx = int(rng.choice(N, p=closest / total))
        centers[k] = X[idx]
        closest = np.minimum(closest, _pairwise_sq(X, centers[k : k + 1], x2)[:, 0])
    prev_labels = None
    labels = np.zeros(N, dtype=int)
    for _ in range(max_iter):
        d2 = _pairwise_sq(X, centers, x2)
        labels = np.argmin(d2, axis=1)  # ties resolve to the lowest index
        new_centers = centers.copy()
        for k in range(K):
            members = labels == k
            if members.any():
                new_centers[k] = X[members].mean(axis=0)
            else:
                # repair: steal the point farthest from its own centroid
                far = int(np.argmax(d2[np.arange(N), labels]))
                new_centers[k] = X[far]
                labels[far] = k
                for kk in range(K):
                    m = labels == kk
                    if m.any():
                        new_centers[kk] = X[m].mean(axis=0)
        shift = np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max()
        centers = new_centers
        if shift < tol or (
            prev_labels is not None and np.array_equal(labels, prev_labels)
        ):
            break
        prev_labels = labels
    d2 = _pairwise_sq(X, centers, x2)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(N), labels].sum())
    return labels, inertia


def kmeans_masks(
    masks: list[np.ndarray],
    K: int,
    seed: int,
    max_iter: int = 100,
    tol: float = 1e-6,
    n_init: int = 4,
) -> list[list[int]]:
    """Cluster flattened soft masks with seeded k-means++; deterministic.

    Returns K index lists (disjoint, covering 0..N-1), best of ``n_init``
    restarts by within-cluster sum of squares.
    """
    N = len(masks)
    if K < 1 or K > N:
        raise ValueError("need 1 <= K <= N")
    X = np.stack([np.asarray(m, dtype=float).reshape(-1) for m in masks])
    if K == 1:
        return [list(range(N))]
    rng = np.random.default_rng(seed)
    best_labels, best_inertia = None, np.inf
    for _ in range(n_init):
        labels, inertia = _lloyd(X, K, rng, max_iter, tol)
        if inertia < best_inertia - 1e-12:
            best_labels, best_inertia = labels, inertia
    # every cluster must come back non-empty (degenerate all-identical input
    # collapses assignments); donate from the largest clusters
    counts = np.bincount(best_labels, minlength=K)
    for k in range(K):
        if counts[k] == 0:
            donor = int(np.argmax(counts))
            idx = int(np.flatnonzero(best_labels == donor)[-1])
            best_labels[idx] = k
            counts[donor] -= 1
            counts[k] += 1
    return [list(np.flatnonzero(best_labels == k)) for k in range(K)]


def representative(cluster_masks: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel mean soft mask plus strict-majority vote of binarized members."""
    if len(cluster_masks) == 0:
        raise ValueError("empty cluster")
    stack = np.stack(cluster_masks)
    soft = stack.mean(axis=0)
    votes = (stack >= 0.5).sum(axis=0)
    binary = (2 * votes > len(cluster_masks)).astype(np.uint8)
    return soft, binary


def make_proposals(
    representatives: list[tuple[np.ndarray, np.ndarray]],
    agg_binary: np.ndarray,
    member_counts: list[int] | None = None,
) -> list[CorrectionProposal]:
    """Signed pixel differences of each representative against the aggregate."""
    out = []
    for k, (soft, binary) in enumerate(representatives):
        if binary.shape != agg_binary.shape:
            raise ValueError("shape mismatch")
        diff = binary.astype(np.int8) - agg_binary.astype(np.int8)
        out.append(
            CorrectionProposal(
                cluster_id=k,
                representative_soft=soft,
                representative_binary=binary,
                diff=diff,
                member_count=member_counts[k] if member_counts else 0,
            )
        )
    return out


def diff_points(
    rep_soft: np.ndarray, agg_soft: np.ndarray, quantile: float = 0.9
) -> DiffPointSet:
    """Pixels where the representative diverges most from the aggregate.

    Keeps every pixel whose |soft difference| reaches the q-quantile of the
    nonzero scores (quantile ties included). Identical masks degenerate to
    all pixels with zero scores.
    """
    if rep_soft.shape != agg_soft.shape:
        raise ValueError("shape mismatch")
    if not 0.0 <= quantile < 1.0:
        raise ValueError("quantile must lie in [0, 1)")
    score = np.abs(np.asarray(rep_soft, dtype=float) - np.asarray(agg_soft, dtype=float))
    nonzero = score[score > 0]
    if nonzero.size == 0:
        pts = [(int(h), int(w)) for h, w in np.ndindex(score.shape)]
        return DiffPointSet(points=pts, scores=[0.0] * len(pts))
    thr = float(np.quantile(nonzero, quantile))
    hs, ws = np.nonzero(score >= thr)
    return DiffPointSet(
        points=[(int(h), int(w)) for h, w in zip(hs, ws)],
        scores=[float(score[h, w]) for h, w in zip(hs, ws)],
    )


def sample_feedback(
    pdiff: DiffPointSet, rep_binary: np.ndarray, rng_seed: int
) -> FeedbackSignal:
    """Uniform seeded point from the divergence set, labeled by the representative."""
    if len(pdiff.points) == 0:
        raise ValueError("empty divergence point set")
    rng = np.random.default_rng(rng_seed)
    point = pdiff.points[int(rng.integers(len(pdiff.points)))]
    return FeedbackSignal(point=point, label=int(rep_binary[point]))


def initial_feedback(
    image: PhantomImage, rng_seed: int, reference: np.ndarray | None = None
) -> FeedbackSignal:
    """Cold-start signal: a uniform random pixel.

    The label comes from the reference mask when one is available (training
    and simulation); otherwise it defaults to background.
    """
    rng = np.random.default_rng(rng_seed)
    point = (int(rng.integers(image.height)), int(rng.integers(image.width)))
    label = int(reference[point]) if reference is not None else 0
    return FeedbackSignal(point=point, label=label)


def build_proposals(
    soft_masks: list[np.ndarray], agg_binary: np.ndarray, K: int, seed: int
) -> list[CorrectionProposal]:
    """Full pipeline: cluster, take representatives, diff against the aggregate."""
    clusters = kmeans_masks(soft_masks, K, seed)
    reps = [representative([soft_masks[i] for i in idx]) for idx in clusters]
    return make_proposals(reps, agg_binary, member_counts=[len(c) for c in clusters])
