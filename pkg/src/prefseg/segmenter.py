"""Preference-conditioned segmentation and majority-vote aggregation.

Two segmenter variants share one calling convention:

* ``AnalyticParams`` -- a per-pixel sigmoid whose effective intensity
  threshold is shifted linearly by the latent and the feedback embedding.
  Hand-analyzable; the workhorse for experiments.
* ``TrainableParams`` -- a tiny two-layer per-pixel network over
  [pixel features, latent, feedback embedding]; trained by the training
  module with hand-derived gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mixture import LatentSample
from .phantom import PhantomImage


@dataclass(frozen=True)
class AnalyticParams:
    """soft(h, w) = sigmoid((intensity - (w_z.z + w_e.e + bias)) / temperature)."""

    w_z: np.ndarray  # (D,)
    w_e: np.ndarray  # (L,)
    bias: float
    temperature: float

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        object.__setattr__(self, "w_z", np.asarray(self.w_z, dtype=float))
        object.__setattr__(self, "w_e", np.asarray(self.w_e, dtype=float))

    @classmethod
    def default(cls, latent_dim: int = 8, embed_dim: int = 16) -> "AnalyticParams":
        # Only the first latent coordinate steers the threshold; the mixture's
        # remaining dimensions are free capacity.
        w_z = np.zeros(latent_dim)
        w_z[0] = 0.25
        return cls(w_z=w_z, w_e=np.zeros(embed_dim), bias=0.5, temperature=0.05)

    def to_dict(self) -> dict:
        return {
            "variant": "analytic",
            "w_z": self.w_z.tolist(),
            "w_e": self.w_e.tolist(),
            "bias": self.bias,
            "temperature": self.temperature,
        }


@dataclass(frozen=True)
class TrainableParams:
    """Per-pixel two-layer network: [features(3), z(D), e(L)] -> logit."""

    W1: np.ndarray  # (in_dim, hidden)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (hidden,)
    b2: float

    def __post_init__(self):
        for a in (self.W1, self.b1, self.W2):
            if not np.all(np.isfinite(a)):
                raise ValueError("non-finite segmenter weights")

    @classmethod
    def init(
        cls, latent_dim: int, embed_dim: int, hidden: int = 16, seed: int = 0
    ) -> "TrainableParams":
        rng = np.random.default_rng(seed)
        in_dim = 3 + latent_dim + embed_dim
        return cls(
            W1=rng.normal(0, 1.0 / np.sqrt(in_dim), (in_dim, hidden)),
            b1=np.zeros(hidden),
            W2=rng.normal(0, 1.0 / np.sqrt(hidden), hidden),
            b2=0.0,
        )

    def to_dict(self) -> dict:
        return {
            "variant": "trainable",
            "W1": self.W1.tolist(),
            "b1": self.b1.tolist(),
            "W2": self.W2.tolist(),
            "b2": float(self.b2),
        }


SegmenterParams = AnalyticParams | TrainableParams


def segmenter_from_dict(d: dict) -> SegmenterParams:
    if d["variant"] == "analytic":
        return AnalyticParams(
            w_z=np.asarray(d["w_z"]),
            w_e=np.asarray(d["w_e"]),
            bias=float(d["bias"]),
            temperature=float(d["temperature"]),
        )
    if d["variant"] == "trainable":
        return TrainableParams(
            W1=np.asarray(d["W1"]),
            b1=np.asarray(d["b1"]),
            W2=np.asarray(d["W2"]),
            b2=float(d["b2"]),
        )
    raise ValueError(f"unknown segmenter variant {d['variant']!r}")


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def compute_features(image: PhantomImage) -> np.ndarray:
    """Per-pixel [intensity, normalized radial distance, gradient magnitude].

    The radial distance is measured from the intensity-weighted centroid so
    it does not depend on generation metadata.
    """
    I = image.intensities
    H, W = I.shape
    total = I.sum()
    yy, xx = np.mgrid[0:H, 0:W]
    if total > 0:
        cy = float((I * yy).sum() / total)
        cx = float((I * xx).sum() / total)
    else:
        cy, cx = (H - 1) / 2.0, (W - 1) / 2.0
    r = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    r_norm = r / max(np.sqrt(H**2 + W**2), 1.0)
    gy, gx = np.gradient(I)
    grad = np.sqrt(gy**2 + gx**2)
    return np.stack([I, r_norm, grad], axis=-1)


def effective_threshold(
    params: AnalyticParams, z: np.ndarray, e_p: np.ndarray
) -> float:
    return float(params.w_z @ z + params.w_e @ e_p + params.bias)


def predict(
    params: SegmenterParams,
    image: PhantomImage,
    z: LatentSample | np.ndarray,
    e_p: np.ndarray,
    features: np.ndarray | None = None,
) -> np.ndarray:
    """Soft mask in [0, 1] for one latent draw. Deterministic.

    ``features`` may be passed to reuse a precomputed feature map.
    """
    zv = z.z if isinstance(z, LatentSample) else np.asarray(z, dtype=float)
    e_p = np.asarray(e_p, dtype=float)
    if isinstance(params, AnalyticParams):
        if zv.shape != params.w_z.shape or e_p.shape != params.w_e.shape:
            raise ValueError("latent/embedding dimension mismatch")
        t = effective_threshold(params, zv, e_p)
        return sigmoid((image.intensities - t) / params.temperature)
    feats = compute_features(image) if features is None else features
    H, W, F = feats.shape
    in_dim = params.W1.shape[0]
    if F + zv.size + e_p.size != in_dim:
        raise ValueError("latent/embedding dimension mismatch")
    X = np.concatenate(
        [
            feats.reshape(-1, F),
            np.broadcast_to(zv, (H * W, zv.size)),
            np.broadcast_to(e_p, (H * W, e_p.size)),
        ],
        axis=1,
    )
    h = np.maximum(X @ params.W1 + params.b1, 0.0)
    logit = h @ params.W2 + params.b2
    return sigmoid(logit).reshape(H, W)


def predict_batch(
    params: SegmenterParams,
    image: PhantomImage,
    samples: list[LatentSample],
    e_p: np.ndarray,
) -> list[np.ndarray]:
    """predict() for each latent, order preserved."""
    features = (
        compute_features(image) if isinstance(params, TrainableParams) else None
    )
    return [predict(params, image, s, e_p, features=features) for s in samples]


def binarize(soft: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    return (np.asarray(soft) >= threshold).astype(np.uint8)


def aggregate_majority(masks: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Mean soft mask plus strict-majority binarized vote (ties -> background)."""
    if len(masks) == 0:
        raise ValueError("need at least one mask")
    shape = masks[0].shape
    if any(m.shape != shape for m in masks):
        raise ValueError("mask shapes differ")
    stack = np.stack(masks)
    mean_soft = stack.mean(axis=0)
    votes = (stack >= 0.5).sum(axis=0)
    agg = (2 * votes > len(masks)).astype(np.uint8)
    return mean_soft, agg
