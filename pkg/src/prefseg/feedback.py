"""Feedback encoding and the adaptive mixture-update network.

A click (point, label) becomes an L-dimensional embedding through a
two-layer encoder; the embedding, together with the current mixture
parameters, drives a six-layer network that emits an unconstrained
mixture update (GmmDelta).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nets
from .mixture import GaussianMixture, GmmDelta
from .proposals import FeedbackSignal

RAW_FEATURE_DIM = 12  # 2 normalized coords + 8 sinusoidal + 2 label one-hot
N_ADAPT_LAYERS = 6


@dataclass(frozen=True)
class FeedbackEncoderParams:
    layers: list[np.ndarray]  # two weight layers

    @classmethod
    def init(
        cls,
        embed_dim: int,
        hidden: int = 32,
        seed: int = 0,
        label_gain: float = 4.0,
    ) -> "FeedbackEncoderParams":
        """He-style init; the label columns of the first layer start amplified
        so embeddings of opposite-label clicks are well separated from the
        first gradient step onward (position features can stay subtle, the
        label cannot)."""
        layers = nets.init_mlp([RAW_FEATURE_DIM, hidden, embed_dim], seed)
        layers[0][-2:, :] *= label_gain
        return cls(layers=layers)

    @classmethod
    def zeros(cls, embed_dim: int, hidden: int = 32) -> "FeedbackEncoderParams":
        params = nets.init_mlp([RAW_FEATURE_DIM, hidden, embed_dim], 0)
        return cls(layers=[np.zeros_like(p) for p in params])

    @property
    def embed_dim(self) -> int:
        return self.layers[-1].shape[-1]

    def to_dict(self) -> dict:
        return {"layers": nets.mlp_to_lists(self.layers)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackEncoderParams":
        return cls(layers=nets.mlp_from_lists(d["layers"]))


@dataclass(frozen=True)
class AdaptiveBlockParams:
    """Six weight layers with ReLU in between; output is a flattened GmmDelta."""

    layers: list[np.ndarray]
    n_components: int
    latent_dim: int

    def __post_init__(self):
        if nets.n_layers(self.layers) != N_ADAPT_LAYERS:
            raise ValueError(f"adaptive network must have {N_ADAPT_LAYERS} layers")

    @classmethod
    def init(
        cls,
        embed_dim: int,
        n_components: int,
        latent_dim: int,
        hidden: int = 64,
        seed: int = 0,
        scale: float = 1.0,
    ) -> "AdaptiveBlockParams":
        in_dim = embed_dim + n_components * (2 * latent_dim + 1)
        out_dim = n_components * (2 * latent_dim + 1)
        sizes = [in_dim] + [hidden] * (N_ADAPT_LAYERS - 1) + [out_dim]
        return cls(
            layers=nets.init_mlp(sizes, seed, scale=scale),
            n_components=n_components,
            latent_dim=latent_dim,
        )

    @classmethod
    def zeros(
        cls, embed_dim: int, n_components: int, latent_dim: int, hidden: int = 64
    ) -> "AdaptiveBlockParams":
        base = cls.init(embed_dim, n_components, latent_dim, hidden=hidden, seed=0)
        return cls(
            layers=[np.zeros_like(p) for p in base.layers],
            n_components=n_components,
            latent_dim=latent_dim,
        )

    def to_dict(self) -> dict:
        return {
            "layers": nets.mlp_to_lists(self.layers),
            "n_components": self.n_components,
            "latent_dim": self.latent_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AdaptiveBlockParams":
        return cls(
            layers=nets.mlp_from_lists(d["layers"]),
            n_components=int(d["n_components"]),
            latent_dim=int(d["latent_dim"]),
        )


def feedback_features(signal: FeedbackSignal, height: int, width: int) -> np.ndarray:
    """Raw encoder input: normalized coords, two sinusoidal frequencies per
    axis (sin and cos each), and a label one-hot."""
    h, w = signal.point
    if not (0 <= h < height and 0 <= w < width):
        raise ValueError("feedback point out of bounds")
    u, v = h / height, w / width
    feats = [u, v]
    for coord in (u, v):
        for freq in (1.0, 2.0):
            feats.append(np.sin(2.0 * np.pi * freq * coord))
            feats.append(np.cos(2.0 * np.pi * freq * coord))
    feats.extend([1.0 - signal.label, float(signal.label)])
    return np.asarray(feats, dtype=float)


def encode_feedback(
    signal: FeedbackSignal, height: int, width: int, params: FeedbackEncoderParams
) -> np.ndarray:
    """Deterministic embedding of one feedback signal."""
    x = feedback_features(signal, height, width)
    out, _ = nets.mlp_forward(params.layers, x)
    return out


def flatten_mixture(gmm: GaussianMixture) -> np.ndarray:
    """Unconstrained coordinates fed to the adaptive network."""
    return np.concatenate(
        [gmm.means.ravel(), np.log(gmm.variances).ravel(), np.log(gmm.weights)]
    )


def adapt(
    gmm: GaussianMixture, e_p: np.ndarray, params: AdaptiveBlockParams
) -> GmmDelta:
    """Map (embedding, current mixture state) to a mixture update."""
    M, D = params.n_components, params.latent_dim
    if gmm.n_components != M or gmm.dim != D:
        raise ValueError("mixture shape does not match adaptive network")
    x = np.concatenate([np.asarray(e_p, dtype=float), flatten_mixture(gmm)])
    if x.shape[0] != params.layers[0].shape[0]:
        raise ValueError("embedding dimension mismatch")
    out, _ = nets.mlp_forward(params.layers, x)
    return split_delta(out, M, D)


def split_delta(flat: np.ndarray, M: int, D: int) -> GmmDelta:
    return GmmDelta(
        d_means=flat[: M * D].reshape(M, D),
        d_log_variances=flat[M * D : 2 * M * D].reshape(M, D),
        d_weight_logits=flat[2 * M * D :],
    )
