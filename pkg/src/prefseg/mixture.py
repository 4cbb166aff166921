"""Diagonal Gaussian mixture used as the preference distribution.

All operations are pure: they never mutate their inputs and randomness
enters only through explicit seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

VARIANCE_FLOOR = 1e-6
# trust region for adapted states; see apply_delta
MEAN_BOUND = 1.5
LOG_VARIANCE_BOUNDS = (np.log(VARIANCE_FLOOR), np.log(4.0))
_SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class GaussianMixture:
    """Mixture of diagonal Gaussians over a flat latent space.

    Attributes:
        means: component means, shape ``(M, D)``.
        variances: diagonal variances, shape ``(M, D)``, entries >= floor.
        weights: mixing weights on the simplex, shape ``(M,)``.
    """

    means: np.ndarray
    variances: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=float)
        variances = np.asarray(self.variances, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if means.ndim != 2:
            raise ValueError("means must be (M, D)")
        M, D = means.shape
        if variances.shape != (M, D):
            raise ValueError("variances shape mismatch")
        if weights.shape != (M,):
            raise ValueError("weights shape mismatch")
        if not np.all(np.isfinite(means)) or not np.all(np.isfinite(variances)):
            raise ValueError("non-finite mixture parameters")
        if np.any(variances < VARIANCE_FLOOR):
            raise ValueError("variance below floor")
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > _SIMPLEX_TOL:
            raise ValueError("weights must be strictly positive and sum to 1")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)
        object.__setattr__(self, "weights", weights)

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_dict(self) -> dict:
        return {
            "M": self.n_components,
            "D": self.dim,
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianMixture":
        gmm = cls(
            means=np.asarray(d["means"], dtype=float),
            variances=np.asarray(d["variances"], dtype=float),
            weights=np.asarray(d["weights"], dtype=float),
        )
        if gmm.n_components != d["M"] or gmm.dim != d["D"]:
            raise ValueError("declared M/D do not match arrays")
        return gmm


@dataclass(frozen=True)
class LatentSample:
    """One draw from the preference mixture."""

    z: np.ndarray
    component_id: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))


@dataclass(frozen=True)
class GmmDelta:
    """Additive update to mixture parameters, in unconstrained coordinates."""

    d_means: np.ndarray
    d_log_variances: np.ndarray
    d_weight_logits: np.ndarray

    def __post_init__(self):
        d_means = np.asarray(self.d_means, dtype=float)
        d_logv = np.asarray(self.d_log_variances, dtype=float)
        d_wl = np.asarray(self.d_weight_logits, dtype=float)
        for a in (d_means, d_logv, d_wl):
            if not np.all(np.isfinite(a)):
                raise ValueError("non-finite delta entries")
        if d_means.shape != d_logv.shape or d_wl.shape != (d_means.shape[0],):
            raise ValueError("delta shapes inconsistent")
        object.__setattr__(self, "d_means", d_means)
        object.__setattr__(self, "d_log_variances", d_logv)
        object.__setattr__(self, "d_weight_logits", d_wl)

    @classmethod
    def zeros(cls, M: int, D: int) -> "GmmDelta":
        return cls(np.zeros((M, D)), np.zeros((M, D)), np.zeros(M))


def init_uniform(M: int, D: int, seed: int) -> GaussianMixture:
    """Equal weights, unit variances, means spread deterministically in [-1, 1]^D.

    Each coordinate gets an evenly spaced grid of M values in a seeded
    per-dimension permutation, so components never coincide for M > 1.
    """
    if M < 1 or D < 1:
        raise ValueError("M and D must be positive")
    rng = np.random.default_rng(seed)
    if M == 1:
        means = np.zeros((1, D))
    else:
        grid = np.linspace(-1.0, 1.0, M)
        means = np.stack([rng.permutation(grid) for _ in range(D)], axis=1)
    return GaussianMixture(
        means=means,
        variances=np.ones((M, D)),
        weights=np.full(M, 1.0 / M),
    )


def sample(gmm: GaussianMixture, N: int, rng_seed: int) -> list[LatentSample]:
    """Draw N latents: pick a component by weight, then a diagonal Gaussian draw."""
    if N < 1:
        raise ValueError("N must be positive")
    rng = np.random.default_rng(rng_seed)
    comps = rng.choice(gmm.n_components, size=N, p=gmm.weights)
    eps = rng.standard_normal((N, gmm.dim))
    zs = gmm.means[comps] + np.sqrt(gmm.variances[comps]) * eps
    return [LatentSample(z=zs[i], component_id=int(comps[i])) for i in range(N)]


def component_log_densities(gmm: GaussianMixture, z: np.ndarray) -> np.ndarray:
    """log N(z | mu_m, diag(var_m)) for every component, shape (M,)."""
    z = np.asarray(z, dtype=float)
    if z.shape != (gmm.dim,):
        raise ValueError(f"z must have dimension {gmm.dim}")
    diff = z[None, :] - gmm.means
    return -0.5 * np.sum(
        diff * diff / gmm.variances + np.log(2.0 * np.pi * gmm.variances), axis=1
    )


def log_density(gmm: GaussianMixture, z: np.ndarray) -> float:
    """log p(z) under the mixture, stabilized with log-sum-exp."""
    comp = component_log_densities(gmm, z)
    return float(logsumexp(comp + np.log(gmm.weights)))


def responsibilities(gmm: GaussianMixture, z: np.ndarray) -> np.ndarray:
    """Posterior component-membership probabilities for z; sums to 1."""
    logp = component_log_densities(gmm, z) + np.log(gmm.weights)
    logp -= logsumexp(logp)
    r = np.exp(logp)
    return r / r.sum()


def apply_delta(gmm: GaussianMixture, delta: GmmDelta, step: float) -> GaussianMixture:
    """Apply an unconstrained-parameter update, preserving all invariants.

    Means move additively, variances through log space, weights through
    logits and softmax. Means and log-variances are clipped to a fixed
    trust region (MEAN_BOUND, LOG_VARIANCE_BOUNDS): the update network is
    only ever trained on states near the origin, and an unbounded sequence
    of its own updates can otherwise drive the state into regions where
    its extrapolation feeds back on itself.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    if delta.d_means.shape != gmm.means.shape:
        raise ValueError("delta shape mismatch")
    means = np.clip(gmm.means + step * delta.d_means, -MEAN_BOUND, MEAN_BOUND)
    variances = np.exp(
        np.clip(np.log(gmm.variances) + step * delta.d_log_variances, *LOG_VARIANCE_BOUNDS)
    )
    logits = np.log(gmm.weights) + step * delta.d_weight_logits
    logits -= logits.max()
    w = np.exp(logits)
    weights = w / w.sum()
    return GaussianMixture(means=means, variances=variances, weights=weights)
