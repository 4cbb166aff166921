"""Two-stage alternating training with hand-derived gradients.

Stage one updates the trainable segmenter by cross-entropy on the
aggregated soft prediction. Stage two freezes the segmenter and updates
the feedback encoder, the adaptive network, and the mixture means and
log-variances through a simulated feedback round; mixture weights get a
separate MSE step on component-responsibility vectors.

The hard majority vote has zero gradient, so all losses differentiate the
soft aggregate; binarization stays an inference-time view.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nets, proposals
from .clinician import select_proposal
from .feedback import (
    AdaptiveBlockParams,
    FeedbackEncoderParams,
    encode_feedback,
    feedback_features,
)
from .mixture import (
    GaussianMixture,
    LOG_VARIANCE_BOUNDS,
    MEAN_BOUND,
    VARIANCE_FLOOR,
    init_uniform,
)
from .phantom import ClinicianProfile, PhantomImage, annotate, fuse_annotations
from .proposals import FeedbackSignal
from .segmenter import (
    AnalyticParams,
    SegmenterParams,
    TrainableParams,
    compute_features,
    sigmoid,
)

CLAMP_EPS = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    lr_decay_factor: float = 0.5
    lr_decay_every: int = 20
    epochs: int = 10
    batch_size: int = 1
    n_candidates: int = 48
    n_components: int = 16
    n_proposals: int = 4
    latent_dim: int = 8
    embed_dim: int = 16
    train_samples: int = 8  # latent draws inside one differentiable step
    feedback_candidates: int = 16  # candidates for the simulated feedback round
    rounds_per_image: int = 4  # feedback rounds simulated per training episode
    adapt_step: float = 0.1
    responsibility_temperature: float = 0.1
    seed: int = 0
    # per-group learning-rate multipliers; the network groups move faster
    # than the raw mixture coordinates at desk scale
    mixture_lr_scale: float = 1.0
    weight_lr_scale: float = 1.0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 < self.lr_decay_factor <= 1.0:
            raise ValueError("lr_decay_factor must lie in (0, 1]")
        if self.optimizer not in ("sgd", "adam"):
            raise ValueError("optimizer must be 'sgd' or 'adam'")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


class AdamState:
    """Adam moment buffers keyed by parameter-group name.

    The step functions below take one plain gradient step by default;
    passing an AdamState reshapes the same gradients into Adam updates,
    with moments carried across calls.
    """

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._slots: dict[str, tuple[np.ndarray, np.ndarray, int]] = {}

    def update(self, key: str, grad: np.ndarray, learning_rate: float) -> np.ndarray:
        """Returns the increment to subtract from the parameter group."""
        grad = np.asarray(grad, dtype=float)
        m, v, t = self._slots.get(key, (np.zeros_like(grad), np.zeros_like(grad), 0))
        t += 1
        m = self.beta1 * m + (1.0 - self.beta1) * grad
        v = self.beta2 * v + (1.0 - self.beta2) * grad * grad
        self._slots[key] = (m, v, t)
        m_hat = m / (1.0 - self.beta1**t)
        v_hat = v / (1.0 - self.beta2**t)
        return learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def _step_delta(
    optimizer: AdamState | None, key: str, grad: np.ndarray, learning_rate: float
) -> np.ndarray:
    if optimizer is None:
        return learning_rate * grad
    return optimizer.update(key, grad, learning_rate)


@dataclass(frozen=True)
class ResponsibilityTarget:
    """Simplex over components plus the raw per-component quality scores
    it was derived from (needed to re-weight under new mixture weights)."""

    target: np.ndarray
    scores: np.ndarray


def cross_entropy_loss(pred_soft: np.ndarray, target: np.ndarray) -> float:
    """Mean per-pixel binary cross-entropy, predictions clamped away from 0/1."""
    pred_soft = np.asarray(pred_soft, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred_soft.shape != target.shape:
        raise ValueError("shape mismatch")
    p = np.clip(pred_soft, CLAMP_EPS, 1.0 - CLAMP_EPS)
    return float(np.mean(-(target * np.log(p) + (1.0 - target) * np.log(1.0 - p))))


def _ce_grad(pred_soft: np.ndarray, target: np.ndarray) -> np.ndarray:
    """d(mean CE)/d(pred); zero where the prediction was clamped."""
    p = np.clip(pred_soft, CLAMP_EPS, 1.0 - CLAMP_EPS)
    g = (p - target) / (p * (1.0 - p)) / pred_soft.size
    inside = (pred_soft > CLAMP_EPS) & (pred_soft < 1.0 - CLAMP_EPS)
    return g * inside


def responsibility_target(
    gmm: GaussianMixture,
    mask: np.ndarray,
    segmenter_params: SegmenterParams,
    image: PhantomImage,
    e_p: np.ndarray,
    temperature: float,
) -> ResponsibilityTarget:
    """Posterior-style component membership for a mask.

    Each component is scored by how well its mean latent reproduces the
    mask (exp of negative cross-entropy over temperature), then weighted
    by the mixture weights and normalized.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    from .segmenter import predict

    features = (
        compute_features(image)
        if isinstance(segmenter_params, TrainableParams)
        else None
    )
    ces = np.array(
        [
            cross_entropy_loss(
                predict(segmenter_params, image, mu, e_p, features=features), mask
            )
            for mu in gmm.means
        ]
    )
    scores = np.exp(-(ces - ces.min()) / temperature)
    raw = gmm.weights * scores
    return ResponsibilityTarget(target=raw / raw.sum(), scores=scores)


# ---------------------------------------------------------------------------
# Trainable segmenter forward/backward (per-pixel two-layer net)
# ---------------------------------------------------------------------------


def _seg_params_list(params: TrainableParams) -> list[np.ndarray]:
    return [params.W1, params.b1, params.W2[:, None], np.array([params.b2])]


def _seg_params_from_list(lst: list[np.ndarray]) -> TrainableParams:
    return TrainableParams(W1=lst[0], b1=lst[1], W2=lst[2][:, 0], b2=float(lst[3][0]))


def _seg_forward(
    plist: list[np.ndarray], feats: np.ndarray, z: np.ndarray, e_p: np.ndarray
):
    """Per-pixel soft mask with cache; feats is (H, W, 3)."""
    H, W, F = feats.shape
    X = np.concatenate(
        [
            feats.reshape(-1, F),
            np.broadcast_to(z, (H * W, z.size)).copy(),
            np.broadcast_to(e_p, (H * W, e_p.size)).copy(),
        ],
        axis=1,
    )
    logit, cache = nets.mlp_forward(plist, X)
    soft = sigmoid(logit[:, 0]).reshape(H, W)
    return soft, (cache, X.shape, z.size, e_p.size)


def _seg_backward(plist: list[np.ndarray], fwd_cache, soft: np.ndarray, grad_soft):
    """Returns (param grads, grad wrt z, grad wrt e_p)."""
    cache, xshape, dz, de = fwd_cache
    s = soft.reshape(-1)
    g_logit = (grad_soft.reshape(-1) * s * (1.0 - s))[:, None]
    grads, g_x = nets.mlp_backward(plist, cache, g_logit)
    g_z = g_x[:, 3 : 3 + dz].sum(axis=0)
    g_e = g_x[:, 3 + dz :].sum(axis=0)
    return grads, g_z, g_e


def pseg_step(
    segmenter_params: SegmenterParams,
    batch: list[tuple[PhantomImage, np.ndarray, np.ndarray]],
    gmm: GaussianMixture,
    learning_rate: float,
    rng_seed: int,
    n_samples: int = 8,
    optimizer: AdamState | None = None,
) -> tuple[TrainableParams, float]:
    """One gradient step on CE(mean soft prediction, target) for the segmenter.

    ``batch`` holds (image, target mask, feedback embedding) triples.
    """
    if not isinstance(segmenter_params, TrainableParams):
        raise ValueError("pseg_step requires the trainable segmenter variant")
    plist = _seg_params_list(segmenter_params)
    total_grads = [np.zeros_like(p) for p in plist]
    total_loss = 0.0
    rng = np.random.default_rng(rng_seed)
    for image, target, e_p in batch:
        feats = compute_features(image)
        comps = rng.choice(gmm.n_components, size=n_samples, p=gmm.weights)
        eps = rng.standard_normal((n_samples, gmm.dim))
        zs = gmm.means[comps] + np.sqrt(gmm.variances[comps]) * eps
        softs, caches = [], []
        for si in range(n_samples):
            soft, cache = _seg_forward(plist, feats, zs[si], e_p)
            softs.append(soft)
            caches.append(cache)
        mean_soft = np.mean(softs, axis=0)
        total_loss += cross_entropy_loss(mean_soft, target)
        g_mean = _ce_grad(mean_soft, target) / n_samples
        for si in range(n_samples):
            grads, _, _ = _seg_backward(plist, caches[si], softs[si], g_mean)
            for acc, g in zip(total_grads, grads):
                acc += g
    inv = 1.0 / len(batch)
    new_plist = [
        p - _step_delta(optimizer, f"seg{i}", g * inv, learning_rate)
        for i, (p, g) in enumerate(zip(plist, total_grads))
    ]
    return _seg_params_from_list(new_plist), total_loss / len(batch)


# ---------------------------------------------------------------------------
# PAF stage: differentiable forward through encoder, adaptive net, mixture
# ---------------------------------------------------------------------------


def _paf_forward(
    image: PhantomImage,
    target: np.ndarray,
    gmm: GaussianMixture,
    encoder: FeedbackEncoderParams,
    adapter: AdaptiveBlockParams,
    segmenter_params: SegmenterParams,
    signal: FeedbackSignal,
    eps: np.ndarray,  # (S, D) fixed standard-normal draws
    step: float,
):
    """Loss and cache for one post-feedback prediction round.

    The aggregate is the weight-stratified soft mean over components (S
    reparameterized draws per component), which is differentiable in
    every parameter group.
    """
    M, D = gmm.n_components, gmm.dim
    S = eps.shape[0]
    x_f = feedback_features(signal, image.height, image.width)
    e_p, enc_cache = nets.mlp_forward(encoder.layers, x_f)

    logpi = np.log(gmm.weights)
    logvar = np.log(gmm.variances)
    x_a = np.concatenate([e_p, gmm.means.ravel(), logvar.ravel(), logpi])
    delta_flat, adapt_cache = nets.mlp_forward(adapter.layers, x_a)
    d_mu = delta_flat[: M * D].reshape(M, D)
    d_lv = delta_flat[M * D : 2 * M * D].reshape(M, D)
    d_wl = delta_flat[2 * M * D :]

    mu2 = gmm.means + step * d_mu
    lv2 = logvar + step * d_lv
    wl2 = logpi + step * d_wl
    wl2 = wl2 - wl2.max()
    pi2 = np.exp(wl2)
    pi2 = pi2 / pi2.sum()

    sigma2 = np.exp(0.5 * lv2)
    zs = mu2[:, None, :] + sigma2[:, None, :] * eps[None, :, :]  # (M, S, D)

    feats = None
    seg_caches = None
    if isinstance(segmenter_params, AnalyticParams):
        t = (
            zs @ segmenter_params.w_z
            + segmenter_params.w_e @ e_p
            + segmenter_params.bias
        )  # (M, S)
        softs = sigmoid(
            (image.intensities[None, None, :, :] - t[:, :, None, None])
            / segmenter_params.temperature
        )
    else:
        feats = compute_features(image)
        plist = _seg_params_list(segmenter_params)
        softs = np.empty((M, S, image.height, image.width))
        seg_caches = [[None] * S for _ in range(M)]
        for m in range(M):
            for si in range(S):
                soft, cache = _seg_forward(plist, feats, zs[m, si], e_p)
                softs[m, si] = soft
                seg_caches[m][si] = cache
    a = softs.mean(axis=1)  # (M, H, W)
    mean_soft = np.tensordot(pi2, a, axes=1)
    loss = cross_entropy_loss(mean_soft, target)
    cache = dict(
        x_f=x_f,
        e_p=e_p,
        enc_cache=enc_cache,
        x_a=x_a,
        adapt_cache=adapt_cache,
        mu2=mu2,
        lv2=lv2,
        pi2=pi2,
        sigma2=sigma2,
        zs=zs,
        softs=softs,
        a=a,
        mean_soft=mean_soft,
        eps=eps,
        step=step,
        seg_caches=seg_caches,
    )
    return loss, cache


def _paf_backward(
    target: np.ndarray,
    gmm: GaussianMixture,
    encoder: FeedbackEncoderParams,
    adapter: AdaptiveBlockParams,
    segmenter_params: SegmenterParams,
    cache: dict,
):
    """Gradients for encoder layers, adapter layers, mixture means and
    log-variances."""
    M, D = gmm.n_components, gmm.dim
    eps = cache["eps"]
    S = eps.shape[0]
    step = cache["step"]
    pi2, a, softs = cache["pi2"], cache["a"], cache["softs"]
    mean_soft = cache["mean_soft"]

    g_mean = _ce_grad(mean_soft, target)  # (H, W)
    g_pi2 = np.tensordot(a, g_mean, axes=([1, 2], [0, 1]))  # (M,)
    # softmax backward for pi2
    g_wl2 = pi2 * (g_pi2 - float(pi2 @ g_pi2))

    g_e_p = np.zeros_like(cache["e_p"])
    if isinstance(segmenter_params, AnalyticParams):
        dsoft_dt = -softs * (1.0 - softs) / segmenter_params.temperature
        # c[m, s] = sum_px g_mean * pi2[m]/S * dsoft_dt[m, s]
        c = (
            np.tensordot(dsoft_dt, g_mean, axes=([2, 3], [0, 1]))
            * pi2[:, None]
            / S
        )  # (M, S)
        g_z = c[:, :, None] * segmenter_params.w_z[None, None, :]  # (M, S, D)
        g_e_p += c.sum() * segmenter_params.w_e
    else:
        plist = _seg_params_list(segmenter_params)
        g_z = np.zeros((M, S, D))
        for m in range(M):
            g_soft = g_mean * (pi2[m] / S)
            for si in range(S):
                _, gz, ge = _seg_backward(
                    plist, cache["seg_caches"][m][si], softs[m, si], g_soft
                )
                g_z[m, si] = gz
                g_e_p += ge

    g_mu2 = g_z.sum(axis=1)  # (M, D)
    g_lv2 = (g_z * (0.5 * cache["sigma2"][:, None, :] * eps[None, :, :])).sum(axis=1)

    g_delta = np.concatenate(
        [step * g_mu2.ravel(), step * g_lv2.ravel(), step * g_wl2]
    )
    adapt_grads, g_x_a = nets.mlp_backward(
        adapter.layers, cache["adapt_cache"], g_delta
    )
    L_e = cache["e_p"].size
    g_e_p += g_x_a[:L_e]
    g_mu = g_mu2 + g_x_a[L_e : L_e + M * D].reshape(M, D)
    g_lv = g_lv2 + g_x_a[L_e + M * D : L_e + 2 * M * D].reshape(M, D)

    enc_grads, _ = nets.mlp_backward(encoder.layers, cache["enc_cache"], g_e_p)
    return enc_grads, adapt_grads, g_mu, g_lv


def simulate_feedback_round(
    image: PhantomImage,
    target: np.ndarray,
    gmm: GaussianMixture,
    encoder: FeedbackEncoderParams,
    segmenter_params: SegmenterParams,
    config: TrainConfig,
    rng_seed: int,
) -> FeedbackSignal:
    """Replicates the inference loop's feedback generation for one round:
    predict, cluster, let the target-as-clinician select, sample a point."""
    from . import mixture as mix
    from .segmenter import aggregate_majority, predict_batch

    init = proposals.initial_feedback(image, rng_seed, reference=target)
    e_p0 = encode_feedback(init, image.height, image.width, encoder)
    samples = mix.sample(gmm, config.feedback_candidates, rng_seed + 1)
    softs = predict_batch(segmenter_params, image, samples, e_p0)
    mean_soft, agg = aggregate_majority(softs)
    props = proposals.build_proposals(softs, agg, config.n_proposals, rng_seed + 2)
    profile = ClinicianProfile(id=-1, threshold=0.5, approval_dice=1.0)
    choice = select_proposal(profile, props, target)
    pdiff = proposals.diff_points(
        props[choice].representative_soft, mean_soft, quantile=0.9
    )
    return proposals.sample_feedback(
        pdiff, props[choice].representative_binary, rng_seed + 3
    )


def paf_step(
    encoder: FeedbackEncoderParams,
    adapter: AdaptiveBlockParams,
    gmm: GaussianMixture,
    segmenter_params: SegmenterParams,
    batch: list[tuple[PhantomImage, np.ndarray]],
    config: TrainConfig,
    learning_rate: float,
    rng_seed: int,
    segmenter_frozen: bool = True,
    optimizer: AdamState | None = None,
) -> tuple[FeedbackEncoderParams, AdaptiveBlockParams, GaussianMixture, float]:
    """One adaptation-stage step: encoder, adapter, mixture means/log-variances.

    Each batch element runs a multi-round episode mirroring inference: the
    episode mixture evolves under the adapter's own updates so the network
    sees the states it will create, not just the initial one. Gradients
    accumulate over rounds; the segmenter must be frozen and only supplies
    forward passes and input gradients.
    """
    if not segmenter_frozen:
        raise ValueError("paf_step requires the segmenter to be frozen")
    rng = np.random.default_rng(rng_seed)
    enc_acc = [np.zeros_like(p) for p in encoder.layers]
    adapt_acc = [np.zeros_like(p) for p in adapter.layers]
    mu_acc = np.zeros_like(gmm.means)
    lv_acc = np.zeros_like(gmm.means)
    total_loss = 0.0
    n_terms = 0
    for image, target in batch:
        episode_gmm = gmm
        for _ in range(config.rounds_per_image):
            signal = simulate_feedback_round(
                image, target, episode_gmm, encoder, segmenter_params, config,
                int(rng.integers(2**31)),
            )
            eps = rng.standard_normal((config.train_samples, gmm.dim))
            loss, cache = _paf_forward(
                image, target, episode_gmm, encoder, adapter, segmenter_params,
                signal, eps, config.adapt_step,
            )
            enc_g, adapt_g, g_mu, g_lv = _paf_backward(
                target, episode_gmm, encoder, adapter, segmenter_params, cache
            )
            total_loss += loss
            n_terms += 1
            for acc, g in zip(enc_acc, enc_g):
                acc += g
            for acc, g in zip(adapt_acc, adapt_g):
                acc += g
            mu_acc += g_mu
            lv_acc += g_lv
            # advance the episode exactly the way inference would,
            # including the trust-region clip of apply_delta
            episode_gmm = GaussianMixture(
                means=np.clip(cache["mu2"], -MEAN_BOUND, MEAN_BOUND),
                variances=np.exp(np.clip(cache["lv2"], *LOG_VARIANCE_BOUNDS)),
                weights=cache["pi2"],
            )
    inv = 1.0 / n_terms
    new_encoder = FeedbackEncoderParams(
        layers=[
            p - _step_delta(optimizer, f"enc{i}", g * inv, learning_rate)
            for i, (p, g) in enumerate(zip(encoder.layers, enc_acc))
        ]
    )
    new_adapter = AdaptiveBlockParams(
        layers=[
            p - _step_delta(optimizer, f"adapt{i}", g * inv, learning_rate)
            for i, (p, g) in enumerate(zip(adapter.layers, adapt_acc))
        ],
        n_components=adapter.n_components,
        latent_dim=adapter.latent_dim,
    )
    mlr = learning_rate * config.mixture_lr_scale
    new_gmm = GaussianMixture(
        means=gmm.means - _step_delta(optimizer, "gmm_means", mu_acc * inv, mlr),
        variances=np.maximum(
            np.exp(
                np.log(gmm.variances)
                - _step_delta(optimizer, "gmm_logvars", lv_acc * inv, mlr)
            ),
            VARIANCE_FLOOR,
        ),
        weights=gmm.weights,
    )
    return new_encoder, new_adapter, new_gmm, total_loss / len(batch)


def weight_step(
    gmm: GaussianMixture,
    pred: ResponsibilityTarget,
    gt: ResponsibilityTarget,
    learning_rate: float,
    optimizer: AdamState | None = None,
) -> tuple[GaussianMixture, float]:
    """One MSE step on responsibility vectors w.r.t. the weight logits.

    The predicted responsibility is re-derived from the current weights and
    the prediction's quality scores, so it actually depends on the logits;
    the ground-truth responsibility is held fixed.
    """
    for t in (pred.target, gt.target):
        t = np.asarray(t)
        if np.any(t < 0) or abs(t.sum() - 1.0) > 1e-9:
            raise ValueError("responsibility targets must be simplex vectors")
    M = gmm.n_components
    pi = gmm.weights
    s = pred.scores
    Z = float(pi @ s)
    t_pred = pi * s / Z
    diff = t_pred - gt.target
    loss = float(np.mean(diff**2))
    # dL/dpi_j = (2/M) sum_i diff_i * dt_i/dpi_j
    dt_dpi = (np.diag(s) * Z - np.outer(pi * s, s)) / Z**2  # (i, j)
    g_pi = (2.0 / M) * diff @ dt_dpi
    g_logits = pi * (g_pi - float(pi @ g_pi))
    logits = np.log(pi) - _step_delta(optimizer, "gmm_logits", g_logits, learning_rate)
    logits -= logits.max()
    w = np.exp(logits)
    new_gmm = GaussianMixture(
        means=gmm.means, variances=gmm.variances, weights=w / w.sum()
    )
    return new_gmm, loss


# ---------------------------------------------------------------------------
# Full training loop
# ---------------------------------------------------------------------------


@dataclass
class Checkpoint:
    config: TrainConfig
    segmenter: SegmenterParams
    encoder: FeedbackEncoderParams
    adapter: AdaptiveBlockParams
    gmm: GaussianMixture
    loss_curve: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "version": 1,
            "config": self.config.to_dict(),
            "segmenter": self.segmenter.to_dict(),
            "encoder": self.encoder.to_dict(),
            "adapter": self.adapter.to_dict(),
            "gmm": self.gmm.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        from .segmenter import segmenter_from_dict

        return cls(
            config=TrainConfig.from_dict(d["config"]),
            segmenter=segmenter_from_dict(d["segmenter"]),
            encoder=FeedbackEncoderParams.from_dict(d["encoder"]),
            adapter=AdaptiveBlockParams.from_dict(d["adapter"]),
            gmm=GaussianMixture.from_dict(d["gmm"]),
        )

    def write_loss_curve(self, path: str | Path):
        with open(path, "w", newline="") as f:
            writer = csv.DictWriter(
                f, fieldnames=["epoch", "step", "pseg_loss", "paf_loss", "mse_loss"]
            )
            writer.writeheader()
            writer.writerows(self.loss_curve)


def fused_target(
    profiles: list[ClinicianProfile], image: PhantomImage, rng: np.random.Generator
) -> np.ndarray:
    """Fuse the annotations of a seeded random subset of annotators."""
    k = int(rng.integers(1, len(profiles) + 1))
    subset = list(rng.choice(len(profiles), size=k, replace=False))
    return fuse_annotations([annotate(profiles[i], image) for i in subset])


def _episode_target(
    profiles: list[ClinicianProfile], image: PhantomImage, rng: np.random.Generator
) -> np.ndarray:
    """One uniformly drawn annotator per episode.

    Fusing random subsets instead skews the target distribution toward the
    most inclusive annotator (fusion of overlapping thresholded masks tends
    to the union), which biases the adaptation policy toward expansion;
    single-annotator episodes keep both correction directions equally
    represented.
    """
    return annotate(profiles[int(rng.integers(len(profiles)))], image)


def train(
    config: TrainConfig,
    dataset: list[PhantomImage],
    profiles: list[ClinicianProfile],
    segmenter_params: SegmenterParams | None = None,
) -> Checkpoint:
    """Alternate segmentation and adaptation stages over the dataset.

    With an analytic segmenter the segmentation stage is skipped (nothing
    to train there); the adaptation stage always runs.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(config.seed)
    if segmenter_params is None:
        segmenter_params = AnalyticParams.default(
            config.latent_dim, config.embed_dim
        )
    encoder = FeedbackEncoderParams.init(
        config.embed_dim, seed=int(rng.integers(2**31))
    )
    adapter = AdaptiveBlockParams.init(
        config.embed_dim,
        config.n_components,
        config.latent_dim,
        seed=int(rng.integers(2**31)),
        scale=0.3,
    )
    gmm = init_uniform(config.n_components, config.latent_dim, seed=config.seed)
    ckpt = Checkpoint(
        config=config,
        segmenter=segmenter_params,
        encoder=encoder,
        adapter=adapter,
        gmm=gmm,
    )
    opt = AdamState() if config.optimizer == "adam" else None
    step_idx = 0
    for epoch in range(config.epochs):
        lr = config.learning_rate * config.lr_decay_factor ** (
            epoch // config.lr_decay_every
        )
        order = rng.permutation(len(dataset))
        for pos in range(0, len(order), config.batch_size):
            idxs = order[pos : pos + config.batch_size]
            images = [dataset[i] for i in idxs]
            targets = [_episode_target(profiles, img, rng) for img in images]
            pseg_loss = float("nan")
            if isinstance(ckpt.segmenter, TrainableParams):
                batch = []
                for img, y in zip(images, targets):
                    sig = proposals.initial_feedback(
                        img, int(rng.integers(2**31)), reference=y
                    )
                    batch.append(
                        (img, y, encode_feedback(sig, img.height, img.width, ckpt.encoder))
                    )
                ckpt.segmenter, pseg_loss = pseg_step(
                    ckpt.segmenter, batch, ckpt.gmm, lr, int(rng.integers(2**31)),
                    n_samples=config.train_samples, optimizer=opt,
                )
            ckpt.encoder, ckpt.adapter, ckpt.gmm, paf_loss = paf_step(
                ckpt.encoder, ckpt.adapter, ckpt.gmm, ckpt.segmenter,
                list(zip(images, targets)), config, lr, int(rng.integers(2**31)),
                optimizer=opt,
            )
            # weight MSE step on the first batch element
            img, y = images[0], targets[0]
            sig = proposals.initial_feedback(img, int(rng.integers(2**31)), reference=y)
            e_p = encode_feedback(sig, img.height, img.width, ckpt.encoder)
            from .segmenter import aggregate_majority, predict_batch
            from . import mixture as mix

            samples = mix.sample(ckpt.gmm, config.feedback_candidates, int(rng.integers(2**31)))
            softs = predict_batch(ckpt.segmenter, img, samples, e_p)
            _, agg = aggregate_majority(softs)
            pred_t = responsibility_target(
                ckpt.gmm, agg, ckpt.segmenter, img, e_p,
                config.responsibility_temperature,
            )
            gt_t = responsibility_target(
                ckpt.gmm, y, ckpt.segmenter, img, e_p,
                config.responsibility_temperature,
            )
            ckpt.gmm, mse_loss = weight_step(
                ckpt.gmm, pred_t, gt_t, lr * config.weight_lr_scale, optimizer=opt
            )
            ckpt.loss_curve.append(
                {
                    "epoch": epoch,
                    "step": step_idx,
                    "pseg_loss": pseg_loss,
                    "paf_loss": paf_loss,
                    "mse_loss": mse_loss,
                }
            )
            step_idx += 1
    return ckpt
