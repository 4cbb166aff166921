"""One interactive episode: segment, propose, adapt, repeat until approval.

All randomness derives from the session seed plus the iteration index, so
a persisted session replays bit-exactly from its JSON record.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

import numpy as np

from . import mixture, proposals, rle, segmenter as seg
from .feedback import (
    AdaptiveBlockParams,
    FeedbackEncoderParams,
    adapt,
    encode_feedback,
)
from .mixture import GaussianMixture, GmmDelta
from .phantom import PhantomImage
from .proposals import CorrectionProposal, FeedbackSignal

STATUS_ACTIVE = "active"
STATUS_APPROVED = "approved"
STATUS_EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class SessionConfig:
    n_candidates: int = 48
    n_components: int = 16
    n_proposals: int = 4
    latent_dim: int = 8
    embed_dim: int = 16
    max_iterations: int = 10
    adapt_step: float = 0.1
    # harmonic decay of the effective step over iterations: large early
    # steps move the mixture onto the user quickly, vanishing late steps
    # keep the converged state from random-walking under balanced feedback
    adapt_step_decay: float = 1.0
    diff_quantile: float = 0.9
    # ablation switches: which parts of the emitted update are applied
    adapt_mean_var: bool = True
    adapt_weights: bool = True

    def __post_init__(self):
        if not (self.n_candidates >= self.n_proposals >= 1):
            raise ValueError("need n_candidates >= n_proposals >= 1")
        if self.n_components < 1 or self.max_iterations < 1:
            raise ValueError("invalid config")

    def to_dict(self) -> dict:
        return {
            "n_candidates": self.n_candidates,
            "n_components": self.n_components,
            "n_proposals": self.n_proposals,
            "latent_dim": self.latent_dim,
            "embed_dim": self.embed_dim,
            "max_iterations": self.max_iterations,
            "adapt_step": self.adapt_step,
            "adapt_step_decay": self.adapt_step_decay,
            "diff_quantile": self.diff_quantile,
            "adapt_mean_var": self.adapt_mean_var,
            "adapt_weights": self.adapt_weights,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SessionConfig":
        return cls(**d)


def _stream_seed(base: int, iteration: int, stream: int) -> int:
    return int(
        np.random.SeedSequence([base, iteration, stream]).generate_state(1)[0]
    )


@dataclass
class SessionState:
    config: SessionConfig
    image: PhantomImage
    segmenter_params: seg.SegmenterParams
    encoder_params: FeedbackEncoderParams
    adapter_params: AdaptiveBlockParams
    seed: int
    gmm: GaussianMixture
    e_p: np.ndarray
    initial_signal: FeedbackSignal | None = None
    initial_gmm: GaussianMixture | None = None
    iteration: int = 1
    status: str = STATUS_ACTIVE
    last_mean_soft: np.ndarray | None = None
    last_agg: np.ndarray | None = None
    last_proposals: list[CorrectionProposal] = field(default_factory=list)
    history: list[dict] = field(default_factory=list)

    def require_active(self):
        if self.status != STATUS_ACTIVE:
            raise RuntimeError(f"session is {self.status}, not active")


def start_session(
    config: SessionConfig,
    image: PhantomImage,
    segmenter_params: seg.SegmenterParams,
    encoder_params: FeedbackEncoderParams,
    adapter_params: AdaptiveBlockParams,
    rng_seed: int,
    reference: np.ndarray | None = None,
    initial_gmm: GaussianMixture | None = None,
) -> SessionState:
    """Fresh episode: uniform mixture (or a trained one) and a random first click."""
    gmm = initial_gmm if initial_gmm is not None else mixture.init_uniform(
        config.n_components, config.latent_dim, seed=rng_seed
    )
    signal = proposals.initial_feedback(
        image, _stream_seed(rng_seed, 0, 1), reference=reference
    )
    e_p = encode_feedback(signal, image.height, image.width, encoder_params)
    state = SessionState(
        config=config,
        image=image,
        segmenter_params=segmenter_params,
        encoder_params=encoder_params,
        adapter_params=adapter_params,
        seed=rng_seed,
        gmm=gmm,
        e_p=e_p,
        initial_signal=signal,
        initial_gmm=gmm,
    )
    return state


def step_segment(
    state: SessionState,
) -> tuple[np.ndarray, list[CorrectionProposal]]:
    """Sample candidates, aggregate, cluster into proposals; caches results."""
    state.require_active()
    cfg = state.config
    samples = mixture.sample(
        state.gmm, cfg.n_candidates, _stream_seed(state.seed, state.iteration, 0)
    )
    soft_masks = seg.predict_batch(
        state.segmenter_params, state.image, samples, state.e_p
    )
    mean_soft, agg = seg.aggregate_majority(soft_masks)
    props = proposals.build_proposals(
        soft_masks, agg, cfg.n_proposals, _stream_seed(state.seed, state.iteration, 2)
    )
    state.last_mean_soft = mean_soft
    state.last_agg = agg
    state.last_proposals = props
    return agg, props


def _masked_delta(delta: GmmDelta, cfg: SessionConfig) -> GmmDelta:
    return GmmDelta(
        d_means=delta.d_means if cfg.adapt_mean_var else np.zeros_like(delta.d_means),
        d_log_variances=(
            delta.d_log_variances
            if cfg.adapt_mean_var
            else np.zeros_like(delta.d_log_variances)
        ),
        d_weight_logits=(
            delta.d_weight_logits
            if cfg.adapt_weights
            else np.zeros_like(delta.d_weight_logits)
        ),
    )


def apply_selection(state: SessionState, choice: int) -> SessionState:
    """The user picked proposal ``choice``: derive feedback, adapt the mixture."""
    state.require_active()
    cfg = state.config
    if state.last_agg is None or not state.last_proposals:
        raise RuntimeError("step_segment must run before apply_selection")
    if not 0 <= choice < len(state.last_proposals):
        raise ValueError(f"choice must lie in [0, {len(state.last_proposals)})")
    chosen = state.last_proposals[choice]
    pdiff = proposals.diff_points(
        chosen.representative_soft, state.last_mean_soft, cfg.diff_quantile
    )
    signal = proposals.sample_feedback(
        pdiff,
        chosen.representative_binary,
        _stream_seed(state.seed, state.iteration, 1),
    )
    e_p = encode_feedback(
        signal, state.image.height, state.image.width, state.encoder_params
    )
    delta = adapt(state.gmm, e_p, state.adapter_params)
    if cfg.adapt_mean_var or cfg.adapt_weights:
        step = cfg.adapt_step / (1.0 + cfg.adapt_step_decay * (state.iteration - 1))
        state.gmm = mixture.apply_delta(state.gmm, _masked_delta(delta, cfg), step)
    state.history.append(
        {
            "iteration": state.iteration,
            "agg_rle": rle.encode(state.last_agg),
            "action": choice,
            "feedback": signal.to_dict(),
            "gmm": state.gmm.to_dict(),
        }
    )
    state.e_p = e_p
    state.iteration += 1
    state.last_mean_soft = None
    state.last_agg = None
    state.last_proposals = []
    if state.iteration > cfg.max_iterations:
        state.status = STATUS_EXHAUSTED
    return state


def approve(state: SessionState) -> np.ndarray:
    """Accept the current aggregate prediction and freeze the session."""
    state.require_active()
    if state.last_agg is None:
        raise RuntimeError("no prediction to approve; call step_segment first")
    state.history.append(
        {
            "iteration": state.iteration,
            "agg_rle": rle.encode(state.last_agg),
            "action": "approved",
        }
    )
    state.status = STATUS_APPROVED
    return state.last_agg


def session_to_dict(state: SessionState) -> dict:
    """Everything needed for exact replay."""
    return {
        "version": 1,
        "config": state.config.to_dict(),
        "seed": state.seed,
        "status": state.status,
        "iteration": state.iteration,
        "image": state.image.to_dict(),
        "segmenter": state.segmenter_params.to_dict(),
        "encoder": state.encoder_params.to_dict(),
        "adapter": state.adapter_params.to_dict(),
        "initial_signal": (
            state.initial_signal.to_dict() if state.initial_signal else None
        ),
        "initial_gmm": (
            state.initial_gmm.to_dict() if state.initial_gmm is not None else None
        ),
        "history": copy.deepcopy(state.history),
    }


def replay_session(doc: dict) -> list[np.ndarray]:
    """Re-run a persisted session's choices; returns the aggregate mask per
    iteration (including the final approved one if present)."""
    config = SessionConfig.from_dict(doc["config"])
    image = PhantomImage.from_dict(doc["image"])
    state = start_session(
        config,
        image,
        seg.segmenter_from_dict(doc["segmenter"]),
        FeedbackEncoderParams.from_dict(doc["encoder"]),
        AdaptiveBlockParams.from_dict(doc["adapter"]),
        doc["seed"],
        initial_gmm=(
            GaussianMixture.from_dict(doc["initial_gmm"])
            if doc.get("initial_gmm")
            else None
        ),
    )
    stored = doc.get("initial_signal")
    if stored is not None:
        signal = FeedbackSignal(point=tuple(stored["point"]), label=stored["label"])
        if signal != state.initial_signal:
            state.initial_signal = signal
            state.e_p = encode_feedback(
                signal, image.height, image.width, state.encoder_params
            )
    masks = []
    for record in doc["history"]:
        agg, _ = step_segment(state)
        masks.append(agg)
        if record["action"] == "approved":
            approve(state)
        else:
            apply_selection(state, int(record["action"]))
    return masks
