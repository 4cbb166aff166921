"""Experiment drivers: interaction efficiency, per-annotator alignment,
and the adaptation-mechanism ablation, all seeded and replay-deterministic."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .clinician import run_simulation, select_proposal
from .metrics import dice, iterations_to_target
from .phantom import ClinicianProfile, PhantomImage, annotate, fuse_annotations
from .session import SessionConfig, apply_selection, start_session, step_segment
from .training import Checkpoint


@dataclass(frozen=True)
class EfficiencyRecord:
    image_id: str
    clinician_id: int
    seed: int
    target_dice: float
    iterations: float


@dataclass(frozen=True)
class AlignmentRow:
    iteration: int
    clinician_id: int
    included: bool
    mean_dice: float
    delta_vs_first: float


def _session_config(ckpt: Checkpoint, **overrides) -> SessionConfig:
    cfg = ckpt.config
    base = SessionConfig(
        n_candidates=cfg.n_candidates,
        n_components=cfg.n_components,
        n_proposals=cfg.n_proposals,
        latent_dim=cfg.latent_dim,
        embed_dim=cfg.embed_dim,
        adapt_step=cfg.adapt_step,
    )
    return replace(base, **overrides) if overrides else base


def run_fixed_iterations(
    ckpt: Checkpoint,
    image: PhantomImage,
    target: np.ndarray,
    iterations: int,
    seed: int,
    config: SessionConfig | None = None,
) -> list[np.ndarray]:
    """Drive a session for a fixed number of rounds (no approval); the
    target acts as the selecting clinician. Returns the aggregate mask of
    every iteration."""
    cfg = config or _session_config(ckpt, max_iterations=iterations)
    cfg = replace(cfg, max_iterations=max(cfg.max_iterations, iterations))
    state = start_session(
        cfg, image, ckpt.segmenter, ckpt.encoder, ckpt.adapter, seed,
        reference=target, initial_gmm=ckpt.gmm,
    )
    profile = ClinicianProfile(id=-1, threshold=0.5, approval_dice=1.0)
    masks = []
    for _ in range(iterations):
        agg, props = step_segment(state)
        masks.append(agg)
        choice = select_proposal(profile, props, target)
        apply_selection(state, choice)
    return masks


def run_efficiency(
    dataset: list[tuple[str, PhantomImage]],
    ckpt: Checkpoint,
    profiles: list[ClinicianProfile],
    targets: list[float],
    seeds: list[int],
    cap: int = 6,
    failure_value: float = 10.0,
    max_iterations: int = 10,
    config: SessionConfig | None = None,
) -> tuple[list[EfficiencyRecord], dict[float, float]]:
    """Iterations needed to reach each target Dice, with the failure rule."""
    records = []
    for image_id, image in dataset:
        for profile in profiles:
            gt = annotate(profile, image)
            for target in targets:
                for seed in seeds:
                    prof = replace(profile, approval_dice=target)
                    cfg = config or _session_config(
                        ckpt, max_iterations=max_iterations
                    )
                    traj, _ = run_simulation(
                        cfg, image, ckpt.segmenter, ckpt.encoder, ckpt.adapter,
                        prof, gt, seed, initial_gmm=ckpt.gmm,
                    )
                    records.append(
                        EfficiencyRecord(
                            image_id=image_id,
                            clinician_id=profile.id,
                            seed=seed,
                            target_dice=target,
                            iterations=iterations_to_target(
                                traj.dice_per_iteration, target, cap, failure_value
                            ),
                        )
                    )
    means = {
        t: float(np.mean([r.iterations for r in records if r.target_dice == t]))
        for t in targets
    }
    return records, means


def run_alignment(
    dataset: list[tuple[str, PhantomImage]],
    ckpt: Checkpoint,
    included: list[ClinicianProfile],
    excluded: list[ClinicianProfile],
    iterations: int,
    seeds: list[int],
    fusion_weights: np.ndarray | None = None,
) -> list[AlignmentRow]:
    """Fused included annotations drive the session; Dice against every
    individual annotator is tracked per iteration."""
    everyone = included + excluded
    included_ids = {p.id for p in included}
    # dice_sums[iteration][clinician] accumulates over images and seeds
    sums = np.zeros((iterations, len(everyone)))
    count = 0
    for _, image in dataset:
        target = fuse_annotations(
            [annotate(p, image) for p in included], fusion_weights
        )
        per_clin_gt = [annotate(p, image) for p in everyone]
        for seed in seeds:
            masks = run_fixed_iterations(ckpt, image, target, iterations, seed)
            for j, mask in enumerate(masks):
                for ci, gt in enumerate(per_clin_gt):
                    sums[j, ci] += dice(mask, gt)
            count += 1
    means = sums / count
    rows = []
    for j in range(iterations):
        for ci, p in enumerate(everyone):
            rows.append(
                AlignmentRow(
                    iteration=j + 1,
                    clinician_id=p.id,
                    included=p.id in included_ids,
                    mean_dice=float(means[j, ci]),
                    delta_vs_first=float(means[j, ci] - means[0, ci]),
                )
            )
    return rows


ABLATION_VARIANTS = {
    "random_only": dict(adapt_mean_var=False, adapt_weights=False),
    "gauss_mean_var": dict(adapt_mean_var=True, adapt_weights=False),
    "mixture_weights": dict(adapt_mean_var=False, adapt_weights=True),
    "full": dict(adapt_mean_var=True, adapt_weights=True),
}


def run_ablation(
    dataset: list[tuple[str, PhantomImage]],
    ckpt: Checkpoint,
    profiles: list[ClinicianProfile],
    seeds: list[int],
    iterations: int = 3,
) -> dict[str, float]:
    """Mean Dice after ``iterations`` rounds for each adaptation variant."""
    out = {}
    for name, flags in ABLATION_VARIANTS.items():
        cfg = _session_config(ckpt, max_iterations=iterations, **flags)
        scores = []
        for _, image in dataset:
            for profile in profiles:
                gt = annotate(profile, image)
                for seed in seeds:
                    masks = run_fixed_iterations(
                        ckpt, image, gt, iterations, seed, config=cfg
                    )
                    scores.append(dice(masks[-1], gt))
        out[name] = float(np.mean(scores))
    return out


def write_efficiency_csv(path: str | Path, records: list[EfficiencyRecord]):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["image_id", "clinician_id", "seed", "target_dice", "iterations"])
        for r in records:
            w.writerow([r.image_id, r.clinician_id, r.seed, r.target_dice, r.iterations])


def write_alignment_csv(path: str | Path, rows: list[AlignmentRow]):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iteration", "clinician_id", "included", "mean_dice", "delta_vs_first"])
        for r in rows:
            w.writerow([r.iteration, r.clinician_id, int(r.included), r.mean_dice, r.delta_vs_first])
