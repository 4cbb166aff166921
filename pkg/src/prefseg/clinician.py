"""Scripted stand-in for the human in the loop.

Selection is Dice-greedy over proposal representatives against the
clinician's personal ground truth; approval is a Dice threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metrics import dice
from .phantom import ClinicianProfile
from .proposals import CorrectionProposal
from .session import (
    STATUS_APPROVED,
    SessionConfig,
    SessionState,
    apply_selection,
    approve,
    start_session,
    step_segment,
)


@dataclass
class Trajectory:
    records: list[dict] = field(default_factory=list)  # {iteration, dice, action}
    final_status: str = "active"
    iterations_used: int = 0

    @property
    def dice_per_iteration(self) -> list[float]:
        return [r["dice"] for r in self.records]


def select_proposal(
    profile: ClinicianProfile,
    proposal_list: list[CorrectionProposal],
    personal_gt: np.ndarray,
) -> int:
    """Index of the proposal whose representative best matches the personal
    ground truth by Dice; ties go to the lowest cluster id."""
    if len(proposal_list) == 0:
        raise ValueError("no proposals to select from")
    scores = [dice(p.representative_binary, personal_gt) for p in proposal_list]
    return int(np.argmax(scores))


def decide_approval(
    profile: ClinicianProfile, agg: np.ndarray, personal_gt: np.ndarray
) -> bool:
    return dice(agg, personal_gt) >= profile.approval_dice


def run_simulation(
    config: SessionConfig,
    image,
    segmenter_params,
    encoder_params,
    adapter_params,
    profile: ClinicianProfile,
    personal_gt: np.ndarray,
    seed: int,
    initial_gmm=None,
) -> tuple[Trajectory, SessionState]:
    """Drive a full session with the scripted clinician."""
    state = start_session(
        config,
        image,
        segmenter_params,
        encoder_params,
        adapter_params,
        seed,
        reference=personal_gt,
        initial_gmm=initial_gmm,
    )
    traj = Trajectory()
    while state.status == "active":
        agg, props = step_segment(state)
        d = dice(agg, personal_gt)
        if decide_approval(profile, agg, personal_gt):
            approve(state)
            traj.records.append({"iteration": state.iteration, "dice": d, "action": "approved"})
            break
        choice = select_proposal(profile, props, personal_gt)
        traj.records.append({"iteration": state.iteration, "dice": d, "action": choice})
        apply_selection(state, choice)
    traj.final_status = state.status
    traj.iterations_used = len(traj.records)
    return traj, state
