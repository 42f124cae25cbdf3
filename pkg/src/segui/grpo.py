"""Group-relative advantages, categorical KL, and the gated policy loss.

The loss for one response group is

    keep * mean_i [ -(pi_theta(a_i)/pi_old(a_i)) * A_i + gamma * KL(pi_old || pi_theta) ]

with advantages normalized by the group's population standard deviation.
There is no clip term: groups are re-sampled every epoch and each group
receives a single update step, so the ratio stays near one.

The scalar kernels (advantages, KL, k3) use sequential plain-float
arithmetic so native re-implementations can reproduce them exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Rollout, Sample
from .synthgym import GridPolicy, instruction_vector, policy_distribution, synth_screen

_SUM_TOL = 1e-9


def group_advantages(rewards: Sequence[float]) -> list[float]:
    """Normalize group rewards to mean 0 and population std 1.

    Zero-variance groups carry no learning signal and map to all-zero
    advantages rather than an epsilon denominator.
    """
    n = len(rewards)
    if n < 2:
        raise ValueError(f"group statistics need at least 2 rewards, got {n}")
    total = 0.0
    for r in rewards:
        r = float(r)
        if not math.isfinite(r):
            raise ValueError("rewards must be finite")
        total += r
    mean = total / n
    acc = 0.0
    for r in rewards:
        d = float(r) - mean
        acc += d * d
    std = math.sqrt(acc / n)
    if std == 0.0:
        return [0.0] * n
    return [(float(r) - mean) / std for r in rewards]


def categorical_kl(p_old: Sequence[float], p_new: Sequence[float]) -> float:
    """Exact KL(p_old || p_new) between two categorical distributions."""
    if len(p_old) != len(p_new):
        raise ValueError(f"distribution sizes differ: {len(p_old)} vs {len(p_new)}")
    total_old = 0.0
    total_new = 0.0
    for po, pn in zip(p_old, p_new):
        if po < 0 or pn < 0:
            raise ValueError("probabilities must be non-negative")
        total_old += float(po)
        total_new += float(pn)
    if abs(total_old - 1.0) > _SUM_TOL or abs(total_new - 1.0) > _SUM_TOL:
        raise ValueError(f"distributions must sum to 1 (got {total_old}, {total_new})")
    acc = 0.0
    for po, pn in zip(p_old, p_new):
        po = float(po)
        if po > 0.0:
            pn = float(pn)
            if pn <= 0.0:
                raise ValueError("p_new must be strictly positive wherever p_old > 0")
            acc += po * math.log(po / pn)
    return acc


def kl_k3(p_old_action: float, p_new_action: float) -> float:
    """Unbiased single-sample KL estimator r - 1 - ln(r), r = p_old/p_new.

    For callers that only have sampled-action probabilities rather than the
    full distributions the exact KL needs.
    """
    if p_old_action <= 0 or p_new_action <= 0:
        raise ValueError("action probabilities must be > 0")
    r = float(p_old_action) / float(p_new_action)
    return r - 1.0 - math.log(r)


def rollout_loss(r: Rollout, advantage: float, kl: float, keep: int, gamma: float) -> float:
    """Per-rollout gated loss term."""
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if keep == 0:
        return 0.0
    ratio = math.exp(r.logprob_new - r.logprob_old)
    return -ratio * advantage + gamma * kl


def group_loss(
    rollouts: Sequence[Rollout],
    advantages: Sequence[float],
    kl: float,
    keep: int,
    gamma: float,
) -> float:
    """Mean of the per-rollout losses over one response group."""
    if len(rollouts) != len(advantages):
        raise ValueError(f"{len(rollouts)} rollouts but {len(advantages)} advantages")
    if keep == 0:
        return 0.0
    total = 0.0
    for r, a in zip(rollouts, advantages):
        total += rollout_loss(r, a, kl, keep, gamma)
    return total / len(rollouts)


@dataclass(frozen=True)
class GroupRollouts:
    """One sample's response group, drawn under a frozen old policy.

    ``old_dist`` is the rollout policy's distribution (the ratio's
    denominator); ``ref_dist``, when present, is the anchor of the KL
    penalty (the stage's frozen reference policy). When absent the rollout
    policy doubles as the reference.
    """

    sample: Sample
    rollouts: tuple[Rollout, ...]
    advantages: tuple[float, ...]
    old_dist: np.ndarray
    keep: int = 1
    rewards: tuple[float, ...] = ()
    ref_dist: np.ndarray | None = None

    @property
    def anchor_dist(self) -> np.ndarray:
        return self.old_dist if self.ref_dist is None else self.ref_dist


def group_loss_at(policy: GridPolicy, group: GroupRollouts, gamma: float) -> float:
    """Evaluate the group loss under the current policy parameters."""
    if group.keep == 0:
        return 0.0
    p_new = policy_distribution(policy, group.sample)
    kl = categorical_kl(group.anchor_dist, p_new)
    total = 0.0
    for r, a in zip(group.rollouts, group.advantages):
        ratio = p_new[r.action_index] / group.old_dist[r.action_index]
        total += -ratio * a + gamma * kl
    return float(total / len(group.rollouts))


def kl_gradient(policy: GridPolicy, group: GroupRollouts) -> np.ndarray:
    """Gradient of KL(anchor || pi_theta) w.r.t. theta for one sample."""
    screen = synth_screen(group.sample)
    u = instruction_vector(group.sample)
    v = screen.cell_features
    p_new = policy_distribution(policy, group.sample)
    v_bar_new = p_new @ v
    v_bar_anchor = np.asarray(group.anchor_dist) @ v
    return np.outer(u, v_bar_new - v_bar_anchor) / policy.temperature


def loss_gradient(policy: GridPolicy, batch: Sequence[GroupRollouts], gamma: float) -> np.ndarray:
    """Exact gradient of the mean group loss over a batch w.r.t. theta.

    Uses the softmax chain rule: d pi(a)/d theta =
    pi(a) * outer(u, v_a - sum_k pi(k) v_k) / temperature. Old-policy
    probabilities are constants.
    """
    if gamma < 0:
        raise ValueError("gamma must be >= 0")
    if not batch:
        raise ValueError("empty batch")
    grad = np.zeros_like(policy.theta)
    for group in batch:
        if group.keep == 0:
            continue
        screen = synth_screen(group.sample)
        u = instruction_vector(group.sample)
        v = screen.cell_features
        p_new = policy_distribution(policy, group.sample)
        old = np.asarray(group.old_dist)
        v_bar = p_new @ v
        n = len(group.rollouts)
        direction = np.zeros(v.shape[1])
        for r, a in zip(group.rollouts, group.advantages):
            k = r.action_index
            weight = a * p_new[k] / old[k]
            direction += weight * (v[k] - v_bar)
        pg = -np.outer(u, direction) / (n * policy.temperature)
        if gamma > 0:
            v_bar_anchor = np.asarray(group.anchor_dist) @ v
            pg = pg + gamma * np.outer(u, v_bar - v_bar_anchor) / policy.temperature
        grad += pg
    return grad / len(batch)
