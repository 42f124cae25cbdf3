"""Group-relative advantages: rewards normalized within a response group.

Draws one group of rollouts from an untrained policy, scores them, and
shows how the group statistics turn raw rewards into advantages. Also
demonstrates why an all-identical group contributes nothing.
"""

import numpy as np

from segui.grpo import categorical_kl, group_advantages, kl_k3
from segui.reward import RewardConfig, rollout_reward
from segui.rng import substream
from segui.synthgym import GridPolicy, generate_dataset, policy_distribution, sample_rollout

sample = generate_dataset(seed=7, count=1)[0]
policy = GridPolicy(0.5 * np.eye(8), temperature=0.5)
rng = substream(7, "demo-rollouts")
cfg = RewardConfig()

rollouts = [sample_rollout(policy, sample, rng) for _ in range(8)]
rewards = [rollout_reward(r.point, r.format_valid, sample.gt_bbox, sample.screen, cfg) for r in rollouts]
advantages = group_advantages(rewards)

print("one group of 8 rollouts:")
print(f"{'cell':>5}  {'reward':>7}  {'advantage':>9}")
for r, rew, adv in zip(rollouts, rewards, advantages):
    print(f"{r.action_index:5d}  {rew:7.3f}  {adv:9.3f}")
print(f"\nmean advantage = {np.mean(advantages):+.2e} (always 0), "
      f"std = {np.std(advantages):.6f} (always 1 when rewards vary)")

print("\nzero-variance group:", group_advantages([1.5] * 8), "-> no learning signal")

# the KL penalty compares the frozen and current policies per state
sharper = GridPolicy(2.0 * np.eye(8), temperature=0.5)
p_old = policy_distribution(policy, sample)
p_new = policy_distribution(sharper, sample)
print(f"\nexact KL(old || new) after sharpening: {categorical_kl(p_old, p_new):.4f}")
a = rollouts[0].action_index
print(f"single-sample k3 estimate at the sampled cell: {kl_k3(p_old[a], p_new[a]):.4f}")
