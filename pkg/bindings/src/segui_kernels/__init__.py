"""Native kernels for the segui math: rewards, advantages, KL, attention gates.

Scalar forms are bit-identical to the pure-Python reference; batched forms
apply the scalar kernel elementwise and release the GIL while computing.
"""

from segui_kernels._native import (
    aggregate_attention,
    categorical_kl,
    categorical_kl_batch,
    gate,
    gate_batch,
    group_advantages,
    group_advantages_batch,
    kl_k3,
    kl_k3_batch,
    p_global,
    p_peak,
    point_reward,
    point_reward_batch,
    sparse_point_reward,
    sparse_point_reward_batch,
)

__version__ = "0.1.0"

__all__ = [
    "aggregate_attention",
    "categorical_kl",
    "categorical_kl_batch",
    "gate",
    "gate_batch",
    "group_advantages",
    "group_advantages_batch",
    "kl_k3",
    "kl_k3_batch",
    "p_global",
    "p_peak",
    "point_reward",
    "point_reward_batch",
    "sparse_point_reward",
    "sparse_point_reward_batch",
]
