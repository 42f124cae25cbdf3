"""Desk-scale reinforcement fine-tuning engine for GUI grounding."""

from .core import (
    BBox,
    DatasetError,
    Point,
    Rollout,
    Sample,
    ScreenSize,
    parse_click_point,
    point_in_bbox,
    read_dataset,
    render_click_point,
    write_dataset,
)
from .reward import (
    RewardConfig,
    combined_reward,
    d_max,
    format_reward,
    normalized_distance,
    point_reward,
    sparse_point_reward,
)
from .grpo import categorical_kl, group_advantages, group_loss, kl_k3, loss_gradient, rollout_loss
from .attention import AttentionMap, RawAttention, aggregate_attention, gate, p_global, p_peak, toy_attention
from .synthgym import GridPolicy, GymConfig, SynthScreen, generate_dataset, policy_distribution, sample_rollout
from .trainer import (
    NumericError,
    StageRecord,
    TrainConfig,
    compute_gates,
    evaluate,
    self_evolve,
    train_stage,
)
from .evalkit import BenchRecord, load_benchmark, score_predictions

__version__ = "0.1.0"
