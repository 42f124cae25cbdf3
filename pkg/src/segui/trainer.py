"""Policy-gradient training loop and the self-evolutionary stage schedule.

Each epoch freezes the current policy as the rollout (old) policy, draws a
response group per kept sample, then applies one gradient step per sample
in dataset order. Stage one trains on every sample; later stages gate the
loss per sample using attention maps rendered by the best policy so far,
and the schedule stops when held-out accuracy stops improving.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .attention import gate as attention_gate
from .attention import toy_attention
from .core import Sample, point_in_bbox
from .grpo import GroupRollouts, group_advantages, kl_gradient, loss_gradient
from .reward import RewardConfig, rollout_reward
from .rng import stable_hash, substream
from .synthgym import GridPolicy, greedy_point, policy_distribution, sample_rollout, synth_screen


class NumericError(RuntimeError):
    """Raised when training produces non-finite values."""


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 1.0
    beta: float = 2.0
    gamma: float = 0.004
    tau: float = 0.2
    group_size: int = 8
    epochs: int = 10
    learning_rate: float = 0.0125
    stages_max: int = 4
    convergence_eps: float = 0.005
    seed: int = 0
    reward_mode: str = "dense"
    gating: str = "on"
    policy_temperature: float = 0.5
    init_identity: float = 0.5
    init_noise: float = 0.3
    p_garble: float = 0.02
    workers: int = 1

    def __post_init__(self) -> None:
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if self.epochs < 1 or self.stages_max < 1:
            raise ValueError("epochs and stages_max must be >= 1")
        if self.gamma < 0 or self.learning_rate <= 0:
            raise ValueError("gamma must be >= 0 and learning_rate > 0")
        if self.reward_mode not in ("dense", "sparse"):
            raise ValueError(f"reward_mode must be 'dense' or 'sparse', got {self.reward_mode!r}")
        if self.gating not in ("on", "off"):
            raise ValueError(f"gating must be 'on' or 'off', got {self.gating!r}")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def reward_config(self) -> RewardConfig:
        return RewardConfig(alpha=self.alpha, beta=self.beta, mode=self.reward_mode)


_CONFIG_COERCERS = {
    "alpha": float,
    "beta": float,
    "gamma": float,
    "tau": float,
    "group_size": int,
    "epochs": int,
    "learning_rate": float,
    "stages_max": int,
    "convergence_eps": float,
    "seed": int,
    "reward_mode": str,
    "gating": str,
    "policy_temperature": float,
    "init_identity": float,
    "init_noise": float,
    "p_garble": float,
    "workers": int,
}


def load_train_config(path: str | None = None, overrides: dict | None = None) -> TrainConfig:
    """Build a TrainConfig from a key=value file, then apply overrides."""
    values: dict = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
                key, raw = (part.strip() for part in line.split("=", 1))
                if key not in _CONFIG_COERCERS:
                    raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
                values[key] = _CONFIG_COERCERS[key](raw)
    for key, raw in (overrides or {}).items():
        if key not in _CONFIG_COERCERS:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = _CONFIG_COERCERS[key](raw) if isinstance(raw, str) else raw
    return TrainConfig(**values)


@dataclass
class StageRecord:
    """Outcome of one training stage."""

    stage_index: int
    kept_fraction: float
    reward_curve: list[float]
    accuracy_curve: list[float]
    eval_accuracy: float
    policy_checkpoint: np.ndarray  # float32 parameter snapshot
    temperature: float = 1.0

    def policy(self) -> GridPolicy:
        return GridPolicy(self.policy_checkpoint.astype(np.float64), self.temperature)

    def to_dict(self) -> dict:
        return {
            "stage_index": self.stage_index,
            "kept_fraction": self.kept_fraction,
            "reward_curve": [float(v) for v in self.reward_curve],
            "accuracy_curve": [float(v) for v in self.accuracy_curve],
            "eval_accuracy": float(self.eval_accuracy),
            "checkpoint_shape": list(self.policy_checkpoint.shape),
            "checkpoint_sha256": _params_digest(self.policy_checkpoint),
            "temperature": self.temperature,
        }


def _params_digest(params32: np.ndarray) -> str:
    import hashlib

    return hashlib.sha256(np.ascontiguousarray(params32, dtype="<f4").tobytes()).hexdigest()


def save_checkpoint(policy: GridPolicy, path: str) -> None:
    """JSON header line plus a little-endian float32 parameter block."""
    params = np.ascontiguousarray(policy.theta, dtype="<f4")
    header = json.dumps(
        {"dtype": "f32le", "shape": list(params.shape), "temperature": policy.temperature},
        sort_keys=True,
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8") + b"\n")
        fh.write(params.tobytes())


def load_checkpoint(path: str) -> GridPolicy:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        shape = tuple(int(v) for v in header["shape"])
        count = int(np.prod(shape))
        data = fh.read(count * 4)
    if len(data) != count * 4:
        raise ValueError(f"checkpoint payload truncated in {path}")
    theta = np.frombuffer(data, dtype="<f4").astype(np.float64).reshape(shape)
    return GridPolicy(theta, float(header.get("temperature", 1.0)))


def initial_policy(cfg: TrainConfig, feature_dim: int) -> GridPolicy:
    """Seeded starting point: a weak identity prior plus exploration noise.

    The identity component encodes the natural "features resemble the
    instruction" prior; the noise component makes the starting accuracy a
    function of the seed and leaves headroom for learning.
    """
    rng = substream(cfg.seed, "init")
    theta = cfg.init_identity * np.eye(feature_dim)
    theta = theta + cfg.init_noise * rng.standard_normal((feature_dim, feature_dim))
    return GridPolicy(theta, cfg.policy_temperature)


def split_dataset(samples: Sequence[Sample]) -> tuple[list[Sample], list[Sample]]:
    """Deterministic 80/20 train/eval split by sample-id hash."""
    train, held_out = [], []
    for s in samples:
        (held_out if stable_hash(s.id) % 5 == 0 else train).append(s)
    return train, held_out


def evaluate(policy: GridPolicy, dataset: Sequence[Sample]) -> float:
    """Grounding accuracy: fraction of greedy predictions inside the true box."""
    if not dataset:
        raise ValueError("cannot evaluate on an empty dataset")
    hits = 0
    for sample in dataset:
        if point_in_bbox(greedy_point(policy, sample), sample.gt_bbox):
            hits += 1
    return hits / len(dataset)


def compute_gates(prev_policy: GridPolicy, dataset: Sequence[Sample], tau: float, workers: int = 1) -> np.ndarray:
    """Per-sample loss gates from the previous stage's attention maps."""

    def _one(sample: Sample) -> int:
        return attention_gate(toy_attention(prev_policy, sample), sample.gt_bbox, tau)

    if workers > 1 and len(dataset) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(_one, dataset)), dtype=np.int64)
    return np.array([_one(s) for s in dataset], dtype=np.int64)


def _rollout_group(
    policy_old: GridPolicy,
    sample: Sample,
    cfg: TrainConfig,
    stage_index: int,
    epoch: int,
    dataset_index: int,
    ref_dist: np.ndarray | None = None,
) -> GroupRollouts:
    rng = substream(cfg.seed, "rollout", stage_index, epoch, dataset_index)
    rollouts = tuple(
        sample_rollout(policy_old, sample, rng, p_garble=cfg.p_garble) for _ in range(cfg.group_size)
    )
    reward_cfg = cfg.reward_config()
    rewards = tuple(
        rollout_reward(r.point, r.format_valid, sample.gt_bbox, sample.screen, reward_cfg) for r in rollouts
    )
    return GroupRollouts(
        sample=sample,
        rollouts=rollouts,
        advantages=tuple(group_advantages(rewards)),
        old_dist=policy_distribution(policy_old, sample),
        keep=1,
        rewards=rewards,
        ref_dist=ref_dist,
    )


def train_stage(
    policy_init: GridPolicy,
    dataset: Sequence[Sample],
    gates: Sequence[int],
    cfg: TrainConfig,
    eval_dataset: Sequence[Sample] | None = None,
    stage_index: int = 1,
) -> tuple[GridPolicy, StageRecord]:
    """Run one stage of gated group-relative policy-gradient training.

    Per epoch: freeze the rollout policy, draw a response group for every
    kept sample (parallelizable; per-sample RNG substreams keep results
    independent of worker count), then apply one gradient step per sample
    sequentially. The KL penalty anchors to the stage's frozen reference
    policy (the previous round's model), and its step is capped at the
    distance back to that anchor: past the anchor the penalty gradient
    flips sign, so an uncapped fixed-size step would oscillate at large
    gamma instead of freezing the parameters.
    """
    if len(gates) != len(dataset):
        raise ValueError(f"{len(gates)} gates for {len(dataset)} samples")
    eval_ds = eval_dataset if eval_dataset is not None else dataset
    theta = np.array(policy_init.theta, dtype=np.float64, copy=True)
    theta_ref = theta.copy()
    policy_ref = GridPolicy(theta_ref, cfg.policy_temperature)
    kept = [i for i, g in enumerate(gates) if g]
    ref_dists = {i: policy_distribution(policy_ref, dataset[i]) for i in kept} if cfg.gamma > 0 else {}
    reward_curve: list[float] = []
    accuracy_curve: list[float] = []

    for epoch in range(cfg.epochs):
        theta_old = theta.copy()
        policy_old = GridPolicy(theta_old, cfg.policy_temperature)

        def _gen(i: int) -> GroupRollouts:
            return _rollout_group(policy_old, dataset[i], cfg, stage_index, epoch, i, ref_dists.get(i))

        if cfg.workers > 1 and len(kept) > 1:
            with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                groups = list(pool.map(_gen, kept))
        else:
            groups = [_gen(i) for i in kept]

        for i, group in zip(kept, groups):
            policy = GridPolicy(theta, cfg.policy_temperature)
            step = cfg.learning_rate * loss_gradient(policy, [group], gamma=0.0)
            if cfg.gamma > 0:
                pull = cfg.learning_rate * cfg.gamma * kl_gradient(policy, group)
                drift = float(np.linalg.norm(theta - theta_ref))
                if float(np.linalg.norm(pull)) > drift:
                    # Saturated penalty: return to the anchor and apply only
                    # the fresh policy-gradient push.
                    theta = theta_ref - step
                else:
                    theta = theta - step - pull
            else:
                theta = theta - step
            # parameters must stay finite and inside float32 checkpoint range
            if not np.all(np.isfinite(theta)) or float(np.max(np.abs(theta))) > 3.0e38:
                raise NumericError(
                    f"non-finite or overflowing parameters at stage {stage_index}, epoch {epoch}, "
                    f"sample {dataset[i].id!r} (lr={cfg.learning_rate}, gamma={cfg.gamma})"
                )

        if groups:
            all_rewards = [r for g in groups for r in g.rewards]
            reward_curve.append(float(np.mean(all_rewards)))
        else:
            reward_curve.append(0.0)
        accuracy_curve.append(evaluate(GridPolicy(theta, cfg.policy_temperature), eval_ds))

    # The checkpoint is a float32 snapshot; eval_accuracy is computed from it
    # so evaluating a saved checkpoint reproduces the recorded number exactly.
    params32 = theta.astype(np.float32)
    record = StageRecord(
        stage_index=stage_index,
        kept_fraction=float(len(kept)) / len(dataset) if dataset else 0.0,
        reward_curve=reward_curve,
        accuracy_curve=accuracy_curve,
        eval_accuracy=evaluate(GridPolicy(params32.astype(np.float64), cfg.policy_temperature), eval_ds),
        policy_checkpoint=params32,
        temperature=cfg.policy_temperature,
    )
    return GridPolicy(theta, cfg.policy_temperature), record


def self_evolve(dataset: Sequence[Sample], cfg: TrainConfig) -> list[StageRecord]:
    """Stage schedule: train, then re-gate with the best policy so far.

    Stage 1 uses all-ones gates. Stage s >= 2 gates each training sample by
    the attention map of the highest-held-out-accuracy checkpoint, then
    continues training from the previous stage's parameters. Stops when the
    held-out improvement falls below convergence_eps or stages_max is hit.
    """
    train_ds, eval_ds = split_dataset(dataset)
    if not train_ds or not eval_ds:
        raise ValueError("dataset too small to split into train and eval parts")
    feature_dim = synth_screen(train_ds[0]).feature_dim
    policy = initial_policy(cfg, feature_dim)
    records: list[StageRecord] = []
    best_policy = None
    best_accuracy = -math.inf

    for stage_index in range(1, cfg.stages_max + 1):
        if stage_index == 1 or cfg.gating == "off":
            gates: Sequence[int] = np.ones(len(train_ds), dtype=np.int64)
        else:
            gates = compute_gates(best_policy, train_ds, cfg.tau, workers=cfg.workers)
        policy, record = train_stage(policy, train_ds, gates, cfg, eval_ds, stage_index)
        records.append(record)
        if record.eval_accuracy > best_accuracy:
            best_accuracy = record.eval_accuracy
            best_policy = policy
        if stage_index >= 2 and records[-1].eval_accuracy - records[-2].eval_accuracy < cfg.convergence_eps:
            break
    return records


def write_reward_curve_csv(records: Sequence[StageRecord], path: str) -> None:
    """Plot-ready CSV of per-epoch mean rewards, one row per (stage, epoch)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("stage,epoch,mean_reward\n")
        for rec in records:
            for epoch, value in enumerate(rec.reward_curve):
                fh.write(f"{rec.stage_index},{epoch},{value!r}\n")
