"""Synthetic GUI-grounding environment and the differentiable toy policy.

A screen is an R x C grid of cells, each carrying an observed feature
vector (clean target signature plus Gaussian noise). The instruction
encodes the target cell's clean features, and the ground-truth box is the
target cell's pixel rectangle. The policy scores cells with a bilinear form
instruction^T theta features and samples from the resulting softmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import BBox, Point, Rollout, Sample, ScreenSize, render_click_point
from .rng import substream

_INSTRUCTION_PREFIX = "click the element with feature signature "


@dataclass(frozen=True)
class GymConfig:
    """Grid, feature, and noise settings for dataset generation.

    ``feature_smoothing`` controls how spatially correlated the clean cell
    features are (passes of a 3x3 binomial blur over the grid). Screens have
    spatially coherent content, and the correlation is what makes a spatial
    near-miss informative about the target's features.
    """

    rows: int = 8
    cols: int = 8
    feature_dim: int = 8
    sigma: float = 0.06
    feature_smoothing: int = 1
    screen_width: int = 512
    screen_height: int = 512

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1 or self.feature_dim < 1:
            raise ValueError("grid and feature dimensions must be >= 1")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.feature_smoothing < 0:
            raise ValueError("feature_smoothing must be >= 0")


@dataclass(frozen=True)
class SynthScreen:
    """Synthetic screen descriptor: grid layout plus observed cell features."""

    screen: ScreenSize
    rows: int
    cols: int
    cell_features: np.ndarray  # (rows*cols, feature_dim), observed (noisy)
    target_cell: int
    distractor_noise: float

    def __post_init__(self) -> None:
        n = self.rows * self.cols
        if self.cell_features.shape[0] != n:
            raise ValueError(f"expected {n} cell feature rows, got {self.cell_features.shape[0]}")
        if not 0 <= self.target_cell < n:
            raise ValueError(f"target_cell {self.target_cell} outside grid of {n} cells")

    @property
    def num_cells(self) -> int:
        return self.rows * self.cols

    @property
    def feature_dim(self) -> int:
        return int(self.cell_features.shape[1])

    def cell_bbox(self, index: int) -> BBox:
        r, c = divmod(index, self.cols)
        w = self.screen.width / self.cols
        h = self.screen.height / self.rows
        return BBox(c * w, r * h, (c + 1) * w, (r + 1) * h)

    def cell_center(self, index: int) -> Point:
        return self.cell_bbox(index).center

    def to_source_dict(self) -> dict:
        return {
            "kind": "synthetic",
            "grid": [self.rows, self.cols],
            "features": [[float(v) for v in row] for row in self.cell_features],
            "target": self.target_cell,
            "sigma": self.distractor_noise,
        }

    @classmethod
    def from_source_dict(cls, source: dict, screen: ScreenSize) -> "SynthScreen":
        rows, cols = (int(v) for v in source["grid"])
        features = np.asarray(source["features"], dtype=np.float64)
        return cls(
            screen=screen,
            rows=rows,
            cols=cols,
            cell_features=features,
            target_cell=int(source["target"]),
            distractor_noise=float(source.get("sigma", 0.0)),
        )


@dataclass
class GridPolicy:
    """Bilinear softmax policy over grid cells."""

    theta: np.ndarray  # (feature_dim, feature_dim)
    temperature: float = 1.0

    def __post_init__(self) -> None:
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.ndim != 2 or self.theta.shape[0] != self.theta.shape[1]:
            raise ValueError(f"theta must be square, got shape {self.theta.shape}")
        if not np.all(np.isfinite(self.theta)):
            raise ValueError("theta must be finite")
        if self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")

    def copy(self) -> "GridPolicy":
        return GridPolicy(self.theta.copy(), self.temperature)


def encode_instruction(clean: np.ndarray) -> str:
    """Serialize a clean feature vector into the instruction string form."""
    return _INSTRUCTION_PREFIX + ",".join(repr(float(v)) for v in clean)


def instruction_vector(sample: Sample) -> np.ndarray:
    """Decode the clean target feature vector from the instruction string."""
    text = sample.instruction
    if not text.startswith(_INSTRUCTION_PREFIX):
        raise ValueError(f"sample {sample.id!r} does not carry a synthetic instruction")
    return np.array([float(tok) for tok in text[len(_INSTRUCTION_PREFIX):].split(",")], dtype=np.float64)


def synth_screen(sample: Sample) -> SynthScreen:
    if not isinstance(sample.screen_source, SynthScreen):
        raise ValueError(f"sample {sample.id!r} has no synthetic screen descriptor")
    return sample.screen_source


def _smooth_field(field: np.ndarray, passes: int) -> np.ndarray:
    """Repeated 3x3 binomial blur over the grid axes (edge-padded)."""
    for _ in range(passes):
        padded = np.pad(field, ((1, 1), (1, 1), (0, 0)), mode="edge")
        field = (
            padded[:-2, :-2] + 2 * padded[:-2, 1:-1] + padded[:-2, 2:]
            + 2 * padded[1:-1, :-2] + 4 * padded[1:-1, 1:-1] + 2 * padded[1:-1, 2:]
            + padded[2:, :-2] + 2 * padded[2:, 1:-1] + padded[2:, 2:]
        ) / 16.0
    return field


def generate_dataset(seed: int, count: int, cfg: GymConfig | None = None) -> list[Sample]:
    """Deterministically generate `count` synthetic grounding samples."""
    if count < 1:
        raise ValueError("count must be >= 1")
    cfg = cfg or GymConfig()
    rng = substream(seed, "gen")
    n_cells = cfg.rows * cfg.cols
    samples = []
    for i in range(count):
        field = rng.standard_normal((cfg.rows, cfg.cols, cfg.feature_dim))
        field = _smooth_field(field, cfg.feature_smoothing)
        clean = field.reshape(n_cells, cfg.feature_dim)
        clean = clean / np.linalg.norm(clean, axis=1, keepdims=True)
        observed = clean + cfg.sigma * rng.standard_normal((n_cells, cfg.feature_dim))
        target = int(rng.integers(n_cells))
        screen = ScreenSize(cfg.screen_width, cfg.screen_height)
        descriptor = SynthScreen(
            screen=screen,
            rows=cfg.rows,
            cols=cfg.cols,
            cell_features=observed,
            target_cell=target,
            distractor_noise=cfg.sigma,
        )
        samples.append(
            Sample(
                id=f"synth-{seed}-{i:06d}",
                screen=screen,
                screen_source=descriptor,
                instruction=encode_instruction(clean[target]),
                gt_bbox=descriptor.cell_bbox(target),
            )
        )
    return samples


def load_dataset(path: str) -> list[Sample]:
    """Read a dataset file, materializing synthetic screen descriptors."""
    from .core import read_dataset

    samples = []
    for sample in read_dataset(path):
        if isinstance(sample.screen_source, dict) and sample.screen_source.get("kind") == "synthetic":
            descriptor = SynthScreen.from_source_dict(sample.screen_source, sample.screen)
            samples.append(
                Sample(
                    id=sample.id,
                    screen=sample.screen,
                    screen_source=descriptor,
                    instruction=sample.instruction,
                    gt_bbox=sample.gt_bbox,
                    curation_flags=sample.curation_flags,
                )
            )
        else:
            samples.append(sample)
    return samples


def policy_logits(policy: GridPolicy, sample: Sample) -> np.ndarray:
    screen = synth_screen(sample)
    u = instruction_vector(sample)
    if u.shape[0] != policy.theta.shape[0] or screen.feature_dim != policy.theta.shape[1]:
        raise ValueError(
            f"dimension mismatch: theta {policy.theta.shape}, instruction {u.shape[0]}, "
            f"features {screen.feature_dim}"
        )
    return (u @ policy.theta @ screen.cell_features.T) / policy.temperature


def policy_distribution(policy: GridPolicy, sample: Sample) -> np.ndarray:
    """Softmax distribution over the sample's grid cells."""
    logits = policy_logits(policy, sample)
    shifted = logits - np.max(logits)
    weights = np.exp(shifted)
    return weights / np.sum(weights)


def greedy_point(policy: GridPolicy, sample: Sample) -> Point:
    """Deterministic (argmax) click prediction for evaluation."""
    logits = policy_logits(policy, sample)
    return synth_screen(sample).cell_center(int(np.argmax(logits)))


def sample_rollout(
    policy: GridPolicy,
    sample: Sample,
    rng: np.random.Generator,
    p_garble: float = 0.02,
) -> Rollout:
    """Sample one response from the policy.

    The chosen cell's center is rendered into the canonical tool-call text;
    with probability ``p_garble`` the text is corrupted instead (the cell
    choice and its log-probability are kept, so format failures stay
    exogenous to the policy gradient).
    """
    dist = policy_distribution(policy, sample)
    action = int(rng.choice(dist.shape[0], p=dist))
    logprob = float(math.log(dist[action]))
    garbled = rng.random() < p_garble
    if garbled:
        return Rollout(
            sample_id=sample.id,
            raw_text=f"click cell {action}",
            point=None,
            format_valid=False,
            logprob_new=logprob,
            logprob_old=logprob,
            action_index=action,
        )
    center = synth_screen(sample).cell_center(action)
    return Rollout(
        sample_id=sample.id,
        raw_text=render_click_point(center),
        point=center,
        format_valid=True,
        logprob_new=logprob,
        logprob_old=logprob,
        action_index=action,
    )
