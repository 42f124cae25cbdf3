"""Spatial attention aggregation and the per-sample loss gate.

A raw decoder attention stack is reduced to one screen-resolution map in
four steps: restrict each generated token's row to the vision span and
renormalize it, average across layers and tokens, project the resulting
grid to screen resolution by nearest neighbor, and min-max normalize to
[0, 1]. The gate passes a sample when the map both peaks inside the
ground-truth box above the threshold and averages higher inside the box
than globally.

Reductions accumulate strictly left to right (row-major) so native
re-implementations can match results bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .core import BBox, Sample, ScreenSize
from .synthgym import GridPolicy, policy_distribution, synth_screen


def _seq_sum(a: np.ndarray) -> float:
    """Strict left-to-right sum (C-loop order), unlike np.sum's pairwise tree."""
    flat = np.ravel(a)
    if flat.size == 0:
        return 0.0
    return float(np.cumsum(flat)[-1])


@dataclass(frozen=True)
class RawAttention:
    """Decoder self-attention restricted to the generation steps.

    ``layers`` has shape (num_layers, generated_tokens, all_tokens);
    the vision span [vision_start, vision_end) indexes the visual tokens,
    laid out row-major on a (grid_rows, grid_cols) grid.
    """

    layers: np.ndarray
    vision_start: int
    vision_end: int
    grid_rows: int
    grid_cols: int

    def __post_init__(self) -> None:
        layers = np.asarray(self.layers, dtype=np.float64)
        object.__setattr__(self, "layers", layers)
        if layers.ndim != 3:
            raise ValueError(f"layers must be (L, T, A), got shape {layers.shape}")
        if np.any(layers < 0):
            raise ValueError("attention weights must be >= 0")
        span = self.vision_end - self.vision_start
        if span != self.grid_rows * self.grid_cols:
            raise ValueError(
                f"vision span of {span} tokens does not fill a "
                f"{self.grid_rows}x{self.grid_cols} grid"
            )
        if self.vision_start < 0 or self.vision_end > layers.shape[2]:
            raise ValueError("vision span outside the token axis")


@dataclass(frozen=True)
class AttentionMap:
    """Normalized spatial attention at screen resolution; grid[y, x] in [0, 1]."""

    grid: np.ndarray

    def __post_init__(self) -> None:
        grid = np.asarray(self.grid, dtype=np.float64)
        object.__setattr__(self, "grid", grid)
        if grid.ndim != 2:
            raise ValueError(f"attention map must be 2-D, got shape {grid.shape}")
        if grid.size == 0:
            raise ValueError("attention map must be non-empty")
        if not np.all(np.isfinite(grid)):
            raise ValueError("attention map values must be finite")
        if np.any(grid < 0) or np.any(grid > 1):
            raise ValueError("attention map values must lie in [0, 1]")

    @property
    def height(self) -> int:
        return int(self.grid.shape[0])

    @property
    def width(self) -> int:
        return int(self.grid.shape[1])


def _project_grid(grid: np.ndarray, s: ScreenSize) -> np.ndarray:
    """Nearest-neighbor upsample of an (R, C) grid to (H, W) plus min-max scaling."""
    rows, cols = grid.shape
    row_idx = (np.arange(s.height) * rows) // s.height
    col_idx = (np.arange(s.width) * cols) // s.width
    up = grid[np.ix_(row_idx, col_idx)]
    lo = float(np.min(up))
    hi = float(np.max(up))
    if hi > lo:
        return (up - lo) / (hi - lo)
    # An all-equal map has no informative peak; normalize it to zeros so the
    # gate rejects it rather than passing everywhere.
    return np.zeros_like(up)


def aggregate_attention(raw: RawAttention, s: ScreenSize) -> AttentionMap:
    """Reduce raw decoder attention to one normalized screen-resolution map."""
    n_layers, n_tokens, _ = raw.layers.shape
    n_cells = raw.grid_rows * raw.grid_cols
    acc = np.zeros(n_cells)
    for layer in range(n_layers):
        for token in range(n_tokens):
            row = raw.layers[layer, token, raw.vision_start:raw.vision_end]
            total = _seq_sum(row)
            if total > 0.0:
                acc = acc + row / total
    mean = acc / (n_layers * n_tokens)
    grid = mean.reshape(raw.grid_rows, raw.grid_cols)
    return AttentionMap(_project_grid(grid, s))


def _pixel_region(b: BBox, height: int, width: int) -> tuple[int, int, int, int] | None:
    """Integer pixels whose centers fall in the closed box, clipped to the map."""
    x_lo = max(0, int(math.ceil(b.x1 - 0.5)))
    x_hi = min(width - 1, int(math.floor(b.x2 - 0.5)))
    y_lo = max(0, int(math.ceil(b.y1 - 0.5)))
    y_hi = min(height - 1, int(math.floor(b.y2 - 0.5)))
    if x_lo > x_hi or y_lo > y_hi:
        return None
    return x_lo, x_hi, y_lo, y_hi


def p_peak(m: AttentionMap, b: BBox, tau: float) -> bool:
    """True when some pixel inside the box exceeds the threshold (strictly)."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    region = _pixel_region(b, m.height, m.width)
    if region is None:
        return False
    x_lo, x_hi, y_lo, y_hi = region
    peak = float(np.max(m.grid[y_lo : y_hi + 1, x_lo : x_hi + 1]))
    return peak > tau


def p_global(m: AttentionMap, b: BBox) -> bool:
    """True when the box's mean attention strictly exceeds the global mean."""
    region = _pixel_region(b, m.height, m.width)
    if region is None:
        return False
    x_lo, x_hi, y_lo, y_hi = region
    patch = m.grid[y_lo : y_hi + 1, x_lo : x_hi + 1]
    region_mean = _seq_sum(patch) / patch.size
    global_mean = _seq_sum(m.grid) / m.grid.size
    return region_mean > global_mean


def gate(m: AttentionMap, b: BBox, tau: float) -> int:
    """1 when the map is devoted to the target box (peak and global checks), else 0."""
    return 1 if p_peak(m, b, tau) and p_global(m, b) else 0


def toy_attention(policy: GridPolicy, sample: Sample) -> AttentionMap:
    """Render the policy's cell probabilities as an attention map.

    Desk-scale stand-in for decoder attention: the probability grid goes
    through the same projection and normalization as aggregated attention.
    """
    screen = synth_screen(sample)
    probs = policy_distribution(policy, sample)
    grid = probs.reshape(screen.rows, screen.cols)
    return AttentionMap(_project_grid(grid, sample.screen))


def write_attention_map(m: AttentionMap, path: str) -> None:
    """Write the inspection format: one JSON header line plus f32le pixels."""
    header = json.dumps({"h": m.height, "w": m.width, "dtype": "f32le"}, sort_keys=True)
    with open(path, "wb") as fh:
        fh.write(header.encode("utf-8") + b"\n")
        fh.write(np.ascontiguousarray(m.grid, dtype="<f4").tobytes())


def read_attention_map(path: str) -> AttentionMap:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("dtype") != "f32le":
            raise ValueError(f"unsupported attention map dtype {header.get('dtype')!r}")
        h, w = int(header["h"]), int(header["w"])
        data = fh.read(h * w * 4)
    if len(data) != h * w * 4:
        raise ValueError(f"attention map payload truncated: expected {h * w * 4} bytes, got {len(data)}")
    grid = np.frombuffer(data, dtype="<f4").astype(np.float64).reshape(h, w)
    return AttentionMap(grid)


def write_heatmap_ppm(m: AttentionMap, path: str) -> None:
    """Dump a binary PPM heatmap (black -> red -> yellow -> white) for eyeballing."""
    v = m.grid
    r = np.clip(3.0 * v, 0.0, 1.0)
    g = np.clip(3.0 * v - 1.0, 0.0, 1.0)
    b = np.clip(3.0 * v - 2.0, 0.0, 1.0)
    rgb = np.stack([r, g, b], axis=-1)
    pixels = (rgb * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{m.width} {m.height}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
