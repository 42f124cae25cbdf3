"""Attention aggregation and the per-sample loss gate.

Builds a tiny raw attention stack by hand, walks it through the
aggregation pipeline, then shows the two gating predicates on maps that
pass and fail.
"""

import numpy as np

from segui.attention import (
    RawAttention,
    aggregate_attention,
    gate,
    p_global,
    p_peak,
    toy_attention,
    write_heatmap_ppm,
)
from segui.core import BBox, ScreenSize
from segui.synthgym import GridPolicy, generate_dataset

# two decoder layers, one generated token, a 2x2 vision grid embedded in a
# longer token sequence (positions 3..6)
layers = np.zeros((2, 1, 9))
layers[0, 0, 3] = 5.0   # layer 0 attends to vision cell 0
layers[1, 0, 6] = 1.0   # layer 1 attends to vision cell 3
layers[:, :, 0] = 2.0   # text-token attention is discarded by the vision restriction

raw = RawAttention(layers, vision_start=3, vision_end=7, grid_rows=2, grid_cols=2)
m = aggregate_attention(raw, ScreenSize(4, 4))
print("aggregated 4x4 map (cells 0 and 3 each carried one layer's mass):")
print(np.round(m.grid, 3))

box = BBox(0, 0, 2, 2)  # the top-left cell
print(f"\ngate on the top-left cell: peak={p_peak(m, box, 0.2)} "
      f"global={p_global(m, box)} -> f={gate(m, box, 0.2)}")

# the gate on real samples: a policy's probability map plays the role of
# the aggregated attention
sample = generate_dataset(seed=3, count=1)[0]
uniform = GridPolicy(np.zeros((8, 8)))
confident = GridPolicy(5.0 * np.eye(8), temperature=0.25)
for name, policy in (("uniform", uniform), ("confident", confident)):
    attn = toy_attention(policy, sample)
    print(f"{name:>10} policy: gate={gate(attn, sample.gt_bbox, 0.2)}")

write_heatmap_ppm(toy_attention(confident, sample), "attention_map.ppm")
print("\nwrote attention_map.ppm for the confident policy")
