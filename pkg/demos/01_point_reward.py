"""Dense point reward: what a near-miss is worth.

Sweeps a click along a ray through the target center and prints the dense
reward next to the sparse baseline, then renders the full reward field as
a PPM heatmap.
"""

import numpy as np

from segui.attention import AttentionMap, write_heatmap_ppm
from segui.core import BBox, Point, ScreenSize
from segui.reward import d_max, normalized_distance, point_reward, sparse_point_reward

screen = ScreenSize(512, 512)
box = BBox(192, 224, 256, 288)

print(f"screen {screen.width}x{screen.height}, target box "
      f"[{box.x1:.0f}, {box.y1:.0f}, {box.x2:.0f}, {box.y2:.0f}]")
print(f"d_max (center to farthest corner, normalized) = {d_max(box, screen):.4f}\n")

print(f"{'click x':>8}  {'dist':>7}  {'dense':>6}  {'sparse':>6}")
center = box.center
for offset in (0, 16, 31, 33, 64, 128, 256):
    p = Point(center.x + offset, center.y)
    print(
        f"{p.x:8.0f}  {normalized_distance(p, box, screen):7.4f}  "
        f"{point_reward(p, box, screen):6.3f}  {sparse_point_reward(p, box):6.0f}"
    )

print("\nnote the jump of exactly 1.0 when the click leaves the box (offset 31 -> 33),")
print("while the sparse baseline gives zero signal everywhere outside.")

# render the whole field: reward is in [0, 2], so halve it for the heatmap
ys, xs = np.mgrid[0:512:4, 0:512:4]
field = np.zeros_like(xs, dtype=float)
for i in range(xs.shape[0]):
    for j in range(xs.shape[1]):
        field[i, j] = point_reward(Point(float(xs[i, j]), float(ys[i, j])), box, screen)
write_heatmap_ppm(AttentionMap(field / 2.0), "reward_field.ppm")
print("\nwrote reward_field.ppm (brighter = higher reward)")
