"""Shared domain types, geometry, and click-text parsing.

Coordinates are kept as floats end to end; rounding happens only at
serialization. Predicted points are never clamped to the screen.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, replace
from typing import Any, Iterable, Iterator


class DatasetError(ValueError):
    """Raised for malformed or invariant-violating dataset records."""


CURATION_FLAGS = ("regex_pass", "instr_score_pass", "bbox_score_pass", "difficulty_pass")


@dataclass(frozen=True)
class ScreenSize:
    """Screen dimensions in pixels."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"screen dimensions must be >= 1, got {self.width}x{self.height}")


@dataclass(frozen=True)
class Point:
    """A click location in pixel coordinates; may lie outside the screen."""

    x: float
    y: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"point coordinates must be finite, got ({self.x}, {self.y})")


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box [x1, y1, x2, y2]; edges belong to the box."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self) -> None:
        for name in ("x1", "y1", "x2", "y2"):
            object.__setattr__(self, name, float(getattr(self, name)))
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not math.isfinite(v):
                raise ValueError("bbox coordinates must be finite")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(f"degenerate bbox: [{self.x1}, {self.y1}, {self.x2}, {self.y2}]")

    @property
    def center(self) -> Point:
        return Point((self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0)

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    def within_screen(self, screen: ScreenSize) -> bool:
        return 0 <= self.x1 and 0 <= self.y1 and self.x2 <= screen.width and self.y2 <= screen.height


@dataclass(frozen=True)
class Sample:
    """One grounding task: a screen, an instruction, and a ground-truth box.

    ``screen_source`` is either a synthetic screen descriptor or an opaque
    image path consumed by external scorers; this module never decodes it.
    """

    id: str
    screen: ScreenSize
    screen_source: Any
    instruction: str
    gt_bbox: BBox
    curation_flags: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if not self.gt_bbox.within_screen(self.screen):
            raise ValueError(f"sample {self.id!r}: gt_bbox outside the {self.screen.width}x{self.screen.height} screen")
        bad = set(self.curation_flags) - set(CURATION_FLAGS)
        if bad:
            raise ValueError(f"unknown curation flags: {sorted(bad)}")

    def with_flag(self, flag: str) -> "Sample":
        return replace(self, curation_flags=self.curation_flags | {flag})


@dataclass(frozen=True)
class Rollout:
    """One sampled response and its bookkeeping for the policy update.

    ``logprob_old`` is fixed at generation time; ``logprob_new`` is the same
    action's log-probability under the policy being updated (equal to old at
    generation). ``action_index`` is the sampled grid cell for toy policies.
    """

    sample_id: str
    raw_text: str
    point: Point | None
    format_valid: bool
    logprob_new: float
    logprob_old: float
    action_index: int = -1

    def __post_init__(self) -> None:
        if self.format_valid and self.point is None:
            raise ValueError("format_valid rollout must carry a point")
        for lp in (self.logprob_new, self.logprob_old):
            if not math.isfinite(lp) or lp > 0:
                raise ValueError(f"log-probabilities must be finite and <= 0, got {lp}")


def point_in_bbox(p: Point, b: BBox) -> bool:
    """Closed-box membership: boundary points count as inside."""
    return b.x1 <= p.x <= b.x2 and b.y1 <= p.y <= b.y2


_TOOL_CALL_RE = re.compile(r"<tool_call>(.*?)</tool_call>", re.DOTALL)


def parse_click_point(raw_text: str) -> tuple[Point | None, bool]:
    """Extract the click coordinate from a tool-call response.

    Expects exactly one ``<tool_call>{...}</tool_call>`` block whose JSON
    object carries a two-element numeric ``arguments.coordinate``. Returns
    ``(point, True)`` on success and ``(None, False)`` otherwise; never raises.
    """
    blocks = _TOOL_CALL_RE.findall(raw_text)
    if len(blocks) != 1:
        return None, False
    try:
        obj = json.loads(blocks[0])
    except json.JSONDecodeError:
        return None, False
    if not isinstance(obj, dict):
        return None, False
    args = obj.get("arguments")
    if not isinstance(args, dict):
        return None, False
    coord = args.get("coordinate")
    if not isinstance(coord, (list, tuple)) or len(coord) != 2:
        return None, False
    x, y = coord
    if isinstance(x, bool) or isinstance(y, bool):
        return None, False
    if not isinstance(x, (int, float)) or not isinstance(y, (int, float)):
        return None, False
    if not (math.isfinite(x) and math.isfinite(y)):
        return None, False
    return Point(float(x), float(y)), True


def render_click_point(p: Point) -> str:
    """Render a point into the canonical tool-call template.

    Round-trips exactly through :func:`parse_click_point`.
    """
    payload = {"name": "computer_use", "arguments": {"action": "click", "coordinate": [p.x, p.y]}}
    return f"<tool_call>{json.dumps(payload)}</tool_call>"


def sample_to_record(sample: Sample) -> dict:
    """Serialize a sample into the line-oriented dataset record form."""
    if isinstance(sample.screen_source, str):
        source: dict = {"kind": "image", "path": sample.screen_source}
    elif isinstance(sample.screen_source, dict):
        source = sample.screen_source
    else:
        source = sample.screen_source.to_source_dict()
    return {
        "id": sample.id,
        "instruction": sample.instruction,
        "bbox": [sample.gt_bbox.x1, sample.gt_bbox.y1, sample.gt_bbox.x2, sample.gt_bbox.y2],
        "screen": {"w": sample.screen.width, "h": sample.screen.height},
        "source": source,
    }


def record_to_sample(record: dict, lineno: int = 0) -> Sample:
    """Validate one dataset record and build a Sample.

    Synthetic sources are kept as plain dicts here; ``synthgym.load_dataset``
    upgrades them to full screen descriptors.
    """
    where = f"line {lineno}: " if lineno else ""
    try:
        sid = record["id"]
        instruction = record["instruction"]
        bbox = record["bbox"]
        screen = record["screen"]
        source = record["source"]
    except (KeyError, TypeError) as exc:
        raise DatasetError(f"{where}missing field {exc}") from exc
    if not isinstance(sid, str) or not isinstance(instruction, str):
        raise DatasetError(f"{where}id and instruction must be strings")
    if not isinstance(bbox, list) or len(bbox) != 4:
        raise DatasetError(f"{where}bbox must be a 4-element list")
    try:
        size = ScreenSize(int(screen["w"]), int(screen["h"]))
        box = BBox(*(float(v) for v in bbox))
    except (ValueError, KeyError, TypeError) as exc:
        raise DatasetError(f"{where}{exc}") from exc
    if not isinstance(source, dict) or source.get("kind") not in ("synthetic", "image"):
        raise DatasetError(f"{where}source.kind must be 'synthetic' or 'image'")
    screen_source: Any = source["path"] if source["kind"] == "image" and "path" in source else source
    try:
        return Sample(id=sid, screen=size, screen_source=screen_source, instruction=instruction, gt_bbox=box)
    except ValueError as exc:
        raise DatasetError(f"{where}{exc}") from exc


def read_dataset(path: str) -> list[Sample]:
    """Read a JSONL dataset, rejecting invalid records with their line number."""
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            samples.append(record_to_sample(record, lineno))
    return samples


def write_dataset(samples: Iterable[Sample], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample_to_record(sample), sort_keys=True) + "\n")


def iter_records(path: str) -> Iterator[tuple[int, dict]]:
    """Yield (lineno, record) pairs without validation; used by streaming readers."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
