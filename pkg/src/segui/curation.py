"""Three-fold seed-data filter: instruction quality, box validity, difficulty.

The pipeline applies, in order: a regex screen for junk instructions, an
external judge scoring instruction quality, the same judge scoring bounding
box validity, and a rollout-based difficulty screen that drops samples a
reference policy already solves eight times out of eight. Judge responses
that cannot be parsed count as rejections (the pipeline exists to raise
precision, so it fails closed).
"""

from __future__ import annotations

import json
import os
import re
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

import requests

from .core import Point, Rollout, Sample, point_in_bbox
from .rng import stable_hash, substream

JUDGE_TOKEN_ENV = "SEGUI_JUDGE_TOKEN"

INSTRUCTION_PROMPT = """Analyze whether the instruction text precisely identifies the UI element in the image based on:
1. Does the instruction EXACTLY match visible text/core function?
2. Could the instruction confuse similar elements in context?
3. Does it clearly indicate the required action without ambiguity?

Instruction to evaluate: {instruction}

Conclude with your final determination:

Conclusion
Yes (if all criteria are met)
No (if any criterion fails)"""

BBOX_PROMPT = """Analyze the provided cropped image from a screenshot to determine whether it contains a single, valid, and visually complete UI element.

Criteria for validity:

- The image must contain exactly one UI element.
- The element must be entirely visible within the cropped area, with no significant cut-off parts.
- The image should not consist solely of background, empty space, or meaningless fragments.

Response format:

Conclude with your final determination in a dedicated section:

Conclusion
Yes (if the image contains a single, valid, and complete UI element)
No (if it does not meet the criteria)"""

# Junk shapes seen in auto-scraped grounding data: raw widget class names in
# angle brackets, bare dotted class paths, and empty instructions.
DEFAULT_PATTERNS = (
    r"<\s*/?[A-Za-z_][A-Za-z0-9_]*\s*/?>",
    r"^\s*[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)+\s*$",
    r"^\s*$",
)


class JudgeTransportError(RuntimeError):
    """Raised when a judge backend cannot deliver a response; retriable."""


class CurationAbort(RuntimeError):
    """Pipeline aborted mid-run; carries the partial report accumulated so far."""

    def __init__(self, message: str, report: "CurationReport"):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class ScorerVerdict:
    sample_id: str
    kind: str  # "instruction" or "bbox"
    verdict: str  # "yes" or "no"
    raw_response: str


@dataclass
class CurationReport:
    """Stage-by-stage rejection counts plus the per-sample flag trail."""

    input_count: int = 0
    regex_rejected: int = 0
    instr_rejected: int = 0
    bbox_rejected: int = 0
    difficulty_rejected: int = 0
    kept: int = 0
    trail: list[dict] = field(default_factory=list)

    def check_partition(self) -> None:
        total = (
            self.regex_rejected
            + self.instr_rejected
            + self.bbox_rejected
            + self.difficulty_rejected
            + self.kept
        )
        if total != self.input_count:
            raise AssertionError(f"report counts {total} do not partition input_count {self.input_count}")

    def to_dict(self) -> dict:
        return {
            "input_count": self.input_count,
            "regex_rejected": self.regex_rejected,
            "instr_rejected": self.instr_rejected,
            "bbox_rejected": self.bbox_rejected,
            "difficulty_rejected": self.difficulty_rejected,
            "kept": self.kept,
            "trail": self.trail,
        }


class ExternalJudge(ABC):
    """Judge client interface; kind is 'instruction' or 'bbox'."""

    @abstractmethod
    def complete(self, sample_id: str, kind: str, prompt: str) -> str:
        raise NotImplementedError


class HttpJudge(ExternalJudge):
    """Chat-completions client; auth token read from SEGUI_JUDGE_TOKEN."""

    def __init__(self, url: str, model: str = "judge", timeout: float = 30.0, retries: int = 0, session=None):
        self.url = url
        self.model = model
        self.timeout = timeout
        self.retries = retries
        self._session = session or requests.Session()

    def complete(self, sample_id: str, kind: str, prompt: str) -> str:
        headers = {}
        token = os.environ.get(JUDGE_TOKEN_ENV)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        body = {"model": self.model, "messages": [{"role": "user", "content": prompt}]}
        last: Exception | None = None
        for _ in range(self.retries + 1):
            try:
                resp = self._session.post(self.url, json=body, headers=headers, timeout=self.timeout)
                resp.raise_for_status()
                data = resp.json()
                return data["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last = exc
        raise JudgeTransportError(f"judge call failed for {sample_id} ({kind}): {last}") from last


class ReplayJudge(ExternalJudge):
    """Deterministic judge replaying canned transcripts from a JSONL file."""

    def __init__(self, path: str):
        self._responses: dict[tuple[str, str], str] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                self._responses[(entry["sample_id"], entry["kind"])] = entry["response"]

    def complete(self, sample_id: str, kind: str, prompt: str) -> str:
        try:
            return self._responses[(sample_id, kind)]
        except KeyError as exc:
            raise JudgeTransportError(f"no replay transcript for {sample_id} ({kind})") from exc


_CONCLUSION_RE = re.compile(r"conclusion\s*:?\s*\n?\s*(yes|no)\b", re.IGNORECASE)


def parse_verdict(text: str) -> str:
    """Extract the trailing Yes/No after the Conclusion section; fail closed."""
    matches = _CONCLUSION_RE.findall(text)
    if not matches:
        return "no"
    return matches[-1].lower()


def compile_patterns(patterns: Sequence[str]) -> list[re.Pattern]:
    compiled = []
    for pat in patterns:
        try:
            compiled.append(re.compile(pat))
        except re.error as exc:
            raise ValueError(f"invalid curation pattern {pat!r}: {exc}") from exc
    return compiled


def regex_filter(instruction: str, patterns: Sequence[re.Pattern | str]) -> bool:
    """Keep the instruction iff no pattern matches anywhere in it."""
    for pat in patterns:
        if isinstance(pat, str):
            pat = re.compile(pat)
        if pat.search(instruction):
            return False
    return True


def _crop_descriptor(sample: Sample) -> str:
    b = sample.gt_bbox
    source = sample.screen_source if isinstance(sample.screen_source, str) else "synthetic screen"
    return (
        f"\n\nCropped region: bbox [{b.x1}, {b.y1}, {b.x2}, {b.y2}] of a "
        f"{sample.screen.width}x{sample.screen.height} screenshot ({source})."
    )


def judge_instruction(sample: Sample, judge: ExternalJudge) -> ScorerVerdict:
    prompt = INSTRUCTION_PROMPT.replace("{instruction}", sample.instruction)
    raw = judge.complete(sample.id, "instruction", prompt)
    return ScorerVerdict(sample.id, "instruction", parse_verdict(raw), raw)


def judge_bbox(sample: Sample, judge: ExternalJudge) -> ScorerVerdict:
    prompt = BBOX_PROMPT + _crop_descriptor(sample)
    raw = judge.complete(sample.id, "bbox", prompt)
    return ScorerVerdict(sample.id, "bbox", parse_verdict(raw), raw)


RolloutFn = Callable[[Sample, np.random.Generator], Rollout]


def difficulty_filter(
    sample: Sample,
    rollout_fn: RolloutFn,
    k: int = 8,
    rng: np.random.Generator | None = None,
) -> bool:
    """Keep the sample unless all k stochastic rollouts hit the box.

    A rollout that fails (raises, or produces no point) counts as incorrect,
    which keeps the sample.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = rng if rng is not None else np.random.default_rng(0)
    for _ in range(k):
        try:
            rollout = rollout_fn(sample, rng)
        except Exception:
            return True
        if rollout.point is None or not point_in_bbox(rollout.point, sample.gt_bbox):
            return True
    return False


@dataclass(frozen=True)
class CurationConfig:
    patterns: tuple[str, ...] = DEFAULT_PATTERNS
    difficulty_rollouts: int = 8
    seed: int = 0
    workers: int = 1


def run_pipeline(
    samples: Iterable[Sample],
    judge: ExternalJudge,
    rollout_fn: RolloutFn,
    config: CurationConfig | None = None,
) -> tuple[list[Sample], CurationReport]:
    """Apply the filters in order regex -> instruction -> bbox -> difficulty.

    Deterministic given the judge transcripts and the seed: each sample's
    difficulty rollouts come from a substream keyed by the sample id, so the
    outcome is independent of position, subset, and worker count.

    A judge transport failure aborts with :class:`CurationAbort`, which
    carries the partial report accumulated up to the failing stage.
    """
    config = config or CurationConfig()
    patterns = compile_patterns(config.patterns)
    samples = list(samples)
    report = CurationReport(input_count=len(samples))

    state: list[dict] = [{"id": s.id, "flags": {}, "kept": False, "rejected_by": None} for s in samples]
    live: list[int] = []
    current: list[Sample] = list(samples)

    for i, sample in enumerate(samples):
        ok = regex_filter(sample.instruction, patterns)
        state[i]["flags"]["regex_pass"] = ok
        if ok:
            current[i] = sample.with_flag("regex_pass")
            live.append(i)
        else:
            state[i]["rejected_by"] = "regex"
            report.regex_rejected += 1

    def _map(fn, indices):
        if config.workers > 1 and len(indices) > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                return list(pool.map(fn, indices))
        return [fn(i) for i in indices]

    for kind, flag, judge_fn, counter in (
        ("instruction", "instr_score_pass", judge_instruction, "instr_rejected"),
        ("bbox", "bbox_score_pass", judge_bbox, "bbox_rejected"),
    ):
        try:
            verdicts = _map(lambda i: judge_fn(current[i], judge), live)
        except (JudgeTransportError, OSError) as exc:
            report.trail = state
            raise CurationAbort(f"curation aborted during {kind} scoring: {exc}", report) from exc
        survivors = []
        for i, verdict in zip(live, verdicts):
            ok = verdict.verdict == "yes"
            state[i]["flags"][flag] = ok
            if ok:
                current[i] = current[i].with_flag(flag)
                survivors.append(i)
            else:
                state[i]["rejected_by"] = kind
                setattr(report, counter, getattr(report, counter) + 1)
        live = survivors

    def _difficulty(i: int) -> bool:
        sample = current[i]
        rng = substream(config.seed, "difficulty", stable_hash(sample.id))
        return difficulty_filter(sample, rollout_fn, config.difficulty_rollouts, rng)

    keeps = _map(_difficulty, live)
    kept_samples = []
    for i, ok in zip(live, keeps):
        state[i]["flags"]["difficulty_pass"] = ok
        if ok:
            current[i] = current[i].with_flag("difficulty_pass")
            state[i]["kept"] = True
            kept_samples.append(current[i])
            report.kept += 1
        else:
            state[i]["rejected_by"] = "difficulty"
            report.difficulty_rejected += 1

    report.trail = state
    report.check_partition()
    return kept_samples, report
