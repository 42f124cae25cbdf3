"""Seed-data curation: regex, judge scoring, and difficulty filtering.

Plants known junk in a synthetic dataset and runs the three-fold pipeline
with a scripted judge, showing where each rejection lands.
"""

import numpy as np

from segui.core import Sample
from segui.curation import CurationConfig, ExternalJudge, run_pipeline
from segui.synthgym import GridPolicy, generate_dataset, sample_rollout
from segui.trainer import TrainConfig, initial_policy

data = generate_dataset(seed=11, count=60)

# plant junk instructions that the regex stage should catch
planted = []
for i, s in enumerate(data):
    if i % 10 == 0:
        planted.append(Sample(s.id, s.screen, s.screen_source, "<QPushButton>", s.gt_bbox))
    else:
        planted.append(s)


class ScriptedJudge(ExternalJudge):
    """Stands in for an MLLM: rejects ids ending in 7 at the instruction stage."""

    def complete(self, sample_id, kind, prompt):
        if kind == "instruction" and sample_id.endswith("7"):
            return "The phrasing is ambiguous.\n\nConclusion\nNo"
        return "Conclusion\nYes"


policy = initial_policy(TrainConfig(seed=0), 8)


def rollout_fn(sample, rng):
    return sample_rollout(policy, sample, rng, p_garble=0.0)


kept, report = run_pipeline(planted, ScriptedJudge(), rollout_fn, CurationConfig(seed=5))

print(f"input:               {report.input_count}")
print(f"regex rejected:      {report.regex_rejected}   (planted widget names)")
print(f"instruction rejected:{report.instr_rejected:4d}   (scripted judge)")
print(f"bbox rejected:       {report.bbox_rejected}")
print(f"difficulty rejected: {report.difficulty_rejected}   (all 8 rollouts already hit)")
print(f"kept:                {report.kept}")

print("\nfirst few flag trails:")
for entry in report.trail[:5]:
    print(" ", entry["id"], entry["flags"], "->", "kept" if entry["kept"] else entry["rejected_by"])
