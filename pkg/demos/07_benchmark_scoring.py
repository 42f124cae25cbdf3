"""Benchmark-style scoring with the Text / Icon / Avg. breakdown.

Tags a synthetic dataset with categories and element types, trains a quick
policy, and prints the aligned accuracy table.
"""

from segui.evalkit import BenchRecord, format_report_table, report_to_json, score_predictions
from segui.synthgym import generate_dataset, greedy_point
from segui.trainer import TrainConfig, initial_policy, split_dataset, train_stage

data = generate_dataset(seed=7, count=240)
train_ds, eval_ds = split_dataset(data)
cfg = TrainConfig(seed=0, epochs=5)
policy, _ = train_stage(initial_policy(cfg, 8), train_ds, [1] * len(train_ds), cfg, eval_ds)

categories = ("CAD", "Dev", "Office")
records = [
    BenchRecord(s, category=categories[i % 3], elem_type="text" if i % 2 else "icon")
    for i, s in enumerate(eval_ds)
]
predictions = {r.sample.id: greedy_point(policy, r.sample) for r in records}
report = score_predictions(records, predictions)

print(format_report_table(report))
print(f"\noverall: {report['overall']['hits']}/{report['overall']['total']} hits")
print("\nfull report JSON:")
print(report_to_json(report))
