"""
Where to spend annotation effort
================================

Turn training-set counts and per-class quality into a GAP percentage,
then project how many extra files a tuned model converts over a baseline.
The numbers are the worked example for the tuned conversion pipeline.
"""

import numpy as np

from oramig.gap import FeatureQuality, YieldFeature, estimate_dataset, project_yield

counts = {"CORE_SQL": 716920, "PL_SQL": 336728, "SQL_PLUS": 169776,
          "DATABASE_MANAGEMENT": 13503, "RMAN": 473}
scores = dict(recall=0.819011, bleu=0.812023, chrf=0.823018, syntax_correctness=0.882908,
              aggregated=0.771871)
report = {"conversion": {f: FeatureQuality(f, **scores) for f in counts}}

# Two decimals, truncated, reproduces the published GAP_Dict column.
records = estimate_dataset(counts, report, gap_dict_decimals=2)
print(f"{'feature':<20} {'gap_dict':>8} {'GAP %':>7} {'request':>9}")
for r in records:
    print(f"{r.feature:<20} {r.gap_dict:8.2f} {r.gap_feature_pct:7.2f} {r.samples_requested:9d}")

# The share of the remaining gap each class accounts for.
pct = np.array([r.gap_feature_pct for r in records])
print("share of total gap:", np.round(pct / pct.sum(), 3))

features = [YieldFeature("Core_SQL", 74.6, 28210, 82), YieldFeature("PL_SQL", 69.1, 22260, 82),
            YieldFeature("SQL+", 71.2, 36230, 82), YieldFeature("DB_MAN", 32.6, 10210, 82),
            YieldFeature("RMAN", 67.6, 39170, 82)]
baseline = [9345, 10640, 12181, 3600, 11998]
y = project_yield(features, baseline, samples_per_day=150)
print()
print(y.to_csv(), end="")
print(f"{y.difference:.0f} more files than the baseline, "
      f"about {y.sme_days:.0f} expert days ({y.sme_weeks:.1f} weeks, {y.sme_months:.1f} months)")
