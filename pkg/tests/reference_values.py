"""Published inputs and expected outputs for the GAP and yield calculations."""

from oramig.gap import FeatureQuality, YieldFeature

FEATURES = ["CORE_SQL", "PL_SQL", "SQL_PLUS", "DATABASE_MANAGEMENT", "RMAN"]

TRAIN_COUNTS = {"CORE_SQL": 716920, "PL_SQL": 336728, "SQL_PLUS": 169776,
                "DATABASE_MANAGEMENT": 13503, "RMAN": 473}

GAP_DICT = [0.00, 0.53, 0.76, 0.98, 0.99]

# conversion pipeline, tuned model; the syntax figure is already 1 - SER
QUALITY = dict(recall=0.819011, bleu=0.812023, chrf=0.823018, syntax_correctness=0.882908,
               aggregated=0.771871)
Q_RAW = 0.9761404
Q_NORM = 0.81345033
GAP_QUALITY = 0.18654967

GAP_FEATURE = [10.18, 36.84, 44.05, 49.55, 49.78]


def quality_report():
    """Same scores for every class, as in the worked example."""
    return {"conversion": {f: FeatureQuality(f, **QUALITY) for f in FEATURES}}


YIELD_FEATURES = [
    YieldFeature("Core_SQL", 74.6, 28210, 82),
    YieldFeature("PL_SQL", 69.1, 22260, 82),
    YieldFeature("SQL+", 71.2, 36230, 82),
    YieldFeature("DB_MAN", 32.6, 10210, 82),
    YieldFeature("RMAN", 67.6, 39170, 82),
]
YIELD_BASELINE = [9345, 10640, 12181, 3600, 11998]
YIELD_ROWS = [17263, 12613, 21157, 2729, 21692]
YIELD_TOTAL = 75454
YIELD_BASELINE_TOTAL = 47764
YIELD_DIFFERENCE = 27690
SME_DAYS = 184
SAMPLES_PER_DAY = 150
