"""Published reference values for the three result tables, used for side-by-side output."""

TABLE_COLUMNS = (
    "fifo",
    "threshold-nonpreempt",
    "threshold-preempt",
    "srpt",
    "prediction-nonpreempt",
    "prediction-preempt",
    "sprpt",
)

TABLE_LAMBDAS = (0.50, 0.60, 0.70, 0.80, 0.90, 0.95, 0.98)

# exponential service, exponential predictions
TABLE1 = {
    0.50: (2.000, 1.783, 1.564, 1.425, 1.850, 1.698, 1.659),
    0.60: (2.500, 2.089, 1.814, 1.604, 2.209, 2.013, 1.940),
    0.70: (3.333, 2.542, 2.203, 1.875, 2.761, 2.517, 2.369),
    0.80: (5.000, 3.329, 2.910, 2.355, 3.757, 3.451, 3.143),
    0.90: (10.00, 5.278, 4.755, 3.552, 6.366, 5.960, 5.097),
    0.95: (20.00, 8.535, 7.914, 5.532, 10.848, 10.372, 8.424),
    0.98: (50.00, 16.495, 15.735, 10.436, 22.418, 21.909, 16.696),
}

# Weibull service (shape 1/2, mean 1), exponential predictions
TABLE2 = {
    0.50: (4.000, 3.012, 1.608, 1.411, 3.155, 1.736, 1.940),
    0.60: (5.500, 3.676, 1.867, 1.574, 3.918, 2.062, 2.280),
    0.70: (8.000, 4.565, 2.258, 1.813, 4.983, 2.568, 2.750),
    0.80: (13.00, 5.955, 2.951, 2.217, 6.721, 3.481, 3.519),
    0.90: (29.00, 8.940, 4.649, 3.154, 10.630, 5.790, 5.224),
    0.95: (58.00, 13.223, 7.448, 4.517, 16.546, 9.846, 7.788),
    0.98: (148.0, 22.451, 15.194, 7.666, 29.346, 20.918, 13.404),
}

# 1000 queues, two choices: (simulation, mean-field) per row; None where not reported
TABLE3_BASELINES = {
    "one-choice-fifo": 24.208,
    "least-loaded-srpt": 2.366,
    "shorter-fifo": 4.967,
}

TABLE3_PREDICTIONS = {
    (0.0, 0.0): (3.394, 3.392),
    (0.1, 0.1): (3.690, 3.688),
    (0.2, 0.2): (4.010, 4.007),
    (0.3, 0.3): (4.353, 4.347),
    (0.4, 0.4): (4.717, 4.711),
    (0.5, 0.5): (5.105, 5.098),
    (0.2, 0.4): (4.280, 4.276),
    (0.4, 0.2): (4.402, 4.395),
    (0.11, 0.61): (4.617, 4.611),
}


def published(table: int, lam: float, column: str) -> float:
    data = {1: TABLE1, 2: TABLE2}[table]
    return data[lam][TABLE_COLUMNS.index(column)]
