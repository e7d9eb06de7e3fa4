"""Train a detector on a synthetic series and score its test half.

Walks the whole pipeline in one sitting: generate a labeled periodic series,
normalize with train-region statistics, estimate the dominant period, fit a
model, then score the test region and print the evaluation report.

Run:  python3 demos/quickstart.py
"""

import numpy as np

from coopad import metrics
from coopad.data import estimate_period, train_stats, zscore
from coopad.model import CoopConfig, CoopModel
from coopad.score import detect
from coopad.synth import gen_periodic
from coopad.data import RawSeries
from coopad.train import TrainConfig, fit

# A 8k-point sine with two injected anomalies in the second half: a flat
# constant segment and a burst of heavy noise.
values, labels = gen_periodic(
    8_000, period=40, noise_std=0.05,
    anomalies=[("uniform_replacement", 5_000, 5_039),
               ("jittering", 6_500, 6_549)],
    seed=1)
series = RawSeries(values=values, name="quickstart", split=4_000,
                   labels=labels)

# Normalization statistics must come from the train region only: the test
# half contains the anomalies we are trying to find.
stats = train_stats(series)
norm = zscore(series.values, stats)
period = estimate_period(norm[: series.split]).period
print(f"estimated dominant period: {period}")

config = CoopConfig.for_period(period)
model = CoopModel(config, seed=0)
print(f"window T={config.T}, {config.N} patches of {config.P}, "
      f"{model.num_params()} parameters")

log = fit(norm[: series.split], period, model,
          TrainConfig(epochs=40, batch=16, seed=0))
print(f"trained 40 epochs, final loss {log.epochs[-1][3]:.4f}")

result = detect(norm[series.split:], model)
report = metrics.evaluate(result.smoothed, series.test_labels)
print(f"F1        {report.f1:.4f}")
print(f"AUC-PR    {report.auc_pr:.4f}")
print(f"R-AUC-PR  {report.r_auc_pr:.4f}")
print(f"VUS-PR    {report.vus_pr:.4f}")

# Where does the model think the anomalies are?
for start, end in metrics.anomaly_ranges(series.test_labels):
    peak = start + int(np.argmax(result.smoothed[start:end + 1]))
    print(f"anomaly [{start}, {end}]: peak smoothed score "
          f"{result.smoothed[peak]:.3f} at {peak} "
          f"(background mean {result.smoothed[series.test_labels == 0].mean():.3f})")
