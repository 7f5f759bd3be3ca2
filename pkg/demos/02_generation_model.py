"""Probabilistic wind-to-power generation with a neural quantile function.

An LSTM reads wind speed and its own previous output; a feedforward head
turns the hidden state and a quantile level into a power quantile. At
generation time the level follows a smooth random walk, which yields
realistic power series that are not all pinned to the median.
"""
import numpy as np

from hybridwind import nqf
from hybridwind.econ import FarmSpec
from hybridwind.metrics import power_curve_similarity
from hybridwind.series import split_train_test, synth_dataset

farm = FarmSpec()
train, valid = split_train_test(synth_dataset(1, seed=3, farm=farm), 0.7)

# a small network trains in seconds; the default config is larger
cfg = nqf.NqfConfig(hidden=8, ff=(8,), epochs=30, seq_len=24, batch=16, lr=1e-2)
result = nqf.train_nqf(train, valid, cfg, farm.capacity_mw, seed=0)
model = result.model
print(f"validation loss: untrained {result.history[0]['valid_loss']:.4f}, "
      f"trained {result.history[-1]['valid_loss']:.4f}")

# quantile paths over one validation day are ordered by level
day = valid.v[:24]
p0 = valid.g[0] / farm.capacity_mw
paths = {a: nqf.nqf_forward(day, a, model.params, p0, model.v_scale) for a in (0.05, 0.5, 0.95)}
print("\nhour  wind   q05    q50    q95    observed")
for t in range(0, 24, 4):
    print(f"{t:>4}  {day[t]:5.1f}  " + "  ".join(f"{paths[a][t]:.3f}" for a in paths)
          + f"  {valid.g[t] / farm.capacity_mw:.3f}")

# random-walk generation: different seeds, same power curve
metrics = [nqf.evaluate(model, valid, seed=s) for s in range(3)]
for s, m in enumerate(metrics):
    print(f"walk seed {s}: rmse {m['rmse']:.4f}  xcorr {m['xcorr']:.4f}  similarity {m['similarity']:.4f}")
a = nqf.generate(model, valid.v, seed=1) / farm.capacity_mw
b = nqf.generate(model, valid.v, seed=2) / farm.capacity_mw
print(f"two walks differ in {np.mean(a != b):.0%} of hours, power-curve similarity "
      f"{power_curve_similarity((valid.v, a), (valid.v, b)):.3f}")
