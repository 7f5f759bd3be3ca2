"""Storage-aware dispatch trained on an unsupervised economic loss.

The dispatch network sees generation, price, stored energy and a forecast
covariate, requests a capacity factor, and the post-processing step turns
that into feasible delivered power. Training minimises COVE plus two decaying
penalties that discourage idle full storage and oversupply at low prices.
"""
from hybridwind import cove_nn
from hybridwind.dispatch import simulate_baseload
from hybridwind.econ import COVE_DISPLAY_SCALE, FarmSpec, annual_report, default_catalog
from hybridwind.series import split_train_test, synth_dataset

farm = FarmSpec()
storage = default_catalog().lookup("CAES", 100, 24)
train, valid = split_train_test(synth_dataset(2, seed=7, farm=farm), 0.7)

base = simulate_baseload(valid, farm, storage, float(train.g.mean()))
(base_rep, *_) = annual_report(base, valid.g, storage, valid.p, farm)

cfg = cove_nn.CoveConfig(storage=storage, farm=farm, epochs=8)
result = cove_nn.train_cove(train, valid, cfg, seed=0)
for row in result.history:
    print(f"epoch {row['epoch']:>2}: validation COVE {row['valid_cove'] * COVE_DISPLAY_SCALE:.4f} $/kWh-yr")

trace = cove_nn.dispatch_trace(result.model, valid)
(rep, *_) = annual_report(trace, valid.g, storage, valid.p, farm)
print(f"\n{'':<10}{'COVE x1000':>12}{'VF':>8}{'util':>8}{'AEP MWh':>12}")
for name, r in (("baseload", base_rep), ("COVE-NN", rep)):
    print(f"{name:<10}{r.cove * COVE_DISPLAY_SCALE:>12.4f}{r.value_factor:>8.3f}{r.utilization:>8.3f}{r.aep:>12.0f}")
print(f"improvement over baseload: {100 * (1 - rep.cove / base_rep.cove):.1f}%")
