"""Choosing storage and tuning the dispatch loss.

First every storage option in a reduced space is scored under baseload
dispatch. Then a short random search over the loss weights runs with early
termination: trials that are not strictly better than the incumbent at the
probe epoch stop there.
"""
import tempfile
from pathlib import Path

from hybridwind import tuner
from hybridwind.cove_nn import CoveConfig
from hybridwind.econ import FarmSpec, default_catalog
from hybridwind.series import split_train_test, synth_dataset

farm = FarmSpec()
frame = synth_dataset(1, seed=5, farm=farm)

space = tuner.StorageSearchSpace({t: tuner.DEFAULT_SPACE[t] for t in ("Lithium-Ion", "CAES", "Thermal")})
ranked = tuner.storage_grid_search(frame, farm, default_catalog(), space)
print(f"{len(ranked)} storage options, best five:")
for r in ranked[:5]:
    row = r.as_row()
    print(f"  {row['rank']:>2}. {row['storage_type']:<12}{row['rating_MW']:>6g} MW {row['duration_h']:>5g} h"
          f"  COVE {row['avg_cove_usd_per_kwh_yr']:.4f} $/kWh-yr")

train, valid = split_train_test(frame, 0.7)
cfg = CoveConfig(hidden=4, ff=(8,), lr=1e-3, epochs=4, batch=16)
with tempfile.TemporaryDirectory() as tmp:
    log = Path(tmp) / "search.csv"
    res = tuner.cove_hyper_search(train, valid, cfg, trials=4, probe_epochs=2, seed=0, log_path=log)
    print(f"\nhyperparameter search log ({log.name}):")
    for rec in res.records:
        state = "stopped at probe" if rec.terminated_early else "ran to the end"
        print(f"  trial {rec.trial}: gamma {rec.hp['gamma']:.2f} Gamma {rec.hp['Gamma']:.2f} "
              f"omega {rec.hp['omega']:.2f} Omega {rec.hp['Omega']:.2f} Lambda {rec.hp['Lambda']:.3f}"
              f" -> best {rec.best_cove * 1000:.4f}, {state}")
    print(f"best trial {res.best.trial}")
