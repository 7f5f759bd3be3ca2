"""Wind-power generation modeling and storage-aware dispatch networks."""
from .econ import (
    COVE_DISPLAY_SCALE,
    HOURS_PER_YEAR,
    AnnualMetrics,
    FarmSpec,
    StorageCatalog,
    StorageSpec,
    annual_report,
    average_annual,
    cove,
    default_catalog,
    lcoe,
    value_factor,
)
from .series import (
    SeriesFrame,
    SynthConfig,
    ingest_csv,
    make_batches,
    split_train_test,
    synth_dataset,
    write_csv,
)
from .dispatch import DispatchTrace, baseload_policy, post_process_step, simulate, simulate_baseload

__version__ = "0.1.0"
