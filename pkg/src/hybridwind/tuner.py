"""Storage grid search under baseload and random search over loss weights."""
from __future__ import annotations

import csv
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .cove_nn import CoveConfig, LossHyperparams, TrainResult, train_cove
from .dispatch import simulate_baseload
from .econ import COVE_DISPLAY_SCALE, FarmSpec, StorageCatalog, annual_report, average_annual
from .errors import ConfigError, HybridWindError, NumericError
from .series import SeriesFrame

log = logging.getLogger(__name__)

DEFAULT_RATINGS = (100, 1000)
DEFAULT_SPACE: dict[str, tuple[tuple[float, ...], tuple[float, ...]]] = {
    "Lithium-Ion": (DEFAULT_RATINGS, (2, 4, 6, 8, 10, 24, 100)),
    "Hydropower": (DEFAULT_RATINGS, (4, 10, 24, 100)),
    "CAES": (DEFAULT_RATINGS, (4, 10, 24, 100)),
    "Hydrogen": (DEFAULT_RATINGS, (10, 24, 100)),
    "Gravitational": (DEFAULT_RATINGS, (2, 4, 6, 8, 10, 24, 100)),
    "Thermal": (DEFAULT_RATINGS, (4, 6, 8, 10, 24, 100)),
}

# open intervals; lam and t_a are held fixed
DEFAULT_RANGES: dict[str, tuple[float, float]] = {
    "gamma": (0.0, 3.0),
    "Gamma": (0.0, 3.0),
    "omega": (0.0, 5.0),
    "Omega": (0.0, 5.0),
    "Lambda": (1 / 8, 1 / 4),
}
FIXED_HP = {"lam": 1.0, "t_a": 8}


@dataclass(frozen=True)
class StorageSearchSpace:
    """Per technology: candidate ratings (MW) and durations (h)."""

    options: Mapping[str, tuple[Sequence[float], Sequence[float]]] = field(default_factory=lambda: dict(DEFAULT_SPACE))

    def candidates(self) -> list[tuple[str, float, float]]:
        return [
            (tech, float(r), float(d))
            for tech, (ratings, durations) in self.options.items()
            for r in ratings
            for d in durations
        ]

    def __len__(self) -> int:
        return len(self.candidates())


@dataclass(frozen=True)
class GridResult:
    rank: int
    technology: str
    rating_mw: float
    duration_h: float
    avg_cove: float
    std_cove: float

    def as_row(self) -> dict:
        return {
            "rank": self.rank,
            "storage_type": self.technology,
            "rating_MW": self.rating_mw,
            "duration_h": self.duration_h,
            "avg_cove_usd_per_kwh_yr": self.avg_cove * COVE_DISPLAY_SCALE,
            "std_cove_usd_per_kwh_yr": self.std_cove * COVE_DISPLAY_SCALE,
            "avg_cove_raw": self.avg_cove,
        }


def storage_grid_search(
    frame: SeriesFrame,
    farm: FarmSpec,
    catalog: StorageCatalog,
    space: StorageSearchSpace | None = None,
    target: float | None = None,
) -> list[GridResult]:
    """Rank every storage candidate by baseload average annual COVE (ascending).

    Every candidate is resolved in ``catalog`` before any simulation, so a
    miss fails fast. Ties keep the search-space order.
    """
    frame.require("g", "p")
    space = StorageSearchSpace() if space is None else space
    cands = space.candidates()
    if not cands:
        raise ConfigError("storage search space is empty")
    specs = [catalog.lookup(*c) for c in cands]
    target = float(np.mean(frame.g)) if target is None else target
    scored = []
    for order, spec in enumerate(specs):
        trace = simulate_baseload(frame, farm, spec, target)
        mean, std = average_annual(annual_report(trace, frame.g, spec, frame.p, farm))
        scored.append((mean if math.isfinite(mean) else math.inf, order, spec, mean, std))
    scored.sort(key=lambda x: (x[0], x[1]))
    return [
        GridResult(rank, spec.technology, spec.rating_mw, spec.duration_h, mean, std)
        for rank, (_, _, spec, mean, std) in enumerate(scored, start=1)
    ]


@dataclass
class TrialRecord:
    trial: int
    seed: int
    hp: dict[str, float]
    valid_cove: list[float] = field(default_factory=list)
    terminated_early: bool = False
    failed: bool = False
    best_cove: float = math.inf
    incumbent_after: float = math.inf
    improved: bool = False
    best: bool = False

    LOG_FIELDS = (
        "trial", "seed", "gamma", "Gamma", "omega", "Omega", "lam", "Lambda", "t_a",
        "epochs_run", "terminated_early", "failed", "best_cove", "incumbent_after",
        "improved", "valid_cove",
    )

    def to_row(self) -> dict:
        row = {"trial": self.trial, "seed": self.seed}
        row.update({k: repr(float(self.hp[k])) if k != "t_a" else int(self.hp[k]) for k in
                    ("gamma", "Gamma", "omega", "Omega", "lam", "Lambda", "t_a")})
        row.update(
            epochs_run=len(self.valid_cove),
            terminated_early=int(self.terminated_early),
            failed=int(self.failed),
            best_cove=repr(self.best_cove),
            incumbent_after=repr(self.incumbent_after),
            improved=int(self.improved),
            valid_cove=";".join(repr(c) for c in self.valid_cove),
        )
        return row

    @classmethod
    def from_row(cls, row: Mapping[str, str]) -> "TrialRecord":
        hp = {k: float(row[k]) for k in ("gamma", "Gamma", "omega", "Omega", "lam", "Lambda")}
        hp["t_a"] = int(row["t_a"])
        covs = [float(c) for c in row["valid_cove"].split(";") if c]
        return cls(
            trial=int(row["trial"]),
            seed=int(row["seed"]),
            hp=hp,
            valid_cove=covs,
            terminated_early=bool(int(row["terminated_early"])),
            failed=bool(int(row["failed"])),
            best_cove=float(row["best_cove"]),
            incumbent_after=float(row["incumbent_after"]),
            improved=bool(int(row["improved"])),
        )


def sample_hyperparams(rng: np.random.Generator, ranges: Mapping[str, tuple[float, float]] = DEFAULT_RANGES) -> dict:
    """Uniform draw strictly inside each open range; fixed values for the rest."""
    hp = dict(FIXED_HP)
    for name in ("gamma", "Gamma", "omega", "Omega", "Lambda"):
        lo, hi = ranges[name]
        if not hi > lo:
            raise ConfigError(f"empty search range for {name}: ({lo}, {hi})")
        x = lo
        while not lo < x < hi:
            x = float(rng.uniform(lo, hi))
        hp[name] = x
    for name in ("lam", "t_a"):
        if name in ranges:
            raise ConfigError(f"{name} is held fixed and cannot be searched")
    return hp


class Incumbent:
    """Monotone shared minimum, safe to update from several threads."""

    def __init__(self, value: float = math.inf) -> None:
        self._value = value
        self._lock = threading.Lock()

    @property
    def value(self) -> float:
        with self._lock:
            return self._value

    def offer(self, value: float) -> bool:
        with self._lock:
            if value < self._value:
                self._value = value
                return True
            return False


@dataclass
class SearchResult:
    records: list[TrialRecord]
    best: TrialRecord | None
    best_model: TrainResult | None = None


def _run_trial(
    index: int,
    train: SeriesFrame,
    valid: SeriesFrame,
    cfg: CoveConfig,
    ranges: Mapping[str, tuple[float, float]],
    probe_epochs: int,
    seed: int,
    incumbent: Incumbent,
) -> tuple[TrialRecord, TrainResult | None]:
    trial_seed = seed + index
    hp = sample_hyperparams(np.random.default_rng(trial_seed), ranges)
    rec = TrialRecord(index, trial_seed, hp)
    trial_cfg = replace(cfg, hp=LossHyperparams(**hp), seed=trial_seed)
    probe_at = min(probe_epochs, cfg.epochs)

    def on_epoch(row: dict) -> bool:
        epoch, c = row["epoch"], row["valid_cove"]
        rec.valid_cove.append(c)
        if epoch < probe_at:
            return True
        if epoch == probe_at and not c < incumbent.value:
            rec.terminated_early = True
            rec.best_cove = min(rec.best_cove, c)
            return False
        rec.best_cove = min(rec.best_cove, c)
        if incumbent.offer(c):
            rec.improved = True
        return True

    try:
        result = train_cove(train, valid, trial_cfg, seed=trial_seed, on_epoch=on_epoch)
    except (HybridWindError, FloatingPointError) as exc:
        log.warning("trial %d failed: %s", index, exc)
        rec.failed = True
        rec.incumbent_after = incumbent.value
        return rec, None
    rec.incumbent_after = incumbent.value
    return rec, result


def retrain_trial(train: SeriesFrame, valid: SeriesFrame, cfg: CoveConfig, rec: TrialRecord) -> TrainResult:
    """Reproduce a logged trial's model from its seed and weights."""
    trial_cfg = replace(cfg, hp=LossHyperparams(**rec.hp), seed=rec.seed, epochs=len(rec.valid_cove))
    return train_cove(train, valid, trial_cfg, seed=rec.seed)


def read_search_log(path: str | Path) -> list[TrialRecord]:
    path = Path(path)
    if not path.exists() or path.stat().st_size == 0:
        return []
    with open(path, newline="", encoding="utf-8") as fh:
        return [TrialRecord.from_row(r) for r in csv.DictReader(fh)]


def _append_log(path: Path, rec: TrialRecord, lock: threading.Lock) -> None:
    with lock:
        new = not path.exists() or path.stat().st_size == 0
        with open(path, "a", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=TrialRecord.LOG_FIELDS)
            if new:
                writer.writeheader()
            writer.writerow(rec.to_row())


def cove_hyper_search(
    train: SeriesFrame,
    valid: SeriesFrame,
    cfg: CoveConfig,
    ranges: Mapping[str, tuple[float, float]] = DEFAULT_RANGES,
    trials: int = 20,
    probe_epochs: int = 10,
    seed: int = 0,
    log_path: str | Path | None = None,
    workers: int = 1,
) -> SearchResult:
    """Random search over the unsupervised-loss weights with early termination.

    Each trial samples weights (seeded by ``seed + trial``) and trains. At
    ``probe_epochs`` its validation average annual COVE must be strictly
    below the incumbent, otherwise the trial stops. Surviving trials update
    the incumbent at every following epoch.

    With ``log_path`` every finished trial is appended to a CSV log, and
    trials already present are skipped on rerun. ``workers > 1`` runs
    trials concurrently; which trials stop early may then depend on timing.
    """
    if trials < 1:
        raise ConfigError("trials must be at least 1")
    path = Path(log_path) if log_path is not None else None
    done = read_search_log(path) if path is not None else []
    done_ids = {r.trial for r in done}
    incumbent = Incumbent(min((r.incumbent_after for r in done), default=math.inf))
    lock = threading.Lock()
    records = list(done)
    best_model: TrainResult | None = None
    best_model_cove = math.inf
    pending = [i for i in range(trials) if i not in done_ids]

    def run(i: int):
        rec, res = _run_trial(i, train, valid, cfg, ranges, probe_epochs, seed, incumbent)
        if path is not None:
            _append_log(path, rec, lock)
        return rec, res

    if workers <= 1:
        outcomes = map(run, pending)
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        outcomes = pool.map(run, pending)
    for rec, res in outcomes:
        records.append(rec)
        if res is not None and not rec.terminated_early and rec.best_cove < best_model_cove:
            best_model, best_model_cove = res, rec.best_cove
    if workers > 1:
        pool.shutdown()

    records.sort(key=lambda r: r.trial)
    ok = [r for r in records if not r.failed]
    best = min(ok, key=lambda r: (r.best_cove, r.trial)) if ok else None
    if best is not None:
        best.best = True
    return SearchResult(records, best, best_model)
