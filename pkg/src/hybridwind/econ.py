"""Economic parameters and energy-value metrics (LCOE, COVE, value factor).

All series are hourly, so a power value in MW delivered over one step is
numerically equal to the energy in MWh.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, ContractError, UndefinedMetricError

HOURS_PER_YEAR = 8760

# COVE is computed as $ per $ of valued energy; reports label it $/kWh/yr.
COVE_DISPLAY_SCALE = 1000.0


@dataclass(frozen=True)
class FarmSpec:
    """Wind farm rating and annualized cost inputs.

    Parameters
    ----------
    capacity_mw : float
        Rated capacity of the farm (MW).
    capex : float
        Capital expenditure including balance of system ($).
    opex : float
        Operating expenditure ($/yr).
    fcr : float
        Fixed charge rate, the fraction of CAPEX charged per year.
    """

    capacity_mw: float = 249.0
    capex: float = 373.5e6
    opex: float = 10.7e6
    fcr: float = 0.0582

    def __post_init__(self) -> None:
        if not self.capacity_mw > 0:
            raise ContractError(f"capacity_mw must be positive, got {self.capacity_mw}")
        if self.capex < 0 or self.opex < 0:
            raise ContractError("farm CAPEX and OPEX must be non-negative")
        if not 0 < self.fcr < 1:
            raise ContractError(f"fcr must lie in (0, 1), got {self.fcr}")

    @property
    def annual_cost(self) -> float:
        return self.capex * self.fcr + self.opex


@dataclass(frozen=True)
class StorageSpec:
    """Co-located storage system.

    ``capacity_mwh`` is always ``rating_mw * duration_h``; it is derived, not
    stored, so the two can never disagree.
    """

    technology: str
    rating_mw: float
    duration_h: float
    rte: float
    capex: float = 0.0
    opex: float = 0.0

    def __post_init__(self) -> None:
        if not self.rating_mw > 0:
            raise ContractError(f"storage rating must be positive, got {self.rating_mw}")
        if not self.duration_h > 0:
            raise ContractError(f"storage duration must be positive, got {self.duration_h}")
        if not 0 < self.rte <= 1:
            raise ContractError(f"round-trip efficiency must lie in (0, 1], got {self.rte}")
        if self.capex < 0 or self.opex < 0:
            raise ContractError("storage CAPEX and OPEX must be non-negative")

    @property
    def capacity_mwh(self) -> float:
        return self.rating_mw * self.duration_h

    def annual_cost(self, fcr: float) -> float:
        return self.capex * fcr + self.opex


@dataclass
class StorageCatalog:
    """Exact-lookup table of (technology, rating, duration) -> storage spec."""

    entries: dict[tuple[str, float, float], StorageSpec] = field(default_factory=dict)

    @classmethod
    def from_csv(cls, path: str | Path) -> "StorageCatalog":
        with open(path, newline="", encoding="utf-8") as fh:
            return cls.from_rows(csv.DictReader(row for row in fh if not row.startswith("#")))

    @classmethod
    def from_rows(cls, rows: Iterable[Mapping[str, str]]) -> "StorageCatalog":
        entries = {}
        required = ("technology", "rating_MW", "duration_h", "rte", "capex_usd", "opex_usd_per_yr")
        for row in rows:
            missing = [k for k in required if k not in row]
            if missing:
                raise ConfigError(f"storage catalog row missing columns {missing}")
            spec = StorageSpec(
                technology=row["technology"].strip(),
                rating_mw=float(row["rating_MW"]),
                duration_h=float(row["duration_h"]),
                rte=float(row["rte"]),
                capex=float(row["capex_usd"]),
                opex=float(row["opex_usd_per_yr"]),
            )
            entries[(spec.technology, spec.rating_mw, spec.duration_h)] = spec
        return cls(entries)

    def lookup(self, technology: str, rating_mw: float, duration_h: float) -> StorageSpec:
        key = (technology, float(rating_mw), float(duration_h))
        try:
            return self.entries[key]
        except KeyError:
            raise ConfigError(
                f"storage catalog has no entry for technology={technology!r}, "
                f"rating={rating_mw} MW, duration={duration_h} h"
            ) from None

    def technologies(self) -> list[str]:
        return sorted({k[0] for k in self.entries})

    def __len__(self) -> int:
        return len(self.entries)


def default_catalog() -> StorageCatalog:
    """The shipped placeholder catalog (not authoritative cost data)."""
    ref = resources.files("hybridwind").joinpath("data/storage_catalog.csv")
    with resources.as_file(ref) as path:
        return StorageCatalog.from_csv(path)


def fixed_costs(farm: FarmSpec, storage: StorageSpec | None = None) -> float:
    """Annualized fixed cost of the farm plus optional storage ($/yr)."""
    cost = farm.annual_cost
    if storage is not None:
        cost += storage.annual_cost(farm.fcr)
    return cost


def lcoe(
    r_prime: Sequence[float],
    farm: FarmSpec,
    storage: StorageSpec | None = None,
    cost_fraction: float = 1.0,
) -> float:
    """Levelized cost of energy ($/MWh) of a dispatched power series.

    ``cost_fraction`` prorates the annual fixed costs when the series spans
    less (or more) than one year.
    """
    total = float(np.sum(np.asarray(r_prime, dtype=float)))
    if not total > 0:
        raise UndefinedMetricError("LCOE undefined: total dispatched energy is zero")
    return fixed_costs(farm, storage) * cost_fraction / total


def cove(
    r_prime: Sequence[float],
    p: Sequence[float],
    farm: FarmSpec,
    storage: StorageSpec | None = None,
    cost_fraction: float = 1.0,
) -> float:
    """Cost of valued energy: fixed costs over price-weighted delivered energy."""
    r = np.asarray(r_prime, dtype=float)
    price = np.asarray(p, dtype=float)
    if r.shape != price.shape:
        raise ContractError(f"dispatch and price lengths differ: {r.shape} vs {price.shape}")
    valued = float(np.dot(r, price))
    if not valued > 0:
        raise UndefinedMetricError(
            f"COVE undefined: valued energy sum(r'*p) = {valued:.6g} is not positive"
        )
    return fixed_costs(farm, storage) * cost_fraction / valued


def value_factor(d: Sequence[float], p: Sequence[float]) -> float:
    """Realized average price of ``d`` relative to the time-average price."""
    d = np.asarray(d, dtype=float)
    p = np.asarray(p, dtype=float)
    if d.shape != p.shape:
        raise ContractError(f"dispatch and price lengths differ: {d.shape} vs {p.shape}")
    total = float(np.sum(d))
    mean_p = float(np.mean(p)) if p.size else 0.0
    if not total > 0:
        raise UndefinedMetricError("value factor undefined: zero total dispatch")
    if mean_p == 0:
        raise UndefinedMetricError("value factor undefined: zero mean price")
    return float(np.dot(d, p)) / (total * mean_p)


def curtailment_series(g: np.ndarray, r_prime: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Energy generated but neither delivered nor accepted into storage (MWh/step).

    ``s`` has one more entry than ``g``: it includes the initial state.
    """
    charge = np.maximum(np.diff(s), 0.0)
    return np.maximum(g - r_prime - charge, 0.0)


@dataclass(frozen=True)
class AnnualMetrics:
    year: int
    hours: int
    partial: bool
    aep: float
    curtailment: float
    utilization: float
    value_factor: float
    cove: float

    def as_row(self) -> dict[str, float | int | bool]:
        return {
            "year": self.year,
            "hours": self.hours,
            "partial": self.partial,
            "aep_mwh": self.aep,
            "curtailment_mwh": self.curtailment,
            "storage_utilization": self.utilization,
            "value_factor": self.value_factor,
            "cove": self.cove,
        }


def _safe(fn, *args, **kwargs) -> float:
    try:
        return fn(*args, **kwargs)
    except UndefinedMetricError:
        return math.nan


def annual_report(
    trace,
    g: Sequence[float],
    storage: StorageSpec | None,
    p: Sequence[float],
    farm: FarmSpec,
    strict: bool = False,
) -> list[AnnualMetrics]:
    """Per-year delivery, curtailment, utilization, VF and COVE.

    Years are consecutive 8760-step blocks; a shorter trailing block is
    reported with ``partial=True`` and its fixed costs prorated. Undefined
    metrics are NaN unless ``strict`` is set, in which case they raise.

    Parameters
    ----------
    trace : DispatchTrace
        Must expose ``r_prime`` (T) and ``s`` (T + 1).
    g, p : array_like
        Generation (MW) and price ($/MWh) aligned with the trace.
    """
    r = np.asarray(trace.r_prime, dtype=float)
    s = np.asarray(trace.s, dtype=float)
    g = np.asarray(g, dtype=float)
    p = np.asarray(p, dtype=float)
    if not (r.shape == g.shape == p.shape) or s.shape[0] != r.shape[0] + 1:
        raise ContractError("trace, generation and price are not aligned")
    curtailed = curtailment_series(g, r, s)
    capacity = storage.capacity_mwh if storage is not None else 0.0
    call = (lambda fn, *a, **k: fn(*a, **k)) if strict else _safe

    reports = []
    for year, start in enumerate(range(0, r.shape[0], HOURS_PER_YEAR)):
        stop = min(start + HOURS_PER_YEAR, r.shape[0])
        hours = stop - start
        rr, pp = r[start:stop], p[start:stop]
        reports.append(
            AnnualMetrics(
                year=year,
                hours=hours,
                partial=hours < HOURS_PER_YEAR,
                aep=float(rr.sum()),
                curtailment=float(curtailed[start:stop].sum()),
                utilization=float(s[start + 1 : stop + 1].mean() / capacity) if capacity else 0.0,
                value_factor=call(value_factor, rr, pp),
                cove=call(cove, rr, pp, farm, storage, cost_fraction=hours / HOURS_PER_YEAR),
            )
        )
    return reports


def average_annual(reports: Sequence[AnnualMetrics], attr: str = "cove") -> tuple[float, float]:
    """Mean and population std of ``attr`` over full years.

    Falls back to the partial years when the series is shorter than a year.
    """
    pool = [r for r in reports if not r.partial] or list(reports)
    values = np.array([getattr(r, attr) for r in pool], dtype=float)
    if values.size == 0:
        return math.nan, math.nan
    return float(values.mean()), float(values.std())
