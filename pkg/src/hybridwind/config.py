"""Flat ``key = value`` run configuration with a fixed schema.

Values are JSON literals (``32``, ``[32, 16]``, ``"CAES"``); anything that
does not parse as JSON is kept as a bare string. Lines starting with ``#``
or ``;`` are comments. Unknown keys are rejected.

Example::

    data.path = "wind.csv"
    data.columns.g = "power_mw"
    nqf.seq_len = 168
    cove.storage.tech = "CAES"
"""
from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .cove_nn import CoveConfig, LossHyperparams
from .econ import FarmSpec, StorageCatalog, default_catalog
from .errors import ConfigError, HybridWindError
from .nqf import NqfConfig, DEFAULT_LEVELS
from .series import CHANNELS

_nqf = NqfConfig()
_cove = CoveConfig()
_hp = LossHyperparams()
_farm = FarmSpec()

# key -> (type, default)
SCHEMA: dict[str, tuple[type, Any]] = {
    "data.path": (str, None),
    "data.train_fraction": (float, 0.7),
    "data.seq_len": (int, None),
    "data.batch_size": (int, None),
    "data.seed": (int, 0),
    "data.stride": (int, None),
    "data.price_path": (str, None),
    "synth.years": (int, 3),
    "nqf.hidden": (int, _nqf.hidden),
    "nqf.ff": (list, list(_nqf.ff)),
    "nqf.lr": (float, _nqf.lr),
    "nqf.epochs": (int, _nqf.epochs),
    "nqf.batch": (int, _nqf.batch),
    "nqf.seq_len": (int, _nqf.seq_len),
    "nqf.levels": (list, list(DEFAULT_LEVELS)),
    "nqf.smooth_lambda": (float, _nqf.smooth_lambda),
    "nqf.drift_gamma": (float, _nqf.drift_gamma),
    "nqf.bias_weight": (float, _nqf.bias_weight),
    "nqf.mono_weight": (float, _nqf.mono_weight),
    "nqf.seed": (int, _nqf.seed),
    "cove.hidden": (int, _cove.hidden),
    "cove.ff": (list, list(_cove.ff)),
    "cove.lr": (float, _cove.lr),
    "cove.epochs": (int, _cove.epochs),
    "cove.batch": (int, _cove.batch),
    "cove.seq_len": (int, _cove.seq_len),
    "cove.hp.gamma": (float, _hp.gamma),
    "cove.hp.Gamma": (float, _hp.Gamma),
    "cove.hp.omega": (float, _hp.omega),
    "cove.hp.Omega": (float, _hp.Omega),
    "cove.hp.lambda": (float, _hp.lam),
    "cove.hp.Lambda": (float, _hp.Lambda),
    "cove.hp.t_a": (int, _hp.t_a),
    "cove.storage.tech": (str, "CAES"),
    "cove.storage.rating": (float, 100.0),
    "cove.storage.duration": (float, 24.0),
    "cove.seed": (int, _cove.seed),
    "baseload.target": (float, None),
    "farm.capacity_mw": (float, _farm.capacity_mw),
    "farm.capex": (float, _farm.capex),
    "farm.opex": (float, _farm.opex),
    "farm.fcr": (float, _farm.fcr),
    "catalog.path": (str, None),
    "search.trials": (int, 20),
    "search.probe_epochs": (int, 10),
    "search.workers": (int, 1),
    "metrics.bins": (int, 30),
}
COLUMN_KEYS = tuple(f"data.columns.{c}" for c in CHANNELS)
for _k in COLUMN_KEYS:
    SCHEMA[_k] = (str, None)


def _coerce(key: str, value: Any) -> Any:
    kind, _ = SCHEMA[key]
    if value is None:
        return None
    try:
        if kind is float:
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind is int:
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise TypeError
            return int(value)
        if kind is list:
            if not isinstance(value, (list, tuple)):
                raise TypeError
            return list(value)
        if kind is str:
            return str(value)
    except (TypeError, ValueError):
        pass
    raise ConfigError(f"{key}: expected {kind.__name__}, got {value!r}")


def _parse_value(raw: str) -> Any:
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


@dataclass
class RunConfig:
    """Validated configuration from a file plus flag overrides."""

    values: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        merged = {k: d for k, (_, d) in SCHEMA.items()}
        unknown = sorted(set(self.values) - set(SCHEMA))
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        for k, v in self.values.items():
            merged[k] = _coerce(k, v)
        self.values = merged
        # build every typed config now so errors surface before any compute
        try:
            self.nqf_config()
            self.cove_config(resolve_storage=False)
            self.farm()
        except HybridWindError as exc:
            raise ConfigError(str(exc)) from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        tf = self["data.train_fraction"]
        if not 0 < tf < 1:
            raise ConfigError(f"data.train_fraction must lie in (0, 1), got {tf}")
        if self["synth.years"] < 1:
            raise ConfigError("synth.years must be at least 1")
        if self["metrics.bins"] <= 1:
            raise ConfigError("metrics.bins must exceed 1")

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> "RunConfig":
        values: dict[str, Any] = {}
        if path is not None:
            values.update(read_config_file(path))
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls(values)

    def with_overrides(self, **kv: Any) -> "RunConfig":
        vals = dict(self.values)
        vals.update(kv)
        return RunConfig(vals)

    def schema(self) -> dict[str, str] | None:
        cols = {c: self[f"data.columns.{c}"] for c in CHANNELS if self[f"data.columns.{c}"] is not None}
        return cols or None

    def farm(self) -> FarmSpec:
        return FarmSpec(
            capacity_mw=self["farm.capacity_mw"],
            capex=self["farm.capex"],
            opex=self["farm.opex"],
            fcr=self["farm.fcr"],
        )

    def catalog(self) -> StorageCatalog:
        path = self["catalog.path"]
        return default_catalog() if path is None else StorageCatalog.from_csv(path)

    def nqf_config(self) -> NqfConfig:
        return NqfConfig(
            hidden=self["nqf.hidden"],
            ff=tuple(self["nqf.ff"]),
            lr=self["nqf.lr"],
            epochs=self["nqf.epochs"],
            batch=self["data.batch_size"] or self["nqf.batch"],
            seq_len=self["data.seq_len"] or self["nqf.seq_len"],
            levels=tuple(self["nqf.levels"]),
            smooth_lambda=self["nqf.smooth_lambda"],
            drift_gamma=self["nqf.drift_gamma"],
            bias_weight=self["nqf.bias_weight"],
            mono_weight=self["nqf.mono_weight"],
            stride=self["data.stride"],
            seed=self["nqf.seed"],
        )

    def hyperparams(self) -> LossHyperparams:
        return LossHyperparams(
            gamma=self["cove.hp.gamma"],
            Gamma=self["cove.hp.Gamma"],
            omega=self["cove.hp.omega"],
            Omega=self["cove.hp.Omega"],
            lam=self["cove.hp.lambda"],
            Lambda=self["cove.hp.Lambda"],
            t_a=self["cove.hp.t_a"],
        )

    def cove_config(self, resolve_storage: bool = True) -> CoveConfig:
        storage = None
        if resolve_storage:
            storage = self.catalog().lookup(
                self["cove.storage.tech"], self["cove.storage.rating"], self["cove.storage.duration"]
            )
        return CoveConfig(
            hidden=self["cove.hidden"],
            ff=tuple(self["cove.ff"]),
            lr=self["cove.lr"],
            epochs=self["cove.epochs"],
            batch=self["data.batch_size"] or self["cove.batch"],
            seq_len=self["data.seq_len"] or self["cove.seq_len"],
            storage=storage,
            farm=self.farm(),
            hp=self.hyperparams(),
            stride=self["data.stride"],
            seed=self["cove.seed"],
        )


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Parse a flat config file into raw (unvalidated) key/value pairs."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",), comment_prefixes=("#", ";"))
    parser.optionxform = str  # keys are case-sensitive (Gamma vs gamma)
    try:
        parser.read_string("[run]\n" + path.read_text(encoding="utf-8"), source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from None
    return {k: _parse_value(v) for k, v in parser["run"].items()}
