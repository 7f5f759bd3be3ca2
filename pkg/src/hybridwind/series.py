"""Hourly multivariate series: ingestion, validation, splitting, batching.

A :class:`SeriesFrame` carries up to four aligned channels:

* ``v`` -- wind speed (m/s)
* ``g`` -- generated power (MW)
* ``p`` -- electricity price ($/MWh), may be negative
* ``u`` -- user load (MW)
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from .econ import HOURS_PER_YEAR, FarmSpec
from .errors import AlignmentError, DataQualityError, SchemaError, SizeError

CHANNELS = ("v", "g", "p", "u")
NON_NEGATIVE = ("v", "g", "u")
ONE_HOUR = np.timedelta64(1, "h")

MAX_GAP_HOURS = 6
MAX_GAP_FRACTION = 0.05


@dataclass(frozen=True)
class SeriesFrame:
    """Aligned hourly channels; immutable after construction."""

    timestamps: np.ndarray
    v: np.ndarray | None = None
    g: np.ndarray | None = None
    p: np.ndarray | None = None
    u: np.ndarray | None = None

    def __post_init__(self) -> None:
        ts = np.asarray(self.timestamps).astype("datetime64[s]")
        object.__setattr__(self, "timestamps", ts)
        n = ts.shape[0]
        if n < 1:
            raise SizeError("a SeriesFrame needs at least one step")
        if n > 1 and not np.all(np.diff(ts) == ONE_HOUR):
            raise AlignmentError("timestamps must increase in exact one-hour steps")
        for name in CHANNELS:
            arr = getattr(self, name)
            if arr is None:
                continue
            arr = np.array(arr, dtype=np.float64)
            arr.setflags(write=False)
            if arr.shape != (n,):
                raise SizeError(f"channel {name!r} has shape {arr.shape}, expected ({n},)")
            if not np.all(np.isfinite(arr)):
                raise DataQualityError(f"channel {name!r} contains non-finite values")
            if name in NON_NEGATIVE and np.any(arr < 0):
                raise DataQualityError(f"channel {name!r} must be non-negative")
            object.__setattr__(self, name, arr)
        ts.setflags(write=False)

    def __len__(self) -> int:
        return int(self.timestamps.shape[0])

    @property
    def channels(self) -> tuple[str, ...]:
        return tuple(c for c in CHANNELS if getattr(self, c) is not None)

    def require(self, *names: str) -> None:
        missing = [c for c in names if getattr(self, c) is None]
        if missing:
            raise SchemaError(f"frame lacks required channels {missing}")

    def __getitem__(self, key: slice) -> "SeriesFrame":
        if not isinstance(key, slice):
            raise TypeError("SeriesFrame supports slice indexing only")
        kwargs = {c: getattr(self, c)[key] for c in self.channels}
        return SeriesFrame(self.timestamps[key], **kwargs)

    def with_channels(self, **channels: np.ndarray | None) -> "SeriesFrame":
        return replace(self, **channels)

    def years(self) -> Iterator["SeriesFrame"]:
        """Consecutive 8760-step blocks; the last one may be shorter."""
        for start in range(0, len(self), HOURS_PER_YEAR):
            yield self[start : start + HOURS_PER_YEAR]

    def equals(self, other: "SeriesFrame") -> bool:
        if self.channels != other.channels or len(self) != len(other):
            return False
        if not np.array_equal(self.timestamps, other.timestamps):
            return False
        return all(np.array_equal(getattr(self, c), getattr(other, c)) for c in self.channels)


def concat(frames: Sequence[SeriesFrame]) -> SeriesFrame:
    """Join consecutive frames; cadence is re-validated on construction."""
    if not frames:
        raise SizeError("nothing to concatenate")
    names = frames[0].channels
    if any(f.channels != names for f in frames):
        raise SchemaError("frames carry different channels")
    ts = np.concatenate([f.timestamps for f in frames])
    return SeriesFrame(ts, **{c: np.concatenate([getattr(f, c) for f in frames]) for c in names})


def _parse_floats(cells: pd.Series) -> pd.Series:
    """Correctly rounded parse; unparseable cells become NaN (gap policy)."""

    def conv(text: str) -> float:
        try:
            return float(text)
        except ValueError:
            return np.nan

    return pd.Series([conv(c) for c in cells], index=cells.index, dtype=float)


def _fill_gaps(values: pd.Series, name: str) -> np.ndarray:
    missing = values.isna().to_numpy()
    if not missing.any():
        return values.to_numpy(dtype=float)
    if missing.mean() > MAX_GAP_FRACTION:
        raise DataQualityError(
            f"column {name!r} is {100 * missing.mean():.1f}% missing "
            f"(limit {100 * MAX_GAP_FRACTION:.0f}%)"
        )
    # length of the longest run of consecutive missing cells
    run, longest = 0, 0
    for m in missing:
        run = run + 1 if m else 0
        longest = max(longest, run)
    if longest > MAX_GAP_HOURS:
        raise DataQualityError(
            f"column {name!r} has a gap of {longest} h (limit {MAX_GAP_HOURS} h)"
        )
    if missing.all():
        raise DataQualityError(f"column {name!r} has no valid values")
    filled = values.interpolate(method="linear", limit_area="inside")
    # edge gaps cannot be interpolated; hold the nearest observation
    return filled.ffill().bfill().to_numpy(dtype=float)


def ingest_csv(path: str | Path, schema: Mapping[str, str] | None = None) -> SeriesFrame:
    """Read a CSV with a ``time`` column into a validated frame.

    Parameters
    ----------
    path : path-like
        UTF-8 CSV with a header row and ISO-8601 timestamps in ``time``.
    schema : mapping, optional
        Channel name -> column name. Defaults to every channel whose name
        appears as a column.

    Raises
    ------
    SchemaError
        A declared column (or ``time``) is missing.
    AlignmentError
        Timestamps are unparseable, non-monotone or not hourly.
    DataQualityError
        More than 5% of a column is missing, or a gap exceeds 6 hours.
    """
    df = pd.read_csv(path, encoding="utf-8", dtype=str, keep_default_na=False)
    if "time" not in df.columns:
        raise SchemaError("CSV lacks the 'time' column")
    if schema is None:
        schema = {c: c for c in CHANNELS if c in df.columns}
    unknown = set(schema) - set(CHANNELS)
    if unknown:
        raise SchemaError(f"unknown channels in schema: {sorted(unknown)}")
    absent = [col for col in schema.values() if col not in df.columns]
    if absent:
        raise SchemaError(f"CSV lacks declared columns {absent}")

    try:
        ts = pd.to_datetime(df["time"], format="ISO8601", utc=True)
    except (ValueError, TypeError) as exc:
        raise AlignmentError(f"unparseable timestamps: {exc}") from None
    ts = ts.dt.tz_convert(None).to_numpy().astype("datetime64[s]")
    if len(ts) > 1 and not np.all(np.diff(ts) == ONE_HOUR):
        raise AlignmentError("timestamps must increase in exact one-hour steps")

    channels = {}
    for name, col in schema.items():
        raw = _parse_floats(df[col].str.strip())
        channels[name] = _fill_gaps(raw, col)
    return SeriesFrame(ts, **channels)


def write_csv(frame: SeriesFrame, path: str | Path) -> None:
    """Write ``frame`` in the format :func:`ingest_csv` reads."""
    data = {"time": np.datetime_as_string(frame.timestamps, unit="s")}
    for c in frame.channels:
        data[c] = getattr(frame, c)
    pd.DataFrame(data).to_csv(path, index=False, float_format="%.17g", encoding="utf-8")


def split_train_test(frame: SeriesFrame, train_fraction: float) -> tuple[SeriesFrame, SeriesFrame]:
    """Chronological prefix/suffix split."""
    if not 0 < train_fraction < 1:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    n = len(frame)
    if n < 2:
        raise SizeError("need at least two steps to split")
    cut = int(min(max(round(train_fraction * n), 1), n - 1))
    return frame[:cut], frame[cut:]


def repeat_cyclic(values: np.ndarray, length: int) -> np.ndarray:
    """Tile ``values`` end-to-end until it covers ``length`` steps."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise SizeError("cannot tile an empty series")
    reps = -(-length // values.size)
    return np.tile(values, reps)[:length]


def fill_cyclic(frame: SeriesFrame, donor: SeriesFrame, channels: Sequence[str] = ("p", "u")) -> SeriesFrame:
    """Attach ``donor`` channels to ``frame``, repeating them cyclically.

    Covers long generation records with shorter price and load histories.
    """
    donor.require(*channels)
    return frame.with_channels(**{c: repeat_cyclic(getattr(donor, c), len(frame)) for c in channels})


@dataclass(frozen=True)
class SampleBatch:
    """Equal-length windows cut from one frame.

    ``data[channel]`` has shape ``(batch, seq_len)``.
    """

    starts: np.ndarray
    seq_len: int
    data: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def size(self) -> int:
        return int(self.starts.shape[0])

    def __getitem__(self, channel: str) -> np.ndarray:
        return self.data[channel]


def window_starts(n: int, seq_len: int, stride: int | None = None) -> np.ndarray:
    if seq_len < 1:
        raise SizeError("seq_len must be at least 1")
    if seq_len > n:
        raise SizeError(f"seq_len {seq_len} exceeds frame length {n}")
    return np.arange(0, n - seq_len + 1, stride or seq_len)


def make_batches(
    frame: SeriesFrame,
    seq_len: int,
    batch_size: int,
    seed: int,
    stride: int | None = None,
    channels: Sequence[str] | None = None,
) -> list[SampleBatch]:
    """Cut windows, shuffle them with ``seed`` and group them into batches.

    Windows are non-overlapping unless ``stride`` < ``seq_len``; a tail
    shorter than ``seq_len`` is dropped and a final short batch is kept.
    """
    if batch_size < 1:
        raise SizeError("batch_size must be at least 1")
    starts = window_starts(len(frame), seq_len, stride)
    order = np.random.default_rng(seed).permutation(starts.shape[0])
    starts = starts[order]
    channels = tuple(channels) if channels is not None else frame.channels
    frame.require(*channels)
    offsets = np.arange(seq_len)
    batches = []
    for i in range(0, starts.shape[0], batch_size):
        chunk = starts[i : i + batch_size]
        idx = chunk[:, None] + offsets[None, :]
        batches.append(SampleBatch(chunk, seq_len, {c: getattr(frame, c)[idx] for c in channels}))
    return batches


@dataclass(frozen=True)
class SynthConfig:
    """Knobs of the synthetic generator.

    A slow latent turbulence regime (time scale ``regime_hours``) scales
    hour-to-hour gustiness of the wind speed and derates the power curve by
    up to ``turbulence_loss``, so generation depends on several days of
    wind history. :meth:`noiseless` zeroes every stochastic amplitude.
    """

    start: str = "2001-01-01T00:00:00"
    mean_speed: float = 7.5
    seasonal_amp: float = 1.5
    diurnal_amp: float = 1.0
    speed_noise: float = 2.5
    speed_persistence: float = 0.97
    power_noise: float = 0.06
    power_persistence: float = 0.85
    gust_noise: float = 0.8
    turbulence_loss: float = 0.25
    regime_hours: float = 120.0
    cut_in: float = 3.0
    rated_speed: float = 12.0
    cut_out: float = 25.0
    price_base: float = 30.0
    price_diurnal: float = 10.0
    price_wind_coupling: float = -1.0
    spike_prob: float = 0.01
    spike_scale: float = 60.0
    price_floor: float = 1.0
    load_base: float = 0.6
    load_diurnal: float = 0.15


    @classmethod
    def noiseless(cls, **overrides) -> "SynthConfig":
        zero = dict(speed_noise=0.0, power_noise=0.0, gust_noise=0.0, turbulence_loss=0.0)
        zero.update(overrides)
        return cls(**zero)


def power_curve(v: np.ndarray, capacity: float, cfg: SynthConfig = SynthConfig()) -> np.ndarray:
    """Saturating cubic power curve with cut-in, rated and cut-out speeds."""
    v = np.asarray(v, dtype=float)
    lo, hi = cfg.cut_in ** 3, cfg.rated_speed ** 3
    ramp = np.clip((v ** 3 - lo) / (hi - lo), 0.0, 1.0)
    ramp = np.where((v < cfg.cut_in) | (v >= cfg.cut_out), 0.0, ramp)
    return capacity * ramp


def _ar1(rng: np.random.Generator, n: int, phi: float) -> np.ndarray:
    """Unit-variance AR(1) noise."""
    shocks = rng.standard_normal(n) * np.sqrt(1.0 - phi ** 2)
    out = lfilter([1.0], [1.0, -phi], shocks)
    return out


def synth_dataset(years: int, seed: int, farm: FarmSpec, cfg: SynthConfig = SynthConfig()) -> SeriesFrame:
    """Deterministic synthetic hourly dataset of ``years`` x 8760 steps."""
    if years < 1:
        raise ValueError(f"years must be at least 1, got {years}")
    n = years * HOURS_PER_YEAR
    rng = np.random.default_rng(seed)
    t = np.arange(n, dtype=float)
    hour = t % 24
    season = np.cos(2 * np.pi * t / HOURS_PER_YEAR)
    diurnal = np.cos(2 * np.pi * (hour - 3) / 24)

    speed_noise = _ar1(rng, n, cfg.speed_persistence)
    regime = _ar1(rng, n, float(np.exp(-1.0 / cfg.regime_hours)))
    gusts = rng.standard_normal(n) * np.exp(0.5 * regime)
    v = cfg.mean_speed + cfg.seasonal_amp * season + cfg.diurnal_amp * diurnal
    v = np.maximum(v + cfg.speed_noise * speed_noise + cfg.gust_noise * gusts, 0.0)

    power_noise = _ar1(rng, n, cfg.power_persistence)
    efficiency = 1.0 - cfg.turbulence_loss / (1.0 + np.exp(-2.0 * regime))
    g = power_curve(v, farm.capacity_mw, cfg) * efficiency
    g = np.clip(g + cfg.power_noise * farm.capacity_mw * power_noise, 0.0, farm.capacity_mw)

    evening = np.cos(2 * np.pi * (hour - 18) / 24)
    spikes = (rng.random(n) < cfg.spike_prob) * rng.exponential(cfg.spike_scale, n)
    p = cfg.price_base + cfg.price_diurnal * evening + 3.0 * season
    p = p + cfg.price_wind_coupling * (v - cfg.mean_speed) + spikes
    p = np.maximum(p, cfg.price_floor)

    u = farm.capacity_mw * (cfg.load_base + cfg.load_diurnal * evening + 0.05 * season)
    u = np.maximum(u + 0.02 * farm.capacity_mw * rng.standard_normal(n), 0.0)

    start = np.datetime64(cfg.start, "s")
    ts = start + np.arange(n) * ONE_HOUR
    return SeriesFrame(ts, v=v, g=g, p=p, u=u)
