"""Storage-constrained dispatch: post-processing step, simulation, baseload.

Network outputs are capacity factors ``r`` in [0, 1]. The post-processing
step converts one into delivered power ``r'`` (MW) and the next stored
energy ``s`` (MWh), respecting storage rating, capacity and round-trip
efficiency. The step is reproduced operation for operation, including its
accounting quirks: storage is debited by ``g - r'`` after ``r'`` already
carries the efficiency-scaled regeneration, and that debit is not capped
by the rating.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import numpy as np
import pandas as pd

from .econ import FarmSpec, StorageSpec, curtailment_series
from .errors import ContractError
from .series import SeriesFrame


def post_process_step(
    r_t: float, g_t: float, s_t: float, farm: FarmSpec, storage: StorageSpec
) -> tuple[float, float]:
    """One step of dispatch post-processing.

    Parameters
    ----------
    r_t : float
        Requested capacity factor, 0 <= r_t <= 1.
    g_t : float
        Generation this hour (MW), non-negative.
    s_t : float
        Stored energy entering the hour (MWh), 0 <= s_t <= capacity.

    Returns
    -------
    (r_prime, s_next) : tuple of float
        Delivered power (MW) and stored energy after the hour (MWh).
    """
    cap = storage.capacity_mwh
    if not 0.0 <= r_t <= 1.0:
        raise ContractError(f"r_t must lie in [0, 1], got {r_t}")
    if not 0.0 <= s_t <= cap:
        raise ContractError(f"s_t must lie in [0, {cap}], got {s_t}")
    if not g_t >= 0.0:
        raise ContractError(f"g_t must be non-negative, got {g_t}")
    rating = storage.rating_mw
    r_prime = min(r_t * farm.capacity_mw, g_t + s_t)
    r_regen = min(max(r_prime - g_t, 0.0), rating)
    r_direct = max(r_prime - r_regen, 0.0)
    r_prime = r_direct + r_regen * storage.rte
    s_next = max(min(s_t + min(g_t - r_prime, rating), cap), 0.0)
    return r_prime, s_next


@dataclass
class StepCache:
    """Branch masks of a vectorized step, kept for the backward pass."""

    take_request: np.ndarray
    take_supply: np.ndarray
    deficit: np.ndarray
    regen_free: np.ndarray
    direct_pos: np.ndarray
    charge_free: np.ndarray
    below_cap: np.ndarray
    above_zero: np.ndarray


def post_process(
    r: np.ndarray,
    g: np.ndarray,
    s: np.ndarray,
    capacity_mw: float,
    rating: float,
    storage_cap: float,
    rte: float,
) -> tuple[np.ndarray, np.ndarray, StepCache]:
    """Vectorized post-processing step without precondition checks.

    Identical arithmetic to :func:`post_process_step`, elementwise. Also
    returns the branch masks needed by :func:`post_process_backward`.
    """
    request = r * capacity_mw
    supply = g + s
    r1 = np.minimum(request, supply)
    excess = r1 - g
    deficit = excess > 0
    pos_excess = np.where(deficit, excess, 0.0)
    regen = np.minimum(pos_excess, rating)
    direct_raw = r1 - regen
    direct = np.maximum(direct_raw, 0.0)
    r_prime = direct + regen * rte
    net = g - r_prime
    charge = np.minimum(net, rating)
    w = s + charge
    z = np.minimum(w, storage_cap)
    s_next = np.maximum(z, 0.0)
    cache = StepCache(
        take_request=request < supply,
        take_supply=supply < request,
        deficit=deficit,
        regen_free=pos_excess < rating,
        direct_pos=direct_raw > 0,
        charge_free=net < rating,
        below_cap=w < storage_cap,
        above_zero=z > 0,
    )
    return r_prime, s_next, cache


def post_process_backward(
    cache: StepCache,
    d_rprime: np.ndarray,
    d_snext: np.ndarray,
    capacity_mw: float,
    rte: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Subgradients of a vectorized step with respect to ``r`` and ``s``.

    Every min/max routes the gradient to the strictly smaller/larger
    argument; exact ties pass zero.
    """
    d_z = np.where(cache.above_zero, d_snext, 0.0)
    d_w = np.where(cache.below_cap, d_z, 0.0)
    d_s = d_w.copy()
    d_net = np.where(cache.charge_free, d_w, 0.0)
    d_rp = d_rprime - d_net
    d_direct = d_rp
    d_regen = d_rp * rte
    d_direct_raw = np.where(cache.direct_pos, d_direct, 0.0)
    d_r1 = d_direct_raw
    d_regen = d_regen - d_direct_raw
    d_pos_excess = np.where(cache.regen_free, d_regen, 0.0)
    d_r1 = d_r1 + np.where(cache.deficit, d_pos_excess, 0.0)
    d_r = np.where(cache.take_request, d_r1, 0.0) * capacity_mw
    d_s = d_s + np.where(cache.take_supply, d_r1, 0.0)
    return d_r, d_s


@dataclass
class DispatchTrace:
    """Result of simulating a dispatch policy over a frame.

    ``s`` has one more entry than the other series: it starts with the
    initial stored energy.
    """

    r_raw: np.ndarray
    r_prime: np.ndarray
    s: np.ndarray
    curtailed: np.ndarray
    clamped: int = 0

    def __len__(self) -> int:
        return int(self.r_prime.shape[0])

    def to_frame(self, timestamps: np.ndarray, g: np.ndarray) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "time": np.datetime_as_string(timestamps, unit="s"),
                "g": g,
                "r_raw": self.r_raw,
                "r_prime": self.r_prime,
                "s": self.s[1:],
                "curtailed": self.curtailed,
            }
        )

    def to_csv(self, path: str | Path, timestamps: np.ndarray, g: np.ndarray) -> None:
        self.to_frame(timestamps, g).to_csv(path, index=False, float_format="%.17g")


class Policy(Protocol):
    """Per-step dispatch rule: ``policy(t, s_t) -> r_t``."""

    def __call__(self, t: int, s_t: float) -> float: ...


def simulate(
    decider: Policy | Callable[[int, float], float],
    frame: SeriesFrame,
    farm: FarmSpec,
    storage: StorageSpec,
    s0: float = 0.0,
) -> DispatchTrace:
    """Run ``decider`` over ``frame``, feeding each next stored energy back.

    Requests outside [0, 1] are clamped and counted in ``trace.clamped``.
    """
    frame.require("g")
    if not 0.0 <= s0 <= storage.capacity_mwh:
        raise ContractError(f"s0 must lie in [0, {storage.capacity_mwh}], got {s0}")
    n = len(frame)
    g = frame.g
    r_raw = np.empty(n)
    r_prime = np.empty(n)
    s = np.empty(n + 1)
    s[0] = s0
    clamped = 0
    for t in range(n):
        r = float(decider(t, s[t]))
        if not np.isfinite(r):
            raise ContractError(f"policy emitted non-finite request {r} at step {t}")
        if r < 0.0 or r > 1.0:
            clamped += 1
            r = min(max(r, 0.0), 1.0)
        r_raw[t] = r
        r_prime[t], s[t + 1] = post_process_step(r, g[t], s[t], farm, storage)
    if clamped:
        warnings.warn(f"{clamped} dispatch requests clamped to [0, 1]", RuntimeWarning, stacklevel=2)
    return DispatchTrace(r_raw, r_prime, s, curtailment_series(g, r_prime, s), clamped)


def baseload_policy(frame: SeriesFrame, target: float, farm: FarmSpec) -> Callable[[int, float], float]:
    """Request a fixed ``target`` (MW) each hour, bounded by what is on hand.

    Surplus generation then charges storage and deficits discharge it.
    """
    if not target > 0:
        raise ContractError(f"baseload target must be positive, got {target}")
    frame.require("g")
    g = frame.g
    cap = farm.capacity_mw

    def decide(t: int, s_t: float) -> float:
        return min(max(min(target, g[t] + s_t) / cap, 0.0), 1.0)

    return decide


def simulate_baseload(
    frame: SeriesFrame,
    farm: FarmSpec,
    storage: StorageSpec,
    target: float | None = None,
    s0: float = 0.0,
) -> DispatchTrace:
    """Baseload dispatch; ``target`` defaults to the mean of ``frame.g``."""
    frame.require("g")
    if target is None:
        target = float(np.mean(frame.g))
    return simulate(baseload_policy(frame, target, farm), frame, farm, storage, s0)
