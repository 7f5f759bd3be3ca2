"""Storage-aware dispatch network trained on an unsupervised COVE loss.

Per hour the LSTM reads ``(g_t, p_t, s_t, u_t)`` and the sigmoid head
emits a capacity factor ``r_t``. Post-processing turns it into delivered
power ``r'_t`` and next stored energy ``s_{t+1}``, which is fed back as the
next step's storage covariate. Training differentiates through the
post-processing min/max chain with piecewise-linear subgradients.

Inputs are scaled to O(1): ``g`` and ``u`` by the farm rating, ``s`` by the
storage capacity and ``p`` by the mean training price.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import nn
from .dispatch import DispatchTrace, post_process, post_process_backward, simulate
from .econ import (
    HOURS_PER_YEAR,
    FarmSpec,
    StorageSpec,
    annual_report,
    average_annual,
    curtailment_series,
    default_catalog,
    fixed_costs,
)
from .errors import ContractError, NumericError, UndefinedMetricError
from .series import SeriesFrame, make_batches

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LossHyperparams:
    """Penalty weights of the unsupervised loss.

    Defaults are the best values found by a prior hyperparameter search.
    """

    gamma: float = 1.807
    Gamma: float = 3.288
    omega: float = 2.702
    Omega: float = 2.546
    lam: float = 1.0
    Lambda: float = 0.152
    t_a: int = 8

    def __post_init__(self) -> None:
        if not (self.Gamma > 0 and self.Omega > 0 and self.Lambda > 0):
            raise ContractError("penalty degrees Gamma, Omega, Lambda must be positive")
        if self.lam < 0 or self.t_a < 0 or self.gamma < 0 or self.omega < 0:
            raise ContractError("lambda, t_a and the pre-factors must be non-negative")

    def adaptive_factor(self, epoch: int) -> float:
        """``lam / max(epoch - t_a, 1) ** Lambda`` with 1-based epochs."""
        return self.lam / max(epoch - self.t_a, 1) ** self.Lambda


def default_storage() -> StorageSpec:
    return default_catalog().lookup("CAES", 100, 24)


@dataclass(frozen=True)
class CoveConfig:
    hidden: int = 16
    ff: tuple[int, ...] = (128, 64)
    lr: float = 1e-4
    epochs: int = 32
    batch: int = 8
    seq_len: int = 168
    storage: StorageSpec | None = None
    farm: FarmSpec = field(default_factory=FarmSpec)
    hp: LossHyperparams = field(default_factory=LossHyperparams)
    price_floor_frac: float = 0.01
    stride: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "ff", tuple(int(w) for w in self.ff))
        if self.storage is None:
            object.__setattr__(self, "storage", default_storage())
        if self.seq_len < 1 or self.batch < 1 or self.epochs < 0:
            raise ContractError("seq_len and batch must be positive, epochs non-negative")
        if self.stride is not None and self.stride < 1:
            raise ContractError("stride must be positive")
        if not self.lr > 0:
            raise ContractError("learning rate must be positive")

    def shape(self) -> nn.NetShape:
        return nn.NetShape(input_dim=4, hidden=self.hidden, ff=self.ff, extra_dim=0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ff"] = list(self.ff)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CoveConfig":
        d = dict(d)
        d["storage"] = StorageSpec(**d["storage"])
        d["farm"] = FarmSpec(**d["farm"])
        d["hp"] = LossHyperparams(**d["hp"])
        return cls(**d)


@dataclass
class CoveModel:
    params: nn.NetParams
    cfg: CoveConfig
    p_scale: float

    def meta(self) -> dict:
        return {"kind": "cove", "config": self.cfg.to_dict(), "p_scale": self.p_scale}

    @classmethod
    def from_meta(cls, params: nn.NetParams, meta: dict) -> "CoveModel":
        if meta.get("kind") != "cove":
            raise ContractError(f"checkpoint holds a {meta.get('kind')!r} model, not 'cove'")
        return cls(params, CoveConfig.from_dict(meta["config"]), meta["p_scale"])


@dataclass
class ForwardResult:
    r_raw: np.ndarray
    r_prime: np.ndarray
    s: np.ndarray
    tape: list | None = None


def _inputs(g_t, p_t, s_t, u_t, farm: FarmSpec, storage: StorageSpec, p_scale: float) -> np.ndarray:
    return np.stack(
        [g_t / farm.capacity_mw, p_t / p_scale, s_t / storage.capacity_mwh, u_t / farm.capacity_mw],
        axis=1,
    )


def cove_forward(
    g: np.ndarray,
    p: np.ndarray,
    u: np.ndarray,
    params: nn.NetParams,
    farm: FarmSpec,
    storage: StorageSpec,
    s0: np.ndarray | float,
    p_scale: float,
    record: bool = False,
) -> ForwardResult:
    """Unroll the dispatch network over windows of shape (B, L)."""
    g, p, u = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (g, p, u))
    if not (g.shape == p.shape == u.shape):
        raise ContractError("g, p and u windows must share one shape")
    B, L = g.shape
    H = params.shape.hidden
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    s = np.empty((B, L + 1))
    s[:, 0] = s0
    if np.any(s[:, 0] < 0) or np.any(s[:, 0] > storage.capacity_mwh):
        raise ContractError("initial stored energy outside [0, capacity]")
    r_raw = np.empty((B, L))
    r_prime = np.empty((B, L))
    tape = [] if record else None
    for t in range(L):
        x = _inputs(g[:, t], p[:, t], s[:, t], u[:, t], farm, storage, p_scale)
        h, c, lc = nn.lstm_step(x, h, c, params)
        r, fc = nn.ff_forward(h, params, None, head="sigmoid")
        r_raw[:, t] = r
        r_prime[:, t], s[:, t + 1], pc = post_process(
            r, g[:, t], s[:, t], farm.capacity_mw, storage.rating_mw, storage.capacity_mwh, storage.rte
        )
        if record:
            tape.append((lc, fc, pc))
    return ForwardResult(r_raw, r_prime, s, tape)


def cove_backward(
    d_rprime: np.ndarray,
    d_s: np.ndarray,
    tape: list,
    params: nn.NetParams,
    farm: FarmSpec,
    storage: StorageSpec,
) -> nn.Gradients:
    """Backpropagate loss gradients on ``r'`` (B, L) and ``s`` (B, L + 1).

    Gradient reaches ``s_t`` through both the post-processing step and the
    LSTM storage covariate.
    """
    grads = params.zeros_like()
    B, L = d_rprime.shape
    H = params.shape.hidden
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    ds_carry = d_s[:, L].copy()
    for t in range(L - 1, -1, -1):
        lc, fc, pc = tape[t]
        d_r, d_s_step = post_process_backward(pc, d_rprime[:, t], ds_carry, farm.capacity_mw, storage.rte)
        dh_ff, _ = nn.ff_backward(d_r, fc, params, grads)
        dx, dh_next, dc_next = nn.lstm_step_backward(dh_ff + dh_next, dc_next, lc, params, grads)
        ds_carry = d_s[:, t] + d_s_step + dx[:, 2] / storage.capacity_mwh
    return grads


def _power_term(pre: float, m: float, degree: float) -> tuple[float, float]:
    """(pre * m) ** degree and its derivative in m (0 at m = 0)."""
    if m <= 0:
        return 0.0, 0.0
    val = (pre * m) ** degree
    return val, degree * val / m


def unsupervised_loss_batch(
    r_prime: np.ndarray,
    s: np.ndarray,
    p: np.ndarray,
    g: np.ndarray,
    hp: LossHyperparams,
    epoch: int,
    farm: FarmSpec,
    storage: StorageSpec,
    price_floor_frac: float = 0.01,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Window-averaged unsupervised loss and its gradients.

    Each window contributes its COVE (fixed costs prorated to the window
    length) plus the time-adaptive peaking and baseload penalties. Penalty
    arguments are window means of ``s_{t+1}/C_S * p_t/p_bar`` and
    ``max(r'_t - g_bar, 0)/C_WF * p_bar/p_t``.

    Returns ``(loss, d_loss/d_r_prime, d_loss/d_s)``.
    """
    B, L = r_prime.shape
    cost = fixed_costs(farm, storage) * L / HOURS_PER_YEAR
    factor = hp.adaptive_factor(epoch)
    cap_s = storage.capacity_mwh
    cap_wf = farm.capacity_mw
    d_r = np.zeros_like(r_prime)
    d_s = np.zeros_like(s)
    total = 0.0
    for b in range(B):
        rb, pb, gb = r_prime[b], p[b], g[b]
        valued = float(rb @ pb)
        if not valued > 0:
            raise UndefinedMetricError(f"COVE undefined in window {b}: sum(r'*p) = {valued:.6g}")
        cove_b = cost / valued
        d_r[b] += -cost * pb / valued ** 2
        p_bar = float(pb.mean())
        if not p_bar > 0:
            raise UndefinedMetricError(f"non-positive mean price {p_bar:.6g} in window {b}")
        g_bar = float(gb.mean())
        peak_w = pb / p_bar / cap_s / L
        m_peak = float(s[b, 1:] @ peak_w)
        excess = rb - g_bar
        base_w = p_bar / np.maximum(pb, price_floor_frac * p_bar) / cap_wf / L
        m_base = float(np.where(excess > 0, excess, 0.0) @ base_w)
        pk, dpk = _power_term(hp.gamma, m_peak, hp.Gamma)
        bs, dbs = _power_term(hp.omega, m_base, hp.Omega)
        total += cove_b + factor * (pk + bs)
        d_s[b, 1:] += factor * dpk * peak_w
        d_r[b] += factor * dbs * np.where(excess > 0, base_w, 0.0)
    return total / B, d_r / B, d_s / B


def unsupervised_loss(
    trace: DispatchTrace,
    p: np.ndarray,
    g: np.ndarray,
    hp: LossHyperparams,
    epoch: int,
    farm: FarmSpec,
    storage: StorageSpec,
    price_floor_frac: float = 0.01,
) -> float:
    """Loss of a single dispatch trace."""
    loss, _, _ = unsupervised_loss_batch(
        np.asarray(trace.r_prime, float)[None],
        np.asarray(trace.s, float)[None],
        np.asarray(p, float)[None],
        np.asarray(g, float)[None],
        hp,
        epoch,
        farm,
        storage,
        price_floor_frac,
    )
    return loss


def batch_loss(
    model: CoveModel,
    g: np.ndarray,
    p: np.ndarray,
    u: np.ndarray,
    epoch: int,
    s0: float = 0.0,
    record: bool = False,
) -> tuple[float, nn.Gradients | None]:
    cfg = model.cfg
    fw = cove_forward(g, p, u, model.params, cfg.farm, cfg.storage, s0, model.p_scale, record)
    loss, d_r, d_s = unsupervised_loss_batch(
        fw.r_prime, fw.s, p, g, cfg.hp, epoch, cfg.farm, cfg.storage, cfg.price_floor_frac
    )
    if not np.isfinite(loss):
        raise NumericError(f"COVE-NN loss became non-finite ({loss})")
    if not record:
        return loss, None
    grads = cove_backward(d_r, d_s, fw.tape, model.params, cfg.farm, cfg.storage)
    nn.check_gradients(grads)
    return loss, grads


def dispatch_trace(model: CoveModel, frame: SeriesFrame, s0: float = 0.0) -> DispatchTrace:
    """Stream the network over a whole frame (one long sequence)."""
    frame.require("g", "p", "u")
    cfg = model.cfg
    fw = cove_forward(frame.g, frame.p, frame.u, model.params, cfg.farm, cfg.storage, s0, model.p_scale)
    r_prime, s = fw.r_prime[0], fw.s[0]
    return DispatchTrace(fw.r_raw[0], r_prime, s, curtailment_series(frame.g, r_prime, s))


class CovePolicy:
    """Step-by-step decider for :func:`hybridwind.dispatch.simulate`."""

    def __init__(self, model: CoveModel, frame: SeriesFrame) -> None:
        frame.require("g", "p", "u")
        self.model = model
        self.frame = frame
        H = model.params.shape.hidden
        self.h = np.zeros((1, H))
        self.c = np.zeros((1, H))

    def __call__(self, t: int, s_t: float) -> float:
        f, cfg = self.frame, self.model.cfg
        x = _inputs(f.g[t : t + 1], f.p[t : t + 1], np.array([s_t]), f.u[t : t + 1], cfg.farm, cfg.storage, self.model.p_scale)
        self.h, self.c, _ = nn.lstm_step(x, self.h, self.c, self.model.params)
        r, _ = nn.ff_forward(self.h, self.model.params, None, head="sigmoid")
        return float(r[0])


def simulate_model(model: CoveModel, frame: SeriesFrame, s0: float = 0.0) -> DispatchTrace:
    return simulate(CovePolicy(model, frame), frame, model.cfg.farm, model.cfg.storage, s0)


def validation_cove(model: CoveModel, frame: SeriesFrame) -> float:
    """Average annual COVE of the streamed dispatch over ``frame``."""
    trace = dispatch_trace(model, frame)
    reports = annual_report(trace, frame.g, model.cfg.storage, frame.p, model.cfg.farm)
    return average_annual(reports, "cove")[0]


def _seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


@dataclass
class TrainResult:
    model: CoveModel
    history: list[dict] = field(default_factory=list)
    opt: nn.AdamState | None = None
    epoch: int = 0
    stopped_early: bool = False


def train_cove(
    train: SeriesFrame,
    valid: SeriesFrame,
    cfg: CoveConfig,
    seed: int | None = None,
    resume: TrainResult | None = None,
    on_epoch: Callable[[dict], bool] | None = None,
) -> TrainResult:
    """Adam training on the unsupervised loss.

    ``on_epoch`` receives each epoch's history row (``epoch``,
    ``train_loss``, ``valid_cove``) and may return ``False`` to stop
    training. Row 0 is the untrained network.
    """
    for frame in (train, valid):
        frame.require("g", "p", "u")
    seed = cfg.seed if seed is None else seed
    if resume is None:
        p_scale = float(np.mean(train.p))
        if not p_scale > 0:
            raise ContractError("mean training price must be positive")
        model = CoveModel(nn.init_params(cfg.shape(), seed), cfg, p_scale)
        opt = nn.AdamState.zeros(model.params)
        history = [{"epoch": 0, "train_loss": float("nan"), "valid_cove": validation_cove(model, valid)}]
        start = 1
    else:
        model, opt, history, start = resume.model, resume.opt, list(resume.history), resume.epoch + 1
    epoch = start - 1
    for epoch in range(start, cfg.epochs + 1):
        batches = make_batches(
            train, cfg.seq_len, cfg.batch, seed=_seed(seed, epoch), stride=cfg.stride, channels=("g", "p", "u")
        )
        losses = []
        for b in batches:
            loss, grads = batch_loss(model, b["g"], b["p"], b["u"], epoch, record=True)
            nn.adam_step(model.params, grads, opt, cfg.lr)
            losses.append(loss)
        row = {"epoch": epoch, "train_loss": float(np.mean(losses)), "valid_cove": validation_cove(model, valid)}
        history.append(row)
        log.info("cove epoch %d: loss %.5f valid COVE %.5f", epoch, row["train_loss"], row["valid_cove"])
        if on_epoch is not None and on_epoch(row) is False:
            return TrainResult(model, history, opt, epoch, stopped_early=True)
    return TrainResult(model, history, opt, max(epoch, start - 1))
