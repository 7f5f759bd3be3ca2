"""Probabilistic wind-power generation with a recurrent neural quantile function.

The LSTM reads ``(v_t, p_{t-1})``; the feedforward head reads ``(h_t, alpha_t)``
and emits ``p_t`` in [0, 1] (capacity factor). Each quantile level is run
as its own autoregressive path, so a constant-level path during training
is exactly what :func:`generate` produces with a frozen walk.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import metrics, nn
from .errors import ContractError, DomainError, NumericError
from .series import SeriesFrame, make_batches

log = logging.getLogger(__name__)

DEFAULT_LEVELS = (0.01, 0.05, 0.1, 0.5, 0.9, 0.99)
WALK_EPS = 1e-6


@dataclass(frozen=True)
class NqfConfig:
    hidden: int = 32
    ff: tuple[int, ...] = (32, 16)
    lr: float = 1e-3
    epochs: int = 32
    batch: int = 6
    seq_len: int = 168
    levels: tuple[float, ...] = DEFAULT_LEVELS
    smooth_lambda: float = 0.01
    drift_gamma: float = 0.005
    bias_weight: float = 1.0
    mono_weight: float = 10.0
    mono_margin: float = 0.0
    stride: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        lv = tuple(float(a) for a in self.levels)
        object.__setattr__(self, "levels", lv)
        object.__setattr__(self, "ff", tuple(int(w) for w in self.ff))
        if not lv or any(not 0 < a < 1 for a in lv):
            raise DomainError(f"quantile levels must lie strictly inside (0, 1): {lv}")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise DomainError(f"quantile levels must be strictly ascending: {lv}")
        if self.bias_weight > 0 and 0.5 not in lv:
            raise DomainError("the bias term needs the 0.5 level")
        if self.seq_len < 1 or self.batch < 1 or self.epochs < 0:
            raise ContractError("seq_len and batch must be positive, epochs non-negative")
        if self.stride is not None and self.stride < 1:
            raise ContractError("stride must be positive")
        if not self.lr > 0:
            raise ContractError("learning rate must be positive")

    def shape(self) -> nn.NetShape:
        return nn.NetShape(input_dim=2, hidden=self.hidden, ff=self.ff, extra_dim=1)


@dataclass
class NqfModel:
    """Trained parameters plus the scalings needed to apply them."""

    params: nn.NetParams
    cfg: NqfConfig
    capacity_mw: float
    v_scale: float

    def meta(self) -> dict:
        return {
            "kind": "nqf",
            "config": asdict(self.cfg),
            "capacity_mw": self.capacity_mw,
            "v_scale": self.v_scale,
        }

    @classmethod
    def from_meta(cls, params: nn.NetParams, meta: dict) -> "NqfModel":
        if meta.get("kind") != "nqf":
            raise ContractError(f"checkpoint holds a {meta.get('kind')!r} model, not 'nqf'")
        return cls(params, NqfConfig(**meta["config"]), meta["capacity_mw"], meta["v_scale"])


@dataclass
class _Tape:
    lstm: list
    ff: list
    alpha: np.ndarray


def unroll(
    v_norm: np.ndarray,
    alpha: np.ndarray,
    p0: np.ndarray,
    params: nn.NetParams,
    record: bool = False,
) -> tuple[np.ndarray, _Tape | None]:
    """Run ``R`` autoregressive paths of length ``L``.

    ``v_norm`` and ``alpha`` are (R, L); ``p0`` (R,) seeds the first step.
    Returns predictions (R, L) and, when ``record``, the tape for
    :func:`unroll_backward`.
    """
    R, L = v_norm.shape
    H = params.shape.hidden
    h = np.zeros((R, H))
    c = np.zeros((R, H))
    p_prev = np.asarray(p0, dtype=float).reshape(R)
    out = np.empty((R, L))
    tape = _Tape([], [], alpha) if record else None
    for t in range(L):
        x = np.stack([v_norm[:, t], p_prev], axis=1)
        h, c, lc = nn.lstm_step(x, h, c, params)
        p_t, fc = nn.ff_forward(h, params, alpha[:, t : t + 1], head="sigmoid")
        out[:, t] = p_t
        p_prev = p_t
        if record:
            tape.lstm.append(lc)
            tape.ff.append(fc)
    return out, tape


def unroll_backward(d_out: np.ndarray, tape: _Tape, params: nn.NetParams) -> nn.Gradients:
    """Backpropagation through time, including the ``p_{t-1}`` feedback."""
    grads = params.zeros_like()
    R, L = d_out.shape
    H = params.shape.hidden
    dh_next = np.zeros((R, H))
    dc_next = np.zeros((R, H))
    dp_feedback = np.zeros(R)
    for t in range(L - 1, -1, -1):
        dp = d_out[:, t] + dp_feedback
        dh_ff, _ = nn.ff_backward(dp, tape.ff[t], params, grads)
        dx, dh_next, dc_next = nn.lstm_step_backward(dh_ff + dh_next, dc_next, tape.lstm[t], params, grads)
        dp_feedback = dx[:, 1]
    return grads


def nqf_forward(
    v: Sequence[float],
    alphas: Sequence[float],
    params: nn.NetParams,
    p0: float = 0.0,
    v_scale: float = 1.0,
) -> np.ndarray:
    """Capacity-factor path of one series along per-step quantile levels."""
    v = np.asarray(v, dtype=float)
    alphas = np.broadcast_to(np.asarray(alphas, dtype=float), v.shape)
    if np.any((alphas <= 0) | (alphas >= 1)):
        raise DomainError("quantile levels must lie strictly inside (0, 1)")
    if not np.all(np.isfinite(v)):
        raise NumericError("non-finite wind speed")
    out, _ = unroll((v / v_scale)[None, :], alphas[None, :], np.array([p0]), params)
    return out[0]


def pinball(u: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """rho_alpha(u) = u * (alpha - 1[u < 0])."""
    return u * (alpha - (u < 0))


def crps_loss(
    preds: np.ndarray,
    y: np.ndarray,
    levels: Sequence[float],
    bias_weight: float,
    return_grad: bool = False,
):
    """Discretized CRPS with a mean-bias term.

    Parameters
    ----------
    preds : array, shape (K, T) or (B, K, T)
        Predicted capacity factors per level.
    y : array, shape (T,) or (B, T)
        Observed capacity factors.

    Returns the loss averaged over windows, and its gradient with respect
    to ``preds`` when ``return_grad`` is set.
    """
    levels = np.asarray(levels, dtype=float)
    preds = np.asarray(preds, dtype=float)
    y = np.asarray(y, dtype=float)
    single = preds.ndim == 2
    if single:
        preds, y = preds[None], y[None]
    B, K, T = preds.shape
    if levels.shape != (K,) or y.shape != (B, T):
        raise ContractError("prediction, level and observation shapes disagree")
    u = y[:, None, :] - preds
    a = levels[None, :, None]
    pin = (2.0 / K) * pinball(u, a).sum(axis=1).mean(axis=1)
    loss_b = pin
    grad = (2.0 / K) * -(a - (u < 0)) / T
    if bias_weight:
        k_med = int(np.flatnonzero(levels == 0.5)[0])
        diff = preds[:, k_med, :].mean(axis=1) - y.mean(axis=1)
        loss_b = loss_b + bias_weight * diff ** 2
        grad = grad.copy()
        grad[:, k_med, :] += (2.0 * bias_weight * diff / T)[:, None]
    loss = float(loss_b.mean())
    if not return_grad:
        return loss
    grad = np.broadcast_to(grad, preds.shape) / B
    return loss, (grad[0] if single else grad)


def monotonicity_penalty(preds: np.ndarray, weight: float, margin: float = 0.0):
    """Hinge on adjacent-level crossings, averaged over (window, step, pair).

    Returns ``(penalty, grad)`` for preds of shape (B, K, T).
    """
    crossing = preds[:, :-1, :] - preds[:, 1:, :] + margin
    active = crossing > 0
    n = crossing.size
    if weight == 0 or n == 0:
        return 0.0, np.zeros_like(preds)
    penalty = weight * float(np.where(active, crossing, 0.0).sum()) / n
    g = np.zeros_like(preds)
    d = weight * active / n
    g[:, :-1, :] += d
    g[:, 1:, :] -= d
    return penalty, g


def brownian_walk(
    T: int, smooth_lambda: float, drift_gamma: float, seed: int, alpha0: float = 0.5
) -> np.ndarray:
    """Smooth random walk of quantile levels, mean-reverting to 0.5.

    ``alpha[0] = alpha0`` and each next level adds ``lambda * N(0, 1)`` plus
    ``gamma * (0.5 - alpha_prev)``, then reflects back into
    ``[eps, 1 - eps]``.
    """
    if smooth_lambda < 0:
        raise DomainError("smoothness factor must be non-negative")
    if not 0 <= drift_gamma < 1:
        raise DomainError("drift factor must lie in [0, 1)")
    if not 0 < alpha0 < 1:
        raise DomainError("alpha0 must lie strictly inside (0, 1)")
    noise = np.random.default_rng(seed).standard_normal(T) * smooth_lambda
    lo, hi = WALK_EPS, 1.0 - WALK_EPS
    out = np.empty(T)
    a = float(alpha0)
    for t in range(T):
        if t:
            a = a + noise[t] + drift_gamma * (0.5 - a)
            while a < lo or a > hi:
                a = 2 * lo - a if a < lo else 2 * hi - a
        out[t] = a
    return out


def generate(
    model: NqfModel,
    v: Sequence[float],
    seed: int,
    p0: float = 0.0,
    alpha0: float = 0.5,
    smooth_lambda: float | None = None,
    drift_gamma: float | None = None,
) -> np.ndarray:
    """Synthetic power (MW) along a Brownian quantile walk; cold start ``p0 = 0``."""
    cfg = model.cfg
    lam = cfg.smooth_lambda if smooth_lambda is None else smooth_lambda
    gam = cfg.drift_gamma if drift_gamma is None else drift_gamma
    alphas = brownian_walk(len(v), lam, gam, seed, alpha0)
    cf = nqf_forward(v, alphas, model.params, p0, model.v_scale)
    return cf * model.capacity_mw


def _seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def batch_loss(
    model: NqfModel, v: np.ndarray, y: np.ndarray, record: bool = False
) -> tuple[float, nn.Gradients | None]:
    """Loss (and gradients) of a batch of windows, each run at every level."""
    cfg = model.cfg
    levels = np.asarray(cfg.levels)
    B, L = v.shape
    K = levels.size
    v_rows = np.repeat(v / model.v_scale, K, axis=0)
    a_rows = np.repeat(np.tile(levels, B)[:, None], L, axis=1)
    p0 = np.repeat(y[:, 0], K)
    out, tape = unroll(v_rows, a_rows, p0, model.params, record=record)
    preds = out.reshape(B, K, L)
    if not record:
        loss = crps_loss(preds, y, levels, cfg.bias_weight)
        loss += monotonicity_penalty(preds, cfg.mono_weight, cfg.mono_margin)[0]
        return loss, None
    loss, d_preds = crps_loss(preds, y, levels, cfg.bias_weight, return_grad=True)
    pen, d_pen = monotonicity_penalty(preds, cfg.mono_weight, cfg.mono_margin)
    loss += pen
    if not np.isfinite(loss):
        raise NumericError(f"NQF loss became non-finite ({loss})")
    grads = unroll_backward((d_preds + d_pen).reshape(B * K, L), tape, model.params)
    nn.check_gradients(grads)
    return loss, grads


def validation_loss(model: NqfModel, frame: SeriesFrame) -> float:
    y = frame.g / model.capacity_mw
    L = min(model.cfg.seq_len, len(frame))
    batches = make_batches(frame.with_channels(g=y), L, 64, seed=0, channels=("v", "g"))
    total, count = 0.0, 0
    for b in batches:
        loss, _ = batch_loss(model, b["v"], b["g"])
        total += loss * b.size
        count += b.size
    return total / count


@dataclass
class TrainResult:
    model: NqfModel
    history: list[dict] = field(default_factory=list)
    opt: nn.AdamState | None = None
    epoch: int = 0


def train_nqf(
    train: SeriesFrame,
    valid: SeriesFrame,
    cfg: NqfConfig,
    capacity_mw: float,
    seed: int | None = None,
    resume: TrainResult | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Adam training on shuffled windows of ``train``.

    Each window's first autoregressive input is the observed capacity
    factor at the window start. Per-epoch validation loss is recorded,
    with epoch 0 being the untrained network. Batch order depends only on
    ``(seed, epoch)``, so a resumed run matches an uninterrupted one.
    """
    train.require("v", "g")
    valid.require("v", "g")
    seed = cfg.seed if seed is None else seed
    if resume is None:
        v_scale = float(max(train.v.max(), 1e-9))
        model = NqfModel(nn.init_params(cfg.shape(), seed), cfg, capacity_mw, v_scale)
        opt = nn.AdamState.zeros(model.params)
        history = [{"epoch": 0, "train_loss": float("nan"), "valid_loss": validation_loss(model, valid)}]
        start = 1
    else:
        model, opt, history, start = resume.model, resume.opt, list(resume.history), resume.epoch + 1
    y_train = train.g / capacity_mw
    frame = train.with_channels(g=y_train)
    for epoch in range(start, cfg.epochs + 1):
        batches = make_batches(
            frame, cfg.seq_len, cfg.batch, seed=_seed(seed, epoch), stride=cfg.stride, channels=("v", "g")
        )
        losses = []
        for b in batches:
            loss, grads = batch_loss(model, b["v"], b["g"], record=True)
            nn.adam_step(model.params, grads, opt, cfg.lr)
            losses.append(loss)
        row = {
            "epoch": epoch,
            "train_loss": float(np.mean(losses)),
            "valid_loss": validation_loss(model, valid),
        }
        history.append(row)
        log.info("nqf epoch %d: train %.5f valid %.5f", epoch, row["train_loss"], row["valid_loss"])
        if on_epoch is not None:
            on_epoch(row)
    return TrainResult(model, history, opt, cfg.epochs)


def evaluate(
    model: NqfModel,
    frame: SeriesFrame,
    seed: int = 0,
    bins: int = metrics.DEFAULT_BINS,
    p0: float | None = None,
) -> dict[str, float]:
    """RMSE, cross correlation and power-curve similarity on capacity-factor scale.

    The model output is a generated series along a Brownian quantile walk
    seeded with ``seed``; the first autoregressive input defaults to the
    observed capacity factor at the start of ``frame``.
    """
    frame.require("v", "g")
    obs = frame.g / model.capacity_mw
    start = obs[0] if p0 is None else p0
    pred = generate(model, frame.v, seed, p0=start) / model.capacity_mw
    return {
        "rmse": metrics.rmse(pred, obs),
        "xcorr": metrics.cross_correlation(pred, obs),
        "similarity": metrics.power_curve_similarity((frame.v, obs), (frame.v, pred), bins),
    }
