"""Minimal float64 recurrent network core.

An LSTM cell feeds a tanh feedforward stack that ends in one scalar
neuron. Forward functions return a cache; matching ``*_backward``
functions consume it and accumulate parameter gradients in place. Models
build their own unrolled loops on top of these pieces.

Gate layout in the stacked LSTM matrices is ``[input, forget, cell, output]``.
"""
from __future__ import annotations

import json
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .errors import NumericError

CHECKPOINT_VERSION = 1
CELL_STATE_LIMIT = 1e6


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass(frozen=True)
class NetShape:
    input_dim: int
    hidden: int
    ff: tuple[int, ...]
    extra_dim: int = 0

    def tensor_shapes(self) -> dict[str, tuple[int, ...]]:
        H = self.hidden
        shapes = {
            "lstm_Wx": (self.input_dim, 4 * H),
            "lstm_Wh": (H, 4 * H),
            "lstm_b": (4 * H,),
        }
        fan_in = H + self.extra_dim
        for k, width in enumerate(self.ff, start=1):
            shapes[f"ff_W{k}"] = (fan_in, width)
            shapes[f"ff_b{k}"] = (width,)
            fan_in = width
        shapes["head_w"] = (fan_in,)
        shapes["head_b"] = ()
        return shapes


@dataclass
class NetParams:
    """Named float64 tensors of one network plus its shape."""

    shape: NetShape
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def __setitem__(self, name: str, value: np.ndarray) -> None:
        self.tensors[name] = value

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def copy(self) -> "NetParams":
        return NetParams(self.shape, {k: v.copy() for k, v in self.tensors.items()})

    def zeros_like(self) -> "NetParams":
        return NetParams(self.shape, {k: np.zeros_like(v) for k, v in self.tensors.items()})

    def check_finite(self, what: str = "parameter") -> None:
        for k, v in self.tensors.items():
            if not np.all(np.isfinite(v)):
                raise NumericError(f"non-finite {what} in {k!r}")

    def num_values(self) -> int:
        return sum(int(v.size) for v in self.tensors.values())


Gradients = NetParams


def init_bound(fan_in: int) -> float:
    return 1.0 / np.sqrt(fan_in)


def init_params(shape: NetShape, seed: int) -> NetParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases,
    forget-gate bias +1."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shp in shape.tensor_shapes().items():
        if name == "lstm_Wx" or name == "lstm_Wh":
            bound = init_bound(shape.input_dim + shape.hidden)
            tensors[name] = rng.uniform(-bound, bound, shp)
        elif name.startswith("ff_W") or name == "head_w":
            bound = init_bound(shp[0])
            tensors[name] = rng.uniform(-bound, bound, shp)
        else:
            tensors[name] = np.zeros(shp)
    H = shape.hidden
    tensors["lstm_b"][H : 2 * H] = 1.0
    return NetParams(shape, tensors)


@dataclass
class LstmCache:
    x: np.ndarray
    h: np.ndarray
    c: np.ndarray
    i: np.ndarray
    f: np.ndarray
    gc: np.ndarray
    o: np.ndarray
    tanh_c: np.ndarray


def lstm_step(
    x: np.ndarray, h: np.ndarray, c: np.ndarray, params: NetParams
) -> tuple[np.ndarray, np.ndarray, LstmCache]:
    """One LSTM step for a batch: ``x`` (B, I), ``h`` and ``c`` (B, H)."""
    if x.shape[-1] != params.shape.input_dim:
        raise ValueError(f"input has {x.shape[-1]} features, network expects {params.shape.input_dim}")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite LSTM input")
    H = params.shape.hidden
    z = x @ params["lstm_Wx"] + h @ params["lstm_Wh"] + params["lstm_b"]
    i = sigmoid(z[:, :H])
    f = sigmoid(z[:, H : 2 * H])
    gc = np.tanh(z[:, 2 * H : 3 * H])
    o = sigmoid(z[:, 3 * H :])
    c_new = f * c + i * gc
    if np.abs(c_new).max(initial=0.0) > CELL_STATE_LIMIT:
        raise NumericError("LSTM cell state exploded")
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    return h_new, c_new, LstmCache(x, h, c, i, f, gc, o, tanh_c)


def lstm_step_backward(
    dh_new: np.ndarray, dc_new: np.ndarray, cache: LstmCache, params: NetParams, grads: Gradients
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns ``(dx, dh, dc)`` and accumulates LSTM parameter gradients."""
    do = dh_new * cache.tanh_c
    dc = dc_new + dh_new * cache.o * (1.0 - cache.tanh_c ** 2)
    di = dc * cache.gc
    df = dc * cache.c
    dgc = dc * cache.i
    dz = np.concatenate(
        [
            di * cache.i * (1.0 - cache.i),
            df * cache.f * (1.0 - cache.f),
            dgc * (1.0 - cache.gc ** 2),
            do * cache.o * (1.0 - cache.o),
        ],
        axis=1,
    )
    grads["lstm_Wx"] += cache.x.T @ dz
    grads["lstm_Wh"] += cache.h.T @ dz
    grads["lstm_b"] += dz.sum(axis=0)
    dx = dz @ params["lstm_Wx"].T
    dh = dz @ params["lstm_Wh"].T
    return dx, dh, dc * cache.f


@dataclass
class FFCache:
    inputs: list[np.ndarray]
    activations: list[np.ndarray]
    y: np.ndarray
    head: str


def ff_forward(
    h: np.ndarray, params: NetParams, extra: np.ndarray | None = None, head: str = "sigmoid"
) -> tuple[np.ndarray, FFCache]:
    """Feedforward stack on ``[h, extra]``; returns shape (B,) outputs.

    ``head`` is ``"sigmoid"`` or ``"linear"``.
    """
    a = h if extra is None or extra.shape[-1] == 0 else np.concatenate([h, extra], axis=1)
    expected = params.shape.hidden + params.shape.extra_dim
    if a.shape[-1] != expected:
        raise ValueError(f"feedforward input has {a.shape[-1]} features, expected {expected}")
    inputs, acts = [], []
    for k in range(1, len(params.shape.ff) + 1):
        inputs.append(a)
        a = np.tanh(a @ params[f"ff_W{k}"] + params[f"ff_b{k}"])
        acts.append(a)
    inputs.append(a)
    logit = a @ params["head_w"] + params["head_b"]
    if head == "sigmoid":
        y = sigmoid(logit)
    elif head == "linear":
        y = logit
    else:
        raise ValueError(f"unknown head activation {head!r}")
    return y, FFCache(inputs, acts, y, head)


def ff_backward(
    dy: np.ndarray, cache: FFCache, params: NetParams, grads: Gradients
) -> tuple[np.ndarray, np.ndarray]:
    """Returns gradients for ``(h, extra)``; accumulates FF parameter gradients."""
    dlogit = dy * cache.y * (1.0 - cache.y) if cache.head == "sigmoid" else dy
    top = cache.inputs[-1]
    grads["head_w"] += top.T @ dlogit
    grads["head_b"] += dlogit.sum()
    da = np.outer(dlogit, params["head_w"])
    for k in range(len(params.shape.ff), 0, -1):
        act = cache.activations[k - 1]
        dpre = da * (1.0 - act ** 2)
        grads[f"ff_W{k}"] += cache.inputs[k - 1].T @ dpre
        grads[f"ff_b{k}"] += dpre.sum(axis=0)
        da = dpre @ params[f"ff_W{k}"].T
    H = params.shape.hidden
    return da[:, :H], da[:, H:]


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros(cls, params: NetParams) -> "AdamState":
        return cls(
            {k: np.zeros_like(x) for k, x in params.items()},
            {k: np.zeros_like(x) for k, x in params.items()},
        )


def adam_step(
    params: NetParams,
    grads: Gradients,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> NetParams:
    """Bias-corrected Adam update, in place; also returns ``params``."""
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for k, w in params.items():
        g = grads[k]
        if g.shape != w.shape:
            raise ValueError(f"gradient {k!r} has shape {g.shape}, parameter {w.shape}")
        m, v = state.m[k], state.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        w -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    params.check_finite()
    return params


def check_gradients(grads: Gradients, where: str = "") -> None:
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {k!r}{where}")


def numerical_gradient(loss_fn: Callable[[NetParams], float], params: NetParams, eps: float = 1e-5) -> Gradients:
    """Central finite differences of ``loss_fn`` over every parameter value."""
    num = params.zeros_like()
    for k, w in params.items():
        flat = w.reshape(-1)
        out = num[k].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + eps
            up = loss_fn(params)
            flat[j] = orig - eps
            down = loss_fn(params)
            flat[j] = orig
            out[j] = (up - down) / (2 * eps)
    return num


def max_relative_error(analytic: Gradients, numeric: Gradients, floor: float = 1e-6) -> float:
    """max |a - n| / max(|a|, |n|, floor) over all entries."""
    worst = 0.0
    for k in analytic:
        a, n = analytic[k], numeric[k]
        rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(rel.max(initial=0.0)))
    return worst


def save_checkpoint(
    path: str | Path,
    params: NetParams,
    meta: dict,
    opt: AdamState | None = None,
) -> None:
    """Write an ``.npz`` checkpoint: tensors, optional Adam moments, JSON meta."""
    meta = dict(meta)
    meta["format_version"] = CHECKPOINT_VERSION
    meta["shape"] = asdict(params.shape)
    meta["adam_t"] = opt.t if opt is not None else None
    arrays = {f"param/{k}": v for k, v in params.items()}
    if opt is not None:
        arrays.update({f"adam_m/{k}": v for k, v in opt.m.items()})
        arrays.update({f"adam_v/{k}": v for k, v in opt.v.items()})
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    # fixed entry timestamps keep checkpoints byte-identical across reruns
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            info = zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0))
            with zf.open(info, "w", force_zip64=True) as fh:
                np.lib.format.write_array(fh, np.asarray(arr), allow_pickle=False)


def load_checkpoint(path: str | Path) -> tuple[NetParams, dict, AdamState | None]:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('format_version')}")
        sh = meta["shape"]
        shape = NetShape(sh["input_dim"], sh["hidden"], tuple(sh["ff"]), sh["extra_dim"])
        params = NetParams(shape, {k[6:]: data[k].copy() for k in data.files if k.startswith("param/")})
        opt = None
        if meta.get("adam_t") is not None:
            opt = AdamState(
                {k[7:]: data[k].copy() for k in data.files if k.startswith("adam_m/")},
                {k[7:]: data[k].copy() for k in data.files if k.startswith("adam_v/")},
                int(meta["adam_t"]),
            )
    return params, meta, opt
