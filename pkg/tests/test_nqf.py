from __future__ import annotations

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybridwind import nn, nqf
from hybridwind.econ import FarmSpec
from hybridwind.errors import DomainError
from hybridwind.metrics import power_curve_similarity
from hybridwind.series import split_train_test

FARM = FarmSpec()
TOY = nqf.NqfConfig(hidden=8, ff=(8,), epochs=30, seq_len=24, batch=16, lr=1e-2)


@pytest.fixture(scope="module")
def toy(synth_1y):
    train, valid = split_train_test(synth_1y, 0.7)
    return nqf.train_nqf(train, valid, TOY, FARM.capacity_mw, seed=0), valid


# ------------------------------------------------------------------ loss


def test_crps_examples():
    assert nqf.crps_loss(np.array([[0.4]]), np.array([0.6]), [0.5], 0.0) == pytest.approx(0.2, abs=1e-15)
    y = np.array([0.1, 0.5, 0.9])
    assert nqf.crps_loss(np.tile(y, (6, 1)), y, nqf.DEFAULT_LEVELS, 1.0) == 0.0


@given(c=st.floats(-0.3, 0.3), w=st.floats(0.0, 5.0))
def test_bias_term_shift(c, w):
    y = np.array([0.2, 0.4, 0.6])
    base = nqf.crps_loss(y[None, :], y, [0.5], 0.0)
    shifted = nqf.crps_loss((y + c)[None, :], y, [0.5], w) - nqf.crps_loss((y + c)[None, :], y, [0.5], 0.0)
    assert base == 0.0
    assert shifted == pytest.approx(w * c * c, abs=1e-12)


@given(
    preds=arrays(np.float64, (2, 3, 5), elements=st.floats(0, 1)),
    y=arrays(np.float64, (2, 5), elements=st.floats(0, 1)),
)
def test_crps_gradient(preds, y):
    levels = [0.1, 0.5, 0.9]
    loss, grad = nqf.crps_loss(preds, y, levels, 0.7, return_grad=True)
    assert loss >= 0
    eps = 1e-7
    for idx in [(0, 1, 2), (1, 0, 4), (1, 2, 0)]:
        # pinball is kinked where y == pred; skip those points
        if abs(preds[idx] - y[idx[0], idx[2]]) < 1e-6:
            continue
        up, down = preds.copy(), preds.copy()
        up[idx] += eps
        down[idx] -= eps
        num = (nqf.crps_loss(up, y, levels, 0.7) - nqf.crps_loss(down, y, levels, 0.7)) / (2 * eps)
        assert grad[idx] == pytest.approx(num, abs=1e-6)


def test_pinball_non_negative():
    u = np.linspace(-1, 1, 21)
    for a in (0.01, 0.5, 0.99):
        assert np.all(nqf.pinball(u, a) >= 0)


def test_monotonicity_penalty():
    ordered = np.sort(np.random.default_rng(0).uniform(size=(2, 4, 6)), axis=1)
    pen, grad = nqf.monotonicity_penalty(ordered, 10.0)
    assert pen == 0.0 and np.all(grad == 0)
    crossed = ordered[:, ::-1, :].copy()
    pen, grad = nqf.monotonicity_penalty(crossed, 10.0)
    assert pen > 0
    eps = 1e-7
    for idx in [(0, 0, 2), (1, 3, 5)]:
        up, down = crossed.copy(), crossed.copy()
        up[idx] += eps
        down[idx] -= eps
        num = (nqf.monotonicity_penalty(up, 10.0)[0] - nqf.monotonicity_penalty(down, 10.0)[0]) / (2 * eps)
        assert grad[idx] == pytest.approx(num, abs=1e-6)
        assert grad[idx] != 0


# ------------------------------------------------------------------ walk


def test_walk_degenerate_and_decay():
    np.testing.assert_array_equal(nqf.brownian_walk(5, 0.0, 0.0, 0, 0.3), 0.3)
    np.testing.assert_allclose(nqf.brownian_walk(4, 0.0, 0.5, 0, 0.9), [0.9, 0.7, 0.6, 0.55], atol=1e-15)


@given(lam=st.floats(0, 2), gam=st.floats(0, 0.99), a0=st.floats(0.001, 0.999), seed=st.integers(0, 1000))
@settings(max_examples=50)
def test_walk_stays_inside(lam, gam, a0, seed):
    a = nqf.brownian_walk(500, lam, gam, seed, a0)
    assert np.all((a > 0) & (a < 1))
    np.testing.assert_array_equal(a, nqf.brownian_walk(500, lam, gam, seed, a0))


def test_walk_rejects_bad_args():
    with pytest.raises(DomainError):
        nqf.brownian_walk(3, -1.0, 0.0, 0)
    with pytest.raises(DomainError):
        nqf.brownian_walk(3, 0.1, 1.0, 0)
    with pytest.raises(DomainError):
        nqf.brownian_walk(3, 0.1, 0.1, 0, alpha0=1.0)


# ------------------------------------------------------------------ forward + gradients


def _small_model(seed=0, hidden=3, ff=(4, 2)):
    cfg = nqf.NqfConfig(hidden=hidden, ff=ff, levels=(0.1, 0.5, 0.9))
    params = nn.init_params(cfg.shape(), seed)
    rng = np.random.default_rng(seed + 1)
    for _, w in params.items():
        w += rng.normal(0, 0.4, w.shape)
    return nqf.NqfModel(params, cfg, 100.0, 20.0)


def test_forward_rejects_bad_levels():
    model = _small_model()
    with pytest.raises(DomainError):
        nqf.nqf_forward(np.ones(3), 1.0, model.params)
    with pytest.raises(DomainError):
        nqf.NqfConfig(levels=(0.5, 0.1))


def test_bptt_gradient_check():
    """20-step unroll with the p_{t-1} feedback path."""
    model = _small_model(seed=5)
    rng = np.random.default_rng(6)
    v = rng.uniform(0, 20, (2, 20))
    y = rng.uniform(0, 1, (2, 20))
    _, grads = nqf.batch_loss(model, v, y, record=True)

    def loss(q):
        return nqf.batch_loss(nqf.NqfModel(q, model.cfg, 100.0, 20.0), v, y)[0]

    num = nn.numerical_gradient(loss, model.params)
    assert nn.max_relative_error(grads, num) < 1e-4


def test_generate_median_and_range(toy):
    res, valid = toy
    model = res.model
    v = valid.v[:200]
    median = nqf.nqf_forward(v, 0.5, model.params, 0.0, model.v_scale) * FARM.capacity_mw
    gen = nqf.generate(model, v, seed=1, smooth_lambda=0.0, drift_gamma=0.0)
    np.testing.assert_array_equal(gen, median)
    g = nqf.generate(model, valid.v, seed=2)
    assert g.min() >= 0 and g.max() <= FARM.capacity_mw


# ------------------------------------------------------------------ training


def test_training_smoke_and_determinism(synth_1y):
    train, valid = split_train_test(synth_1y, 0.7)
    cfg = nqf.NqfConfig(hidden=4, ff=(4,), epochs=2, seq_len=24, batch=32, lr=1e-2)
    a = nqf.train_nqf(train, valid, cfg, FARM.capacity_mw, seed=1)
    b = nqf.train_nqf(train, valid, cfg, FARM.capacity_mw, seed=1)
    assert a.history[2]["valid_loss"] <= a.history[0]["valid_loss"]
    assert all(np.array_equal(a.model.params[k], b.model.params[k]) for k in a.model.params)
    # epoch-0 train_loss is NaN, so compare via pandas
    pd.testing.assert_frame_equal(pd.DataFrame(a.history), pd.DataFrame(b.history))


def test_resume_matches_uninterrupted(synth_1y):
    train, valid = split_train_test(synth_1y, 0.7)
    cfg = nqf.NqfConfig(hidden=4, ff=(4,), epochs=2, seq_len=24, batch=32, lr=1e-2)
    full = nqf.train_nqf(train, valid, cfg, FARM.capacity_mw, seed=4)
    first = nqf.train_nqf(train, valid, nqf.NqfConfig(**{**cfg.__dict__, "epochs": 1}), FARM.capacity_mw, seed=4)
    first.model.cfg = cfg
    resumed = nqf.train_nqf(train, valid, cfg, FARM.capacity_mw, seed=4, resume=first)
    assert resumed.history[-1]["valid_loss"] == full.history[-1]["valid_loss"]
    assert all(np.array_equal(full.model.params[k], resumed.model.params[k]) for k in full.model.params)


def test_trained_quantiles_monotone(toy):
    res, valid = toy
    model = res.model
    rng = np.random.default_rng(0)
    levels = np.array(model.cfg.levels)
    low = nqf.nqf_forward(valid.v[:500], 0.01, model.params, 0.2, model.v_scale)
    high = nqf.nqf_forward(valid.v[:500], 0.99, model.params, 0.2, model.v_scale)
    assert np.all(high >= low - 1e-6)
    # 1000 random (window, step) probes across all levels
    starts = rng.integers(0, len(valid) - 48, 50)
    worst = -np.inf
    for s in starts:
        v = valid.v[s : s + 48]
        p0 = valid.g[s] / FARM.capacity_mw
        paths = np.array([nqf.nqf_forward(v, a, model.params, p0, model.v_scale) for a in levels])
        steps = rng.integers(0, 48, 20)
        worst = max(worst, float((paths[:-1, steps] - paths[1:, steps]).max()))
    assert worst <= 1e-6


def test_calm_wind_gives_low_power(toy):
    model = toy[0].model
    median = nqf.nqf_forward(np.zeros(48), 0.5, model.params, 0.0, model.v_scale)
    assert median.max() < 0.05


def test_two_seeds_distinct_but_similar(toy):
    res, valid = toy
    model = res.model
    a = nqf.generate(model, valid.v, seed=1)
    b = nqf.generate(model, valid.v, seed=2)
    assert not np.array_equal(a, b)
    sim = power_curve_similarity((valid.v, a / FARM.capacity_mw), (valid.v, b / FARM.capacity_mw))
    assert sim > 0.9


def test_evaluate_and_meta_round_trip(toy, tmp_path):
    res, valid = toy
    m = nqf.evaluate(res.model, valid, seed=0)
    assert set(m) == {"rmse", "xcorr", "similarity"}
    assert 0 <= m["similarity"] <= 1
    path = tmp_path / "nqf.ckpt"
    nn.save_checkpoint(path, res.model.params, res.model.meta(), res.opt)
    params, meta, _ = nn.load_checkpoint(path)
    again = nqf.NqfModel.from_meta(params, meta)
    assert again.cfg == res.model.cfg
    assert nqf.evaluate(again, valid, seed=0) == m
