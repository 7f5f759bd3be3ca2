"""Command-line entry point.

Every command reads an optional flat config file (``--config``), applies
flag overrides and writes its artifacts under ``--out-dir``:

=================  ==================================================
command            artifacts
=================  ==================================================
synth              synth.csv
train-gen          nqf.ckpt, nqf_history.csv
train-dispatch     cove.ckpt, cove_history.csv
eval               eval_gen.csv + gen_series.csv, or
                   eval_<model>.csv + dispatch_<model>.csv
search-storage     storage_search.csv
search-hp          search_hp_log.csv, search_hp_best.json, cove_best.ckpt
plotdata           plot_*.csv
=================  ==================================================

Exit codes: 0 success, 1 compute failure, 2 usage or config error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd

from . import cove_nn, metrics, nn, nqf, tuner
from .config import RunConfig
from .dispatch import DispatchTrace, simulate_baseload
from .econ import COVE_DISPLAY_SCALE, annual_report, average_annual
from .errors import (
    AlignmentError,
    ConfigError,
    ContractError,
    DataQualityError,
    DependencyError,
    HybridWindError,
    SchemaError,
)
from .series import SeriesFrame, fill_cyclic, ingest_csv, split_train_test, synth_dataset, write_csv

log = logging.getLogger("hybridwind")

USAGE_ERRORS = (ConfigError, DependencyError, SchemaError, AlignmentError, DataQualityError, FileNotFoundError)


# ---------------------------------------------------------------- helpers


def _write_rows(path: Path, rows: Sequence[dict]) -> None:
    """CSV with round-trippable floats so reruns are byte-identical."""
    if not rows:
        raise ContractError(f"nothing to write to {path}")
    fields = list(rows[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def _require(path: Path) -> Path:
    if not path.exists():
        raise DependencyError(f"missing upstream artifact: {path}")
    return path


def _load_frame(cfg: RunConfig) -> SeriesFrame:
    path = cfg["data.path"]
    if path is None:
        raise ConfigError("data.path is not set (use --data or the config file)")
    if not Path(path).exists():
        raise ConfigError(f"data file not found: {path}")
    frame = ingest_csv(path, cfg.schema())
    if cfg["data.price_path"] is not None:
        donor = ingest_csv(cfg["data.price_path"])
        frame = fill_cyclic(frame, donor)
    return frame


def _splits(cfg: RunConfig) -> tuple[SeriesFrame, SeriesFrame]:
    return split_train_test(_load_frame(cfg), cfg["data.train_fraction"])


def _pick(cfg: RunConfig, which: str) -> SeriesFrame:
    if which == "all":
        return _load_frame(cfg)
    train, valid = _splits(cfg)
    return train if which == "train" else valid


def _save(path: Path, model, result, seed: int) -> None:
    meta = model.meta()
    meta.update(epoch=result.epoch, seed=seed, history=result.history)
    nn.save_checkpoint(path, model.params, meta, result.opt)


def _history_csv(path: Path, history: list[dict]) -> None:
    _write_rows(path, history)


def _load_model(path: Path, kind: str):
    params, meta, opt = nn.load_checkpoint(_require(path))
    try:
        model = (nqf.NqfModel if kind == "nqf" else cove_nn.CoveModel).from_meta(params, meta)
    except ContractError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return model, meta, opt


# ---------------------------------------------------------------- commands


def cmd_synth(args, cfg: RunConfig) -> None:
    years = args.years if args.years is not None else cfg["synth.years"]
    if years < 1:
        raise ConfigError(f"years must be at least 1, got {years}")
    frame = synth_dataset(years, cfg["data.seed"], cfg.farm())
    out = Path(args.out) if args.out else args.out_dir / "synth.csv"
    write_csv(frame, out)
    print(f"wrote {len(frame)} rows to {out}")


def cmd_train_gen(args, cfg: RunConfig) -> None:
    train, valid = _splits(cfg)
    ncfg = cfg.nqf_config()
    ckpt = args.out_dir / "nqf.ckpt"
    resume = None
    seed = ncfg.seed
    if args.resume:
        model, meta, opt = _load_model(Path(args.resume), "nqf")
        model.cfg = replace(model.cfg, epochs=ncfg.epochs)
        seed = meta["seed"]
        resume = nqf.TrainResult(model, meta["history"], opt, meta["epoch"])
    res = nqf.train_nqf(train, valid, resume.model.cfg if resume else ncfg, cfg["farm.capacity_mw"], seed=seed, resume=resume)
    _save(ckpt, res.model, res, seed)
    _history_csv(args.out_dir / "nqf_history.csv", res.history)
    print(f"epoch {res.epoch}: valid loss {res.history[-1]['valid_loss']:.6f}; checkpoint {ckpt}")


def cmd_train_dispatch(args, cfg: RunConfig) -> None:
    train, valid = _splits(cfg)
    ccfg = cfg.cove_config()
    ckpt = args.out_dir / "cove.ckpt"
    resume = None
    seed = ccfg.seed
    if args.resume:
        model, meta, opt = _load_model(Path(args.resume), "cove")
        model.cfg = replace(model.cfg, epochs=ccfg.epochs)
        seed = meta["seed"]
        resume = cove_nn.TrainResult(model, meta["history"], opt, meta["epoch"])
    res = cove_nn.train_cove(train, valid, resume.model.cfg if resume else ccfg, seed=seed, resume=resume)
    _save(ckpt, res.model, res, seed)
    _history_csv(args.out_dir / "cove_history.csv", res.history)
    last = res.history[-1]["valid_cove"] * COVE_DISPLAY_SCALE
    print(f"epoch {res.epoch}: valid COVE {last:.4f} $/kWh-yr; checkpoint {ckpt}")


def _report_rows(name: str, trace: DispatchTrace, frame: SeriesFrame, storage, farm) -> list[dict]:
    reports = annual_report(trace, frame.g, storage, frame.p, farm)
    rows = []
    for rep in reports:
        row = {"model": name, **rep.as_row()}
        row["cove_x1000"] = row["cove"] * COVE_DISPLAY_SCALE
        rows.append(row)
    for stat in ("mean", "std"):
        row = {"model": name, "year": stat, "hours": "", "partial": ""}
        for attr, col in (
            ("aep", "aep_mwh"),
            ("curtailment", "curtailment_mwh"),
            ("utilization", "storage_utilization"),
            ("value_factor", "value_factor"),
            ("cove", "cove"),
        ):
            mean, std = average_annual(reports, attr)
            row[col] = mean if stat == "mean" else std
        row["cove_x1000"] = row["cove"] * COVE_DISPLAY_SCALE
        rows.append(row)
    return rows


def _trace_frame(trace: DispatchTrace, frame: SeriesFrame, storage) -> pd.DataFrame:
    df = trace.to_frame(frame.timestamps, frame.g)
    df["utilization"] = df["s"] / storage.capacity_mwh
    return df


def cmd_eval(args, cfg: RunConfig) -> None:
    frame = _pick(cfg, args.split)
    out = args.out_dir
    if args.model == "gen":
        model, _, _ = _load_model(Path(args.checkpoint or out / "nqf.ckpt"), "nqf")
        if not math.isclose(model.capacity_mw, cfg["farm.capacity_mw"]):
            raise ConfigError(
                f"checkpoint capacity {model.capacity_mw} MW differs from farm.capacity_mw {cfg['farm.capacity_mw']}"
            )
        frame.require("v", "g")
        m = nqf.evaluate(model, frame, seed=args.gen_seed, bins=cfg["metrics.bins"])
        row = {"model": args.name or "nqf", "window": model.cfg.seq_len, **m}
        _write_rows(out / "eval_gen.csv", [row])
        pred = nqf.generate(model, frame.v, args.gen_seed, p0=frame.g[0] / model.capacity_mw)
        pd.DataFrame(
            {"time": np.datetime_as_string(frame.timestamps, unit="s"), "v": frame.v, "g": frame.g, "p_pred": pred}
        ).to_csv(out / "gen_series.csv", index=False, float_format="%.17g")
        print(f"rmse {m['rmse']:.4f}  xcorr {m['xcorr']:.4f}  similarity {m['similarity']:.4f}")
        return

    frame.require("g", "p")
    if args.model == "baseload":
        farm = cfg.farm()
        storage = cfg.cove_config().storage
        target = cfg["baseload.target"]
        if target is None:
            target = float(np.mean(_splits(cfg)[0].g))
        trace = simulate_baseload(frame, farm, storage, target)
        name = args.name or "baseload"
    else:
        model, _, _ = _load_model(Path(args.checkpoint or out / "cove.ckpt"), "cove")
        frame.require("u")
        farm, storage = model.cfg.farm, model.cfg.storage
        trace = cove_nn.dispatch_trace(model, frame)
        name = args.name or "cove"
    rows = _report_rows(name, trace, frame, storage, farm)
    _write_rows(out / f"eval_{name}.csv", rows)
    _trace_frame(trace, frame, storage).to_csv(out / f"dispatch_{name}.csv", index=False, float_format="%.17g")
    mean = next(r for r in rows if r["year"] == "mean")
    std = next(r for r in rows if r["year"] == "std")
    print(f"{name}: COVE {mean['cove_x1000']:.4f} +/- {std['cove_x1000']:.4f} $/kWh-yr, VF {mean['value_factor']:.4f}")


def cmd_search_storage(args, cfg: RunConfig) -> None:
    frame = _pick(cfg, args.split)
    space = tuner.StorageSearchSpace()
    if args.technologies:
        space = tuner.StorageSearchSpace({t: tuner.DEFAULT_SPACE[t] for t in args.technologies if t in tuner.DEFAULT_SPACE})
        if len(space) == 0:
            raise ConfigError(f"empty storage search space for {args.technologies}")
    target = cfg["baseload.target"]
    if target is None:
        target = float(np.mean(_splits(cfg)[0].g))
    results = tuner.storage_grid_search(frame, cfg.farm(), cfg.catalog(), space, target)
    _write_rows(args.out_dir / "storage_search.csv", [r.as_row() for r in results])
    best = results[0]
    print(f"best: {best.technology} {best.rating_mw:g} MW / {best.duration_h:g} h, "
          f"COVE {best.avg_cove * COVE_DISPLAY_SCALE:.4f} $/kWh-yr ({len(results)} candidates)")


def cmd_search_hp(args, cfg: RunConfig) -> None:
    train, valid = _splits(cfg)
    ccfg = cfg.cove_config()
    workers = 1 if args.serial else cfg["search.workers"]
    trials = args.trials if args.trials is not None else cfg["search.trials"]
    result = tuner.cove_hyper_search(
        train,
        valid,
        ccfg,
        trials=trials,
        probe_epochs=cfg["search.probe_epochs"],
        seed=ccfg.seed,
        log_path=args.out_dir / "search_hp_log.csv",
        workers=workers,
    )
    if result.best is None:
        raise HybridWindError("every trial failed")
    best = result.best
    summary = {"trial": best.trial, "seed": best.seed, "best_cove": best.best_cove, "hp": best.hp}
    (args.out_dir / "search_hp_best.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    best_model = result.best_model
    if best_model is None:
        # best trial came from an earlier run of this log; training is deterministic
        best_model = tuner.retrain_trial(train, valid, ccfg, best)
    _save(args.out_dir / "cove_best.ckpt", best_model.model, best_model, best.seed)
    print(f"best trial {best.trial}: COVE {best.best_cove * COVE_DISPLAY_SCALE:.4f} $/kWh-yr, hp {best.hp}")


def _density_rows(series: pd.DataFrame, capacity: float, bins: int) -> list[dict]:
    v = series["v"].to_numpy()
    obs = series["g"].to_numpy() / capacity
    pred = series["p_pred"].to_numpy() / capacity
    v_edges, p_edges = metrics.shared_edges((v, obs), (v, pred), bins)
    f_h = metrics.JointDensity.estimate(v, obs, v_edges, p_edges).mass
    f_p = metrics.JointDensity.estimate(v, pred, v_edges, p_edges).mass
    vc = 0.5 * (v_edges[:-1] + v_edges[1:])
    pc = 0.5 * (p_edges[:-1] + p_edges[1:])
    floor = 1.0 / (10 * v.size)  # below one sample's mass
    rows = []
    for i, vi in enumerate(vc):
        for j, pj in enumerate(pc):
            lh, lp = math.log10(f_h[i, j] + floor), math.log10(f_p[i, j] + floor)
            rows.append({
                "v_center": float(vi), "p_center": float(pj),
                "mass_hist": float(f_h[i, j]), "mass_pred": float(f_p[i, j]),
                "mass_diff": float(f_h[i, j] - f_p[i, j]),
                "log_hist": lh, "log_pred": lp, "log_diff": lh - lp,
            })
    return rows


def _bar_row(model: str, eval_csv: Path) -> dict:
    df = pd.read_csv(eval_csv, dtype={"year": str})
    years = df[~df["year"].isin(["mean", "std"])]
    full = years[years["partial"].astype(str) == "False"]
    pool = full if len(full) else years
    vals = pool["cove"].to_numpy(dtype=float) * COVE_DISPLAY_SCALE
    return {"model": model, "mean_cove_x1000": float(vals.mean()), "std_cove_x1000": float(vals.std()), "years": len(vals)}


def cmd_plotdata(args, cfg: RunConfig) -> None:
    out = args.out_dir
    want = set(args.only or ["gen", "dispatch"])
    if "gen" in want:
        series = pd.read_csv(_require(out / "gen_series.csv"))
        series[["time", "v", "g", "p_pred"]].rename(columns={"g": "g_obs", "p_pred": "g_pred"}).to_csv(
            out / "plot_timeseries.csv", index=False, float_format="%.17g"
        )
        _write_rows(out / "plot_density.csv", _density_rows(series, cfg["farm.capacity_mw"], cfg["metrics.bins"]))
    if "dispatch" in want:
        traces = {m: pd.read_csv(_require(out / f"dispatch_{m}.csv")) for m in ("cove", "baseload")}
        evals = {m: _require(out / f"eval_{m}.csv") for m in ("cove", "baseload")}
        c, b = traces["cove"], traces["baseload"]
        if len(c) != len(b):
            raise ConfigError("dispatch traces cover different windows")
        pd.DataFrame({"time": c["time"], "g": c["g"], "r_prime_cove": c["r_prime"], "r_prime_baseload": b["r_prime"]}).to_csv(
            out / "plot_dispatch.csv", index=False, float_format="%.17g"
        )
        pd.DataFrame({"time": c["time"], "utilization_cove": c["utilization"], "utilization_baseload": b["utilization"]}).to_csv(
            out / "plot_storage.csv", index=False, float_format="%.17g"
        )
        _write_rows(out / "plot_cove_bars.csv", [_bar_row(m, p) for m, p in evals.items()])
    print(f"plot data written to {out}")


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=argparse.SUPPRESS, help="flat key = value config file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override every seed in the config")
    common.add_argument("--serial", action="store_true", default=argparse.SUPPRESS, help="no parallel trials")
    common.add_argument("--out-dir", type=Path, default=argparse.SUPPRESS, help="artifact directory (default .)")
    common.add_argument("--data", default=argparse.SUPPRESS, help="override data.path")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", default=argparse.SUPPRESS,
                        help="override one config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="hybridwind", description=__doc__.split("\n")[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="write a synthetic hourly dataset")
    p.add_argument("--years", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_synth)

    for name, func in (("train-gen", cmd_train_gen), ("train-dispatch", cmd_train_dispatch)):
        p = sub.add_parser(name, parents=[common], help=f"train the {'generation' if 'gen' in name else 'dispatch'} model")
        p.add_argument("--epochs", type=int)
        p.add_argument("--resume", help="checkpoint to continue from")
        p.set_defaults(func=func)

    p = sub.add_parser("eval", parents=[common], help="evaluate a model or the baseload baseline")
    p.add_argument("--model", choices=("gen", "dispatch", "baseload"), required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--name", help="label used in report and file names")
    p.add_argument("--split", choices=("train", "valid", "all"), default="valid")
    p.add_argument("--gen-seed", type=int, default=0, help="seed of the quantile walk")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("search-storage", parents=[common], help="rank storage options under baseload")
    p.add_argument("--split", choices=("train", "valid", "all"), default="all")
    p.add_argument("--technologies", nargs="*")
    p.set_defaults(func=cmd_search_storage)

    p = sub.add_parser("search-hp", parents=[common], help="random search over dispatch loss weights")
    p.add_argument("--trials", type=int)
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_search_hp)

    p = sub.add_parser("plotdata", parents=[common], help="emit plot-ready CSVs from eval artifacts")
    p.add_argument("--only", nargs="*", choices=("gen", "dispatch"))
    p.set_defaults(func=cmd_plotdata)
    return parser


def _overrides(args) -> dict[str, Any]:
    ov: dict[str, Any] = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        try:
            ov[k.strip()] = json.loads(v)
        except json.JSONDecodeError:
            ov[k.strip()] = v
    if getattr(args, "data", None) is not None:
        ov["data.path"] = args.data
    if getattr(args, "seed", None) is not None:
        for k in ("data.seed", "nqf.seed", "cove.seed"):
            ov[k] = args.seed
    epochs = getattr(args, "epochs", None)
    if epochs is not None:
        ov["cove.epochs" if args.command in ("train-dispatch", "search-hp") else "nqf.epochs"] = epochs
    return ov


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    for name, default in (("config", None), ("seed", None), ("serial", False), ("out_dir", Path(".")),
                          ("verbose", False)):
        if not hasattr(args, name):
            setattr(args, name, default)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = RunConfig.load(args.config, _overrides(args))
        args.out_dir.mkdir(parents=True, exist_ok=True)
        args.func(args, cfg)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (HybridWindError, ArithmeticError, ValueError) as exc:
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
