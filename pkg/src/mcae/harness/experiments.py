"""Experiment drivers behind the CLI: train, eval, tik, oracle, sweep, timing."""

from __future__ import annotations

import copy
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from mcae.harness.data import Dataset, Problem, build_problem, generate_dataset
from mcae.harness.io import read_json, write_csv, write_json
from mcae.harness.metrics import metric_abs_pointwise, relative_errors
from mcae.harness.oracle import run_suite
from mcae.random_fields import STREAM_TRAIN, make_rng
from mcae.tikhonov import TikhonovError, TikOptions, tikhonov_solve
from mcae.training import (ShallowNet, TrainData, TrainSpec, build_nets, load_checkpoint, net_forward,
                           save_checkpoint, train_sequential)

POP = ("nPOP", "mcPOP")
METRIC_KEYS = ("inverse", "forward", "forward_full", "forward_solver", "forward_full_solver", "tikhonov")
CKPT_NAME = "model.ckpt"


def code_version() -> str:
    try:
        return metadata.version("mcae")
    except metadata.PackageNotFoundError:
        return "unknown"


def make_specs(cfg: dict) -> tuple[TrainSpec, TrainSpec]:
    net, tr = cfg["network"], cfg["training"]
    common = dict(approach=cfg["approach"], lam=cfg["lambda"], epsilon=cfg["epsilon"], lr=tr["lr"],
                  seed=cfg["seeds"]["init"], hidden=net["hidden"], init_std=net["init_std"],
                  plateau=tr["plateau"], eval_every=tr["eval_every"])
    enc_ep = tr["epochs"] if "encoder" in tr["phases"] else 0
    dec_ep = tr["decoder_epochs"] if "decoder" in tr["phases"] else 0
    return (TrainSpec(phase="encoder", epochs=enc_ep, **common),
            TrainSpec(phase="decoder", epochs=dec_ep, **common))


def inverse_net(approach: str, enc: ShallowNet, dec: ShallowNet) -> ShallowNet:
    return dec if approach in POP else enc


def forward_net(approach: str, enc: ShallowNet, dec: ShallowNet) -> ShallowNet:
    return enc if approach in POP else dec


def forward_predictions(approach: str, fm, net: ShallowNet, U: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    """Predicted observations and, for the ``-Full`` decoders, predicted states."""
    out = net_forward(net, U)
    if approach.endswith("Full"):
        return fm.observe(out), out
    return out, None


def forward_inputs(approach: str, enc: ShallowNet, U: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """What the forward network sees inside the autoencoder: ``U`` for POP, ``enc(Y)`` otherwise."""
    return U if approach in POP else net_forward(enc, Y)


def solver_referenced(approach: str, fm, net: ShallowNet, Z: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
    """Per-sample forward errors of ``net`` against the solver run on the same inputs ``Z``."""
    states = fm.apply(Z)
    y, s = forward_predictions(approach, fm, net, Z)
    obs = relative_errors(y, fm.observe(states))
    return obs, (relative_errors(s, states) if s is not None else None)


def _monitors(cfg, ds: Dataset, pb: Problem, enc: ShallowNet):
    """Validation metrics used for best-epoch selection (never the test set).

    The decoder of the observation-input approaches is monitored on its own
    inputs ``enc(Y_val)`` against the solver; ``enc`` is frozen by then.
    """
    a = cfg["approach"]
    Yv, Uv = ds.Y_val, ds.U_val
    cache = {}

    def inv(net):
        return float(np.mean(relative_errors(net_forward(net, Yv), Uv)))

    def fwd(net):
        if a in POP:
            y, _ = forward_predictions(a, pb.fm, net, Uv)
            return float(np.mean(relative_errors(y, ds.Y_val_clean)))
        key = enc.digest()
        if key not in cache:
            Z = net_forward(enc, Yv)
            S = pb.fm.apply(Z)
            cache.clear()
            cache[key] = (Z, S)
        Z, S = cache[key]
        y, s = forward_predictions(a, pb.fm, net, Z)
        err = relative_errors(s, S) if s is not None else relative_errors(y, pb.fm.observe(S))
        return float(np.mean(err))

    return (fwd, inv) if a in POP else (inv, fwd)


def run_train(cfg: dict, ds: Dataset, pb: Problem | None = None, out: Path | None = None, log=None) -> dict:
    pb = pb or build_problem(cfg)
    spec_e, spec_d = make_specs(cfg)
    data = TrainData(ds.U, ds.Y, ds.u0)
    nets = build_nets(spec_e, spec_d, ds.U.shape[0], ds.Y.shape[0], pb.fm.p)
    mon_e, mon_d = _monitors(cfg, ds, pb, nets[0])
    rng = make_rng(cfg["seeds"]["randomize"], STREAM_TRAIN + 100)
    t0 = time.perf_counter()
    enc, dec, hist = train_sequential(spec_e, spec_d, data, pb.fm, rng=rng,
                                      monitor_enc=mon_e, monitor_dec=mon_d, log=log, nets=nets)
    train_s = time.perf_counter() - t0
    result = {
        "enc": enc, "dec": dec,
        "history": {k: h.to_dict() for k, h in hist.items()},
        "train_seconds": train_s,
    }
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        save_checkpoint(out / CKPT_NAME, {"encoder": enc, "decoder": dec},
                        adam={k: h.adam for k, h in hist.items() if h.adam is not None},
                        rng_state=rng.bit_generator.state,
                        meta={"config": cfg, "train_seconds": train_s, "code_version": code_version()})
        write_json(out / "history.json", result["history"])
    return result


def load_model(out: Path) -> tuple[ShallowNet, ShallowNet, dict]:
    path = Path(out) / CKPT_NAME
    if not path.exists():
        raise FileNotFoundError(f"no checkpoint at {path}; run 'train' first")
    ck = load_checkpoint(path)
    return ck["nets"]["encoder"], ck["nets"]["decoder"], ck["meta"]


def _timed(fn, repeats: int = 3):
    best = np.inf
    for _ in range(repeats):
        t = time.perf_counter()
        res = fn()
        best = min(best, time.perf_counter() - t)
    return res, best


def evaluate(cfg: dict, ds: Dataset, enc: ShallowNet, dec: ShallowNet, pb: Problem | None = None,
             train_seconds: float | None = None) -> dict:
    """Per-sample inverse and forward errors on the test set plus timings."""
    pb = pb or build_problem(cfg)
    a = cfg["approach"]
    inv = inverse_net(a, enc, dec)
    fwd = forward_net(a, enc, dec)
    nt = ds.U_test.shape[1]
    U_pred, t_inv = _timed(lambda: net_forward(inv, ds.Y_test))
    (Y_pred, S_pred), t_fwd = _timed(lambda: forward_predictions(a, pb.fm, fwd, ds.U_test))
    inv_err = relative_errors(U_pred, ds.U_test)
    fwd_err = relative_errors(Y_pred, ds.Y_test_clean)
    report = {
        "approach": a,
        "problem": cfg["problem"],
        "n_test": nt,
        "inverse": {"per_sample": inv_err, "mean": float(np.mean(inv_err))},
        "forward": {"per_sample": fwd_err, "mean": float(np.mean(fwd_err))},
        "abs_pointwise": {"inverse": metric_abs_pointwise(U_pred, ds.U_test)},
        "timings": {"inverse_per_sample_s": t_inv / nt, "forward_per_sample_s": t_fwd / nt},
        "config": cfg,
        "code_version": code_version(),
    }
    if S_pred is not None:
        full_err = relative_errors(S_pred, ds.S_test)
        report["forward_full"] = {"per_sample": full_err, "mean": float(np.mean(full_err))}
        report["abs_pointwise"]["forward_full"] = metric_abs_pointwise(S_pred, ds.S_test)
    Z = forward_inputs(a, enc, ds.U_test, ds.Y_test)
    obs_err, full_err = solver_referenced(a, pb.fm, fwd, Z)
    report["forward_solver"] = {"per_sample": obs_err, "mean": float(np.mean(obs_err))}
    if full_err is not None:
        report["forward_full_solver"] = {"per_sample": full_err, "mean": float(np.mean(full_err))}
    if train_seconds is not None:
        report["timings"]["train_s"] = train_seconds
    return report


def check_report(report: dict, rtol: float = 1e-12) -> None:
    """Stored means must equal the arithmetic means of the stored per-sample values."""
    for key in METRIC_KEYS:
        if key in report:
            vals = np.asarray(report[key]["per_sample"], dtype=np.float64)
            if not np.isclose(vals.mean(), report[key]["mean"], rtol=rtol, atol=0):
                raise ValueError(f"report {key}: mean {report[key]['mean']} != mean of per-sample values")
    t = report.get("timings", {})
    if "train_s" in t and t.get("inverse_per_sample_s", 0) > t["train_s"]:
        raise ValueError("report timings: per-inference time exceeds training time")


def save_report(report: dict, out: Path, stem: str = "report") -> None:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / f"{stem}.json", report)
    cols = {"sample": np.arange(len(report[next(k for k in ("inverse", "tikhonov") if k in report)]["per_sample"]))}
    for key in METRIC_KEYS:
        if key in report:
            cols[f"{key}_rel"] = report[key]["per_sample"]
    write_csv(out / f"{stem}.csv", cols)
    abs_ = report.get("abs_pointwise", {})
    if abs_:
        write_csv(out / f"{stem}_abs.csv", {"index": np.arange(len(next(iter(abs_.values())))), **abs_})


def load_report(path) -> dict:
    rep = read_json(path)
    check_report(rep)
    return rep


def run_tik(cfg: dict, ds: Dataset, pb: Problem | None = None, n: int | None = None) -> dict:
    """Per-sample Tikhonov baseline (L-BFGS from ``u0``) on the first ``n`` test samples."""
    pb = pb or build_problem(cfg)
    t = cfg["tik"]
    n = n or t["n_samples"] or ds.U_test.shape[1]
    opts = TikOptions(max_iters=t["max_iters"], grad_tol=t["grad_tol"], memory=t["memory"])
    U = np.empty((pb.fm.n, n))
    iters, status, secs = [], [], []
    for i in range(n):
        t0 = time.perf_counter()
        try:
            res = tikhonov_solve(pb.fm, ds.Y_test[:, i], ds.u0, cfg["lambda"], opts)
            U[:, i], st, it = res.u, res.status, res.iters
        except TikhonovError as exc:
            U[:, i], st, it = exc.u, "failed", exc.iters
        secs.append(time.perf_counter() - t0)
        iters.append(it)
        status.append(st)
    err = relative_errors(U, ds.U_test[:, :n])
    return {
        "problem": cfg["problem"],
        "lambda": cfg["lambda"],
        "n_test": n,
        "tikhonov": {"per_sample": err, "mean": float(np.mean(err))},
        "iterations": iters,
        "status": status,
        "abs_pointwise": {"tikhonov": metric_abs_pointwise(U, ds.U_test[:, :n])},
        "timings": {"per_sample_s": float(np.mean(secs)), "total_s": float(np.sum(secs))},
        "config": cfg,
        "code_version": code_version(),
    }


def run_oracle(cfg: dict, seed: int | None = None) -> dict:
    if cfg["problem"] != "linear":
        raise ValueError("oracle runs need problem = linear")
    seed = cfg["seeds"]["init"] if seed is None else seed
    t0 = time.perf_counter()
    rows = run_suite(seed, cfg["linear"]["problems"])
    return {"rows": rows, "passed": all(r["pass"] for r in rows), "seconds": time.perf_counter() - t0,
            "code_version": code_version()}


def run_sweep(cfg: dict, kind: str = "epsilon", pb: Problem | None = None, log=None) -> dict:
    """Encoder-only trainings over an epsilon grid, random single samples, or a lambda grid.

    The lambda grid runs the Tikhonov baseline only.
    """
    pb = pb or build_problem(cfg)
    sw = cfg["sweep"]
    points = []
    base = copy.deepcopy(cfg)
    base["training"]["phases"] = ["encoder"]
    if kind == "epsilon":
        ds = generate_dataset(base, pb)
        for eps in sw["epsilons"]:
            c = copy.deepcopy(base)
            c["epsilon"] = eps
            points.append({"epsilon": eps, **_inverse_point(c, ds, pb, log)})
    elif kind == "samples":
        idx = make_rng(cfg["seeds"]["train"], STREAM_TRAIN + 200).choice(100, size=sw["samples"], replace=False)
        for i in sorted(int(j) for j in idx):
            c = copy.deepcopy(base)
            c["sample_index"] = i
            ds = generate_dataset(c, pb)
            points.append({"sample_index": i, **_inverse_point(c, ds, pb, log)})
    elif kind == "lambda":
        ds = generate_dataset(base, pb)
        for lam in sw["lambdas"]:
            c = copy.deepcopy(base)
            c["lambda"] = lam
            rep = run_tik(c, ds, pb)
            points.append({"lambda": lam, "mean": rep["tikhonov"]["mean"]})
    else:
        raise ValueError(f"unknown sweep {kind!r}")
    means = np.array([p["mean"] for p in points])
    return {"kind": kind, "points": points, "std": float(np.std(means)), "config": cfg,
            "code_version": code_version()}


def _inverse_point(cfg, ds, pb, log):
    res = run_train(cfg, ds, pb, log=log)
    inv = inverse_net(cfg["approach"], res["enc"], res["dec"])
    err = relative_errors(net_forward(inv, ds.Y_test), ds.U_test)
    return {"mean": float(np.mean(err)), "train_seconds": res["train_seconds"],
            "best_epoch": res["history"]["encoder"]["best_epoch"]}


def run_timing(cfg: dict, ds: Dataset, pb: Problem | None = None, enc=None, dec=None) -> dict:
    """Wall-clock of the solver (forward and Tikhonov) vs the networks, per sample."""
    pb = pb or build_problem(cfg)
    reps = cfg["timing"]["repeats"]
    U = ds.U_test
    nt = U.shape[1]
    _, t_solve = _timed(lambda: pb.fm.apply(U), reps)
    out = {"forward_solver_per_sample_s": t_solve / nt}
    tik = run_tik(cfg, ds, pb, n=min(nt, 5))
    out["tikhonov_per_sample_s"] = tik["timings"]["per_sample_s"]
    if enc is not None:
        a = cfg["approach"]
        _, t_inv = _timed(lambda: net_forward(inverse_net(a, enc, dec), ds.Y_test), reps)
        _, t_fwd = _timed(lambda: net_forward(forward_net(a, enc, dec), U), reps)
        out["inverse_net_per_sample_s"] = t_inv / nt
        out["forward_net_per_sample_s"] = t_fwd / nt
        out["speedup_inverse"] = out["tikhonov_per_sample_s"] / out["inverse_net_per_sample_s"]
        out["speedup_forward"] = out["forward_solver_per_sample_s"] / out["forward_net_per_sample_s"]
    out["code_version"] = code_version()
    return out
