"""Command line entry point.

Exit codes: 0 success / PASS, 2 acceptance failure, 1 error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from mcae.harness import experiments as ex
from mcae.harness.config import ConfigError, load_config
from mcae.harness.data import build_problem, generate_dataset, load_dataset, save_dataset
from mcae.harness.io import FormatError, write_json

OUT_ENV = "MCAE_OUT"
log = logging.getLogger("mcae")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mcae", description="Model-constrained autoencoder experiments.")
    p.add_argument("--config", type=Path, help="experiment config (JSON)")
    p.add_argument("--seed", type=int, help="override every seed in the config")
    p.add_argument("--out", type=Path, help=f"output directory (else ${OUT_ENV}, else the config's)")
    p.add_argument("--quiet", action="store_true", help="only print the final summary")
    sub = p.add_subparsers(dest="cmd", required=True)
    sub.add_parser("generate", help="write the train/test dataset")
    sub.add_parser("train", help="sequential two-phase training, with checkpoint")
    sub.add_parser("eval", help="test-set metrics of a trained model")
    t = sub.add_parser("tik", help="per-sample Tikhonov baseline")
    t.add_argument("--n", type=int, help="number of test samples")
    sub.add_parser("oracle", help="linear-analysis property suite")
    s = sub.add_parser("sweep", help="epsilon grid, random single samples or lambda grid")
    s.add_argument("--kind", choices=("epsilon", "samples", "lambda"), default="epsilon")
    sub.add_parser("timing", help="solver vs surrogate wall-clock")
    sub.add_parser("schema", help="print the config JSON schema")
    return p


def _load(args) -> dict:
    if args.config is None:
        raise ConfigError("--config is required")
    over = {}
    if args.seed is not None:
        over["seeds"] = {k: args.seed for k in ("init", "train", "test", "obs", "randomize")}
    if args.out is not None:
        over["output"] = str(args.out)
    elif os.environ.get(OUT_ENV):
        over["output"] = os.environ[OUT_ENV]
    return load_config(args.config, over)


def _dataset(cfg, out: Path, pb):
    d = out / "data"
    if (d / "manifest.json").exists():
        return load_dataset(d)
    log.info("no dataset in %s; generating", d)
    ds = generate_dataset(cfg, pb)
    save_dataset(ds, d)
    return ds


def _summary(rep: dict) -> str:
    parts = [f"{k} E_rel = {rep[k]['mean']:.6g}" for k in ex.METRIC_KEYS
             if k in rep]
    return "; ".join(parts)


def run(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    if args.cmd == "schema":
        import json
        from mcae.harness.config import SCHEMA
        print(json.dumps(SCHEMA, indent=2))
        return 0
    cfg = _load(args)
    out = Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    if args.cmd == "oracle":
        rep = ex.run_oracle(cfg)
        for r in rep["rows"]:
            log.info("%-32s problem %2d  value %.3e  tol %.3e  %s", r["check"], r["problem"], r["value"],
                     r["tol"], "PASS" if r["pass"] else "FAIL")
        write_json(out / "oracle.json", rep)
        n_fail = sum(not r["pass"] for r in rep["rows"])
        print(f"oracle: {len(rep['rows']) - n_fail}/{len(rep['rows'])} PASS")
        return 0 if rep["passed"] else 2
    pb = build_problem(cfg)
    if args.cmd == "generate":
        d = save_dataset(generate_dataset(cfg, pb), out / "data")
        print(f"dataset written to {d}")
        return 0
    if args.cmd == "sweep":
        rep = ex.run_sweep(cfg, args.kind, pb, log=log.info)
        write_json(out / f"sweep_{args.kind}.json", rep)
        for p in rep["points"]:
            print(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in p.items()))
        return 0
    ds = _dataset(cfg, out, pb)
    if args.cmd == "train":
        res = ex.run_train(cfg, ds, pb, out, log=log.info)
        print(f"trained in {res['train_seconds']:.1f} s; checkpoint {out / ex.CKPT_NAME}")
        return 0
    if args.cmd == "eval":
        enc, dec, meta = ex.load_model(out)
        rep = ex.evaluate(cfg, ds, enc, dec, pb, meta.get("train_seconds"))
        ex.check_report(rep)
        ex.save_report(rep, out)
        print(_summary(rep))
        return 0
    if args.cmd == "tik":
        rep = ex.run_tik(cfg, ds, pb, args.n)
        ex.save_report(rep, out, "tik")
        print(_summary(rep))
        return 0
    if args.cmd == "timing":
        enc = dec = None
        if (out / ex.CKPT_NAME).exists():
            enc, dec, _ = ex.load_model(out)
        rep = ex.run_timing(cfg, ds, pb, enc, dec)
        write_json(out / "timing.json", rep)
        for k, v in rep.items():
            print(f"{k}: {v}")
        return 0
    raise AssertionError(args.cmd)


def main(argv=None) -> int:
    try:
        return run(argv)
    except (ConfigError, FormatError, FileNotFoundError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
