"""Problem construction and dataset generation / persistence."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from mcae.forward_models.base import ForwardModel, LinearModel
from mcae.forward_models.heat import HeatModel, HeatProblem
from mcae.forward_models.navier_stokes import NSModel, NSProblem
from mcae.harness.io import FormatError, file_sha256, read_json, read_matrix, write_json, write_matrix
from mcae.random_fields import (STREAM_CORRUPT, STREAM_OBS, STREAM_TEST, STREAM_TRAIN, Grid, KLBasis,
                                build_heat_kl, build_ns_kl, corrupt, make_rng, sample_field)

FORMAT_VERSION = 1
STREAM_VAL = 20


@dataclass
class Problem:
    kind: str
    fm: ForwardModel
    basis: KLBasis | None
    u0: np.ndarray
    info: dict = field(default_factory=dict)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.basis is None:
            return rng.standard_normal((self.fm.n, size))
        return sample_field(self.basis, rng, size=size)


def build_problem(cfg: dict) -> Problem:
    kind = cfg["problem"]
    obs_rng = make_rng(cfg["seeds"]["obs"], STREAM_OBS)
    if kind == "heat":
        h = cfg["heat"]
        hp = HeatProblem(nx=h["nx"], ny=h["ny"], source=h["source"])
        grid = Grid(h["nx"], h["ny"])
        cand = HeatModel(hp, []).interior_nodes()
        obs = np.sort(obs_rng.choice(cand, size=h["n_obs"], replace=False))
        fm = HeatModel(hp, obs)
        basis = build_heat_kl(grid, h["q"], h["length"], h["variance"])
    elif kind == "ns":
        s = cfg["ns"]
        npb = NSProblem(N=s["N"], nu=s["nu"], dt=s["dt"], steps=s["steps"],
                        store_all=s["store_all"], snapshots=s["snapshots"])
        obs = np.sort(obs_rng.choice(s["N"] * s["N"], size=s["n_obs"], replace=False))
        fm = NSModel(npb, obs)
        basis = build_ns_kl(Grid(s["N"], s["N"], periodic=True), s["q"])
    elif kind == "linear":
        lin = cfg["linear"]
        G = make_rng(cfg["seeds"]["obs"], STREAM_OBS + 100).standard_normal((lin["p"], lin["n"]))
        obs = np.sort(obs_rng.choice(lin["p"], size=lin["m"], replace=False))
        fm = LinearModel(G, obs)
        basis = None
    else:
        raise ValueError(f"unknown problem {kind!r}")
    info = fm.describe()
    if basis is not None:
        info["kl"] = {"params": basis.params, "digest": basis.digest(),
                      "eigenvalues": basis.eigenvalues.tolist()}
    # prior mean of the centered KL field
    return Problem(kind, fm, basis, np.zeros(fm.n), info)


@dataclass
class Dataset:
    U: np.ndarray
    Y_clean: np.ndarray
    Y: np.ndarray
    U_test: np.ndarray
    S_test: np.ndarray
    Y_test_clean: np.ndarray
    Y_test: np.ndarray
    U_val: np.ndarray
    Y_val_clean: np.ndarray
    Y_val: np.ndarray
    obs_indices: np.ndarray
    u0: np.ndarray
    manifest: dict = field(default_factory=dict)

    MATRICES = ("U", "Y_clean", "Y", "U_test", "S_test", "Y_test_clean", "Y_test",
                "U_val", "Y_val_clean", "Y_val", "u0")


def generate_dataset(cfg: dict, problem: Problem | None = None) -> Dataset:
    """Training and test data, deterministic in the configured seeds.

    With ``n_train = 1`` the training sample ``sample_index`` of the training
    stream is corrupted once and replicated ``n_batch`` times; data
    randomization during training then makes the copies distinct.
    """
    pb = problem or build_problem(cfg)
    fm = pb.fm
    seeds = cfg["seeds"]
    n_draw = max(100, cfg["sample_index"] + 1)
    U_all = pb.sample(make_rng(seeds["train"], STREAM_TRAIN), n_draw)
    if cfg["n_train"] == 1:
        U = U_all[:, [cfg["sample_index"]]]
    else:
        U = U_all[:, :100]
    Y_clean = fm.pto(U)
    Y = corrupt(Y_clean, cfg["delta"], make_rng(seeds["train"], STREAM_CORRUPT))
    if cfg["n_train"] == 1:
        reps = cfg["n_batch"]
        U, Y_clean, Y = (np.repeat(A, reps, axis=1) for A in (U, Y_clean, Y))

    U_test = pb.sample(make_rng(seeds["test"], STREAM_TEST), cfg["n_test"])
    S_test = fm.apply(U_test)
    Y_test_clean = fm.observe(S_test)
    Y_test = corrupt(Y_test_clean, cfg["delta"], make_rng(seeds["test"], STREAM_CORRUPT))
    # validation draws for best-epoch selection, disjoint from the test stream
    U_val = pb.sample(make_rng(seeds["test"], STREAM_VAL), cfg["n_val"])
    Y_val_clean = fm.pto(U_val)
    Y_val = corrupt(Y_val_clean, cfg["delta"], make_rng(seeds["test"], STREAM_VAL + 1))
    manifest = {
        "format_version": FORMAT_VERSION,
        "problem": pb.info,
        "seeds": dict(seeds),
        "n_train": cfg["n_train"],
        "n_batch": int(U.shape[1]),
        "n_test": cfg["n_test"],
        "n_val": cfg["n_val"],
        "sample_index": cfg["sample_index"],
        "delta": cfg["delta"],
    }
    return Dataset(U, Y_clean, Y, U_test, S_test, Y_test_clean, Y_test, U_val, Y_val_clean, Y_val,
                   fm.obs_indices.copy(), pb.u0.copy(), manifest)


def save_dataset(ds: Dataset, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    hashes = {}
    for name in Dataset.MATRICES:
        hashes[name] = write_matrix(d / f"{name}.bin", getattr(ds, name))
    man = dict(ds.manifest)
    man["obs_indices"] = ds.obs_indices.tolist()
    man["files"] = {name: {"file": f"{name}.bin", "sha256": h} for name, h in hashes.items()}
    write_json(d / "manifest.json", man)
    return d


def load_dataset(directory) -> Dataset:
    d = Path(directory)
    if not (d / "manifest.json").exists():
        raise FileNotFoundError(f"no dataset manifest in {d}")
    man = read_json(d / "manifest.json")
    mats = {}
    for name in Dataset.MATRICES:
        entry = man["files"][name]
        path = d / entry["file"]
        if file_sha256(path) != entry["sha256"]:
            raise FormatError(f"{path}: sha256 does not match the manifest")
        mats[name] = read_matrix(path)
    mats["u0"] = mats["u0"][:, 0]
    obs = np.asarray(man["obs_indices"], dtype=np.intp)
    return Dataset(**mats, obs_indices=obs, manifest=man)
