"""Shallow ReLU encoder/decoder networks and the sequential two-phase trainer.

Losses are sums over samples (``1/2 ||.||_F^2``), gradients are assembled by
hand: network backprop chained with ``ForwardModel.vjp`` for every term that
runs the solver on a network output.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from mcae.forward_models.base import ForwardModel
from mcae.linear_analysis import APPROACHES
from mcae.random_fields import (STREAM_INIT, STREAM_INIT_DEC, STREAM_RANDOMIZE,
                                STREAM_RANDOMIZE_DEC, Randomizer, make_rng)
from mcae.numerics import DimensionError

RANDOMIZED = ("mcOPO", "mcOPO-Full", "TAEN", "TAEN-Full")
PARAM_NAMES = ("W1", "b1", "W2", "b2")


class TrainingError(RuntimeError):
    def __init__(self, msg: str, epoch: int | None = None):
        super().__init__(msg if epoch is None else f"epoch {epoch}: {msg}")
        self.epoch = epoch


@dataclass
class ShallowNet:
    """``x -> W2 act(W1 x + b1) + b2`` on column batches.

    ``activation="identity"`` exists for checking against linear closed forms.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ("relu", "identity"):
            raise ValueError("activation must be 'relu' or 'identity'")
        h = self.W1.shape[0]
        if self.b1.shape != (h,) or self.W2.shape[1] != h or self.b2.shape != (self.W2.shape[0],):
            raise DimensionError("inconsistent ShallowNet parameter shapes")

    @property
    def in_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W2.shape[0]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    def params(self) -> dict:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def set_params(self, p: dict) -> None:
        for k in PARAM_NAMES:
            setattr(self, k, p[k])

    def copy(self) -> "ShallowNet":
        return ShallowNet(*(getattr(self, k).copy() for k in PARAM_NAMES), activation=self.activation)

    def digest(self) -> str:
        h = hashlib.sha256()
        for k in PARAM_NAMES:
            h.update(np.ascontiguousarray(getattr(self, k), dtype="<f8").tobytes())
        return h.hexdigest()

    def __call__(self, X):
        return net_forward(self, X)


def init_net(in_dim: int, hidden: int, out_dim: int, rng: np.random.Generator,
             std: float = 0.02, activation: str = "relu") -> ShallowNet:
    """Weights ``N(0, std^2)``, biases zero."""
    return ShallowNet(std * rng.standard_normal((hidden, in_dim)), np.zeros(hidden),
                      std * rng.standard_normal((out_dim, hidden)), np.zeros(out_dim), activation)


def _hidden(net: ShallowNet, X):
    pre = net.W1 @ X + net.b1[:, None]
    return pre, (np.maximum(pre, 0.0) if net.activation == "relu" else pre)


def net_forward(net: ShallowNet, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X = X[:, None] if single else X
    if X.shape[0] != net.in_dim:
        raise DimensionError(f"net expects inputs of size {net.in_dim}, got {X.shape[0]}")
    out = net.W2 @ _hidden(net, X)[1] + net.b2[:, None]
    return out[:, 0] if single else out


def net_backward(net: ShallowNet, X: np.ndarray, dOut: np.ndarray) -> dict:
    """Parameter gradients of ``sum(dOut * net(X))``."""
    pre, H = _hidden(net, X)
    dH = net.W2.T @ dOut
    if net.activation == "relu":
        dH = dH * (pre > 0)
    return {"W1": dH @ X.T, "b1": dH.sum(axis=1), "W2": dOut @ H.T, "b2": dOut.sum(axis=1)}


@dataclass
class TrainSpec:
    approach: str
    phase: str = "encoder"
    lam: float = 1.0
    epsilon: float = 0.0
    epochs: int = 20000
    lr: float = 1e-3
    batch: int | None = None
    seed: int = 100
    hidden: int = 512
    init_std: float = 0.02
    activation: str = "relu"
    plateau: int | None = None
    eval_every: int = 100

    def __post_init__(self):
        if self.approach not in APPROACHES:
            raise ValueError(f"unknown approach {self.approach!r}")
        if self.phase not in ("encoder", "decoder"):
            raise ValueError("phase must be 'encoder' or 'decoder'")
        if self.lam < 0 or self.epsilon < 0 or self.lr <= 0 or self.epochs < 0:
            raise ValueError("TrainSpec needs lam, epsilon >= 0, lr > 0, epochs >= 0")
        # data randomization only enters the observation-input approaches
        if self.approach not in RANDOMIZED:
            self.epsilon = 0.0

    @property
    def uses_randomization(self) -> bool:
        return self.approach in RANDOMIZED and self.epsilon > 0


@dataclass
class TrainData:
    U: np.ndarray
    Y: np.ndarray
    u0: np.ndarray | None = None

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=np.float64)
        self.Y = np.asarray(self.Y, dtype=np.float64)
        if self.U.ndim != 2 or self.Y.ndim != 2 or self.U.shape[1] != self.Y.shape[1]:
            raise DimensionError("TrainData needs U (n, nt) and Y (m, nt) with equal nt")

    @property
    def nt(self) -> int:
        return self.U.shape[1]


def _model_misfit(fm: ForwardModel, O, T, lam):
    """``lam/2 ||B G(O) - T||^2`` and its gradient with respect to ``O``."""
    states, pullback = fm.linearize(O)
    R = fm.observe(states) - T
    return 0.5 * lam * float(np.sum(R * R)), lam * pullback(fm.observe_adjoint(R))


def loss_and_grad(spec: TrainSpec, enc: ShallowNet, dec: ShallowNet | None, data: TrainData,
                  fm: ForwardModel | None, randomizer: Callable | None = None,
                  epoch: int | None = None) -> tuple[float, dict]:
    """Phase loss and gradients with respect to the network being trained.

    ``randomizer`` is called once per evaluation (a fresh draw) for the
    randomized approaches; it must be ``None`` or unused for the others.
    """
    a = spec.approach
    U, Y = data.U, data.Y
    Yin = randomizer(Y) if (spec.uses_randomization and randomizer is not None) else Y
    pop = a in ("nPOP", "mcPOP")
    X = U if pop else Yin
    if spec.phase == "encoder":
        net, inp = enc, X
        O = net_forward(enc, X)
        if pop:
            targets = [(Y, 1.0)]
            mc = None
        elif a == "nOPO":
            targets = [(U, 1.0)]
            mc = None
        else:
            if a.startswith("TAEN"):
                if data.u0 is None:
                    raise ValueError("TAEN needs a prior mean u0")
                T = np.broadcast_to(data.u0[:, None], O.shape)
            else:
                T = U
            targets = [(T, 1.0)]
            mc = (Yin, spec.lam)
    else:
        if dec is None:
            raise ValueError("decoder phase needs a decoder")
        Z = net_forward(enc, X)
        net, inp = dec, Z
        O = net_forward(dec, Z)
        mc = None
        if a == "nPOP":
            targets = [(U, 1.0)]
        elif a == "mcPOP":
            targets = [(U, 1.0)]
            mc = (Y, spec.lam)
        elif a == "nOPO":
            targets = [(Y, 1.0)]
        else:
            S = fm.apply(Z)
            targets = [(S if a.endswith("Full") else fm.observe(S), 1.0)]
    loss = 0.0
    D = np.zeros_like(O)
    for T, w in targets:
        R = O - T
        loss += 0.5 * w * float(np.sum(R * R))
        D += w * R
    if mc is not None and mc[1] > 0:
        if fm is None:
            raise ValueError(f"{a} needs a forward model")
        lm, gm = _model_misfit(fm, O, mc[0], mc[1])
        loss += lm
        D += gm
    if not np.isfinite(loss):
        raise TrainingError("non-finite loss", epoch)
    return loss, net_backward(net, inp, D)


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(state: AdamState, params: dict, grads: dict, lr: float) -> tuple[dict, AdamState]:
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    m, v, new = {}, {}, {}
    c1 = 1 - b1 ** t
    c2 = 1 - b2 ** t
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {k} has shape {g.shape}, parameter {p.shape}")
        m[k] = b1 * state.m[k] + (1 - b1) * g
        v[k] = b2 * state.v[k] + (1 - b2) * g * g
        new[k] = p - lr * (m[k] / c1) / (np.sqrt(v[k] / c2) + state.eps)
    return new, AdamState(m, v, t, b1, b2, state.eps)


@dataclass
class History:
    loss: list = field(default_factory=list)
    metric_epochs: list = field(default_factory=list)
    metric: list = field(default_factory=list)
    stop: str = "budget"
    best_epoch: int | None = None
    randomize_calls: int = 0
    adam: AdamState | None = None

    def to_dict(self) -> dict:
        return {"loss": self.loss, "metric_epochs": self.metric_epochs, "metric": self.metric,
                "stop": self.stop, "best_epoch": self.best_epoch, "randomize_calls": self.randomize_calls}


def train_phase(spec: TrainSpec, enc: ShallowNet, dec: ShallowNet | None, data: TrainData,
                fm: ForwardModel | None, rng: np.random.Generator | None = None,
                monitor: Callable[[ShallowNet], float] | None = None,
                log: Callable[[str], None] | None = None) -> History:
    """Run ADAM on the phase's network in place. Returns the per-epoch history.

    With ``spec.plateau`` set and a ``monitor``, training stops once the
    monitored metric has not improved for ``plateau`` epochs and the best
    parameters seen are restored.
    """
    if spec.batch not in (None, data.nt):
        raise ValueError("only full-batch training is supported")
    net = enc if spec.phase == "encoder" else dec
    if rng is None:
        stream = STREAM_RANDOMIZE if spec.phase == "encoder" else STREAM_RANDOMIZE_DEC
        rng = make_rng(spec.seed, stream)
    randomizer = Randomizer(spec.epsilon, rng) if spec.uses_randomization else None
    hist = History()
    state = AdamState.zeros_like(net.params())
    best = (np.inf, None)
    for epoch in range(spec.epochs):
        loss, grads = loss_and_grad(spec, enc, dec, data, fm, randomizer, epoch)
        new, state = adam_step(state, net.params(), grads, spec.lr)
        net.set_params(new)
        hist.loss.append(loss)
        if monitor is not None and ((epoch + 1) % spec.eval_every == 0 or epoch + 1 == spec.epochs):
            val = float(monitor(net))
            hist.metric_epochs.append(epoch + 1)
            hist.metric.append(val)
            if log is not None:
                log(f"{spec.approach} {spec.phase} epoch {epoch + 1} loss {loss:.6e} metric {val:.6e}")
            if val < best[0]:
                best = (val, net.copy().params())
                hist.best_epoch = epoch + 1
            elif spec.plateau is not None and epoch + 1 - hist.best_epoch >= spec.plateau:
                hist.stop = "plateau"
                break
    if spec.plateau is not None and best[1] is not None:
        net.set_params(best[1])
    hist.randomize_calls = randomizer.calls if randomizer is not None else 0
    hist.adam = state
    return hist


def build_nets(spec_enc: TrainSpec, spec_dec: TrainSpec, n: int, m: int, p_out: int) -> tuple[ShallowNet, ShallowNet]:
    """Encoder and decoder with the approach-dependent input/output sizes.

    ``p_out`` is the full-state size used by the ``-Full`` decoders.
    """
    a = spec_enc.approach
    if a in ("nPOP", "mcPOP"):
        e_in, e_out, d_out = n, m, n
    elif a == "nOPO":
        e_in, e_out, d_out = m, n, m
    else:
        e_in, e_out = m, n
        d_out = p_out if a.endswith("Full") else m
    enc = init_net(e_in, spec_enc.hidden, e_out, make_rng(spec_enc.seed, STREAM_INIT),
                   spec_enc.init_std, spec_enc.activation)
    dec = init_net(e_out, spec_dec.hidden, d_out, make_rng(spec_dec.seed, STREAM_INIT_DEC),
                   spec_dec.init_std, spec_dec.activation)
    return enc, dec


def train_sequential(spec_enc: TrainSpec, spec_dec: TrainSpec, data: TrainData,
                     fm: ForwardModel | None, rng: np.random.Generator | None = None,
                     monitor_enc=None, monitor_dec=None, log=None, nets=None):
    """Phase 1 trains the encoder, phase 2 the decoder with the encoder frozen."""
    if spec_enc.approach != spec_dec.approach:
        raise ValueError("encoder and decoder specs must use the same approach")
    if spec_enc.phase != "encoder" or spec_dec.phase != "decoder":
        raise ValueError("train_sequential needs an encoder spec and a decoder spec")
    if nets is None:
        p_out = fm.p if fm is not None else data.U.shape[0]
        nets = build_nets(spec_enc, spec_dec, data.U.shape[0], data.Y.shape[0], p_out)
    enc, dec = nets
    rng_dec = None
    if rng is not None:
        rng, rng_dec = rng.spawn(2)
    h1 = train_phase(spec_enc, enc, None, data, fm, rng, monitor_enc, log)
    h2 = train_phase(spec_dec, enc, dec, data, fm, rng_dec, monitor_dec, log)
    return enc, dec, {"encoder": h1, "decoder": h2}


# ---------------------------------------------------------------- checkpoints

CKPT_MAGIC = b"MCAECKPT"
CKPT_VERSION = 1


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, np.ndarray):
        return {"__array__": obj.tolist(), "dtype": str(obj.dtype)}
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _unjson(obj):
    if isinstance(obj, dict):
        if "__array__" in obj:
            return np.array(obj["__array__"], dtype=obj["dtype"])
        return {k: _unjson(v) for k, v in obj.items()}
    return obj


def save_checkpoint(path, nets: dict, adam: dict | None = None, rng_state: dict | None = None,
                    meta: dict | None = None) -> None:
    """Little-endian float64 blobs behind a magic + version + JSON header."""
    arrays, index, offset = [], [], 0
    for name, net in nets.items():
        for k in PARAM_NAMES:
            a = np.ascontiguousarray(getattr(net, k), dtype="<f8")
            index.append({"key": f"{name}.{k}", "shape": list(a.shape), "offset": offset})
            arrays.append(a)
            offset += a.nbytes
    for name, st in (adam or {}).items():
        for part in ("m", "v"):
            for k in PARAM_NAMES:
                a = np.ascontiguousarray(getattr(st, part)[k], dtype="<f8")
                index.append({"key": f"adam.{name}.{part}.{k}", "shape": list(a.shape), "offset": offset})
                arrays.append(a)
                offset += a.nbytes
    header = {
        "arrays": index,
        "activations": {name: net.activation for name, net in nets.items()},
        "adam_t": {name: st.t for name, st in (adam or {}).items()},
        "rng_state": _jsonable(rng_state),
        "meta": meta or {},
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC)
        fh.write(struct.pack("<II", CKPT_VERSION, len(hb)))
        fh.write(hb)
        for a in arrays:
            fh.write(a.tobytes())


def load_checkpoint(path) -> dict:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<II", raw[8:16])
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    body = raw[16 + hlen:]
    arrays = {}
    for entry in header["arrays"]:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        a = np.frombuffer(body, dtype="<f8", count=count, offset=entry["offset"])
        arrays[entry["key"]] = a.reshape(entry["shape"]).astype(np.float64)
    nets = {}
    for name, act in header["activations"].items():
        nets[name] = ShallowNet(*(arrays[f"{name}.{k}"] for k in PARAM_NAMES), activation=act)
    adam = {}
    for name, t in header["adam_t"].items():
        adam[name] = AdamState({k: arrays[f"adam.{name}.m.{k}"] for k in PARAM_NAMES},
                               {k: arrays[f"adam.{name}.v.{k}"] for k in PARAM_NAMES}, t)
    return {"nets": nets, "adam": adam, "rng_state": _unjson(header["rng_state"]), "meta": header["meta"]}
