from __future__ import annotations

from typing import Callable

import numpy as np

from mcae.numerics import DimensionError


def observe(state: np.ndarray, obs_indices) -> np.ndarray:
    """Apply the 0/1 selection operator ``B``: rows ``obs_indices`` of ``state``."""
    state = np.asarray(state)
    idx = np.asarray(obs_indices, dtype=np.intp).reshape(-1)
    p = state.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= p):
        raise DimensionError(f"observation index out of range for state of size {p}")
    return state[idx]


def observe_adjoint(cot_obs: np.ndarray, obs_indices, p: int) -> np.ndarray:
    """``B^T``: scatter observation cotangents back into a zero state."""
    cot_obs = np.asarray(cot_obs, dtype=np.float64)
    out = np.zeros((p,) + cot_obs.shape[1:])
    np.add.at(out, np.asarray(obs_indices, dtype=np.intp), cot_obs)
    return out


def _as_columns(U: np.ndarray, dim: int, what: str) -> tuple[np.ndarray, bool]:
    U = np.asarray(U, dtype=np.float64)
    single = U.ndim == 1
    if single:
        U = U[:, None]
    if U.ndim != 2 or U.shape[0] != dim:
        raise DimensionError(f"{what} must have leading dimension {dim}, got shape {U.shape}")
    return U, single


class ForwardModel:
    """Differentiable parameter-to-state map with an observation selector.

    Subclasses implement ``_apply_columns`` and ``_vjp_columns`` on
    ``(dim, k)`` column batches; the public methods also accept single
    vectors. ``linearize`` returns states together with a pullback so that
    implementations can reuse factorizations or trajectories between the
    forward and adjoint passes.
    """

    n: int
    p: int

    def __init__(self, n: int, p: int, obs_indices):
        self.n = int(n)
        self.p = int(p)
        idx = np.asarray(obs_indices, dtype=np.intp).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= self.p):
            raise DimensionError("observation indices must lie in [0, p)")
        if np.unique(idx).size != idx.size:
            raise DimensionError("observation indices must be distinct")
        self.obs_indices = idx

    @property
    def m(self) -> int:
        return self.obs_indices.size

    def apply(self, U: np.ndarray) -> np.ndarray:
        Uc, single = _as_columns(U, self.n, "parameter")
        out = self._apply_columns(Uc)
        return out[:, 0] if single else out

    def vjp(self, U: np.ndarray, cot_state: np.ndarray) -> np.ndarray:
        Uc, single = _as_columns(U, self.n, "parameter")
        Cc, _ = _as_columns(cot_state, self.p, "state cotangent")
        if Cc.shape[1] != Uc.shape[1]:
            raise DimensionError("parameter and cotangent batches differ in size")
        out = self._vjp_columns(Uc, Cc)
        return out[:, 0] if single else out

    def linearize(self, U: np.ndarray) -> tuple[np.ndarray, Callable[[np.ndarray], np.ndarray]]:
        Uc, single = _as_columns(U, self.n, "parameter")
        states, pullback = self._linearize_columns(Uc)

        def vjp(cot_state):
            Cc, _ = _as_columns(cot_state, self.p, "state cotangent")
            g = pullback(Cc)
            return g[:, 0] if single else g

        return (states[:, 0] if single else states), vjp

    def observe(self, state: np.ndarray) -> np.ndarray:
        return observe(state, self.obs_indices)

    def observe_adjoint(self, cot_obs: np.ndarray) -> np.ndarray:
        return observe_adjoint(cot_obs, self.obs_indices, self.p)

    def pto(self, U: np.ndarray) -> np.ndarray:
        return self.observe(self.apply(U))

    def _linearize_columns(self, U):
        return self._apply_columns(U), lambda C: self._vjp_columns(U, C)

    def _apply_columns(self, U):  # pragma: no cover - abstract
        raise NotImplementedError

    def _vjp_columns(self, U, C):  # pragma: no cover - abstract
        raise NotImplementedError

    def describe(self) -> dict:
        return {"kind": type(self).__name__, "n": self.n, "p": self.p,
                "obs_indices": self.obs_indices.tolist()}


class LinearModel(ForwardModel):
    """``apply(u) = G u`` and ``vjp(u, c) = G^T c``."""

    def __init__(self, G: np.ndarray, obs_indices=None):
        G = np.asarray(G, dtype=np.float64)
        if G.ndim != 2:
            raise DimensionError("G must be a matrix")
        if obs_indices is None:
            obs_indices = np.arange(G.shape[0])
        super().__init__(G.shape[1], G.shape[0], obs_indices)
        self.G = G

    @property
    def GB(self) -> np.ndarray:
        return self.G[self.obs_indices]

    def _apply_columns(self, U):
        return self.G @ U

    def _vjp_columns(self, U, C):
        return self.G.T @ C


def linear_surrogate(G: np.ndarray, obs_indices=None) -> LinearModel:
    return LinearModel(G, obs_indices)
