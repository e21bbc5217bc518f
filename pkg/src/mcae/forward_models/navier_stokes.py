"""2D incompressible Navier-Stokes in vorticity / stream-function form.

    d_t w + v . grad w = nu Lap w + f,   -Lap psi = w,   v = (d_2 psi, -d_1 psi)

on the periodic unit square, pseudospectral in space. One time step is

    w*  = S w - dt P N(w)               + dt R f
    w+  = S w - dt/2 P (N(w) + N(w*))   + dt R f

with ``S = (1 - a)/(1 + a)``, ``R = 1/(1 + a)``, ``a = dt nu 4 pi^2 |k|^2 / 2``
(Crank-Nicolson diffusion), ``P = R * dealias`` and ``N(w) = v . grad w``
(Heun predictor / corrector for advection). Nyquist rows are dropped from the
derivative symbols so every operator maps real fields to real fields.

Every Hermitian Fourier multiplier ``M`` acts on real fields as ``x -> F^-1(M F x)``,
whose transpose is the same map with ``conj(M)``. The discrete adjoint below is
assembled from that rule; states are stored or recomputed through
:mod:`mcae.forward_models.checkpointing`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft as sp_fft

from mcae.forward_models.base import ForwardModel
from mcae.forward_models.checkpointing import reverse_sweep
from mcae.numerics import DimensionError, NumericError

CFL_LIMIT = 1.0


@dataclass(frozen=True)
class NSProblem:
    N: int = 16
    nu: float = 1e-3
    dt: float = 1e-1
    steps: int = 100
    advection: bool = True
    forcing: bool = True
    store_all: int = 256
    snapshots: int = 16

    def __post_init__(self):
        if self.N < 4:
            raise DimensionError("NS grid needs N >= 4")
        if self.steps < 0 or self.dt <= 0 or self.nu < 0:
            raise ValueError("NS problem needs steps >= 0, dt > 0, nu >= 0")

    @property
    def T(self) -> float:
        return self.steps * self.dt


def ns_forcing(N: int) -> np.ndarray:
    """``0.1 (sin(2 pi (x1 + x2)) + cos(2 pi (x1 + x2)))`` on the ``N x N`` periodic grid."""
    x = np.arange(N) / N
    X1, X2 = np.meshgrid(x, x)  # rows index x2, columns index x1
    s = 2 * np.pi * (X1 + X2)
    return 0.1 * (np.sin(s) + np.cos(s))


class NSModel(ForwardModel):
    """Parameter is the initial vorticity, state is the vorticity at ``T``.

    Flat index ``j * N + i`` maps to the array entry ``[j, i]`` with
    ``x1 = i / N`` and ``x2 = j / N``. Internally the state is carried as its
    half spectrum (``rfft2`` over the last two axes).
    """

    def __init__(self, problem: NSProblem, obs_indices, cache_mb: float = 512.0):
        self.problem = problem
        N = problem.N
        super().__init__(N * N, N * N, obs_indices)
        self.cache_mb = cache_mb
        K1, K2 = np.meshgrid(np.fft.rfftfreq(N, d=1.0 / N), np.fft.fftfreq(N, d=1.0 / N))
        nyq = (np.abs(K1) == N / 2) | (np.abs(K2) == N / 2)
        k1 = np.where(nyq, 0.0, K1)
        k2 = np.where(nyq, 0.0, K2)
        lap = 4 * np.pi ** 2 * (K1 ** 2 + K2 ** 2)
        inv_lap = np.zeros_like(lap)
        inv_lap[lap > 0] = 1.0 / lap[lap > 0]
        self.inv_lap = inv_lap
        self.d1 = 2j * np.pi * k1
        self.d2 = 2j * np.pi * k2
        # symbols of (v1, dw/dx1, v2, dw/dx2) as functions of w
        self.sym = np.stack([self.d2 * inv_lap, self.d1, -self.d1 * inv_lap, self.d2])
        self.sym_t = np.conj(self.sym)
        cut = N / 3.0
        self.dealias = ((np.abs(K1) <= cut) & (np.abs(K2) <= cut)).astype(float)
        a = 0.5 * problem.dt * problem.nu * lap
        self.S = (1 - a) / (1 + a)
        self.R = 1.0 / (1 + a)
        self.P = self.R * self.dealias
        f = ns_forcing(N) if problem.forcing else np.zeros((N, N))
        self.forcing = f
        self._f_hat = problem.dt * self.R * self._fwd(f)
        self.h = 1.0 / N
        self.diagnostics: dict = {"cfl_max": 0.0, "cfl_warning": False}

    def _fwd(self, x):
        return sp_fft.rfft2(x, axes=(-2, -1))

    def _inv(self, x_hat):
        N = self.problem.N
        return sp_fft.irfft2(x_hat, s=(N, N), axes=(-2, -1))

    def _fields(self, w_hat):
        """Real (v1, w1, v2, w2) for a batch, shape (4, k, N, N)."""
        return self._inv(self.sym[:, None] * w_hat[None])

    @staticmethod
    def _adv(F):
        return F[0] * F[1] + F[2] * F[3]

    def velocity(self, w: np.ndarray) -> np.ndarray:
        F = self._fields(self._fwd(w))
        return np.stack([F[0], F[2]])

    def _note_cfl(self, F):
        vmax = float(np.sqrt(np.max(F[0] ** 2 + F[2] ** 2))) if F.size else 0.0
        c = vmax * self.problem.dt / self.h
        self.diagnostics["cfl_max"] = max(self.diagnostics["cfl_max"], c)
        if c > CFL_LIMIT:
            self.diagnostics["cfl_warning"] = True

    def _stage(self, w_hat):
        """Predictor/corrector for one step on a spectral state; returns (F, Fs, w_hat_new)."""
        base = self.S * w_hat + self._f_hat
        if not self.problem.advection:
            return None, None, base
        dt = self.problem.dt
        F = self._fields(w_hat)
        a_hat = self._fwd(self._adv(F))
        Fs = self._fields(base - dt * self.P * a_hat)
        as_hat = self._fwd(self._adv(Fs))
        return F, Fs, base - 0.5 * dt * self.P * (a_hat + as_hat)

    def step(self, w_hat):
        F, _, new = self._stage(w_hat)
        if F is not None:
            self._note_cfl(F)
        return new

    def _jn_t_hat(self, F, r):
        """Spectrum of the transposed linearized advection at fields ``F`` applied to ``r``."""
        # N = v1 w1 + v2 w2, so dN = F1 d(v1) + F0 d(w1) + F3 d(v2) + F2 d(w2)
        prods = np.stack([r * F[1], r * F[0], r * F[3], r * F[2]])
        return np.sum(self.sym_t[:, None] * self._fwd(prods), axis=0)

    def _step_adjoint_fields(self, F, Fs, g):
        """Cotangent of the pre-step state from the post-step cotangent ``g`` (both physical)."""
        g_hat = self._fwd(g)
        if F is None:
            return self._inv(self.S * g_hat)
        dt = self.problem.dt
        h = self._inv(-0.5 * dt * self.P * g_hat)
        gs_hat = self._jn_t_hat(Fs, h)
        r = h - dt * self._inv(self.P * gs_hat)
        return self._inv(self.S * (g_hat + gs_hat) + self._jn_t_hat(F, r))

    def step_adjoint(self, w_hat, g):
        F, Fs, _ = self._stage(w_hat)
        return self._step_adjoint_fields(F, Fs, g)

    # ---- ForwardModel interface
    def _to_grid(self, U):
        N = self.problem.N
        return np.ascontiguousarray(U.T).reshape(U.shape[1], N, N)

    @staticmethod
    def _to_cols(W):
        return W.reshape(W.shape[0], -1).T.copy()

    def _start(self, U):
        if not np.all(np.isfinite(U)):
            raise NumericError("NS model received non-finite initial vorticity")
        return self._fwd(self._to_grid(U))

    def _finish(self, w_hat):
        w = self._inv(w_hat)
        if not np.all(np.isfinite(w)):
            raise NumericError("NS time stepper produced non-finite vorticity")
        return self._to_cols(w)

    def _apply_columns(self, U):
        w_hat = self._start(U)
        for _ in range(self.problem.steps):
            w_hat = self.step(w_hat)
        return self._finish(w_hat)

    def _vjp_columns(self, U, C):
        pb = self.problem
        if pb.steps == 0:
            return C.copy()
        g = reverse_sweep(self._start(U), pb.steps, self.step, self.step_adjoint,
                          self._to_grid(C), store_all=pb.store_all, snapshots=pb.snapshots)
        return self._to_cols(g)

    def _cache_fits(self, k: int) -> bool:
        pb = self.problem
        per_step = 8 * k * pb.N * pb.N * 8.0
        return pb.steps <= pb.store_all and pb.advection and per_step * pb.steps <= self.cache_mb * 2 ** 20

    def _linearize_columns(self, U):
        k = U.shape[1]
        if not self._cache_fits(k):
            return self._apply_columns(U), lambda C: self._vjp_columns(U, C)
        w_hat = self._start(U)
        tape = []
        for _ in range(self.problem.steps):
            F, Fs, w_hat = self._stage(w_hat)
            self._note_cfl(F)
            tape.append((F, Fs))
        W = self._finish(w_hat)

        def pullback(C):
            g = self._to_grid(C)
            for F, Fs in reversed(tape):
                g = self._step_adjoint_fields(F, Fs, g)
            return self._to_cols(g)

        return W, pullback

    def diffusion_propagator(self, C):
        """``S^steps`` applied to columns: the whole linear map when advection and forcing are off."""
        Cc = np.asarray(C, float)
        single = Cc.ndim == 1
        Cc = Cc[:, None] if single else Cc
        G = self._to_grid(Cc)
        out = self._to_cols(self._inv(self.S ** self.problem.steps * self._fwd(G)))
        return out[:, 0] if single else out

    def describe(self) -> dict:
        d = super().describe()
        pb = self.problem
        d.update(problem="ns", N=pb.N, nu=pb.nu, dt=pb.dt, steps=pb.steps,
                 advection=pb.advection, forcing=pb.forcing, **self.diagnostics)
        return d
