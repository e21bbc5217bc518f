"""Karhunen-Loeve parameter fields and the two observation noise stages.

All randomness flows through :func:`make_rng`, which builds a
``numpy.random.Generator`` on the counter-based Philox4x64-10 bit generator.
The key is derived from ``SeedSequence(seed, spawn_key=(stream,))`` so that
independent streams can be split off by integer index.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from mcae.numerics import DimensionError, NumericError

# integer stream ids used across the package
STREAM_TRAIN = 0
STREAM_TEST = 1
STREAM_CORRUPT = 2
STREAM_RANDOMIZE = 3
STREAM_INIT = 4
STREAM_OBS = 5
STREAM_INIT_DEC = 6
STREAM_RANDOMIZE_DEC = 7


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(stream),))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Grid:
    """Uniform node grid on the unit square; node ``(i, j)`` has flat index ``j * nx + i``."""

    nx: int
    ny: int
    periodic: bool = False

    @property
    def size(self) -> int:
        return self.nx * self.ny

    @property
    def spacing(self) -> tuple[float, float]:
        if self.periodic:
            return 1.0 / self.nx, 1.0 / self.ny
        return 1.0 / (self.nx - 1), 1.0 / (self.ny - 1)

    def coords(self) -> np.ndarray:
        hx, hy = self.spacing
        x = np.arange(self.nx) * hx
        y = np.arange(self.ny) * hy
        X, Y = np.meshgrid(x, y)
        return np.column_stack([X.ravel(), Y.ravel()])


@dataclass
class KLBasis:
    """Truncated KL basis on grid nodes.

    Modes are orthonormal in the discrete inner product
    ``<a, b> = weight * sum_i a_i b_i`` with ``weight = 1 / grid.size``, the
    nodal quadrature of the unit square, so eigenvalues are those of the
    continuous covariance operator.
    """

    eigenvalues: np.ndarray
    modes: np.ndarray
    grid: Grid
    params: dict = field(default_factory=dict)

    @property
    def num_modes(self) -> int:
        return self.eigenvalues.shape[0]

    @property
    def weight(self) -> float:
        return 1.0 / self.grid.size

    def gram(self) -> np.ndarray:
        return self.weight * self.modes.T @ self.modes

    def covariance(self) -> np.ndarray:
        return (self.modes * self.eigenvalues) @ self.modes.T

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.eigenvalues, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.modes, dtype="<f8").tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class NoiseSpec:
    delta: float
    epsilon: float
    seed: int = 18

    def __post_init__(self):
        if self.delta < 0 or self.epsilon < 0:
            raise ValueError("noise levels must be nonnegative")


def exponential_kernel(points: np.ndarray, length: float, variance: float = 1.0) -> np.ndarray:
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=-1)
    return variance * np.exp(-d / length)


def build_heat_kl(grid: Grid, q: int = 15, length: float = 0.5, variance: float = 1.0,
                  covariance: np.ndarray | None = None) -> KLBasis:
    """Top-``q`` eigenpairs of a two-point covariance discretized on grid nodes.

    The default kernel is ``variance * exp(-|x - x'| / length)``; pass
    ``covariance`` to eigendecompose a precomputed nodal matrix instead.
    """
    n = grid.size
    if not 1 <= q <= n:
        raise DimensionError(f"q={q} must lie in [1, {n}]")
    C = exponential_kernel(grid.coords(), length, variance) if covariance is None else np.asarray(covariance, float)
    if C.shape != (n, n):
        raise DimensionError(f"covariance has shape {C.shape}, expected {(n, n)}")
    w, V = np.linalg.eigh(0.5 * (C + C.T))
    if w[0] < -1e-10 * max(abs(w[-1]), 1.0):
        raise NumericError(f"covariance is not positive semidefinite (min eigenvalue {w[0]:.3e})")
    order = np.argsort(w)[::-1][:q]
    # nodal quadrature weight 1/n maps matrix eigenpairs to operator eigenpairs
    vals = np.clip(w[order], 0.0, None) / n
    modes = V[:, order] * np.sqrt(n)
    # deterministic sign: largest-magnitude entry of each mode is positive
    idx = np.argmax(np.abs(modes), axis=0)
    modes = modes * np.sign(modes[idx, np.arange(q)])
    params = {"kernel": "exponential" if covariance is None else "custom",
              "length": length, "variance": variance, "q": q}
    return KLBasis(vals, modes, grid, params)


def ns_symbol(k1, k2, amplitude: float = 7.0 ** 1.5, shift: float = 49.0, power: float = 2.5):
    """Eigenvalues ``7^{3/2} (4 pi^2 |k|^2 + 49)^{-2.5}`` of the periodic covariance operator."""
    return amplitude * (4.0 * np.pi ** 2 * (np.asarray(k1) ** 2 + np.asarray(k2) ** 2) + shift) ** (-power)


def build_ns_kl(grid: Grid, q: int = 24) -> KLBasis:
    """Real Fourier KL basis for ``7^{3/2}(-Laplace + 49 I)^{-2.5}`` on the periodic unit square.

    Complex harmonics ``exp(2 pi i k.x)`` are paired into ``sqrt(2) cos`` and
    ``sqrt(2) sin`` modes, which have unit norm in the weighted inner product.
    Modes are ordered by eigenvalue (descending), ties broken by the
    wavenumber pair ``(k1, k2)`` lexicographically, cosine before sine.
    Wavenumbers range over ``|k_i| < N_i / 2``; Nyquist modes are excluded so
    every mode is exactly representable as a real field.
    """
    if not grid.periodic:
        raise DimensionError("build_ns_kl needs a periodic grid")
    N1, N2 = grid.nx, grid.ny
    cands = []
    for k1 in range(-((N1 - 1) // 2), (N1 - 1) // 2 + 1):
        for k2 in range(-((N2 - 1) // 2), (N2 - 1) // 2 + 1):
            # one representative per +/- pair: (k1 > 0) or (k1 == 0 and k2 >= 0)
            if k1 < 0 or (k1 == 0 and k2 < 0):
                continue
            lam = float(ns_symbol(k1, k2))
            cands.append((-lam, k1, k2, 0))
            if (k1, k2) != (0, 0):
                cands.append((-lam, k1, k2, 1))
    if q > len(cands):
        raise DimensionError(f"q={q} exceeds the {len(cands)} available real modes")
    cands.sort()
    pts = grid.coords()
    vals, cols = [], []
    for neg_lam, k1, k2, kind in cands[:q]:
        phase = 2.0 * np.pi * (k1 * pts[:, 0] + k2 * pts[:, 1])
        if k1 == 0 and k2 == 0:
            col = np.ones(grid.size)
        elif kind == 0:
            col = np.sqrt(2.0) * np.cos(phase)
        else:
            col = np.sqrt(2.0) * np.sin(phase)
        cols.append(col)
        vals.append(-neg_lam)
    params = {"kernel": "periodic-sobolev", "amplitude": 7.0 ** 1.5, "shift": 49.0,
              "power": 2.5, "q": q, "wavenumbers": [[c[1], c[2], c[3]] for c in cands[:q]]}
    return KLBasis(np.array(vals), np.column_stack(cols), grid, params)


def sample_field(basis: KLBasis, rng: np.random.Generator | None = None, size: int | None = None,
                 z: np.ndarray | None = None) -> np.ndarray:
    """Draw ``u = sum_i sqrt(lambda_i) phi_i z_i`` with ``z ~ N(0, I)``.

    ``size=None`` returns one vector of length ``n``; otherwise an ``(n, size)``
    matrix of column samples. Passing ``z`` (shape ``(q,)`` or ``(q, k)``)
    bypasses the generator.
    """
    if z is None:
        if rng is None:
            raise ValueError("sample_field needs an rng or explicit coefficients")
        shape = (basis.num_modes,) if size is None else (basis.num_modes, size)
        z = rng.standard_normal(shape)
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] != basis.num_modes:
        raise DimensionError(f"got {z.shape[0]} coefficients for {basis.num_modes} modes")
    scaled = np.sqrt(basis.eigenvalues)
    if z.ndim == 1:
        return basis.modes @ (scaled * z)
    return basis.modes @ (scaled[:, None] * z)


def corrupt(y_clean: np.ndarray, delta: float, rng: np.random.Generator) -> np.ndarray:
    """Multiplicative corruption ``y = y_clean + d * y_clean`` with ``d ~ N(0, delta^2 I)``."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    y_clean = np.asarray(y_clean, dtype=np.float64)
    d = delta * rng.standard_normal(y_clean.shape)
    return y_clean + d * y_clean


class Randomizer:
    """Per-epoch data randomization ``y~ = y + zeta * y``, ``zeta ~ N(0, eps^2 I)``.

    Counts calls so training code can be audited for noise discipline.
    """

    def __init__(self, epsilon: float, rng: np.random.Generator):
        if epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        self.epsilon = float(epsilon)
        self.rng = rng
        self.calls = 0

    def __call__(self, Y: np.ndarray) -> np.ndarray:
        self.calls += 1
        return randomize(Y, self.epsilon, self.rng)


def randomize(y: np.ndarray, epsilon: float, rng: np.random.Generator) -> np.ndarray:
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    y = np.asarray(y, dtype=np.float64)
    zeta = epsilon * rng.standard_normal(y.shape)
    return y + zeta * y
