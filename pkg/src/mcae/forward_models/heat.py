"""Steady heat conduction ``-div(exp(u) grad w) = source`` on the unit square.

Bilinear quadrilateral elements on a uniform node grid. The nodal
log-conductivity ``u`` enters through the element conductivity
``exp(mean of the four corner values)``. Nodes on the Dirichlet sides are
eliminated (``w = 0`` there); the remaining sides carry the natural zero-flux
condition. Reduced systems are banded and solved with a banded Cholesky
factorization, one per parameter column.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from mcae.forward_models.base import ForwardModel
from mcae.numerics import DimensionError, NumericError

SIDES = ("left", "right", "bottom", "top")


def q1_reference_stiffness(hx: float = 1.0, hy: float = 1.0) -> np.ndarray:
    """Unit-conductivity Q1 stiffness on an ``hx x hy`` rectangle, 2x2 Gauss rule.

    Local node order: (0,0), (1,0), (1,1), (0,1).
    """
    g = np.array([-1.0, 1.0]) / np.sqrt(3.0)
    xi_n = np.array([-1.0, 1.0, 1.0, -1.0])
    eta_n = np.array([-1.0, -1.0, 1.0, 1.0])
    K = np.zeros((4, 4))
    for xi in g:
        for eta in g:
            dN_dxi = 0.25 * xi_n * (1 + eta * eta_n)
            dN_deta = 0.25 * eta_n * (1 + xi * xi_n)
            dx = dN_dxi * 2.0 / hx
            dy = dN_deta * 2.0 / hy
            K += (np.outer(dx, dx) + np.outer(dy, dy)) * (hx * hy / 4.0)
    return K


@dataclass(frozen=True)
class HeatProblem:
    nx: int = 16
    ny: int = 16
    source: float = 20.0
    dirichlet: tuple[str, ...] = ("left", "right", "top")

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise DimensionError("heat grid needs at least 2x2 nodes")
        bad = set(self.dirichlet) - set(SIDES)
        if bad or not self.dirichlet:
            raise ValueError(f"dirichlet sides must be a nonempty subset of {SIDES}")


class HeatModel(ForwardModel):
    def __init__(self, problem: HeatProblem, obs_indices):
        self.problem = problem
        nx, ny = problem.nx, problem.ny
        n = nx * ny
        super().__init__(n, n, obs_indices)
        hx, hy = 1.0 / (nx - 1), 1.0 / (ny - 1)
        self.K_ref = q1_reference_stiffness(hx, hy)

        ii, jj = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1))
        base = (jj * nx + ii).ravel()
        self.elements = np.column_stack([base, base + 1, base + nx + 1, base + nx])
        ne = self.elements.shape[0]

        ix = np.arange(n) % nx
        iy = np.arange(n) // nx
        on = {"left": ix == 0, "right": ix == nx - 1, "bottom": iy == 0, "top": iy == ny - 1}
        self.dirichlet_mask = np.zeros(n, dtype=bool)
        for side in problem.dirichlet:
            self.dirichlet_mask |= on[side]
        self.free = np.flatnonzero(~self.dirichlet_mask)
        nf = self.free.size
        g2f = -np.ones(n, dtype=np.intp)
        g2f[self.free] = np.arange(nf)
        self._g2f = g2f

        loc = g2f[self.elements]
        bw = 0
        for a in range(4):
            for b in range(4):
                ok = (loc[:, a] >= 0) & (loc[:, b] >= 0)
                if ok.any():
                    bw = max(bw, int(np.max(np.abs(loc[ok, a] - loc[ok, b]))))
        self.bandwidth = bw

        # upper banded storage ab[bw + i - j, j] = K[i, j], i <= j, as a linear map of element conductivities
        rows, cols, vals = [], [], []
        for a in range(4):
            for b in range(4):
                i, j = loc[:, a], loc[:, b]
                ok = (i >= 0) & (j >= 0) & (i <= j)
                rows.append((bw + i[ok] - j[ok]) * nf + j[ok])
                cols.append(np.flatnonzero(ok))
                vals.append(np.full(ok.sum(), self.K_ref[a, b]))
        self._band_map = scipy.sparse.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=((bw + 1) * nf, ne),
        )

        load = np.zeros(n)
        np.add.at(load, self.elements.ravel(), problem.source * hx * hy / 4.0)
        self.load = load
        self._load_free = load[self.free]

        # scatter of element gradients to nodes, d(mean of corners)/du = 1/4
        self._corner_avg = scipy.sparse.csr_matrix(
            (np.full(4 * ne, 0.25), (np.repeat(np.arange(ne), 4), self.elements.ravel())),
            shape=(ne, n),
        )

    def element_conductivity(self, U: np.ndarray) -> np.ndarray:
        """``exp`` of corner-averaged nodal ``u``; returns ``(ne, k)``."""
        return np.exp(self._corner_avg @ U)

    def _factor(self, kappa: np.ndarray) -> list[np.ndarray]:
        bands = (self._band_map @ kappa).T.reshape(kappa.shape[1], self.bandwidth + 1, self.free.size)
        facs = []
        for col, ab in enumerate(bands):
            try:
                facs.append(scipy.linalg.cholesky_banded(ab, lower=False))
            except np.linalg.LinAlgError as exc:
                raise NumericError(f"heat stiffness not positive definite for column {col}: {exc}") from exc
        return facs

    def _solve(self, facs, rhs_free: np.ndarray) -> np.ndarray:
        out = np.zeros((self.p, len(facs)))
        for col, c in enumerate(facs):
            out[self.free, col] = scipy.linalg.cho_solve_banded((c, False), rhs_free[:, col])
        return out

    def _linearize_columns(self, U):
        if not np.all(np.isfinite(U)):
            raise NumericError("heat model received non-finite parameters")
        kappa = self.element_conductivity(U)
        facs = self._factor(kappa)
        k = U.shape[1]
        W = self._solve(facs, np.repeat(self._load_free[:, None], k, axis=1))

        def pullback(C):
            lam = self._solve(facs, C[self.free])
            # dJ/dkappa_e = -lam_e^T K_ref w_e; chain through exp and corner averaging
            lam_e = lam[self.elements]
            w_e = W[self.elements]
            g_e = -np.einsum("eak,ab,ebk->ek", lam_e, self.K_ref, w_e) * kappa
            return self._corner_avg.T @ g_e

        return W, pullback

    def _apply_columns(self, U):
        return self._linearize_columns(U)[0]

    def _vjp_columns(self, U, C):
        return self._linearize_columns(U)[1](C)

    def stiffness(self, u: np.ndarray) -> np.ndarray:
        """Dense reduced stiffness matrix for one parameter vector (testing aid)."""
        kappa = self.element_conductivity(np.asarray(u, float)[:, None])[:, 0]
        nf = self.free.size
        K = np.zeros((nf, nf))
        loc = self._g2f[self.elements]
        for e, nodes in enumerate(loc):
            for a in range(4):
                for b in range(4):
                    if nodes[a] >= 0 and nodes[b] >= 0:
                        K[nodes[a], nodes[b]] += kappa[e] * self.K_ref[a, b]
        return K

    def interior_nodes(self) -> np.ndarray:
        nx, ny = self.problem.nx, self.problem.ny
        ix = np.arange(self.n) % nx
        iy = np.arange(self.n) // nx
        inner = (ix > 0) & (ix < nx - 1) & (iy > 0) & (iy < ny - 1)
        return np.flatnonzero(inner)

    def describe(self) -> dict:
        d = super().describe()
        d.update(problem="heat", nx=self.problem.nx, ny=self.problem.ny,
                 source=self.problem.source, dirichlet=list(self.problem.dirichlet))
        return d
