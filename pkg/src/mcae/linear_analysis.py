"""Closed-form optima and error predictors for linear encoders and decoders.

Every approach with a linear forward map ``G`` (observed part ``GB = B G``)
and affine encoder/decoder has explicit optima. They are built here from
data only (centered training matrices and pseudo-inverses) and double as
oracles for the iterative trainer.

Approach names: ``nPOP``, ``nOPO``, ``mcPOP``, ``mcOPO``, ``mcOPO-Full``,
``TAEN``, ``TAEN-Full``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from mcae.numerics import DimensionError, center, default_rtol, pinv, solve_spd

APPROACHES = ("nPOP", "nOPO", "mcPOP", "mcOPO", "mcOPO-Full", "TAEN", "TAEN-Full")
PREDICTABLE = ("nPOP", "nOPO", "mcPOP", "mcOPO", "TAEN")


@dataclass
class AffineMap:
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64).reshape(-1)
        if self.W.ndim != 2 or self.W.shape[0] != self.b.size:
            raise DimensionError(f"inconsistent affine map: W {self.W.shape}, b {self.b.shape}")

    def __call__(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            return self.W @ X + self.b
        return self.W @ X + self.b[:, None]

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]


@dataclass
class LinearProblem:
    """Training data for the linear setting; columns of ``U`` and ``Y`` are samples."""

    GB: np.ndarray
    U: np.ndarray
    Y: np.ndarray
    u0: np.ndarray | None = None
    lam: float = 0.0
    G_full: np.ndarray | None = None

    def __post_init__(self):
        self.GB = np.asarray(self.GB, dtype=np.float64)
        self.U = np.atleast_2d(np.asarray(self.U, dtype=np.float64))
        self.Y = np.atleast_2d(np.asarray(self.Y, dtype=np.float64))
        m, n = self.GB.shape
        if self.U.shape[0] != n or self.Y.shape[0] != m:
            raise DimensionError(f"U {self.U.shape} / Y {self.Y.shape} do not match GB {self.GB.shape}")
        if self.U.shape[1] != self.Y.shape[1]:
            raise DimensionError("U and Y need the same number of columns")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.u0 is not None:
            self.u0 = np.asarray(self.u0, dtype=np.float64).reshape(-1)
        if self.G_full is not None:
            self.G_full = np.asarray(self.G_full, dtype=np.float64)
            if self.G_full.shape[1] != n:
                raise DimensionError("G_full must have n columns")

    @property
    def n(self) -> int:
        return self.GB.shape[1]

    @property
    def m(self) -> int:
        return self.GB.shape[0]

    @property
    def nt(self) -> int:
        return self.U.shape[1]

    def A_bar(self) -> np.ndarray:
        """``I + lam GB^T GB``."""
        return np.eye(self.n) + self.lam * self.GB.T @ self.GB

    def target(self, full: bool) -> np.ndarray:
        if full:
            if self.G_full is None:
                raise ValueError("full variant needs G_full")
            return self.G_full
        return self.GB

    def prior_mean(self) -> np.ndarray:
        if self.u0 is None:
            raise ValueError("TAEN needs a prior mean u0")
        return self.u0


def data_scale(prob: LinearProblem) -> float:
    """Size of the gradient entries one expects near an optimum, for tolerances."""
    d = np.linalg.norm(prob.U) + np.linalg.norm(prob.Y)
    if prob.u0 is not None:
        d += np.sqrt(prob.nt) * np.linalg.norm(prob.u0)
    g = max(1.0, prob.lam * np.linalg.norm(prob.GB, 2) ** 2)
    if prob.G_full is not None:
        g = max(g, np.linalg.norm(prob.G_full, 2) ** 2)
    return float(g * d * d)


# ---------------------------------------------------------------- closed forms

def centered_pinv(X: np.ndarray, Xb: np.ndarray) -> np.ndarray:
    """``pinv`` of the centered ``Xb`` with the rank cutoff scaled to the uncentered ``X``.

    Centering cancels the mean but leaves rounding of order ``eps ||X||``; a
    cutoff relative to ``||Xb||`` alone would keep that noise as rank.
    """
    sx = np.linalg.norm(X, 2)
    sb = np.linalg.norm(Xb, 2)
    if sb == 0.0:
        return pinv(Xb)
    return pinv(Xb, default_rtol(Xb.shape) * max(1.0, sx / sb))


def _ls_affine(X: np.ndarray, T: np.ndarray) -> AffineMap:
    """Minimum-norm affine least squares ``min ||W X + b 1^T - T||``."""
    xbar, Xb = center(X)
    tbar, Tb = center(T)
    W = Tb @ centered_pinv(X, Xb)
    return AffineMap(W, tbar - W @ xbar)


def _mc_affine(prob: LinearProblem, X: np.ndarray, T: np.ndarray) -> AffineMap:
    """``min 1/2||W X + b - T||^2 + lam/2 ||GB (W X + b) - Y||^2`` for input ``X``."""
    xbar, Xb = center(X)
    tbar, Tb = center(T)
    ybar, Yb = center(prob.Y)
    A = prob.A_bar()
    GBt = prob.GB.T
    W = solve_spd(A, (Tb + prob.lam * GBt @ Yb) @ centered_pinv(X, Xb))
    # mean condition: A (W xbar + b) = tbar + lam GB^T ybar
    b = solve_spd(A, tbar + prob.lam * GBt @ ybar) - W @ xbar
    return AffineMap(W, b)


def _forward_fit(M: np.ndarray, Z: np.ndarray) -> AffineMap:
    """Decoder matching ``M`` on encoder outputs: ``W = M Zb Zb^+``, ``b = M (I - Zb Zb^+) zbar``."""
    zbar, Zb = center(Z)
    P = Zb @ centered_pinv(Z, Zb)
    return AffineMap(M @ P, M @ (zbar - P @ zbar))


def fit_npop(prob: LinearProblem) -> tuple[AffineMap, AffineMap]:
    enc = _ls_affine(prob.U, prob.Y)
    dec = _ls_affine(enc(prob.U), prob.U)
    return enc, dec


def fit_nopo(prob: LinearProblem) -> tuple[AffineMap, AffineMap]:
    enc = _ls_affine(prob.Y, prob.U)
    dec = _ls_affine(enc(prob.Y), prob.Y)
    return enc, dec


def fit_mcpop(prob: LinearProblem) -> tuple[AffineMap, AffineMap]:
    enc = _ls_affine(prob.U, prob.Y)
    dec = _mc_affine(prob, enc(prob.U), prob.U)
    return enc, dec


def fit_mcopo(prob: LinearProblem, full: bool = False) -> tuple[AffineMap, AffineMap]:
    enc = _mc_affine(prob, prob.Y, prob.U)
    dec = _forward_fit(prob.target(full), enc(prob.Y))
    return enc, dec


def fit_taen(prob: LinearProblem, full: bool = False) -> tuple[AffineMap, AffineMap]:
    u0 = prob.prior_mean()
    enc = _mc_affine(prob, prob.Y, np.repeat(u0[:, None], prob.nt, axis=1))
    dec = _forward_fit(prob.target(full), enc(prob.Y))
    return enc, dec


def fit(approach: str, prob: LinearProblem) -> tuple[AffineMap, AffineMap]:
    table = {
        "nPOP": fit_npop,
        "nOPO": fit_nopo,
        "mcPOP": fit_mcpop,
        "mcOPO": lambda p: fit_mcopo(p, False),
        "mcOPO-Full": lambda p: fit_mcopo(p, True),
        "TAEN": lambda p: fit_taen(p, False),
        "TAEN-Full": lambda p: fit_taen(p, True),
    }
    if approach not in table:
        raise ValueError(f"unknown approach {approach!r}; expected one of {APPROACHES}")
    return table[approach](prob)


# ---------------------------------------------------------------- losses

def _affine_terms(F: AffineMap, X, terms):
    """Loss and gradient of ``sum_k w_k/2 ||A_k (F X) - T_k||^2`` (``A_k = None`` means identity)."""
    O = F(X)
    loss = 0.0
    D = np.zeros_like(O)
    for A, T, w in terms:
        R = (O if A is None else A @ O) - T
        loss += 0.5 * w * float(np.sum(R * R))
        D += w * (R if A is None else A.T @ R)
    return loss, {"W": D @ X.T, "b": D.sum(axis=1)}


def phase_loss(approach: str, phase: str, prob: LinearProblem, enc: AffineMap,
               dec: AffineMap | None = None) -> tuple[float, dict]:
    """Sequential-phase loss and gradients for approach ``approach``.

    ``phase="encoder"`` differentiates with respect to the encoder;
    ``phase="decoder"`` treats ``enc`` as frozen and differentiates the
    decoder loss evaluated on the encoder outputs.
    """
    U, Y, GB, lam = prob.U, prob.Y, prob.GB, prob.lam
    if approach not in APPROACHES:
        raise ValueError(f"unknown approach {approach!r}")
    pop = approach in ("nPOP", "mcPOP")
    if phase == "encoder":
        if pop:
            return _affine_terms(enc, U, [(None, Y, 1.0)])
        if approach == "nOPO":
            return _affine_terms(enc, Y, [(None, U, 1.0)])
        T = U if approach.startswith("mcOPO") else np.repeat(prob.prior_mean()[:, None], prob.nt, axis=1)
        return _affine_terms(enc, Y, [(None, T, 1.0), (GB, Y, lam)])
    if phase != "decoder":
        raise ValueError("phase must be 'encoder' or 'decoder'")
    if dec is None:
        raise ValueError("decoder phase needs a decoder")
    Z = enc(U) if pop else enc(Y)
    if approach == "nPOP":
        return _affine_terms(dec, Z, [(None, U, 1.0)])
    if approach == "mcPOP":
        return _affine_terms(dec, Z, [(None, U, 1.0), (GB, Y, lam)])
    if approach == "nOPO":
        return _affine_terms(dec, Z, [(None, Y, 1.0)])
    M = prob.target(approach.endswith("Full"))
    return _affine_terms(dec, Z, [(None, M @ Z, 1.0)])


def stationarity(approach: str, prob: LinearProblem, enc: AffineMap, dec: AffineMap) -> dict:
    """Frobenius norms of both phase gradients (``W`` and ``b`` stacked)."""
    out = {}
    for phase in ("encoder", "decoder"):
        _, g = phase_loss(approach, phase, prob, enc, dec)
        out[phase] = float(np.sqrt(np.sum(g["W"] ** 2) + np.sum(g["b"] ** 2)))
    return out


# ---------------------------------------------------------------- test errors

def _error_vectors(approach: str, prob: LinearProblem, u: np.ndarray, y: np.ndarray) -> np.ndarray:
    GB = prob.GB
    ubar, Ub = center(prob.U)
    ybar, Yb = center(prob.Y)
    Ypinv = centered_pinv(prob.Y, Yb)
    Pn = np.eye(prob.m) - Yb @ Ypinv
    n = prob.n
    if approach in ("nPOP", "nOPO"):
        return (Ub @ Ypinv @ GB - np.eye(n)) @ (u - ubar[:, None])
    if approach in ("mcPOP", "mcOPO"):
        du = u - ubar[:, None]
        return solve_spd(prob.A_bar(), (Ub @ Ypinv @ GB - np.eye(n)) @ du
                         - prob.lam * GB.T @ Pn @ GB @ du)
    u0 = prob.prior_mean()
    return solve_spd(prob.A_bar(), (u0[:, None] - u) - prob.lam * GB.T @ Pn @ (y - ybar[:, None]))


def predict_test_errors(approach: str, prob: LinearProblem, u_test: np.ndarray,
                        y_test: np.ndarray | None = None) -> dict:
    """Analytic squared inverse error per test column.

    The expressions assume noise-free test data ``y_test = GB u_test``; the
    naive and ``mcPOP``/``mcOPO`` rows also assume noise-free training data
    ``Y = GB U`` (so ``ybar = GB ubar``). The ``TAEN`` row holds for any
    training ``Y`` and carries the bound ``||u0 - u_test||^2``.
    """
    if approach not in PREDICTABLE:
        raise ValueError(f"no analytic error for {approach!r}; expected one of {PREDICTABLE}")
    u = np.asarray(u_test, dtype=np.float64)
    single = u.ndim == 1
    u = u[:, None] if single else u
    y = prob.GB @ u if y_test is None else np.asarray(y_test, dtype=np.float64).reshape(prob.m, -1)
    E = _error_vectors(approach, prob, u, y)
    res = {}
    if approach == "TAEN":
        bound = np.sum((prob.prior_mean()[:, None] - u) ** 2, axis=0)
        res["bound"] = bound[0] if single else bound
    err = np.sum(E * E, axis=0)
    res["inverse"] = err[0] if single else err
    return res


def expected_test_error(approach: str, prob: LinearProblem, mean: np.ndarray,
                        cov: np.ndarray | None = None) -> float:
    """``E ||error(u)||^2`` for ``u ~ N(mean, cov)`` and ``y = GB u``.

    The error is affine in ``u``, ``e(u) = K (u - mean) + e(mean)``, so the
    expectation is ``||e(mean)||^2 + tr(K cov K^T)``.
    """
    if approach not in PREDICTABLE:
        raise ValueError(f"no analytic error for {approach!r}")
    mean = np.asarray(mean, dtype=np.float64)
    n = prob.n
    cov = np.eye(n) if cov is None else np.asarray(cov, dtype=np.float64)
    pts = np.column_stack([mean, mean[:, None] + np.eye(n)])
    E = _error_vectors(approach, prob, pts, prob.GB @ pts)
    e0 = E[:, 0]
    K = E[:, 1:] - e0[:, None]
    return float(e0 @ e0 + np.trace(K @ cov @ K.T))


def empirical_inverse_errors(approach: str, prob: LinearProblem, u_test: np.ndarray,
                             y_test: np.ndarray) -> np.ndarray:
    """``||inverse_map(y) - u||^2`` per column using the fitted closed forms."""
    enc, dec = fit(approach, prob)
    inv = dec if approach in ("nPOP", "mcPOP") else enc
    return np.sum((inv(y_test) - u_test) ** 2, axis=0)


def tikhonov_linear(GB: np.ndarray, y: np.ndarray, u0: np.ndarray, lam: float) -> np.ndarray:
    """Minimizer of ``1/2||u - u0||^2 + lam/2 ||GB u - y||^2`` (columns of ``y`` solved jointly)."""
    A = np.eye(GB.shape[1]) + lam * GB.T @ GB
    y = np.asarray(y, dtype=np.float64)
    rhs = (u0 if y.ndim == 1 else u0[:, None]) + lam * GB.T @ y
    return solve_spd(A, rhs)


# ---------------------------------------------------------------- simultaneous training

def simultaneous_loss(enc: AffineMap, dec: AffineMap, prob: LinearProblem, beta: float,
                      variant: str = "nPOP") -> tuple[float, dict]:
    """``1/2||enc(X) - T||^2 + beta/2||dec(enc(X)) - X||^2`` with ``(X, T) = (U, Y)`` or ``(Y, U)``."""
    if variant == "nPOP":
        X, T = prob.U, prob.Y
    elif variant == "nOPO":
        X, T = prob.Y, prob.U
    else:
        raise ValueError("variant must be 'nPOP' or 'nOPO'")
    Z = enc(X)
    E1 = Z - T
    E2 = dec(Z) - X
    loss = 0.5 * float(np.sum(E1 * E1)) + 0.5 * beta * float(np.sum(E2 * E2))
    Dz = E1 + beta * dec.W.T @ E2
    grads = {"We": Dz @ X.T, "be": Dz.sum(axis=1), "Wd": beta * E2 @ Z.T, "bd": beta * E2.sum(axis=1)}
    return loss, grads


def simultaneous_residual(enc: AffineMap, dec: AffineMap, prob: LinearProblem, beta: float,
                          variant: str = "nPOP") -> dict:
    """Norms of the four gradient blocks and of the coupling identity.

    The coupling identity is ``We Xb Xb^T = We Wd We Xb Xb^T`` with ``Xb`` the
    centered encoder input (``U`` for nPOP, ``Y`` for nOPO).
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    _, g = simultaneous_loss(enc, dec, prob, beta, variant)
    Xb = center(prob.U if variant == "nPOP" else prob.Y)[1]
    C = enc.W @ Xb @ Xb.T
    out = {k: float(np.linalg.norm(v)) for k, v in g.items()}
    out["coupling"] = float(np.linalg.norm(C - enc.W @ dec.W @ C))
    return out


def _unpack(x: np.ndarray, shapes) -> tuple[AffineMap, AffineMap]:
    (a, b), (c, d) = shapes
    i = 0
    We = x[i:i + a * b].reshape(a, b); i += a * b
    be = x[i:i + a]; i += a
    Wd = x[i:i + c * d].reshape(c, d); i += c * d
    bd = x[i:i + c]
    return AffineMap(We, be), AffineMap(Wd, bd)


def simultaneous_descent(prob: LinearProblem, beta: float, variant: str = "nPOP", seed: int = 0,
                         init_scale: float = 0.1, gtol: float = 1e-12, maxiter: int = 20000):
    """Train encoder and decoder jointly from a seeded random start (oracle for stationarity).

    Uses scipy's L-BFGS-B on the flattened parameters with the analytic gradient.
    """
    from scipy.optimize import minimize

    X, T = (prob.U, prob.Y) if variant == "nPOP" else (prob.Y, prob.U)
    din, dlat = X.shape[0], T.shape[0]
    shapes = ((dlat, din), (din, dlat))
    rng = np.random.default_rng(seed)
    x0 = init_scale * rng.standard_normal(2 * din * dlat + din + dlat)

    def fun(x):
        enc, dec = _unpack(x, shapes)
        loss, g = simultaneous_loss(enc, dec, prob, beta, variant)
        return loss, np.concatenate([g["We"].ravel(), g["be"], g["Wd"].ravel(), g["bd"]])

    res = minimize(fun, x0, jac=True, method="L-BFGS-B",
                   options={"gtol": gtol, "ftol": 0.0, "maxiter": maxiter, "maxcor": 30})
    enc, dec = _unpack(res.x, shapes)
    return enc, dec, res
