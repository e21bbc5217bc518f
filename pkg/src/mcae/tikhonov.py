"""Tikhonov-regularized inversion ``min 1/2||u - u0||^2 + lam/2 ||B G(u) - y||^2``.

Limited-memory BFGS (two-loop recursion) with a strong-Wolfe line search
(bracketing + zoom with cubic interpolation), started at ``u0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from mcae.forward_models.base import ForwardModel


class TikhonovError(RuntimeError):
    def __init__(self, msg, u, iters, grad_norm):
        super().__init__(f"{msg} (iteration {iters}, |grad| = {grad_norm:.3e})")
        self.u = u
        self.iters = iters
        self.grad_norm = grad_norm


class LineSearchError(RuntimeError):
    pass


@dataclass(frozen=True)
class TikOptions:
    max_iters: int = 500
    grad_tol: float = 1e-8
    memory: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    max_ls: int = 40
    # a failed line search below this fraction of the initial gradient ends the run as "stalled"
    stall_tol: float = 1e-6

    def __post_init__(self):
        if self.grad_tol <= 0 or self.max_iters < 0 or self.memory < 1:
            raise ValueError("TikOptions needs grad_tol > 0, max_iters >= 0, memory >= 1")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("Wolfe constants need 0 < c1 < c2 < 1")


@dataclass
class TikResult:
    u: np.ndarray
    iters: int
    grad_norm: float
    f: float
    converged: bool
    evals: int
    status: str = "converged"
    f_trace: list = field(default_factory=list)


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic interpolating (f, f') at a and b, or None."""
    d1 = ga + gb - 3 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(disc)
    denom = gb - ga + 2 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def strong_wolfe(phi: Callable[[float], tuple[float, float]], f0: float, g0: float,
                 alpha0: float = 1.0, c1: float = 1e-4, c2: float = 0.9,
                 max_iter: int = 40, alpha_max: float = 1e10):
    """Step satisfying the strong Wolfe conditions for ``phi(a) = (f(x + a p), f'(x + a p).p)``.

    Returns ``(alpha, f(alpha), phi'(alpha))``.
    """
    if g0 >= 0:
        raise LineSearchError("search direction is not a descent direction")

    def approx_ok(fa, ga):
        # approximate Wolfe test, used once f differences drown in rounding
        return fa <= f0 and (2 * c1 - 1) * g0 >= ga >= c2 * g0 and f0 - fa <= 1e-12 * abs(f0)

    def zoom(lo, flo, glo, hi, fhi, ghi):
        for _ in range(max_iter):
            a = _cubic_min(lo, flo, glo, hi, fhi, ghi)
            left, right = min(lo, hi), max(lo, hi)
            width = right - left
            if a is None or not (left + 0.1 * width <= a <= right - 0.1 * width):
                a = 0.5 * (lo + hi)
            fa, ga = phi(a)
            if approx_ok(fa, ga):
                return a, fa, ga
            if fa > f0 + c1 * a * g0 or fa >= flo:
                hi, fhi, ghi = a, fa, ga
            else:
                if abs(ga) <= -c2 * g0:
                    return a, fa, ga
                if ga * (hi - lo) >= 0:
                    hi, fhi, ghi = lo, flo, glo
                lo, flo, glo = a, fa, ga
            if abs(hi - lo) <= 1e-16 * max(1.0, abs(lo)):
                break
        raise LineSearchError("zoom failed to find a strong-Wolfe step")

    a_prev, f_prev, g_prev = 0.0, f0, g0
    a = alpha0
    for i in range(max_iter):
        fa, ga = phi(a)
        if fa > f0 + c1 * a * g0 or (i > 0 and fa >= f_prev):
            return zoom(a_prev, f_prev, g_prev, a, fa, ga)
        if abs(ga) <= -c2 * g0:
            return a, fa, ga
        if ga >= 0:
            return zoom(a, fa, ga, a_prev, f_prev, g_prev)
        a_prev, f_prev, g_prev = a, fa, ga
        a = min(2.0 * a, alpha_max)
    raise LineSearchError("bracketing phase exceeded its iteration budget")


def lbfgs(fun: Callable[[np.ndarray], tuple[float, np.ndarray]], x0: np.ndarray,
          opts: TikOptions = TikOptions()) -> TikResult:
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    evals = 1
    S, Yk = [], []
    trace = [f]
    gn = float(np.linalg.norm(g))
    g0n = max(gn, 1.0)
    it = 0
    status = None
    while gn > opts.grad_tol and it < opts.max_iters:
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(S), reversed(Yk)):
            rho = 1.0 / (y @ s)
            a = rho * (s @ q)
            alphas.append((rho, a))
            q -= a * y
        if S:
            q *= (S[-1] @ Yk[-1]) / (Yk[-1] @ Yk[-1])
        for (s, y), (rho, a) in zip(zip(S, Yk), reversed(alphas)):
            q += (a - rho * (y @ q)) * s
        p = -q
        if p @ g >= 0:
            # lost descent (should not happen with curvature pairs); restart
            S.clear()
            Yk.clear()
            p = -g
        cache = {}

        def phi(a):
            nonlocal evals
            fa, ga = fun(x + a * p)
            evals += 1
            cache[a] = ga
            return fa, float(ga @ p)

        alpha0 = 1.0 if S else min(1.0, 1.0 / max(gn, 1e-300))
        try:
            a, f_new, _ = strong_wolfe(phi, f, float(g @ p), alpha0, opts.c1, opts.c2, opts.max_ls)
        except LineSearchError as exc:
            if gn <= opts.stall_tol * g0n:
                status = "stalled"
                break
            raise TikhonovError(str(exc), x, it, gn) from exc
        x_new = x + a * p
        g_new = cache[a]
        s, y = x_new - x, g_new - g
        if y @ s > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Yk.append(y)
            if len(S) > opts.memory:
                S.pop(0)
                Yk.pop(0)
        x, f, g = x_new, f_new, g_new
        gn = float(np.linalg.norm(g))
        trace.append(f)
        it += 1
    if status is None:
        status = "converged" if gn <= opts.grad_tol else "max_iters"
    return TikResult(x, it, gn, f, status == "converged", evals, status=status, f_trace=trace)


def tikhonov_objective(fm: ForwardModel, y: np.ndarray, u0: np.ndarray, lam: float):
    y = np.asarray(y, dtype=np.float64)
    u0 = np.asarray(u0, dtype=np.float64)

    def fun(u):
        d = u - u0
        if lam == 0:
            return 0.5 * float(d @ d), d
        states, pullback = fm.linearize(u)
        r = fm.observe(states) - y
        return 0.5 * float(d @ d) + 0.5 * lam * float(r @ r), d + lam * pullback(fm.observe_adjoint(r))

    return fun


def tikhonov_solve(fm: ForwardModel, y: np.ndarray, u0: np.ndarray, lam: float,
                   opts: TikOptions = TikOptions()) -> TikResult:
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    u0 = np.asarray(u0, dtype=np.float64)
    if u0.shape != (fm.n,) or np.shape(y) != (fm.m,):
        raise ValueError(f"tikhonov_solve expects u0 of size {fm.n} and y of size {fm.m}")
    return lbfgs(tikhonov_objective(fm, y, u0, lam), u0, opts)
