"""Seeded linear-analysis property suite.

Every check returns rows ``{"check", "problem", "value", "tol", "pass"}``;
``run_suite`` concatenates them.
"""

from __future__ import annotations

import numpy as np

from mcae.linear_analysis import (APPROACHES, PREDICTABLE, LinearProblem, data_scale, expected_test_error,
                                  empirical_inverse_errors, fit, fit_mcopo, fit_npop, fit_taen,
                                  simultaneous_residual, stationarity, tikhonov_linear)
from mcae.random_fields import randomize


def _row(check, k, value, tol):
    return {"check": check, "problem": k, "value": float(value), "tol": float(tol), "pass": bool(value <= tol)}


def random_problem(rng: np.random.Generator, n: int, m: int, nt: int, lam: float,
                   noise: float = 0.0, p: int | None = None) -> LinearProblem:
    """Gaussian forward map and training data ``Y = GB U (+ noise)``, ``u0`` random."""
    GB = rng.standard_normal((m, n)) / np.sqrt(n)
    G_full = rng.standard_normal((p or n + 2, n)) / np.sqrt(n)
    U = rng.standard_normal((n, nt))
    Y = GB @ U + noise * rng.standard_normal((m, nt))
    return LinearProblem(GB, U, Y, u0=0.3 * rng.standard_normal(n), lam=lam, G_full=G_full)


def single_sample_problem(rng: np.random.Generator, n: int, m: int, nt: int, lam: float,
                          epsilon: float = 0.1) -> LinearProblem:
    """One observation replicated ``nt`` times and randomized (``Ybar`` full row rank w.p. 1)."""
    GB = rng.standard_normal((m, n)) / np.sqrt(n)
    u = rng.standard_normal(n)
    y = GB @ u
    Y = randomize(np.repeat(y[:, None], nt, axis=1), epsilon, rng)
    return LinearProblem(GB, np.repeat(u[:, None], nt, axis=1), Y, u0=0.3 * rng.standard_normal(n),
                         lam=lam, G_full=rng.standard_normal((n + 2, n)) / np.sqrt(n))


def _lam(rng):
    return float(10 ** rng.uniform(-1, 1))


def check_stationarity(seed: int = 0, problems: int = 20) -> list:
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(problems):
        n, m, nt = int(rng.integers(2, 9)), int(rng.integers(1, 7)), int(rng.integers(2, 13))
        prob = random_problem(rng, n, m, nt, _lam(rng), noise=0.1)
        tol = 1e-8 * (1 + data_scale(prob))
        for a in APPROACHES:
            enc, dec = fit(a, prob)
            st = stationarity(a, prob, enc, dec)
            rows.append(_row(f"stationarity/{a}", k, max(st.values()), tol))
    return rows


def check_tikhonov_equivalence(seed: int = 1, problems: int = 20) -> list:
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(problems):
        n, m = int(rng.integers(2, 9)), int(rng.integers(1, 7))
        prob = single_sample_problem(rng, n, m, m + 1 + int(rng.integers(1, 6)), _lam(rng))
        enc, _ = fit_taen(prob)
        yt = rng.standard_normal((m, 10))
        ref = tikhonov_linear(prob.GB, yt, prob.u0, prob.lam)
        rel = np.linalg.norm(enc(yt) - ref) / np.linalg.norm(ref)
        rows.append(_row("tikhonov_equivalence", k, rel, 1e-10))
    return rows


def check_pto_recovery(seed: int = 2, problems: int = 20) -> list:
    """Decoder equals the PtO map; needs ``Zbar`` full row rank, i.e. ``n <= m``."""
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(problems):
        n = int(rng.integers(2, 6))
        m = n + int(rng.integers(0, 3))
        prob = single_sample_problem(rng, n, m, m + 3, _lam(rng))
        ut = rng.standard_normal((n, 10))
        for name, full, fitter in (("mcOPO", False, fit_mcopo), ("mcOPO-Full", True, fit_mcopo),
                                   ("TAEN", False, fit_taen), ("TAEN-Full", True, fit_taen)):
            _, dec = fitter(prob, full)
            M = prob.target(full)
            ref = M @ ut
            err = np.max(np.linalg.norm(dec(ut) - ref, axis=0) / np.linalg.norm(ref, axis=0))
            rows.append(_row(f"pto_recovery/{name}", k, err, 1e-8))
    return rows


def check_error_formulas(seed: int = 3, n_test: int = 1000) -> list:
    """Mean empirical squared inverse error vs its analytic expectation, in MC standard errors."""
    rng = np.random.default_rng(seed)
    n, m, nt = 6, 4, 8
    prob = random_problem(rng, n, m, nt, lam=2.0)
    mu = 0.5 * rng.standard_normal(n)
    ut = mu[:, None] + rng.standard_normal((n, n_test))
    yt = prob.GB @ ut
    rows = []
    for a in PREDICTABLE:
        emp = empirical_inverse_errors(a, prob, ut, yt)
        se = emp.std(ddof=1) / np.sqrt(n_test)
        z = abs(emp.mean() - expected_test_error(a, prob, mu)) / se
        rows.append(_row(f"error_formula/{a}", 0, z, 3.0))
    return rows


def check_simultaneous(seed: int = 4, problems: int = 20, beta: float = 1.0) -> list:
    """Sequential nPOP optimum is stationary for the joint loss when ``rank Ybar = rank Ubar``."""
    rng = np.random.default_rng(seed)
    rows = []
    for k in range(problems):
        n, m = int(rng.integers(2, 9)), int(rng.integers(1, 7))
        nt = int(rng.integers(2, min(n, m) + 2))
        prob = random_problem(rng, n, m, nt, lam=0.0, noise=0.1)
        enc, dec = fit_npop(prob)
        res = simultaneous_residual(enc, dec, prob, beta)
        rows.append(_row("simultaneous/nPOP", k, max(res.values()), 1e-8 * (1 + data_scale(prob))))
    return rows


def check_iterative_taen(seed: int = 5, problems: int = 1, schedule=((1e-2, 10000), (1e-3, 10000), (1e-4, 5000))) -> list:
    """Identity-activation nets trained by ADAM against the closed-form TAEN encoder.

    Held-out inputs are fresh randomizations of the training observation, the
    distribution the encoder was fitted on.
    """
    from mcae.forward_models.base import linear_surrogate
    from mcae.random_fields import make_rng
    from mcae.training import TrainData, TrainSpec, init_net, train_phase

    rng = np.random.default_rng(seed)
    rows = []
    for k in range(problems):
        prob = single_sample_problem(rng, 4, 3, 8, lam=1.0)
        fm = linear_surrogate(prob.GB)
        ref_enc, _ = fit_taen(prob)
        yt = randomize(np.repeat(prob.Y.mean(axis=1)[:, None], 50, axis=1), 0.1, rng)
        net = init_net(3, 8, 4, make_rng(seed + k, 1), 0.1, "identity")
        data = TrainData(prob.U, prob.Y, prob.u0)
        for lr, epochs in schedule:
            spec = TrainSpec("TAEN", "encoder", lam=prob.lam, epochs=epochs, lr=lr, hidden=8,
                             activation="identity")
            train_phase(spec, net, None, data, fm)
        ref = ref_enc(yt)
        rows.append(_row("iterative/TAEN", k, np.linalg.norm(net(yt) - ref) / np.linalg.norm(ref), 1e-3))
    return rows


CHECKS = {
    "stationarity": check_stationarity,
    "tikhonov_equivalence": check_tikhonov_equivalence,
    "pto_recovery": check_pto_recovery,
    "error_formula": check_error_formulas,
    "simultaneous": check_simultaneous,
    "iterative": check_iterative_taen,
}


def run_suite(seed: int = 0, problems: int = 20) -> list:
    rows = []
    for i, (name, fn) in enumerate(CHECKS.items()):
        if name in ("error_formula", "iterative"):
            rows += fn(seed + i)
        else:
            rows += fn(seed + i, problems)
    return rows
