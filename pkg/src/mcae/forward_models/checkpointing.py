"""Reverse sweeps over a time-stepping scheme with bounded state storage.

``reverse_sweep`` runs the adjoint of ``steps`` applications of ``advance``.
When ``steps <= store_all`` every state is kept; otherwise a recursive binomial
schedule holds at most ``snapshots + 1`` states and recomputes the rest.
"""

from __future__ import annotations

from math import comb
from typing import Callable, TypeVar

S = TypeVar("S")
C = TypeVar("C")


def binomial_capacity(snapshots: int, reps: int) -> int:
    return comb(snapshots + reps, reps)


def binomial_split(n: int, snapshots: int) -> int:
    """First checkpoint offset for reversing ``n`` steps with ``snapshots`` free slots."""
    if n < 2:
        return 1
    t = 0
    while binomial_capacity(snapshots, t) < n:
        t += 1
    m = n - binomial_capacity(snapshots - 1, t - 1) if snapshots > 1 else n - 1
    return min(max(1, m), n - 1)


def reverse_sweep(x0: S, steps: int, advance: Callable[[S], S],
                  step_adjoint: Callable[[S, C], C], cot_final: C,
                  store_all: int = 256, snapshots: int = 16,
                  stats: dict | None = None) -> C:
    """Cotangent of the initial state given the cotangent of the final state.

    ``step_adjoint(x_i, g_{i+1})`` must return ``g_i`` for the step that maps
    ``x_i`` to ``x_{i+1}``.
    """
    counter = {"advance": 0, "max_held": 0}

    def adv(x):
        counter["advance"] += 1
        return advance(x)

    if steps <= store_all:
        traj = [x0]
        for _ in range(steps - 1):
            traj.append(adv(traj[-1]))
        counter["max_held"] = len(traj)
        g = cot_final
        for i in range(steps - 1, -1, -1):
            g = step_adjoint(traj[i], g)
        if stats is not None:
            stats.update(counter)
        return g

    def rec(x, n, s, g, held):
        counter["max_held"] = max(counter["max_held"], held)
        if n == 1:
            return step_adjoint(x, g)
        if s == 0:
            for i in range(n - 1, -1, -1):
                xi = x
                for _ in range(i):
                    xi = adv(xi)
                g = step_adjoint(xi, g)
            return g
        m = binomial_split(n, s)
        xm = x
        for _ in range(m):
            xm = adv(xm)
        g = rec(xm, n - m, s - 1, g, held + 1)
        return rec(x, m, s, g, held)

    g = rec(x0, steps, snapshots, cot_final, 1)
    if stats is not None:
        stats.update(counter)
    return g
