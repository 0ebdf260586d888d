"""Constructive feasible plans: a cheap greedy used to warm-start the nominal
solve and to manufacture production-rich feasible solutions in tests."""

from __future__ import annotations

import numpy as np

from .core import Instance, Solution, big_M_array
from .repair import recompute_flow


def greedy_plan(inst: Instance, carryovers: bool = True) -> Solution:
    """A feasible plan that serves each period's demand greedily.

    Items are served in descending lost-sale-cost order on the compatible
    machine with the most room; quantities respect the per-setup minimum and
    the activation cap. With `carryovers`, eligible back-to-back productions
    are additionally linked by a carry-over (every second one also drops the
    now-redundant setup), which exercises the full constraint surface.
    """
    N, M, T = inst.N, inst.M, inst.T
    bigm = big_M_array(inst)
    X = np.zeros((N, M, T))
    Y = np.zeros((N, M, T), dtype=np.int8)
    Z = np.zeros((N, M, T), dtype=np.int8)
    load = np.zeros((M, T))

    for t in range(T):
        for i in sorted(range(N), key=lambda i: (-inst.l[i, t], i)):
            need = inst.d[i, t]
            if need <= 0:
                continue
            machines = [j for j in range(M) if inst.w[i, j]]
            if not machines:
                continue
            j = max(machines, key=lambda j: (inst.c[j, t] - load[j, t], -j))
            q = min(need, bigm[i, j, t])
            if q < inst.m[i]:
                q = inst.m[i]
            if q <= 0 or q > bigm[i, j, t]:
                continue
            if load[j, t] + inst.s[i] + inst.b[i] * q > inst.c[j, t]:
                continue
            Y[i, j, t] = 1
            X[i, j, t] = q
            load[j, t] += inst.s[i] + inst.b[i] * q

    if carryovers:
        drop_toggle = True
        for j in range(M):
            for t in range(T - 1):
                if Z[:, j, t].any():
                    continue
                for i in range(N):
                    prev = Z[i, j, t - 1] if t > 0 else 0
                    if (Y[i, j, t] == 1 and Y[i, j, t + 1] == 1 and prev == 0
                            and Z[i, j, t + 1] == 0
                            and X[i, j, t] + X[i, j, t + 1] >= inst.m[i]):
                        Z[i, j, t] = 1
                        if drop_toggle:
                            # the carry-over makes the second setup redundant
                            Y[i, j, t + 1] = 0
                            load[j, t + 1] -= inst.s[i]
                        drop_toggle = not drop_toggle
                        break

    I = np.empty((N, T))
    L = np.empty((N, T))
    recompute_flow(inst, X, I, L)
    return Solution(X=X, Y=Y, Z=Z, I=I, L=L)
