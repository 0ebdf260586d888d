"""Restore feasibility of a production plan after a capacity disruption.

Three phases: (1) wipe all production on the disrupted machines during the
outage; (2) for the at-most-one item per disrupted machine whose carry-over
into the first post-outage period was severed, either re-setup at the minimum
quantity (if the freed capacity and the remaining-demand cap allow) or cancel
that production; (3) re-propagate inventory and lost sales forward.

The repaired plan never adds production anywhere else and never touches
non-disrupted machines, so it is a minimal-change feasible plan, typically far
from optimal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    Disruption,
    FEASIBILITY_TOL,
    Instance,
    PRODUCED_EPS,
    Solution,
    big_M,
    check_feasibility,
    evaluate_cost,
)

KEPT_AT_MIN = "kept_at_min"
CANCELLED = "cancelled"


class RepairContractError(Exception):
    """The nominal input violated the repair contract (it was not feasible)."""


@dataclass
class RepairTrace:
    """What the repair changed.

    `cancelled` lists (i, j, t) productions removed (outage wipes and the
    cancel branch at the first post-outage period). `carryover_outcomes` lists
    (i, j, t1, outcome) for each severed carry-over assessed at t1 = duration
    (0-based first post-outage period). `cascaded` lists defensive carry-over
    zeroings at t1 that the assessment itself did not perform; it stays empty
    for feasible nominal inputs. `flow_changes` counts (i, t) cells whose
    inventory or lost-sales value changed during the flow recomputation.
    """

    cancelled: list[tuple[int, int, int]] = field(default_factory=list)
    carryover_outcomes: list[tuple[int, int, int, str]] = field(default_factory=list)
    flow_changes: int = 0
    cascaded: list[tuple[int, int, int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "cancelled": [list(t) for t in self.cancelled],
            "carryover_outcomes": [list(t) for t in self.carryover_outcomes],
            "flow_changes": self.flow_changes,
            "cascaded": [list(t) for t in self.cascaded],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RepairTrace":
        return cls(
            cancelled=[tuple(t) for t in data["cancelled"]],
            carryover_outcomes=[tuple(t) for t in data["carryover_outcomes"]],
            flow_changes=int(data["flow_changes"]),
            cascaded=[tuple(t) for t in data.get("cascaded", [])],
        )


def recompute_flow(inst: Instance, X: np.ndarray, I_out: np.ndarray, L_out: np.ndarray) -> None:
    """Forward-propagate inventory and lost sales for the given production X.

    Writes into I_out and L_out. For nonnegative inputs the shortfall never
    exceeds the period demand, so the min() clamp is a safeguard only.
    """
    prev = inst.I0.copy()
    produced = X.sum(axis=1)  # (N, T)
    for t in range(inst.T):
        beta = prev + produced[:, t] - inst.d[:, t]
        pos = beta >= 0
        I_out[:, t] = np.where(pos, beta, 0.0)
        L_out[:, t] = np.where(pos, 0.0, np.minimum(-beta, inst.d[:, t]))
        prev = I_out[:, t]


def repair(perturbed: Instance, nominal: Solution, dis: Disruption) -> tuple[Solution, RepairTrace]:
    """Repair `nominal` (feasible for the pre-disruption instance) on `perturbed`.

    Returns a solution that passes check_feasibility on `perturbed` plus the
    trace of changes. Raises RepairContractError if the result is infeasible,
    which can only happen when the nominal input already broke its contract.
    """
    dis.validate_for(perturbed)
    if not nominal.matches(perturbed):
        raise ValueError("nominal solution dims do not match the instance")

    N, M, T = perturbed.N, perturbed.M, perturbed.T
    dt = dis.duration
    machines = dis.machines(M)
    trace = RepairTrace()

    X = nominal.X.copy()
    Y = nominal.Y.copy()
    Z = nominal.Z.copy()

    # Phase 1: cancel everything on disrupted machines during the outage.
    for j in machines:
        for t in range(dt):
            for i in range(N):
                if Y[i, j, t] or Z[i, j, t] or X[i, j, t] > PRODUCED_EPS:
                    trace.cancelled.append((i, j, t))
                Y[i, j, t] = 0
                Z[i, j, t] = 0
                X[i, j, t] = 0.0

    # Phase 2: assess severed carry-overs into the first post-outage period t1.
    # The unique-carry-over rule means at most one item per machine qualifies.
    t_last = dt - 1   # last outage period
    t1 = dt           # first post-outage period (exists: duration < T)
    for j in machines:
        used = float(
            np.dot(perturbed.s, nominal.Y[:, j, t1]) + np.dot(perturbed.b, nominal.X[:, j, t1])
        )
        for i in range(N):
            if nominal.Z[i, j, t_last] == 1 and nominal.X[i, j, t1] > PRODUCED_EPS:
                own = (perturbed.s[i] * nominal.Y[i, j, t1]
                       + perturbed.b[i] * nominal.X[i, j, t1])
                needed = perturbed.s[i] + perturbed.b[i] * perturbed.m[i]
                available = perturbed.c[j, t1] - (used - own)
                if needed > available or perturbed.m[i] > big_M(perturbed, i, j, t1):
                    Y[i, j, t1] = 0
                    X[i, j, t1] = 0.0
                    Z[i, j, t1] = 0
                    trace.cancelled.append((i, j, t1))
                    trace.carryover_outcomes.append((i, j, t1, CANCELLED))
                else:
                    Y[i, j, t1] = 1
                    X[i, j, t1] = float(perturbed.m[i])
                    trace.carryover_outcomes.append((i, j, t1, KEPT_AT_MIN))

    # Defensive pass: a carry-over at t1 left without its setup, or whose
    # two-period minimum can no longer be met, is dropped. No-op for feasible
    # nominals (the no-consecutive-carry-over rule already rules these out).
    for j in machines:
        for i in range(N):
            if Z[i, j, t1] != 1:
                continue
            downstream = X[i, j, t1] + (X[i, j, t1 + 1] if t1 + 1 < T else 0.0)
            if Y[i, j, t1] != 1 or downstream < perturbed.m[i] - FEASIBILITY_TOL:
                Z[i, j, t1] = 0
                trace.cascaded.append((i, j, t1))

    # Phase 3: re-propagate inventory and lost sales.
    I = np.empty((N, T))
    L = np.empty((N, T))
    recompute_flow(perturbed, X, I, L)
    changed = (np.abs(I - nominal.I) > 1e-12) | (np.abs(L - nominal.L) > 1e-12)
    trace.flow_changes = int(changed.sum())

    repaired = Solution(X=X, Y=Y, Z=Z, I=I, L=L)
    report = check_feasibility(perturbed, repaired)
    if not report.feasible:
        raise RepairContractError(
            "repair produced an infeasible solution, so the nominal input "
            f"cannot have been feasible: {report.summary()}"
        )
    return repaired, trace


@dataclass(frozen=True)
class DisruptionImpact:
    cost_increase: float          # (z_r - z_0) / z_0
    setup_change_count: int       # |{(i,j,t): Y_r != Y_0}|
    setup_change_relative: float  # count / number of setups in the nominal

    def to_dict(self) -> dict:
        return {
            "cost_increase": self.cost_increase,
            "setup_change_count": self.setup_change_count,
            "setup_change_relative": self.setup_change_relative,
        }


def disruption_impact(nominal: Solution, repaired: Solution,
                      inst_perturbed: Instance) -> DisruptionImpact:
    """Cost and setup-stability deterioration of the repaired plan vs. the nominal.

    Cost parameters are identical before and after a disruption (only capacity
    changes), so both plans are priced on the perturbed instance.
    """
    if nominal.dims != repaired.dims:
        raise ValueError("solutions have mismatched shapes")
    z0 = evaluate_cost(inst_perturbed, nominal).total
    zr = evaluate_cost(inst_perturbed, repaired).total
    if z0 == 0.0:
        raise ValueError("nominal cost is zero; relative cost increase is undefined")
    count = int(np.sum(nominal.Y != repaired.Y))
    nominal_setups = int(nominal.Y.sum())
    relative = count / nominal_setups if nominal_setups else 0.0
    return DisruptionImpact(
        cost_increase=(zr - z0) / z0,
        setup_change_count=count,
        setup_change_relative=relative,
    )
