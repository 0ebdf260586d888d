"""Core lot-sizing domain: instances, solutions, disruptions, generation, costs, feasibility.

The problem: N items produced on M machines over T periods. Producing item i on
machine j in period t requires a setup (time s[i], cost f[i]) unless the setup
is carried over from period t-1 (at most one carry-over per machine and period,
never two in a row for the same item/machine). Production consumes b[i] time
units per unit within machine capacity c[j][t]; each setup produces at least
m[i] units unless covered by a carry-over pair. Unmet demand is lost at cost
l[i][t] per unit, leftover stock costs h[i] per unit and period.

Arrays are numpy, 0-indexed, laid out X/Y/Z as (N, M, T) and I/L as (N, T).
All values are treated as immutable after construction (arrays are marked
read-only), so everything here is safe to share across threads or processes.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from .rng import Stream

FEASIBILITY_TOL = 1e-6
PRODUCED_EPS = 1e-9  # strict-positivity threshold for "is anything produced"


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


class DisruptionKind(str, Enum):
    MACHINE_BREAKDOWN = "machine_breakdown"
    PLANT_SHUTDOWN = "plant_shutdown"


@dataclass(frozen=True)
class Disruption:
    """A capacity disruption starting at the first period and lasting `duration` periods."""

    kind: DisruptionKind
    duration: int
    machine: int | None = None  # required for machine breakdowns, 0-based

    def __post_init__(self):
        object.__setattr__(self, "kind", DisruptionKind(self.kind))
        if self.duration < 1:
            raise ValueError(f"disruption duration must be >= 1, got {self.duration}")
        if self.kind is DisruptionKind.MACHINE_BREAKDOWN and self.machine is None:
            raise ValueError("machine breakdown requires a machine index")

    def validate_for(self, inst: "Instance") -> None:
        if not (1 <= self.duration < inst.T):
            raise ValueError(
                f"duration must satisfy 1 <= dt < T={inst.T}, got {self.duration}"
            )
        if self.kind is DisruptionKind.MACHINE_BREAKDOWN:
            if not (0 <= self.machine < inst.M):
                raise ValueError(f"machine index {self.machine} out of range [0, {inst.M})")

    def machines(self, M: int) -> list[int]:
        """The 0-based indices of the machines this disruption takes offline."""
        if self.kind is DisruptionKind.PLANT_SHUTDOWN:
            return list(range(M))
        return [int(self.machine)]

    def to_dict(self) -> dict:
        out = {"kind": self.kind.value, "duration": int(self.duration)}
        if self.machine is not None:
            out["machine"] = int(self.machine)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Disruption":
        return cls(
            kind=DisruptionKind(data["kind"]),
            duration=int(data["duration"]),
            machine=int(data["machine"]) if data.get("machine") is not None else None,
        )


@dataclass(frozen=True)
class Instance:
    """All parameters of one lot-sizing instance. Immutable after construction."""

    M: int
    N: int
    T: int
    f: np.ndarray  # (N,) setup cost
    p: np.ndarray  # (N,) unit production cost
    h: np.ndarray  # (N,) unit inventory cost
    s: np.ndarray  # (N,) setup time
    b: np.ndarray  # (N,) unit production time, > 0
    m: np.ndarray  # (N,) minimum per-setup quantity
    l: np.ndarray  # (N, T) unit lost-sale cost
    I0: np.ndarray  # (N,) initial inventory
    d: np.ndarray  # (N, T) demand
    c: np.ndarray  # (M, T) machine time capacity
    w: np.ndarray  # (N, M) compatibility flags in {0, 1}

    def __post_init__(self):
        if min(self.M, self.N, self.T) < 1:
            raise ValueError("all dimensions must be >= 1")
        for name, shape, dtype in (
            ("f", (self.N,), float), ("p", (self.N,), float), ("h", (self.N,), float),
            ("s", (self.N,), float), ("b", (self.N,), float), ("m", (self.N,), float),
            ("l", (self.N, self.T), float), ("I0", (self.N,), float),
            ("d", (self.N, self.T), float), ("c", (self.M, self.T), float),
            ("w", (self.N, self.M), np.int8),
        ):
            arr = np.asarray(getattr(self, name), dtype=dtype)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            object.__setattr__(self, name, _readonly(arr))
        for name in ("f", "p", "h", "s", "m", "l", "I0", "d", "c"):
            if np.any(getattr(self, name) < 0):
                raise ValueError(f"{name} must be nonnegative")
        if np.any(self.b <= 0):
            raise ValueError("unit production times b must be strictly positive")
        if not np.isin(self.w, (0, 1)).all():
            raise ValueError("compatibility flags w must be binary")

    def to_dict(self) -> dict:
        return {
            "M": self.M, "N": self.N, "T": self.T,
            "f": self.f.tolist(), "p": self.p.tolist(), "h": self.h.tolist(),
            "s": self.s.tolist(), "b": self.b.tolist(), "m": self.m.tolist(),
            "l": self.l.tolist(), "I0": self.I0.tolist(), "d": self.d.tolist(),
            "c": self.c.tolist(), "w": self.w.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Instance":
        return cls(
            M=int(data["M"]), N=int(data["N"]), T=int(data["T"]),
            f=np.array(data["f"]), p=np.array(data["p"]), h=np.array(data["h"]),
            s=np.array(data["s"]), b=np.array(data["b"]), m=np.array(data["m"]),
            l=np.array(data["l"]), I0=np.array(data["I0"]), d=np.array(data["d"]),
            c=np.array(data["c"]), w=np.array(data["w"]),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Solution:
    """A value assignment for all decision variables of one instance."""

    X: np.ndarray  # (N, M, T) produced quantity >= 0
    Y: np.ndarray  # (N, M, T) setup flags in {0, 1}
    Z: np.ndarray  # (N, M, T) carry-over flags in {0, 1}; entry t means "carried into t+1"
    I: np.ndarray  # (N, T) end-of-period inventory >= 0
    L: np.ndarray  # (N, T) lost sales >= 0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 3:
            raise ValueError("X must be a (N, M, T) array")
        N, M, T = X.shape
        for name, dtype, shape in (
            ("X", float, (N, M, T)), ("Y", np.int8, (N, M, T)), ("Z", np.int8, (N, M, T)),
            ("I", float, (N, T)), ("L", float, (N, T)),
        ):
            arr = np.asarray(getattr(self, name), dtype=dtype)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            object.__setattr__(self, name, _readonly(arr))

    @property
    def dims(self) -> tuple[int, int, int]:
        """(N, M, T)."""
        return self.X.shape

    @classmethod
    def zeros(cls, inst: Instance) -> "Solution":
        """The do-nothing plan: no setups, no production, all demand lost."""
        shape3 = (inst.N, inst.M, inst.T)
        # with production zero the flow recursion gives I_t = max(I_{t-1} - d_t, 0)
        I = np.empty((inst.N, inst.T))
        L = np.empty((inst.N, inst.T))
        prev = inst.I0.copy()
        for t in range(inst.T):
            beta = prev - inst.d[:, t]
            I[:, t] = np.maximum(beta, 0.0)
            L[:, t] = np.minimum(np.maximum(-beta, 0.0), inst.d[:, t])
            prev = I[:, t]
        return cls(
            X=np.zeros(shape3), Y=np.zeros(shape3, dtype=np.int8),
            Z=np.zeros(shape3, dtype=np.int8), I=I, L=L,
        )

    def matches(self, inst: Instance) -> bool:
        return self.dims == (inst.N, inst.M, inst.T)

    def to_dict(self) -> dict:
        return {
            "X": self.X.tolist(), "Y": self.Y.tolist(), "Z": self.Z.tolist(),
            "I": self.I.tolist(), "L": self.L.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Solution":
        return cls(
            X=np.array(data["X"]), Y=np.array(data["Y"]), Z=np.array(data["Z"]),
            I=np.array(data["I"]), L=np.array(data["L"]),
        )


@dataclass(frozen=True)
class CostBreakdown:
    setup_cost: float
    production_cost: float
    inventory_cost: float
    lost_sales_cost: float
    total: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------

# Item priority categories: capacity share of total demand, inventory cost range,
# lost-sales cost schedule (start range decaying linearly to end range), and the
# fraction-of-N occupied (floor'd; the third category takes the remainder).
@dataclass(frozen=True)
class CategorySpec:
    name: str
    share_lo: float
    share_hi: float
    inv_lo: float
    inv_hi: float
    ls_start_lo: float
    ls_start_hi: float
    ls_end_lo: float
    ls_end_hi: float
    count_frac_lo: float
    count_frac_hi: float


DEFAULT_CATEGORIES = (
    CategorySpec("high", 0.40, 0.50, 0.05, 0.15, 5.0, 9.0, 0.1, 0.2, 0.20, 0.27),
    CategorySpec("medium", 0.40, 0.50, 0.20, 0.30, 0.9, 1.1, 0.1, 0.2, 0.30, 0.37),
    CategorySpec("low", 0.20, 0.30, 0.05, 0.35, 0.9, 1.1, 0.1, 0.2, 0.0, 0.0),
)

_REQUIRED_SHARES = ((0.40, 0.50), (0.40, 0.50), (0.20, 0.30))


@dataclass(frozen=True)
class GenerationSpec:
    """What to generate: dimensions, capacities, and item-category structure.

    `set_id` 1 keeps every machine compatible with every item; `set_id` 2 makes
    each item incompatible with exactly one machine. Capacity is one value per
    instance, shared by all machines and periods.
    """

    set_id: int = 1
    machine_choices: tuple[int, ...] = (3,)
    item_choices: tuple[int, ...] = (30,)
    period_choices: tuple[int, ...] = (30,)
    capacity_choices: tuple[float, ...] = (3000.0, 3500.0, 4000.0)
    categories: tuple[CategorySpec, ...] = DEFAULT_CATEGORIES
    setup_time_frac: tuple[float, float] = (0.10, 0.20)
    setup_cost_frac: float = 0.10
    min_prod_frac: tuple[float, float] = (0.60, 1.40)
    demand_weight_range: tuple[float, float] = (0.5, 1.5)
    seed: int = 0

    def __post_init__(self):
        if self.set_id not in (1, 2):
            raise ValueError(f"set_id must be 1 or 2, got {self.set_id}")
        for name in ("machine_choices", "item_choices", "period_choices", "capacity_choices"):
            values = tuple(getattr(self, name))
            object.__setattr__(self, name, values)
            if not values:
                raise ValueError(f"{name} must not be empty")
            if min(values) < 1:
                raise ValueError(f"{name} entries must be >= 1")
        cats = tuple(self.categories)
        object.__setattr__(self, "categories", cats)
        if len(cats) != 3:
            raise ValueError("exactly three item categories are required")
        shares = tuple((c.share_lo, c.share_hi) for c in cats)
        if shares != _REQUIRED_SHARES:
            raise ValueError(
                f"category capacity shares must be {_REQUIRED_SHARES}, got {shares}"
            )

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["categories"] = [dataclasses.asdict(c) for c in self.categories]
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "GenerationSpec":
        data = dict(data)
        if "categories" in data:
            data["categories"] = tuple(CategorySpec(**c) for c in data["categories"])
        for key in ("machine_choices", "item_choices", "period_choices",
                    "capacity_choices", "setup_time_frac", "min_prod_frac",
                    "demand_weight_range"):
            if key in data:
                data[key] = tuple(data[key])
        return cls(**data)

    @classmethod
    def from_json_file(cls, path) -> "GenerationSpec":
        with open(path, "rt", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def for_set(cls, set_id: int, **overrides) -> "GenerationSpec":
        """Default specs for the two benchmark families."""
        if set_id == 1:
            base = dict(set_id=1, machine_choices=(3,), item_choices=(30,),
                        period_choices=(30,))
        elif set_id == 2:
            base = dict(set_id=2, machine_choices=(2, 3, 4), item_choices=(30, 35, 40),
                        period_choices=(30,))
        else:
            raise ValueError(f"set_id must be 1 or 2, got {set_id}")
        base.update(overrides)
        return cls(**base)


def category_counts(spec: GenerationSpec, N: int, rng: Stream) -> list[int]:
    """Items per category: first two take floor(frac * N), the third the rest."""
    first = int(rng.uniform(*_frac(spec.categories[0])) * N)
    second = int(rng.uniform(*_frac(spec.categories[1])) * N)
    return [first, second, N - first - second]


def _frac(cat: CategorySpec) -> tuple[float, float]:
    return (cat.count_frac_lo, cat.count_frac_hi)


def generate_instance(spec: GenerationSpec, seed: int) -> Instance:
    """Deterministically generate one instance from (spec, seed).

    Every field draws from its own named stream, so the result does not depend
    on evaluation order. Items are laid out category-by-category: the first
    `high` count of items, then `medium`, then `low`.
    """
    dims = Stream(seed, "dims")
    M = dims.choice(spec.machine_choices)
    N = dims.choice(spec.item_choices)
    T = dims.choice(spec.period_choices)

    cap_value = float(Stream(seed, "capacity").choice(spec.capacity_choices))
    c = np.full((M, T), cap_value)

    counts = category_counts(spec, N, Stream(seed, "categories"))
    cat_of = np.repeat(np.arange(3), counts)

    weights_rng = Stream(seed, "demand_weights")
    weights = np.array([weights_rng.uniform(*spec.demand_weight_range) for _ in range(N)])

    d = np.zeros((N, T))
    total_cap = cap_value * M
    for g, cat in enumerate(spec.categories):
        members = np.flatnonzero(cat_of == g)
        if members.size == 0:
            continue
        share_rng = Stream(seed, "demand_share", g)
        wsum = weights[members].sum()
        for t in range(T):
            group_total = share_rng.uniform(cat.share_lo, cat.share_hi) * total_cap
            d[members, t] = group_total * weights[members] / wsum

    inv_rng = Stream(seed, "inventory_cost")
    h = np.array([inv_rng.uniform(spec.categories[g].inv_lo, spec.categories[g].inv_hi)
                  for g in cat_of])

    ls_rng = Stream(seed, "lost_sales")
    l = np.zeros((N, T))
    ramp = np.linspace(0.0, 1.0, T) if T > 1 else np.zeros(1)
    for i in range(N):
        cat = spec.categories[cat_of[i]]
        start = ls_rng.uniform(cat.ls_start_lo, cat.ls_start_hi)
        end = ls_rng.uniform(cat.ls_end_lo, cat.ls_end_hi)
        l[i] = start + (end - start) * ramp

    st_rng = Stream(seed, "setup_time")
    s = np.array([st_rng.uniform(*spec.setup_time_frac) * cap_value for _ in range(N)])
    f = spec.setup_cost_frac * s

    mp_rng = Stream(seed, "min_production")
    m = np.array([mp_rng.uniform(*spec.min_prod_frac) * d[i].mean() for i in range(N)])

    w = np.ones((N, M), dtype=np.int8)
    if spec.set_id == 2:
        compat_rng = Stream(seed, "compatibility")
        for i in range(N):
            w[i, compat_rng.randint(0, M - 1)] = 0

    return Instance(
        M=M, N=N, T=T,
        f=f, p=np.zeros(N), h=h, s=s, b=np.ones(N), m=m,
        l=l, I0=np.zeros(N), d=d, c=c, w=w,
    )


# ---------------------------------------------------------------------------
# Disruption application, costs, production bounds
# ---------------------------------------------------------------------------


def apply_disruption(inst: Instance, dis: Disruption) -> Instance:
    """A copy of `inst` with the disrupted machines' capacity zeroed for t < duration."""
    dis.validate_for(inst)
    c = inst.c.copy()
    for j in dis.machines(inst.M):
        c[j, : dis.duration] = 0.0
    return dataclasses.replace(inst, c=c)


def evaluate_cost(inst: Instance, sol: Solution) -> CostBreakdown:
    """Setup + production + inventory + lost-sales cost of `sol` on `inst`."""
    if not sol.matches(inst):
        raise ValueError(f"solution dims {sol.dims} do not match instance "
                         f"({inst.N}, {inst.M}, {inst.T})")
    setup = float(np.einsum("i,ijt->", inst.f, sol.Y.astype(float)))
    production = float(np.einsum("i,ijt->", inst.p, sol.X))
    inventory = float(np.einsum("i,it->", inst.h, sol.I))
    lost = float(np.einsum("it,it->", inst.l, sol.L))
    return CostBreakdown(
        setup_cost=setup, production_cost=production,
        inventory_cost=inventory, lost_sales_cost=lost,
        total=setup + production + inventory + lost,
    )


def big_M(inst: Instance, i: int, j: int, t: int) -> float:
    """Upper production bound for (i, j, t): remaining demand vs. capacity after setup,
    clamped at zero (capacity may be zero in disrupted periods)."""
    tail = float(inst.d[i, t:].sum())
    cap = (inst.c[j, t] - inst.s[i]) / inst.b[i]
    return max(0.0, min(tail, cap))


def big_M_array(inst: Instance) -> np.ndarray:
    """big_M for all (i, j, t) at once, shape (N, M, T)."""
    tail = np.cumsum(inst.d[:, ::-1], axis=1)[:, ::-1]  # (N, T)
    cap = (inst.c[None, :, :] - inst.s[:, None, None]) / inst.b[:, None, None]  # (N, M, T)
    return np.maximum(0.0, np.minimum(tail[:, None, :], cap))


# ---------------------------------------------------------------------------
# Feasibility checking
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    family: str
    index: tuple
    amount: float  # by how much the constraint is exceeded (already beyond tol)

    def __str__(self):
        return f"{self.family}{self.index}: violated by {self.amount:.3e}"


@dataclass
class FeasibilityReport:
    violations: list[Violation]
    tol: float

    @property
    def feasible(self) -> bool:
        return not self.violations

    def families(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for v in self.violations:
            out[v.family] = out.get(v.family, 0) + 1
        return out

    def summary(self) -> str:
        if self.feasible:
            return "feasible"
        parts = ", ".join(f"{k}: {n}" for k, n in sorted(self.families().items()))
        return f"{len(self.violations)} violations ({parts})"


def _collect(out: list[Violation], family: str, excess: np.ndarray, tol: float,
             prefix: tuple = ()) -> None:
    mask = excess > tol
    for idx in np.argwhere(mask):
        out.append(Violation(family, prefix + tuple(int(v) for v in idx),
                             float(excess[tuple(idx)])))


def check_feasibility(inst: Instance, sol: Solution, tol: float = FEASIBILITY_TOL) -> FeasibilityReport:
    """Check every constraint family; returns the full list of violations.

    Families: balance, lost_sales_bound, capacity, compatibility, carryover_setup,
    consecutive_carryover, production_activation, min_production,
    min_production_carryover, unique_carryover, carryover_horizon_end,
    binary_domain, nonnegative.
    """
    if tol < 0:
        raise ValueError("tol must be >= 0")
    if not sol.matches(inst):
        raise ValueError(f"solution dims {sol.dims} do not match instance "
                         f"({inst.N}, {inst.M}, {inst.T})")
    N, M, T = inst.N, inst.M, inst.T
    X, I, L = sol.X, sol.I, sol.L
    Y = sol.Y.astype(float)
    Z = sol.Z.astype(float)
    Zprev = np.concatenate([np.zeros((N, M, 1)), Z[:, :, :-1]], axis=2)
    Iprev = np.concatenate([inst.I0[:, None], I[:, :-1]], axis=1)

    out: list[Violation] = []

    balance = Iprev + X.sum(axis=1) + L - inst.d - I
    _collect(out, "balance", np.abs(balance), tol)
    _collect(out, "lost_sales_bound", L - inst.d, tol)

    load = np.einsum("i,ijt->jt", inst.s, Y) + np.einsum("i,ijt->jt", inst.b, X)
    _collect(out, "capacity", load - inst.c, tol)

    _collect(out, "compatibility", Y - inst.w[:, :, None], tol)
    _collect(out, "carryover_setup", Z - Y, tol)
    _collect(out, "consecutive_carryover", Zprev + Z - 1.0, tol)

    bigm = big_M_array(inst)
    _collect(out, "production_activation", X - bigm * (Y + Zprev), tol)
    _collect(out, "min_production", inst.m[:, None, None] * (Y - Z) - X, tol)
    if T > 1:
        mpc = inst.m[:, None, None] * Z[:, :, :-1] - X[:, :, :-1] - X[:, :, 1:]
        _collect(out, "min_production_carryover", mpc, tol)
    _collect(out, "unique_carryover", Z.sum(axis=0) - 1.0, tol)
    _collect(out, "carryover_horizon_end", Z[:, :, T - 1], tol)

    for name, arr in (("Y", Y), ("Z", Z)):
        dist = np.minimum(np.abs(arr), np.abs(arr - 1.0))
        mask = dist > tol
        for idx in np.argwhere(mask):
            out.append(Violation("binary_domain", (name,) + tuple(int(v) for v in idx),
                                 float(dist[tuple(idx)])))
    for name, arr in (("X", X), ("I", I), ("L", L)):
        mask = arr < -tol
        for idx in np.argwhere(mask):
            out.append(Violation("nonnegative", (name,) + tuple(int(v) for v in idx),
                                 float(-arr[tuple(idx)])))

    return FeasibilityReport(violations=out, tol=tol)
