"""Linear model layer: build the lot-sizing MILP, neighborhood and hard-fixing
variants, MPS text export/import, and mapping between assignments and solutions.

Models are plain data (variables, objective, constraint rows) with deterministic
ordering, so exports diff cleanly and solves reproduce exactly. The builders
return new models; a built model is never mutated.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .core import Instance, Solution, big_M_array

BINARY_SNAP_TOL = 1e-6

LEQ, EQ, GEQ = "<=", "=", ">="


class VarKey(NamedTuple):
    kind: str          # one of X, Y, Z, I, L
    idx: tuple[int, ...]  # (i, j, t) for X/Y/Z, (i, t) for I/L

    def name(self) -> str:
        return self.kind + "_" + "_".join(f"{v:03d}" for v in self.idx)


def xk(i, j, t): return VarKey("X", (i, j, t))
def yk(i, j, t): return VarKey("Y", (i, j, t))
def zk(i, j, t): return VarKey("Z", (i, j, t))
def ik(i, t): return VarKey("I", (i, t))
def lk(i, t): return VarKey("L", (i, t))


_NAME_RE = re.compile(r"^([XYZIL])((?:_\d+)+)$")


def parse_var_name(name: str) -> VarKey:
    m = _NAME_RE.match(name)
    if not m:
        raise ValueError(f"unrecognized variable name: {name!r}")
    kind = m.group(1)
    idx = tuple(int(part) for part in m.group(2).split("_")[1:])
    expected = 3 if kind in ("X", "Y", "Z") else 2
    if len(idx) != expected:
        raise ValueError(f"variable {name!r}: expected {expected} indices, got {len(idx)}")
    return VarKey(kind, idx)


@dataclass(frozen=True)
class Variable:
    key: VarKey
    lower: float
    upper: float
    is_binary: bool


@dataclass(frozen=True)
class Constraint:
    name: str
    coeffs: tuple[tuple[VarKey, float], ...]  # deterministic order
    sense: str  # "<=", "=", ">="
    rhs: float


@dataclass
class MilpModel:
    name: str
    variables: list[Variable]
    objective: dict[VarKey, float]
    constraints: list[Constraint]
    annotations: dict = field(default_factory=dict)

    def __post_init__(self):
        self._index: dict[VarKey, int] = {v.key: k for k, v in enumerate(self.variables)}
        if len(self._index) != len(self.variables):
            raise ValueError("duplicate variable keys")
        declared = set(self._index)
        for con in self.constraints:
            for key, _ in con.coeffs:
                if key not in declared:
                    raise ValueError(f"constraint {con.name} references undeclared {key}")
        for key in self.objective:
            if key not in declared:
                raise ValueError(f"objective references undeclared {key}")
        for v in self.variables:
            if v.is_binary and not (v.lower >= 0.0 and v.upper <= 1.0):
                raise ValueError(f"binary variable {v.key} must have bounds within [0, 1]")
            if v.lower > v.upper:
                raise ValueError(f"variable {v.key} has empty bound interval")
        self._arrays = None

    def variable_index(self, key: VarKey) -> int:
        return self._index[key]

    def copy(self, **changes) -> "MilpModel":
        base = dict(
            name=self.name,
            variables=list(self.variables),
            objective=dict(self.objective),
            constraints=list(self.constraints),
            annotations=dict(self.annotations),
        )
        base.update(changes)
        return MilpModel(**base)

    # -- compiled array form (cached; used by solvers and evaluators) --------

    def arrays(self) -> "ModelArrays":
        if self._arrays is None:
            self._arrays = _compile(self)
        return self._arrays


@dataclass(frozen=True)
class ModelArrays:
    c: np.ndarray        # (n,) objective
    A: np.ndarray        # (m, n) dense constraint matrix
    senses: np.ndarray   # (m,) of "<=", "=", ">="
    rhs: np.ndarray      # (m,)
    lower: np.ndarray    # (n,)
    upper: np.ndarray    # (n,)
    binary: np.ndarray   # (n,) bool
    keys: tuple[VarKey, ...]


def _compile(model: MilpModel) -> ModelArrays:
    n = len(model.variables)
    m = len(model.constraints)
    c = np.zeros(n)
    for key, coef in model.objective.items():
        c[model.variable_index(key)] = coef
    A = np.zeros((m, n))
    rhs = np.zeros(m)
    senses = np.empty(m, dtype=object)
    for r, con in enumerate(model.constraints):
        for key, coef in con.coeffs:
            A[r, model.variable_index(key)] += coef
        rhs[r] = con.rhs
        senses[r] = con.sense
    lower = np.array([v.lower for v in model.variables])
    upper = np.array([v.upper for v in model.variables])
    binary = np.array([v.is_binary for v in model.variables])
    return ModelArrays(c=c, A=A, senses=senses, rhs=rhs, lower=lower, upper=upper,
                       binary=binary, keys=tuple(v.key for v in model.variables))


# ---------------------------------------------------------------------------
# Building the lot-sizing model
# ---------------------------------------------------------------------------


def build_nominal_model(inst: Instance) -> MilpModel:
    """The full MILP for `inst`: 3*N*M*T + 2*N*T variables and the ten
    constraint families (balance, lost-sales bound, capacity, compatibility,
    carry-over logic, activation, minimum production, unique carry-over).

    Continuous variables carry explicit finite upper bounds (capacity- and
    demand-derived) so LP relaxations are bounded by construction. Carry-over
    out of the final period is pinned to zero: it has no successor period, and
    leaving it free would let a final-period setup dodge its minimum quantity.
    """
    N, M, T = inst.N, inst.M, inst.T
    bigm = big_M_array(inst)

    variables: list[Variable] = []
    for i in range(N):
        for j in range(M):
            for t in range(T):
                ub = inst.c[j, t] / inst.b[i]
                variables.append(Variable(xk(i, j, t), 0.0, float(ub), False))
    for i in range(N):
        for j in range(M):
            for t in range(T):
                variables.append(Variable(yk(i, j, t), 0.0, 1.0, True))
    for i in range(N):
        for j in range(M):
            for t in range(T):
                ub = 0.0 if t == T - 1 else 1.0
                variables.append(Variable(zk(i, j, t), 0.0, ub, True))
    cap_cum = np.cumsum(inst.c.sum(axis=0))  # (T,) total machine time through t
    for i in range(N):
        for t in range(T):
            ub = inst.I0[i] + cap_cum[t] / inst.b[i]
            variables.append(Variable(ik(i, t), 0.0, float(ub), False))
    for i in range(N):
        for t in range(T):
            variables.append(Variable(lk(i, t), 0.0, float(inst.d[i, t]), False))

    objective: dict[VarKey, float] = {}
    for i in range(N):
        for j in range(M):
            for t in range(T):
                if inst.f[i]:
                    objective[yk(i, j, t)] = float(inst.f[i])
                if inst.p[i]:
                    objective[xk(i, j, t)] = float(inst.p[i])
        for t in range(T):
            if inst.h[i]:
                objective[ik(i, t)] = float(inst.h[i])
            if inst.l[i, t]:
                objective[lk(i, t)] = float(inst.l[i, t])

    cons: list[Constraint] = []

    for i in range(N):
        for t in range(T):
            coeffs = [(xk(i, j, t), 1.0) for j in range(M)]
            coeffs.append((lk(i, t), 1.0))
            coeffs.append((ik(i, t), -1.0))
            rhs = float(inst.d[i, t])
            if t > 0:
                coeffs.append((ik(i, t - 1), 1.0))
            else:
                rhs -= float(inst.I0[i])
            cons.append(Constraint(f"balance_{i:03d}_{t:03d}", tuple(coeffs), EQ, rhs))

    for i in range(N):
        for t in range(T):
            cons.append(Constraint(f"lost_sales_{i:03d}_{t:03d}",
                                   ((lk(i, t), 1.0),), LEQ, float(inst.d[i, t])))

    for j in range(M):
        for t in range(T):
            coeffs = []
            for i in range(N):
                coeffs.append((yk(i, j, t), float(inst.s[i])))
                coeffs.append((xk(i, j, t), float(inst.b[i])))
            cons.append(Constraint(f"capacity_{j:03d}_{t:03d}", tuple(coeffs),
                                   LEQ, float(inst.c[j, t])))

    for i in range(N):
        for j in range(M):
            for t in range(T):
                cons.append(Constraint(f"compat_{i:03d}_{j:03d}_{t:03d}",
                                       ((yk(i, j, t), 1.0),), LEQ, float(inst.w[i, j])))

    for i in range(N):
        for j in range(M):
            for t in range(T):
                cons.append(Constraint(f"carryover_setup_{i:03d}_{j:03d}_{t:03d}",
                                       ((zk(i, j, t), 1.0), (yk(i, j, t), -1.0)), LEQ, 0.0))

    for i in range(N):
        for j in range(M):
            for t in range(T):
                coeffs = [(zk(i, j, t), 1.0)]
                if t > 0:
                    coeffs.append((zk(i, j, t - 1), 1.0))
                cons.append(Constraint(f"consec_carryover_{i:03d}_{j:03d}_{t:03d}",
                                       tuple(coeffs), LEQ, 1.0))

    for i in range(N):
        for j in range(M):
            for t in range(T):
                mv = float(bigm[i, j, t])
                coeffs = [(xk(i, j, t), 1.0), (yk(i, j, t), -mv)]
                if t > 0:
                    coeffs.append((zk(i, j, t - 1), -mv))
                cons.append(Constraint(f"activation_{i:03d}_{j:03d}_{t:03d}",
                                       tuple(coeffs), LEQ, 0.0))

    for i in range(N):
        for j in range(M):
            for t in range(T):
                mi = float(inst.m[i])
                cons.append(Constraint(
                    f"min_prod_{i:03d}_{j:03d}_{t:03d}",
                    ((yk(i, j, t), mi), (zk(i, j, t), -mi), (xk(i, j, t), -1.0)),
                    LEQ, 0.0))

    for i in range(N):
        for j in range(M):
            for t in range(T - 1):
                mi = float(inst.m[i])
                cons.append(Constraint(
                    f"min_prod_carry_{i:03d}_{j:03d}_{t:03d}",
                    ((zk(i, j, t), mi), (xk(i, j, t), -1.0), (xk(i, j, t + 1), -1.0)),
                    LEQ, 0.0))

    for j in range(M):
        for t in range(T):
            coeffs = tuple((zk(i, j, t), 1.0) for i in range(N))
            cons.append(Constraint(f"unique_carry_{j:03d}_{t:03d}", coeffs, LEQ, 1.0))

    return MilpModel(name="LSP", variables=variables, objective=objective,
                     constraints=cons)


def add_neighborhood_constraint(model: MilpModel, repaired: Solution,
                                tau: int, kappa: int) -> MilpModel:
    """Bound the Hamming distance of the short-horizon setups from `repaired` by kappa.

    One row over every Y with t < tau: flips away from the reference count 1.
    The reference solution satisfies it with slack kappa.
    """
    N, M, T = repaired.dims
    if tau > T:
        raise ValueError(f"tau={tau} exceeds horizon T={T}")
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    coeffs = []
    ones = 0
    for i in range(N):
        for j in range(M):
            for t in range(tau):
                if repaired.Y[i, j, t] == 1:
                    coeffs.append((yk(i, j, t), -1.0))
                    ones += 1
                else:
                    coeffs.append((yk(i, j, t), 1.0))
    row = Constraint("neighborhood", tuple(coeffs), LEQ, float(kappa - ones))
    out = model.copy(constraints=list(model.constraints) + [row])
    out.annotations["neighborhood"] = {"tau": int(tau), "kappa": int(kappa)}
    return out


def add_fixing_constraints(model: MilpModel, repaired: Solution,
                           free_set: Iterable[tuple[int, int, int]],
                           tau: int) -> MilpModel:
    """Pin every short-horizon setup outside `free_set` to its repaired value.

    Realized as equal lower/upper bounds on the Y variables, so the reduced
    model is the same rows with a shrunken box. The repaired solution stays
    feasible by construction.
    """
    free = set(tuple(map(int, trip)) for trip in free_set)
    for trip in free:
        if trip[2] >= tau:
            raise ValueError(f"free setup {trip} lies outside the short horizon (tau={tau})")
    N, M, T = repaired.dims
    pinned: dict[VarKey, float] = {}
    for i in range(N):
        for j in range(M):
            for t in range(min(tau, T)):
                if (i, j, t) not in free:
                    pinned[yk(i, j, t)] = float(repaired.Y[i, j, t])
    variables = [
        replace(v, lower=pinned[v.key], upper=pinned[v.key]) if v.key in pinned else v
        for v in model.variables
    ]
    out = model.copy(variables=variables)
    out.annotations["fixing"] = {"tau": int(tau), "free_set": sorted(free)}
    return out


# ---------------------------------------------------------------------------
# Assignments
# ---------------------------------------------------------------------------


def model_dims(model: MilpModel) -> tuple[int, int, int]:
    """(N, M, T) inferred from the model's X variable keys."""
    N = M = T = 0
    for v in model.variables:
        if v.key.kind == "X":
            i, j, t = v.key.idx
            N, M, T = max(N, i + 1), max(M, j + 1), max(T, t + 1)
    if 0 in (N, M, T):
        raise ValueError("model has no production variables")
    return N, M, T


def solution_to_assignment(sol: Solution) -> dict[VarKey, float]:
    N, M, T = sol.dims
    values: dict[VarKey, float] = {}
    for i in range(N):
        for j in range(M):
            for t in range(T):
                values[xk(i, j, t)] = float(sol.X[i, j, t])
                values[yk(i, j, t)] = float(sol.Y[i, j, t])
                values[zk(i, j, t)] = float(sol.Z[i, j, t])
    for i in range(N):
        for t in range(T):
            values[ik(i, t)] = float(sol.I[i, t])
            values[lk(i, t)] = float(sol.L[i, t])
    return values


def solution_from_assignment(model: MilpModel, values: Mapping[VarKey, float],
                             inst: Instance | None = None,
                             tol: float = BINARY_SNAP_TOL) -> Solution:
    """Reshape a flat assignment into Solution arrays.

    Binary values are snapped to {0, 1}; a binary value farther than `tol`
    from both is an error. When `inst` is given the shapes are validated
    against it.
    """
    N, M, T = model_dims(model)
    if inst is not None and (N, M, T) != (inst.N, inst.M, inst.T):
        raise ValueError("model dims do not match the instance")
    X = np.zeros((N, M, T))
    Y = np.zeros((N, M, T), dtype=np.int8)
    Z = np.zeros((N, M, T), dtype=np.int8)
    I = np.zeros((N, T))
    L = np.zeros((N, T))
    for var in model.variables:
        key = var.key
        if key not in values:
            raise KeyError(f"assignment is missing {key.name()}")
        v = float(values[key])
        if var.is_binary:
            snapped = round(v)
            if abs(v - snapped) > tol or snapped not in (0, 1):
                raise ValueError(f"binary variable {key.name()} has non-binary value {v!r}")
            v = snapped
        if key.kind == "X":
            X[key.idx] = v
        elif key.kind == "Y":
            Y[key.idx] = v
        elif key.kind == "Z":
            Z[key.idx] = v
        elif key.kind == "I":
            I[key.idx] = v
        elif key.kind == "L":
            L[key.idx] = v
    return Solution(X=X, Y=Y, Z=Z, I=I, L=L)


def objective_value(model: MilpModel, values: Mapping[VarKey, float]) -> float:
    return float(sum(coef * values[key] for key, coef in model.objective.items()))


def assignment_vector(model: MilpModel, values: Mapping[VarKey, float]) -> np.ndarray:
    arrays = model.arrays()
    return np.array([values[k] for k in arrays.keys])


def constraint_violations(model: MilpModel, values: Mapping[VarKey, float],
                          tol: float = 1e-6) -> list[tuple[str, float]]:
    """Names and magnitudes of all rows (and bounds) the assignment violates."""
    arrays = model.arrays()
    x = assignment_vector(model, values)
    lhs = arrays.A @ x
    out: list[tuple[str, float]] = []
    for r, con in enumerate(model.constraints):
        delta = lhs[r] - arrays.rhs[r]
        if con.sense == LEQ:
            excess = delta
        elif con.sense == GEQ:
            excess = -delta
        else:
            excess = abs(delta)
        if excess > tol:
            out.append((con.name, float(excess)))
    for k, var in enumerate(model.variables):
        if x[k] < arrays.lower[k] - tol:
            out.append((f"lb:{var.key.name()}", float(arrays.lower[k] - x[k])))
        if x[k] > arrays.upper[k] + tol:
            out.append((f"ub:{var.key.name()}", float(x[k] - arrays.upper[k])))
    return out


# ---------------------------------------------------------------------------
# MPS text format
# ---------------------------------------------------------------------------

_OBJ_ROW = "COST"


def _num(v: float) -> str:
    return repr(float(v))


def export_mps(model: MilpModel) -> str:
    """Fixed-layout MPS text with deterministic ordering; round-trips through
    import_mps byte-identically. Binary variables sit inside INTORG/INTEND
    marker pairs and free binaries additionally appear as BV bounds."""
    lines = [f"NAME          {model.name}", "ROWS", f" N  {_OBJ_ROW}"]
    sense_tag = {LEQ: "L", EQ: "E", GEQ: "G"}
    for con in model.constraints:
        lines.append(f" {sense_tag[con.sense]}  {con.name}")

    lines.append("COLUMNS")
    entries: dict[VarKey, list[tuple[str, float]]] = {v.key: [] for v in model.variables}
    for key, coef in model.objective.items():
        entries[key].append((_OBJ_ROW, coef))
    for con in model.constraints:
        for key, coef in con.coeffs:
            entries[key].append((con.name, coef))
    marker_count = 0
    in_integer = False
    for var in model.variables:
        if var.is_binary != in_integer:
            tag = "INTORG" if var.is_binary else "INTEND"
            lines.append(f"    MARKER{marker_count:04d}                 'MARKER'"
                         f"                 '{tag}'")
            marker_count += 1
            in_integer = var.is_binary
        name = var.key.name()
        for row, coef in entries[var.key]:
            lines.append(f"    {name:<28}  {row:<28}  {_num(coef)}")
    if in_integer:
        lines.append(f"    MARKER{marker_count:04d}                 'MARKER'"
                     f"                 'INTEND'")

    lines.append("RHS")
    for con in model.constraints:
        if con.rhs != 0.0:
            lines.append(f"    RHS           {con.name:<28}  {_num(con.rhs)}")

    lines.append("BOUNDS")
    for var in model.variables:
        name = var.key.name()
        if var.is_binary:
            if var.lower == var.upper:
                lines.append(f" FX BND       {name:<28}  {_num(var.lower)}")
            else:
                lines.append(f" BV BND       {name}")
        else:
            if var.lower == var.upper:
                lines.append(f" FX BND       {name:<28}  {_num(var.lower)}")
            else:
                if var.lower != 0.0:
                    lines.append(f" LO BND       {name:<28}  {_num(var.lower)}")
                if np.isfinite(var.upper):
                    lines.append(f" UP BND       {name:<28}  {_num(var.upper)}")
    lines.append("ENDATA")
    return "\n".join(lines) + "\n"


def import_mps(text: str) -> MilpModel:
    """Parse MPS text produced by export_mps (plus common free-format variants)."""
    name = "IMPORTED"
    section = None
    row_sense: dict[str, str] = {}
    row_order: list[str] = []
    obj_row = None
    col_order: list[str] = []
    col_entries: dict[str, list[tuple[str, float]]] = {}
    col_integer: dict[str, bool] = {}
    rhs: dict[str, float] = {}
    bounds: dict[str, dict[str, float | None]] = {}
    in_integer = False
    tag_for = {"L": LEQ, "E": EQ, "G": GEQ}

    for raw in text.splitlines():
        if not raw.strip() or raw.lstrip().startswith("*"):
            continue
        is_header = not raw[0].isspace()
        parts = raw.split()
        if is_header:
            header = parts[0].upper()
            if header == "NAME":
                name = parts[1] if len(parts) > 1 else name
                continue
            if header in ("ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "ENDATA"):
                section = header
                if header == "ENDATA":
                    break
                continue
            raise ValueError(f"unsupported MPS section: {header}")
        if section == "ROWS":
            tag, row = parts[0].upper(), parts[1]
            if tag == "N":
                obj_row = row
            else:
                row_sense[row] = tag_for[tag]
                row_order.append(row)
        elif section == "COLUMNS":
            if len(parts) >= 3 and parts[1] == "'MARKER'":
                in_integer = parts[2] == "'INTORG'"
                continue
            col = parts[0]
            if col not in col_entries:
                col_entries[col] = []
                col_order.append(col)
                col_integer[col] = in_integer
            for k in range(1, len(parts) - 1, 2):
                col_entries[col].append((parts[k], float(parts[k + 1])))
        elif section == "RHS":
            for k in range(1, len(parts) - 1, 2):
                rhs[parts[k]] = float(parts[k + 1])
        elif section == "BOUNDS":
            btype = parts[0].upper()
            col = parts[2]
            entry = bounds.setdefault(col, {"lo": None, "up": None, "fx": None, "bv": False})
            if btype == "BV":
                entry["bv"] = True
            elif btype == "FX":
                entry["fx"] = float(parts[3])
            elif btype == "LO":
                entry["lo"] = float(parts[3])
            elif btype == "UP":
                entry["up"] = float(parts[3])
            elif btype == "FR":
                entry["lo"], entry["up"] = -np.inf, np.inf
            else:
                raise ValueError(f"unsupported bound type {btype}")
        elif section == "RANGES":
            raise ValueError("RANGES section is not supported")

    variables: list[Variable] = []
    objective: dict[VarKey, float] = {}
    for col in col_order:
        key = parse_var_name(col)
        binary = col_integer[col]
        lo, up = 0.0, (1.0 if binary else np.inf)
        entry = bounds.get(col)
        if entry:
            if entry["fx"] is not None:
                lo = up = entry["fx"]
            else:
                if entry["bv"]:
                    lo, up = 0.0, 1.0
                if entry["lo"] is not None:
                    lo = entry["lo"]
                if entry["up"] is not None:
                    up = entry["up"]
        variables.append(Variable(key, lo, up, binary))
        for row, coef in col_entries[col]:
            if row == obj_row:
                objective[key] = coef

    constraints = []
    rows_coeffs: dict[str, list[tuple[VarKey, float]]] = {r: [] for r in row_order}
    for col in col_order:
        key = parse_var_name(col)
        for row, coef in col_entries[col]:
            if row != obj_row:
                rows_coeffs[row].append((key, coef))
    for row in row_order:
        constraints.append(Constraint(row, tuple(rows_coeffs[row]),
                                      row_sense[row], rhs.get(row, 0.0)))

    return MilpModel(name=name, variables=variables, objective=objective,
                     constraints=constraints)


# ---------------------------------------------------------------------------
# Solution files: one "name value" pair per line, '#' comments
# ---------------------------------------------------------------------------


def write_solution_file(values: Mapping[VarKey, float], header: str | None = None) -> str:
    lines = []
    if header:
        for hline in header.splitlines():
            lines.append(f"# {hline}")
    for key in sorted(values, key=lambda k: (k.kind, k.idx)):
        lines.append(f"{key.name()} {_num(float(values[key]))}")
    return "\n".join(lines) + "\n"


def parse_solution_file(text: str) -> tuple[dict[VarKey, float], dict[str, str]]:
    """Returns (values, metadata); metadata comes from '# key value' comments."""
    values: dict[VarKey, float] = {}
    meta: dict[str, str] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip().split(None, 1)
            if len(body) == 2:
                meta[body[0]] = body[1]
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"malformed solution line: {line!r}")
        values[parse_var_name(parts[0])] = float(parts[1])
    return values, meta
