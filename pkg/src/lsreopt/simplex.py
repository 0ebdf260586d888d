"""Bounded-variable simplex: two-phase primal plus a dual method for warm
restarts after bound changes (the branch-and-bound workhorse).

The engine compiles one constraint system (structural + slack columns, plus an
identity block of artificials used only in phase 1) and then solves it for any
objective/bounds combination, so a tree search pays the matrix setup once. The
constraint matrix is kept sparse; the basis inverse is dense and maintained by
rank-one updates with periodic refactorization. Reduced costs are updated
incrementally and re-derived exactly before optimality is declared.

Pivoting is deterministic: entering by most-attractive reduced cost with
lowest-index tie-breaks, Bland's rule after a degenerate stall, leaving by
minimum ratio with largest-pivot then lowest-index tie-breaks. Every reported
optimum is re-verified primal-feasible; numerical trouble is reported as such,
never as a wrong "optimal".
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg.blas import dger

from .model import EQ, GEQ, LEQ, MilpModel

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"
NUMERICAL = "numerical"

_DUAL_TOL = 1e-9       # reduced-cost optimality tolerance
_PIV_TOL = 1e-9        # smallest usable pivot magnitude
_DEGEN_TOL = 1e-12     # step considered degenerate
_BLAND_AFTER = 120     # consecutive degenerate pivots before Bland's rule
_REFACTOR_EVERY = 120  # pivots between basis re-inversions


@dataclass
class LpOutcome:
    status: str
    x: np.ndarray | None      # structural variable values
    objective: float
    iterations: int
    basis: np.ndarray | None = None        # basic column indices (full system)
    at_upper: np.ndarray | None = None     # nonbasic-at-upper flags (full system)
    binv: np.ndarray | None = None         # final basis inverse (borrowed, do not mutate)


class _State:
    __slots__ = ("x", "lo", "up", "basis", "Binv", "at_upper", "in_basis")

    def __init__(self, n_total: int, lo: np.ndarray, up: np.ndarray):
        self.lo = lo
        self.up = up
        self.x = np.zeros(n_total)
        self.basis = None
        self.Binv = None
        self.at_upper = np.zeros(n_total, dtype=bool)
        self.in_basis = np.zeros(n_total, dtype=bool)


class SimplexEngine:
    """One constraint system A x {<=,=,>=} b, solvable for many bounds/objectives."""

    def __init__(self, A: np.ndarray, senses, b: np.ndarray):
        A = sp.csc_matrix(A)
        m, n = A.shape
        slack_rows = [r for r in range(m) if senses[r] != EQ]
        sign = np.array([1.0 if senses[r] == LEQ else -1.0 for r in slack_rows])
        slack_block = sp.csc_matrix(
            (sign, (slack_rows, np.arange(len(slack_rows)))), shape=(m, len(slack_rows)))
        self.art0 = n + len(slack_rows)
        full = sp.hstack([A, slack_block, sp.eye(m, format="csc")], format="csc")
        full.sort_indices()
        self.A = full
        self.At = full.T.tocsr()
        self.At.sort_indices()
        self.b = np.asarray(b, dtype=float).copy()
        self.m = m
        self.n_struct = n
        self.n_slack = len(slack_rows)
        self.n_real = self.art0
        self.n_total = self.art0 + m
        self.slack_col_of_row = np.full(m, -1, dtype=int)
        self.slack_sign_of_row = np.zeros(m)
        for k, r in enumerate(slack_rows):
            self.slack_col_of_row[r] = n + k
            self.slack_sign_of_row[r] = sign[k]
        self._scale = 1.0 + np.abs(self.b).max(initial=0.0)

    # -- sparse helpers --------------------------------------------------------

    def _column(self, q: int) -> tuple[np.ndarray, np.ndarray]:
        start, end = self.A.indptr[q], self.A.indptr[q + 1]
        return self.A.indices[start:end], self.A.data[start:end]

    def _ftran(self, st, q: int) -> np.ndarray:
        rows, vals = self._column(q)
        return st.Binv[:, rows] @ vals

    def _all_reduced(self, st, cf: np.ndarray) -> np.ndarray:
        pi = cf[st.basis] @ st.Binv
        return cf - self.At @ pi

    def _full_bounds(self, lower: np.ndarray, upper: np.ndarray):
        lo = np.zeros(self.n_total)
        up = np.full(self.n_total, np.inf)
        lo[: self.n_struct] = lower
        up[: self.n_struct] = upper
        lo[self.art0:] = 0.0
        up[self.art0:] = 0.0  # artificials stay shut unless phase 1 opens them
        return lo, up

    def _full_cost(self, c: np.ndarray) -> np.ndarray:
        cf = np.zeros(self.n_total)
        cf[: self.n_struct] = c
        return cf

    # -- public entry point ------------------------------------------------------

    def solve(self, c: np.ndarray, lower: np.ndarray, upper: np.ndarray,
              *, basis: np.ndarray | None = None, at_upper: np.ndarray | None = None,
              binv: np.ndarray | None = None,
              max_iterations: int = 10**9) -> LpOutcome:
        """Minimize c over the system within [lower, upper] (structural bounds).

        With a (basis, at_upper) hint from a previous solve of the same system
        under different bounds (plus optionally that solve's basis inverse),
        restores feasibility with the dual method and polishes with the
        primal; otherwise runs two-phase primal from a slack crash basis.
        """
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if np.any(lower > upper):
            return LpOutcome(INFEASIBLE, None, np.inf, 0)
        if not np.all(np.isfinite(lower)):
            raise ValueError("all structural lower bounds must be finite")

        if basis is not None:
            out = self._warm_solve(c, lower, upper, basis, at_upper, binv, max_iterations)
            if out is not None:
                return out
        return self._cold_solve(c, lower, upper, max_iterations)

    # -- state maintenance ----------------------------------------------------------

    def _recompute_basics(self, st) -> None:
        xN = st.x.copy()
        xN[st.basis] = 0.0
        st.x[st.basis] = st.Binv @ (self.b - self.A @ xN)

    def _refactor(self, st) -> bool:
        B = self.A[:, st.basis].toarray()
        try:
            st.Binv = np.asfortranarray(np.linalg.inv(B))
        except np.linalg.LinAlgError:
            return False
        self._recompute_basics(st)
        return True

    def _apply_eta(self, st, w: np.ndarray, r: int) -> bool:
        wr = w[r]
        if abs(wr) < _PIV_TOL:
            return self._refactor(st)
        eta = st.Binv[r, :] / wr
        # in-place rank-one update: Binv -= w eta^T, then row r becomes eta
        st.Binv = dger(-1.0, w, eta, a=st.Binv, overwrite_a=1)
        st.Binv[r, :] = eta
        return True

    # -- cold start: two-phase primal --------------------------------------------------

    def _cold_solve(self, c, lower, upper, max_iterations) -> LpOutcome:
        lo, up = self._full_bounds(lower, upper)
        st = _State(self.n_total, lo, up)
        # slack crash: nonbasic structurals at the finite bound nearer zero
        xs = np.where(np.abs(lower) <= np.abs(upper), lower, upper)
        xs = np.where(np.isfinite(xs), xs, lower)
        st.x[: self.n_struct] = xs
        st.at_upper[: self.n_struct] = (xs == upper) & (lower < upper)
        residual = self.b - self.A[:, : self.n_real] @ st.x[: self.n_real]

        basis = np.empty(self.m, dtype=int)
        art_cost = np.zeros(self.n_total)
        n_art = 0
        for r in range(self.m):
            scol = self.slack_col_of_row[r]
            sval = residual[r] / self.slack_sign_of_row[r] if scol >= 0 else None
            if sval is not None and sval >= 0.0:
                basis[r] = scol
                st.x[scol] = sval
            else:
                acol = self.art0 + r
                basis[r] = acol
                if residual[r] >= 0.0:
                    st.lo[acol], st.up[acol] = 0.0, np.inf
                    st.x[acol] = residual[r]
                    art_cost[acol] = 1.0
                else:
                    st.lo[acol], st.up[acol] = -np.inf, 0.0
                    st.x[acol] = residual[r]
                    art_cost[acol] = -1.0
                n_art += 1
        st.basis = basis
        st.in_basis[:] = False
        st.in_basis[basis] = True
        if not self._refactor(st):
            return LpOutcome(NUMERICAL, None, np.inf, 0)

        iterations = 0
        if n_art:
            status, used = self._primal_loop(st, art_cost, max_iterations)
            iterations += used
            if status == ITERATION_LIMIT:
                return LpOutcome(ITERATION_LIMIT, None, np.inf, iterations)
            if status != OPTIMAL:
                return LpOutcome(NUMERICAL, None, np.inf, iterations)
            infeas = float(art_cost @ st.x)
            if infeas > 1e-7 * self._scale:
                return LpOutcome(INFEASIBLE, None, np.inf, iterations)
        # lock artificials at zero for phase 2
        st.lo[self.art0:] = 0.0
        st.up[self.art0:] = 0.0
        art_vals = st.x[self.art0:]
        art_vals[np.abs(art_vals) < 1e-12] = 0.0

        cf = self._full_cost(c)
        status, used = self._primal_loop(st, cf, max_iterations - iterations)
        iterations += used
        return self._finish(st, c, lower, upper, status, iterations)

    # -- warm start: dual repair + primal polish -----------------------------------------

    def _warm_solve(self, c, lower, upper, basis, at_upper, binv,
                    max_iterations) -> LpOutcome | None:
        lo, up = self._full_bounds(lower, upper)
        st = _State(self.n_total, lo, up)
        st.basis = np.asarray(basis, dtype=int).copy()
        if len(st.basis) != self.m or len(np.unique(st.basis)) != self.m:
            return None
        st.at_upper = (np.zeros(self.n_total, dtype=bool) if at_upper is None
                       else np.asarray(at_upper, dtype=bool).copy())
        st.in_basis[st.basis] = True
        # place nonbasics on a bound consistent with their previous side
        finite_up = np.isfinite(st.up)
        want_up = st.at_upper & finite_up
        st.x = np.where(want_up, np.where(finite_up, st.up, 0.0), st.lo)
        st.x[st.basis] = 0.0
        st.at_upper = want_up & ~st.in_basis
        if binv is not None and binv.shape == (self.m, self.m):
            st.Binv = np.asfortranarray(binv)  # copy; dger updates in place
            self._recompute_basics(st)
        elif not self._refactor(st):
            return None

        cf = self._full_cost(c)
        status, used = self._dual_loop(st, cf, max_iterations)
        if status is None:
            return None  # dual method gave up; caller falls back to cold start
        iterations = used
        if status == ITERATION_LIMIT:
            return LpOutcome(ITERATION_LIMIT, None, np.inf, iterations)
        if status == INFEASIBLE:
            return LpOutcome(INFEASIBLE, None, np.inf, iterations)
        status, used = self._primal_loop(st, cf, max_iterations - iterations)
        iterations += used
        return self._finish(st, c, lower, upper, status, iterations)

    # -- result assembly -------------------------------------------------------------

    def _finish(self, st, c, lower, upper, status, iterations) -> LpOutcome:
        if status == OPTIMAL:
            ok = self._verify(st, lower, upper)
            if not ok and self._refactor(st):
                ok = self._verify(st, lower, upper)
            if not ok:
                status = NUMERICAL
        if status != OPTIMAL:
            value = -np.inf if status == UNBOUNDED else np.inf
            return LpOutcome(status, None, value, iterations)
        xs = st.x[: self.n_struct].copy()
        np.clip(xs, lower, upper, out=xs)
        return LpOutcome(OPTIMAL, xs, float(c @ xs), iterations,
                         basis=st.basis.copy(), at_upper=st.at_upper.copy(),
                         binv=st.Binv)

    def _verify(self, st, lower, upper) -> bool:
        xs = st.x[: self.n_struct]
        tol = 1e-7 * self._scale
        if np.any(xs < lower - tol) or np.any(xs > upper + tol):
            return False
        if np.abs(st.x[self.art0:]).max(initial=0.0) > tol:
            return False
        sl = st.x[self.n_struct: self.n_real]
        if sl.size and sl.min(initial=0.0) < -tol:
            return False
        residual = self.A[:, : self.n_real] @ st.x[: self.n_real] - self.b
        return bool(np.abs(residual).max(initial=0.0) <= 1e-6 * self._scale)

    # -- primal simplex ------------------------------------------------------------------

    def _primal_loop(self, st, cf, max_iterations) -> tuple[str, int]:
        if max_iterations <= 0:
            return ITERATION_LIMIT, 0
        iterations = 0
        degen_run = 0
        bland = False
        pivots_since_refactor = 0
        d = self._all_reduced(st, cf)
        while True:
            free = ~st.in_basis & (st.lo < st.up)
            attract = np.where(st.at_upper, d, -d)  # positive = improving move
            elig = free & (attract > _DUAL_TOL)
            candidates = np.flatnonzero(elig)
            if candidates.size == 0:
                # incremental reduced costs can drift; confirm before declaring victory
                d = self._all_reduced(st, cf)
                attract = np.where(st.at_upper, d, -d)
                candidates = np.flatnonzero(free & (attract > _DUAL_TOL))
                if candidates.size == 0:
                    return OPTIMAL, iterations
            if bland:
                q = int(candidates[0])
            else:
                q = int(candidates[np.argmax(attract[candidates])])
            direction = -1.0 if st.at_upper[q] else 1.0

            w = self._ftran(st, q)
            delta = direction * w
            xb = st.x[st.basis]
            lob = st.lo[st.basis]
            upb = st.up[st.basis]
            theta = np.full(self.m, np.inf)
            pos = delta > _PIV_TOL
            neg = delta < -_PIV_TOL
            theta[pos] = (xb[pos] - lob[pos]) / delta[pos]
            theta[neg] = (xb[neg] - upb[neg]) / delta[neg]
            np.maximum(theta, 0.0, out=theta)
            flip = st.up[q] - st.lo[q]
            theta_min = theta.min(initial=np.inf)
            step = min(theta_min, flip)
            if not np.isfinite(step):
                return UNBOUNDED, iterations

            iterations += 1
            if step <= _DEGEN_TOL:
                degen_run += 1
                if degen_run > _BLAND_AFTER:
                    bland = True
            else:
                degen_run = 0
                bland = False

            if flip <= theta_min:
                # entering variable runs to its opposite bound; basis unchanged
                st.x[q] = st.up[q] if direction > 0 else st.lo[q]
                st.at_upper[q] = direction > 0
                st.x[st.basis] = xb - step * delta
            else:
                ties = np.flatnonzero(theta <= theta_min + _DEGEN_TOL)
                if bland:
                    r = int(ties[np.argmin(st.basis[ties])])
                else:
                    r = int(ties[np.argmax(np.abs(w[ties]))])
                leaving = st.basis[r]
                st.x[st.basis] = xb - step * delta
                st.x[q] = st.x[q] + direction * step
                st.x[leaving] = lob[r] if delta[r] > 0 else upb[r]
                st.at_upper[leaving] = delta[r] <= 0
                st.in_basis[leaving] = False
                st.in_basis[q] = True
                st.at_upper[q] = False
                st.basis[r] = q
                dq = d[q]
                if not self._apply_eta(st, w, r):
                    return NUMERICAL, iterations
                pivots_since_refactor += 1
                if pivots_since_refactor >= _REFACTOR_EVERY:
                    if not self._refactor(st):
                        return NUMERICAL, iterations
                    pivots_since_refactor = 0
                    d = self._all_reduced(st, cf)
                else:
                    d -= dq * (self.At @ st.Binv[r, :])
                    d[q] = 0.0
            if iterations >= max_iterations:
                return ITERATION_LIMIT, iterations

    # -- dual simplex (bound-change restarts) ------------------------------------------------

    def _dual_loop(self, st, cf, max_iterations) -> tuple[str | None, int]:
        iterations = 0
        cap = 4 * self.m + 1000
        tol = 1e-8 * self._scale
        pivots_since_refactor = 0
        d = self._all_reduced(st, cf)
        while True:
            xb = st.x[st.basis]
            below = st.lo[st.basis] - xb
            above = xb - st.up[st.basis]
            viol = np.maximum(below, above)
            worst = viol.max(initial=-np.inf)
            if worst <= tol:
                return OPTIMAL, iterations
            if iterations >= max_iterations:
                return ITERATION_LIMIT, iterations
            if iterations >= cap:
                return None, iterations
            r = int(np.argmax(viol))
            to_lower = below[r] >= above[r]
            rho = self.At @ st.Binv[r, :]
            free = ~st.in_basis & (st.lo < st.up)
            if to_lower:
                elig = free & (((~st.at_upper) & (rho < -_PIV_TOL))
                               | (st.at_upper & (rho > _PIV_TOL)))
            else:
                elig = free & (((~st.at_upper) & (rho > _PIV_TOL))
                               | (st.at_upper & (rho < -_PIV_TOL)))
            cand = np.flatnonzero(elig)
            if cand.size == 0:
                return INFEASIBLE, iterations
            ratios = np.abs(d[cand]) / np.abs(rho[cand])
            best = ratios.min()
            ties = cand[np.flatnonzero(ratios <= best + 1e-12)]
            q = int(ties[np.argmax(np.abs(rho[ties]))])

            target = st.lo[st.basis[r]] if to_lower else st.up[st.basis[r]]
            step = (xb[r] - target) / rho[q]  # change of x_q
            w = self._ftran(st, q)
            leaving = st.basis[r]
            st.x[st.basis] = xb - step * w
            st.x[q] = st.x[q] + step
            st.x[leaving] = target
            st.at_upper[leaving] = not to_lower
            st.in_basis[leaving] = False
            st.in_basis[q] = True
            st.at_upper[q] = False
            st.basis[r] = q
            dq = d[q]
            if not self._apply_eta(st, w, r):
                return None, iterations
            pivots_since_refactor += 1
            if pivots_since_refactor >= _REFACTOR_EVERY:
                if not self._refactor(st):
                    return None, iterations
                pivots_since_refactor = 0
                d = self._all_reduced(st, cf)
            else:
                d -= dq * (self.At @ st.Binv[r, :])
                d[q] = 0.0
            iterations += 1


# ---------------------------------------------------------------------------
# Model-level entry point
# ---------------------------------------------------------------------------


def engine_for_model(model: MilpModel) -> SimplexEngine:
    arrays = model.arrays()
    return SimplexEngine(arrays.A, arrays.senses, arrays.rhs)


def solve_lp(model: MilpModel, basis_hint=None, max_iterations: int = 10**9):
    """Solve the LP relaxation of `model` (integrality dropped, bounds kept).

    Returns (status, values, objective, iterations) where values maps each
    variable key to its optimum (None unless status is 'optimal'). basis_hint,
    if given, is the (basis, at_upper) pair of a previous LpOutcome on the same
    constraint system.
    """
    arrays = model.arrays()
    engine = engine_for_model(model)
    kwargs = {}
    if basis_hint is not None:
        basis, at_upper = basis_hint
        kwargs = {"basis": basis, "at_upper": at_upper}
    out = engine.solve(arrays.c, arrays.lower, arrays.upper,
                       max_iterations=max_iterations, **kwargs)
    values = None
    if out.status == OPTIMAL:
        values = {key: float(out.x[k]) for k, key in enumerate(arrays.keys)}
    return out.status, values, out.objective, out.iterations
