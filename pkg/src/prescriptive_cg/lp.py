"""Bounded-variable revised simplex for small and medium maximization LPs.

Every row gets one logical variable so that ``A x + s = b``:
``<=`` rows have ``s >= 0``, ``>=`` rows ``s <= 0`` and ``=`` rows ``s = 0``.
Phase 1 minimizes the sum of basic bound violations from any starting basis,
so a warm basis that went infeasible after columns, rows or bound changes
needs no artificial variables. When such a basis is still dual feasible (the
usual case after a branching bound change) a bounded dual simplex repairs it
first, which takes a few pivots where primal phase 1 can stall for thousands.

The basis inverse is a sparse LU of the basis matrix followed by a product
of eta matrices, refactorized every ``REFACTOR_EVERY`` pivots.

Row duals are reported as ``y = d(objective)/d(rhs)``: nonnegative on binding
``<=`` rows, nonpositive on binding ``>=`` rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

REFACTOR_EVERY = 64
PRIMAL_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9

_SENSE = {"<": "<", "<=": "<", "L": "<", ">": ">", ">=": ">", "G": ">",
          "=": "=", "==": "=", "E": "="}

AT_LOWER, AT_UPPER, FREE, BASIC = 0, 1, 2, 3


class LpError(RuntimeError):
    pass


@dataclass
class LinearProgram:
    """``max c.x`` subject to sparse rows ``A x (<=,>=,=) b`` and ``lb <= x <= ub``."""

    c: np.ndarray
    A: sp.spmatrix
    senses: tuple
    b: np.ndarray
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    row_names: list | None = None
    col_names: list | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.shape[0]
        self.A = sp.csc_matrix(self.A, dtype=float)
        if self.A.shape[1] != n:
            raise LpError(f"A has {self.A.shape[1]} columns, c has {n}")
        m = self.A.shape[0]
        self.b = np.asarray(self.b, dtype=float).reshape(m)
        try:
            self.senses = tuple(_SENSE[s] for s in self.senses)
        except KeyError as e:
            raise LpError(f"unknown row sense {e.args[0]!r}") from None
        if len(self.senses) != m:
            raise LpError("one sense per row required")
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float)
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float)
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise LpError("bounds must have one entry per column")
        if (self.lb > self.ub).any():
            raise LpError("lower bound above upper bound")
        for name, arr in (("c", self.c), ("b", self.b), ("A", self.A.data)):
            if not np.isfinite(arr).all():
                raise LpError(f"non-finite entries in {name}")
        if np.isnan(self.lb).any() or np.isnan(self.ub).any():
            raise LpError("NaN bound")

    @property
    def shape(self):
        return self.A.shape

    def to_lp_text(self):
        """CPLEX-style LP text, for cross-checking against external solvers."""
        m, n = self.A.shape
        cn = self.col_names or [f"x{j}" for j in range(n)]
        rn = self.row_names or [f"r{i}" for i in range(m)]

        def term(v, name):
            return f"{'+' if v >= 0 else '-'} {abs(v):.17g} {name}"

        lines = ["Maximize", " obj: " + " ".join(term(v, cn[j]) for j, v in enumerate(self.c) if v)]
        lines.append("Subject To")
        A = self.A.tocsr()
        op = {"<": "<=", ">": ">=", "=": "="}
        for i in range(m):
            lo, hi = A.indptr[i], A.indptr[i + 1]
            lhs = " ".join(term(v, cn[j]) for j, v in zip(A.indices[lo:hi], A.data[lo:hi]))
            lines.append(f" {rn[i]}: {lhs or '0 ' + cn[0]} {op[self.senses[i]]} {self.b[i]:.17g}")
        lines.append("Bounds")
        for j in range(n):
            lo = "-inf" if np.isneginf(self.lb[j]) else f"{self.lb[j]:.17g}"
            hi = "+inf" if np.isposinf(self.ub[j]) else f"{self.ub[j]:.17g}"
            lines.append(f" {lo} <= {cn[j]} <= {hi}")
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class WarmBasis:
    """Basis description that survives appended columns and rows."""

    basic_cols: tuple
    basic_rows: tuple  # rows whose logical variable is basic
    upper_cols: tuple = ()  # nonbasic structural columns sitting at their upper bound
    n_rows: int = 0  # row count when the basis was taken; later rows start with basic logicals


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded | iteration_limit
    x: np.ndarray
    y: np.ndarray
    objective: float
    reduced_costs: np.ndarray = field(default=None)
    basis: WarmBasis | None = None
    iterations: int = 0
    phase1_iterations: int = 0

    @property
    def ok(self):
        return self.status == "optimal"


class _Factor:
    """LU of a basis matrix plus a product-form eta file."""

    def __init__(self, B):
        self.m = B.shape[0]
        self.lu = splu(sp.csc_matrix(B), permc_spec="COLAMD") if self.m else None
        self.etas = []

    def ftran(self, a):
        v = self.lu.solve(a) if self.m else a.copy()
        for r, alpha in self.etas:
            vr = v[r] / alpha[r]
            v -= alpha * vr
            v[r] = vr
        return v

    def btran(self, c):
        w = np.array(c, dtype=float)
        for r, alpha in reversed(self.etas):
            wr = w[r]
            w[r] = (wr - (alpha @ w - alpha[r] * wr)) / alpha[r]
        return self.lu.solve(w, trans="T") if self.m else w

    def push(self, r, alpha):
        self.etas.append((r, alpha.copy()))


def solve(lp, warm_basis=None, max_iter=None, scale=None):
    """Solve ``lp``; never raises on infeasible or unbounded models."""
    return _Simplex(lp, warm_basis, max_iter, scale).run()


class _Simplex:
    def __init__(self, lp, warm, max_iter, scale):
        self.lp = lp
        m, n = lp.A.shape
        self.m, self.n = m, n
        cmax = float(np.abs(lp.c).max()) if n else 0.0
        self.scale = scale if scale is not None else (cmax if cmax > 0 else 1.0)
        self.Afull = sp.hstack([lp.A, sp.identity(m, format="csc")], format="csc")
        self.Afull.sort_indices()
        self.AfullT = self.Afull.T.tocsr()
        self.cfull = np.concatenate([lp.c / self.scale, np.zeros(m)])
        slo = np.array([0.0 if s == "<" else -np.inf if s == ">" else 0.0 for s in lp.senses])
        shi = np.array([np.inf if s == "<" else 0.0 for s in lp.senses])
        self.lo = np.concatenate([lp.lb, slo])
        self.hi = np.concatenate([lp.ub, shi])
        self.lo0, self.hi0 = self.lo.copy(), self.hi.copy()
        self.perturbed = np.zeros(n + m, dtype=bool)
        self._rng = np.random.default_rng(0)
        self.perturb_after = 20
        self.perturb_size = 1e-6
        self.max_iter = max_iter if max_iter is not None else 50 * (m + n) + 1000
        self.iters = 0
        self.phase1_iters = 0
        self.dual_iters = 0
        self.warm = warm is not None
        self._init_basis(warm)

    # ---- basis setup -----------------------------------------------
    def _nonbasic_status(self, j, prefer_upper=False):
        lo, hi = self.lo[j], self.hi[j]
        if np.isfinite(lo) and np.isfinite(hi):
            return AT_UPPER if prefer_upper else AT_LOWER
        if np.isfinite(lo):
            return AT_LOWER
        if np.isfinite(hi):
            return AT_UPPER
        return FREE

    def _slack_basis(self):
        return [self.n + i for i in range(self.m)]

    def _init_basis(self, warm):
        m, n = self.m, self.n
        basis = None
        upper = set()
        if warm is not None:
            cols = [j for j in warm.basic_cols if 0 <= j < n]
            rows = [i for i in warm.basic_rows if 0 <= i < m]
            rows += list(range(max(warm.n_rows, 0), m))
            cand = cols + [n + i for i in rows]
            if len(cand) == m and len(set(cand)) == m:
                basis = cand
            upper = {j for j in warm.upper_cols if 0 <= j < n}
        self.status = np.empty(n + m, dtype=np.int8)
        for j in range(n + m):
            self.status[j] = self._nonbasic_status(j, prefer_upper=j in upper)
        self.basis = np.asarray(basis if basis is not None else self._slack_basis(), dtype=np.int64)
        try:
            self._refactor()
        except RuntimeError:  # singular warm basis: restart from the logicals
            for j in self.basis:
                self.status[j] = self._nonbasic_status(j)
            self.basis = np.asarray(self._slack_basis(), dtype=np.int64)
            self._refactor()

    def _refactor(self):
        self.status[self.basis] = BASIC
        B = self.Afull[:, self.basis]
        self.factor = _Factor(B)
        self._recompute_x()

    def _nonbasic_values(self):
        x = np.zeros(self.n + self.m)
        at_lo = self.status == AT_LOWER
        at_hi = self.status == AT_UPPER
        x[at_lo] = self.lo[at_lo]
        x[at_hi] = self.hi[at_hi]
        return x

    def _recompute_x(self):
        x = self._nonbasic_values()
        x[self.basis] = 0.0
        rhs = self.lp.b - self.Afull @ x
        xb = self.factor.ftran(rhs)
        x[self.basis] = xb
        self.x = x

    # ---- main loop ---------------------------------------------------
    def run(self):
        m, n = self.m, self.n
        if self.warm:
            self._dual()
        bland = False
        degenerate = 0
        limit_degen = 5 * (m + n)
        perturb_after = self.perturb_after
        rounds = 0
        verified = False
        while True:
            if self.iters >= self.max_iter:
                return self._result("iteration_limit")
            if len(self.factor.etas) >= REFACTOR_EVERY:
                self._refactor()
            basis = self.basis
            xb = self.x[basis]
            lob, hib = self.lo[basis], self.hi[basis]
            below = xb < lob - PRIMAL_TOL
            above = xb > hib + PRIMAL_TOL
            phase1 = bool(below.any() or above.any())
            if phase1:
                cb = below.astype(float) - above.astype(float)
                cost = np.zeros(n + m)
            else:
                cb = self.cfull[basis]
                cost = self.cfull
            y = self.factor.btran(cb)
            d = cost - self.AfullT @ y
            st = self.status
            up = (d > DUAL_TOL) & ((st == AT_LOWER) | (st == FREE))
            down = (d < -DUAL_TOL) & ((st == AT_UPPER) | (st == FREE))
            # fixed variables never move
            fixed = self.lo == self.hi
            up &= ~fixed
            down &= ~fixed
            elig = np.flatnonzero(up | down)
            if elig.size == 0:
                if self.factor.etas and not verified:
                    self._refactor()
                    verified = True
                    continue
                if self.perturbed.any():
                    # drop the shifted bounds and let the loop repair any residue
                    self._unperturb()
                    verified = False
                    continue
                if phase1:
                    return self._result("infeasible")
                return self._result("optimal")
            verified = False
            if bland:
                j = int(elig[0])
            else:
                j = int(elig[np.argmax(np.abs(d[elig]))])
            direction = 1.0 if up[j] else -1.0
            col = self._column(j)
            alpha = self.factor.ftran(col)
            if bland:
                theta, r, leave_upper = self._ratio_bland(alpha, direction, j, phase1)
            else:
                theta, r, leave_upper = self._ratio(alpha, direction, j, phase1)
            if theta is None:
                if phase1:  # pragma: no cover - bounded by construction
                    raise LpError("phase 1 ray: numerical breakdown")
                return self._result("unbounded")
            self.iters += 1
            if phase1:
                self.phase1_iters += 1
            if theta <= 1e-12:
                degenerate += 1
                if degenerate == perturb_after and rounds < 5:
                    rounds += 1
                    self._perturb()
                    degenerate = 0
                elif degenerate > limit_degen:
                    bland = True
            else:
                degenerate = 0
                bland = False
            # move
            self.x[basis] -= direction * theta * alpha
            self.x[j] += direction * theta
            if r < 0:  # bound flip of the entering variable
                self.status[j] = AT_UPPER if direction > 0 else AT_LOWER
                self.x[j] = self.hi[j] if direction > 0 else self.lo[j]
                continue
            leaving = self.basis[r]
            self.status[leaving] = AT_UPPER if leave_upper else AT_LOWER
            if not np.isfinite(self.hi[leaving] if leave_upper else self.lo[leaving]):
                self.status[leaving] = FREE
                self.x[leaving] = 0.0
            else:
                self.x[leaving] = self.hi[leaving] if leave_upper else self.lo[leaving]
            self.basis[r] = j
            self.status[j] = BASIC
            if self.perturbed.any():
                self._shift([j])
            self.factor.push(r, alpha)

    # ---- dual simplex for warm starts ------------------------------------
    def _reduced_costs(self):
        y = self.factor.btran(self.cfull[self.basis])
        return self.cfull - self.AfullT @ y

    def _dual_feasible(self, d):
        st = self.status
        free = self.lo < self.hi
        bad = free & (
            ((st == AT_LOWER) & (d > DUAL_TOL))
            | ((st == AT_UPPER) & (d < -DUAL_TOL))
            | ((st == FREE) & (np.abs(d) > DUAL_TOL))
        )
        return not bad.any()

    def _dual(self):
        """Bounded dual simplex; stops early and leaves the rest to the primal loop."""
        d = self._reduced_costs()
        if not self._dual_feasible(d):
            return
        # partition LPs are massively dual degenerate; shifting nonbasic costs
        # away from zero keeps the dual ratio test from stalling
        cost = self.cfull
        st = self.status
        shift = self.perturb_size * (1.0 + self._rng.random(len(cost))) * (1.0 + np.abs(cost))
        movable = (st != BASIC) & (self.lo < self.hi)
        self.cfull = cost - np.where(movable & (st == AT_LOWER), shift, 0.0) \
            + np.where(movable & (st == AT_UPPER), shift, 0.0)
        try:
            self._dual_pivots()
        finally:
            self.cfull = cost

    def _dual_pivots(self):
        m = self.m
        cap = 50 * m + 1000
        # dual steepest-edge weights ~ squared norms of the rows of B^-1, started at 1
        w = np.ones(m)
        while self.dual_iters < cap and self.iters < self.max_iter:
            if len(self.factor.etas) >= REFACTOR_EVERY:
                self._refactor()
            basis = self.basis
            xb = self.x[basis]
            lob, hib = self.lo[basis], self.hi[basis]
            viol = np.maximum(lob - xb, 0.0) + np.maximum(xb - hib, 0.0)
            if not m or viol.max() <= PRIMAL_TOL:
                return
            r = int(np.argmax(np.where(viol > PRIMAL_TOL, viol * viol / w, 0.0)))
            raise_up = xb[r] < lob[r]
            target = lob[r] if raise_up else hib[r]
            e = np.zeros(m)
            e[r] = 1.0
            rho = self.factor.btran(e)
            row = self.AfullT @ rho
            d = self._reduced_costs()
            st = self.status
            movable = (st != BASIC) & (self.lo < self.hi) & (np.abs(row) > PIVOT_TOL)
            # x_Br moves by -row[j] per unit of x_j; lower-bounded columns only increase
            sgn = -row if raise_up else row
            cand = movable & (
                ((st == AT_LOWER) & (sgn > 0)) | ((st == AT_UPPER) & (sgn < 0)) | (st == FREE)
            )
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                return  # primal infeasible; phase 1 will confirm it
            ratios = np.abs(d[idx]) / np.abs(row[idx])
            # Harris pass: among near-minimal ratios prefer the largest pivot
            relaxed = ((np.abs(d[idx]) + DUAL_TOL) / np.abs(row[idx])).min()
            near = idx[ratios <= relaxed]
            j = int(near[np.argmax(np.abs(row[near]))])
            alpha = self.factor.ftran(self._column(j))
            ar = alpha[r]
            if abs(ar) <= PIVOT_TOL:
                self._refactor()
                return
            # steepest-edge update (exact weight for the pivot row)
            wr = float(rho @ rho)
            tau = self.factor.ftran(rho)
            ratio = alpha / ar
            w = np.maximum(w - 2.0 * ratio * tau + ratio * ratio * wr, 1e-4)
            w[r] = max(wr / (ar * ar), 1e-4)
            delta = (xb[r] - target) / ar
            self.x[basis] -= delta * alpha
            self.x[j] += delta
            leaving = basis[r]
            self.x[leaving] = target
            self.status[leaving] = AT_LOWER if raise_up else AT_UPPER
            self.basis[r] = j
            self.status[j] = BASIC
            self.factor.push(r, alpha)
            self.iters += 1
            self.dual_iters += 1

    def _ratio(self, alpha, direction, j, phase1):
        """Harris two-pass ratio test; returns (theta, row or -1 for a bound flip, leaves_at_upper)."""
        basis = self.basis
        xb = self.x[basis]
        lob, hib = self.lo[basis], self.hi[basis]
        delta = -direction * alpha
        big = np.abs(alpha) > PIVOT_TOL
        inc = big & (delta > 0)
        dec = big & (delta < 0)
        limit = np.full(len(basis), np.inf)
        target_upper = np.zeros(len(basis), dtype=bool)
        if phase1:
            below = xb < lob - PRIMAL_TOL
            above = xb > hib + PRIMAL_TOL
            ok = ~below & ~above
            # increasing: below-infeasible stops at lb, feasible stops at ub
            m1 = inc & below
            limit[m1] = (lob[m1] - xb[m1] + PRIMAL_TOL) / delta[m1]
            m2 = inc & ok & np.isfinite(hib)
            limit[m2] = (hib[m2] - xb[m2] + PRIMAL_TOL) / delta[m2]
            target_upper[m2] = True
            m3 = dec & above
            limit[m3] = (hib[m3] - xb[m3] - PRIMAL_TOL) / delta[m3]
            target_upper[m3] = True
            m4 = dec & ok & np.isfinite(lob)
            limit[m4] = (lob[m4] - xb[m4] - PRIMAL_TOL) / delta[m4]
        else:
            m2 = inc & np.isfinite(hib)
            limit[m2] = (hib[m2] - xb[m2] + PRIMAL_TOL) / delta[m2]
            target_upper[m2] = True
            m4 = dec & np.isfinite(lob)
            limit[m4] = (lob[m4] - xb[m4] - PRIMAL_TOL) / delta[m4]
        span = self.hi[j] - self.lo[j]
        theta_max = min(limit.min() if limit.size else np.inf, span)
        if not np.isfinite(theta_max):
            return None, -1, False
        if span <= theta_max:
            return max(span, 0.0), -1, False
        # second pass: among rows within the relaxed bound, take the largest pivot
        target = np.where(target_upper, hib, lob)
        with np.errstate(divide="ignore", invalid="ignore"):
            exact = np.where(np.isfinite(limit), (target - xb) / delta, np.inf)
        cand = np.flatnonzero(np.isfinite(limit) & (exact <= theta_max))
        if cand.size == 0:
            cand = np.flatnonzero(limit == limit.min())
        r = int(cand[np.argmax(np.abs(alpha[cand]))])
        theta = max(float(exact[r]), 0.0)
        return theta, r, bool(target_upper[r])

    def _column(self, j):
        A = self.Afull
        lo, hi = A.indptr[j], A.indptr[j + 1]
        col = np.zeros(self.m)
        col[A.indices[lo:hi]] = A.data[lo:hi]
        return col

    # ---- degeneracy handling -----------------------------------------
    def _perturb(self):
        """Relax the bounds of degenerate basic variables by small random amounts."""
        basis = self.basis
        xb = self.x[basis]
        tight = ~self.perturbed[basis] & (
            (np.abs(xb - self.lo[basis]) <= 1e-7) | (np.abs(xb - self.hi[basis]) <= 1e-7)
        )
        self._shift(basis[tight])

    def _shift(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        idx = idx[~self.perturbed[idx]]
        if idx.size == 0:
            return
        shift = self.perturb_size * (1.0 + self._rng.random(idx.size))
        lo, hi = self.lo[idx], self.hi[idx]
        self.lo[idx] = np.where(np.isfinite(lo) & (lo < hi), lo - shift * (1 + np.abs(lo)), lo)
        self.hi[idx] = np.where(np.isfinite(hi) & (lo < hi), hi + shift * (1 + np.abs(hi)), hi)
        self.perturbed[idx] = True

    def _unperturb(self):
        self.lo = self.lo0.copy()
        self.hi = self.hi0.copy()
        self.perturbed[:] = False
        self._recompute_x()

    def _ratio_bland(self, alpha, direction, j, phase1):
        """Textbook min-ratio test, ties broken by the smallest variable index."""
        basis = self.basis
        xb = self.x[basis]
        lob, hib = self.lo[basis], self.hi[basis]
        delta = -direction * alpha
        big = np.abs(alpha) > PIVOT_TOL
        limit = np.full(len(basis), np.inf)
        target_upper = np.zeros(len(basis), dtype=bool)
        below = xb < lob - PRIMAL_TOL if phase1 else np.zeros(len(basis), dtype=bool)
        above = xb > hib + PRIMAL_TOL if phase1 else np.zeros(len(basis), dtype=bool)
        with np.errstate(divide="ignore", invalid="ignore"):
            inc = big & (delta > 0)
            dec = big & (delta < 0)
            m1 = inc & below
            limit[m1] = (lob[m1] - xb[m1]) / delta[m1]
            m2 = inc & ~below & np.isfinite(hib)
            limit[m2] = (hib[m2] - xb[m2]) / delta[m2]
            target_upper[m2] = True
            m3 = dec & above
            limit[m3] = (hib[m3] - xb[m3]) / delta[m3]
            target_upper[m3] = True
            m4 = dec & ~above & np.isfinite(lob)
            limit[m4] = (lob[m4] - xb[m4]) / delta[m4]
        limit = np.maximum(limit, 0.0)
        span = self.hi[j] - self.lo[j]
        theta_min = limit.min() if limit.size else np.inf
        if span <= theta_min:
            if not np.isfinite(span):
                return None, -1, False
            return max(span, 0.0), -1, False
        ties = np.flatnonzero(limit <= theta_min + 1e-12)
        r = int(ties[np.argmin(basis[ties])])
        return float(limit[r]), r, bool(target_upper[r])

    def _result(self, status):
        n, m = self.n, self.m
        if self.perturbed.any():
            self._unperturb()
        x = self.x[:n].copy()
        basis = self.basis
        y = self.factor.btran(self.cfull[basis]) * self.scale
        d = self.lp.c - self.lp.A.T @ y
        obj = float(self.lp.c @ x)
        wb = WarmBasis(
            tuple(int(j) for j in basis if j < n),
            tuple(int(j - n) for j in basis if j >= n),
            tuple(int(j) for j in np.flatnonzero(self.status[:n] == AT_UPPER)),
            m,
        )
        if status != "optimal":
            obj = float("nan") if status != "iteration_limit" else obj
        return LpSolution(status, x, y, obj, d, wb, self.iters, self.phase1_iters)


def check_optimality(lp, sol, tol=1e-8):
    """Return (primal_infeasibility, dual_infeasibility, duality_gap) of an LP solution.

    The dual of ``max c.x`` with the row and bound structure above has
    objective ``b.y + sum(lb_j * min(d_j, 0)) + sum(ub_j * max(d_j, 0))`` where
    ``d = c - A^T y`` is carried by the variable bounds.
    """
    x, y, d = sol.x, sol.y, sol.reduced_costs
    Ax = lp.A @ x
    pin = 0.0
    for i, s in enumerate(lp.senses):
        if s == "<":
            pin = max(pin, Ax[i] - lp.b[i])
        elif s == ">":
            pin = max(pin, lp.b[i] - Ax[i])
        else:
            pin = max(pin, abs(Ax[i] - lp.b[i]))
    pin = max(pin, float(np.max(lp.lb - x, initial=0.0)), float(np.max(x - lp.ub, initial=0.0)))
    din = 0.0
    for i, s in enumerate(lp.senses):
        if s == "<":
            din = max(din, -y[i])
        elif s == ">":
            din = max(din, y[i])
    # a positive d needs a finite upper bound, a negative d a finite lower bound
    din = max(din, float(np.max(np.where(np.isinf(lp.ub), np.maximum(d, 0), 0), initial=0.0)))
    din = max(din, float(np.max(np.where(np.isinf(lp.lb), np.maximum(-d, 0), 0), initial=0.0)))
    # reduced costs at rounding level carry no bound term (avoids 0 * inf)
    dz = np.where(np.abs(d) > tol, d, 0.0)
    with np.errstate(invalid="ignore"):
        dual_obj = float(
            lp.b @ y
            + np.where(dz > 0, lp.ub * dz, 0).sum()
            + np.where(dz < 0, lp.lb * dz, 0).sum()
        )
    gap = abs(dual_obj - float(lp.c @ x))
    return pin, din, gap


def duals(solution, partition_rows, cardinality_row=None, side_rows=(), side_sign=None):
    """Split row duals into (lambda, mu, rho).

    ``side_sign`` re-signs side rows that were negated for assembly, so rho
    refers to the rows as the caller declared them.
    """
    if solution.status != "optimal":
        raise LpError(f"duals requested from a {solution.status} solution")
    y = solution.y
    lam = y[np.asarray(partition_rows, dtype=np.int64)]
    mu = float(y[cardinality_row]) if cardinality_row is not None else 0.0
    rho = y[np.asarray(side_rows, dtype=np.int64)] if len(side_rows) else np.zeros(0)
    if side_sign is not None and len(rho):
        rho = rho * np.asarray(side_sign, dtype=float)
    return lam, mu, rho
