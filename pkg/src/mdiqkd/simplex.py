"""Self-contained dense simplex solver for small bounded linear programs.

Implements the revised simplex method with an explicitly maintained basis
inverse, general variable bounds handled in place (bound flips instead of
variable splitting), and a two-phase start using per-row artificial
variables.  Two-sided constraints are expressed as single range rows whose
slack lives in ``[0, high - low]``, collapsing to an exact equality when the
width falls below the feasibility tolerance — crucial for the estimation
programs, where writing the two sides as separate rows would duplicate every
coefficient vector and leave the solver crawling through the degenerate
vertices in between.  The entering variable is chosen by the smallest-index
rule; the leaving variable takes the largest pivot magnitude among the tied
blockers (stability) with smallest-index fallback, so every solve is
bit-reproducible.  If progress stalls in long degenerate runs the leaving
rule drops to the pure smallest-index (Bland) choice, whose termination
guarantee breaks any cycle; an iteration ceiling and a full-refactor rerun
remain as the outermost guards.

This is deliberately a dense, small-scale solver: the estimation problems it
serves have at most a few hundred rows and columns, where an explicit inverse
updated in product form is fast enough and easy to audit.  It has no
ambitions beyond that scale.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Hashable, Mapping, Optional

import numpy as np

from .errors import ComputationError

LOG = logging.getLogger(__name__)

SENSES = ("minimize", "maximize")
RELATIONS = ("<=", ">=", "between")

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

FEAS_TOL = 1e-9        # per-constraint feasibility (on equilibrated rows)
COST_TOL = 1e-9        # reduced-cost optimality threshold
PIVOT_TOL = 1e-11      # absolute floor for ratio-test pivots
PIVOT_NOISE = 256.0    # pivots below this multiple of their roundoff bound are noise
PHASE1_TOL = 1e-7      # residual artificial mass still considered feasible
AUDIT_RESIDUAL = 1e-6  # row residual tolerated in the final solution
AUDIT_DRIFT = 1e-4     # worst bound violation tolerated in the final solution
REFACTOR_EVERY = 32    # pivots between basis-inverse recomputations
STALL_STEP = 1e-9      # ratio-test steps at or below this count as no progress
STALL_LIMIT = 100      # stalled pivots before the leaving rule falls back to Bland

_EPS = float(np.finfo(float).eps)

_BASIC, _AT_LOWER, _AT_UPPER, _FREE = 0, 1, 2, 3


@dataclass(frozen=True)
class LpProblem:
    """A bounded linear program: optimize c.x subject to A x {<=,>=} b, l <= x <= u.

    A relation may also be ``"between"``, meaning
    ``rhs_low[i] <= (A x)_i <= rhs[i]`` as one range constraint (with
    ``rhs_low[i] == rhs[i]`` this is an equality).  ``rhs_low`` entries on
    non-range rows are ignored and normalized to NaN.  ``variable_index``
    optionally maps a semantic key (for the decoy programs: ``(n, m, kind)``)
    to its column; when given it must cover every column exactly once.
    Infinite variable bounds are accepted; the decoy-state builders only ever
    produce [0, 1] boxes.
    """

    objective: np.ndarray
    sense: str
    constraint_matrix: np.ndarray
    relations: tuple[str, ...]
    rhs: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    variable_index: Optional[Mapping[Hashable, int]] = None
    rhs_low: Optional[np.ndarray] = None

    def __post_init__(self):
        obj = np.array(self.objective, dtype=float)
        n = obj.size
        a = np.array(self.constraint_matrix, dtype=float)
        if a.size == 0:
            a = a.reshape(0, n)
        if a.ndim != 2 or a.shape[1] != n:
            raise ValueError(
                f"constraint matrix shape {a.shape} incompatible with {n} variables"
            )
        b = np.array(self.rhs, dtype=float).reshape(-1)
        rel = tuple(self.relations)
        lo = np.array(self.lower, dtype=float).reshape(-1)
        hi = np.array(self.upper, dtype=float).reshape(-1)
        if self.sense not in SENSES:
            raise ValueError(f"sense must be one of {SENSES}, got {self.sense!r}")
        if b.shape != (a.shape[0],):
            raise ValueError(f"rhs length {b.size} != {a.shape[0]} constraints")
        if len(rel) != a.shape[0]:
            raise ValueError(f"{len(rel)} relations for {a.shape[0]} constraints")
        for r in rel:
            if r not in RELATIONS:
                raise ValueError(f"relation must be one of {RELATIONS}, got {r!r}")
        ranged = np.array([r == "between" for r in rel], dtype=bool)
        if ranged.any():
            if self.rhs_low is None:
                raise ValueError("'between' constraints require rhs_low")
            bl = np.array(self.rhs_low, dtype=float).reshape(-1)
            if bl.shape != b.shape:
                raise ValueError(f"rhs_low length {bl.size} != {b.size} constraints")
            if not np.isfinite(bl[ranged]).all():
                raise ValueError("rhs_low must be finite on 'between' rows")
            if np.any(bl[ranged] > b[ranged]):
                raise ValueError("'between' rows need rhs_low <= rhs")
            bl[~ranged] = np.nan
        else:
            bl = None
        if lo.shape != (n,) or hi.shape != (n,):
            raise ValueError("variable bounds must have one (low, high) pair per column")
        if not (np.isfinite(obj).all() and np.isfinite(a).all() and np.isfinite(b).all()):
            raise ValueError("objective, constraint matrix and rhs must be finite")
        if np.isnan(lo).any() or np.isnan(hi).any() or np.any(lo > hi):
            raise ValueError("variable bounds must satisfy low <= high and be non-NaN")
        if self.variable_index is not None:
            cols = sorted(self.variable_index.values())
            if cols != list(range(n)):
                raise ValueError("variable_index must cover every column exactly once")
        for arr in (obj, a, b, lo, hi):
            arr.setflags(write=False)
        if bl is not None:
            bl.setflags(write=False)
        object.__setattr__(self, "objective", obj)
        object.__setattr__(self, "constraint_matrix", a)
        object.__setattr__(self, "relations", rel)
        object.__setattr__(self, "rhs", b)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "rhs_low", bl)

    @property
    def n_variables(self) -> int:
        return self.objective.size

    @property
    def n_constraints(self) -> int:
        return self.constraint_matrix.shape[0]

    def dump(self) -> str:
        """Plain-text tabular form, one constraint per line, for cross-checking
        against an external solver."""
        out = [self.sense + "  " + "  ".join(format(v, ".17g") for v in self.objective)]
        for i, (row, rel, bnd) in enumerate(
            zip(self.constraint_matrix, self.relations, self.rhs)
        ):
            body = "  ".join(format(v, ".17g") for v in row)
            if rel == "between":
                out.append(f"{self.rhs_low[i]:.17g}  <=  {body}  <=  {bnd:.17g}")
            else:
                out.append(f"{body}  {rel}  {bnd:.17g}")
        out.append(
            "vars  "
            + "  ".join(f"[{lo:.17g},{hi:.17g}]" for lo, hi in zip(self.lower, self.upper))
        )
        return "\n".join(out)


@dataclass(frozen=True)
class LpSolution:
    """Solver outcome.  ``objective_value`` is NaN unless status is optimal;
    ``variable_values`` always holds the last structural iterate."""

    status: str
    objective_value: float
    variable_values: np.ndarray
    iterations: int

    def __post_init__(self):
        if self.status not in (OPTIMAL, INFEASIBLE, UNBOUNDED):
            raise ValueError(f"unknown status {self.status!r}")
        vals = np.array(self.variable_values, dtype=float)
        vals.setflags(write=False)
        object.__setattr__(self, "variable_values", vals)


def _pow2_scale(magnitudes: np.ndarray) -> np.ndarray:
    """Nearest power of two for each positive magnitude, one elsewhere.

    Power-of-two factors make the equilibration exact: scaling and unscaling
    touch only the exponent bits, so the solved problem is bit-for-bit the
    original one expressed in better units.
    """
    out = np.ones_like(magnitudes)
    pos = magnitudes > 0
    out[pos] = np.exp2(np.rint(np.log2(magnitudes[pos])))
    return out


def _invert(mat: np.ndarray) -> np.ndarray:
    """Gauss-Jordan inverse with partial pivoting (small dense matrices)."""
    m = mat.shape[0]
    aug = np.hstack([mat.astype(float), np.eye(m)])
    for col in range(m):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[piv, col]) < 1e-300:
            raise ComputationError("singular basis matrix in simplex refactorization")
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        aug[col] = aug[col] / aug[col, col]
        factors = aug[:, col].copy()
        factors[col] = 0.0
        aug -= np.outer(factors, aug[col])
    return aug[:, m:]


class _BoundedSimplex:
    """Working state for one solve.  Columns are laid out as
    [structural | slacks | artificials]; all rows are equalities."""

    def __init__(
        self,
        problem: LpProblem,
        pivot_tol: float = PIVOT_TOL,
        refactor_every: int = REFACTOR_EVERY,
    ):
        n = problem.n_variables
        m = problem.n_constraints
        rel = np.array(problem.relations)
        sign = np.where(rel == ">=", -1.0, 1.0) if m else np.ones(0)
        a_rows = problem.constraint_matrix * sign[:, None]
        b = problem.rhs * sign
        # range rows keep their orientation: a.x + s = rhs with the slack
        # boxed in [0, rhs - rhs_low]; one-sided rows get a half-line slack
        slack_hi = np.full(m, np.inf)
        ranged = rel == "between" if m else np.zeros(0, dtype=bool)
        if ranged.any():
            slack_hi[ranged] = problem.rhs[ranged] - problem.rhs_low[ranged]

        # Equilibrate rows then columns with exact power-of-two factors.  The
        # decoy programs mix Poissonian coefficients spanning dozens of orders
        # of magnitude; without this the pivot tolerance is meaningless for
        # the faint columns and the basis can degrade into singularity.
        row_scale = _pow2_scale(np.max(np.abs(a_rows), axis=1, initial=0.0)) if m \
            else np.ones(0)
        a_rows = a_rows / row_scale[:, None]
        b = b / row_scale
        slack_hi = slack_hi / row_scale

        # A range narrower than the feasibility tolerance is below the
        # resolution the solver works at -- FEAS_TOL already blurs every row
        # by that much -- so pin its slack at the middle of the box and treat
        # the row as an exact equality.  Left free, sub-resolution boxes
        # breed endless micro-pivots: each step is capped by the box width,
        # too small to be progress yet too large to be degenerate.
        slack_lo = np.zeros(m)
        slim = ranged & (slack_hi <= FEAS_TOL)
        slack_lo[slim] = 0.5 * slack_hi[slim]
        slack_hi[slim] = slack_lo[slim]
        col_scale = _pow2_scale(
            np.max(np.abs(a_rows), axis=0, initial=0.0) if m else np.zeros(n)
        )
        a_rows = a_rows / col_scale[None, :]
        lower_s = problem.lower * col_scale
        upper_s = problem.upper * col_scale
        self.col_scale = col_scale
        self.pivot_tol = pivot_tol
        self.refactor_every = refactor_every

        # structural start point: nearest finite bound (0 for free variables)
        status = np.full(n, _AT_LOWER, dtype=np.int8)
        x0 = lower_s.copy()
        no_lo = ~np.isfinite(lower_s)
        status[no_lo] = _AT_UPPER
        x0[no_lo] = upper_s[no_lo]
        free = no_lo & ~np.isfinite(upper_s)
        status[free] = _FREE
        x0[free] = 0.0

        # each slack starts basic at the row residual; rows whose residual
        # escapes the slack box get an artificial instead, signed to absorb
        # the overshoot, with the slack parked at the violated end
        residual = b - a_rows @ x0
        s_start = np.clip(residual, slack_lo, slack_hi)
        over = residual - s_start
        art_rows = np.nonzero(np.abs(over) > FEAS_TOL)[0]
        n_art = art_rows.size

        self.n, self.m, self.n_art = n, m, n_art
        total = n + m + n_art
        self.a = np.zeros((m, total))
        self.a[:, :n] = a_rows
        self.a[:, n:n + m] = np.eye(m)
        for k, row in enumerate(art_rows):
            self.a[row, n + m + k] = 1.0 if over[row] > 0 else -1.0
        self.abs_a = np.abs(self.a)
        self.b = b
        self.lower = np.concatenate([lower_s, slack_lo, np.zeros(n_art)])
        self.upper = np.concatenate([upper_s, slack_hi, np.full(n_art, np.inf)])
        slack_status = np.full(m, _AT_LOWER, dtype=np.int8)
        slack_status[s_start >= slack_hi] = _AT_UPPER  # clipped to (or pinned at) the top
        self.status = np.concatenate(
            [status, slack_status, np.full(n_art, _AT_LOWER, dtype=np.int8)]
        )
        self.x = np.concatenate([x0, s_start, np.abs(over[art_rows])])

        self.basis = np.arange(n, n + m)
        for k, row in enumerate(art_rows):
            self.basis[row] = n + m + k
        self.status[self.basis] = _BASIC
        self.binv = np.eye(m)
        self.iterations = 0
        self._since_refactor = 0
        self.refactor()

    # -- linear-algebra housekeeping ------------------------------------

    def refactor(self):
        if self.m:
            self.binv = _invert(self.a[:, self.basis])
        self._since_refactor = 0
        self.recompute_basics()

    def recompute_basics(self):
        if not self.m:
            return
        xn = self.x.copy()
        xn[self.basis] = 0.0
        self.x[self.basis] = self.binv @ (self.b - self.a @ xn)

    def audit(self):
        """Verify the iterate still describes the (scaled) system.

        Row residuals must be near zero.  Small excursions of basic variables
        beyond their bounds are tolerated: they only *relax* the program, so a
        reported optimum stays on the conservative side of the true one; a
        violation beyond ``AUDIT_DRIFT`` means the solve lost control and is
        raised as ``ComputationError`` so callers can rerun hardened settings.
        """
        if self.m:
            residual = float(np.abs(self.a @ self.x - self.b).max())
        else:
            residual = 0.0
        lo_ok = np.isfinite(self.lower)
        hi_ok = np.isfinite(self.upper)
        below = np.where(lo_ok, self.lower - self.x, -np.inf) \
            - AUDIT_DRIFT * (1.0 + np.abs(np.where(lo_ok, self.lower, 0.0)))
        above = np.where(hi_ok, self.x - self.upper, -np.inf) \
            - AUDIT_DRIFT * (1.0 + np.abs(np.where(hi_ok, self.upper, 0.0)))
        drift = max(float(below.max(initial=-np.inf)), float(above.max(initial=-np.inf)), 0.0)
        if residual > AUDIT_RESIDUAL or drift > 0.0:
            raise ComputationError(
                f"simplex audit failed: residual {residual:.3e}, bound drift {drift:.3e}"
            )

    # -- the simplex loop -----------------------------------------------

    def optimize(self, cost: np.ndarray) -> str:
        """Minimize cost.x from the current basis; returns OPTIMAL or UNBOUNDED."""
        fixed = (self.upper - self.lower) <= 0.0
        max_iter = 500 + 20 * (self.m + self.n)
        stall = 0
        while True:
            if self.iterations > max_iter:
                raise ComputationError(
                    f"simplex iteration limit exceeded ({max_iter})"
                )
            # Reduced costs carry the same forward error as the ratio test:
            # on an ill-conditioned basis |y| is large and d inherits
            # eps * |y|.|a_j| of noise per column.  A noise-level d looks
            # like descent, buys a step that the next pricing pass takes
            # back, and the pair loops forever -- so each column's
            # optimality threshold is raised to its own error bound.
            if self.m:
                y = cost[self.basis] @ self.binv
                d = cost - y @ self.a
                d_tol = np.maximum(
                    COST_TOL, PIVOT_NOISE * _EPS * (np.abs(y) @ self.abs_a + np.abs(cost))
                )
            else:
                d = cost.copy()
                d_tol = np.full(d.size, COST_TOL)
            eligible = (
                ((self.status == _AT_LOWER) & (d < -d_tol))
                | ((self.status == _AT_UPPER) & (d > d_tol))
                | ((self.status == _FREE) & (np.abs(d) > d_tol))
            ) & ~fixed
            if not eligible.any():
                if self._since_refactor:
                    # confirm optimality against a fresh inverse: reduced
                    # costs from a drifted one can declare victory early
                    self.refactor()
                    continue
                return OPTIMAL
            j = int(np.argmax(eligible))  # smallest eligible index
            up = self.status[j] == _AT_LOWER or (self.status[j] == _FREE and d[j] < 0)
            direction = 1.0 if up else -1.0

            w = self.binv @ self.a[:, j] if self.m else np.zeros(0)
            delta = direction * w  # basic values move as x_B - t * delta
            xb = self.x[self.basis]
            lo_b, hi_b = self.lower[self.basis], self.upper[self.basis]
            # Components of w below their own roundoff level are
            # indistinguishable from zero; trusting one as a pivot can steer
            # the basis into exact singularity.  The bound has to be taken
            # per coordinate -- |w_i| is garbage when it sits inside the
            # forward error of row i of B^-1 times the column, but a single
            # global yardstick built from max|B^-1| also swallows genuinely
            # large pivots whenever the inverse carries a few huge rows, and
            # skipping a real blocker walks its variable straight through
            # the box.
            if self.m:
                err = np.abs(self.binv) @ np.abs(self.a[:, j])
                tol = np.maximum(self.pivot_tol, PIVOT_NOISE * _EPS * err)
            else:
                tol = self.pivot_tol
            with np.errstate(divide="ignore", invalid="ignore"):
                t_lo = np.where(delta > tol, (xb - lo_b) / delta, np.inf)
                t_hi = np.where(delta < -tol, (hi_b - xb) / (-delta), np.inf)
            t_block = np.maximum(np.minimum(t_lo, t_hi), 0.0)
            t_basic = float(t_block.min()) if self.m else np.inf
            span = self.upper[j] - self.lower[j]
            t_own = span if np.isfinite(span) else np.inf

            if t_own <= t_basic:
                if not np.isfinite(t_own):
                    return UNBOUNDED
                # bound flip: variable crosses its box, basis unchanged
                self.x[self.basis] = xb - t_own * delta
                if self.status[j] == _AT_LOWER:
                    self.status[j] = _AT_UPPER
                    self.x[j] = self.upper[j]
                else:
                    self.status[j] = _AT_LOWER
                    self.x[j] = self.lower[j]
                self.iterations += 1
                stall = 0 if t_own > STALL_STEP else stall + 1
                continue

            stall = 0 if t_basic > STALL_STEP else stall + 1
            # leaving variable: among the tied tightest blockers take the one
            # with the largest pivot magnitude (small pivots at degenerate
            # vertices are what erode the basis conditioning); exact magnitude
            # ties fall back to the smallest basic index, so the choice is
            # still deterministic.  After a long degenerate run the magnitude
            # preference is abandoned for the pure smallest-index (Bland)
            # choice, which provably cannot cycle.
            blockers = np.nonzero(t_block <= t_basic * (1.0 + 1e-9) + 1e-12)[0]
            if stall <= STALL_LIMIT:
                mags = np.abs(delta[blockers])
                cand = blockers[mags >= mags.max() * (1.0 - 1e-12)]
            else:
                cand = blockers
            r = int(cand[np.argmin(self.basis[cand])])
            leaving = int(self.basis[r])
            self.x[self.basis] = xb - t_basic * delta
            self.x[j] += direction * t_basic
            if delta[r] > 0:  # leaving value was driven down onto its lower bound
                self.status[leaving] = _AT_LOWER
                self.x[leaving] = self.lower[leaving]
            else:
                self.status[leaving] = _AT_UPPER
                self.x[leaving] = self.upper[leaving]
            self.basis[r] = j
            self.status[j] = _BASIC
            self.iterations += 1

            self.binv[r] /= w[r]
            col = w.copy()
            col[r] = 0.0
            self.binv -= np.outer(col, self.binv[r])
            self._since_refactor += 1
            if self._since_refactor >= self.refactor_every:
                self.refactor()


def _solve_once(problem: LpProblem, refactor_every: int) -> LpSolution:
    state = _BoundedSimplex(problem, PIVOT_TOL, refactor_every)
    n, m = state.n, state.m

    if state.n_art:
        phase1 = np.zeros(n + m + state.n_art)
        phase1[n + m:] = 1.0
        outcome = state.optimize(phase1)
        if outcome != OPTIMAL:
            raise ComputationError("phase-I simplex reported unbounded (numerical failure)")
        art_mass = float(state.x[n + m:].sum())
        if art_mass > PHASE1_TOL:
            LOG.debug("LP infeasible: residual artificial mass %.3e", art_mass)
            return LpSolution(
                INFEASIBLE, float("nan"), state.x[:n] / state.col_scale, state.iterations
            )
        # freeze artificials at zero; fixed variables never re-enter
        state.upper[n + m:] = 0.0

    sign = 1.0 if problem.sense == "minimize" else -1.0
    cost = np.zeros(n + m + state.n_art)
    cost[:n] = sign * problem.objective / state.col_scale
    outcome = state.optimize(cost)
    state.refactor()  # clean drift before reporting
    x = state.x[:n] / state.col_scale
    if outcome == UNBOUNDED:
        return LpSolution(UNBOUNDED, float("nan"), x, state.iterations)
    state.audit()
    value = float(problem.objective @ x)
    LOG.debug(
        "LP solved: %d vars, %d rows, %d iterations, objective %.12g",
        n, m, state.iterations, value,
    )
    return LpSolution(OPTIMAL, value, x, state.iterations)


def solve_lp(problem: LpProblem) -> LpSolution:
    """Solve a bounded LP with a deterministic two-phase dense simplex.

    Infeasibility and unboundedness are reported through the solution status,
    never as exceptions.  Identical problems produce bit-identical solutions.
    A solve that degrades numerically (singular basis, failed final audit) is
    rerun once with the basis inverse recomputed from scratch on every pivot,
    which trades speed for immunity to product-form drift.
    """
    try:
        return _solve_once(problem, REFACTOR_EVERY)
    except ComputationError:
        LOG.info("simplex solve degraded; rerunning in full-refactor mode")
        return _solve_once(problem, 1)
