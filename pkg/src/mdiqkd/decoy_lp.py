"""Linear-programming estimation of single-photon yield and error bounds.

The observed gains constrain the unknown per-photon-number yields through

    Q(qa, qb) = sum_{n,m} P_nm(qa, qb) Y_nm,     P_nm = e^{-(qa+qb)} qa^n qb^m / (n! m!).

Truncating the sum to S_cut = {(n, m): n <= N_cut, m <= M_cut} and bounding
the discarded mass by the Poisson tail turns each observation into a two-sided
linear constraint, so the worst-case Y_11 (and, with product variables
Z_nm = Y_nm e_nm, the worst-case error term Z_11) is the optimum of a small
dense LP.  This works for any number of decoy intensities, unlike the
closed-form combinations, and tightens as intensities are added.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .analytic import BoundResult
from .channel import ObservationSet, pair_tail, poisson_weights
from .errors import ComputationError, NoSinglePhotonSignalError
from .params import ProtocolProfile
from .simplex import INFEASIBLE, OPTIMAL, LpProblem, LpSolution, solve_lp

LOG = logging.getLogger(__name__)

DEFAULT_N_CUT = 7
DEFAULT_M_CUT = 7

# Coefficients this far below their row's largest entry are folded into the
# tail allowance instead of entering the constraint matrix.  Keeping them
# would span ~50 decades at very weak decoy intensities and wreck the
# conditioning of the simplex bases, while their worst-case contribution
# (the folded mass times a yield in [0, 1]) is far below every statistical
# width the program ever sees.
FOLD_REL = 1e-12

# Nearly coincident intensities make the Poisson rows of neighbouring
# settings almost collinear, and the solver's feasibility slack is then
# amplified by roughly 1/(separation)^2 in the recovered vertex — the
# reported "bound" can drift past the true value without any audit noticing,
# because residual checks measure backward error only.  Refusing below this
# separation keeps the amplification a couple of orders below the bound
# itself; measured violations appeared from 3e-4 downward.
MIN_SEPARATION = 1e-3

YIELD = "yield"
YIELD_ERROR = "yield_error"


def _check_cuts(n_cut: int, m_cut: int):
    if n_cut < 2 or m_cut < 2:
        raise ValueError(f"photon-number cutoffs must be >= 2, got {n_cut}, {m_cut}")


def _check_intensities(intensities: Sequence[float]) -> tuple[float, ...]:
    qs = tuple(float(q) for q in intensities)
    if not 2 <= len(qs) <= 4:
        raise ValueError(
            f"need 2-4 intensities (one to three decoy states), got {len(qs)}"
        )
    for a, b in zip(qs, qs[1:]):
        if not a > b:
            raise ValueError(f"intensities must be strictly decreasing, got {qs}")
    if qs[-1] < 0:
        raise ValueError(f"intensities must be nonnegative, got {qs}")
    for a, b in zip(qs, qs[1:]):
        if a - b < MIN_SEPARATION:
            raise ComputationError(
                f"intensities {a:g} and {b:g} are closer than {MIN_SEPARATION:g}; "
                "the estimate cannot be certified at this separation"
            )
    return qs


def _pair_rows(qs, n_cut, m_cut):
    """Poisson coefficient row and truncation tail for every ordered pair.

    Entries below ``FOLD_REL`` times the row maximum are zeroed and their mass
    added to the tail: the yields they multiply live in [0, 1], so the folded
    terms contribute at most that mass, exactly like the out-of-cut tail.
    """
    w_n = {q: poisson_weights(q, n_cut) for q in qs}
    w_m = {q: poisson_weights(q, m_cut) for q in qs}
    for qa in qs:
        for qb in qs:
            coeff = np.outer(w_n[qa], w_m[qb]).reshape(-1)
            tail = pair_tail(qa, qb, n_cut, m_cut)
            faint = coeff < FOLD_REL * coeff.max()
            if faint.any():
                tail += float(coeff[faint].sum())
                coeff = np.where(faint, 0.0, coeff)
            yield qa, qb, coeff, tail


def _gain_window(obs: ObservationSet, qa, qb, basis):
    if obs.has_intervals:
        iv = obs.interval(qa, qb, basis)
        lo, hi = iv.gain_low, iv.gain_high
    else:
        lo = hi = obs.gain(qa, qb, basis)
    return lo, hi


def _eq_window(obs: ObservationSet, qa, qb, basis):
    if obs.has_intervals:
        iv = obs.interval(qa, qb, basis)
        lo, hi = iv.eq_low, iv.eq_high
    else:
        lo = hi = obs.error_product(qa, qb, basis)
    return lo, hi


def build_yield_lp(
    obs: ObservationSet,
    intensities: Sequence[float],
    n_cut: int = DEFAULT_N_CUT,
    m_cut: int = DEFAULT_M_CUT,
    basis: str = "Z",
) -> LpProblem:
    """LP whose minimum is a certified lower bound on Y_11 in ``basis``.

    Variables: Y_nm in [0, 1] for (n, m) in S_cut.  For every ordered
    intensity pair the truncated expansion is sandwiched as

        Q_low - tail  <=  sum_{S_cut} P_nm Y_nm  <=  Q_high

    where [Q_low, Q_high] collapses to the observed gain when the observation
    set carries no confidence intervals.  The tail constant is the exact
    Poisson mass outside S_cut (computed from the complementary series, which
    avoids the cancellation in 1 - sum).
    """
    _check_cuts(n_cut, m_cut)
    qs = _check_intensities(intensities)
    n_vars = (n_cut + 1) * (m_cut + 1)
    rows, rhs_lo, rhs_hi = [], [], []
    for qa, qb, coeff, tail in _pair_rows(qs, n_cut, m_cut):
        q_low, q_high = _gain_window(obs, qa, qb, basis)
        rows.append(coeff)
        rhs_lo.append(min(q_low - tail, q_high))
        rhs_hi.append(q_high)
    objective = np.zeros(n_vars)
    objective[1 * (m_cut + 1) + 1] = 1.0
    index = {(n, m, YIELD): n * (m_cut + 1) + m
             for n in range(n_cut + 1) for m in range(m_cut + 1)}
    return LpProblem(
        objective=objective,
        sense="minimize",
        constraint_matrix=np.array(rows),
        relations=("between",) * len(rows),
        rhs=np.array(rhs_hi),
        rhs_low=np.array(rhs_lo),
        lower=np.zeros(n_vars),
        upper=np.ones(n_vars),
        variable_index=index,
    )


def build_error_lp(
    obs: ObservationSet,
    intensities: Sequence[float],
    n_cut: int = DEFAULT_N_CUT,
    m_cut: int = DEFAULT_M_CUT,
) -> LpProblem:
    """LP whose maximum bounds the single-photon error term Z_11 = Y_11 e_11.

    X-basis only.  Variables are the yields Y_nm and the products
    Z_nm = Y_nm e_nm, coupled by 0 <= Z_nm <= Y_nm (e_nm <= 1).  Gain rows
    constrain the Y block exactly as in :func:`build_yield_lp`; error-product
    rows constrain the Z block through the observed E*Q with the same tail
    allowance; the objective maximizes Z_11.
    """
    _check_cuts(n_cut, m_cut)
    qs = _check_intensities(intensities)
    block = (n_cut + 1) * (m_cut + 1)
    n_vars = 2 * block
    rows, rels, rhs_lo, rhs_hi = [], [], [], []
    for qa, qb, coeff, tail in _pair_rows(qs, n_cut, m_cut):
        q_low, q_high = _gain_window(obs, qa, qb, "X")
        row = np.zeros(n_vars)
        row[:block] = coeff
        rows.append(row)
        rels.append("between")
        rhs_lo.append(min(q_low - tail, q_high))
        rhs_hi.append(q_high)
        eq_low, eq_high = _eq_window(obs, qa, qb, "X")
        row = np.zeros(n_vars)
        row[block:] = coeff
        rows.append(row)
        rels.append("between")
        rhs_lo.append(min(eq_low - tail, eq_high))
        rhs_hi.append(eq_high)
    for k in range(block):  # Z_nm - Y_nm <= 0
        row = np.zeros(n_vars)
        row[block + k] = 1.0
        row[k] = -1.0
        rows.append(row)
        rels.append("<=")
        rhs_lo.append(np.nan)
        rhs_hi.append(0.0)
    objective = np.zeros(n_vars)
    objective[block + 1 * (m_cut + 1) + 1] = 1.0
    index = {}
    for n in range(n_cut + 1):
        for m in range(m_cut + 1):
            index[(n, m, YIELD)] = n * (m_cut + 1) + m
            index[(n, m, YIELD_ERROR)] = block + n * (m_cut + 1) + m
    return LpProblem(
        objective=objective,
        sense="maximize",
        constraint_matrix=np.array(rows),
        relations=tuple(rels),
        rhs=np.array(rhs_hi),
        rhs_low=np.array(rhs_lo),
        lower=np.zeros(n_vars),
        upper=np.ones(n_vars),
        variable_index=index,
    )


def _solved(problem: LpProblem, what: str) -> LpSolution:
    sol = solve_lp(problem)
    if sol.status == INFEASIBLE:
        raise ComputationError(
            f"{what} LP is infeasible; observations are inconsistent with any "
            f"photon-number yield table (check fluctuation settings)"
        )
    if sol.status != OPTIMAL:
        raise ComputationError(f"{what} LP did not reach an optimum: {sol.status}")
    return sol


def bounds_lp(
    obs: ObservationSet,
    profile: ProtocolProfile,
    n_cut: int = DEFAULT_N_CUT,
    m_cut: int = DEFAULT_M_CUT,
) -> BoundResult:
    """Assemble LP-based single-photon bounds for any decoy count.

    Y_11^{Z,L} minimizes the Z-basis yield LP.  The error bound divides the
    maximized error term by the independently minimized X-basis yield:
    e_11^{X,U} = min(1, Z_11^U / Y_11^{X,L}), mirroring the closed-form
    structure; this keeps the program linear at the cost of a slightly
    conservative ratio.
    """
    qs = profile.intensities
    y11_z = _solved(build_yield_lp(obs, qs, n_cut, m_cut, "Z"), "Z-basis yield").objective_value
    y11_x = _solved(build_yield_lp(obs, qs, n_cut, m_cut, "X"), "X-basis yield").objective_value
    if y11_x <= 0.0:
        raise NoSinglePhotonSignalError(
            "X-basis yield lower bound is zero; e11 is unbounded"
        )
    z11 = _solved(build_error_lp(obs, qs, n_cut, m_cut), "error").objective_value
    e11 = min(1.0, max(0.0, z11 / y11_x))
    return BoundResult(
        y11_lower=max(0.0, y11_z),
        e11_upper=e11,
        method="lp",
        decoy_count=profile.decoy_count,
        fluctuated=obs.has_intervals,
    )
