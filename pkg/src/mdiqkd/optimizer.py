"""Full protocol-parameter optimization.

The workhorse is coordinate descent with a backtracking line search: sweep
the parameters cyclically, and along each coordinate probe a step of a
quarter of the box, shrinking it geometrically (and re-expanding after a
success) until the gain falls below the relative tolerance.  The key-rate
landscape is empirically well-behaved in each coordinate, so this
derivative-free scheme reaches the optimum in a few dozen line searches —
orders of magnitude fewer objective calls than the exhaustive grid baseline
that is also provided for calibration.

Three basis-allocation policies shape the search space: ``unbiased`` pins
every X-basis probability to 1/2, ``simplified`` shares one free X-basis
probability across all intensities, and ``optimal`` frees them all.  In
two-decoy finite mode the optimal policy yields the full eight-dimensional
space: three intensities, two free intensity probabilities (the third is the
simplex remainder) and three basis probabilities.
"""

from __future__ import annotations

import itertools
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .analytic import bounds_analytic, exact_bounds
from .channel import (
    BASES,
    ObservationSet,
    PhotonChannel,
    build_channel,
    gains_from_channel,
    simulate_observations,
)
from .decoy_lp import DEFAULT_M_CUT, DEFAULT_N_CUT, bounds_lp
from .errors import ComputationError, ConfigError, NoSinglePhotonSignalError
from .fluctuations import FluctuationSetting, attach_intervals
from .keyrate import E11_PRIVACY_CAP, KeyRateReport, key_rate
from .params import BASIS_POLICIES, MODE_SIZES, MODES, ProtocolProfile, SystemParams

LOG = logging.getLogger(__name__)

METHODS = ("analytic", "lp", "exact")

INTENSITY_BOUNDS = (1e-6, 1.0)
PROB_BOUNDS = (1e-3, 1.0 - 1e-3)

DEFAULT_REL_TOL = 1e-4
DEFAULT_MAX_CYCLES = 50
STEP_FRACTION = 0.25   # initial line-search step as a fraction of the box
STEP_SHRINK = 0.5
STEP_EXPAND = 2.0
MIN_STEP = 1e-6
DEFAULT_GRID_BUDGET = 10**7
GRID_CHUNK = 65536

_INTENSITY_NAMES: Mapping[str, tuple[str, ...]] = {
    "one-decoy": ("mu", "nu"),
    "two-decoy": ("mu", "nu", "omega"),
    "three-decoy": ("mu", "nu1", "nu2", "omega"),
}

#: Multi-start points (guard against flat zero-rate basins), expressed by
#: coordinate name; unused names are simply ignored for smaller spaces.
DEFAULT_STARTS: tuple[Mapping[str, float], ...] = (
    {"mu": 0.3, "nu": 0.05, "nu1": 0.1, "nu2": 0.02, "omega": 1e-5,
     "p_mu": 0.5, "p_nu": 0.3, "p_nu1": 0.2, "p_nu2": 0.15,
     "p_x": 0.5, "p_x_mu": 0.1, "p_x_nu": 0.6, "p_x_nu1": 0.5,
     "p_x_nu2": 0.6, "p_x_omega": 0.8},
    {"mu": 0.5, "nu": 0.1, "nu1": 0.15, "nu2": 0.03, "omega": 1e-4,
     "p_mu": 0.65, "p_nu": 0.2, "p_nu1": 0.15, "p_nu2": 0.1,
     "p_x": 0.3, "p_x_mu": 0.2, "p_x_nu": 0.5, "p_x_nu1": 0.4,
     "p_x_nu2": 0.5, "p_x_omega": 0.6},
    {"mu": 0.15, "nu": 0.02, "nu1": 0.05, "nu2": 0.01, "omega": 5e-6,
     "p_mu": 0.35, "p_nu": 0.35, "p_nu1": 0.25, "p_nu2": 0.2,
     "p_x": 0.7, "p_x_mu": 0.05, "p_x_nu": 0.7, "p_x_nu1": 0.6,
     "p_x_nu2": 0.7, "p_x_omega": 0.9},
)


@dataclass(frozen=True)
class SearchSpace:
    """Free coordinates, their box, and the policy context they live in.

    ``free_coordinates`` is ordered: intensities first, then intensity
    probabilities (the last intensity's probability is always the simplex
    remainder, never free), then basis probabilities.  ``pinned`` holds
    coordinates removed from the search and frozen at a value — pins bypass
    the box, which is how a scenario can fix omega = 0.
    """

    mode: str
    basis_policy: str
    finite: bool
    free_coordinates: tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray
    pinned: Mapping[str, float]
    policy_constraints: tuple[str, ...] = ()

    def __post_init__(self):
        lo = np.array(self.lower, dtype=float)
        hi = np.array(self.upper, dtype=float)
        names = tuple(self.free_coordinates)
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate coordinate names: {names}")
        if lo.shape != (len(names),) or hi.shape != (len(names),):
            raise ValueError("box bounds must match the coordinate count")
        if np.any(lo >= hi):
            raise ValueError("every coordinate needs lower < upper")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "free_coordinates", names)
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "pinned", dict(self.pinned))

    @property
    def dimension(self) -> int:
        return len(self.free_coordinates)

    def index_of(self, name: str) -> int:
        return self.free_coordinates.index(name)

    def _value(self, values: Mapping[str, float], name: str) -> Optional[float]:
        if name in values:
            return values[name]
        return self.pinned.get(name)

    def profile(self, vector: Sequence[float]) -> Optional[ProtocolProfile]:
        """Decode a coordinate vector into a profile; None if invalid.

        Invalid means: outside the box, intensity ordering violated, or the
        remainder intensity probability escaping its bounds.  Returning None
        (rather than raising) lets objectives treat invalid points as
        -infinity and keeps line searches simple.
        """
        vec = np.asarray(vector, dtype=float)
        if vec.shape != (self.dimension,):
            raise ValueError(
                f"expected {self.dimension} coordinates {self.free_coordinates}, "
                f"got shape {vec.shape}"
            )
        if np.any(vec < self.lower - 1e-12) or np.any(vec > self.upper + 1e-12):
            return None
        values = dict(zip(self.free_coordinates, vec))
        qnames = _INTENSITY_NAMES[self.mode]
        intensities = tuple(self._value(values, n) for n in qnames)
        if any(q is None for q in intensities):
            raise ValueError(f"mode {self.mode} needs all of {qnames} free or pinned")
        for a, b in zip(intensities, intensities[1:]):
            if not a > b:
                return None
        if intensities[-1] < 0:
            return None

        k = MODE_SIZES[self.mode]
        if self.finite:
            head = [self._value(values, "p_" + n) for n in qnames[:-1]]
            if any(p is None for p in head):
                raise ValueError("finite mode needs every intensity probability")
            rest = 1.0 - sum(head)
            p_intensity = (*head, rest)
            for p in p_intensity:
                if not PROB_BOUNDS[0] <= p <= PROB_BOUNDS[1]:
                    return None
            if self.basis_policy == "unbiased":
                p_x = (0.5,) * k
            elif self.basis_policy == "simplified":
                shared = self._value(values, "p_x")
                if shared is None:
                    raise ValueError("simplified policy needs the shared p_x")
                p_x = (shared,) * k
            else:
                p_x = tuple(self._value(values, "p_x_" + n) for n in qnames)
                if any(p is None for p in p_x):
                    raise ValueError("optimal policy needs every p_x coordinate")
        else:
            # asymptotic runs carry no statistics; allocation is irrelevant
            p_intensity = (1.0 / k,) * k
            p_x = (0.5,) * k
        try:
            return ProtocolProfile(
                mode=self.mode,
                intensities=intensities,
                p_intensity=p_intensity,
                p_x_given_intensity=p_x,
                basis_policy=self.basis_policy,
            )
        except ConfigError:
            return None

    def vector_from_profile(self, profile: ProtocolProfile) -> np.ndarray:
        """Encode a profile into this space's coordinates (clipped to the box).

        Useful for warm starts, including across policies: an unbiased optimum
        re-encoded in the simplified or optimal space is a valid start there.
        """
        qnames = _INTENSITY_NAMES[self.mode]
        if profile.mode != self.mode:
            raise ValueError(f"profile mode {profile.mode} != space mode {self.mode}")
        values = dict(zip(qnames, profile.intensities))
        values.update(("p_" + n, p) for n, p in zip(qnames, profile.p_intensity))
        values["p_x"] = profile.p_x_given_intensity[0]
        values.update(
            ("p_x_" + n, p) for n, p in zip(qnames, profile.p_x_given_intensity)
        )
        vec = np.array([values[n] for n in self.free_coordinates])
        return np.clip(vec, self.lower, self.upper)

    def default_init(self, start: Mapping[str, float] = DEFAULT_STARTS[0]) -> np.ndarray:
        vec = np.array([start[name] for name in self.free_coordinates])
        return np.clip(vec, self.lower, self.upper)


def build_search_space(
    mode: str,
    basis_policy: str = "optimal",
    finite: bool = True,
    pinned: Optional[Mapping[str, float]] = None,
) -> SearchSpace:
    """Assemble the coordinate list and box for a mode/policy combination."""
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
    if basis_policy not in BASIS_POLICIES:
        raise ConfigError(
            f"basis_policy must be one of {BASIS_POLICIES}, got {basis_policy!r}"
        )
    qnames = _INTENSITY_NAMES[mode]
    names: list[str] = list(qnames)
    bounds: list[tuple[float, float]] = [INTENSITY_BOUNDS] * len(qnames)
    constraints: list[str] = []
    if finite:
        for n in qnames[:-1]:
            names.append("p_" + n)
            bounds.append(PROB_BOUNDS)
        constraints.append(f"p_{qnames[-1]} = 1 - sum(other intensity probabilities)")
        if basis_policy == "unbiased":
            constraints.append("p_x fixed to 1/2 for every intensity")
        elif basis_policy == "simplified":
            names.append("p_x")
            bounds.append(PROB_BOUNDS)
            constraints.append("one shared p_x for every intensity")
        else:
            for n in qnames:
                names.append("p_x_" + n)
                bounds.append(PROB_BOUNDS)
    else:
        constraints.append("asymptotic: probability allocation excluded")

    pins = dict(pinned or {})
    for name in pins:
        if name not in names:
            raise ConfigError(
                f"cannot pin unknown coordinate {name!r}; valid: {tuple(names)}"
            )
    free = [(n, b) for n, b in zip(names, bounds) if n not in pins]
    return SearchSpace(
        mode=mode,
        basis_policy=basis_policy,
        finite=finite,
        free_coordinates=tuple(n for n, _ in free),
        lower=np.array([b[0] for _, b in free]),
        upper=np.array([b[1] for _, b in free]),
        pinned=pins,
        policy_constraints=tuple(constraints),
    )


@dataclass(frozen=True)
class OptimizationTrace:
    """Best-so-far record of one coordinate-descent run.

    ``iterations`` holds (coordinate vector, raw rate) after the initial
    evaluation and after every coordinate line search; the rate sequence is
    nondecreasing by construction and validated here.  ``cycles`` counts full
    coordinate sweeps and ``coordinate_steps`` individual line searches —
    both are reported because "iterations" alone is ambiguous between them.
    """

    iterations: tuple[tuple[np.ndarray, float], ...]
    converged: bool
    evaluations: int
    cycles: int
    coordinate_steps: int

    def __post_init__(self):
        if not self.iterations:
            raise ValueError("a trace needs at least the initial evaluation")
        rates = [r for _, r in self.iterations]
        for a, b in zip(rates, rates[1:]):
            if b < a:
                raise ValueError(f"trace rates must be nondecreasing: {a} -> {b}")
        frozen = []
        for vec, rate in self.iterations:
            arr = np.array(vec, dtype=float)
            arr.setflags(write=False)
            frozen.append((arr, float(rate)))
        object.__setattr__(self, "iterations", tuple(frozen))

    @property
    def best_vector(self) -> np.ndarray:
        return self.iterations[-1][0]

    @property
    def best_rate(self) -> float:
        return self.iterations[-1][1]


def _relative_gain(before: float, after: float) -> float:
    if after <= before:
        return 0.0
    if not math.isfinite(before):
        return math.inf
    return (after - before) / max(abs(before), 1e-300)


def _line_search(
    f: Callable[[np.ndarray], float],
    x: np.ndarray,
    fx: float,
    i: int,
    lo: float,
    hi: float,
    rel_tol: float,
) -> tuple[np.ndarray, float]:
    """Maximize along coordinate i by backtracking from a quarter-box step."""
    step = STEP_FRACTION * (hi - lo)
    while step >= MIN_STEP:
        best_x, best_f = x, fx
        for sign in (1.0, -1.0):
            trial = x.copy()
            trial[i] = min(hi, max(lo, x[i] + sign * step))
            if trial[i] == x[i]:
                continue
            ft = f(trial)
            if ft > best_f:
                best_x, best_f = trial, ft
        if best_f > fx:
            gain = _relative_gain(fx, best_f)
            direction = 1.0 if best_x[i] > x[i] else -1.0
            x, fx = best_x, best_f
            # ride the successful direction outward while it keeps paying
            grown = step * STEP_EXPAND
            while True:
                trial = x.copy()
                trial[i] = min(hi, max(lo, x[i] + direction * grown))
                if trial[i] == x[i]:
                    break
                ft = f(trial)
                if ft <= fx:
                    break
                gain = _relative_gain(fx, ft)
                x, fx = trial, ft
                step = grown
                grown = step * STEP_EXPAND
            if gain < rel_tol:
                return x, fx  # diminishing returns on this coordinate
        step *= STEP_SHRINK
    return x, fx


def lsa_optimize(
    space: SearchSpace,
    objective: Callable[[np.ndarray], float],
    init: Optional[Sequence[float]] = None,
    *,
    rel_tol: float = DEFAULT_REL_TOL,
    max_cycles: int = DEFAULT_MAX_CYCLES,
) -> OptimizationTrace:
    """Cyclic coordinate descent with backtracking line searches.

    The trace records the point after every coordinate search; rates are
    nondecreasing because a line search only ever accepts improvements.
    Convergence means a full sweep improved the rate by less than ``rel_tol``
    (relative); hitting ``max_cycles`` first is reported as non-convergence,
    not an exception.
    """
    evals = 0

    def f(v: np.ndarray) -> float:
        nonlocal evals
        evals += 1
        return objective(v)

    x = space.default_init() if init is None else np.array(init, dtype=float)
    if x.shape != (space.dimension,):
        raise ValueError(
            f"init must have {space.dimension} coordinates, got shape {x.shape}"
        )
    fx = f(x)
    steps: list[tuple[np.ndarray, float]] = [(x.copy(), fx)]
    converged = False
    cycles = 0
    coordinate_steps = 0
    for _ in range(max_cycles):
        f_cycle_start = fx
        for i in range(space.dimension):
            x, fx = _line_search(
                f, x, fx, i, float(space.lower[i]), float(space.upper[i]), rel_tol
            )
            coordinate_steps += 1
            steps.append((x.copy(), fx))
        cycles += 1
        if _relative_gain(f_cycle_start, fx) < rel_tol:
            converged = True
            break
    LOG.debug(
        "LSA %s/%s: rate %.6g after %d cycles (%d line searches, %d evaluations)%s",
        space.mode, space.basis_policy, fx, cycles, coordinate_steps, evals,
        "" if converged else " [max_cycles hit]",
    )
    return OptimizationTrace(
        iterations=tuple(steps),
        converged=converged,
        evaluations=evals,
        cycles=cycles,
        coordinate_steps=coordinate_steps,
    )


def exhaustive_search(
    space: SearchSpace,
    objective: Callable[[np.ndarray], float],
    points_per_dim: int = 10,
    pinned: Optional[Mapping[str, float]] = None,
    *,
    objective_batch: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    budget: float = DEFAULT_GRID_BUDGET,
) -> tuple[np.ndarray, float]:
    """Evaluate the full Cartesian grid and return (best vector, best rate).

    ``pinned`` freezes additional coordinates of ``space`` at given values
    (on top of the space's own pins).  Ties break to the lexicographically
    smallest vector — the grid is walked in lexicographic order and only a
    strict improvement replaces the incumbent.  ``objective_batch``, when
    given, must map an (N, dim) array to N rates and is used chunk-wise;
    otherwise points are evaluated one by one.  A grid larger than ``budget``
    triggers a warning but still runs.
    """
    if points_per_dim < 2:
        raise ValueError(f"points_per_dim must be >= 2, got {points_per_dim}")
    pins = dict(pinned or {})
    for name in pins:
        if name not in space.free_coordinates:
            raise ConfigError(f"cannot pin unknown coordinate {name!r}")
    grid_idx = [
        i for i, n in enumerate(space.free_coordinates) if n not in pins
    ]
    axes = [
        np.linspace(space.lower[i], space.upper[i], points_per_dim) for i in grid_idx
    ]
    total = points_per_dim ** len(grid_idx)
    if total > budget:
        warnings.warn(
            f"exhaustive grid holds {total:.3g} evaluations, over the budget "
            f"of {budget:.3g}; this may take a while",
            RuntimeWarning,
            stacklevel=2,
        )
    base = np.empty(space.dimension)
    for name, value in pins.items():
        base[space.index_of(name)] = value

    best_vec: Optional[np.ndarray] = None
    best_rate = -math.inf
    if objective_batch is None:
        for combo in itertools.product(*axes):
            vec = base.copy()
            vec[grid_idx] = combo
            rate = objective(vec)
            if best_vec is None or rate > best_rate:
                best_vec, best_rate = vec, rate
    else:
        strides = [
            points_per_dim ** (len(grid_idx) - 1 - d) for d in range(len(grid_idx))
        ]
        for start in range(0, total, GRID_CHUNK):
            idx = np.arange(start, min(start + GRID_CHUNK, total))
            block = np.tile(base, (idx.size, 1))
            for d, axis in enumerate(axes):
                block[:, grid_idx[d]] = axis[(idx // strides[d]) % points_per_dim]
            rates = np.asarray(objective_batch(block), dtype=float)
            if rates.shape != (idx.size,):
                raise ValueError("objective_batch must return one rate per row")
            k = int(np.argmax(rates))
            if best_vec is None or rates[k] > best_rate:
                best_vec, best_rate = block[k].copy(), float(rates[k])
    assert best_vec is not None  # points_per_dim >= 2 guarantees evaluations
    return best_vec, best_rate


def make_objective(
    params: SystemParams,
    space: SearchSpace,
    method: str = "analytic",
    n_cut: int = DEFAULT_N_CUT,
    m_cut: int = DEFAULT_M_CUT,
    channel: Optional[PhotonChannel] = None,
) -> Callable[[np.ndarray], float]:
    """End-to-end raw-rate objective: decode -> simulate -> bound -> rate.

    Returns the unclamped rate (negative when error correction wins) and
    -inf for vectors that decode to no valid profile, whose X-basis yield
    bound vanishes, or whose bound computation cannot be certified (the LP
    route refuses numerically degenerate corners rather than report an
    untrustworthy optimum; scoring them -inf simply steers the search away).
    Gains for a given intensity tuple are cached — during a probability line
    search the photon-level observables do not change, only the pulse
    allocation does.
    """
    _check_method(space.mode, method)
    chan = channel if channel is not None else build_channel(params)
    setting = FluctuationSetting.from_epsilon(params.epsilon) if space.finite else None
    gain_cache: dict[tuple[float, ...], tuple[dict, dict]] = {}

    def objective(vector: np.ndarray) -> float:
        profile = space.profile(vector)
        if profile is None:
            return -math.inf
        qs = profile.intensities
        cached = gain_cache.get(qs)
        if cached is None:
            if len(gain_cache) >= 4096:
                gain_cache.clear()
            gains, qbers = {}, {}
            for qa in qs:
                for qb in qs:
                    for basis in BASES:
                        q, e = gains_from_channel(chan, qa, qb, basis)
                        gains[(qa, qb, basis)] = q
                        qbers[(qa, qb, basis)] = e
            cached = (gains, qbers)
            gain_cache[qs] = cached
        counts = {}
        for ia, qa in enumerate(qs):
            for ib, qb in enumerate(qs):
                for basis in BASES:
                    pa = profile.p_intensity[ia] * profile.p_basis(qa, basis)
                    pb = profile.p_intensity[ib] * profile.p_basis(qb, basis)
                    counts[(qa, qb, basis)] = params.n_pulses * pa * pb
        obs = ObservationSet(gains=cached[0], qbers=cached[1], pulse_counts=counts)
        if setting is not None:
            obs = attach_intervals(obs, setting)
        try:
            bounds = _compute_bounds(obs, profile, method, n_cut, m_cut, chan)
        except (NoSinglePhotonSignalError, ComputationError):
            return -math.inf
        report = key_rate(bounds, obs, profile, params, finite=space.finite)
        return report.raw_rate

    return objective


def _check_method(mode: str, method: str):
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}, got {method!r}")
    if method == "analytic" and mode == "three-decoy":
        raise ConfigError(
            "no closed-form three-decoy bounds exist; use method='lp'"
        )


def _compute_bounds(obs, profile, method, n_cut, m_cut, channel):
    if method == "analytic":
        return bounds_analytic(obs, profile)
    if method == "lp":
        return bounds_lp(obs, profile, n_cut, m_cut)
    return exact_bounds(channel)


def evaluate_profile(
    params: SystemParams,
    profile: ProtocolProfile,
    method: str = "analytic",
    finite: bool = True,
    n_cut: int = DEFAULT_N_CUT,
    m_cut: int = DEFAULT_M_CUT,
    channel: Optional[PhotonChannel] = None,
) -> KeyRateReport:
    """Single-point pipeline: simulate, bound, and assemble the rate report."""
    _check_method(profile.mode, method)
    chan = channel if channel is not None else build_channel(params)
    obs = simulate_observations(params, profile, channel=chan)
    if finite:
        obs = attach_intervals(obs, FluctuationSetting.from_epsilon(params.epsilon))
    bounds = _compute_bounds(obs, profile, method, n_cut, m_cut, chan)
    return key_rate(bounds, obs, profile, params, finite=finite)


def optimize_protocol(
    params: SystemParams,
    mode: str,
    basis_policy: str = "optimal",
    method: str = "analytic",
    *,
    finite: bool = True,
    n_cut: int = DEFAULT_N_CUT,
    m_cut: int = DEFAULT_M_CUT,
    pinned: Optional[Mapping[str, float]] = None,
    starts: int = 3,
    extra_starts: Sequence[Sequence[float]] = (),
    rel_tol: float = DEFAULT_REL_TOL,
    max_cycles: int = DEFAULT_MAX_CYCLES,
) -> tuple[ProtocolProfile, KeyRateReport, OptimizationTrace]:
    """Build the search space, run multi-start LSA, and report the best point.

    ``extra_starts`` come first (handy for warm-starting one policy from
    another's optimum), then the built-in list (up to ``starts``).  Without
    extra starts the search stops at the first built-in start that converges
    to a positive rate; with them every start is explored and the best result
    wins, so a warm seed can never mask a better cold basin.  When no start
    finds a positive rate the best (zero-clamped) profile is still returned —
    callers detect the failure by ``report.rate_per_pulse == 0``.
    """
    if starts < 1:
        raise ValueError(f"starts must be >= 1, got {starts}")
    space = build_search_space(mode, basis_policy, finite=finite, pinned=pinned)
    chan = build_channel(params)
    objective = make_objective(params, space, method, n_cut, m_cut, channel=chan)

    start_vectors = [np.asarray(v, dtype=float) for v in extra_starts]
    start_vectors.extend(space.default_init(s) for s in DEFAULT_STARTS[:starts])
    best: Optional[OptimizationTrace] = None
    for vec in start_vectors:
        trace = lsa_optimize(
            space, objective, vec, rel_tol=rel_tol, max_cycles=max_cycles
        )
        if best is None or trace.best_rate > best.best_rate:
            best = trace
        if not extra_starts and trace.converged and trace.best_rate > 0.0:
            break
    assert best is not None
    profile = space.profile(best.best_vector)
    if profile is None:  # every start stuck in invalid territory
        profile = space.profile(space.default_init())
        assert profile is not None
    try:
        report = evaluate_profile(
            params, profile, method, finite=space.finite, n_cut=n_cut,
            m_cut=m_cut, channel=chan,
        )
    except NoSinglePhotonSignalError:
        report = _zero_report(params, profile, chan, space.finite)
    return profile, report, best


def _zero_report(params, profile, channel, finite) -> KeyRateReport:
    """Honest all-is-lost report: no certifiable single-photon signal."""
    from .analytic import BoundResult

    obs = simulate_observations(params, profile, channel=channel)
    bounds = BoundResult(
        y11_lower=0.0,
        e11_upper=1.0,
        method="analytic" if profile.mode != "three-decoy" else "lp",
        decoy_count=profile.decoy_count,
        fluctuated=finite,
    )
    return key_rate(bounds, obs, profile, params, finite=finite)


# ---------------------------------------------------------------------------
# Vectorized two-decoy analytic objective for grid baselines
# ---------------------------------------------------------------------------

def _h2_vec(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    inner = (x > 0.0) & (x < 1.0)
    xi = x[inner]
    out[inner] = -xi * np.log2(xi) - (1.0 - xi) * np.log2(1.0 - xi)
    return out


def make_batch_objective(
    params: SystemParams,
    space: SearchSpace,
    channel: Optional[PhotonChannel] = None,
) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized counterpart of :func:`make_objective` (two-decoy, analytic).

    Exists because the exhaustive baseline needs ~10^7 evaluations, which the
    scalar pipeline cannot deliver in reasonable time.  Agreement with the
    scalar objective (to floating-point noise) is covered by tests; grid
    winners should still be re-scored through the scalar objective when
    exact consistency with other reported numbers matters.
    """
    if space.mode != "two-decoy":
        raise ConfigError(
            f"batch objective supports two-decoy spaces only, got {space.mode!r}"
        )
    chan = channel if channel is not None else build_channel(params)
    n_alpha = FluctuationSetting.from_epsilon(params.epsilon).n_alpha
    gain_cache: dict[tuple[float, float, float], np.ndarray] = {}

    def tables_for(qs: tuple[float, float, float]) -> np.ndarray:
        cached = gain_cache.get(qs)
        if cached is None:
            t = np.empty((4, 3, 3))  # [Qz, EQz, Qx, EQx][i, j]
            for i, qa in enumerate(qs):
                for j, qb in enumerate(qs):
                    from .channel import gain_and_error_product

                    t[0, i, j], t[1, i, j] = gain_and_error_product(chan, qa, qb, "Z")
                    t[2, i, j], t[3, i, j] = gain_and_error_product(chan, qa, qb, "X")
            gain_cache[qs] = cached = t
        return cached

    def col(block: np.ndarray, name: str) -> np.ndarray:
        if name in space.pinned:
            return np.full(block.shape[0], space.pinned[name])
        return block[:, space.index_of(name)]

    def objective_batch(block: np.ndarray) -> np.ndarray:
        block = np.asarray(block, dtype=float)
        n = block.shape[0]
        in_box = np.all(
            (block >= space.lower - 1e-12) & (block <= space.upper + 1e-12), axis=1
        )
        mu, nu, om = col(block, "mu"), col(block, "nu"), col(block, "omega")
        valid = in_box & (mu > nu) & (nu > om) & (om >= 0.0)

        # photon-level observables per distinct intensity triple
        triples = np.stack([mu, nu, om], axis=1)
        uniq, inverse = np.unique(triples, axis=0, return_inverse=True)
        tables = np.empty((uniq.shape[0], 4, 3, 3))
        for u, (a, b, c) in enumerate(uniq):
            tables[u] = tables_for((float(a), float(b), float(c)))
        tab = tables[inverse]  # (n, 4, 3, 3)
        qz, eqz, qx, eqx = tab[:, 0], tab[:, 1], tab[:, 2], tab[:, 3]

        if space.finite:
            p_mu, p_nu = col(block, "p_mu"), col(block, "p_nu")
            p_om = 1.0 - p_mu - p_nu
            valid &= (p_om >= PROB_BOUNDS[0]) & (p_om <= PROB_BOUNDS[1])
            p_int = np.stack([p_mu, p_nu, p_om], axis=1)  # (n, 3)
            if space.basis_policy == "unbiased":
                px = np.full((n, 3), 0.5)
            elif space.basis_policy == "simplified":
                px = np.repeat(col(block, "p_x")[:, None], 3, axis=1)
            else:
                px = np.stack(
                    [col(block, "p_x_mu"), col(block, "p_x_nu"), col(block, "p_x_omega")],
                    axis=1,
                )
            qx_lo, qx_hi, eqx_lo, eqx_hi = _intervals_vec(
                qx, eqx, p_int * px, params.n_pulses, n_alpha
            )
            qz_lo, qz_hi, _, _ = _intervals_vec(
                qz, eqz, p_int * (1.0 - px), params.n_pulses, n_alpha
            )
        else:
            qz_lo = qz_hi = qz
            qx_lo = qx_hi = qx
            eqx_lo = eqx_hi = eqx

        with np.errstate(divide="ignore", invalid="ignore"):
            y11_z = _y11_two_decoy_vec(mu, nu, om, qz_lo, qz_hi)
            y11_x = _y11_two_decoy_vec(mu, nu, om, qx_lo, qx_hi)
            num_e = (
                np.exp(2.0 * nu) * eqx_hi[:, 1, 1]
                + np.exp(2.0 * om) * eqx_hi[:, 2, 2]
                - np.exp(nu + om) * (eqx_lo[:, 1, 2] + eqx_lo[:, 2, 1])
            )
            e11 = np.clip(num_e / ((nu - om) ** 2 * y11_x), 0.0, 1.0)
        valid &= y11_x > 0.0

        p11 = mu * mu * np.exp(-2.0 * mu)
        positive = p11 * y11_z * (1.0 - _h2_vec(np.minimum(e11, E11_PRIVACY_CAP)))
        gain_sig = qz[:, 0, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            qber_sig = np.where(gain_sig > 0.0, eqz[:, 0, 0] / gain_sig, 0.0)
        correction = gain_sig * params.f_e * _h2_vec(qber_sig)
        if space.finite:
            weight = (p_int[:, 0] * (1.0 - px[:, 0])) ** 2
            rate = positive * weight - correction * weight
        else:
            rate = positive - correction
        return np.where(valid, rate, -np.inf)

    return objective_batch


def _intervals_vec(q, eq, p_side, n_pulses, n_alpha):
    """Vectorized replica of the standard-error interval construction."""
    m = (n_pulses * p_side)[:, :, None] * p_side[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        hw_q = n_alpha * np.sqrt(q / m)
        hw_eq = n_alpha * np.sqrt(eq / m)
    has = m > 0.0
    q_lo = np.where(has, np.maximum(0.0, q - hw_q), 0.0)
    q_hi = np.where(has, np.minimum(1.0, q + hw_q), 1.0)
    eq_lo = np.where(has, np.maximum(0.0, eq - hw_eq), 0.0)
    eq_hi = np.where(has, np.minimum(q_hi, eq + hw_eq), 1.0)
    return q_lo, q_hi, eq_lo, eq_hi


def _y11_two_decoy_vec(mu, nu, om, q_lo, q_hi):
    """Vectorized two-decoy yield bound with worst-case interval endpoints."""
    c1 = (mu**2 - om**2) * (mu - om)
    c2 = (nu**2 - om**2) * (nu - om)
    num = (
        c1 * np.exp(2.0 * nu) * q_lo[:, 1, 1]
        + (c1 - c2) * np.exp(2.0 * om) * q_lo[:, 2, 2]
        - c1 * np.exp(nu + om) * (q_hi[:, 1, 2] + q_hi[:, 2, 1])
        - c2 * np.exp(2.0 * mu) * q_hi[:, 0, 0]
        + c2 * np.exp(mu + om) * (q_lo[:, 0, 2] + q_lo[:, 2, 0])
    )
    den = (mu - om) ** 2 * (nu - om) ** 2 * (mu - nu)
    return np.maximum(0.0, num / den)
