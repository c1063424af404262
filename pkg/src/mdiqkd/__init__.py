"""Decoy-state measurement-device-independent QKD toolkit.

Deterministic channel simulation, certified single-photon bounds (closed-form
and linear-programming), secret-key-rate assembly, and full protocol-parameter
optimization, plus a CLI that reproduces the standard figures and tables.
"""

from .errors import (
    ComputationError,
    ConfigError,
    NoPositiveRateError,
    NoSinglePhotonSignalError,
)
from .params import (
    PRESETS,
    ProtocolProfile,
    SystemParams,
    load_config,
    load_profile,
    mode_for_decoys,
)
from .channel import (
    Interval,
    ObservationSet,
    PhotonChannel,
    asymptotic_observables,
    build_channel,
    simulate_observations,
    transmittance,
)
from .fluctuations import FluctuationSetting, attach_intervals, num_std_devs
from .analytic import BoundResult, bounds_analytic, exact_bounds
from .decoy_lp import bounds_lp
from .simplex import LpProblem, LpSolution, solve_lp
from .keyrate import (
    KeyRateReport,
    asymptotic_rate,
    binary_entropy,
    key_rate,
    optimal_mu_asymptotic,
)
from .optimizer import (
    OptimizationTrace,
    SearchSpace,
    build_search_space,
    evaluate_profile,
    exhaustive_search,
    lsa_optimize,
    make_objective,
    optimize_protocol,
)

__version__ = "0.1.0"

__all__ = [
    "BoundResult",
    "ComputationError",
    "ConfigError",
    "FluctuationSetting",
    "Interval",
    "KeyRateReport",
    "LpProblem",
    "LpSolution",
    "NoPositiveRateError",
    "NoSinglePhotonSignalError",
    "ObservationSet",
    "OptimizationTrace",
    "PRESETS",
    "PhotonChannel",
    "ProtocolProfile",
    "SearchSpace",
    "SystemParams",
    "asymptotic_observables",
    "asymptotic_rate",
    "attach_intervals",
    "binary_entropy",
    "bounds_analytic",
    "bounds_lp",
    "build_channel",
    "build_search_space",
    "evaluate_profile",
    "exact_bounds",
    "exhaustive_search",
    "key_rate",
    "load_config",
    "load_profile",
    "lsa_optimize",
    "make_objective",
    "mode_for_decoys",
    "num_std_devs",
    "optimal_mu_asymptotic",
    "optimize_protocol",
    "simulate_observations",
    "solve_lp",
    "transmittance",
    "__version__",
]
