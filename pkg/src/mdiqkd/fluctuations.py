"""Finite-data confidence intervals by standard error analysis.

Observed rates are treated as Gaussian with standard deviation sqrt(count)
in counts, i.e. sqrt(Q/M) in rates for a setting allocated M pulse pairs.
A single quantile n_alpha = Phi^{-1}(1 - epsilon) converts the per-estimate
failure probability into a number of standard deviations shared by every
interval.  Intervals are attached to both the gain Q and the error product
E*Q, since the estimators consume the product rather than E alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from statistics import NormalDist

from .channel import Interval, ObservationSet


def num_std_devs(epsilon: float) -> float:
    """n_alpha = Phi^{-1}(1 - epsilon), the Gaussian quantile for failure
    probability epsilon (accurate to far better than 1e-6)."""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    return NormalDist().inv_cdf(1.0 - epsilon)


@dataclass(frozen=True)
class FluctuationSetting:
    """Failure probability and its derived Gaussian quantile."""

    epsilon: float
    n_alpha: float

    @classmethod
    def from_epsilon(cls, epsilon: float) -> "FluctuationSetting":
        return cls(epsilon=epsilon, n_alpha=num_std_devs(epsilon))

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in (0, 1), got {self.epsilon}")


def attach_intervals(obs: ObservationSet, setting: FluctuationSetting) -> ObservationSet:
    """Return a copy of ``obs`` with two-sided intervals on Q and E*Q.

    For a setting with pulse count M: Q_low/high = Q -/+ n_alpha*sqrt(Q/M)
    clamped to [0, 1], and (EQ)_low/high = EQ -/+ n_alpha*sqrt(EQ/M) clamped
    to [0, Q_high].  Settings with M = 0 carry no information and get the
    vacuous interval.
    """
    if setting.n_alpha < 0:
        raise ValueError(
            f"epsilon = {setting.epsilon} gives a negative quantile; "
            "intervals require epsilon < 0.5"
        )
    n_alpha = setting.n_alpha
    intervals: dict = {}
    for key in obs.settings():
        q = obs.gains[key]
        eq = obs.error_product(*key)
        m = obs.pulse_counts[key]
        if m <= 0:
            intervals[key] = Interval(0.0, 1.0, 0.0, 1.0)
            continue
        hw_q = n_alpha * (q / m) ** 0.5
        q_low = max(0.0, q - hw_q)
        q_high = min(1.0, q + hw_q)
        hw_eq = n_alpha * (eq / m) ** 0.5
        eq_low = max(0.0, eq - hw_eq)
        eq_high = min(q_high, eq + hw_eq)
        intervals[key] = Interval(q_low, q_high, eq_low, eq_high)
    return ObservationSet(
        gains=obs.gains,
        qbers=obs.qbers,
        pulse_counts=obs.pulse_counts,
        intervals=intervals,
    )
