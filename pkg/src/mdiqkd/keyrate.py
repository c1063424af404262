"""Secret-key-rate assembly and the asymptotic optimal signal intensity.

The rate lower bound per transmitted pulse pair is

    R = P_11 Y_11^L [1 - H2(e_11^U)] - Q_mu f_e H2(E_mu)

with P_11 = mu^2 e^{-2 mu} the probability both sides emit exactly one photon,
(Y_11^L, e_11^U) certified single-photon bounds, (Q_mu, E_mu) the observed
signal-state Z gain and error rate, and f_e the error-correction inefficiency.
In finite mode every term additionally carries the signal-Z allocation factor
(P_mu P_{Z|mu})^2, so rates stay comparable across protocols that split their
pulses differently — this makes intensity and basis probabilities genuine
trade-offs for the optimizer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .analytic import BoundResult
from .channel import ObservationSet, asymptotic_observables
from .errors import NoPositiveRateError
from .params import ProtocolProfile, SystemParams

#: Error rates above 1/2 carry no extra information to an adversary; the
#: privacy-amplification entropy argument is capped there so a pessimistic
#: e_11 estimate can never (absurdly) increase the rate.
E11_PRIVACY_CAP = 0.5

_MU_BISECT_WIDTH = 1e-12


def binary_entropy(x: float) -> float:
    """H2(x) = -x log2 x - (1-x) log2(1-x), with H2(0) = H2(1) = 0."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"binary entropy argument must be in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return 0.0
    return -x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x)


@dataclass(frozen=True)
class KeyRateReport:
    """Assembled rate with the quantities that went into it.

    ``rate_per_pulse`` is clamped at zero; the raw (possibly negative) balance
    survives in ``positive_term - correction_term`` so optimizers can still
    see the slope of a losing configuration.
    """

    rate_per_pulse: float
    y11_lower: float
    e11_upper: float
    gain_z: float
    qber_z: float
    p11_z: float
    positive_term: float
    correction_term: float

    def __post_init__(self):
        if not 0.0 <= self.p11_z <= 1.0:
            raise ValueError(f"p11_z must be in [0, 1], got {self.p11_z}")
        expected = max(0.0, self.positive_term - self.correction_term)
        scale = max(1.0, abs(self.positive_term), abs(self.correction_term))
        if abs(self.rate_per_pulse - expected) > 1e-12 * scale:
            raise ValueError(
                "rate_per_pulse must equal max(0, positive_term - correction_term)"
            )

    @property
    def raw_rate(self) -> float:
        return self.positive_term - self.correction_term


def key_rate(
    bounds: BoundResult,
    obs: ObservationSet,
    profile: ProtocolProfile,
    params: SystemParams,
    finite: bool,
) -> KeyRateReport:
    """Assemble the secret-key rate from certified bounds and observations.

    ``finite`` selects the per-transmitted-pair normalization: the positive
    and error-correction terms are both weighted by (P_mu P_{Z|mu})^2, the
    fraction of pulse pairs that actually land in the signal-signal Z setting.
    """
    mu = profile.signal_intensity
    gain_z = obs.gain(mu, mu, "Z")
    qber = obs.qber(mu, mu, "Z")
    qber_z = 0.0 if qber is None else qber
    p11 = mu * mu * math.exp(-2.0 * mu)
    e11_priv = min(bounds.e11_upper, E11_PRIVACY_CAP)
    positive = p11 * bounds.y11_lower * (1.0 - binary_entropy(e11_priv))
    correction = gain_z * params.f_e * binary_entropy(qber_z)
    if finite:
        p_signal_z = profile.p_intensity[0] * profile.p_z_given_intensity()[0]
        weight = p_signal_z * p_signal_z
        positive *= weight
        correction *= weight
    return KeyRateReport(
        rate_per_pulse=max(0.0, positive - correction),
        y11_lower=bounds.y11_lower,
        e11_upper=bounds.e11_upper,
        gain_z=gain_z,
        qber_z=qber_z,
        p11_z=p11,
        positive_term=positive,
        correction_term=correction,
    )


def asymptotic_rate(params: SystemParams, mu: float) -> float:
    """Closed-form asymptotic rate curve R(mu) with ideal single-photon bounds.

    Uses the textbook symmetric-arm observables (dark counts ignored) and is
    intentionally left unclamped: the negative tail is what makes the location
    of the sign change and of the interior maximum visible.
    """
    o = asymptotic_observables(params, mu)
    p11 = mu * mu * math.exp(-2.0 * mu)
    positive = p11 * o.y11_z * (1.0 - binary_entropy(o.e11_x))
    correction = o.gain_z * params.f_e * binary_entropy(o.qber_z)
    return positive - correction


def optimal_mu_asymptotic(params: SystemParams) -> float:
    """Asymptotic optimal signal intensity; distance-independent.

    Setting dR/dmu = 0 for the closed-form asymptotic rate reduces to

        (1 - mu) e^{-2 mu} = f_e H2(2 e_d / (1 + e_d)) / (1 - H2(e_d))

    whose left side falls strictly from 1 to 0 on (0, 1], so the root is
    unique and bisection converges unconditionally.  A right side at or above
    1 means even vanishing intensities lose to error correction.
    """
    e_z = 2.0 * params.e_d / (1.0 + params.e_d)
    denom = 1.0 - binary_entropy(params.e_d)
    if denom <= 0.0:
        raise NoPositiveRateError(
            f"misalignment e_d = {params.e_d} leaves no single-photon information"
        )
    rhs = params.f_e * binary_entropy(e_z) / denom
    if rhs <= 0.0:
        return 1.0  # error-free limit: (1 - mu) root at the boundary
    if rhs >= 1.0:
        raise NoPositiveRateError(
            f"error correction cost (rhs = {rhs:.6g}) exceeds the attainable "
            f"single-photon gain at every signal intensity"
        )

    def f(mu: float) -> float:
        return (1.0 - mu) * math.exp(-2.0 * mu) - rhs

    lo, hi = 0.0, 1.0  # f(0+) = 1 - rhs > 0, f(1) = -rhs < 0
    while hi - lo > _MU_BISECT_WIDTH:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
