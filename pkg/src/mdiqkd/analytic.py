"""Closed-form single-photon bounds for one- and two-decoy protocols.

Combining the gain/QBER equations of a handful of intensity pairs eliminates
the low-order multi-photon terms and yields a lower bound on the
single-photon-pair yield Y_11 and an upper bound on its error rate e_11,
without solving an optimization problem.  No closed forms exist for three
decoys (use the LP estimator).

Every bound is a signed linear combination of observed gains Q and error
products E*Q.  When the observation set carries confidence intervals, each
observable is replaced by the interval endpoint that worsens the bound
(minimizing the yield bound, maximizing the error bound) — the standard
worst-case substitution; with a low/high pair per observable and fixed
coefficient signs this is exact, not merely heuristic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .channel import ObservationSet, PhotonChannel
from .errors import NoSinglePhotonSignalError
from .params import ProtocolProfile

_LOW, _HIGH, _CENTRAL = "low", "high", "central"


@dataclass(frozen=True)
class BoundResult:
    """Certified single-photon bounds with provenance.

    ``decoy_count`` is 1-3 for estimated bounds and 0 for exact (ground
    truth) bounds taken straight from a channel table.
    """

    y11_lower: float
    e11_upper: float
    method: str  # "analytic" | "lp" | "exact"
    decoy_count: int
    fluctuated: bool = False

    def __post_init__(self):
        if not 0.0 <= self.y11_lower <= 1.0:
            raise ValueError(f"y11_lower must be in [0, 1], got {self.y11_lower}")
        if not 0.0 <= self.e11_upper <= 1.0:
            raise ValueError(f"e11_upper must be in [0, 1], got {self.e11_upper}")


def exact_bounds(channel: PhotonChannel) -> BoundResult:
    """Ground-truth bounds (perfect photon-number knowledge, e.g. the
    infinite-decoy limit)."""
    return BoundResult(
        y11_lower=float(channel.yields_z[1, 1]),
        e11_upper=float(channel.errors_x[1, 1]),
        method="exact",
        decoy_count=0,
        fluctuated=False,
    )


def _gain(obs: ObservationSet, qa: float, qb: float, basis: str, want: str) -> float:
    if want == _CENTRAL or not obs.has_intervals:
        return obs.gain(qa, qb, basis)
    iv = obs.interval(qa, qb, basis)
    return iv.gain_low if want == _LOW else iv.gain_high


def _eq(obs: ObservationSet, qa: float, qb: float, basis: str, want: str) -> float:
    if want == _CENTRAL or not obs.has_intervals:
        return obs.error_product(qa, qb, basis)
    iv = obs.interval(qa, qb, basis)
    return iv.eq_low if want == _LOW else iv.eq_high


def y11_lower_one_decoy(
    obs: ObservationSet, mu: float, nu: float, basis: str = "Z"
) -> float:
    """Lower bound on Y_11 from the two diagonal pairs of a one-decoy set:

        Y_11 >= [mu^3 e^{2nu} Q_nn (1 - 2 E_nn) - nu^3 e^{2mu} Q_mm]
                / [mu^2 nu^2 (mu - nu)]

    Sound for observations generated by any nonnegative channel whose
    vacuum-involving error rates equal 1/2.  Negative values clamp to 0.
    """
    if not mu > nu > 0:
        raise ValueError(f"need mu > nu > 0, got mu={mu}, nu={nu}")
    # worsen (minimize): +Q_nn -> low, -(E Q)_nn -> high, -Q_mm -> high
    q_nn = _gain(obs, nu, nu, basis, _LOW)
    eq_nn = _eq(obs, nu, nu, basis, _HIGH)
    q_mm = _gain(obs, mu, mu, basis, _HIGH)
    num = mu**3 * math.exp(2 * nu) * (q_nn - 2.0 * eq_nn) - nu**3 * math.exp(2 * mu) * q_mm
    den = mu**2 * nu**2 * (mu - nu)
    return max(0.0, num / den)


def e11_upper_one_decoy(obs: ObservationSet, mu: float, nu: float) -> float:
    """Upper bound on the single-photon X error rate from the four X-basis
    pairs of a one-decoy set, divided by the X-basis yield lower bound:

        e_11 <= [e^{2mu} (EQ)_mm + e^{2nu} (EQ)_nn
                 - e^{mu+nu} ((EQ)_mn + (EQ)_nm)] / [(mu-nu)^2 Y_11^{X,L}]
    """
    if not mu > nu > 0:
        raise ValueError(f"need mu > nu > 0, got mu={mu}, nu={nu}")
    y11_x = y11_lower_one_decoy(obs, mu, nu, basis="X")
    if y11_x <= 0.0:
        raise NoSinglePhotonSignalError(
            "one-decoy X-basis yield lower bound is zero; e11 is unbounded"
        )
    num = (
        math.exp(2 * mu) * _eq(obs, mu, mu, "X", _HIGH)
        + math.exp(2 * nu) * _eq(obs, nu, nu, "X", _HIGH)
        - math.exp(mu + nu) * (_eq(obs, mu, nu, "X", _LOW) + _eq(obs, nu, mu, "X", _LOW))
    )
    den = (mu - nu) ** 2 * y11_x
    return min(1.0, max(0.0, num / den))


def y11_lower_two_decoy(
    obs: ObservationSet, mu: float, nu: float, omega: float, basis: str = "Z"
) -> float:
    """Lower bound on Y_11 from all nine pairs of a two-decoy set
    (mu > nu > omega >= 0):

        Y_11 >= [ (mu^2-w^2)(mu-w) G(nu,w) - (nu^2-w^2)(nu-w) G(mu,w) ]
                / [ (mu-w)^2 (nu-w)^2 (mu-nu) ]

    with G(a,b) = Q_aa e^{2a} + Q_bb e^{2b} - Q_ab e^{a+b} - Q_ba e^{b+a}.
    """
    if not mu > nu > omega >= 0:
        raise ValueError(f"need mu > nu > omega >= 0, got {mu}, {nu}, {omega}")
    c1 = (mu**2 - omega**2) * (mu - omega)
    c2 = (nu**2 - omega**2) * (nu - omega)
    # Net signed coefficients decide the worst-case endpoints; Q_ww appears in
    # both G terms with net weight (c1 - c2) > 0.
    num = (
        c1 * math.exp(2 * nu) * _gain(obs, nu, nu, basis, _LOW)
        + (c1 - c2) * math.exp(2 * omega) * _gain(obs, omega, omega, basis, _LOW)
        - c1
        * math.exp(nu + omega)
        * (_gain(obs, nu, omega, basis, _HIGH) + _gain(obs, omega, nu, basis, _HIGH))
        - c2 * math.exp(2 * mu) * _gain(obs, mu, mu, basis, _HIGH)
        + c2
        * math.exp(mu + omega)
        * (_gain(obs, mu, omega, basis, _LOW) + _gain(obs, omega, mu, basis, _LOW))
    )
    den = (mu - omega) ** 2 * (nu - omega) ** 2 * (mu - nu)
    return max(0.0, num / den)


def e11_upper_two_decoy(
    obs: ObservationSet, mu: float, nu: float, omega: float
) -> float:
    """Upper bound on the single-photon X error rate from the two weakest
    intensities of a two-decoy set:

        e_11 <= [e^{2nu} (EQ)_nn + e^{2w} (EQ)_ww
                 - e^{nu+w} ((EQ)_nw + (EQ)_wn)] / [(nu-w)^2 Y_11^{X,L}]

    The X-basis yield lower bound in the denominator comes from the full
    two-decoy yield formula on X-basis observations.
    """
    if not mu > nu > omega >= 0:
        raise ValueError(f"need mu > nu > omega >= 0, got {mu}, {nu}, {omega}")
    y11_x = y11_lower_two_decoy(obs, mu, nu, omega, basis="X")
    if y11_x <= 0.0:
        raise NoSinglePhotonSignalError(
            "two-decoy X-basis yield lower bound is zero; e11 is unbounded"
        )
    num = (
        math.exp(2 * nu) * _eq(obs, nu, nu, "X", _HIGH)
        + math.exp(2 * omega) * _eq(obs, omega, omega, "X", _HIGH)
        - math.exp(nu + omega)
        * (_eq(obs, nu, omega, "X", _LOW) + _eq(obs, omega, nu, "X", _LOW))
    )
    den = (nu - omega) ** 2 * y11_x
    return min(1.0, max(0.0, num / den))


def bounds_analytic(obs: ObservationSet, profile: ProtocolProfile) -> BoundResult:
    """Assemble the analytic BoundResult for a one- or two-decoy profile."""
    qs = profile.intensities
    if profile.mode == "one-decoy":
        mu, nu = qs
        y11 = y11_lower_one_decoy(obs, mu, nu, basis="Z")
        e11 = e11_upper_one_decoy(obs, mu, nu)
    elif profile.mode == "two-decoy":
        mu, nu, omega = qs
        y11 = y11_lower_two_decoy(obs, mu, nu, omega, basis="Z")
        e11 = e11_upper_two_decoy(obs, mu, nu, omega)
    else:
        raise ValueError(
            f"no closed-form bounds exist for mode {profile.mode!r}; use the LP estimator"
        )
    return BoundResult(
        y11_lower=y11,
        e11_upper=e11,
        method="analytic",
        decoy_count=profile.decoy_count,
        fluctuated=obs.has_intervals,
    )
