"""System parameters and protocol profiles.

``SystemParams`` collects the fixed hardware/session quantities: detector
efficiency, misalignment, dark counts, error-correction inefficiency, the
statistical failure probability and the pulse-pair budget.  ``ProtocolProfile``
collects everything the two parties are free to choose per session: the
intensity ladder, the probabilities of sending each intensity and the
(possibly intensity-conditioned) probability of choosing the X basis.

Both are frozen dataclasses validated on construction, with JSON round-trip
helpers used by the command line.  Two bundled presets, ``table2`` and
``table6``, hold the reference hardware values used by the regression suite.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Mapping

from .errors import ConfigError

MODES = ("one-decoy", "two-decoy", "three-decoy")
BASIS_POLICIES = ("unbiased", "simplified", "optimal")

#: Number of intensities (signal + decoys) per mode.
MODE_SIZES: Mapping[str, int] = {"one-decoy": 2, "two-decoy": 3, "three-decoy": 4}

_REQUIRED_KEYS = ("eta_d", "e_d", "y_0", "f_e", "epsilon", "n_pulses")
_OPTIONAL_KEYS = {"alpha_db_per_km": 0.2, "distance_km": 0.0, "e_multi": 0.25}


@dataclass(frozen=True)
class SystemParams:
    """Fixed system parameters for a simulation/optimization run.

    Attributes
    ----------
    eta_d:
        Detector efficiency at the measurement relay, in (0, 1].
    e_d:
        Misalignment error probability of either arm, in [0, 0.5).
    y_0:
        Background (dark-count) click probability per side per gate.
    f_e:
        Error-correction inefficiency, >= 1.
    epsilon:
        Failure probability budget for each statistical confidence interval.
    n_pulses:
        Total number of transmitted pulse pairs in the session.
    alpha_db_per_km:
        Fiber loss coefficient in dB/km.
    distance_km:
        Total fiber length between the two parties; the relay sits midway.
    e_multi:
        X-basis error rate assigned to multi-photon contributions in the
        bundled channel model.
    """

    eta_d: float
    e_d: float
    y_0: float
    f_e: float
    epsilon: float
    n_pulses: float
    alpha_db_per_km: float = 0.2
    distance_km: float = 0.0
    e_multi: float = 0.25

    def __post_init__(self):
        if not 0.0 < self.eta_d <= 1.0:
            raise ConfigError(f"eta_d must be in (0, 1], got {self.eta_d}", key="eta_d")
        if not 0.0 <= self.e_d < 0.5:
            raise ConfigError(f"e_d must be in [0, 0.5), got {self.e_d}", key="e_d")
        if not 0.0 <= self.y_0 < 1.0:
            raise ConfigError(f"y_0 must be in [0, 1), got {self.y_0}", key="y_0")
        if self.f_e < 1.0:
            raise ConfigError(f"f_e must be >= 1, got {self.f_e}", key="f_e")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(
                f"epsilon must be in (0, 1), got {self.epsilon}", key="epsilon"
            )
        if self.n_pulses <= 0:
            raise ConfigError(
                f"n_pulses must be positive, got {self.n_pulses}", key="n_pulses"
            )
        if self.alpha_db_per_km < 0:
            raise ConfigError(
                f"alpha_db_per_km must be >= 0, got {self.alpha_db_per_km}",
                key="alpha_db_per_km",
            )
        if self.distance_km < 0:
            raise ConfigError(
                f"distance_km must be >= 0, got {self.distance_km}", key="distance_km"
            )
        if not 0.0 <= self.e_multi <= 1.0:
            raise ConfigError(
                f"e_multi must be in [0, 1], got {self.e_multi}", key="e_multi"
            )

    def with_distance(self, distance_km: float) -> "SystemParams":
        return replace(self, distance_km=distance_km)

    def with_pulses(self, n_pulses: float) -> "SystemParams":
        return replace(self, n_pulses=n_pulses)

    def to_dict(self) -> dict:
        return {
            "eta_d": self.eta_d,
            "e_d": self.e_d,
            "y_0": self.y_0,
            "f_e": self.f_e,
            "epsilon": self.epsilon,
            "n_pulses": self.n_pulses,
            "alpha_db_per_km": self.alpha_db_per_km,
            "distance_km": self.distance_km,
            "e_multi": self.e_multi,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "SystemParams":
        known = set(_REQUIRED_KEYS) | set(_OPTIONAL_KEYS)
        for key in data:
            if key not in known:
                raise ConfigError(f"unknown configuration key: {key!r}", key=key)
        for key in _REQUIRED_KEYS:
            if key not in data:
                raise ConfigError(f"missing configuration key: {key!r}", key=key)
        values = {}
        for key in known:
            if key in data:
                raw = data[key]
                if isinstance(raw, bool) or not isinstance(raw, (int, float)):
                    raise ConfigError(
                        f"configuration key {key!r} must be a number, got {raw!r}",
                        key=key,
                    )
                values[key] = float(raw)
        return cls(**values)


#: Bundled hardware presets, addressable by name wherever a config is accepted.
PRESETS: Mapping[str, SystemParams] = {
    "table2": SystemParams(
        eta_d=0.145,
        e_d=0.015,
        y_0=6.02e-6,
        f_e=1.16,
        epsilon=1e-7,
        n_pulses=1e12,
    ),
    "table6": SystemParams(
        eta_d=0.082,
        e_d=0.008,
        y_0=5e-5,
        f_e=1.16,
        epsilon=2.7e-3,
        n_pulses=1.11e11,
        distance_km=10.0,
    ),
}


def load_config(source: str | Path) -> SystemParams:
    """Load a ``SystemParams`` from a preset name or a JSON file path."""
    name = str(source)
    if name in PRESETS:
        return PRESETS[name]
    path = Path(source)
    if not path.exists():
        raise ConfigError(
            f"config {name!r} is neither a preset ({', '.join(sorted(PRESETS))}) "
            "nor an existing file"
        )
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {name!r} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {name!r} must contain a JSON object")
    return SystemParams.from_dict(data)


@dataclass(frozen=True)
class ProtocolProfile:
    """A complete choice of protocol parameters.

    ``intensities`` is strictly decreasing; the first entry is the signal
    intensity mu and the last is the weakest decoy omega (omega may be 0).
    ``p_intensity`` sums to 1.  ``p_x_given_intensity`` holds the probability
    of choosing the X basis conditioned on each intensity; the basis policy
    restricts its shape (``unbiased`` pins every entry to 1/2, ``simplified``
    requires a single shared value, ``optimal`` leaves all entries free).
    """

    mode: str
    intensities: tuple[float, ...]
    p_intensity: tuple[float, ...]
    p_x_given_intensity: tuple[float, ...]
    basis_policy: str = "optimal"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.basis_policy not in BASIS_POLICIES:
            raise ConfigError(
                f"basis_policy must be one of {BASIS_POLICIES}, "
                f"got {self.basis_policy!r}"
            )
        object.__setattr__(self, "intensities", tuple(float(q) for q in self.intensities))
        object.__setattr__(self, "p_intensity", tuple(float(p) for p in self.p_intensity))
        object.__setattr__(
            self, "p_x_given_intensity", tuple(float(p) for p in self.p_x_given_intensity)
        )
        k = MODE_SIZES[self.mode]
        if len(self.intensities) != k:
            raise ConfigError(
                f"{self.mode} requires {k} intensities, got {len(self.intensities)}"
            )
        if len(self.p_intensity) != k or len(self.p_x_given_intensity) != k:
            raise ConfigError("probability tuples must match the intensity count")
        for i, q in enumerate(self.intensities):
            if q < 0 or (q == 0 and i < k - 1):
                raise ConfigError(f"intensities must be positive (last may be 0): {self.intensities}")
        for a, b in zip(self.intensities, self.intensities[1:]):
            if not a > b:
                raise ConfigError(
                    f"intensities must be strictly decreasing, got {self.intensities}"
                )
        for p in self.p_intensity + self.p_x_given_intensity:
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"probabilities must lie in [0, 1], got {p}")
        if abs(sum(self.p_intensity) - 1.0) > 1e-9:
            raise ConfigError(
                f"p_intensity must sum to 1, got sum {sum(self.p_intensity)!r}"
            )
        if self.basis_policy == "unbiased":
            if any(p != 0.5 for p in self.p_x_given_intensity):
                raise ConfigError("unbiased policy requires p_x_given_intensity = 1/2")
        elif self.basis_policy == "simplified":
            if len(set(self.p_x_given_intensity)) != 1:
                raise ConfigError(
                    "simplified policy requires a single shared X-basis probability"
                )

    @property
    def signal_intensity(self) -> float:
        return self.intensities[0]

    @property
    def decoy_count(self) -> int:
        return MODE_SIZES[self.mode] - 1

    def p_z_given_intensity(self) -> tuple[float, ...]:
        return tuple(1.0 - p for p in self.p_x_given_intensity)

    def p_basis(self, intensity: float, basis: str) -> float:
        i = self.intensities.index(intensity)
        px = self.p_x_given_intensity[i]
        return px if basis == "X" else 1.0 - px

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "intensities": list(self.intensities),
            "p_intensity": list(self.p_intensity),
            "p_x_given_intensity": list(self.p_x_given_intensity),
            "basis_policy": self.basis_policy,
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ProtocolProfile":
        known = {"mode", "intensities", "p_intensity", "p_x_given_intensity", "basis_policy"}
        for key in data:
            if key not in known:
                raise ConfigError(f"unknown profile key: {key!r}", key=key)
        try:
            return cls(
                mode=data["mode"],
                intensities=tuple(data["intensities"]),
                p_intensity=tuple(data["p_intensity"]),
                p_x_given_intensity=tuple(data["p_x_given_intensity"]),
                basis_policy=data.get("basis_policy", "optimal"),
            )
        except KeyError as exc:
            raise ConfigError(f"missing profile key: {exc.args[0]!r}", key=exc.args[0])


def load_profile(path: str | Path) -> ProtocolProfile:
    """Load a ``ProtocolProfile`` from a JSON file."""
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"profile file {path!s} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"profile file {path!s} must contain a JSON object")
    return ProtocolProfile.from_dict(data)


def mode_for_decoys(decoys: int) -> str:
    """Map a decoy count (1, 2 or 3) to its mode name."""
    if decoys not in (1, 2, 3):
        raise ConfigError(f"decoys must be 1, 2 or 3, got {decoys}")
    return MODES[decoys - 1]
