"""Even-moment waveform factors of the rectifier input signal.

A waveform is described by its normalised even moments

    lambda_{2j} = E{y^{2j}} / (E{y^2})^j

which is all the truncated diode model needs from the signal distribution.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ConfigurationError, ValidationError

#: Seed used by the Monte Carlo moment checks.
MC_SEED = 20191107


class WaveformKind(str, enum.Enum):
    CONTINUOUS_WAVE = "cw"
    REAL_GAUSSIAN = "gaussian"

    @classmethod
    def parse(cls, name: str) -> "WaveformKind":
        key = name.strip().lower().replace("-", "_")
        aliases = {
            "cw": cls.CONTINUOUS_WAVE,
            "continuous_wave": cls.CONTINUOUS_WAVE,
            "continuouswave": cls.CONTINUOUS_WAVE,
            "gaussian": cls.REAL_GAUSSIAN,
            "real_gaussian": cls.REAL_GAUSSIAN,
            "realgaussian": cls.REAL_GAUSSIAN,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ConfigurationError(f"unknown waveform {name!r}") from None


@dataclass(frozen=True)
class Waveform:
    """Named set of even-order waveform factors (order -> lambda)."""

    name: str
    lambda_factors: Mapping[int, float] = field(default_factory=dict)

    def __post_init__(self):
        factors = {int(k): float(v) for k, v in self.lambda_factors.items()}
        if factors.get(2) != 1.0:
            raise ValidationError("lambda_2 must equal 1")
        for order, value in factors.items():
            if order < 2 or order % 2:
                raise ValidationError(f"waveform factor order {order} is not even and >= 2")
            if not math.isfinite(value) or value <= 0.0:
                raise ValidationError(f"waveform factor lambda_{order}={value!r} must be finite and > 0")
        object.__setattr__(self, "lambda_factors", dict(sorted(factors.items())))

    def factor(self, order: int) -> float:
        try:
            return self.lambda_factors[order]
        except KeyError:
            raise ConfigurationError(
                f"waveform {self.name!r} has no factor for order {order}"
            ) from None

    @property
    def max_order(self) -> int:
        return max(self.lambda_factors)


def _check_max_order(max_order):
    if isinstance(max_order, bool) or int(max_order) != max_order or max_order < 2 or max_order % 2:
        raise ConfigurationError(f"max_order must be an even integer >= 2, got {max_order!r}")
    return int(max_order)


def cw_factor(order: int) -> float:
    """lambda_{2j} for y = sqrt(2Q) cos(theta) with uniform phase."""
    j = order // 2
    # E{cos^{2j}} = C(2j, j) / 4^j and the amplitude contributes 2^j
    return math.comb(2 * j, j) * 2.0**j / 4.0**j


def gaussian_factor(order: int) -> float:
    """lambda_{2j} = (2j-1)!! for a zero-mean real Gaussian."""
    return float(math.prod(range(order - 1, 0, -2)))


def builtin_waveform(kind, max_order: int) -> Waveform:
    """Analytic factors for a builtin distribution up to ``max_order``."""
    kind = WaveformKind.parse(kind) if isinstance(kind, str) else WaveformKind(kind)
    max_order = _check_max_order(max_order)
    fn = cw_factor if kind is WaveformKind.CONTINUOUS_WAVE else gaussian_factor
    factors = {order: fn(order) for order in range(2, max_order + 1, 2)}
    factors[2] = 1.0
    return Waveform(kind.value, factors)


def custom_waveform(factors: Mapping, name: str = "custom") -> Waveform:
    """Waveform from user factors; keys are even orders >= 4, lambda_2 = 1 is implied."""
    out = {2: 1.0}
    for key, value in factors.items():
        try:
            order = int(key)
        except (TypeError, ValueError):
            raise ValidationError(f"waveform factor key {key!r} is not an integer order") from None
        if str(order) != str(key).strip() and order != key:
            raise ValidationError(f"waveform factor key {key!r} is not an integer order")
        if order < 4 or order % 2:
            raise ValidationError(f"waveform factor order {key!r} must be even and >= 4")
        try:
            val = float(value)
        except (TypeError, ValueError):
            raise ValidationError(f"waveform factor lambda_{order}={value!r} is not a number") from None
        if not math.isfinite(val) or val <= 0.0:
            raise ValidationError(f"waveform factor lambda_{order}={value!r} must be finite and > 0")
        out[order] = val
    return Waveform(name, out)


def sample_waveform(kind, n_samples: int, rng: np.random.Generator, power: float = 1.0) -> np.ndarray:
    """Draw samples of the rectifier input y with E{y^2} = power."""
    kind = WaveformKind.parse(kind) if isinstance(kind, str) else WaveformKind(kind)
    if kind is WaveformKind.CONTINUOUS_WAVE:
        theta = rng.uniform(0.0, 2.0 * np.pi, n_samples)
        return np.sqrt(2.0 * power) * np.cos(theta)
    return rng.normal(0.0, np.sqrt(power), n_samples)


def estimate_factors(samples: np.ndarray, max_order: int) -> dict[int, float]:
    """Sample estimate of lambda_{2j} for 2j <= max_order."""
    max_order = _check_max_order(max_order)
    y2 = np.asarray(samples, dtype=float) ** 2
    m2 = y2.mean()
    out = {}
    power = np.ones_like(y2)
    for order in range(2, max_order + 1, 2):
        power *= y2
        out[order] = float(power.mean() / m2 ** (order // 2))
    return out
