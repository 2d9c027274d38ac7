"""Parametric physical model of one Alice-Bob QKD fiber link.

The default model is pinned to the measured test-bed values at the
back-to-back reference (0 km) and at the far reference (25 km):

    initialization time   400 s  -> 1265 s
    secret key rate      4000 b/s -> 100 b/s
    QBER                 (0.010) -> 0.053

Exponential quantities are evaluated as a geometric interpolation between
the two reference values, ``v0**(1 - d/L) * vL**(d/L)``. That is the same
curve as ``v0 * exp(k * d)`` with ``k = ln(vL / v0) / L``, but it reproduces
both reference values bit-exactly in floating point, which the direct form
does not (4000*exp(-k*25) lands on 99.99999999999996).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

log = logging.getLogger(__name__)

SUPPORTED_MAX_KM = 25.0
QBER_LIMIT = 0.5
# Elapsed times rebuilt from absolute clock readings lose a few ulps, which
# can leave rate * t a hair under a whole bit. Forgive anything below this.
ROUNDING_GUARD_BITS = 1e-6


@dataclass(frozen=True)
class DoubleExponential:
    """Init-time curve ``a*exp(b*d) + c*exp(e*d)``.

    No published coefficients exist for this form; supply them from config.
    """

    a: float
    b: float
    c: float = 0.0
    e: float = 0.0

    def __call__(self, d: float) -> float:
        return self.a * math.exp(self.b * d) + self.c * math.exp(self.e * d)


@dataclass(frozen=True)
class ChannelModel:
    """One fiber link, parameterized by its values at 0 km and at ``ref_km``.

    The per-km coefficients (``init_growth``, ``rate_decay``, ``qber_slope``)
    are derived properties; use :meth:`from_coefficients` to build a model
    from them instead.

    ``init_curve`` replaces the exponential init-time form when given (for
    example a :class:`DoubleExponential`).
    """

    atten_coeff: float = 0.2
    init_time_b2b: float = 400.0
    init_time_ref: float = 1265.0
    rate_b2b: float = 4000.0
    rate_ref: float = 100.0
    qber_b2b: float = 0.010
    qber_ref: float = 0.053
    ref_km: float = 25.0
    wavelength_nm: float = 1552.0
    init_curve: Optional[Callable[[float], float]] = field(default=None, compare=False)

    def __post_init__(self):
        numbers = {
            "atten_coeff": self.atten_coeff,
            "init_time_b2b": self.init_time_b2b,
            "init_time_ref": self.init_time_ref,
            "rate_b2b": self.rate_b2b,
            "rate_ref": self.rate_ref,
            "qber_b2b": self.qber_b2b,
            "qber_ref": self.qber_ref,
            "ref_km": self.ref_km,
        }
        for name, value in numbers.items():
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value!r}")
        if self.init_time_b2b <= 0 or self.rate_b2b <= 0 or self.rate_ref <= 0:
            raise ValueError("init_time_b2b, rate_b2b and rate_ref must be positive")
        if self.ref_km <= 0:
            raise ValueError("ref_km must be positive")
        if self.init_time_ref < self.init_time_b2b:
            raise ValueError("init time may not shrink with distance")
        if self.rate_ref > self.rate_b2b:
            raise ValueError("key rate may not grow with distance")
        if not self.qber_b2b < self.qber_ref < QBER_LIMIT:
            raise ValueError(
                f"need 0 <= qber_b2b < qber_ref < {QBER_LIMIT}, "
                f"got {self.qber_b2b!r}, {self.qber_ref!r}"
            )

    @classmethod
    def from_coefficients(cls, *, atten_coeff=0.2, init_time_b2b=400.0, init_growth=None,
                          rate_b2b=4000.0, rate_decay=None, qber_b2b=0.010, qber_slope=None,
                          ref_km=25.0, wavelength_nm=1552.0, init_curve=None):
        """Build a model from per-km coefficients.

        Coefficients left as None fall back to the default anchors.
        """
        default = cls()
        init_ref = (default.init_time_ref if init_growth is None
                    else init_time_b2b * math.exp(init_growth * ref_km))
        rate_ref = (default.rate_ref if rate_decay is None
                    else rate_b2b * math.exp(-rate_decay * ref_km))
        qber_ref = (default.qber_ref if qber_slope is None
                    else qber_b2b + qber_slope * ref_km)
        return cls(atten_coeff=atten_coeff, init_time_b2b=init_time_b2b, init_time_ref=init_ref,
                   rate_b2b=rate_b2b, rate_ref=rate_ref, qber_b2b=qber_b2b, qber_ref=qber_ref,
                   ref_km=ref_km, wavelength_nm=wavelength_nm, init_curve=init_curve)

    @property
    def init_growth(self) -> float:
        return math.log(self.init_time_ref / self.init_time_b2b) / self.ref_km

    @property
    def rate_decay(self) -> float:
        return math.log(self.rate_b2b / self.rate_ref) / self.ref_km

    @property
    def qber_slope(self) -> float:
        return (self.qber_ref - self.qber_b2b) / self.ref_km

    def as_dict(self) -> dict:
        return {
            "atten_coeff": self.atten_coeff,
            "init_time_b2b": self.init_time_b2b,
            "init_time_ref": self.init_time_ref,
            "rate_b2b": self.rate_b2b,
            "rate_ref": self.rate_ref,
            "qber_b2b": self.qber_b2b,
            "qber_ref": self.qber_ref,
            "ref_km": self.ref_km,
            "wavelength_nm": self.wavelength_nm,
        }


DEFAULT_MODEL = ChannelModel()


def _fraction(model: ChannelModel, d: float) -> float:
    if not d >= 0:
        raise ValueError(f"distance must be non-negative, got {d!r}")
    if d > SUPPORTED_MAX_KM:
        log.warning("distance %.3f km is beyond the measured 0-%g km range", d, SUPPORTED_MAX_KM)
    return d / model.ref_km


def _geometric(v0: float, v1: float, t: float) -> float:
    if t == 0:
        return v0
    if t == 1:
        return v1
    return v0 ** (1.0 - t) * v1 ** t


def attenuation_db(model: ChannelModel, d: float) -> float:
    _fraction(model, d)
    return model.atten_coeff * d


def init_time_s(model: ChannelModel, d: float) -> float:
    t = _fraction(model, d)
    if model.init_curve is not None:
        return float(model.init_curve(d))
    return _geometric(model.init_time_b2b, model.init_time_ref, t)


def secret_key_rate_bps(model: ChannelModel, d: float) -> float:
    t = _fraction(model, d)
    return _geometric(model.rate_b2b, model.rate_ref, t)


def qber(model: ChannelModel, d: float) -> float:
    t = _fraction(model, d)
    value = (1.0 - t) * model.qber_b2b + t * model.qber_ref
    if value >= QBER_LIMIT:
        raise ValueError(f"QBER {value:.4f} at {d} km: no secret key can be distilled")
    return value


def key_bits_generated(model: ChannelModel, d: float, session_duration: float) -> int:
    """Whole secret bits produced by a session of ``session_duration`` seconds.

    Nothing is produced until initialization completes.
    """
    if not session_duration >= 0:
        raise ValueError(f"session duration must be non-negative, got {session_duration!r}")
    generating = session_duration - init_time_s(model, d)
    if generating <= 0:
        return 0
    return math.floor(secret_key_rate_bps(model, d) * generating + ROUNDING_GUARD_BITS)
