"""Link budget, SINR, and Shannon rate for user-satellite links.

The budget is noise-limited free-space propagation:

    SINR_dB = EIRP + G/T - FSPL + 228.6 - 10*log10(B * noise_bandwidth_factor)

with an optional fixed interference margin subtracted when
`interference_mode` is FIXED_MARGIN.  228.6 dB is -10*log10 of Boltzmann's
constant in W/K/Hz.  Defaults are calibrated so per-link rates land in the
tens of Mbps over typical LEO slant ranges; they are a working point, not a
measured system.  A multiplicative fading hook exists on the linear SINR but
is off by default.

All functions accept scalars or numpy arrays.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

BOLTZMANN_DB = -228.6  # 10*log10(k), dBW/K/Hz


class InterferenceMode(enum.Enum):
    NONE = "none"
    FIXED_MARGIN = "fixed_margin_db"


@dataclass(frozen=True)
class LinkBudgetParams:
    """Inputs of the SINR computation.  dB quantities are true decibels."""

    bandwidth_hz: float = 20e6
    carrier_ghz: float = 12.0
    eirp_dbw: float = 20.0
    rx_gain_over_temp_db: float = 8.0
    noise_bandwidth_factor: float = 1.0
    interference_mode: InterferenceMode = InterferenceMode.NONE
    interference_margin_db: float = 0.0

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth_hz}")
        if self.carrier_ghz <= 0:
            raise ValueError(f"carrier frequency must be positive, got {self.carrier_ghz}")
        if self.noise_bandwidth_factor <= 0:
            raise ValueError("noise_bandwidth_factor must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "LinkBudgetParams":
        kwargs = dict(data)
        if "interference_mode" in kwargs:
            kwargs["interference_mode"] = InterferenceMode(kwargs["interference_mode"])
        for key in ("bandwidth_hz", "carrier_ghz", "eirp_dbw", "rx_gain_over_temp_db",
                    "noise_bandwidth_factor", "interference_margin_db"):
            if key in kwargs:
                kwargs[key] = float(kwargs[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class RateSample:
    """One link's SINR and Shannon rate."""

    user_id: int
    sat_id: int
    sinr_linear: float
    rate_bps: float


def free_space_path_loss_db(slant_range_km, carrier_ghz):
    """92.45 + 20*log10(d_km) + 20*log10(f_GHz)."""
    d = np.asarray(slant_range_km, dtype=np.float64)
    f = np.asarray(carrier_ghz, dtype=np.float64)
    if np.any(d <= 0) or np.any(f <= 0):
        raise ValueError("slant range and carrier frequency must be positive")
    out = 92.45 + 20.0 * np.log10(d) + 20.0 * np.log10(f)
    return float(out) if out.ndim == 0 else out


def sinr(params: LinkBudgetParams, slant_range_km):
    """Linear SINR of a visible link at the given slant range."""
    fspl = free_space_path_loss_db(slant_range_km, params.carrier_ghz)
    noise_db = 10.0 * np.log10(params.bandwidth_hz * params.noise_bandwidth_factor)
    sinr_db = (
        params.eirp_dbw + params.rx_gain_over_temp_db - fspl - BOLTZMANN_DB - noise_db
    )
    if params.interference_mode is InterferenceMode.FIXED_MARGIN:
        sinr_db = sinr_db - params.interference_margin_db
    out = np.power(10.0, np.asarray(sinr_db) / 10.0)
    return float(out) if out.ndim == 0 else out


def achievable_rate(params: LinkBudgetParams, sinr_linear):
    """Shannon rate B*log2(1 + SINR) in bit/s."""
    s = np.asarray(sinr_linear, dtype=np.float64)
    if np.any(s < 0):
        raise ValueError("SINR must be non-negative")
    out = params.bandwidth_hz * np.log2(1.0 + s)
    return float(out) if out.ndim == 0 else out


def rate_from_range(params: LinkBudgetParams, slant_range_km, fading_linear=None):
    """Rate directly from slant range; `fading_linear` multiplies the SINR."""
    s = sinr(params, slant_range_km)
    if fading_linear is not None:
        s = s * fading_linear
    return achievable_rate(params, s)


def make_rate_sample(user_id: int, sat_id: int, params: LinkBudgetParams,
                     slant_range_km: float) -> RateSample:
    s = sinr(params, slant_range_km)
    return RateSample(user_id=user_id, sat_id=sat_id, sinr_linear=float(s),
                      rate_bps=float(achievable_rate(params, s)))
