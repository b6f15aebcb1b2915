"""Analytic multi-shell circular-orbit constellation and visibility geometry.

All orbits are circular Keplerian on a spherical rotating Earth: a shell is a
Walker-style grid of `plane_count` planes spread over `raan_spread_deg` of
right ascension, each holding `sats_per_plane` equally spaced satellites, with
an optional per-plane phasing offset in argument of latitude.  Positions are
reported in the Earth-fixed (ECEF) frame so ground geometry is plain vector
algebra.

Units: km, seconds, degrees at every public boundary; radians only inside.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

EARTH_RADIUS_KM = 6371.0
EARTH_MU_KM3_S2 = 398600.4418
EARTH_ROTATION_RAD_S = 7.2921159e-5


@dataclass(frozen=True)
class OrbitalShell:
    """One circular shell of a Walker-style constellation."""

    altitude_km: float
    inclination_deg: float
    plane_count: int
    sats_per_plane: int
    phasing_offset_deg: float = 0.0
    raan_spread_deg: float = 360.0

    def __post_init__(self):
        if self.altitude_km <= 0:
            raise ConfigurationError(f"shell altitude must be positive, got {self.altitude_km}")
        if not 0.0 <= self.inclination_deg <= 180.0:
            raise ConfigurationError(f"inclination must be in [0, 180], got {self.inclination_deg}")
        if self.plane_count * self.sats_per_plane <= 0:
            raise ConfigurationError("shell must contain at least one satellite")

    @property
    def sat_count(self) -> int:
        return self.plane_count * self.sats_per_plane

    @property
    def radius_km(self) -> float:
        return EARTH_RADIUS_KM + self.altitude_km

    @property
    def mean_motion_rad_s(self) -> float:
        return math.sqrt(EARTH_MU_KM3_S2 / self.radius_km**3)

    @property
    def period_s(self) -> float:
        return 2.0 * math.pi / self.mean_motion_rad_s


@dataclass(frozen=True)
class ConstellationSpec:
    """Shell composition plus the coverage threshold shared by all users."""

    shells: tuple[OrbitalShell, ...]
    min_elevation_deg: float = 20.0

    def __post_init__(self):
        if not self.shells:
            raise ConfigurationError("constellation needs at least one shell")
        if not 0.0 <= self.min_elevation_deg < 90.0:
            raise ConfigurationError(
                f"min elevation must be in [0, 90), got {self.min_elevation_deg}"
            )

    @property
    def sat_count(self) -> int:
        return sum(s.sat_count for s in self.shells)

    @classmethod
    def telesat_like(cls, min_elevation_deg: float = 20.0) -> "ConstellationSpec":
        """Two-shell 298-satellite composition: 6x13 polar at 1015 km plus
        20x11 inclined at 1325 km."""
        return cls(
            shells=(
                OrbitalShell(altitude_km=1015.0, inclination_deg=99.5,
                             plane_count=6, sats_per_plane=13,
                             phasing_offset_deg=0.0, raan_spread_deg=180.0),
                OrbitalShell(altitude_km=1325.0, inclination_deg=50.88,
                             plane_count=20, sats_per_plane=11,
                             phasing_offset_deg=9.0, raan_spread_deg=360.0),
            ),
            min_elevation_deg=min_elevation_deg,
        )

    @classmethod
    def from_dict(cls, data: dict) -> "ConstellationSpec":
        shells = tuple(
            OrbitalShell(
                altitude_km=float(s["altitude_km"]),
                inclination_deg=float(s["inclination_deg"]),
                plane_count=int(s["plane_count"]),
                sats_per_plane=int(s["sats_per_plane"]),
                phasing_offset_deg=float(s.get("phasing_offset_deg", 0.0)),
                raan_spread_deg=float(s.get("raan_spread_deg", 360.0)),
            )
            for s in data["shells"]
        )
        return cls(shells=shells, min_elevation_deg=float(data.get("min_elevation_deg", 20.0)))


@dataclass(frozen=True)
class SatelliteState:
    """Snapshot of one satellite at one time slot (ECEF, km)."""

    sat_id: int
    position_ecef_km: np.ndarray
    epoch_slot: int


@dataclass(frozen=True)
class GroundUser:
    user_id: int
    latitude_deg: float
    longitude_deg: float

    def __post_init__(self):
        if not -90.0 <= self.latitude_deg <= 90.0:
            raise ConfigurationError(f"latitude out of range: {self.latitude_deg}")
        if not -180.0 <= self.longitude_deg < 180.0:
            raise ConfigurationError(f"longitude out of range: {self.longitude_deg}")

    @property
    def ecef_km(self) -> np.ndarray:
        lat = math.radians(self.latitude_deg)
        lon = math.radians(self.longitude_deg)
        return EARTH_RADIUS_KM * np.array(
            [math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)]
        )


@dataclass(frozen=True)
class VisibilityRecord:
    """One candidate satellite as seen by one user at one slot."""

    sat_id: int
    elevation_deg: float
    slant_range_km: float
    remaining_visible_slots: int


def _shell_initial_angles(shell: OrbitalShell) -> tuple[np.ndarray, np.ndarray]:
    """Per-satellite (RAAN, argument of latitude) at epoch, in radians."""
    planes = np.repeat(np.arange(shell.plane_count), shell.sats_per_plane)
    slots = np.tile(np.arange(shell.sats_per_plane), shell.plane_count)
    raan = np.radians(planes * shell.raan_spread_deg / shell.plane_count)
    arg_lat = np.radians(
        slots * 360.0 / shell.sats_per_plane + planes * shell.phasing_offset_deg
    )
    return raan, arg_lat


def satellite_positions_inertial(spec: ConstellationSpec, t_seconds: float) -> np.ndarray:
    """(S, 3) inertial positions at time t, ordered shell by shell."""
    chunks = []
    for shell in spec.shells:
        raan, u0 = _shell_initial_angles(shell)
        u = u0 + shell.mean_motion_rad_s * t_seconds
        inc = math.radians(shell.inclination_deg)
        cu, su = np.cos(u), np.sin(u)
        co, so = np.cos(raan), np.sin(raan)
        ci, si = math.cos(inc), math.sin(inc)
        x = cu * co - su * ci * so
        y = cu * so + su * ci * co
        z = su * si
        chunks.append(shell.radius_km * np.stack([x, y, z], axis=1))
    return np.concatenate(chunks, axis=0)


def satellite_positions_ecef(spec: ConstellationSpec, t_seconds: float) -> np.ndarray:
    """(S, 3) Earth-fixed positions at time t."""
    pos = satellite_positions_inertial(spec, t_seconds)
    theta = EARTH_ROTATION_RAD_S * t_seconds
    c, s = math.cos(theta), math.sin(theta)
    x = pos[:, 0] * c + pos[:, 1] * s
    y = -pos[:, 0] * s + pos[:, 1] * c
    return np.stack([x, y, pos[:, 2]], axis=1)


def shell_radius_of(spec: ConstellationSpec, sat_id: int) -> float:
    """Orbit radius (km) of the shell owning `sat_id`."""
    offset = 0
    for shell in spec.shells:
        if sat_id < offset + shell.sat_count:
            return shell.radius_km
        offset += shell.sat_count
    raise ConfigurationError(f"sat_id {sat_id} outside constellation of {spec.sat_count}")


def propagate(spec: ConstellationSpec, slot: int, slot_seconds: float) -> list[SatelliteState]:
    """All satellite states at the given slot (deterministic in its inputs)."""
    if slot < 0:
        raise ConfigurationError(f"slot must be non-negative, got {slot}")
    if slot_seconds <= 0:
        raise ConfigurationError(f"slot_seconds must be positive, got {slot_seconds}")
    pos = satellite_positions_ecef(spec, slot * slot_seconds)
    return [
        SatelliteState(sat_id=i, position_ecef_km=pos[i], epoch_slot=slot)
        for i in range(pos.shape[0])
    ]


def elevation_deg_matrix(sat_positions: np.ndarray, user_positions: np.ndarray) -> np.ndarray:
    """Elevation angles in degrees, shape (U, S), from ECEF positions."""
    # v: user -> sat vectors, shape (U, S, 3)
    v = sat_positions[None, :, :] - user_positions[:, None, :]
    up = user_positions / np.linalg.norm(user_positions, axis=1, keepdims=True)
    num = np.einsum("usk,uk->us", v, up)
    dist = np.linalg.norm(v, axis=2)
    with np.errstate(invalid="ignore"):
        sin_el = np.clip(num / dist, -1.0, 1.0)
    return np.degrees(np.arcsin(sin_el))


def slant_range_matrix(sat_positions: np.ndarray, user_positions: np.ndarray) -> np.ndarray:
    """Slant ranges in km, shape (U, S)."""
    v = sat_positions[None, :, :] - user_positions[:, None, :]
    return np.linalg.norm(v, axis=2)


def elevation_angle(sat: SatelliteState, user: GroundUser) -> float:
    """Elevation of `sat` above the user's local horizon plane, in [-90, 90]."""
    el = elevation_deg_matrix(sat.position_ecef_km[None, :], user.ecef_km[None, :])
    return float(el[0, 0])


def slant_range_km(sat: SatelliteState, user: GroundUser) -> float:
    return float(np.linalg.norm(sat.position_ecef_km - user.ecef_km))


def remaining_visibility(
    user: GroundUser,
    sat_id: int,
    slot: int,
    horizon_slots: int,
    *,
    spec: ConstellationSpec,
    slot_seconds: float,
    min_elevation_deg: float | None = None,
) -> int:
    """Consecutive future slots (current included) with elevation above the
    threshold, capped at `horizon_slots`.  0 if not visible now."""
    if horizon_slots < 1:
        raise ConfigurationError(f"horizon_slots must be >= 1, got {horizon_slots}")
    min_el = spec.min_elevation_deg if min_elevation_deg is None else min_elevation_deg
    pu = user.ecef_km[None, :]
    count = 0
    for k in range(horizon_slots):
        pos = satellite_positions_ecef(spec, (slot + k) * slot_seconds)[sat_id][None, :]
        if elevation_deg_matrix(pos, pu)[0, 0] >= min_el:
            count += 1
        else:
            break
    return count


def candidate_set(
    user: GroundUser,
    sats: list[SatelliteState],
    min_elevation_deg: float,
    *,
    spec: ConstellationSpec | None = None,
    slot_seconds: float | None = None,
    horizon_slots: int | None = None,
) -> list[VisibilityRecord]:
    """Satellites visible to `user` above `min_elevation_deg`, sorted by sat_id.

    With a `spec`/`slot_seconds` context, remaining_visible_slots is filled by
    lookahead propagation up to `horizon_slots`; without one it is 1 (visible
    now, no lookahead available).  An empty list is a legal result.
    """
    if not 0.0 <= min_elevation_deg < 90.0:
        raise ConfigurationError(f"min elevation must be in [0, 90), got {min_elevation_deg}")
    records = []
    for sat in sorted(sats, key=lambda s: s.sat_id):
        el = elevation_angle(sat, user)
        if el < min_elevation_deg:
            continue
        if spec is not None:
            if slot_seconds is None:
                raise ConfigurationError("slot_seconds required when spec is given")
            horizon = 1 if horizon_slots is None else horizon_slots
            remaining = remaining_visibility(
                user, sat.sat_id, sat.epoch_slot, horizon,
                spec=spec, slot_seconds=slot_seconds, min_elevation_deg=min_elevation_deg,
            )
        else:
            remaining = 1
        records.append(
            VisibilityRecord(
                sat_id=sat.sat_id,
                elevation_deg=el,
                slant_range_km=slant_range_km(sat, user),
                remaining_visible_slots=remaining,
            )
        )
    return records


def users_ecef(users: list[GroundUser]) -> np.ndarray:
    return np.stack([u.ecef_km for u in users], axis=0)


def positions_over_time(spec: ConstellationSpec, n_slots: int, slot_seconds: float) -> np.ndarray:
    """(T, S, 3) ECEF positions for slots 0..n_slots-1."""
    return np.stack(
        [satellite_positions_ecef(spec, t * slot_seconds) for t in range(n_slots)], axis=0
    )


def visibility_tables(
    spec: ConstellationSpec,
    users: list[GroundUser],
    n_slots: int,
    slot_seconds: float,
    min_elevation_deg: float | None = None,
    horizon_slots: int | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Episode-wide geometry: (visible, slant_range_km, remaining).

    visible: (T, U, S) bool; slant_range_km: (T, U, S) float; remaining:
    (T, U, S) int32 counting consecutive visible slots from t onward, capped at
    `horizon_slots` (default: the episode remainder).
    """
    min_el = spec.min_elevation_deg if min_elevation_deg is None else min_elevation_deg
    pu = users_ecef(users)
    T = n_slots
    visible = np.empty((T, len(users), spec.sat_count), dtype=bool)
    ranges = np.empty_like(visible, dtype=np.float64)
    for t in range(T):
        ps = satellite_positions_ecef(spec, t * slot_seconds)
        visible[t] = elevation_deg_matrix(ps, pu) >= min_el
        ranges[t] = slant_range_matrix(ps, pu)
    remaining = consecutive_visible_slots(visible, horizon_slots)
    return visible, ranges, remaining


def consecutive_visible_slots(visible: np.ndarray, horizon_slots: int | None = None) -> np.ndarray:
    """Backward run-length scan of a (T, ...) visibility mask, int32."""
    T = visible.shape[0]
    remaining = np.zeros(visible.shape, dtype=np.int32)
    run = np.zeros(visible.shape[1:], dtype=np.int32)
    for t in range(T - 1, -1, -1):
        run = np.where(visible[t], run + 1, 0)
        remaining[t] = run
    if horizon_slots is not None:
        np.minimum(remaining, horizon_slots, out=remaining)
    return remaining
