"""Geometry checks: orbit mechanics against textbook anchors, elevation and
slant range against an independent spherical-triangle oracle, and the
visibility bookkeeping against hand-built patterns."""

import math

import numpy as np
import pytest

from leohandover.constellation import (
    EARTH_MU_KM3_S2,
    EARTH_RADIUS_KM,
    EARTH_ROTATION_RAD_S,
    ConstellationSpec,
    GroundUser,
    OrbitalShell,
    candidate_set,
    consecutive_visible_slots,
    elevation_deg_matrix,
    propagate,
    remaining_visibility,
    satellite_positions_ecef,
    satellite_positions_inertial,
    shell_radius_of,
    slant_range_matrix,
    visibility_tables,
)
from leohandover.errors import ConfigurationError


def test_shell_period_matches_low_orbit_anchor():
    # a 400 km circular orbit takes about 92.5 minutes
    shell = OrbitalShell(altitude_km=400.0, inclination_deg=51.6,
                         plane_count=1, sats_per_plane=1)
    assert abs(shell.period_s / 60.0 - 92.4) < 0.5


def test_keplers_third_law_relation():
    for alt in (400.0, 1015.0, 1325.0, 2000.0):
        shell = OrbitalShell(altitude_km=alt, inclination_deg=53.0,
                             plane_count=1, sats_per_plane=1)
        lhs = shell.period_s**2
        rhs = 4.0 * math.pi**2 * shell.radius_km**3 / EARTH_MU_KM3_S2
        assert abs(lhs - rhs) / rhs < 1e-12


def test_telesat_like_composition():
    spec = ConstellationSpec.telesat_like()
    assert spec.sat_count == 298
    assert [s.sat_count for s in spec.shells] == [78, 220]
    assert shell_radius_of(spec, 0) == EARTH_RADIUS_KM + 1015.0
    assert shell_radius_of(spec, 78) == EARTH_RADIUS_KM + 1325.0
    with pytest.raises(ConfigurationError):
        shell_radius_of(spec, 298)


def test_positions_stay_on_shell_radius():
    spec = ConstellationSpec.telesat_like()
    for t in (0.0, 137.0, 4000.0):
        pos = satellite_positions_inertial(spec, t)
        radii = np.linalg.norm(pos, axis=1)
        assert np.allclose(radii[:78], EARTH_RADIUS_KM + 1015.0, atol=1e-6)
        assert np.allclose(radii[78:], EARTH_RADIUS_KM + 1325.0, atol=1e-6)


def test_ecef_is_inertial_rotated_by_earth_angle():
    spec = ConstellationSpec.telesat_like()
    t = 531.0
    theta = EARTH_ROTATION_RAD_S * t
    rot = np.array([
        [math.cos(theta), math.sin(theta), 0.0],
        [-math.sin(theta), math.cos(theta), 0.0],
        [0.0, 0.0, 1.0],
    ])
    inertial = satellite_positions_inertial(spec, t)
    ecef = satellite_positions_ecef(spec, t)
    assert np.allclose(ecef, inertial @ rot.T, atol=1e-9)


def test_elevation_overhead_and_horizon():
    user = np.array([[EARTH_RADIUS_KM, 0.0, 0.0]])
    overhead = np.array([[EARTH_RADIUS_KM + 1000.0, 0.0, 0.0]])
    on_horizon = np.array([[EARTH_RADIUS_KM, 800.0, 0.0]])
    assert abs(elevation_deg_matrix(overhead, user)[0, 0] - 90.0) < 1e-9
    assert abs(elevation_deg_matrix(on_horizon, user)[0, 0]) < 1e-9


def test_slant_range_consistent_with_elevation_triangle():
    # independent oracle: with elevation el and orbit radius r, the slant
    # range solves d^2 + 2 d Re sin(el) + Re^2 - r^2 = 0
    rng = np.random.default_rng(42)
    spec = ConstellationSpec.telesat_like()
    users = np.stack([
        EARTH_RADIUS_KM * np.array([
            math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon),
            math.sin(lat),
        ])
        for lat, lon in zip(rng.uniform(-1.2, 1.2, 30), rng.uniform(-math.pi, math.pi, 30))
    ])
    pos = satellite_positions_ecef(spec, 777.0)
    el = np.radians(elevation_deg_matrix(pos, users))
    d = slant_range_matrix(pos, users)
    r = np.linalg.norm(pos, axis=1)[None, :]
    expected = -EARTH_RADIUS_KM * np.sin(el) + np.sqrt(
        (EARTH_RADIUS_KM * np.sin(el))**2 + r**2 - EARTH_RADIUS_KM**2
    )
    assert np.allclose(d, expected, rtol=1e-9)


def test_ground_user_ecef_and_validation():
    u = GroundUser(user_id=0, latitude_deg=0.0, longitude_deg=0.0)
    assert np.allclose(u.ecef_km, [EARTH_RADIUS_KM, 0.0, 0.0])
    pole = GroundUser(user_id=1, latitude_deg=90.0, longitude_deg=0.0)
    assert np.allclose(pole.ecef_km, [0.0, 0.0, EARTH_RADIUS_KM], atol=1e-9)
    with pytest.raises(ConfigurationError):
        GroundUser(user_id=2, latitude_deg=91.0, longitude_deg=0.0)
    with pytest.raises(ConfigurationError):
        GroundUser(user_id=3, latitude_deg=0.0, longitude_deg=180.0)


def test_propagate_returns_all_sats_with_ids():
    spec = ConstellationSpec.telesat_like()
    sats = propagate(spec, slot=3, slot_seconds=10.0)
    assert len(sats) == 298
    assert [s.sat_id for s in sats] == list(range(298))
    pos = satellite_positions_ecef(spec, 30.0)
    assert np.allclose(sats[100].position_ecef_km, pos[100])
    with pytest.raises(ConfigurationError):
        propagate(spec, slot=-1, slot_seconds=10.0)


def test_candidate_set_sorted_and_thresholded():
    spec = ConstellationSpec.telesat_like()
    user = GroundUser(user_id=0, latitude_deg=45.0, longitude_deg=10.0)
    sats = propagate(spec, slot=0, slot_seconds=10.0)
    records = candidate_set(user, sats, 20.0)
    assert records, "a mid-latitude user should see satellites"
    ids = [r.sat_id for r in records]
    assert ids == sorted(ids)
    assert all(r.elevation_deg >= 20.0 for r in records)
    # raising the threshold can only shrink the set
    higher = {r.sat_id for r in candidate_set(user, sats, 40.0)}
    assert higher <= set(ids)


def test_remaining_visibility_against_table_scan():
    spec = ConstellationSpec.telesat_like()
    user = GroundUser(user_id=0, latitude_deg=45.0, longitude_deg=10.0)
    visible, _, remaining = visibility_tables(spec, [user], 40, 10.0)
    sats = np.flatnonzero(visible[0, 0])
    assert sats.size > 0
    for sat_id in sats[:5]:
        direct = remaining_visibility(user, int(sat_id), 0, 40, spec=spec,
                                      slot_seconds=10.0)
        assert direct == int(remaining[0, 0, sat_id])


def test_consecutive_visible_slots_hand_pattern():
    visible = np.array([1, 1, 0, 1, 1, 1, 0, 1], dtype=bool)[:, None]
    remaining = consecutive_visible_slots(visible)
    assert remaining[:, 0].tolist() == [2, 1, 0, 3, 2, 1, 0, 1]
    capped = consecutive_visible_slots(visible, horizon_slots=2)
    assert capped[:, 0].tolist() == [2, 1, 0, 2, 2, 1, 0, 1]


def test_visibility_tables_shapes_and_consistency():
    spec = ConstellationSpec.telesat_like()
    users = [GroundUser(0, 45.0, 10.0), GroundUser(1, 46.0, 11.0)]
    visible, ranges, remaining = visibility_tables(spec, users, 12, 10.0)
    assert visible.shape == ranges.shape == remaining.shape == (12, 2, 298)
    assert (ranges > 0).all()
    # a slot is visible exactly when its remaining count is positive
    assert ((remaining > 0) == visible).all()
    # visible slant ranges stay between the altitude and the horizon distance
    assert ranges[visible].min() >= 1015.0
    assert ranges[visible].max() <= 6000.0


def test_shell_validation_errors():
    with pytest.raises(ConfigurationError):
        OrbitalShell(altitude_km=-5.0, inclination_deg=50.0, plane_count=1,
                     sats_per_plane=1)
    with pytest.raises(ConfigurationError):
        OrbitalShell(altitude_km=500.0, inclination_deg=181.0, plane_count=1,
                     sats_per_plane=1)
    with pytest.raises(ConfigurationError):
        ConstellationSpec(shells=())


def test_elevation_bounds_random_geometry():
    rng = np.random.default_rng(7)
    for _ in range(50):
        sats = rng.normal(size=(6, 3))
        sats = (EARTH_RADIUS_KM + 1000.0) * sats / np.linalg.norm(sats, axis=1, keepdims=True)
        users = rng.normal(size=(4, 3))
        users = EARTH_RADIUS_KM * users / np.linalg.norm(users, axis=1, keepdims=True)
        el = elevation_deg_matrix(sats, users)
        assert (el >= -90.0 - 1e-9).all() and (el <= 90.0 + 1e-9).all()
        assert (slant_range_matrix(sats, users) > 0).all()
