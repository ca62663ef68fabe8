"""Synthetic circular-orbit constellation for line-of-sight geometry.

Generates unit line-of-sight vectors from a receiver fixed on the rotating earth
to satellites on circular medium-earth orbits, rejection-sampled so every
satellite stays above the elevation mask for the whole duration. Deterministic
per seed; a stand-in for broadcast-ephemeris geometry.
"""

from __future__ import annotations

import numpy as np

from ..errors import ValidationError

EARTH_RADIUS_M = 6_371_000.0
ORBIT_RADIUS_M = 26_560_000.0
ORBIT_PERIOD_S = 43_082.0
EARTH_ROT_RATE = 2.0 * np.pi / 86_164.0
INCLINATION_RAD = np.deg2rad(55.0)
ELEVATION_MASK_RAD = np.deg2rad(10.0)
ELEVATION_CAP_RAD = np.deg2rad(65.0)
MAX_LOS_RATE_DEG_S = 0.0095
RECEIVER_LAT_RAD = np.deg2rad(35.0)
RECEIVER_LON_RAD = np.deg2rad(135.0)


def _receiver_ecef(t: float) -> np.ndarray:
    lon = RECEIVER_LON_RAD + EARTH_ROT_RATE * t
    clat = np.cos(RECEIVER_LAT_RAD)
    return EARTH_RADIUS_M * np.array(
        [clat * np.cos(lon), clat * np.sin(lon), np.sin(RECEIVER_LAT_RAD)]
    )


def _satellite_ecef(raan: float, phase: float, t: float) -> np.ndarray:
    u = phase + 2.0 * np.pi * t / ORBIT_PERIOD_S
    x_orb = ORBIT_RADIUS_M * np.array(
        [np.cos(u), np.sin(u) * np.cos(INCLINATION_RAD), np.sin(u) * np.sin(INCLINATION_RAD)]
    )
    cr, sr = np.cos(raan), np.sin(raan)
    return np.array(
        [cr * x_orb[0] - sr * x_orb[1], sr * x_orb[0] + cr * x_orb[1], x_orb[2]]
    )


def _elevation(rcv: np.ndarray, sat: np.ndarray) -> float:
    los = sat - rcv
    up = rcv / np.linalg.norm(rcv)
    return np.arcsin(float(np.dot(los, up)) / float(np.linalg.norm(los)))


def synthetic_constellation(n_sat: int, duration: float, seed: int,
                            interval: float = 1.0) -> np.ndarray:
    """Unit LOS vectors, shape (n_epochs, n_sat, 3), satellite-to-receiver sense.

    Epochs run at ``interval`` seconds from 0 through duration inclusive.
    Satellites are drawn until each remains between the 10 degree mask and a 75
    degree cap over the whole window (the cap avoids near-zenith passes whose
    apparent motion is fastest).
    """
    if n_sat < 4:
        raise ValidationError(f"need at least 4 satellites, got {n_sat}")
    if duration < 0 or interval <= 0:
        raise ValidationError("duration must be >= 0 and interval positive")
    n_epochs = int(np.floor(duration / interval + 1e-9)) + 1
    times = np.arange(n_epochs) * interval

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    sats = []
    attempts = 0
    while len(sats) < n_sat:
        attempts += 1
        if attempts > 20000:
            raise ValidationError("could not place the requested constellation")
        raan = float(rng.uniform(0.0, 2.0 * np.pi))
        phase = float(rng.uniform(0.0, 2.0 * np.pi))
        ok = True
        for t in (times[0], times[-1], times[len(times) // 2]):
            el = _elevation(_receiver_ecef(t), _satellite_ecef(raan, phase, t))
            if not (ELEVATION_MASK_RAD <= el <= ELEVATION_CAP_RAD):
                ok = False
                break
        if ok and len(times) > 1:
            # keep the apparent motion below the documented per-second rate
            span = max(times[-1] - times[0], 1.0)
            l0 = _receiver_ecef(times[0]) - _satellite_ecef(raan, phase, times[0])
            l1 = _receiver_ecef(times[-1]) - _satellite_ecef(raan, phase, times[-1])
            cosang = float(np.dot(l0, l1) / (np.linalg.norm(l0) * np.linalg.norm(l1)))
            rate = np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0))) / span
            if rate > MAX_LOS_RATE_DEG_S:
                ok = False
        if ok:
            sats.append((raan, phase))

    out = np.zeros((n_epochs, n_sat, 3))
    for i, t in enumerate(times):
        rcv = _receiver_ecef(t)
        for k, (raan, phase) in enumerate(sats):
            los = rcv - _satellite_ecef(raan, phase, t)
            out[i, k] = los / np.linalg.norm(los)
    return out
