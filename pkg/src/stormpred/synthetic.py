"""Synthetic constant-velocity storm tracks for tests, demos, and benchmarks.

Tracks share a slow west-northwest drift (optionally jittered per track) over
a compact patch of ocean, and intensity varies linearly with position: wind
mirrors latitude, pressure mirrors longitude. The redundancy matters for
training under feature dropout: a dropped position input stays recoverable
from intensity, so the clean-mask predictor is not biased toward the mean.
Linear motion is learnable by the recurrence, which makes these tracks a fast
end-to-end fixture. Optional position noise makes the fit imperfect so
regularization effects stay visible.
"""

from __future__ import annotations

from datetime import datetime

import numpy as np

from .errors import ValidationError
from .storm_data import FIX_INTERVAL, Fix, StormTrack

_EPOCH = datetime(2005, 8, 1)
_BASE_DLAT = 0.15
_BASE_DLON = -0.25


def make_tracks(n_tracks: int, length: int, seed: int,
                noise_deg: float = 0.0,
                velocity_jitter: float = 0.0,
                lat_range: tuple[float, float] = (15.0, 25.0),
                lon_range: tuple[float, float] = (-75.0, -55.0)) -> list[StormTrack]:
    """Generate constant-velocity tracks, deterministic given the seed."""
    if n_tracks < 1:
        raise ValidationError(f"n_tracks must be >= 1, got {n_tracks}")
    if length < 1:
        raise ValidationError(f"length must be >= 1, got {length}")
    if noise_deg < 0.0:
        raise ValidationError(f"noise_deg must be >= 0, got {noise_deg}")
    if velocity_jitter < 0.0:
        raise ValidationError(
            f"velocity_jitter must be >= 0, got {velocity_jitter}")
    for name, (lo, hi) in (("lat_range", lat_range), ("lon_range", lon_range)):
        if lo >= hi:
            raise ValidationError(f"{name} must satisfy low < high, got {lo}, {hi}")
    rng = np.random.default_rng(seed)
    tracks = []
    for i in range(n_tracks):
        lat0 = rng.uniform(lat_range[0], lat_range[1])
        lon0 = rng.uniform(lon_range[0], lon_range[1])
        dlat = _BASE_DLAT + rng.uniform(-velocity_jitter, velocity_jitter)
        dlon = _BASE_DLON + rng.uniform(-velocity_jitter, velocity_jitter)
        steps = np.arange(length)
        lat = lat0 + dlat * steps
        lon = lon0 + dlon * steps
        if noise_deg > 0.0:
            lat = lat + rng.normal(0.0, noise_deg, size=length)
            lon = lon + rng.normal(0.0, noise_deg, size=length)
        lat = np.clip(lat, -89.0, 89.0)
        lon = np.clip(lon, -179.0, 179.0)
        wind = np.clip(80.0 - 1.5 * lat, 10.0, 180.0)
        pressure = np.clip(1050.0 + 1.0 * lon, 900.0, 1090.0)
        fixes = [Fix(timestamp=_EPOCH + int(k) * FIX_INTERVAL,
                     lat=float(lat[k]), lon=float(lon[k]),
                     max_wind=float(wind[k]),
                     min_pressure=float(pressure[k]))
                 for k in range(length)]
        tracks.append(StormTrack(storm_id=f"SYN{i:03d}", name=f"SYNTH{i}",
                                 fixes=fixes))
    return tracks
