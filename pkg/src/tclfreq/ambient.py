"""Synthetic ambient and hot-water draw inputs for the device populations.

Room temperature follows the outdoor temperature through an affine map held
inside the band that space heating/cooling would maintain; cold mains water
never drops below 10 °C.  Hot-water draw is a per-device piecewise-constant
process: a scenario amplitude times an hour-of-day level times an
exponentially distributed block multiplier.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Relative hot-water use by hour of day (mean 1).
HOURLY_DRAW_LEVEL = (
    0.30, 0.20, 0.15, 0.15, 0.20, 0.50, 1.50, 2.20, 2.00, 1.50, 1.20, 1.00,
    1.00, 0.90, 0.80, 0.80, 0.90, 1.10, 1.40, 1.60, 1.60, 1.40, 1.00, 0.70,
)

ROOM_TEMP_BAND = (18.0, 28.0)


def room_temperature(outdoor: float, offset: float = 0.0) -> float:
    lo, hi = ROOM_TEMP_BAND
    return float(np.clip(0.5 * outdoor + 10.0, lo, hi)) + offset


def cold_water_temperature(outdoor: float) -> float:
    return max(outdoor, 10.0)


@dataclass
class DrawProfile:
    """Per-device draw rates (m³/s) as a function of absolute simulation time.

    ``start_hour`` is the clock hour at simulation time 0.
    """
    n_devices: int
    amplitude: float
    start_hour: float
    seed: int
    block_seconds: float = 600.0
    _cache: dict = field(default_factory=dict, repr=False)

    def block_index(self, t: float) -> int:
        return int(np.floor(t / self.block_seconds))

    def level(self, t: float) -> float:
        hour = int(np.floor(self.start_hour + t / 3600.0)) % 24
        return HOURLY_DRAW_LEVEL[hour]

    def multipliers(self, block: int) -> np.ndarray:
        m = self._cache.get(block)
        if m is None:
            rng = np.random.default_rng([self.seed, block + 1_000_000])
            m = rng.exponential(1.0, size=self.n_devices)
            if len(self._cache) > 64:
                self._cache.clear()
            self._cache[block] = m
        return m

    def rates(self, t: float) -> np.ndarray:
        if self.amplitude == 0.0:
            return np.zeros(self.n_devices)
        block_start = self.block_index(t) * self.block_seconds
        return self.amplitude * self.level(block_start) * self.multipliers(self.block_index(t))


@dataclass(frozen=True)
class AmbientConditions:
    outdoor_temp: float
    hour: float
    room_offset: float = 0.0

    @property
    def room_temp(self) -> float:
        return room_temperature(self.outdoor_temp, self.room_offset)

    @property
    def cold_water_temp(self) -> float:
        return cold_water_temperature(self.outdoor_temp)
