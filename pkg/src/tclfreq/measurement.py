"""Local frequency measurement: sampling, first-order low-pass filter, RoCoF.

Every controller in the population sees the same bus frequency, so one
measurement pipeline is advanced per simulation step and shared.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

F_NOM = 50.0


@dataclass(frozen=True)
class MeasurementConfig:
    sample_period: float = 0.02
    filter_time_constant: float = 0.1

    def __post_init__(self):
        if not self.sample_period > 0 or not self.filter_time_constant > 0:
            raise ValueError("sample_period and filter_time_constant must be positive")

    @property
    def decay(self) -> float:
        """Per-sample decay factor of the zero-order-hold discretisation."""
        return math.exp(-self.sample_period / self.filter_time_constant)


@dataclass(frozen=True)
class MeasurementState:
    filtered_freq: float = F_NOM
    prev_filtered_freq: float = F_NOM
    rocof: float = 0.0
    steps: int = 0

    @classmethod
    def initial(cls, freq: float = F_NOM) -> "MeasurementState":
        return cls(filtered_freq=freq, prev_filtered_freq=freq, rocof=0.0, steps=0)

    @property
    def freq_deviation(self) -> float:
        return self.filtered_freq - F_NOM


def filter_step(raw_freq: float, state: MeasurementState, cfg: MeasurementConfig) -> MeasurementState:
    """Advance the filter by one sample of the raw bus frequency."""
    if not math.isfinite(raw_freq):
        raise ValueError(f"raw frequency sample is not finite: {raw_freq!r}")
    a = cfg.decay
    filtered = state.filtered_freq + (1.0 - a) * (raw_freq - state.filtered_freq)
    return replace(
        state,
        prev_filtered_freq=state.filtered_freq,
        filtered_freq=filtered,
        rocof=(filtered - state.filtered_freq) / cfg.sample_period,
        steps=state.steps + 1,
    )


def measure_rocof(state: MeasurementState, cfg: MeasurementConfig) -> float:
    return (state.filtered_freq - state.prev_filtered_freq) / cfg.sample_period


class FrequencyMeter:
    """Mutable wrapper used inside the simulation loop (avoids per-step allocation)."""

    __slots__ = ("decay", "sample_period", "filtered", "previous", "rocof")

    def __init__(self, cfg: MeasurementConfig, freq: float = F_NOM):
        self.decay = cfg.decay
        self.sample_period = cfg.sample_period
        self.filtered = freq
        self.previous = freq
        self.rocof = 0.0

    def update(self, raw_freq: float) -> None:
        self.previous = self.filtered
        self.filtered = self.filtered + (1.0 - self.decay) * (raw_freq - self.filtered)
        self.rocof = (self.filtered - self.previous) / self.sample_period

    @property
    def freq_deviation(self) -> float:
        return self.filtered - F_NOM
