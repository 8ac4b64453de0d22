"""Per-device SI and PFR frequency control and their blended SI-PFR mode.

Each device compares a locally measured signal (RoCoF for synthetic inertia,
frequency deviation for primary regulation) with its own threshold drawn
uniformly between an activation value and a maximum.  An off device is forced
on (+1) by a positive excursion beyond its threshold, an on device is forced
off (-1) by a negative one; the effective state is thermostat + forcing.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
from numba import njit

from .measurement import F_NOM


class ControlMode(enum.IntEnum):
    NONE = 0
    SI = 1
    PFR = 2
    SI_PFR = 3

    @classmethod
    def parse(cls, value) -> "ControlMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        try:
            return _MODE_NAMES[key]
        except KeyError:
            raise ValueError(f"unknown control mode {value!r}; "
                             f"expected one of {sorted(_MODE_NAMES)}") from None

    @property
    def label(self) -> str:
        return {0: "none", 1: "si", 2: "pfr", 3: "si-pfr"}[int(self)]


_MODE_NAMES = {"none": ControlMode.NONE, "si": ControlMode.SI,
               "pfr": ControlMode.PFR, "si-pfr": ControlMode.SI_PFR}


@dataclass(frozen=True)
class ControlParams:
    rocof_act: float = 0.05
    rocof_max: float = 0.8
    freq_act: float = 0.05
    freq_max: float = 0.8
    t_switch: float = 1.0
    t_ramp: float = 4.0
    alpha_reset_hold: float = 10.0
    si_capable: bool = True

    def __post_init__(self):
        if not 0 <= self.rocof_act < self.rocof_max:
            raise ValueError("need 0 <= rocof_act < rocof_max")
        if not 0 <= self.freq_act < self.freq_max:
            raise ValueError("need 0 <= freq_act < freq_max")
        if self.t_switch < 0 or self.t_ramp <= 0 or self.alpha_reset_hold < 0:
            raise ValueError("invalid SI-PFR timing parameters")

    def effective_mode(self, mode: ControlMode) -> ControlMode:
        """Devices that cannot switch fast enough for SI only take the PFR part."""
        mode = ControlMode.parse(mode)
        if self.si_capable:
            return mode
        if mode is ControlMode.SI:
            return ControlMode.NONE
        if mode is ControlMode.SI_PFR:
            return ControlMode.PFR
        return mode


BOILER_CONTROL = ControlParams()
FRIDGE_CONTROL = ControlParams(freq_act=0.1, si_capable=False)


@dataclass(frozen=True)
class DeviceThresholds:
    """Per-device thresholds, one entry per device."""
    rocof: np.ndarray
    freq: np.ndarray

    def __len__(self):
        return len(self.rocof)


def assign_thresholds(n: int, params: ControlParams, seed) -> DeviceThresholds:
    """Uniform thresholds on [act, max] for RoCoF and frequency deviation.

    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if n < 1:
        raise ValueError("need at least one device")
    if params.rocof_max <= params.rocof_act or params.freq_max <= params.freq_act:
        raise ValueError("degenerate threshold interval")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    rocof = rng.uniform(params.rocof_act, params.rocof_max, size=n)
    freq = rng.uniform(params.freq_act, params.freq_max, size=n)
    return DeviceThresholds(rocof=rocof, freq=freq)


@njit(cache=True)
def threshold_decision(q_thermostat, signal, threshold, locked_out):
    if locked_out:
        return 0
    if q_thermostat == 0 and signal >= threshold:
        return 1
    if q_thermostat == 1 and signal <= -threshold:
        return -1
    return 0


@njit(cache=True)
def si_decision(q_thermostat, rocof, rocof_threshold, locked_out):
    return threshold_decision(q_thermostat, rocof, rocof_threshold, locked_out)


@njit(cache=True)
def pfr_decision(q_thermostat, freq_dev, freq_threshold, locked_out):
    return threshold_decision(q_thermostat, freq_dev, freq_threshold, locked_out)


@njit(cache=True)
def combined_decision(q_thermostat, rocof, freq_dev, rocof_threshold, freq_threshold,
                      alpha, locked_out):
    signal = alpha * freq_dev + (1.0 - alpha) * rocof
    threshold = alpha * freq_threshold + (1.0 - alpha) * rocof_threshold
    return threshold_decision(q_thermostat, signal, threshold, locked_out)


@njit(cache=True)
def control_decision(mode, q_thermostat, rocof, freq_dev, rocof_threshold,
                     freq_threshold, alpha, locked_out):
    """Forcing term for any control mode (integer code of ``ControlMode``)."""
    if mode == 1:
        return threshold_decision(q_thermostat, rocof, rocof_threshold, locked_out)
    if mode == 2:
        return threshold_decision(q_thermostat, freq_dev, freq_threshold, locked_out)
    if mode == 3:
        return combined_decision(q_thermostat, rocof, freq_dev, rocof_threshold,
                                 freq_threshold, alpha, locked_out)
    return 0


@njit(cache=True)
def security_lockout(temp, security_min, security_max):
    return temp < security_min or temp > security_max


@dataclass(frozen=True)
class ControlState:
    """Shared SI-to-PFR handover state of one device class."""
    alpha: float = 0.0
    triggered: bool = False
    elapsed: float = 0.0
    quiet: float = 0.0


def alpha_schedule(state: ControlState, rocof: float, freq_dev: float,
                   params: ControlParams, dt: float) -> ControlState:
    """Advance the blending weight between the RoCoF and frequency inputs.

    The ramp is armed when the measured deviation leaves the PFR activation
    band, starts ``t_switch`` later and reaches 1 after ``t_ramp``.  Once the
    deviation has stayed inside the band for ``alpha_reset_hold`` seconds the
    weight returns to 0 and the trigger re-arms.
    """
    outside = abs(freq_dev) > params.freq_act
    quiet = 0.0 if outside else state.quiet + dt
    if not state.triggered:
        if outside:
            return ControlState(alpha=0.0, triggered=True, elapsed=0.0, quiet=0.0)
        return replace(state, quiet=quiet)
    if quiet >= params.alpha_reset_hold:
        return ControlState()
    elapsed = state.elapsed + dt
    alpha = min(max((elapsed - params.t_switch) / params.t_ramp, 0.0), 1.0)
    return ControlState(alpha=alpha, triggered=True, elapsed=elapsed, quiet=quiet)


def activation_probability(signal: float, act: float, top: float) -> float:
    """Probability that a uniform threshold on [act, top] is at or below |signal|."""
    s = abs(signal)
    if s < act:
        return 0.0
    return min((s - act) / (top - act), 1.0)


def predicted_power_delta(n_on: int, n_off: int, nominal_power: float, signal: float,
                          params: ControlParams, kind: str) -> float:
    """Expected aggregate power change (same unit as ``nominal_power``).

    Off devices are recruited by positive excursions, on devices by negative
    ones; recruitment saturates once every threshold has been exceeded.
    """
    kind = kind.lower()
    if kind == "si":
        act, top = params.rocof_act, params.rocof_max
    elif kind == "pfr":
        act, top = params.freq_act, params.freq_max
    else:
        raise ValueError(f"kind must be 'si' or 'pfr', got {kind!r}")
    r = activation_probability(signal, act, top)
    if signal > 0:
        return n_off * nominal_power * r
    return -n_on * nominal_power * r


def equivalent_droop(n_total: int, n_sub: int, params: ControlParams,
                     f_nom: float = F_NOM) -> float:
    """Equivalent droop (p.u. of the aggregate) for the off (or on) subset."""
    if n_sub == 0:
        return float("inf")
    return (params.freq_max - params.freq_act) / f_nom * n_total / n_sub
