"""Single-bus frequency model of the Sardinia-Corse system.

Deviation form: every power below is a change with respect to the scheduled
pre-event operating point, so the balanced system sits at Δf = 0.

Ingredients:
  * swing equation  dΔf/dt = f_nom/(T_a·P_N) · (ΣΔP_m − ΣΔP_e)
  * primary regulation per unit: droop gain P_nom/(f_nom·d), offset dead-band,
    one first-order governor/turbine lag, saturation to the unit headroom
  * secondary regulation: integral of K·Δf with time constant T_N, shared by
    participation factors, per-unit ramp limits and area reserve caps
  * frequency-dependent load through a first-order filtered Δf
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .measurement import F_NOM

UNIT_TYPES = ("hydro", "gas", "thermal", "equivalent", "diesel", "compensator",
              "renewable", "hvdc")
SYNCHRONOUS_TYPES = frozenset({"hydro", "gas", "thermal", "equivalent", "diesel", "compensator"})

# Governor/turbine lag per unit type (s).
DEFAULT_GOVERNOR_LAG = {
    "hydro": 6.0,
    "gas": 1.5,
    "thermal": 5.0,
    "equivalent": 5.0,
    "diesel": 1.0,
    "hvdc": 0.1,
}

DEFAULT_INTEGRATION_TIME = 110.0


@dataclass(frozen=True)
class UnitSpec:
    name: str
    type: str
    p_nom: float
    p_min: float
    start_up_time: Optional[float] = None
    droop: Optional[float] = None            # fraction, e.g. 0.05
    half_deadband: Optional[float] = None    # Hz
    rate_limit: Optional[float] = None       # % of P_nom per minute
    participation: float = 0.0
    operating_point: float = 0.0
    in_service: bool = True
    governor_lag: Optional[float] = None
    # Pumped storage regulates only in generating mode and does not cross
    # into pumping to follow the governor.
    pfr_in_pump_mode: bool = True

    def __post_init__(self):
        if self.type not in UNIT_TYPES:
            raise ValueError(f"unit {self.name!r}: unknown type {self.type!r}")
        if self.p_min > self.p_nom:
            raise ValueError(f"unit {self.name!r}: p_min exceeds p_nom")
        if self.droop is not None and not self.droop > 0:
            raise ValueError(f"unit {self.name!r}: droop must be positive")
        if self.half_deadband is not None and self.half_deadband < 0:
            raise ValueError(f"unit {self.name!r}: dead-band must be non-negative")
        if not 0.0 <= self.participation <= 1.0:
            raise ValueError(f"unit {self.name!r}: participation must lie in [0, 1]")
        if self.in_service and not (min(self.p_min, 0.0) - 1e-9 <= self.operating_point
                                    <= self.p_nom + 1e-9):
            raise ValueError(f"unit {self.name!r}: operating point outside [P_min, P_nom]")

    @property
    def synchronous(self) -> bool:
        return self.type in SYNCHRONOUS_TYPES and self.start_up_time is not None

    @property
    def provides_pfr(self) -> bool:
        if not self.in_service or self.droop is None:
            return False
        return self.pfr_in_pump_mode or self.operating_point >= 0.0

    def gain(self, f_nom: float = F_NOM) -> float:
        """Static primary gain (MW/Hz); zero for units without PFR."""
        return self.p_nom / (f_nom * self.droop) if self.provides_pfr else 0.0

    @property
    def lag(self) -> float:
        if self.governor_lag is not None:
            return self.governor_lag
        return DEFAULT_GOVERNOR_LAG.get(self.type, 5.0)

    def headroom(self) -> tuple:
        """Admissible output change (MW) around the operating point.

        A unit dispatched below its technical minimum is not pushed further down.
        """
        op = self.operating_point
        floor = min(self.p_min, op)
        if not self.pfr_in_pump_mode and op >= 0.0:
            floor = max(floor, 0.0)
        return floor - op, self.p_nom - op

    def ramp_rate(self) -> float:
        """Secondary ramp limit in MW/s (inf when unrestricted)."""
        if self.rate_limit is None:
            return math.inf
        return self.rate_limit / 100.0 * self.p_nom / 60.0


@dataclass(frozen=True)
class GridConstants:
    nominal_freq: float
    nominal_power: float       # MW
    start_up_time: float       # s
    regulating_energy: float   # MW/Hz
    integration_time: float = DEFAULT_INTEGRATION_TIME

    def __post_init__(self):
        for name in ("nominal_freq", "nominal_power", "start_up_time", "regulating_energy",
                     "integration_time"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def swing_gain(self) -> float:
        """Hz/s per MW of imbalance."""
        return self.nominal_freq / (self.start_up_time * self.nominal_power)


def compute_grid_constants(units: Sequence[UnitSpec], f_nom: float = F_NOM,
                           integration_time: float = DEFAULT_INTEGRATION_TIME) -> GridConstants:
    sync = [u for u in units if u.in_service and u.synchronous]
    if not sync:
        raise ValueError("no in-service synchronous unit")
    p_n = sum(u.p_nom for u in sync)
    t_a = sum(u.start_up_time * u.p_nom for u in sync) / p_n
    k = sum(u.gain(f_nom) for u in units)
    if k <= 0:
        raise ValueError("no in-service unit provides primary regulation")
    return GridConstants(f_nom, p_n, t_a, k, integration_time)


def deadband(df: float, half_band: float) -> float:
    """Offset dead-band: zero inside the band, continuous at its edges."""
    if df > half_band:
        return df - half_band
    if df < -half_band:
        return df + half_band
    return 0.0


@dataclass(frozen=True)
class GridState:
    freq_deviation: float = 0.0
    governor: tuple = ()           # per-unit lag outputs (MW)
    secondary_level: float = 0.0   # area request (MW)
    secondary_outputs: tuple = ()  # per-unit delivered secondary (MW)
    load_filter: float = 0.0       # filtered Δf (Hz)


def swing_step(state: GridState, consts: GridConstants, p_m_total: float,
               p_e_total: float, dt: float) -> GridState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    rate = consts.swing_gain * (p_m_total - p_e_total)
    return replace(state, freq_deviation=state.freq_deviation + dt * rate)


def primary_response(unit: UnitSpec, df: float, governor_state: float, dt: float,
                     f_nom: float = F_NOM) -> tuple:
    """Advance one governor lag; returns ``(output_MW, new_state)``.

    The output is the lag state saturated to the unit headroom; the state
    itself is held inside the same bounds (anti-windup).
    """
    if not unit.provides_pfr:
        return 0.0, 0.0
    request = -unit.gain(f_nom) * deadband(df, unit.half_deadband or 0.0)
    lo, hi = unit.headroom()
    y = governor_state + dt * (request - governor_state) / unit.lag
    y = min(max(y, lo), hi)
    return y, y


def secondary_step(state: GridState, consts: GridConstants, units: Sequence[UnitSpec],
                   df: float, dt: float, upward_reserve: float = math.inf,
                   downward_reserve: float = math.inf) -> GridState:
    """Integral secondary regulation with a single-area error K·Δf."""
    level = state.secondary_level - dt * consts.regulating_energy * df / consts.integration_time
    level = min(max(level, -downward_reserve), upward_reserve)
    prev = state.secondary_outputs or (0.0,) * len(units)
    outputs = []
    for u, s in zip(units, prev):
        if u.participation <= 0 or not u.in_service:
            outputs.append(0.0)
            continue
        step = u.ramp_rate() * dt
        target = u.participation * level
        outputs.append(s + min(max(target - s, -step), step))
    return replace(state, secondary_level=level, secondary_outputs=tuple(outputs))


def load_response(p_ref: float, df: float, filter_state: float, k_pf: float,
                  tau_pf: float, dt: float) -> tuple:
    """Frequency-dependent load; returns ``(P_e, new_filter_state)``.

    ``k_pf`` is a per-unit power change per Hz of filtered deviation.  The
    returned power uses the filter state *before* the update (explicit Euler).
    """
    if not tau_pf > 0:
        raise ValueError("tau_pf must be positive")
    p_e = p_ref * (1.0 + filter_state * k_pf)
    return p_e, filter_state + dt * (df - filter_state) / tau_pf


@dataclass(frozen=True)
class EventSpec:
    magnitude: float          # MW, positive
    direction: int            # +1 over-frequency, -1 under-frequency
    time: float = 60.0
    description: str = ""

    def __post_init__(self):
        if self.magnitude < 0:
            raise ValueError("event magnitude must be non-negative")
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        if self.time < 0:
            raise ValueError("event time must be non-negative")

    @property
    def kind(self) -> str:
        return "over" if self.direction > 0 else "under"

    @property
    def delta(self) -> float:
        """Signed bus injection (MW)."""
        return self.direction * self.magnitude


def apply_event(schedule, t: float) -> float:
    """Signed power step (MW) active at time ``t`` for one event or a list."""
    events = schedule if isinstance(schedule, (list, tuple)) else [schedule]
    return sum(e.delta for e in events if t >= e.time)


@njit(cache=True)
def _grid_step(df, y, s, level, lf, gain, db, lag, lo, hi, part, ramp, k_sec, t_n, up, down,
               swing_gain, p_event, p_loads, unc_ref, k_unc, tau_pf, dt, secondary_on):
    """One explicit Euler step of the whole bus; ``y`` and ``s`` updated in place.

    Returns (df_next, level_next, lf_next, primary, secondary, uncontrolled, imbalance).
    """
    primary = 0.0
    secondary = 0.0
    for i in range(gain.shape[0]):
        out = y[i] + s[i]
        if out > hi[i]:
            out = hi[i]
        elif out < lo[i]:
            out = lo[i]
        primary += y[i]
        secondary += out - y[i]
    unc = unc_ref * k_unc * lf
    imbalance = p_event + primary + secondary - unc - p_loads

    for i in range(gain.shape[0]):
        if gain[i] > 0.0:
            if df > db[i]:
                e = df - db[i]
            elif df < -db[i]:
                e = df + db[i]
            else:
                e = 0.0
            yi = y[i] + dt * (-gain[i] * e - y[i]) / lag[i]
            if yi > hi[i]:
                yi = hi[i]
            elif yi < lo[i]:
                yi = lo[i]
            y[i] = yi
    new_level = level
    if secondary_on:
        new_level = level - dt * k_sec * df / t_n
        if new_level > up:
            new_level = up
        elif new_level < -down:
            new_level = -down
        for i in range(gain.shape[0]):
            if part[i] > 0.0:
                step = ramp[i] * dt
                d = part[i] * level - s[i]
                if d > step:
                    d = step
                elif d < -step:
                    d = -step
                s[i] += d
    new_df = df + dt * swing_gain * imbalance
    new_lf = lf + dt * (df - lf) / tau_pf
    return new_df, new_level, new_lf, primary, secondary, unc, imbalance


class GridModel:
    """Vectorised bus stepper used by the simulation loop.

    ``p_loads`` passed to :meth:`step` is the controllable-load deviation in
    MW (positive = extra consumption); the uncontrolled-load dependence is
    handled internally.
    """

    def __init__(self, units: Sequence[UnitSpec], consts: GridConstants,
                 uncontrolled_load: float, k_pf: float, tau_pf: float = 5.0,
                 upward_reserve: float = math.inf, downward_reserve: float = math.inf,
                 secondary: bool = True):
        self.units = [u for u in units if u.in_service]
        self.consts = consts
        f_nom = consts.nominal_freq
        self.gain = np.array([u.gain(f_nom) for u in self.units])
        self.db = np.array([u.half_deadband or 0.0 for u in self.units])
        self.lag = np.array([u.lag for u in self.units])
        bounds = np.array([u.headroom() for u in self.units]).reshape(-1, 2)
        self.lo = bounds[:, 0].copy()
        self.hi = bounds[:, 1].copy()
        self.part = np.array([u.participation for u in self.units])
        self.ramp = np.array([u.ramp_rate() for u in self.units])
        self.uncontrolled_load = float(uncontrolled_load)
        self.k_pf = float(k_pf)
        self.tau_pf = float(tau_pf)
        self.upward_reserve = float(upward_reserve)
        self.downward_reserve = float(downward_reserve)
        self.secondary_on = bool(secondary)
        self.reset()

    def reset(self) -> None:
        n = len(self.units)
        self.df = 0.0
        self.y = np.zeros(n)
        self.s = np.zeros(n)
        self.level = 0.0
        self.lf = 0.0
        self.primary = 0.0
        self.secondary = 0.0
        self.uncontrolled_delta = 0.0
        self.imbalance = 0.0

    @property
    def frequency(self) -> float:
        return self.consts.nominal_freq + self.df

    def step(self, p_event: float, p_loads: float, dt: float) -> float:
        c = self.consts
        (self.df, self.level, self.lf, self.primary, self.secondary,
         self.uncontrolled_delta, self.imbalance) = _grid_step(
            self.df, self.y, self.s, self.level, self.lf, self.gain, self.db, self.lag,
            self.lo, self.hi, self.part, self.ramp, c.regulating_energy, c.integration_time,
            self.upward_reserve, self.downward_reserve, c.swing_gain, p_event, p_loads,
            self.uncontrolled_load, self.k_pf, self.tau_pf, dt, self.secondary_on)
        return self.df

    def snapshot(self) -> dict:
        return {
            "freq_deviation": self.df,
            "governor": self.y.tolist(),
            "secondary_outputs": self.s.tolist(),
            "secondary_level": self.level,
            "load_filter": self.lf,
            "units": [u.name for u in self.units],
        }
