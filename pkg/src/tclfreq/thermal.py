"""Thermal models of the reference refrigerator and electric water heater.

The refrigerator is a four-node network (fridge air a, freezer space b,
fridge content c, freezer content d) coupled to the room e; a single heat
pump driven by the thermostat on T_a extracts heat from a and b.  The water
heater is a single well-mixed node with standing losses, hot-water draw and
a resistive element.

Both models are integrated with explicit Euler.  The per-device right-hand
sides are numba kernels so the population stepper can call them directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np
from numba import njit

COOLING = 0
HEATING = 1

# Column layout of the per-device coefficient matrices used by the kernels.
FRIDGE_COEFS = (
    "a_ab", "a_ac", "a_ae", "a_cool",
    "b_ab", "b_bd", "b_be", "b_cool",
    "c_ac", "d_bd",
)
BOILER_COEFS = ("loss", "heat", "inv_volume")


@dataclass(frozen=True)
class FridgeParams:
    # Reference refrigerator data; the "c-d" link row is used as
    # the a-b exchange, the only pairing that fits the four-node equations.
    mass_a: float = 10.0
    mass_b: float = 5.0
    mass_c: float = 10.0
    mass_d: float = 4.0
    heat_a: float = 2200.0
    heat_b: float = 1000.0
    heat_c: float = 4000.0
    heat_d: float = 4000.0
    ua_ab: float = 0.4 * 12.5
    ua_ac: float = 1.0 * 12.5
    ua_ae: float = 2.0 * 0.5
    ua_bd: float = 0.26 * 2.5
    ua_be: float = 0.97 * 0.15
    cop_fridge: float = 0.456
    cop_freezer: float = 0.744
    nominal_power: float = 100.0
    setpoint: float = 4.0
    half_deadband: float = 0.5
    security_min: float = 2.0
    security_max: float = 7.0

    def __post_init__(self):
        for f in fields(self):
            if f.name in ("setpoint", "security_min", "security_max"):
                continue
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive")
        if not (self.security_min < self.setpoint - self.half_deadband
                < self.setpoint + self.half_deadband < self.security_max):
            raise ValueError("security interval must strictly contain the dead-band")

    def coefficients(self) -> np.ndarray:
        ca = self.mass_a * self.heat_a
        cb = self.mass_b * self.heat_b
        cc = self.mass_c * self.heat_c
        cd = self.mass_d * self.heat_d
        return np.array([
            self.ua_ab / ca, self.ua_ac / ca, self.ua_ae / ca,
            self.cop_fridge * self.nominal_power / ca,
            self.ua_ab / cb, self.ua_bd / cb, self.ua_be / cb,
            self.cop_freezer * self.nominal_power / cb,
            self.ua_ac / cc, self.ua_bd / cd,
        ])


@dataclass(frozen=True)
class BoilerParams:
    volume: float = 0.099
    water_specific_heat: float = 418.6  # as tabulated; physical water is 4186
    water_density: float = 1000.0
    thermal_resistance: float = 0.777
    efficiency: float = 1.0
    nominal_power: float = 1500.0
    setpoint: float = 60.0
    half_deadband: float = 5.0
    security_min: float = 50.0
    security_max: float = 70.0

    def __post_init__(self):
        for name in ("volume", "water_specific_heat", "water_density",
                     "thermal_resistance", "efficiency", "nominal_power", "half_deadband"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not (self.security_min < self.setpoint - self.half_deadband
                < self.setpoint + self.half_deadband < self.security_max):
            raise ValueError("security interval must strictly contain the dead-band")

    @property
    def heat_capacity(self) -> float:
        """J/°C of the full tank."""
        return self.water_specific_heat * self.volume * self.water_density

    @property
    def loss_time_constant(self) -> float:
        return self.thermal_resistance * self.heat_capacity

    def coefficients(self) -> np.ndarray:
        c = self.heat_capacity
        return np.array([
            1.0 / (self.thermal_resistance * c),
            self.efficiency * self.nominal_power / c,
            1.0 / self.volume,
        ])


@dataclass(frozen=True)
class FridgeState:
    t_a: float
    t_b: float
    t_c: float
    t_d: float
    q: int = 0

    def as_array(self) -> np.ndarray:
        return np.array([self.t_a, self.t_b, self.t_c, self.t_d])


@dataclass(frozen=True)
class BoilerState:
    t_h: float
    q: int = 0


@dataclass(frozen=True)
class AmbientInputs:
    room_temp: float = 20.0
    cold_water_temp: float = 15.0
    draw_rate: float = 0.0  # m³/s

    def __post_init__(self):
        if self.draw_rate < 0:
            raise ValueError("draw_rate must be non-negative")


@njit(cache=True)
def fridge_derivatives(ta, tb, tc, td, coef, room_temp, q):
    """Time derivatives of the four refrigerator temperatures (°C/s)."""
    dta = (-coef[0] * (ta - tb) - coef[1] * (ta - tc) - coef[2] * (ta - room_temp)
           - coef[3] * q)
    dtb = (-coef[4] * (tb - ta) - coef[5] * (tb - td) - coef[6] * (tb - room_temp)
           - coef[7] * q)
    dtc = -coef[8] * (tc - ta)
    dtd = -coef[9] * (td - tb)
    return dta, dtb, dtc, dtd


@njit(cache=True)
def boiler_derivative(th, coef, room_temp, cold_water_temp, draw_rate, q):
    """Time derivative of the tank temperature (°C/s)."""
    return (-coef[0] * (th - room_temp)
            - draw_rate * coef[2] * (th - cold_water_temp)
            + coef[1] * q)


@njit(cache=True)
def thermostat_update(temp, q_prev, setpoint, half_deadband, mode):
    """Hysteresis thermostat; ``mode`` is COOLING (0) or HEATING (1)."""
    upper = setpoint + half_deadband
    lower = setpoint - half_deadband
    if mode == COOLING:
        if temp > upper:
            return 1
        if temp < lower:
            return 0
        return q_prev
    if temp < lower:
        return 1
    if temp > upper:
        return 0
    return q_prev


def _check_finite(*values):
    if not all(math.isfinite(v) for v in values):
        raise ValueError("thermal state is not finite")


def fridge_step(state: FridgeState, params: FridgeParams, ambient: AmbientInputs,
                q_effective: int, dt: float) -> FridgeState:
    """One explicit Euler step with the compressor held at ``q_effective``.

    The thermostat flag stored in the state is carried through unchanged.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if q_effective not in (0, 1):
        raise ValueError("q_effective must be 0 or 1")
    _check_finite(state.t_a, state.t_b, state.t_c, state.t_d)
    d = fridge_derivatives(state.t_a, state.t_b, state.t_c, state.t_d,
                           params.coefficients(), ambient.room_temp, q_effective)
    return replace(state, t_a=state.t_a + dt * d[0], t_b=state.t_b + dt * d[1],
                   t_c=state.t_c + dt * d[2], t_d=state.t_d + dt * d[3])


def boiler_step(state: BoilerState, params: BoilerParams, ambient: AmbientInputs,
                q_effective: int, dt: float) -> BoilerState:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if q_effective not in (0, 1):
        raise ValueError("q_effective must be 0 or 1")
    _check_finite(state.t_h)
    d = boiler_derivative(state.t_h, params.coefficients(), ambient.room_temp,
                          ambient.cold_water_temp, ambient.draw_rate, q_effective)
    return replace(state, t_h=state.t_h + dt * d)


def fridge_system_matrix(params: FridgeParams, room_temp: float, q: int):
    """Affine form dx/dt = A x + b of the refrigerator network."""
    c = params.coefficients()
    a = np.array([
        [-(c[0] + c[1] + c[2]), c[0], c[1], 0.0],
        [c[4], -(c[4] + c[5] + c[6]), 0.0, c[5]],
        [c[8], 0.0, -c[8], 0.0],
        [0.0, c[9], 0.0, -c[9]],
    ])
    b = np.array([c[2] * room_temp - c[3] * q, c[6] * room_temp - c[7] * q, 0.0, 0.0])
    return a, b
