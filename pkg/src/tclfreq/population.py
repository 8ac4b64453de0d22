"""Monte Carlo device aggregates and their thermal warm-up.

Each of the ``m`` sampled devices stands for a sub-aggregate of nominal power
P_x^nom/m, so the class power is P_x^nom times the fraction of devices on.

A population can carry a *baseline twin*: the trajectory the same devices
would follow under plain thermostat control.  Only devices that have been
forced at least once are simulated separately; every other device is its own
twin.  The grid sees the difference between the two, which isolates the
control action (and its payback) from natural thermostat cycling.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np
from numba import njit

from .ambient import AmbientConditions, DrawProfile
from .control import (BOILER_CONTROL, FRIDGE_CONTROL, ControlMode, ControlParams,
                      DeviceThresholds, activation_probability, assign_thresholds,
                      control_decision, security_lockout)
from .measurement import F_NOM
from .thermal import (COOLING, HEATING, AmbientInputs, BoilerParams, FridgeParams,
                      boiler_derivative, fridge_derivatives, thermostat_update)

log = logging.getLogger(__name__)

FRIDGE = "fridge"
BOILER = "boiler"
_CLASS_CODE = {FRIDGE: 1, BOILER: 2}

# Fields perturbed per device; thermostat set-points and material constants stay at reference.
PERTURBED = {
    FRIDGE: ("mass_a", "mass_b", "mass_c", "mass_d", "heat_a", "heat_b", "heat_c",
             "heat_d", "ua_ab", "ua_ac", "ua_ae", "ua_bd", "ua_be", "cop_fridge",
             "cop_freezer", "nominal_power", "half_deadband"),
    BOILER: ("volume", "thermal_resistance", "nominal_power", "half_deadband"),
}


@dataclass(frozen=True)
class PopulationSpec:
    device_class: str
    aggregate_nominal_power: float  # W
    sample_count: int = 1000
    dispersion: float = 0.10
    seed: int = 0

    def __post_init__(self):
        if self.device_class not in _CLASS_CODE:
            raise ValueError(f"device_class must be 'fridge' or 'boiler', got {self.device_class!r}")
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if not 0 <= self.dispersion < 1:
            raise ValueError("dispersion must lie in [0, 1)")
        if not self.aggregate_nominal_power > 0:
            raise ValueError("aggregate_nominal_power must be positive")


@dataclass
class DevicePopulation:
    spec: PopulationSpec
    control: ControlParams
    params: list
    coef: np.ndarray
    setpoint: np.ndarray
    half_deadband: np.ndarray
    security_min: np.ndarray
    security_max: np.ndarray
    temp: np.ndarray            # (m,) boilers, (m, 4) fridges
    q_thermostat: np.ndarray
    q: np.ndarray
    thresholds: DeviceThresholds
    mode: ControlMode = ControlMode.NONE
    track_baseline: bool = False
    diverged: Optional[np.ndarray] = None
    twin_temp: Optional[np.ndarray] = None
    twin_q: Optional[np.ndarray] = None
    max_deviation: Optional[np.ndarray] = None
    excursion: np.ndarray = field(default_factory=lambda: np.zeros(1))
    n_on_baseline: int = 0
    n_forced: int = 0

    @property
    def kind(self) -> str:
        return self.spec.device_class

    @property
    def size(self) -> int:
        return self.spec.sample_count

    @property
    def unit_power(self) -> float:
        return self.spec.aggregate_nominal_power / self.spec.sample_count

    @property
    def n_on(self) -> int:
        return int(self.q.sum())

    @property
    def n_off(self) -> int:
        return self.size - self.n_on

    @property
    def aggregate_power(self) -> float:
        return self.unit_power * self.n_on

    @property
    def baseline_power(self) -> float:
        if not self.track_baseline:
            return self.aggregate_power
        return self.unit_power * self.n_on_baseline

    @property
    def control_temp(self) -> np.ndarray:
        return self.temp[:, 0] if self.temp.ndim == 2 else self.temp

    def set_mode(self, mode) -> None:
        self.mode = self.control.effective_mode(mode)

    def start_baseline_tracking(self) -> None:
        m = self.size
        self.track_baseline = True
        self.diverged = np.zeros(m, dtype=np.bool_)
        self.twin_temp = np.zeros_like(self.temp)
        self.twin_q = np.zeros(m, dtype=np.int64)
        self.max_deviation = np.zeros(m)
        self.excursion = np.zeros(1)
        self.n_on_baseline = self.n_on

    def copy(self) -> "DevicePopulation":
        out = replace(self)
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, np.ndarray):
                setattr(out, f.name, v.copy())
        return out

    def rescaled(self, factor: float) -> "DevicePopulation":
        """Same devices, aggregate nominal power multiplied by ``factor``."""
        out = self.copy()
        out.spec = replace(self.spec, aggregate_nominal_power=self.spec.aggregate_nominal_power * factor)
        return out


def _perturb(reference, names, sigma, rng, max_retries=20):
    values = {}
    for name in names:
        ref = getattr(reference, name)
        for _ in range(max_retries):
            z = float(np.clip(rng.standard_normal(), -3.0, 3.0))
            v = ref * (1.0 + sigma * z)
            if v > 0:
                break
        else:
            raise ValueError(f"could not draw a positive value for {name}")
        values[name] = v
    return replace(reference, **values)


def build_population(spec: PopulationSpec, reference=None,
                     control: Optional[ControlParams] = None,
                     mode=ControlMode.NONE) -> DevicePopulation:
    """Sample ``m`` devices around the reference model and assign thresholds.

    Temperatures start uniformly inside each device's dead-band with the
    thermostat off; a warm-up is needed to reach a realistic duty cycle.
    """
    kind = spec.device_class
    if reference is None:
        reference = FridgeParams() if kind == FRIDGE else BoilerParams()
    if control is None:
        control = FRIDGE_CONTROL if kind == FRIDGE else BOILER_CONTROL
    code = _CLASS_CODE[kind]
    rng_params = np.random.default_rng([spec.seed, code, 1])
    rng_thr = np.random.default_rng([spec.seed, code, 2])
    rng_state = np.random.default_rng([spec.seed, code, 3])

    m = spec.sample_count
    params = [_perturb(reference, PERTURBED[kind], spec.dispersion, rng_params) if spec.dispersion > 0
              else reference for _ in range(m)]
    coef = np.ascontiguousarray(np.stack([p.coefficients() for p in params]))
    setpoint = np.array([p.setpoint for p in params])
    half_db = np.array([p.half_deadband for p in params])
    sec_min = np.array([p.security_min for p in params])
    sec_max = np.array([p.security_max for p in params])

    t_ctrl = setpoint + half_db * rng_state.uniform(-1.0, 1.0, size=m)
    if kind == FRIDGE:
        temp = np.empty((m, 4))
        temp[:, 0] = t_ctrl
        temp[:, 1] = t_ctrl - 2.0
        temp[:, 2] = t_ctrl
        temp[:, 3] = t_ctrl - 2.0
    else:
        temp = t_ctrl.copy()

    pop = DevicePopulation(
        spec=spec, control=control, params=params, coef=coef, setpoint=setpoint,
        half_deadband=half_db, security_min=sec_min, security_max=sec_max, temp=temp,
        q_thermostat=np.zeros(m, dtype=np.int64), q=np.zeros(m, dtype=np.int64),
        thresholds=assign_thresholds(m, control, rng_thr),
    )
    pop.set_mode(mode)
    return pop


@njit(cache=True)
def _step_boilers(temp, q_thermo, q_eff, coef, setpoint, half_db, sec_min, sec_max,
                  thr_rocof, thr_freq, room, cold, draw, mode, rocof, freq_dev, alpha, dt,
                  track, diverged, twin_temp, twin_q, max_dev, excursion):
    n_on = 0
    n_on_twin = 0
    n_forced = 0
    for i in range(temp.shape[0]):
        t0 = temp[i]
        qt = thermostat_update(t0, q_thermo[i], setpoint[i], half_db[i], HEATING)
        forced = 0
        if mode != 0:
            locked = security_lockout(t0, sec_min[i], sec_max[i])
            forced = control_decision(mode, qt, rocof, freq_dev, thr_rocof[i], thr_freq[i],
                                      alpha, locked)
        q = qt + forced
        t1 = t0 + dt * boiler_derivative(t0, coef[i], room, cold, draw[i], q)
        if forced != 0 and security_lockout(t1, sec_min[i], sec_max[i]):
            # the forced step itself would leave the interval: lock out now
            forced = 0
            q = qt
            t1 = t0 + dt * boiler_derivative(t0, coef[i], room, cold, draw[i], q)
        if track and forced != 0 and not diverged[i]:
            diverged[i] = True
            twin_temp[i] = t0
            twin_q[i] = q_thermo[i]
        temp[i] = t1
        q_thermo[i] = qt
        q_eff[i] = q
        n_on += q
        if forced != 0:
            n_forced += 1
            ex = max(t1 - sec_max[i], sec_min[i] - t1)
            if ex > excursion[0]:
                excursion[0] = ex
        if track:
            if diverged[i]:
                tw = twin_temp[i]
                qw = thermostat_update(tw, twin_q[i], setpoint[i], half_db[i], HEATING)
                tw1 = tw + dt * boiler_derivative(tw, coef[i], room, cold, draw[i], qw)
                twin_temp[i] = tw1
                twin_q[i] = qw
                n_on_twin += qw
                d = abs(t1 - tw1)
                if d > max_dev[i]:
                    max_dev[i] = d
            else:
                n_on_twin += q
    return n_on, n_on_twin, n_forced


@njit(cache=True)
def _step_fridges(temp, q_thermo, q_eff, coef, setpoint, half_db, sec_min, sec_max,
                  thr_rocof, thr_freq, room, mode, rocof, freq_dev, alpha, dt,
                  track, diverged, twin_temp, twin_q, max_dev, excursion):
    n_on = 0
    n_on_twin = 0
    n_forced = 0
    for i in range(temp.shape[0]):
        ta, tb, tc, td = temp[i, 0], temp[i, 1], temp[i, 2], temp[i, 3]
        qt = thermostat_update(ta, q_thermo[i], setpoint[i], half_db[i], COOLING)
        forced = 0
        if mode != 0:
            locked = security_lockout(ta, sec_min[i], sec_max[i])
            forced = control_decision(mode, qt, rocof, freq_dev, thr_rocof[i], thr_freq[i],
                                      alpha, locked)
        q = qt + forced
        da, db, dc, dd = fridge_derivatives(ta, tb, tc, td, coef[i], room, q)
        if forced != 0 and security_lockout(ta + dt * da, sec_min[i], sec_max[i]):
            forced = 0
            q = qt
            da, db, dc, dd = fridge_derivatives(ta, tb, tc, td, coef[i], room, q)
        if track and forced != 0 and not diverged[i]:
            diverged[i] = True
            for j in range(4):
                twin_temp[i, j] = temp[i, j]
            twin_q[i] = q_thermo[i]
        temp[i, 0] = ta + dt * da
        temp[i, 1] = tb + dt * db
        temp[i, 2] = tc + dt * dc
        temp[i, 3] = td + dt * dd
        q_thermo[i] = qt
        q_eff[i] = q
        n_on += q
        if forced != 0:
            n_forced += 1
            ex = max(temp[i, 0] - sec_max[i], sec_min[i] - temp[i, 0])
            if ex > excursion[0]:
                excursion[0] = ex
        if track:
            if diverged[i]:
                wa, wb, wc, wd = twin_temp[i, 0], twin_temp[i, 1], twin_temp[i, 2], twin_temp[i, 3]
                qw = thermostat_update(wa, twin_q[i], setpoint[i], half_db[i], COOLING)
                da, db, dc, dd = fridge_derivatives(wa, wb, wc, wd, coef[i], room, qw)
                twin_temp[i, 0] = wa + dt * da
                twin_temp[i, 1] = wb + dt * db
                twin_temp[i, 2] = wc + dt * dc
                twin_temp[i, 3] = wd + dt * dd
                twin_q[i] = qw
                n_on_twin += qw
                d = abs(temp[i, 0] - twin_temp[i, 0])
                if d > max_dev[i]:
                    max_dev[i] = d
            else:
                n_on_twin += q
    return n_on, n_on_twin, n_forced


_EMPTY_B = np.zeros(0, dtype=np.bool_)
_EMPTY_I = np.zeros(0, dtype=np.int64)
_EMPTY_F = np.zeros(0)
_EMPTY_F2 = np.zeros((0, 4))


def step_population(pop: DevicePopulation, meas, ambient: AmbientInputs, dt: float,
                    alpha: float = 0.0, draw: Optional[np.ndarray] = None):
    """Advance every device by ``dt`` and return ``(pop, aggregate_power_W)``.

    ``meas`` is anything exposing ``rocof`` and ``freq_deviation`` (the shared
    measurement).  Arrays of ``pop`` are updated in place.
    """
    track = pop.track_baseline
    if track:
        diverged, twin_q, max_dev = pop.diverged, pop.twin_q, pop.max_deviation
        twin_temp = pop.twin_temp
    else:
        diverged, twin_q, max_dev = _EMPTY_B, _EMPTY_I, _EMPTY_F
        twin_temp = _EMPTY_F2 if pop.kind == FRIDGE else _EMPTY_F
    thr = pop.thresholds
    if pop.kind == BOILER:
        if draw is None:
            draw = np.full(pop.size, ambient.draw_rate)
        n_on, n_twin, n_forced = _step_boilers(
            pop.temp, pop.q_thermostat, pop.q, pop.coef, pop.setpoint, pop.half_deadband,
            pop.security_min, pop.security_max, thr.rocof, thr.freq,
            ambient.room_temp, ambient.cold_water_temp, draw, int(pop.mode),
            meas.rocof, meas.freq_deviation, alpha, dt,
            track, diverged, twin_temp, twin_q, max_dev, pop.excursion)
    else:
        n_on, n_twin, n_forced = _step_fridges(
            pop.temp, pop.q_thermostat, pop.q, pop.coef, pop.setpoint, pop.half_deadband,
            pop.security_min, pop.security_max, thr.rocof, thr.freq,
            ambient.room_temp, int(pop.mode), meas.rocof, meas.freq_deviation, alpha, dt,
            track, diverged, twin_temp, twin_q, max_dev, pop.excursion)
    pop.n_on_baseline = n_twin if track else n_on
    pop.n_forced = n_forced
    return pop, pop.unit_power * n_on


@dataclass(frozen=True)
class EquivalentGains:
    si_off: float      # p.u. of aggregate nominal power per Hz/s
    si_on: float
    pfr_off: float     # p.u. per Hz
    pfr_on: float
    droop_off: float   # p.u.
    droop_on: float


def equivalent_gains(pop: DevicePopulation, control: Optional[ControlParams] = None,
                     f_nom: float = F_NOM) -> EquivalentGains:
    c = control or pop.control
    n = pop.size
    n_on = pop.n_on
    n_off = n - n_on
    si_span = c.rocof_max - c.rocof_act
    pfr_span = c.freq_max - c.freq_act
    droop = lambda k: float("inf") if k == 0 else pfr_span / f_nom * n / k
    return EquivalentGains(
        si_off=n_off / n / si_span, si_on=n_on / n / si_span,
        pfr_off=n_off / n / pfr_span, pfr_on=n_on / n / pfr_span,
        droop_off=droop(n_off), droop_on=droop(n_on),
    )


@dataclass(frozen=True)
class PenetrationReport:
    rho: float
    rho_nom: float
    over: float
    under: float


def penetration(operating_point: float, nominal: float, total_load: float) -> PenetrationReport:
    """Penetration coefficients of the controllable aggregate.

    ``total_load`` is the total load operating point the aggregate belongs to
    (the aggregate's own operating point included).
    """
    if not total_load > 0:
        raise ValueError("total_load must be positive")
    rho = operating_point / total_load
    rho_nom = nominal / total_load
    return PenetrationReport(rho=rho, rho_nom=rho_nom, over=(1.0 - rho) * rho_nom,
                             under=rho * rho_nom)


def expected_switched(n_candidates: int, signal: float, act: float, top: float) -> tuple:
    """Mean and binomial standard deviation of the number of recruited devices."""
    r = activation_probability(signal, act, top)
    return n_candidates * r, float(np.sqrt(n_candidates * r * (1.0 - r)))


# --- warm-up -------------------------------------------------------------

@njit(cache=True)
def _warm_boilers(temp, q_thermo, q_eff, coef, setpoint, half_db, sec_min, sec_max,
                  thr_rocof, thr_freq, room, cold, draw_blocks, block_of_step, dt, tail_start):
    dummy_b = np.zeros(0, dtype=np.bool_)
    dummy_i = np.zeros(0, dtype=np.int64)
    dummy_f = np.zeros(0)
    exc = np.zeros(1)
    tail_sum = 0.0
    n_steps = block_of_step.shape[0]
    for k in range(n_steps):
        n_on, _, _ = _step_boilers(temp, q_thermo, q_eff, coef, setpoint, half_db, sec_min,
                                   sec_max, thr_rocof, thr_freq, room, cold,
                                   draw_blocks[block_of_step[k]], 0, 0.0, 0.0, 0.0, dt,
                                   False, dummy_b, dummy_f, dummy_i, dummy_f, exc)
        if k >= tail_start:
            tail_sum += n_on
    return tail_sum / max(n_steps - tail_start, 1)


@njit(cache=True)
def _warm_fridges(temp, q_thermo, q_eff, coef, setpoint, half_db, sec_min, sec_max,
                  thr_rocof, thr_freq, room, n_steps, dt, tail_start):
    dummy_b = np.zeros(0, dtype=np.bool_)
    dummy_i = np.zeros(0, dtype=np.int64)
    dummy_f = np.zeros(0)
    dummy_f2 = np.zeros((0, 4))
    exc = np.zeros(1)
    tail_sum = 0.0
    for k in range(n_steps):
        n_on, _, _ = _step_fridges(temp, q_thermo, q_eff, coef, setpoint, half_db, sec_min,
                                   sec_max, thr_rocof, thr_freq, room, 0, 0.0, 0.0, 0.0, dt,
                                   False, dummy_b, dummy_f2, dummy_i, dummy_f, exc)
        if k >= tail_start:
            tail_sum += n_on
    return tail_sum / max(n_steps - tail_start, 1)


def warm_up(pop: DevicePopulation, conditions: AmbientConditions,
            draw: Optional[DrawProfile] = None, duration: float = 6 * 3600.0,
            dt: float = 1.0, tail: float = 600.0) -> float:
    """Run the plain thermostat for ``duration`` seconds ending at time 0.

    Returns the mean aggregate power (W) over the final ``tail`` seconds.
    The population is modified in place.
    """
    n_steps = int(round(duration / dt))
    tail_start = max(n_steps - int(round(tail / dt)), 0)
    thr = pop.thresholds
    args = (pop.temp, pop.q_thermostat, pop.q, pop.coef, pop.setpoint, pop.half_deadband,
            pop.security_min, pop.security_max, thr.rocof, thr.freq, conditions.room_temp)
    if pop.kind == FRIDGE:
        mean_on = _warm_fridges(*args, n_steps, dt, tail_start)
    else:
        times = -duration + dt * np.arange(n_steps)
        if draw is None or draw.amplitude == 0.0:
            blocks = np.zeros((1, pop.size))
            block_of_step = np.zeros(n_steps, dtype=np.int64)
        else:
            idx = np.floor(times / draw.block_seconds).astype(np.int64)
            first = idx[0]
            blocks = np.stack([draw.rates(b * draw.block_seconds) for b in range(first, idx[-1] + 1)])
            block_of_step = idx - first
        mean_on = _warm_boilers(*args, conditions.cold_water_temp, blocks, block_of_step, dt, tail_start)
    return float(mean_on) * pop.unit_power


@dataclass(frozen=True)
class Calibration:
    draw_amplitude: float
    room_offset: float
    operating_point: float   # W, mean over the warm-up tail
    fridge_power: float
    boiler_power: float
    target: float
    iterations: int

    @property
    def relative_error(self) -> float:
        return abs(self.operating_point - self.target) / self.target


def calibrate(fridges: DevicePopulation, boilers: DevicePopulation, outdoor_temp: float,
              hour: float, target: float, draw_seed: int, duration: float = 6 * 3600.0,
              dt: float = 1.0, tail: float = 600.0, rel_tol: float = 0.02,
              max_iter: int = 40):
    """Tune the draw amplitude (or, if draw-free operation already overshoots,
    the room-temperature offset) until the combined operating point matches
    ``target`` watts.

    Returns ``(calibration, warm_fridges, warm_boilers)``; the inputs are not
    modified.
    """
    def evaluate(amplitude, offset):
        cond = AmbientConditions(outdoor_temp, hour, offset)
        draw = DrawProfile(boilers.size, amplitude, hour, draw_seed)
        fr = fridges.copy()
        bo = boilers.copy()
        pf = warm_up(fr, cond, None, duration, dt, tail)
        pb = warm_up(bo, cond, draw, duration, dt, tail)
        return pf + pb, pf, pb, fr, bo

    it = 1
    best = (float("inf"), None)

    def consider(amplitude, offset, result):
        nonlocal best
        err = abs(result[0] - target)
        if err < best[0]:
            best = (err, (amplitude, offset, result))

    res = evaluate(0.0, 0.0)
    consider(0.0, 0.0, res)
    if res[0] > target * (1 + rel_tol):
        lo, hi = -15.0, 0.0
        while it < max_iter and best[0] > rel_tol * target:
            mid = 0.5 * (lo + hi)
            r = evaluate(0.0, mid)
            it += 1
            consider(0.0, mid, r)
            if r[0] > target:
                hi = mid
            else:
                lo = mid
    elif res[0] < target * (1 - rel_tol):
        lo, hi = 0.0, 1e-5
        while it < max_iter:
            r = evaluate(hi, 0.0)
            it += 1
            consider(hi, 0.0, r)
            if r[0] >= target:
                break
            lo, hi = hi, 2.0 * hi
        while it < max_iter and best[0] > rel_tol * target:
            mid = 0.5 * (lo + hi)
            r = evaluate(mid, 0.0)
            it += 1
            consider(mid, 0.0, r)
            if r[0] > target:
                hi = mid
            else:
                lo = mid
    amplitude, offset, (p, pf, pb, fr, bo) = best[1]
    cal = Calibration(draw_amplitude=amplitude, room_offset=offset, operating_point=p,
                      fridge_power=pf, boiler_power=pb, target=target, iterations=it)
    if cal.relative_error > 0.05:
        log.warning("warm-up calibration off target by %.1f%%", 100 * cal.relative_error)
    return cal, fr, bo
