"""Scenario presets A-F, config ingestion and end-to-end simulation runs."""
from __future__ import annotations

import concurrent.futures as cf
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np
import yaml

from .ambient import AmbientConditions, DrawProfile
from .control import ControlMode, ControlState, alpha_schedule
from .grid import (EventSpec, GridConstants, GridModel, UnitSpec, compute_grid_constants)
from .measurement import F_NOM, FrequencyMeter, MeasurementConfig
from .metrics import (Gains, MetricSummary, RecoveryReport, compute_gains, compute_metrics,
                      recovery_report)
from .population import (BOILER, FRIDGE, Calibration, DevicePopulation, PenetrationReport,
                         PopulationSpec, build_population, calibrate, penetration,
                         step_population)
from .thermal import AmbientInputs

log = logging.getLogger(__name__)

MW = 1e6
SCENARIO_IDS = ("A", "B", "C", "D", "E", "F")
CONTROL_MODES = (ControlMode.NONE, ControlMode.SI, ControlMode.PFR, ControlMode.SI_PFR)
DEFAULT_SWEEP_FACTORS = (0.25, 0.5, 1.0, 2.0, 4.0)
DIVERGENCE_LIMIT = 5.0  # Hz


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class SimulationDiverged(RuntimeError):
    def __init__(self, message: str, state: dict):
        super().__init__(message)
        self.state = state


# --- unit catalog ----------------------------------------------------------

def _u(name, type_, p_nom, p_min, t_a=None, droop=None, db=None, rate=None, **kw):
    return UnitSpec(name=name, type=type_, p_nom=p_nom, p_min=p_min, start_up_time=t_a,
                    droop=droop, half_deadband=db, rate_limit=rate, **kw)


# Technical data of every component (dead-bands in Hz, droops as fractions).
UNIT_CATALOG = {u.name: u for u in (
    _u("Hydro G1", "hydro", 155, 0, 7.5, 0.04, 0.020, 60),
    # Listed without PFR, but the regulating energies of every scenario are
    # only reproduced if it regulates like the G1 hydro while generating.
    _u("Pumped Hydro G1", "hydro", 207, -207, 7.5, 0.04, 0.020, None, pfr_in_pump_mode=False),
    _u("UP2 G2", "gas", 100, 25, 15.3, 0.05, 0.010, 8),
    _u("UP1 G2", "gas", 80, 24, 9.4, 0.05, 0.010, 8),
    _u("BioDisp G3", "thermal", 5, 2, 15.3, 0.05, 0.010, 8),
    _u("Other thermal G3", "thermal", 127, 51, 14.9, 0.05, 0.010, None),
    _u("SARLUX G3", "equivalent", 550, 165, 9.4, 0.05, 0.010, 8),
    _u("Codrongianos 1 G4", "compensator", 250, 0, 3.5),
    _u("Codrongianos 2 G4", "compensator", 250, 0, 3.5),
    _u("Photovoltaic G5", "renewable", 2230, 0),
    _u("Wind G5", "renewable", 3250, 0),
    _u("Bio Energetic G5", "renewable", 50, 0),
    _u("Run-of-river Hydro G6", "renewable", 17, 0),
    _u("Diesel G7", "diesel", 167.98, 100, 13.5, 0.05, 0.010, 8),
    _u("Gas Turbine G8", "gas", 107.3, 50, 17.6, 0.05, 0.010, 8),
    _u("Hydro G9", "hydro", 125.8, 0, 8.1, 0.05, 0.010, 8),
    _u("SAPEI 1", "hvdc", 500, -500, None, 0.05, 0.020, None),
    _u("SAPEI 2", "hvdc", 500, -500, None, 0.05, 0.020, None),
    _u("SACOI", "hvdc", 300, -300),
)}

UNIT_ORDER = tuple(UNIT_CATALOG)

# Operating points (MW, None = not in service) and secondary participation.
_DISPATCH = {
    #                      A       B        C      D       E      F
    "Hydro G1":          (155,   None,    155,   None,   None,  None),
    "Pumped Hydro G1":   (None,  13,      146,   -166,   None,  166),
    "UP2 G2":            (None,  None,    None,  None,   None,  None),
    "UP1 G2":            (40,    41,      52,    None,   None,  42),
    "BioDisp G3":        (None,  None,    None,  None,   None,  None),
    "Other thermal G3":  (30,    29,      79,    37,     126,   127),
    "SARLUX G3":         (470,   460,     466,   486,    497,   550),
    "Codrongianos 1 G4": (0,     0,       0,     0,      0,     0),
    "Codrongianos 2 G4": (0,     0,       0,     0,      0,     0),
    "Photovoltaic G5":   (183,   842,     196,   40,     352,   9),
    "Wind G5":           (307,   521,     1247,  326,    929,   113),
    "Bio Energetic G5":  (50,    50,      50,    50,     50,    50),
    "Run-of-river Hydro G6": (6, 6,       6,     9,      16,    16),
    "Diesel G7":         (118,   118,     118,   118,    118,   118),
    "Gas Turbine G8":    (75,    75,      75,    75,     75,    75),
    "Hydro G9":          (88,    88,      88,    88,     88,    88),
    "SAPEI 1":           (-165,  -257.5,  -350,  -112.5, -345,  15),
    "SAPEI 2":           (-165,  -257.5,  -350,  -112.5, -345,  15),
    "SACOI":             (-100,  -150,    -150,  -72,    -150,  8),
}
_PARTICIPATION = {
    "UP1 G2":           (0.10, 0.10, 0.10, 0.0, 0.0, 0.0),
    "Other thermal G3": (0.17, 0.17, 0.17, 0.19, 0.19, 0.19),
    "SARLUX G3":        (0.73, 0.73, 0.73, 0.81, 0.81, 0.81),
}

_SCENARIO_TABLE = {
    # id: hour, outdoor °C, uncontrolled, controllable, corse, up, down,
    #     T_a, P_N, E_r, c_p^o %, c_p^u %, label
    "A": (3, 19.6, 791, 25, 281, 120, 321, 8.76, 1813, 940, 52.4, 1.6, "summer night"),
    "B": (10, 28.2, 1180, 116, 281, 129, 321, 8.73, 1865, 966, 30.9, 3.1, "summer day"),
    "C": (22, 23.4, 1446, 101, 281, 173, 475, 8.63, 2020, 1044, 26.6, 1.9, "summer evening"),
    "D": (3, 1.0, 459, 26, 281, 64, 321, 8.70, 1785, 831, 86.5, 4.6, "winter night"),
    "E": (10, 4.0, 1002, 128, 281, 53, 332, 8.85, 1578, 831, 34.7, 4.3, "winter day"),
    "F": (22, 3.3, 935, 126, 281, 88, 353, 8.73, 1865, 967, 36.5, 5.0, "winter evening"),
}

_EVENTS = {
    "A": ((100, "Loss of the SACOI link"), (100, "Wind disconnection")),
    "B": ((150, "Loss of the SACOI link"), (100, "Wind disconnection")),
    "C": ((150, "Loss of the SACOI link"), (100, "Wind disconnection")),
    "D": ((110, "Loss of the SACOI link"), (50, "Bio-energy disconnection")),
    "E": ((150, "Loss of the SACOI link"), (50, "Bio-energy disconnection")),
    "F": ((150, "Load disconnection"), (50, "Bio-energy disconnection")),
}

# The tabulated dispatches of A and F do not close exactly: A's HVDC rows sum
# to -430 MW (-425 in the totals), F's generation rows to 1354 MW (1304).
_BALANCE_TOLERANCE = {"A": 5.5, "B": 1.5, "F": 50.5}


@dataclass(frozen=True)
class ReferenceValues:
    start_up_time: float
    nominal_power: float
    regulating_energy: float
    cp_over: float   # %
    cp_under: float  # %


@dataclass(frozen=True)
class Scenario:
    id: str
    label: str
    hour: float
    outdoor_temp: float
    units: tuple
    uncontrolled_load: float     # MW, Sardinia
    controllable_load: float     # MW, TCL operating point target
    corse_load: float            # MW
    upward_reserve: float        # MW
    downward_reserve: float      # MW
    events: tuple = ()           # (over, under)
    reference: Optional[ReferenceValues] = None
    fridge_nominal_power: float = 85.0   # MW
    boiler_nominal_power: float = 356.0  # MW
    k_pf_uncontrolled: float = 1.5       # p.u./p.u.
    k_pf_fridge: float = 0.35
    k_pf_boiler: float = 0.0
    tau_pf: float = 5.0
    nominal_freq: float = F_NOM
    integration_time: float = 110.0
    balance_tolerance: float = 0.5

    def __post_init__(self):
        names = [u.name for u in self.units]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate unit names", field="units")
        total = sum(u.participation for u in self.units if u.in_service)
        if abs(total - 1.0) > 1e-6:
            raise ConfigError(f"participation factors sum to {total:.4f}, expected 1",
                              field="units")
        for name in ("uncontrolled_load", "controllable_load", "corse_load",
                     "upward_reserve", "downward_reserve", "fridge_nominal_power",
                     "boiler_nominal_power", "tau_pf"):
            if getattr(self, name) < 0 or (name == "tau_pf" and self.tau_pf == 0):
                raise ConfigError(f"{name} must be non-negative", field=name)
        residual = self.balance_residual
        if abs(residual) > self.balance_tolerance:
            raise ConfigError(f"pre-event power balance residual {residual:+.2f} MW exceeds "
                              f"{self.balance_tolerance} MW", field="units")

    @property
    def in_service_units(self) -> list:
        return [u for u in self.units if u.in_service]

    @property
    def generation(self) -> float:
        return sum(u.operating_point for u in self.in_service_units if u.type != "hvdc")

    @property
    def hvdc_exchange(self) -> float:
        return sum(u.operating_point for u in self.in_service_units if u.type == "hvdc")

    @property
    def total_load(self) -> float:
        return self.uncontrolled_load + self.controllable_load + self.corse_load

    @property
    def balance_residual(self) -> float:
        return self.generation + self.hvdc_exchange - self.total_load

    @property
    def sardinia_load(self) -> float:
        return self.uncontrolled_load + self.controllable_load

    @property
    def aggregate_nominal_power(self) -> float:
        return self.fridge_nominal_power + self.boiler_nominal_power

    def event(self, kind: str) -> EventSpec:
        kind = kind.lower()
        for e in self.events:
            if e.kind == kind:
                return e
        raise ConfigError(f"scenario {self.id} has no {kind!r} event", field="events")

    def constants(self) -> GridConstants:
        return compute_grid_constants(self.units, self.nominal_freq, self.integration_time)

    def cross_check(self) -> dict:
        c = self.constants()
        out = {"computed": {"start_up_time": c.start_up_time, "nominal_power": c.nominal_power,
                            "regulating_energy": c.regulating_energy}}
        if self.reference is not None:
            r = self.reference
            out["reference"] = {"start_up_time": r.start_up_time,
                                "nominal_power": r.nominal_power,
                                "regulating_energy": r.regulating_energy}
            out["delta"] = {k: out["computed"][k] - out["reference"][k] for k in out["reference"]}
        return out


def preset(scenario_id: str) -> Scenario:
    sid = scenario_id.strip().upper()
    if sid not in _SCENARIO_TABLE:
        raise ConfigError(f"unknown scenario {scenario_id!r}; presets are {', '.join(SCENARIO_IDS)}",
                          field="scenario")
    col = SCENARIO_IDS.index(sid)
    units = []
    for name in UNIT_ORDER:
        op = _DISPATCH[name][col]
        part = _PARTICIPATION.get(name, (0.0,) * 6)[col]
        units.append(replace(UNIT_CATALOG[name], operating_point=0.0 if op is None else float(op),
                             in_service=op is not None, participation=part))
    (hour, t_out, unc, ctrl, corse, up, down, t_a, p_n, e_r, cpo, cpu, label) = _SCENARIO_TABLE[sid]
    (over_mw, over_desc), (under_mw, under_desc) = _EVENTS[sid]
    events = (EventSpec(over_mw, +1, 60.0, over_desc), EventSpec(under_mw, -1, 60.0, under_desc))
    return Scenario(
        id=sid, label=label, hour=hour, outdoor_temp=t_out, units=tuple(units),
        uncontrolled_load=unc, controllable_load=ctrl, corse_load=corse,
        upward_reserve=up, downward_reserve=down, events=events,
        reference=ReferenceValues(t_a, p_n, e_r, cpo, cpu),
        balance_tolerance=_BALANCE_TOLERANCE.get(sid, 0.5),
    )


# --- config files ------------------------------------------------------------

_SCALAR_FIELDS = {f.name for f in fields(Scenario)} - {"units", "events", "reference"}
_UNIT_FIELDS = {f.name for f in fields(UnitSpec)}


def _line_index(node, path=(), out=None):
    """Map key paths of a composed YAML tree to 1-based line numbers."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = path + (str(k.value),)
            out[key] = k.start_mark.line + 1
            _line_index(v, key, out)
    return out


def parse_config(text: str) -> Scenario:
    """Build a scenario from a YAML document.

    ``base`` names a preset to start from; every other top-level key
    overrides a scenario field.  ``units`` maps unit names to field
    overrides (new units need a full definition), ``events`` maps
    ``over``/``under`` to ``{magnitude, time, description}``.
    """
    try:
        root = yaml.compose(text)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"invalid YAML: {getattr(exc, 'problem', exc)}",
                          line=mark.line + 1 if mark else None) from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping", line=1)
    lines = _line_index(root)

    def err(msg, *path):
        return ConfigError(msg, line=lines.get(tuple(path)), field=".".join(path))

    base_id = data.get("base")
    if base_id is None:
        raise err("a 'base' preset is required", "base")
    try:
        sc = preset(str(base_id))
    except ConfigError as exc:
        raise err(str(exc).split(" (")[0], "base") from None

    overrides = {}
    for key, value in data.items():
        if key in ("base", "units", "events", "reference"):
            continue
        if key not in _SCALAR_FIELDS:
            raise err(f"unknown scenario field {key!r}", key)
        overrides[key] = str(value) if key in ("id", "label") else value
    if "id" not in overrides:
        overrides["id"] = f"{sc.id}-custom"

    units = {u.name: u for u in sc.units}
    order = list(units)
    for name, upd in (data.get("units") or {}).items():
        name = str(name)
        if not isinstance(upd, dict):
            raise err("unit entry must be a mapping", "units", name)
        for k in upd:
            if k not in _UNIT_FIELDS or k == "name":
                raise err(f"unknown unit field {k!r}", "units", name, str(k))
        try:
            if name in units:
                units[name] = replace(units[name], **upd)
            else:
                units[name] = UnitSpec(name=name, **upd)
                order.append(name)
        except (TypeError, ValueError) as exc:
            raise err(str(exc), "units", name) from None
    overrides["units"] = tuple(units[n] for n in order)

    ev = {e.kind: e for e in sc.events}
    for kind, upd in (data.get("events") or {}).items():
        if kind not in ("over", "under") or not isinstance(upd, dict):
            raise err("events must be 'over'/'under' mappings", "events", str(kind))
        try:
            ev[kind] = replace(ev[kind], **upd)
        except (TypeError, ValueError) as exc:
            raise err(str(exc), "events", kind) from None
    overrides["events"] = (ev["over"], ev["under"])
    if "reference" in data:
        if data["reference"] is None:
            overrides["reference"] = None
        else:
            try:
                overrides["reference"] = replace(sc.reference, **data["reference"])
            except TypeError as exc:
                raise err(str(exc), "reference") from None
    try:
        return replace(sc, **overrides)
    except ConfigError as exc:
        path = (exc.field,) if exc.field else ()
        raise ConfigError(str(exc).split(" (")[0], line=lines.get(path), field=exc.field) from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_scenario(source) -> Scenario:
    """Preset id (``"A"``..``"F"``), path to a YAML file, or a Scenario."""
    if isinstance(source, Scenario):
        return source
    text = str(source)
    if text.strip().upper() in SCENARIO_IDS:
        return preset(text)
    try:
        with open(text, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except FileNotFoundError:
        raise ConfigError(f"unknown scenario {text!r}: not a preset id and no such file",
                          field="scenario") from None


# --- simulation --------------------------------------------------------------

@dataclass(frozen=True)
class SimulationPlan:
    scenario: Scenario
    event: EventSpec
    control: ControlMode = ControlMode.NONE
    duration: float = 1800.0
    dt: float = 0.02
    seed: int = 0
    scale: float = 1.0
    sample_count: int = 1000
    dispersion: float = 0.10
    warmup_duration: float = 6 * 3600.0
    warmup_dt: float = 1.0
    secondary: bool = True

    def __post_init__(self):
        object.__setattr__(self, "control", ControlMode.parse(self.control))
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.duration < self.event.time:
            raise ValueError("duration must not be shorter than the event time")
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @classmethod
    def for_event(cls, scenario, kind: str = "over", **kw) -> "SimulationPlan":
        sc = load_scenario(scenario)
        return cls(scenario=sc, event=sc.event(kind), **kw)


@dataclass
class Trace:
    time: np.ndarray
    freq: np.ndarray
    rocof: np.ndarray            # measured (filtered) RoCoF
    p_boilers: np.ndarray        # MW
    p_fridges: np.ndarray
    p_uncontrolled: np.ndarray
    p_primary: np.ndarray
    p_secondary: np.ndarray
    alpha: np.ndarray
    p_boilers_baseline: np.ndarray
    p_fridges_baseline: np.ndarray

    CSV_COLUMNS = ("time", "freq", "rocof", "p_boilers", "p_fridges", "p_uncontrolled",
                   "p_primary", "p_secondary", "alpha")

    def __len__(self):
        return len(self.time)


@dataclass(frozen=True)
class ComfortReport:
    max_excursion: float          # °C beyond the security interval while forced (<= 0 is fine)
    max_deviation_ratio: float    # max |T - T_baseline| over the device dead-band width
    max_deviation: float          # °C
    devices_forced: int

    def to_dict(self):
        return asdict(self)


@dataclass
class SimOutput:
    plan: SimulationPlan
    trace: Trace
    metrics: MetricSummary
    calibration: Calibration
    penetration: PenetrationReport
    comfort: dict
    recovery: RecoveryReport
    cross_check: dict
    gains: Optional[Gains] = None

    @property
    def key(self) -> str:
        p = self.plan
        scale = "" if p.scale == 1.0 else f"_x{p.scale:g}"
        event = p.event.kind
        if p.event not in p.scenario.events:
            event = f"{p.event.delta:+g}MW"
        return f"{p.scenario.id}_{event}_{p.control.label}{scale}"

    def summary(self) -> dict:
        p = self.plan
        return {
            "scenario": p.scenario.id,
            "event": {"kind": p.event.kind, "magnitude_mw": p.event.magnitude,
                      "time_s": p.event.time, "description": p.event.description},
            "control": p.control.label,
            "seed": p.seed,
            "scale": p.scale,
            "dt_s": p.dt,
            "duration_s": p.duration,
            "metrics": self.metrics.to_dict(),
            "gains": self.gains.to_dict() if self.gains else None,
            "penetration": asdict(self.penetration),
            "calibration": asdict(self.calibration),
            "comfort": self.comfort,
            "recovery": asdict(self.recovery),
            "cross_check": self.cross_check,
        }


_CAL_CACHE: dict = {}


def _calibration_key(sc: Scenario, plan: SimulationPlan):
    return (sc.hour, sc.outdoor_temp, sc.controllable_load, sc.fridge_nominal_power,
            sc.boiler_nominal_power, plan.seed, plan.sample_count, plan.dispersion,
            plan.warmup_duration, plan.warmup_dt)


def prepare_populations(plan: SimulationPlan):
    """Warm-up calibrated populations (cached), rescaled by ``plan.scale``."""
    sc = plan.scenario
    key = _calibration_key(sc, plan)
    hit = _CAL_CACHE.get(key)
    if hit is None:
        fr = build_population(PopulationSpec(FRIDGE, sc.fridge_nominal_power * MW,
                                             plan.sample_count, plan.dispersion, plan.seed))
        bo = build_population(PopulationSpec(BOILER, sc.boiler_nominal_power * MW,
                                             plan.sample_count, plan.dispersion, plan.seed))
        hit = calibrate(fr, bo, sc.outdoor_temp, sc.hour, sc.controllable_load * MW,
                        draw_seed=plan.seed, duration=plan.warmup_duration, dt=plan.warmup_dt)
        if len(_CAL_CACHE) > 32:
            _CAL_CACHE.clear()
        _CAL_CACHE[key] = hit
    cal, fr, bo = hit
    return cal, fr.rescaled(plan.scale), bo.rescaled(plan.scale)


def run_simulation(plan: SimulationPlan) -> SimOutput:
    sc = plan.scenario
    consts = sc.constants()
    f_nom = sc.nominal_freq
    cal, fridges, boilers = prepare_populations(plan)
    for pop in (fridges, boilers):
        pop.set_mode(plan.control)
        pop.start_baseline_tracking()

    grid = GridModel(sc.units, consts, sc.uncontrolled_load + sc.corse_load,
                     sc.k_pf_uncontrolled / f_nom, sc.tau_pf, sc.upward_reserve,
                     sc.downward_reserve, plan.secondary)
    cond = AmbientConditions(sc.outdoor_temp, sc.hour, cal.room_offset)
    ambient = AmbientInputs(cond.room_temp, cond.cold_water_temp, 0.0)
    draw = DrawProfile(boilers.size, cal.draw_amplitude, sc.hour, plan.seed)

    meas_cfg = MeasurementConfig()
    n_sub = max(int(round(meas_cfg.sample_period / plan.dt)), 1)
    meter = FrequencyMeter(meas_cfg, f_nom)
    ctrl_params = boilers.control
    ctrl_state = ControlState()
    use_alpha = plan.control is ControlMode.SI_PFR

    dt = plan.dt
    n = int(round(plan.duration / dt))
    k_event = int(round(plan.event.time / dt))
    k_fr = sc.k_pf_fridge / f_nom
    k_bo = sc.k_pf_boiler / f_nom
    unc_ref = sc.uncontrolled_load + sc.corse_load

    cols = {name: np.empty(n + 1) for name in ("time", "freq", "rocof", "p_boilers", "p_fridges",
                                               "p_uncontrolled", "p_primary", "p_secondary",
                                               "alpha", "p_boilers_baseline",
                                               "p_fridges_baseline")}
    block = None
    rates = None
    for k in range(n + 1):
        t = k * dt
        freq = f_nom + grid.df
        if k % n_sub == 0:
            meter.update(freq)
            if use_alpha:
                ctrl_state = alpha_schedule(ctrl_state, meter.rocof, meter.freq_deviation,
                                            ctrl_params, meas_cfg.sample_period)
        alpha = ctrl_state.alpha
        b = draw.block_index(t)
        if b != block:
            block, rates = b, draw.rates(t)
        _, p_fr = step_population(fridges, meter, ambient, dt, alpha)
        _, p_bo = step_population(boilers, meter, ambient, dt, alpha, draw=rates)
        lf = grid.lf
        p_tcl = (p_fr * (1.0 + k_fr * lf) - fridges.baseline_power
                 + p_bo * (1.0 + k_bo * lf) - boilers.baseline_power) / MW
        p_event = plan.event.delta if k >= k_event else 0.0
        grid.step(p_event, p_tcl, dt)

        cols["time"][k] = t
        cols["freq"][k] = freq
        cols["rocof"][k] = meter.rocof
        cols["p_boilers"][k] = p_bo * (1.0 + k_bo * lf) / MW
        cols["p_fridges"][k] = p_fr * (1.0 + k_fr * lf) / MW
        cols["p_uncontrolled"][k] = unc_ref + grid.uncontrolled_delta
        cols["p_primary"][k] = grid.primary
        cols["p_secondary"][k] = grid.secondary
        cols["alpha"][k] = alpha
        cols["p_boilers_baseline"][k] = boilers.baseline_power / MW
        cols["p_fridges_baseline"][k] = fridges.baseline_power / MW
        if not abs(grid.df) <= DIVERGENCE_LIMIT:
            state = grid.snapshot()
            state.update(time=t, step=k, plan=f"{sc.id}/{plan.event.kind}/{plan.control.label}")
            raise SimulationDiverged(f"|Δf| exceeded {DIVERGENCE_LIMIT} Hz at t = {t:.2f} s", state)

    trace = Trace(**cols)
    metrics = compute_metrics(trace.time, trace.freq, plan.event.time, plan.event.delta, f_nom)
    op = (cal.operating_point * plan.scale) / MW
    pen = penetration(op, sc.aggregate_nominal_power * plan.scale, sc.uncontrolled_load + op)
    comfort = {cls: _comfort(pop).to_dict() for cls, pop in ((FRIDGE, fridges), (BOILER, boilers))}
    rec = recovery_report(trace.time, trace.freq, plan.event.time,
                          recross_limit=ctrl_params.freq_act, f_nom=f_nom)
    return SimOutput(plan, trace, metrics, cal, pen, comfort, rec, sc.cross_check())


def _comfort(pop: DevicePopulation) -> ComfortReport:
    width = 2.0 * pop.half_deadband
    return ComfortReport(
        max_excursion=float(pop.excursion[0]),
        max_deviation_ratio=float(np.max(pop.max_deviation / width)),
        max_deviation=float(np.max(pop.max_deviation)),
        devices_forced=int(pop.diverged.sum()),
    )


def _run_plan(plan: SimulationPlan) -> SimOutput:
    return run_simulation(plan)


def run_plans(plans: Sequence[SimulationPlan], workers: int = 1, on_result=None) -> list:
    """Run plans in order (or in a process pool); results keep the input order."""
    results = [None] * len(plans)
    if workers <= 1:
        for i, p in enumerate(plans):
            results[i] = run_simulation(p)
            if on_result:
                on_result(results[i])
        return results
    with cf.ProcessPoolExecutor(max_workers=workers) as pool:
        futs = {pool.submit(_run_plan, p): i for i, p in enumerate(plans)}
        for fut in cf.as_completed(futs):
            i = futs[fut]
            results[i] = fut.result()
            if on_result:
                on_result(results[i])
    return results


def attach_gains(outputs: Sequence[SimOutput]) -> None:
    """Fill ``gains`` of every controlled run from its no-control twin."""
    base = {}
    for o in outputs:
        if o.plan.control is ControlMode.NONE:
            base[(o.plan.scenario.id, o.plan.event.kind, o.plan.scale)] = o
    for o in outputs:
        b = base.get((o.plan.scenario.id, o.plan.event.kind, o.plan.scale))
        if b is not None:
            o.gains = compute_gains(o.metrics, b.metrics)


def matrix_plans(scenarios=SCENARIO_IDS, modes=CONTROL_MODES, kinds=("over", "under"),
                 **plan_kw) -> list:
    plans = []
    for sid in scenarios:
        sc = load_scenario(sid)
        for kind in kinds:
            for mode in modes:
                plans.append(SimulationPlan(scenario=sc, event=sc.event(kind),
                                            control=ControlMode.parse(mode), **plan_kw))
    return plans


def run_matrix(scenarios=SCENARIO_IDS, modes=CONTROL_MODES, kinds=("over", "under"),
               workers: int = 1, on_result=None, **plan_kw) -> list:
    """Every preset event x control mode; gains attached against the no-control runs."""
    plans = matrix_plans(scenarios, modes, kinds, **plan_kw)
    outputs = run_plans(plans, workers, on_result)
    attach_gains(outputs)
    return outputs


@dataclass(frozen=True)
class SweepPoint:
    scenario: str
    event: str
    factor: float
    cp_over: float      # %
    cp_under: float     # %
    k_delta_f_max: Optional[float]
    k_lambda_u: Optional[float]
    k_rocof_100: Optional[float]

    @property
    def coefficient(self) -> float:
        """Penetration coefficient relevant to this event direction (%)."""
        return self.cp_over if self.event == "over" else self.cp_under


def run_penetration_sweep(scenarios=SCENARIO_IDS, factors=DEFAULT_SWEEP_FACTORS,
                          kinds=("over", "under"), mode=ControlMode.SI_PFR,
                          workers: int = 1, on_result=None, **plan_kw):
    """Rerun SI-PFR and no-control cases with scaled aggregate nominal power.

    Returns ``(points, outputs)``.
    """
    if any(not f > 0 for f in factors):
        raise ValueError("sweep factors must be positive")
    plans = []
    for sid in scenarios:
        sc = load_scenario(sid)
        for kind in kinds:
            for f in factors:
                for m in (ControlMode.NONE, ControlMode.parse(mode)):
                    plans.append(SimulationPlan(scenario=sc, event=sc.event(kind), control=m,
                                                scale=float(f), **plan_kw))
    outputs = run_plans(plans, workers, on_result)
    attach_gains(outputs)
    points = []
    for o in outputs:
        if o.plan.control is ControlMode.NONE:
            continue
        g = o.gains
        points.append(SweepPoint(o.plan.scenario.id, o.plan.event.kind, o.plan.scale,
                                 100 * o.penetration.over, 100 * o.penetration.under,
                                 g.k_delta_f_max, g.k_lambda_u, g.k_rocof_100))
    return points, outputs
