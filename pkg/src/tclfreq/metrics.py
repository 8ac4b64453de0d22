"""UCTE-style evaluation indices of a frequency trace and control gains."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .measurement import F_NOM

QS_WINDOW = (20.0, 30.0)
LAMBDA_GUARD = 1e-3  # Hz


@dataclass(frozen=True)
class MetricSummary:
    delta_f_max: float            # Hz, largest |Δf| after the event
    peak_freq: float              # Hz, frequency at that instant
    quasi_steady_dev: float       # Hz, signed
    lambda_u: Optional[float]     # MW/Hz
    rocof_100: float              # Hz/s
    rocof_500: float              # Hz/s

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Gains:
    k_delta_f_max: Optional[float]
    k_lambda_u: Optional[float]
    k_rocof_100: Optional[float]

    def to_dict(self) -> dict:
        return asdict(self)


def _centered_rocof(time, freq, t, half=0.02):
    f_plus = np.interp(t + half, time, freq)
    f_minus = np.interp(t - half, time, freq)
    return float((f_plus - f_minus) / (2 * half))


def compute_metrics(time, freq, event_time: float, event_delta: float,
                    f_nom: float = F_NOM) -> MetricSummary:
    time = np.asarray(time, dtype=float)
    freq = np.asarray(freq, dtype=float)
    if time.shape != freq.shape or time.ndim != 1:
        raise ValueError("time and freq must be 1-D arrays of equal length")
    lo, hi = event_time + QS_WINDOW[0], event_time + QS_WINDOW[1]
    if time[-1] < hi - 1e-9:
        raise ValueError("trace must cover at least 30 s after the event")
    dev = freq - f_nom
    post = time >= event_time - 1e-9
    idx = np.flatnonzero(post)
    k = idx[np.argmax(np.abs(dev[idx]))]
    window = (time >= lo - 1e-9) & (time <= hi + 1e-9)
    qs = float(dev[window].mean())
    lam = abs(event_delta) / abs(qs) if abs(qs) >= LAMBDA_GUARD and event_delta != 0 else None
    return MetricSummary(
        delta_f_max=float(abs(dev[k])),
        peak_freq=float(freq[k]),
        quasi_steady_dev=qs,
        lambda_u=lam,
        rocof_100=_centered_rocof(time, freq, event_time + 0.1),
        rocof_500=_centered_rocof(time, freq, event_time + 0.5),
    )


def _pct(num, den):
    if den is None or num is None or den == 0:
        return None
    return 100.0 * num / den


def compute_gains(with_control: MetricSummary, baseline: MetricSummary) -> Gains:
    k_df = _pct(baseline.delta_f_max - with_control.delta_f_max, baseline.delta_f_max)
    if with_control.lambda_u is None or baseline.lambda_u is None:
        k_lam = None
    else:
        k_lam = _pct(with_control.lambda_u - baseline.lambda_u, baseline.lambda_u)
    k_r = _pct(abs(baseline.rocof_100) - abs(with_control.rocof_100), abs(baseline.rocof_100))
    return Gains(k_df, k_lam, k_r)


@dataclass(frozen=True)
class RecoveryReport:
    max_late_dev: float        # Hz, max |Δf| from event + ``late`` onward
    recovery_time: Optional[float]  # s after the event when |Δf| first fell below the band
    recrossed: bool            # |Δf| exceeded the re-crossing limit after recovery


def recovery_report(time, freq, event_time: float, band: float = 0.02,
                    recross_limit: float = 0.05, late: float = 1200.0,
                    f_nom: float = F_NOM) -> RecoveryReport:
    time = np.asarray(time, dtype=float)
    dev = np.abs(np.asarray(freq, dtype=float) - f_nom)
    late_mask = time >= event_time + late - 1e-9
    max_late = float(dev[late_mask].max()) if late_mask.any() else float("nan")
    post = np.flatnonzero(time >= event_time)
    if post.size == 0:
        return RecoveryReport(max_late, None, False)
    k_peak = post[np.argmax(dev[post])]
    after = np.flatnonzero((np.arange(len(time)) > k_peak) & (dev < band))
    if after.size == 0:
        return RecoveryReport(max_late, None, False)
    k_rec = after[0]
    return RecoveryReport(max_late, float(time[k_rec] - event_time),
                          bool((dev[k_rec:] > recross_limit).any()))
