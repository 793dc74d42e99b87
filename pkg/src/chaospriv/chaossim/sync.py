"""Synchronisation error between two responders driven by the same input."""

import warnings
from dataclasses import dataclass

import numpy as np

from .certificate import convergence_certificate
from .integrate import Trajectory, integrate
from .systems import AffineResponder

DEFAULT_THRESHOLDS = (1e-3, 1e-6, 1e-9)


@dataclass(frozen=True, eq=False)
class SyncReport:
    times: np.ndarray
    error_series: np.ndarray
    rate: float
    time_to_threshold: dict
    final_error: float
    fit_window: tuple
    server: Trajectory
    station: Trajectory

    def to_dict(self):
        return {
            "rate": None if np.isnan(self.rate) else float(self.rate),
            "time_to_threshold": {f"{k:g}": (None if v is None else float(v))
                                  for k, v in self.time_to_threshold.items()},
            "final_error": float(self.final_error),
            "fit_window": [float(v) for v in self.fit_window],
        }


def settle_time(times, err, eps):
    """First time after which ``err`` stays at or below ``eps``; ``None`` if never."""
    above = np.nonzero(err > eps)[0]
    if above.size == 0:
        return float(times[0])
    if above[-1] == err.size - 1:
        return None
    return float(times[above[-1] + 1])


def fit_decay_rate(times, err, floor):
    """Least-squares slope of ``log(err)`` before the error first reaches ``floor``."""
    hit = np.nonzero(err <= floor)[0]
    stop = hit[0] if hit.size else err.size
    if stop < 3:
        return float("nan"), (float(times[0]), float(times[0]))
    slope, _ = np.polyfit(times[:stop], np.log(err[:stop]), 1)
    return float(slope), (float(times[0]), float(times[stop - 1]))


def sync_report(responder, u, z1_0, z2_0, dt=None, t_end=None, thresholds=DEFAULT_THRESHOLDS,
                P=None):
    """Drive two copies of ``responder`` with the same input and measure ``|s1 - s2|``."""
    if not isinstance(u, Trajectory):
        raise TypeError("u must be a Trajectory of driver outputs")
    dt = u.dt if dt is None else dt
    t_end = u.t_end if t_end is None else t_end
    if isinstance(responder, AffineResponder) and not convergence_certificate(responder, P).valid:
        warnings.warn("responder has no valid convergence certificate; synchronisation is not guaranteed")
    a = integrate(responder, z1_0, u, dt=dt, t_end=t_end, t0=u.t0)
    b = integrate(responder, z2_0, u, dt=dt, t_end=t_end, t0=u.t0)
    err = np.abs(a.outputs - b.outputs)
    times = a.times
    scale = max(1.0, float(np.max(np.abs(a.outputs[len(a) // 2:]))))
    floor = 1e3 * np.finfo(float).eps * scale
    rate, window = fit_decay_rate(times, err, floor)
    return SyncReport(times=times, error_series=err, rate=rate,
                      time_to_threshold={eps: settle_time(times, err, eps) for eps in thresholds},
                      final_error=float(err[-1]), fit_window=window, server=a, station=b)
