"""Quantise a synchronous chaotic output into realisations of a target pmf.

Cells are right-open intervals ``[b_{i-1}, b_i)`` with ``b_0 = -inf`` and
``b_M = +inf``; the interior boundaries are quantiles of the output's
empirical CDF at the cumulative target masses.
"""

import json
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .chaossim.integrate import Trajectory
from .chaossim.stats import EmpiricalDistribution, estimate_density
from .probmodel import Alphabet, Pmf

DEFAULT_TAU_THRESHOLD = 0.05


@dataclass(frozen=True, eq=False)
class CellPartition:
    """Ordered cells over the real line, one per target symbol."""

    boundaries: np.ndarray
    target_pmf: Pmf
    delay_tau: int = 1
    delta: float = 1e-3
    tau_threshold: float = DEFAULT_TAU_THRESHOLD
    empty_cells: np.ndarray = field(default=None)

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float).ravel()
        m = self.target_pmf.alphabet.size
        if b.size != m - 1:
            raise ValueError(f"{m} symbols need {m - 1} boundaries, got {b.size}")
        if not np.all(np.isfinite(b)):
            raise ValueError("boundaries must be finite")
        if np.any(np.diff(b) < 0):
            raise ValueError("boundaries must be non-decreasing")
        if int(self.delay_tau) < 1 or self.delta <= 0:
            raise ValueError("delay_tau must be >= 1 and delta positive")
        empty = np.zeros(m, dtype=bool)
        empty[1:-1] = b[1:] == b[:-1]
        if self.empty_cells is not None:
            empty |= np.asarray(self.empty_cells, dtype=bool)
        b.setflags(write=False)
        empty.setflags(write=False)
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "empty_cells", empty)
        object.__setattr__(self, "delay_tau", int(self.delay_tau))

    @property
    def symbols(self):
        return self.target_pmf.alphabet

    @property
    def size(self):
        return self.symbols.size

    def to_dict(self):
        return {
            "boundaries": [float(v) for v in self.boundaries],
            "symbols": self.symbols.to_list(),
            "target_pmf": [float(v) for v in self.target_pmf.probs],
            "empty_cells": [bool(v) for v in self.empty_cells],
            "delay_tau": self.delay_tau,
            "delta": float(self.delta),
            "tau_threshold": float(self.tau_threshold),
        }

    @classmethod
    def from_dict(cls, data):
        for key in ("boundaries", "symbols", "target_pmf"):
            if key not in data:
                raise ValueError(f"partition JSON is missing {key!r}")
        pmf = Pmf(Alphabet.from_list(data["symbols"]), data["target_pmf"], normalize=True)
        return cls(data["boundaries"], pmf, data.get("delay_tau", 1), data.get("delta", 1e-3),
                   data.get("tau_threshold", DEFAULT_TAU_THRESHOLD), data.get("empty_cells"))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def build_cells(cdf, p_v_star, delay_tau=1, delta=1e-3, tau_threshold=DEFAULT_TAU_THRESHOLD):
    """Boundaries ``b_i = F^{-1}(sum_{j<=i} p_j)`` from an empirical distribution.

    ``cdf`` is an :class:`EmpiricalDistribution` or a raw sample.  Zero-mass
    symbols get empty cells.  A trailing run of zero-mass symbols is placed
    just above the sample maximum so that no sample lands in it.
    """
    if not isinstance(cdf, EmpiricalDistribution):
        cdf = estimate_density(cdf)
    if not isinstance(p_v_star, Pmf):
        raise TypeError("p_v_star must be a Pmf")
    p = np.asarray(p_v_star.probs)
    cum = np.minimum(np.cumsum(p)[:-1], 1.0)
    b = np.asarray(cdf.quantile(cum), dtype=float)
    tail = cum >= 1.0 - 1e-15
    b[tail] = np.nextafter(cdf.support[1], np.inf)
    b = np.maximum.accumulate(b)
    return CellPartition(b, p_v_star, delay_tau, delta, tau_threshold, empty_cells=p == 0)


def quantize_index(s, partition):
    """Cell index of each sample; a sample on ``b_i`` goes to the cell above."""
    s_arr = np.asarray(s, dtype=float)
    if np.any(np.isnan(s_arr)):
        raise ValueError("cannot quantize NaN")
    idx = np.searchsorted(partition.boundaries, s_arr, side="right")
    return int(idx) if idx.ndim == 0 else idx


def quantize(s, partition):
    """Symbol (point of the alphabet) for each sample."""
    return partition.symbols.points[quantize_index(s, partition)]


@dataclass(frozen=True, eq=False)
class RealizationStream:
    indices: np.ndarray
    sample_times: np.ndarray
    partition: CellPartition
    delta: float
    tau: int
    source: str = "responder"

    def __len__(self):
        return self.indices.size

    @property
    def symbols(self):
        return self.partition.symbols.points[self.indices]

    def frequencies(self):
        """Empirical pmf of the emitted symbols, aligned with the partition's alphabet."""
        return np.bincount(self.indices, minlength=self.partition.size) / max(len(self), 1)


def total_variation(p, q):
    return 0.5 * float(np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float)).sum())


def sample_indices(trajectory, delta, tau, t_start, n_symbols=None):
    """Row indices of ``trajectory`` at ``t_start + k * tau * delta``."""
    every = delta / trajectory.dt
    if every < 1 - 1e-9 or abs(every - round(every)) > 1e-9 * every:
        raise ValueError(f"delta {delta} is not a multiple of the trajectory step {trajectory.dt}")
    if int(tau) < 1:
        raise ValueError("tau must be >= 1")
    every = int(round(every))
    first = int(np.ceil((t_start - trajectory.t0) / trajectory.dt - 1e-9))
    if first < 0:
        raise ValueError("t_start precedes the trajectory")
    step = every * int(tau)
    available = 0 if first >= len(trajectory) else (len(trajectory) - 1 - first) // step + 1
    if n_symbols is None:
        n_symbols = available
    if n_symbols > available:
        raise ValueError(f"trajectory supports at most {available} symbols, {n_symbols} requested")
    return first + step * np.arange(n_symbols)


def generate_stream(trajectory, partition, delta=None, tau=None, t_start=0.0, n_symbols=None,
                    source="responder"):
    """Quantise the output sampled every ``tau * delta`` from ``t_start``."""
    if not isinstance(trajectory, Trajectory):
        raise TypeError("trajectory must be a Trajectory")
    delta = partition.delta if delta is None else delta
    tau = partition.delay_tau if tau is None else tau
    rows = sample_indices(trajectory, delta, tau, t_start, n_symbols)
    s = trajectory.outputs[rows]
    return RealizationStream(np.asarray(quantize_index(s, partition)), trajectory.t0 + rows * trajectory.dt,
                             partition, delta, int(tau), source)


class CellQuantizer(BaseEstimator, TransformerMixin):
    """Learn cells from output samples, then map samples to noise symbols.

    Parameters
    ----------
    target : Pmf
        The pmf the emitted symbols should follow.
    """

    def __init__(self, target=None):
        self.target = target

    def fit(self, X, y=None):
        if not isinstance(self.target, Pmf):
            raise TypeError("target must be a Pmf")
        s = check_array(X, ensure_2d=False, dtype=float).ravel()
        self.distribution_ = estimate_density(s)
        self.partition_ = build_cells(self.distribution_, self.target)
        self.boundaries_ = np.asarray(self.partition_.boundaries)
        return self

    def transform(self, X):
        """Symbols as an ``(n_samples, dim)`` array."""
        check_is_fitted(self, "partition_")
        s = check_array(X, ensure_2d=False, dtype=float).ravel()
        return quantize(s, self.partition_)

    def predict(self, X):
        """Cell index of each sample."""
        check_is_fitted(self, "partition_")
        s = check_array(X, ensure_2d=False, dtype=float).ravel()
        return quantize_index(s, self.partition_)
