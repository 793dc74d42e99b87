"""Time-series statistics on chaotic outputs: 0-1 test, densities, stationarity, correlation."""

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .._validation import check_series
from .integrate import DEFAULT_DT, simulate_cascade

log = logging.getLogger(__name__)

DEFAULT_TRANSIENT = 50.0
DRIVER_IC_BOX = (-20.0, 20.0)
RESPONDER_IC_BOX = (-200.0, 200.0)
DEGENERATE_WIDTH = 1e-6


# -- 0-1 test -------------------------------------------------------------

def _msd(p, n_cut):
    """Mean-square displacement ``mean_j (p[j+n] - p[j])^2`` for n = 1..n_cut, row-wise."""
    N = p.shape[-1]
    size = 1 << int(np.ceil(np.log2(2 * N)))
    F = np.fft.rfft(p, size)
    cross = np.fft.irfft(F * np.conj(F), size)[..., 1:n_cut + 1]
    sq = np.cumsum(p * p, axis=-1)
    n = np.arange(1, n_cut + 1)
    total = sq[..., -1:]
    head = sq[..., N - n - 1]           # sum_{j < N-n} p_j^2
    tail = total - sq[..., n - 1]       # sum_{j >= n} p_j^2
    return (head + tail - 2.0 * cross) / (N - n)


def zero_one_chaos_test(series, n_c=100, n_cut=None, seed=0, min_length=5000):
    """Gottwald-Melbourne 0-1 test for chaos (correlation method).

    Returns the median over ``n_c`` random frequencies ``c`` in (pi/5, 4pi/5)
    of the correlation between lag and the oscillation-corrected mean-square
    displacement of the translation variables.  Values near 1 indicate chaos,
    near 0 regular dynamics.  A constant series gives 0.
    """
    phi = check_series(series, min_length=min_length)
    if np.ptp(phi) == 0:
        return 0.0
    N = phi.size
    n_cut = N // 10 if n_cut is None else n_cut
    rng = np.random.default_rng(seed)
    c = rng.uniform(np.pi / 5, 4 * np.pi / 5, size=n_c)
    j = np.arange(1, N + 1)
    angle = np.outer(c, j)
    p = np.cumsum(phi * np.cos(angle), axis=1)
    q = np.cumsum(phi * np.sin(angle), axis=1)
    M = _msd(p, n_cut) + _msd(q, n_cut)
    n = np.arange(1, n_cut + 1)
    osc = np.mean(phi) ** 2 * (1 - np.cos(np.outer(c, n))) / (1 - np.cos(c))[:, None]
    D = M - osc
    nc = n - n.mean()
    Dc = D - D.mean(axis=1, keepdims=True)
    denom = np.sqrt(np.sum(nc * nc) * np.sum(Dc * Dc, axis=1))
    K = np.where(denom > 0, (Dc @ nc) / np.where(denom > 0, denom, 1.0), 0.0)
    return float(np.clip(np.median(K), -1.0, 1.0))


# -- densities ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EmpiricalDistribution:
    """Histogram plus empirical CDF of a scalar sample."""

    bin_edges: np.ndarray
    bin_masses: np.ndarray
    support: tuple
    sample_count: int
    sorted_samples: np.ndarray

    @property
    def density(self):
        return self.bin_masses / np.diff(self.bin_edges)

    @property
    def bin_centers(self):
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    def cdf(self, s):
        """Fraction of samples ``<= s``."""
        return np.searchsorted(self.sorted_samples, s, side="right") / self.sample_count

    def quantile(self, q):
        """Inverse CDF by linear interpolation between order statistics."""
        return np.quantile(self.sorted_samples, q, method="linear")


def estimate_density(samples, bin_count=100):
    """Equal-width histogram over ``[min, max]`` of the samples, with the empirical CDF."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("cannot estimate a density from an empty sample")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples contain non-finite values")
    if x.size < 10_000:
        log.debug("density from only %d samples", x.size)
    xs = np.sort(x)
    lo, hi = float(xs[0]), float(xs[-1])
    if hi == lo:
        edges = np.array([lo - 0.5, lo + 0.5])
        masses = np.array([1.0])
    else:
        counts, edges = np.histogram(xs, bins=bin_count, range=(lo, hi))
        masses = counts / xs.size
    return EmpiricalDistribution(edges, masses, (lo, hi), int(xs.size), xs)


def ks_distance(a, b, assume_sorted=False):
    """Two-sample Kolmogorov-Smirnov statistic ``sup |F_a - F_b|``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not assume_sorted:
        a, b = np.sort(a), np.sort(b)
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


# -- stationarity ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class StationarityReport:
    """Ensemble outcome; ``samples`` holds each run's output in time order."""

    max_ks: float
    ks_matrix: np.ndarray
    supports: np.ndarray
    initial_conditions: list
    samples: list
    degenerate: bool
    delta: float
    transient: float
    driver_box: tuple
    responder_box: tuple

    def pooled(self):
        return np.concatenate(self.samples)

    def to_dict(self):
        return {
            "max_ks": float(self.max_ks),
            "supports": self.supports.tolist(),
            "degenerate": bool(self.degenerate),
            "delta": float(self.delta),
            "transient": float(self.transient),
            "driver_ic_box": list(self.driver_box),
            "responder_ic_box": list(self.responder_box),
            "initial_conditions": [{"driver": list(map(float, d)), "responder": list(map(float, r))}
                                   for d, r in self.initial_conditions],
        }


def draw_initial_conditions(driver, responder, count, seed=0, driver_box=DRIVER_IC_BOX,
                            responder_box=RESPONDER_IC_BOX):
    """Seeded ICs, uniform in the boxes; driver ICs at the origin are redrawn."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        while True:
            x0 = rng.uniform(*driver_box, size=driver.dimension)
            if np.linalg.norm(x0) > 1e-6:
                break
        z0 = rng.uniform(*responder_box, size=responder.dimension)
        out.append((x0, z0))
    return out


def stationarity_check(responder, driver, ic_count=20, dt=DEFAULT_DT, t_end=4000.0, delta=0.01,
                       seed=0, transient=DEFAULT_TRANSIENT, driver_box=DRIVER_IC_BOX,
                       responder_box=RESPONDER_IC_BOX, initial_conditions=None):
    """Simulate ``ic_count`` independent runs and compare their output distributions.

    Each run discards ``t < transient`` and samples the responder output every
    ``delta``.  Returns the pairwise KS distances; ``max_ks`` is the headline.
    """
    if initial_conditions is None:
        if ic_count < 2:
            raise ValueError("need at least two runs to compare")
        initial_conditions = draw_initial_conditions(driver, responder, ic_count, seed,
                                                     driver_box, responder_box)
    every = int(round(delta / dt))
    if every < 1 or abs(every * dt - delta) > 1e-9 * delta:
        raise ValueError("delta must be a whole multiple of dt")
    skip = int(np.ceil(transient / delta - 1e-9))
    samples = []
    for x0, z0 in initial_conditions:
        run = simulate_cascade(driver, [responder], x0, [z0], dt=dt, t_end=t_end, record_every=every)
        samples.append(run.responders[0].outputs[skip:].copy())
    ordered = [np.sort(s) for s in samples]
    k = len(samples)
    ks = np.zeros((k, k))
    for i in range(k):
        for j in range(i):
            ks[i, j] = ks[j, i] = ks_distance(ordered[i], ordered[j], assume_sorted=True)
    supports = np.array([[s[0], s[-1]] for s in ordered])
    degenerate = bool(np.any(supports[:, 1] - supports[:, 0] < DEGENERATE_WIDTH))
    if degenerate:
        warnings.warn("non-chaotic output: responder output collapses to a point")
    return StationarityReport(float(ks.max()), ks, supports, list(initial_conditions), samples,
                              degenerate, delta, transient, driver_box, responder_box)


# -- correlation ----------------------------------------------------------

class DelayNotFoundError(ValueError):
    def __init__(self, threshold, rho):
        super().__init__(f"no lag up to {rho.size - 1} has |rho| <= {threshold}; "
                         f"smallest |rho| = {np.min(np.abs(rho[1:])):.4g}")
        self.rho = rho


def autocorrelation(series, max_lag):
    """Normalised autocovariance ``rho(l) = C(l) / C(0)`` for ``l = 0..max_lag``."""
    x = check_series(series, min_length=2)
    if max_lag >= x.size:
        raise ValueError("max_lag must be shorter than the series")
    x = x - x.mean()
    c0 = float(x @ x)
    if c0 == 0:
        raise ValueError("zero-variance series has no autocorrelation")
    size = 1 << int(np.ceil(np.log2(2 * x.size)))
    F = np.fft.rfft(x, size)
    acov = np.fft.irfft(F * np.conj(F), size)[:max_lag + 1]
    rho = acov / acov[0]
    rho[0] = 1.0
    return rho


def select_delay(series, delta=DEFAULT_DT, threshold=0.05, max_lag=None):
    """Smallest lag ``tau >= 1`` with ``|rho(tau)| <= threshold``.

    ``delta`` is the sampling period of ``series``; the delay in time units
    is ``tau * delta``.
    """
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    x = check_series(series, min_length=2)
    max_lag = min(x.size - 1, x.size // 2 if max_lag is None else max_lag)
    rho = autocorrelation(x, max_lag)
    ok = np.nonzero(np.abs(rho[1:]) <= threshold)[0]
    if ok.size == 0:
        raise DelayNotFoundError(threshold, rho)
    return int(ok[0] + 1)
