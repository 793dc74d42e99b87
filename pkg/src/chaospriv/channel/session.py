"""Query session over the public channel.

The server answers each query ``y`` with ``z = y + v``, where ``v`` is
quantised from its responder output.  The station runs its own responder on
the driver samples it receives, quantises the same sample instant to ``v'``
and recovers ``y_hat = z - v'``.  Realisations are consumed in lockstep, one
per query, at ``t_start + k * tau * delta``.
"""

import json
import logging
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..chaossim.integrate import DEFAULT_CHUNK, DEFAULT_DT, run_steps
from ..chaossim.systems import AffineResponder, default_driver, default_responder
from ..noiseopt import NoiseDesignProblem, cost
from ..prng import CellPartition, quantize_index
from ..probmodel import Alphabet, ConditionalPmf, plugin_mutual_information
from .frames import Frame, FrameType, encode_frame

log = logging.getLogger(__name__)

_DRIVE_HEAD = struct.Struct("<QI")
_QUERY_HEAD = struct.Struct("<Q")


# -- distortion -----------------------------------------------------------

def one_level_band(size):
    """Index pairs at most one quantisation level apart."""
    return frozenset((i, j) for i in range(size) for j in range(size) if abs(i - j) <= 1)


def distortion_bound(p_y, band):
    """``sum over (y, y_hat) in band of p_Y(y) |y - y_hat|^2``."""
    pts = p_y.alphabet.points
    total = 0.0
    for i, j in band:
        if not (0 <= i < pts.shape[0] and 0 <= j < pts.shape[0]):
            raise ValueError(f"band pair {(i, j)} outside the alphabet")
        if i != j:
            total += float(p_y.probs[i]) * float(np.sum((pts[i] - pts[j]) ** 2))
    return total


@dataclass(frozen=True, eq=False)
class TransitionEstimate:
    """Empirical ``p(y_hat | y)``; rows of unseen ``y`` are NaN and marked undefined."""

    matrix: np.ndarray
    counts: np.ndarray
    defined: np.ndarray
    band_violations: int
    violation_mass: float

    @property
    def banded(self):
        return self.band_violations == 0

    def as_conditional(self, alphabet):
        """Conditional pmf over the rows that were observed."""
        rows = np.nonzero(self.defined)[0]
        return ConditionalPmf(Alphabet(alphabet.points[rows]), alphabet, self.matrix[rows])


def transition_matrix(y_idx, yhat_idx, size, band=None, min_samples=1000):
    """Row-normalised counts of ``(y, y_hat)`` pairs and mass outside ``band``.

    ``band`` defaults to the one-level band.
    """
    y_idx = np.asarray(y_idx, dtype=np.int64).ravel()
    yhat_idx = np.asarray(yhat_idx, dtype=np.int64).ravel()
    if y_idx.shape != yhat_idx.shape:
        raise ValueError("need paired samples")
    if y_idx.size and (min(y_idx.min(), yhat_idx.min()) < 0 or max(y_idx.max(), yhat_idx.max()) >= size):
        raise ValueError(f"indices must lie in [0, {size})")
    if y_idx.size < min_samples:
        warnings.warn(f"transition matrix from only {y_idx.size} pairs")
    counts = np.zeros((size, size))
    np.add.at(counts, (y_idx, yhat_idx), 1.0)
    rows = counts.sum(axis=1)
    defined = rows > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        matrix = np.where(defined[:, None], counts / rows[:, None], np.nan)
    band = one_level_band(size) if band is None else band
    mask = np.zeros((size, size), dtype=bool)
    for i, j in band:
        mask[i, j] = True
    outside = int(counts[~mask].sum())
    return TransitionEstimate(matrix, counts, defined, outside,
                              outside / y_idx.size if y_idx.size else 0.0)


# -- configuration and query draws ---------------------------------------

@dataclass(frozen=True, eq=False)
class SessionConfig:
    """Everything both endpoints agree on, plus the server's private seed.

    ``station_ic=None`` gives ideal synchronisation: the station starts from
    the server's responder state and so reproduces its output exactly.
    """

    problem: NoiseDesignProblem
    partition: CellPartition
    driver: object = field(default_factory=default_driver)
    responder: AffineResponder = field(default_factory=default_responder)
    driver_ic: tuple = (1.0, 1.0, 1.0)
    server_ic: tuple = (150.0, 150.0)
    station_ic: tuple = None
    dt: float = DEFAULT_DT
    t_start: float = 50.0
    seed: int = 0
    chunk_steps: int = DEFAULT_CHUNK

    def __post_init__(self):
        if self.partition.symbols != self.problem.y_alphabet:
            raise ValueError("partition symbols and query alphabet differ")
        every = self.partition.delta / self.dt
        if abs(every - round(every)) > 1e-9 * every or round(every) < 1:
            raise ValueError("partition delta must be a whole number of integration steps")
        if self.t_start < 0:
            raise ValueError("t_start must be non-negative")

    @property
    def ideal_sync(self):
        return self.station_ic is None

    @property
    def sample_stride(self):
        return int(round(self.partition.delta / self.dt)) * self.partition.delay_tau

    @property
    def first_sample(self):
        return int(np.ceil(self.t_start / self.dt - 1e-9))

    def schedule(self, n_queries):
        """Global integration step of each query's realisation."""
        return self.first_sample + self.sample_stride * np.arange(n_queries, dtype=np.int64)


def draw_queries(problem, n, seed):
    """Seeded ``x ~ p_X``, ``y ~ p_{Y|X}(.|x)``; returns index arrays."""
    rng = np.random.default_rng(seed)
    px = np.asarray(problem.p_x.probs)
    x = rng.choice(px.size, size=n, p=px)
    cdf = np.cumsum(problem.p_y_given_x.probs, axis=1)
    u = rng.random(n)
    y = np.minimum((u[:, None] >= cdf[x]).sum(axis=1), cdf.shape[1] - 1)
    return x, y


def _meta_payload(config, n_queries):
    meta = {
        "n_queries": int(n_queries),
        "seed": int(config.seed),
        "dt": float(config.dt),
        "t_start": float(config.t_start),
        "delta": float(config.partition.delta),
        "tau": int(config.partition.delay_tau),
        "boundaries": [float(b) for b in config.partition.boundaries],
        "symbols": config.partition.symbols.to_list(),
    }
    return json.dumps(meta, sort_keys=True).encode()


# -- endpoints ------------------------------------------------------------

class Server:
    """Trusted endpoint: owns the driver, answers queries with ``y + v``."""

    def __init__(self, config):
        self.config = config
        self.x = np.asarray(config.driver_ic, dtype=float)
        self.z = np.asarray(config.server_ic, dtype=float)
        self.step = 0
        self.noise_indices = None

    def frames(self, n_queries):
        cfg = self.config
        yield Frame(FrameType.SESSION_META, _meta_payload(cfg, n_queries))
        if n_queries == 0:
            return
        _, y_idx = draw_queries(cfg.problem, n_queries, cfg.seed)
        ypts = cfg.problem.y_alphabet.points
        schedule = cfg.schedule(n_queries)
        self.noise_indices = np.empty(n_queries, dtype=np.int64)
        end = int(schedule[-1]) + 1
        k = 0
        while self.step < end:
            m = min(cfg.chunk_steps, end - self.step)
            xs = run_steps(cfg.driver, self.x, cfg.dt, m, t0=self.step * cfg.dt)
            u = np.ascontiguousarray(xs[:-1, cfg.driver.output_index])
            yield Frame(FrameType.DRIVE, _DRIVE_HEAD.pack(self.step, m) + u.astype("<f8").tobytes())
            zs = run_steps(cfg.responder, self.z, cfg.dt, m, u=u)
            hi = np.searchsorted(schedule, self.step + m, side="left")
            local = schedule[k:hi] - self.step
            v_idx = quantize_index(zs[local, cfg.responder.output_index], cfg.partition)
            self.noise_indices[k:hi] = v_idx
            for q, vi in zip(range(k, hi), np.atleast_1d(v_idx)):
                zq = ypts[y_idx[q]] + ypts[vi]
                yield Frame(FrameType.QUERY_RESPONSE,
                            _QUERY_HEAD.pack(q) + zq.astype("<f8").tobytes())
            k = hi
            self.x, self.z = xs[-1], zs[-1]
            self.step += m


class Station:
    """Remote endpoint: tracks the driver, recovers ``y_hat = z - v'``."""

    def __init__(self, config):
        self.config = config
        ic = config.server_ic if config.station_ic is None else config.station_ic
        self.z = np.asarray(ic, dtype=float)
        self.step = 0
        self.meta = None
        self.schedule = None
        self.pending = {}
        self.z_values = None
        self.yhat_idx = None
        self.noise_idx = None
        self.projected = None
        self.received = 0

    def handle(self, frame):
        if frame.type == FrameType.SESSION_META:
            self._on_meta(json.loads(frame.payload.decode()))
        elif self.meta is None:
            raise RuntimeError("frame received before session metadata")
        elif frame.type == FrameType.DRIVE:
            self._on_drive(frame.payload)
        else:
            self._on_query(frame.payload)

    def _on_meta(self, meta):
        cfg = self.config
        if not np.allclose(meta["boundaries"], cfg.partition.boundaries, rtol=0, atol=0):
            raise ValueError("server and station partitions differ")
        if meta["tau"] != cfg.partition.delay_tau or meta["dt"] != cfg.dt:
            raise ValueError("server and station sampling parameters differ")
        self.meta = meta
        n = meta["n_queries"]
        every = int(round(meta["delta"] / meta["dt"])) * meta["tau"]
        first = int(np.ceil(meta["t_start"] / meta["dt"] - 1e-9))
        self.schedule = first + every * np.arange(n, dtype=np.int64)
        d = cfg.problem.y_alphabet.dim
        self.z_values = np.full((n, d), np.nan)
        self.yhat_idx = np.full(n, -1, dtype=np.int64)
        self.noise_idx = np.full(n, -1, dtype=np.int64)
        self.projected = np.zeros(n, dtype=bool)

    def _on_drive(self, payload):
        cfg = self.config
        start, m = _DRIVE_HEAD.unpack_from(payload)
        if start != self.step:
            raise ValueError(f"drive samples start at step {start}, station is at {self.step}")
        u = np.frombuffer(payload, dtype="<f8", offset=_DRIVE_HEAD.size)
        if u.size != m:
            raise ValueError(f"drive frame announces {m} samples, carries {u.size}")
        zs = run_steps(cfg.responder, self.z, cfg.dt, m, u=u.astype(float))
        lo = np.searchsorted(self.schedule, self.step, side="left")
        hi = np.searchsorted(self.schedule, self.step + m, side="left")
        local = self.schedule[lo:hi] - self.step
        v_idx = np.atleast_1d(quantize_index(zs[local, cfg.responder.output_index], cfg.partition))
        for q, vi in zip(range(lo, hi), v_idx):
            self.pending[q] = int(vi)
        self.z = zs[-1]
        self.step += m

    def _on_query(self, payload):
        (q,) = _QUERY_HEAD.unpack_from(payload)
        zq = np.frombuffer(payload, dtype="<f8", offset=_QUERY_HEAD.size).astype(float)
        if q not in self.pending:
            raise ValueError(f"query {q} arrived before its realisation was available")
        vi = self.pending.pop(q)
        pts = self.config.problem.y_alphabet.points
        yhat = zq - pts[vi]
        idx = self.config.problem.y_alphabet.index_of(yhat)
        if idx is None:
            # nearest point; argmin keeps the lower index on ties
            idx = int(np.argmin(np.sum((pts - yhat) ** 2, axis=1)))
            self.projected[q] = True
        self.z_values[q] = zq
        self.noise_idx[q] = vi
        self.yhat_idx[q] = idx
        self.received += 1

    def report(self, band=None):
        """Distortion metrics; ground-truth queries are regenerated from the session seed."""
        if self.meta is None:
            raise RuntimeError("no session metadata received")
        n = self.meta["n_queries"]
        if self.received != n:
            raise RuntimeError(f"received {self.received} of {n} query responses")
        return evaluate(self.config, self.meta["seed"], self.z_values, self.yhat_idx,
                        self.noise_idx, self.projected, band)


# -- evaluation -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DistortionReport:
    n_queries: int
    empirical_mse: float
    recovery_rate: float
    projected_count: int
    realization_mismatches: int
    transition: TransitionEstimate
    band_violations: int
    bound: float
    leakage_plugin: float
    optimal_value: float
    noise_frequencies: np.ndarray
    base: object
    ideal_sync: bool
    x_idx: np.ndarray = field(repr=False, default=None)
    y_idx: np.ndarray = field(repr=False, default=None)
    yhat_idx: np.ndarray = field(repr=False, default=None)
    z_idx: np.ndarray = field(repr=False, default=None)
    message_log: bytes = field(repr=False, default=None)

    @property
    def transition_matrix(self):
        return self.transition.matrix

    def to_dict(self):
        tm = self.transition.matrix
        return {
            "n_queries": int(self.n_queries),
            "ideal_sync": bool(self.ideal_sync),
            "base": self.base,
            "empirical_mse": float(self.empirical_mse),
            "recovery_rate": float(self.recovery_rate),
            "projected_count": int(self.projected_count),
            "realization_mismatches": int(self.realization_mismatches),
            "band_violations": int(self.band_violations),
            "distortion_bound": float(self.bound),
            "leakage_plugin": float(self.leakage_plugin),
            "optimal_value": float(self.optimal_value),
            "noise_frequencies": [float(v) for v in self.noise_frequencies],
            "transition_matrix": [[None if np.isnan(v) else float(v) for v in row] for row in tm],
        }


def evaluate(config, seed, z_values, yhat_idx, station_noise_idx, projected, band=None):
    problem = config.problem
    n = len(yhat_idx)
    M = problem.y_alphabet.size
    x_idx, y_idx = draw_queries(problem, n, seed)
    pts = problem.y_alphabet.points
    # the server's realisation is z - y
    z_alpha = problem.z_alphabet
    z_idx = np.array([z_alpha.index_of(z) for z in z_values], dtype=np.int64) if n else np.zeros(0, np.int64)
    server_noise = np.array([problem.y_alphabet.index_of(z - pts[y]) for z, y in zip(z_values, y_idx)],
                            dtype=np.int64) if n else np.zeros(0, np.int64)
    band = one_level_band(M) if band is None else band
    trans = transition_matrix(y_idx, yhat_idx, M, band=band, min_samples=min(1000, max(n, 1)))
    err = np.sum((pts[y_idx] - pts[yhat_idx]) ** 2, axis=1) if n else np.zeros(0)
    opt = float(cost(problem, config.partition.target_pmf))
    return DistortionReport(
        n_queries=n,
        empirical_mse=float(err.mean()) if n else 0.0,
        recovery_rate=float(np.mean(yhat_idx == y_idx)) if n else 1.0,
        projected_count=int(np.sum(projected)),
        realization_mismatches=int(np.sum(server_noise != station_noise_idx)),
        transition=trans,
        band_violations=trans.band_violations,
        bound=distortion_bound(problem.p_y, band),
        leakage_plugin=plugin_mutual_information(x_idx, z_idx, problem.base) if n else 0.0,
        optimal_value=opt,
        noise_frequencies=np.bincount(server_noise, minlength=M) / max(n, 1),
        base=problem.base,
        ideal_sync=config.ideal_sync,
        x_idx=x_idx, y_idx=y_idx, yhat_idx=np.asarray(yhat_idx), z_idx=z_idx,
    )


def run_session(config, n_queries, keep_log=False, band=None):
    """Run server and station in lockstep on one thread.

    Frames are handed over as objects; with ``keep_log`` their encodings are
    concatenated into ``report.message_log``.
    """
    if not isinstance(config, SessionConfig):
        raise TypeError("config must be a SessionConfig")
    if n_queries < 0:
        raise ValueError("n_queries must be non-negative")
    server = Server(config)
    station = Station(config)
    chunks = [] if keep_log else None
    for frame in server.frames(n_queries):
        if chunks is not None:
            chunks.append(encode_frame(frame))
        station.handle(frame)
    report = station.report(band)
    if chunks is not None:
        object.__setattr__(report, "message_log", b"".join(chunks))
    return report

