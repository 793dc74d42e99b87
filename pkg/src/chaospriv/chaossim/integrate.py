"""Fixed-step RK4 integration of drivers and zero-order-hold driven responders."""

import math
from dataclasses import dataclass

import numba
import numpy as np

from .systems import AffineResponder, ConstantDriver, LorenzDriver

DEFAULT_DT = 1e-3
DEFAULT_CHUNK = 1 << 20


class DivergenceError(ArithmeticError):
    """A state became non-finite during integration."""

    def __init__(self, time):
        super().__init__(f"state diverged (non-finite) at t = {time:.6g}")
        self.time = time


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States sampled on the uniform grid ``t0 + k * dt``."""

    t0: float
    dt: float
    states: np.ndarray
    output_index: int = 0

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        object.__setattr__(self, "states", states)

    @property
    def outputs(self):
        return self.states[:, self.output_index]

    @property
    def times(self):
        return self.t0 + self.dt * np.arange(len(self))

    @property
    def t_end(self):
        return self.t0 + self.dt * (len(self) - 1)

    def __len__(self):
        return self.states.shape[0]

    def subsample(self, every, start=0):
        """Every ``every``-th sample from index ``start``."""
        return Trajectory(self.t0 + start * self.dt, self.dt * every,
                          self.states[start::every], self.output_index)


@numba.njit(cache=True, nogil=True)
def _lorenz_kernel(x0, sigma, rho, beta, h, n_steps, stride):
    n_rec = n_steps // stride + 1
    out = np.empty((n_rec, 3))
    x, y, z = x0[0], x0[1], x0[2]
    out[0, 0], out[0, 1], out[0, 2] = x, y, z
    r = 1
    for i in range(n_steps):
        k1x = sigma * (y - x)
        k1y = rho * x - y - x * z
        k1z = -beta * z + x * y
        ax, ay, az = x + 0.5 * h * k1x, y + 0.5 * h * k1y, z + 0.5 * h * k1z
        k2x = sigma * (ay - ax)
        k2y = rho * ax - ay - ax * az
        k2z = -beta * az + ax * ay
        ax, ay, az = x + 0.5 * h * k2x, y + 0.5 * h * k2y, z + 0.5 * h * k2z
        k3x = sigma * (ay - ax)
        k3y = rho * ax - ay - ax * az
        k3z = -beta * az + ax * ay
        ax, ay, az = x + h * k3x, y + h * k3y, z + h * k3z
        k4x = sigma * (ay - ax)
        k4y = rho * ax - ay - ax * az
        k4z = -beta * az + ax * ay
        x = x + h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        y = y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        z = z + h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
            return out[:r], i + 1
        if (i + 1) % stride == 0:
            out[r, 0], out[r, 1], out[r, 2] = x, y, z
            r += 1
    return out, -1


@numba.njit(cache=True, nogil=True)
def _affine_kernel(z0, A, forcing, h, n_steps, stride):
    # dz/dt = A z + forcing[k], forcing held over step k
    d = z0.shape[0]
    n_rec = n_steps // stride + 1
    out = np.empty((n_rec, d))
    z = z0.copy()
    out[0] = z
    k1 = np.empty(d)
    k2 = np.empty(d)
    k3 = np.empty(d)
    k4 = np.empty(d)
    w = np.empty(d)
    r = 1
    for i in range(n_steps):
        for a in range(d):
            s = forcing[i, a]
            for b in range(d):
                s += A[a, b] * z[b]
            k1[a] = s
        for a in range(d):
            w[a] = z[a] + 0.5 * h * k1[a]
        for a in range(d):
            s = forcing[i, a]
            for b in range(d):
                s += A[a, b] * w[b]
            k2[a] = s
        for a in range(d):
            w[a] = z[a] + 0.5 * h * k2[a]
        for a in range(d):
            s = forcing[i, a]
            for b in range(d):
                s += A[a, b] * w[b]
            k3[a] = s
        for a in range(d):
            w[a] = z[a] + h * k3[a]
        for a in range(d):
            s = forcing[i, a]
            for b in range(d):
                s += A[a, b] * w[b]
            k4[a] = s
        ok = True
        for a in range(d):
            z[a] = z[a] + h / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a])
            if not math.isfinite(z[a]):
                ok = False
        if not ok:
            return out[:r], i + 1
        if (i + 1) % stride == 0:
            out[r] = z
            r += 1
    return out, -1


def _python_rk4(rhs, x0, t0, h, n_steps, stride, inputs=None):
    x = np.array(x0, dtype=float)
    out = np.empty((n_steps // stride + 1, x.size))
    out[0] = x
    r = 1
    for i in range(n_steps):
        t = t0 + i * h
        u = None if inputs is None else inputs[i]
        # overflow here is reported as divergence just below
        with np.errstate(over="ignore", invalid="ignore"):
            k1 = np.asarray(rhs(x, u, t), dtype=float)
            k2 = np.asarray(rhs(x + 0.5 * h * k1, u, t + 0.5 * h), dtype=float)
            k3 = np.asarray(rhs(x + 0.5 * h * k2, u, t + 0.5 * h), dtype=float)
            k4 = np.asarray(rhs(x + h * k3, u, t + h), dtype=float)
            x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(t + h)
        if (i + 1) % stride == 0:
            out[r] = x
            r += 1
    return out


def _step_count(t0, t_end, dt):
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = int(round((t_end - t0) / dt))
    if n < 0 or abs(t0 + n * dt - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise ValueError(f"t_end - t0 = {t_end - t0} is not a whole number of steps of {dt}")
    return n


def _input_values(input, n_steps, dt, t0):
    if input is None:
        raise ValueError("responders need an input trajectory")
    if isinstance(input, Trajectory):
        if abs(input.dt - dt) > 1e-12 * dt or abs(input.t0 - t0) > 1e-9:
            raise ValueError("input trajectory must share the responder's time grid")
        u = input.outputs
    else:
        u = np.asarray(input, dtype=float).ravel()
    if u.size < n_steps:
        raise ValueError(f"input covers {u.size} steps, need {n_steps}")
    return u[:n_steps]


def run_steps(system, x0, dt, n_steps, u=None, t0=0.0, stride=1):
    """Advance ``n_steps`` RK4 steps; returns recorded states (every ``stride`` steps)."""
    x0 = np.asarray(x0, dtype=float).ravel()
    if x0.size != system.dimension:
        raise ValueError(f"initial state has {x0.size} entries, system has {system.dimension}")
    if isinstance(system, LorenzDriver):
        out, bad = _lorenz_kernel(x0, system.sigma, system.rho, system.beta, dt, n_steps, stride)
    elif isinstance(system, ConstantDriver):
        return np.repeat(x0[None, :], n_steps // stride + 1, axis=0)
    elif isinstance(system, AffineResponder):
        forcing = np.ascontiguousarray(system.input_map(np.asarray(u, dtype=float)), dtype=float)
        forcing = forcing.reshape(n_steps, system.dimension)
        with np.errstate(over="ignore", invalid="ignore"):
            out, bad = _affine_kernel(x0, np.ascontiguousarray(system.A), forcing, dt, n_steps, stride)
    else:
        return _python_rk4(system.rhs, x0, t0, dt, n_steps, stride, None if system.is_driver else u)
    if bad >= 0:
        raise DivergenceError(t0 + bad * dt)
    return out


def integrate(system, x0, input=None, dt=DEFAULT_DT, t_end=1.0, t0=0.0, record_every=1):
    """Integrate ``system`` from ``x0`` on ``[t0, t_end]`` with step ``dt``.

    Responders take the driver output as ``input`` (a :class:`Trajectory` on
    the same grid, or a raw array of per-step inputs) and hold it constant
    over each step.
    """
    n = _step_count(t0, t_end, dt)
    u = None if system.is_driver else _input_values(input, n, dt, t0)
    states = run_steps(system, x0, dt, n, u=u, t0=t0, stride=record_every)
    return Trajectory(t0, dt * record_every, states, system.output_index)


@dataclass(frozen=True, eq=False)
class CascadeRun:
    driver: Trajectory
    responders: list


def simulate_cascade(driver, responders, x0, z0s, dt=DEFAULT_DT, t_end=1.0, t0=0.0,
                     record_every=1, chunk_steps=DEFAULT_CHUNK):
    """Driver plus any number of responders, integrated in memory-bounded chunks.

    Results are bit-identical to integrating the driver first and then each
    responder against its full trajectory.
    """
    n = _step_count(t0, t_end, dt)
    if record_every < 1 or chunk_steps < 1:
        raise ValueError("record_every and chunk_steps must be positive")
    x = np.asarray(x0, dtype=float).ravel()
    zs = [np.asarray(z, dtype=float).ravel() for z in z0s]
    d_rec = [x[None, :]]
    r_rec = [[z[None, :]] for z in zs]
    done = 0
    while done < n:
        m = min(chunk_steps, n - done)
        tc = t0 + done * dt
        # local index i holds global step done + i; keep global multiples of record_every
        first = (-done) % record_every or record_every
        xs = run_steps(driver, x, dt, m, t0=tc)
        u = xs[:-1, driver.output_index]
        for j, resp in enumerate(responders):
            states = run_steps(resp, zs[j], dt, m, u=u, t0=tc)
            r_rec[j].append(states[first::record_every])
            zs[j] = states[-1]
        d_rec.append(xs[first::record_every])
        x = xs[-1]
        done += m
    step = dt * record_every
    return CascadeRun(
        Trajectory(t0, step, np.concatenate(d_rec), driver.output_index),
        [Trajectory(t0, step, np.concatenate(rec), resp.output_index)
         for rec, resp in zip(r_rec, responders)],
    )
