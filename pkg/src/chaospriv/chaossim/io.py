"""Trajectory export: CSV for inspection, a small binary column format for long runs."""

import csv
import struct

import numpy as np

from .integrate import Trajectory

MAGIC = b"CPTJ"
VERSION = 1
# magic, version, n_rows (u64), n_states (u32), output_index (u32), t0, dt
_HEADER = struct.Struct("<4sBQIIdd")


class TrajectoryFormatError(ValueError):
    pass


def write_csv(trajectory, path, state_names=None):
    """Columns ``t, <state...>, output``; floats in ``repr`` precision."""
    n = trajectory.states.shape[1]
    names = state_names or [f"x{i + 1}" for i in range(n)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", *names, "output"])
        for t, row in zip(trajectory.times, trajectory.states):
            w.writerow([repr(float(t)), *(repr(float(v)) for v in row),
                        repr(float(row[trajectory.output_index]))])


def read_csv(path, output_index=None):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] < 1 or data.shape[1] < 3:
        raise TrajectoryFormatError(f"{path}: expected columns t, states..., output")
    t, states, out = data[:, 0], data[:, 1:-1], data[:, -1]
    if output_index is None:
        matches = [j for j in range(states.shape[1]) if np.array_equal(states[:, j], out)]
        if not matches:
            raise TrajectoryFormatError(f"{path}: output column matches no state column")
        output_index = matches[0]
    dt = float(t[1] - t[0]) if t.size > 1 else 1.0
    return Trajectory(float(t[0]), dt, states, output_index)


def write_binary(trajectory, path):
    """Header then the state matrix, row-major little-endian float64."""
    states = np.ascontiguousarray(trajectory.states, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, states.shape[0], states.shape[1],
                              trajectory.output_index, trajectory.t0, trajectory.dt))
        fh.write(states.tobytes())


def read_binary(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise TrajectoryFormatError(f"{path}: truncated header")
        magic, version, rows, cols, out_idx, t0, dt = _HEADER.unpack(head)
        if magic != MAGIC:
            raise TrajectoryFormatError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise TrajectoryFormatError(f"{path}: unsupported version {version}")
        body = fh.read()
    if len(body) != rows * cols * 8:
        raise TrajectoryFormatError(f"{path}: expected {rows * cols * 8} data bytes, got {len(body)}")
    states = np.frombuffer(body, dtype="<f8").reshape(rows, cols).astype(float)
    return Trajectory(t0, dt, states, out_idx)


def load_trajectory(path):
    """Dispatch on content: binary if the magic matches, CSV otherwise."""
    with open(path, "rb") as fh:
        if fh.read(4) == MAGIC:
            return read_binary(path)
    return read_csv(path)
