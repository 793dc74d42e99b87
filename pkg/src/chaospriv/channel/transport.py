"""Loopback TCP shim carrying the same frames as the in-process session."""

import socket

from .frames import encode_frame, read_frame


def parse_address(text):
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"expected host:port, got {text!r}")
    return host, int(port)


def serve_station(station, host, port, timeout=60.0, on_ready=None):
    """Accept one server connection, feed every frame to ``station``, return its report."""
    with socket.create_server((host, port)) as srv:
        srv.settimeout(timeout)
        if on_ready is not None:
            on_ready(srv.getsockname()[1])
        conn, _ = srv.accept()
        with conn, conn.makefile("rb") as stream:
            conn.settimeout(timeout)
            while (frame := read_frame(stream)) is not None:
                station.handle(frame)
    return station.report()


def send_frames(frames, host, port, timeout=60.0):
    """Connect to a listening station and stream ``frames``; returns the frame count."""
    count = 0
    with socket.create_connection((host, port), timeout=timeout) as conn:
        for frame in frames:
            conn.sendall(encode_frame(frame))
            count += 1
        conn.shutdown(socket.SHUT_WR)
    return count
