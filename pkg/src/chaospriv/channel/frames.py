"""Length-prefixed frames for the public channel.

Layout: magic ``b"CPRV"`` | version (1 byte) | type (1 byte) |
payload length (4 bytes, big-endian) | payload.
"""

import enum
import struct
from dataclasses import dataclass

MAGIC = b"CPRV"
VERSION = 1
HEADER = struct.Struct(">4sBBI")
HEADER_SIZE = HEADER.size  # 10
MAX_PAYLOAD = 2**32 - 1


class FrameType(enum.IntEnum):
    DRIVE = 0x01
    QUERY_RESPONSE = 0x02
    SESSION_META = 0x03


class FrameError(ValueError):
    """Malformed frame; ``field`` names the offending header field."""

    field = "frame"

    def __init__(self, message):
        super().__init__(f"{self.field}: {message}")


class BadMagicError(FrameError):
    field = "magic"


class BadVersionError(FrameError):
    field = "version"


class UnknownTypeError(FrameError):
    field = "type"


class TruncatedFrameError(FrameError):
    field = "payload"


@dataclass(frozen=True)
class Frame:
    type: FrameType
    payload: bytes = b""

    def __post_init__(self):
        try:
            object.__setattr__(self, "type", FrameType(self.type))
        except ValueError:
            raise UnknownTypeError(f"unknown frame type {self.type!r}") from None
        if not isinstance(self.payload, (bytes, bytearray, memoryview)):
            raise TypeError("payload must be bytes")
        payload = bytes(self.payload)
        if len(payload) > MAX_PAYLOAD:
            raise ValueError("payload too long for a 4-byte length field")
        object.__setattr__(self, "payload", payload)


def encode_frame(frame):
    return HEADER.pack(MAGIC, VERSION, int(frame.type), len(frame.payload)) + frame.payload


def _parse_header(head):
    magic, version, ftype, length = HEADER.unpack(head)
    if magic != MAGIC:
        raise BadMagicError(f"expected {MAGIC!r}, got {magic!r}")
    if version != VERSION:
        raise BadVersionError(f"unsupported version {version}")
    if ftype not in FrameType._value2member_map_:
        raise UnknownTypeError(f"unknown frame type 0x{ftype:02x}")
    return FrameType(ftype), length


def decode_frame(data):
    """Decode exactly one frame; trailing bytes are an error."""
    frame, used = decode_prefix(data)
    if used != len(data):
        raise FrameError(f"{len(data) - used} trailing bytes after frame")
    return frame


def decode_prefix(data):
    """Decode the frame at the start of ``data``; returns ``(frame, bytes_used)``."""
    data = bytes(data)
    if len(data) < HEADER_SIZE:
        raise TruncatedFrameError(f"truncated header: {len(data)} of {HEADER_SIZE} bytes")
    ftype, length = _parse_header(data[:HEADER_SIZE])
    end = HEADER_SIZE + length
    if len(data) < end:
        raise TruncatedFrameError(f"truncated payload: {len(data) - HEADER_SIZE} of {length} bytes")
    return Frame(ftype, data[HEADER_SIZE:end]), end


def iter_frames(data):
    """All frames in a concatenated byte string."""
    data = bytes(data)
    pos = 0
    while pos < len(data):
        frame, used = decode_prefix(data[pos:pos + HEADER_SIZE + _peek_length(data, pos)])
        yield frame
        pos += used


def _peek_length(data, pos):
    if len(data) - pos < HEADER_SIZE:
        return 0
    return HEADER.unpack_from(data, pos)[3]


def read_frame(stream):
    """Read one frame from a binary file-like object; ``None`` at clean EOF."""
    head = _read_exact(stream, HEADER_SIZE)
    if not head:
        return None
    if len(head) < HEADER_SIZE:
        raise TruncatedFrameError(f"truncated header: {len(head)} of {HEADER_SIZE} bytes")
    ftype, length = _parse_header(head)
    payload = _read_exact(stream, length)
    if len(payload) < length:
        raise TruncatedFrameError(f"truncated payload: {len(payload)} of {length} bytes")
    return Frame(ftype, payload)


def _read_exact(stream, n):
    chunks = []
    got = 0
    while got < n:
        chunk = stream.read(n - got)
        if not chunk:
            break
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)
