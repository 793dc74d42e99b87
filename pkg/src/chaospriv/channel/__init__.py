"""Public-channel session: framing, endpoints and distortion metrics."""

from .frames import (BadMagicError, BadVersionError, Frame, FrameError, FrameType,
                     TruncatedFrameError, UnknownTypeError, decode_frame, decode_prefix,
                     encode_frame, iter_frames, read_frame)
from .session import (DistortionReport, Server, SessionConfig, Station, TransitionEstimate,
                      distortion_bound, draw_queries, evaluate, one_level_band, run_session,
                      transition_matrix)
from .transport import parse_address, send_frames, serve_station
