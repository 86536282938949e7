"""Client bindings for the gridloc serve-mode episodic protocol."""

from .client import EpisodeFinished, ProtocolError, ProtocolMismatchError, \
    RemoteEnv, connect, decode_tensor, encode_tensor

__version__ = "0.1.0"
