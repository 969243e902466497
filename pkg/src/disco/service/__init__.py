"""Live cockpit session service: wire protocol, session engine, server."""

from .engine import SessionEngine  # noqa: F401
from .protocol import encode, parse_client_message  # noqa: F401
