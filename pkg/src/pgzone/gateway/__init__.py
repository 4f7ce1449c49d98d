"""Network front door for a zone: bearer-token sessions, a JSON/HTTP
server exposing the trapped operations, a thin client, and the pg
command-line tool.
"""

from .client import ClientError, ZoneClient
from .config import GatewayConfig
from .server import GatewayServer
from .sessions import SessionStore

__all__ = ["ClientError", "GatewayConfig", "GatewayServer", "SessionStore",
           "ZoneClient"]
