"""pgzone: a single-zone policy-based data-management engine.

Client actions are trapped at named enforcement points, resolved
against a runtime-editable rule base, and executed as micro-service
chains over pluggable storage drivers. The catalog journals every
mutation, so a zone recovers its exact state after a crash.
"""

from .catalog import Catalog
from .engine import Engine, Verdict, PEP_NAMES
from .errors import ZoneError
from .provenance import Provenance
from .streams import Streams
from .zone import Zone

__version__ = "0.1.0"

__all__ = [
    "Catalog",
    "Engine",
    "PEP_NAMES",
    "Provenance",
    "Streams",
    "Verdict",
    "Zone",
    "ZoneError",
    "__version__",
]
