"""Wires one zone together: drivers, catalog, engine, streams,
procedure runs. A fresh zone bootstraps itself with an administrator,
the root collection, and /home; a zone pointed at an existing journal
directory recovers its entire state from disk first.
"""

from __future__ import annotations

from pathlib import Path

from .catalog import Catalog
from .common import SYSTEM
from .drivers import Driver, builtin_registry
from .engine import Engine
from .provenance import Provenance
from .streams import Streams


class Zone:
    def __init__(self, journal_dir: str | Path | None = None,
                 admin_user: str = "admin",
                 admin_secret: str | None = None,
                 default_resource: str | None = None,
                 allow_dynamic_code: bool = False):
        self.drivers = builtin_registry()
        self.catalog = Catalog(journal_dir, driver_names=self.drivers.names)
        self.engine = Engine(self.catalog, self.drivers,
                             default_resource=default_resource)
        self.streams = Streams(self.engine)
        self.provenance = Provenance(self.engine)
        self.allow_dynamic_code = allow_dynamic_code
        self.admin_user = admin_user
        if not self.catalog.user_exists(admin_user):
            if admin_secret is None:
                raise ValueError(
                    "fresh zone needs an admin secret to bootstrap")
            self.catalog.create_user(SYSTEM, admin_user, "admin",
                                     admin_secret)
        if not self.catalog.collection_exists("/"):
            self.catalog.make_collection(SYSTEM, "/", owner=admin_user)
        # Home collections hang off /home; ship it so a fresh zone is
        # usable without an extra mkdir.
        if not self.catalog.collection_exists("/home"):
            self.catalog.make_collection(SYSTEM, "/home", owner=admin_user)

    def ensure_resource(self, caller: str, name: str, driver: str,
                        root: str, kind: str = "cache") -> str:
        """Register a resource unless one with this name already exists."""
        if any(r.name == name for r in self.catalog.resources()):
            return name
        return self.catalog.register_resource(caller, name, driver, root,
                                              kind)

    def register_driver(self, caller: str, name: str,
                        driver: Driver) -> None:
        self.catalog.require_admin(caller)
        self.drivers.register(name, driver)
        self.catalog.audit_append(caller, "driver.register", name)

    def close(self) -> None:
        self.catalog.close()

    def __enter__(self) -> "Zone":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
