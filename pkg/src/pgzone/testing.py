"""Support pieces for exercising failure paths: a fault-injecting
driver wrapper and small helpers shared by the test suite and by
operators reproducing issues.
"""

from __future__ import annotations

import socket

from .drivers import Driver, Handle, StatResult
from .errors import DriverError


class FaultDriver(Driver):
    """Wraps any driver and injects faults on demand.

    corrupt_writes: flip the first byte of every written payload, so
    stored bytes no longer match the checksum computed from the
    original data. fail_unlink: every unlink raises DriverError.
    Both flags can be toggled at runtime.
    """

    def __init__(self, inner: Driver, corrupt_writes: bool = False,
                 fail_unlink: bool = False):
        self.inner = inner
        self.corrupt_writes = corrupt_writes
        self.fail_unlink = fail_unlink

    @property
    def supports_update(self) -> bool:  # type: ignore[override]
        return self.inner.supports_update

    @property
    def supports_unlink(self) -> bool:  # type: ignore[override]
        return self.inner.supports_unlink

    def new_ref(self, root: str) -> str:
        return self.inner.new_ref(root)

    def create(self, ref: str) -> None:
        self.inner.create(ref)

    def open(self, ref: str) -> Handle:
        return self.inner.open(ref)

    def read(self, handle: Handle, offset: int, length: int) -> bytes:
        return self.inner.read(handle, offset, length)

    def write(self, handle: Handle, offset: int, data: bytes) -> None:
        if self.corrupt_writes and data:
            data = bytes([data[0] ^ 0xFF]) + data[1:]
        self.inner.write(handle, offset, data)

    def close(self, handle: Handle) -> None:
        self.inner.close(handle)

    def unlink(self, ref: str) -> None:
        if self.fail_unlink:
            raise DriverError(f"injected unlink failure for {ref!r}")
        self.inner.unlink(ref)

    def stat(self, ref: str) -> StatResult:
        return self.inner.stat(ref)


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]
