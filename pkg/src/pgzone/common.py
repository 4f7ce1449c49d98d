"""Small helpers used by more than one module."""

from __future__ import annotations

import functools
import hashlib
import re
import time

# Actor name used for internal mutations (bootstrap, recovery plumbing).
# Real user names cannot contain "@", so this can never collide.
SYSTEM = "@system"


def now_us() -> int:
    """Current wall-clock time in microseconds since the epoch."""
    return time.time_ns() // 1000


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@functools.lru_cache(maxsize=4096)
def _glob_regex(pattern: str) -> re.Pattern[str]:
    parts = []
    for ch in pattern:
        if ch == "*":
            parts.append(".*")
        elif ch == "?":
            parts.append(".")
        else:
            parts.append(re.escape(ch))
    # (?s) so "*" crosses newlines as well as "/"; anchored full match.
    return re.compile("(?s)\\A" + "".join(parts) + "\\Z")


def glob_match(text: str, pattern: str) -> bool:
    """Anchored glob match supporting exactly "*" and "?".

    "*" matches any run of characters including "/", "?" matches one
    character. No character classes.
    """
    return _glob_regex(pattern).match(text) is not None
