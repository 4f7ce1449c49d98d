"""Configuration for the gateway and the pg tool.

Sources, later ones winning: built-in defaults, a key=value file
(# starts a comment), then PG_* environment variables. The same file
serves both the server (bind/journal settings) and the client (server
URL, token file).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

_ENV_PREFIX = "PG_"

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


@dataclass
class GatewayConfig:
    zone_name: str = "zone"
    bind_host: str = "127.0.0.1"
    bind_port: int = 8442
    journal_dir: str = ""
    data_root: str = ""
    default_resource: str = "main"
    admin_user: str = "admin"
    admin_secret: str = ""
    allow_dynamic_code: bool = False
    server: str = "http://127.0.0.1:8442"
    token_file: str = str(Path.home() / ".pgzone" / "token")

    @classmethod
    def load(cls, path: str | Path | None = None,
             env: dict | None = None) -> "GatewayConfig":
        values: dict = {}
        if path is not None:
            values.update(_read_file(Path(path)))
        env = os.environ if env is None else env
        for f in fields(cls):
            env_key = _ENV_PREFIX + f.name.upper()
            if env_key in env:
                values[f.name] = env[env_key]
        config = cls()
        for f in fields(cls):
            if f.name not in values:
                continue
            raw = values[f.name]
            if f.type in ("int", int):
                setattr(config, f.name, int(raw))
            elif f.type in ("bool", bool):
                setattr(config, f.name, _parse_bool(raw, f.name))
            else:
                setattr(config, f.name, str(raw))
        return config


def _parse_bool(raw, name: str) -> bool:
    if isinstance(raw, bool):
        return raw
    lowered = str(raw).strip().lower()
    if lowered in _BOOL_TRUE:
        return True
    if lowered in _BOOL_FALSE:
        return False
    raise ValueError(f"config key {name}: not a boolean: {raw!r}")


def _read_file(path: Path) -> dict:
    values: dict = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values
