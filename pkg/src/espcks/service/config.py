"""Server configuration: JSON file, with ``ESPCKS_SNAPSHOT`` overriding the snapshot path."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

from .wire import DEFAULT_FRAME_CAP

SNAPSHOT_ENV = "ESPCKS_SNAPSHOT"
DEFAULT_PORT = 7878


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = DEFAULT_PORT
    snapshot_path: str | None = None
    frame_cap: int = DEFAULT_FRAME_CAP
    session_timeout: float = 300.0

    @classmethod
    def load(cls, path: str | os.PathLike | None = None, **overrides) -> "ServerConfig":
        data: dict = {}
        if path is not None:
            data = json.loads(Path(path).read_text())
            if "listen" in data:
                host, port = parse_address(data.pop("listen"))
                data.setdefault("host", host)
                data.setdefault("port", port)
            unknown = set(data) - {f.name for f in fields(cls)}
            if unknown:
                raise ValueError(f"unknown config keys: {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        env = os.environ.get(SNAPSHOT_ENV)
        if env:
            data["snapshot_path"] = env
        return cls(**data)


def parse_address(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep:
        return addr, DEFAULT_PORT
    return host or "127.0.0.1", int(port)
