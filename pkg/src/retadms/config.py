"""Runtime configuration: flags override the config file, which overrides
the environment, which overrides built-in defaults."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

ENV_PREFIX = "RETA_"

# environment variable -> config field
_ENV_KEYS = {
    "RETA_DATA_DIR": "data_dir",
    "RETA_LISTEN": "listen",
    "RETA_ADMIN_TOKEN": "admin_token",
    "RETA_SESSION_TTL": "session_ttl_seconds",
    "RETA_MAX_UPLOAD": "max_upload_bytes",
    "RETA_UI_DIR": "ui_dir",
}

_INT_FIELDS = ("session_ttl_seconds", "max_upload_bytes")


@dataclass
class ServiceConfig:
    data_dir: str = "./data"
    listen: str = "127.0.0.1:8000"
    admin_token: Optional[str] = None
    session_ttl_seconds: int = 86400
    max_upload_bytes: int = 8 * 1024 * 1024
    ui_dir: Optional[str] = None

    @property
    def host(self) -> str:
        return self.listen.rsplit(":", 1)[0] if ":" in self.listen else self.listen

    @property
    def port(self) -> int:
        return int(self.listen.rsplit(":", 1)[1]) if ":" in self.listen else 8000


def load_config(config_file: Optional[str] = None, overrides: Optional[dict] = None,
                env: Optional[dict] = None) -> ServiceConfig:
    """Assemble configuration from defaults, environment, file and flags."""
    env = os.environ if env is None else env
    values = {}
    for key, name in _ENV_KEYS.items():
        if key in env and env[key] != "":
            values[name] = env[key]
    if config_file:
        with open(config_file, "r", encoding="utf-8") as fh:
            file_values = json.load(fh)
        known = {f.name for f in fields(ServiceConfig)}
        unknown = set(file_values) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        values.update(file_values)
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    for name in _INT_FIELDS:
        if name in values:
            values[name] = int(values[name])
    config = ServiceConfig(**values)
    Path(config.data_dir).mkdir(parents=True, exist_ok=True)
    return config
