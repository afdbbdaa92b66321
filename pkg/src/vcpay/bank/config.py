"""Bank service configuration: JSON file with environment overrides.

Environment variables win over the file, the file over built-in defaults:

=========================  =======================================
``VCPAY_PORT``             listen port
``VCPAY_DB``               SQLite database path
``VCPAY_DATA_DIR``         reconstruction image directory
``VCPAY_BATCH_THRESHOLD``  fixed settlement threshold (minor units)
``VCPAY_CAPTCHA_WINDOW``   share-generation window, seconds
``VCPAY_TOKEN_TTL``        bearer token lifetime, seconds
``VCPAY_SYNC_JOBS``        1/true: run pairing synchronously on upload
``VCPAY_CLIENTS``          JSON array of token clients
=========================  =======================================
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ValidationError


@dataclass(frozen=True)
class TokenClient:
    client_id: str
    client_secret: str
    role: str  # "Admin" | "User"
    party: str | None = None  # party identifier a User client acts for

    def __post_init__(self) -> None:
        if self.role not in ("Admin", "User"):
            raise ValidationError(f"client role must be Admin or User, got {self.role!r}")


DEFAULT_CLIENTS = (
    TokenClient("admin", "admin-secret", "Admin"),
    TokenClient("broker", "broker-secret", "User"),
)


@dataclass
class BankConfig:
    host: str = "127.0.0.1"
    port: int = 8470
    db_path: str = "vcpay-bank.sqlite3"
    data_dir: str = "vcpay-bank-data"
    captcha_window_seconds: int = 60
    #: fixed settlement threshold; None means the median policy decides
    batch_threshold: int | None = None
    #: fallback when a pair has no purchase history yet
    batch_threshold_fallback: int = 500
    batch_median_multiplier: int = 10
    token_ttl_seconds: int = 3600
    sync_jobs: bool = False
    clients: list[TokenClient] = field(default_factory=lambda: list(DEFAULT_CLIENTS))

    @classmethod
    def load(cls, path: str | Path | None = None, env: dict | None = None) -> "BankConfig":
        env = dict(os.environ if env is None else env)
        config = cls()
        if path is not None:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
            for key in (
                "host",
                "port",
                "db_path",
                "data_dir",
                "captcha_window_seconds",
                "batch_threshold",
                "batch_threshold_fallback",
                "batch_median_multiplier",
                "token_ttl_seconds",
                "sync_jobs",
            ):
                if key in data:
                    setattr(config, key, data[key])
            if "clients" in data:
                config.clients = [_client_from_json(item) for item in data["clients"]]
        if "VCPAY_PORT" in env:
            config.port = int(env["VCPAY_PORT"])
        if "VCPAY_DB" in env:
            config.db_path = env["VCPAY_DB"]
        if "VCPAY_DATA_DIR" in env:
            config.data_dir = env["VCPAY_DATA_DIR"]
        if "VCPAY_BATCH_THRESHOLD" in env:
            config.batch_threshold = int(env["VCPAY_BATCH_THRESHOLD"])
        if "VCPAY_CAPTCHA_WINDOW" in env:
            config.captcha_window_seconds = int(env["VCPAY_CAPTCHA_WINDOW"])
        if "VCPAY_TOKEN_TTL" in env:
            config.token_ttl_seconds = int(env["VCPAY_TOKEN_TTL"])
        if "VCPAY_SYNC_JOBS" in env:
            config.sync_jobs = env["VCPAY_SYNC_JOBS"].lower() in ("1", "true", "yes")
        if "VCPAY_CLIENTS" in env:
            config.clients = [
                _client_from_json(item) for item in json.loads(env["VCPAY_CLIENTS"])
            ]
        return config


def _client_from_json(item: dict) -> TokenClient:
    return TokenClient(
        client_id=item["clientId"],
        client_secret=item["clientSecret"],
        role=item["role"],
        party=item.get("party"),
    )
