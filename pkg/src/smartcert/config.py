"""Service configuration and key files.

Configuration is an INI file::

    [service]
    data_dir = ./data
    listen = 127.0.0.1:8080
    model_endpoint = http://127.0.0.1:9000
    repository = signatures.jsonl
    policy = policy.jsonl
    authority_key = authority.key

    [genesis]
    timestamp = 0
    authority = <account hex>     ; defaults to the account of authority_key

    [balances]
    <account hex> = 1000

    [sentinel]
    wallet_window = 60
    wallet_threshold = 3
    window_length = 300
    alert_threshold = 0.5
    watched_issuers = <account hex>, ...

    [ledger]
    max_block_txs = 100

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from . import crypto
from .crypto import AccountId, KeyPair
from .errors import InvalidSeed, SmartCertError
from .ledger import DEFAULT_MAX_BLOCK_TXS, GenesisConfig
from .registry import ModelEndpoint
from .sentinel import (
    DEFAULT_ALERT_THRESHOLD,
    DEFAULT_WALLET_THRESHOLD,
    DEFAULT_WALLET_WINDOW,
    DEFAULT_WINDOW_LENGTH,
)

CONFIG_ENV = "SMARTCERT_CONFIG"


class ConfigError(SmartCertError):
    code = "CONFIG_ERROR"
    http_status = 500
    default_message = "Invalid configuration."


def load_key(path) -> KeyPair:
    text = Path(path).read_text().strip()
    try:
        return crypto.keygen(bytes.fromhex(text))
    except ValueError:
        raise InvalidSeed(f"Key file {path} does not hold a 32-byte hex seed.") from None


def save_key(path, key_pair: KeyPair) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd = os.open(path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    with os.fdopen(fd, "w") as fh:
        fh.write(key_pair.secret_key.hex() + "\n")


def load_or_create_key(path) -> KeyPair:
    if Path(path).exists():
        return load_key(path)
    kp = crypto.keygen()
    save_key(path, kp)
    return kp


@dataclass
class ServiceConfig:
    data_dir: Path = Path("smartcert-data")
    listen_address: str = "127.0.0.1:8080"
    authority_account: AccountId | None = None
    authority_key_path: Path | None = None
    model_endpoint: str = ""
    repository_path: Path | None = None
    policy_path: Path | None = None
    genesis_timestamp: int = 0
    balances: dict[AccountId, int] = field(default_factory=dict)
    wallet_window: int = DEFAULT_WALLET_WINDOW
    wallet_threshold: int = DEFAULT_WALLET_THRESHOLD
    window_length: int = DEFAULT_WINDOW_LENGTH
    alert_threshold: float = DEFAULT_ALERT_THRESHOLD
    watched_issuers: list[str] = field(default_factory=list)
    max_block_txs: int = DEFAULT_MAX_BLOCK_TXS

    def validate(self) -> None:
        if self.wallet_window <= 0 or self.window_length <= 0 or self.wallet_threshold < 1:
            raise ConfigError("Window lengths and wallet threshold must be positive.")
        if not 0.0 <= self.alert_threshold <= 1.0:
            raise ConfigError("alert_threshold must be within [0, 1].")
        if self.max_block_txs < 1:
            raise ConfigError("max_block_txs must be at least 1.")
        for label, path in (("repository", self.repository_path), ("policy", self.policy_path),
                            ("authority_key", self.authority_key_path)):
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{label} path does not exist: {path}")
        host, _, port = self.listen_address.rpartition(":")
        if not host or not port.isdigit():
            raise ConfigError(f"listen address must be host:port, got {self.listen_address!r}")

    def authority_key(self) -> KeyPair | None:
        return load_key(self.authority_key_path) if self.authority_key_path else None

    def genesis(self) -> GenesisConfig:
        authority = self.authority_account
        if authority is None and self.authority_key_path is not None:
            authority = self.authority_key().account
        return GenesisConfig(self.genesis_timestamp, authority, dict(self.balances),
                             ModelEndpoint(self.model_endpoint))


def _account(text: str) -> AccountId:
    try:
        raw = bytes.fromhex(text.strip())
    except ValueError:
        raw = b""
    if len(raw) != 20:
        raise ConfigError(f"Not a 20-byte hex account id: {text!r}")
    return raw


def load_config(path) -> ServiceConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keep account hex keys as written
    parser.read(path)
    base = path.parent

    def resolve(value: str | None) -> Path | None:
        if not value:
            return None
        p = Path(value).expanduser()
        return p if p.is_absolute() else base / p

    cfg = ServiceConfig()
    try:
        svc = parser["service"] if parser.has_section("service") else {}
        cfg.data_dir = resolve(svc.get("data_dir")) or base / "smartcert-data"
        cfg.listen_address = svc.get("listen", cfg.listen_address)
        cfg.model_endpoint = svc.get("model_endpoint", "")
        cfg.repository_path = resolve(svc.get("repository"))
        cfg.policy_path = resolve(svc.get("policy"))
        cfg.authority_key_path = resolve(svc.get("authority_key"))
        if parser.has_section("genesis"):
            gen = parser["genesis"]
            cfg.genesis_timestamp = gen.getint("timestamp", 0)
            if gen.get("authority"):
                cfg.authority_account = _account(gen["authority"])
        if parser.has_section("balances"):
            cfg.balances = {_account(k): int(v) for k, v in parser["balances"].items()}
        if parser.has_section("sentinel"):
            sen = parser["sentinel"]
            cfg.wallet_window = sen.getint("wallet_window", cfg.wallet_window)
            cfg.wallet_threshold = sen.getint("wallet_threshold", cfg.wallet_threshold)
            cfg.window_length = sen.getint("window_length", cfg.window_length)
            cfg.alert_threshold = sen.getfloat("alert_threshold", cfg.alert_threshold)
            cfg.watched_issuers = [s.strip().lower() for s in sen.get("watched_issuers", "").split(",") if s.strip()]
        if parser.has_section("ledger"):
            cfg.max_block_txs = parser["ledger"].getint("max_block_txs", cfg.max_block_txs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg
