"""
Utilities for logging and common operations
"""

import hashlib
import json
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import click


class Logger:
    """Simple logger with emoji support"""

    verbose: bool = False
    quiet: bool = False

    @classmethod
    def configure(cls, verbose: bool = False, quiet: bool = False) -> None:
        """Set global verbosity (driven by the CLI flags)"""
        cls.verbose = verbose
        cls.quiet = quiet

    @classmethod
    def _emit(cls, emoji: str, message: str) -> None:
        click.echo(f"{emoji} {message}", err=True)

    @classmethod
    def debug(cls, message: str, emoji: str = "🔎") -> None:
        """Print debug message (only with --verbose)"""
        if cls.verbose and not cls.quiet:
            cls._emit(emoji, message)

    @classmethod
    def info(cls, message: str, emoji: str = "💡") -> None:
        """Print info message with emoji"""
        if not cls.quiet:
            cls._emit(emoji, message)

    @classmethod
    def success(cls, message: str, emoji: str = "✅") -> None:
        """Print success message"""
        if not cls.quiet:
            cls._emit(emoji, message)

    @classmethod
    def error(cls, message: str, emoji: str = "❌") -> None:
        """Print error message"""
        cls._emit(emoji, message)

    @classmethod
    def warning(cls, message: str, emoji: str = "⚠️") -> None:
        """Print warning message"""
        cls._emit(emoji, message)

    @classmethod
    def progress(cls, message: str, emoji: str = "🔄") -> None:
        """Print progress message"""
        if not cls.quiet:
            cls._emit(emoji, message)


class JsonlWriter:
    """Append-only writer for line-delimited JSON run logs"""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        ensure_directory(str(self.path.parent))

    def write(self, kind: str, **fields: Any) -> None:
        record: Dict[str, Any] = {"kind": kind}
        record.update(fields)
        with open(self.path, "a", encoding="utf-8") as f:
            f.write(json.dumps(record, sort_keys=True, default=_json_default) + "\n")


def _json_default(value: Any) -> Any:
    # Escalares de numpy y rutas
    if hasattr(value, "item"):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Not JSON serialisable: {type(value).__name__}")


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def derive_seed(base_seed: int, *parts: Any) -> int:
    """Stable 63-bit seed from a base seed and any labels (independent of PYTHONHASHSEED)"""
    text = "|".join([str(base_seed)] + [str(p) for p in parts])
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big") >> 1


def ensure_directory(path: str) -> None:
    """Ensure directory exists, create if it doesn't"""
    os.makedirs(path, exist_ok=True)


def check_writable(path: Path, force: bool) -> None:
    """Refuse to overwrite an existing file unless forced"""
    from .core.errors import ConfigError

    if path.exists() and not force:
        raise ConfigError(f"Refusing to overwrite {path}", detail="pass --force to overwrite")


def format_number(value: Optional[float]) -> str:
    """Compact number for rule strings: 12.0 -> '12', 12.345678 -> '12.3457'"""
    if value is None:
        return ""
    return f"{value:.6g}"
