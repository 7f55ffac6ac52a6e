"""Shared vocabulary: categories, verdicts, timestamps, seeding and (de)structuring helpers."""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import types
import typing
from datetime import datetime, timezone
from typing import Any, Union


class Category(str, enum.Enum):
    BRUTE_FORCE = "brute_force"
    UNAUTHORIZED_ACCESS = "unauthorized_access"
    MISCONFIGURATION = "misconfiguration"
    MALICIOUS_FILE_EXECUTION = "malicious_file_execution"

    def __str__(self) -> str:
        return self.value


# Table ordering used in every rendered summary.
CATEGORY_ORDER = (
    Category.BRUTE_FORCE,
    Category.UNAUTHORIZED_ACCESS,
    Category.MISCONFIGURATION,
    Category.MALICIOUS_FILE_EXECUTION,
)

CATEGORY_LABELS = {
    Category.BRUTE_FORCE: "Brute Force",
    Category.UNAUTHORIZED_ACCESS: "Unauthorized Access",
    Category.MISCONFIGURATION: "Misconfiguration",
    Category.MALICIOUS_FILE_EXECUTION: "Malicious File Execution",
}


class Verdict(str, enum.Enum):
    TP = "TP"
    FP = "FP"

    def __str__(self) -> str:
        return self.value


class IrsimError(Exception):
    """Base class for errors raised by this package."""


class SpecError(IrsimError, ValueError):
    """A specification document is invalid; ``field`` names the offending part."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


# --- timestamps ------------------------------------------------------------
# Simulated time is an integer count of milliseconds since the Unix epoch (UTC).

MS_PER_SECOND = 1000
MS_PER_MINUTE = 60 * MS_PER_SECOND
MS_PER_HOUR = 60 * MS_PER_MINUTE
MS_PER_DAY = 24 * MS_PER_HOUR


def format_ts(ms: int) -> str:
    """Render milliseconds as RFC 3339 with millisecond precision, e.g. ``2025-03-01T10:00:00.000Z``."""
    dt = datetime.fromtimestamp(ms // 1000, tz=timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S") + f".{ms % 1000:03d}Z"


def parse_ts(text: str) -> int:
    if not isinstance(text, str) or not text.endswith("Z") or len(text) != 24:
        raise ValueError(f"not an RFC 3339 millisecond UTC timestamp: {text!r}")
    dt = datetime.strptime(text[:19], "%Y-%m-%dT%H:%M:%S").replace(tzinfo=timezone.utc)
    if text[19] != ".":
        raise ValueError(f"not an RFC 3339 millisecond UTC timestamp: {text!r}")
    return int(dt.timestamp()) * 1000 + int(text[20:23])


def day_of(ms: int) -> str:
    return format_ts(ms)[:10]


# --- seeding ---------------------------------------------------------------

SEED_MASK = (1 << 64) - 1


def derive_seed(base: int, *labels: object) -> int:
    """Stable 64-bit child seed from a base seed and any labels (case ids, purposes)."""
    h = hashlib.sha256(str(base & SEED_MASK).encode())
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode())
    return int.from_bytes(h.digest()[:8], "big")


# --- structuring -----------------------------------------------------------


def unstructure(obj: Any) -> Any:
    """Convert dataclasses/enums/tuples into plain JSON-ready values, keeping field order."""
    if hasattr(obj, "to_json_value"):
        return obj.to_json_value()
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: unstructure(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, enum.Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): unstructure(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [unstructure(v) for v in obj]
    return obj


def structure(cls: Any, data: Any) -> Any:
    """Inverse of :func:`unstructure` driven by the type hints of ``cls``."""
    origin = typing.get_origin(cls)
    if cls is Any:
        return data
    if origin in (Union, types.UnionType):
        args = typing.get_args(cls)
        if data is None and type(None) in args:
            return None
        non_none = [a for a in args if a is not type(None)]
        if len(non_none) == 1:
            return structure(non_none[0], data)
        for arg in non_none:
            try:
                return structure(arg, data)
            except (TypeError, ValueError, KeyError):
                continue
        raise TypeError(f"cannot structure {data!r} as {cls}")
    if origin in (list, typing.List):
        (arg,) = typing.get_args(cls) or (Any,)
        if not isinstance(data, list):
            raise TypeError(f"expected list, got {type(data).__name__}")
        return [structure(arg, v) for v in data]
    if origin in (tuple, typing.Tuple):
        args = typing.get_args(cls)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(structure(args[0], v) for v in data)
        return tuple(structure(a, v) for a, v in zip(args, data))
    if origin in (dict, typing.Dict):
        kt, vt = typing.get_args(cls) or (Any, Any)
        if not isinstance(data, dict):
            raise TypeError(f"expected object, got {type(data).__name__}")
        return {structure(kt, k): structure(vt, v) for k, v in data.items()}
    if isinstance(cls, type) and issubclass(cls, enum.Enum):
        return cls(data)
    if isinstance(cls, type) and hasattr(cls, "from_json_value"):
        return cls.from_json_value(data)
    if dataclasses.is_dataclass(cls):
        if not isinstance(data, dict):
            raise TypeError(f"expected object for {cls.__name__}, got {type(data).__name__}")
        hints = typing.get_type_hints(cls)
        kwargs = {}
        for f in dataclasses.fields(cls):
            if f.name in data:
                kwargs[f.name] = structure(hints[f.name], data[f.name])
            elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
                raise KeyError(f"{cls.__name__}.{f.name} is required")
        unknown = set(data) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise KeyError(f"{cls.__name__}: unknown fields {sorted(unknown)}")
        return cls(**kwargs)
    if cls is float and isinstance(data, int) and not isinstance(data, bool):
        return float(data)
    if isinstance(cls, type) and cls is not object and not isinstance(data, cls):
        raise TypeError(f"expected {cls.__name__}, got {type(data).__name__}")
    return data
