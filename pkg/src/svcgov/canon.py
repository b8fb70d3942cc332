"""Canonical serialization and content digests.

Everything that crosses a file boundary or feeds a digest goes through
``canonical_dumps``: sorted keys, minimal separators, no NaN/Inf.  Equal
values always produce byte-identical text, which is what trace
determinism and store round-trips lean on.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any


def canonical_dumps(data: Any) -> str:
    return json.dumps(
        data, sort_keys=True, separators=(",", ":"), allow_nan=False, ensure_ascii=True
    )


def sha256_hex(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def digest_of(data: Any) -> str:
    """Digest of a canonically encoded value."""
    return sha256_hex(canonical_dumps(data))
