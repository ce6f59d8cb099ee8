"""Canonical serialization, hash chaining, and credential redaction.

Everything that must be byte-stable across processes funnels through
``canonical_bytes``: state snapshots, event log lines, and the chain
hash input. The encoding is key-ordered JSON, UTF-8, newline-terminated.
"""

from __future__ import annotations

import hashlib
import json
import re

ZERO_HASH = "0" * 64
HASH_ALGORITHM = "sha256"


class RedactionError(ValueError):
    """A payload contains something that looks like a credential."""


def canonical_bytes(obj) -> bytes:
    """Serialize ``obj`` to canonical key-ordered JSON bytes.

    Equal values produce equal bytes; NaN/Inf are rejected so the
    encoding stays round-trippable.
    """
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False, allow_nan=False)
    return (text + "\n").encode("utf-8")


def parse_canonical(data: bytes):
    return json.loads(data.decode("utf-8"))


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def chain_hash(prev_hash: str, body: bytes) -> str:
    """Hash of one sealed event: H(prev_hash bytes || canonical body bytes)."""
    return hashlib.sha256(bytes.fromhex(prev_hash) + body).hexdigest()


# Conservative patterns for secrets that must never enter a run log.
# Matching is on the canonical payload text, so nested values are covered.
_CREDENTIAL_PATTERNS = [
    re.compile(r"-----BEGIN [A-Z ]*PRIVATE KEY-----"),
    re.compile(r"\bssh-(?:rsa|ed25519|dss) AAAA"),
    re.compile(r"(?i)\b(?:api[_-]?key|secret[_-]?key|access[_-]?token|auth[_-]?token|password|passwd)\b\s*[=:]\s*\S+"),
    re.compile(r"\bBearer\s+[A-Za-z0-9._\-]{16,}"),
    re.compile(r"\bsk-[A-Za-z0-9]{20,}"),
]


def find_credentials(text: str) -> list[str]:
    """Return the credential-looking fragments found in ``text``."""
    hits = []
    for pat in _CREDENTIAL_PATTERNS:
        for m in pat.finditer(text):
            hits.append(m.group(0))
    return hits


def ensure_no_credentials(obj) -> None:
    """Raise :class:`RedactionError` if a payload carries credential material."""
    text = canonical_bytes(obj).decode("utf-8")
    hits = find_credentials(text)
    if hits:
        raise RedactionError(
            "payload rejected, credential-like content detected: "
            + ", ".join(repr(h[:32]) for h in hits)
        )
