"""Hash-chained provenance events and the append-only event log.

Each event seals kind, payload, sequence number, and timestamp under a
chain hash: H(prev_hash_bytes + canonical_body). Any single-bit change
to a sealed event breaks verification from that point on. Payloads are
scanned for credential patterns before sealing; a hit rejects the event.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .canonical import (ZERO_HASH, canonical_bytes, chain_hash,
                        ensure_no_credentials, parse_canonical)

EVENT_KINDS = (
    "state_created",
    "user_message",
    "agent_message",
    "tool_call",
    "tool_result",
    "gate_check",
    "authorization_requested",
    "authorization_resolved",
    "intervention",
    "stage_transition",
    "retrieval",
    "cif_patch",
    "run_completed",
)


class EventError(ValueError):
    """Event construction or kind validation failed."""


class ChainError(ValueError):
    """Sequence or hash-chain verification failed."""


@dataclass(frozen=True)
class ProvenanceEvent:
    seq: int
    ts: float
    kind: str
    payload: dict
    prev_hash: str
    hash: str

    def body_bytes(self) -> bytes:
        return canonical_bytes({
            "kind": self.kind, "payload": self.payload,
            "seq": self.seq, "ts": self.ts})

    def to_line(self) -> bytes:
        return canonical_bytes({
            "hash": self.hash, "kind": self.kind, "payload": self.payload,
            "prev_hash": self.prev_hash, "seq": self.seq, "ts": self.ts})


def seal_event(seq: int, ts: float, kind: str, payload: dict,
               prev_hash: str) -> ProvenanceEvent:
    if kind not in EVENT_KINDS:
        raise EventError(f"unknown event kind {kind!r}")
    if seq < 0:
        raise EventError(f"negative sequence number {seq}")
    ensure_no_credentials(payload)
    body = canonical_bytes({"kind": kind, "payload": payload,
                            "seq": seq, "ts": ts})
    return ProvenanceEvent(seq=seq, ts=ts, kind=kind, payload=payload,
                           prev_hash=prev_hash,
                           hash=chain_hash(prev_hash, body))


def event_from_line(line: bytes) -> ProvenanceEvent:
    obj = parse_canonical(line)
    try:
        return ProvenanceEvent(
            seq=obj["seq"], ts=obj["ts"], kind=obj["kind"],
            payload=obj["payload"], prev_hash=obj["prev_hash"],
            hash=obj["hash"])
    except (KeyError, TypeError) as exc:
        raise ChainError(f"malformed event line: {exc}") from None


def verify_chain(events: list[ProvenanceEvent]) -> list[str]:
    """Return violations; an empty list means the chain is intact."""
    violations: list[str] = []
    prev = ZERO_HASH
    for i, event in enumerate(events):
        if event.seq != i:
            violations.append(
                f"seq {event.seq} at position {i}: expected {i}")
        if event.prev_hash != prev:
            violations.append(f"seq {event.seq}: prev_hash mismatch")
        expected = chain_hash(event.prev_hash, event.body_bytes())
        if event.hash != expected:
            violations.append(f"seq {event.seq}: hash mismatch")
        prev = event.hash
    return violations


class EventLog:
    """One event per line, appended atomically, chain carried in memory."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self.events: list[ProvenanceEvent] = []
        if self.path.exists():
            self.events = read_event_log(self.path)

    @property
    def tail_hash(self) -> str:
        return self.events[-1].hash if self.events else ZERO_HASH

    @property
    def next_seq(self) -> int:
        return len(self.events)

    def append(self, ts: float, kind: str, payload: dict) -> ProvenanceEvent:
        event = seal_event(self.next_seq, ts, kind, payload, self.tail_hash)
        with open(self.path, "ab") as fh:
            fh.write(event.to_line())
            fh.flush()
        self.events.append(event)
        return event

    def verify(self) -> list[str]:
        return verify_chain(self.events)


def read_event_log(path: Path) -> list[ProvenanceEvent]:
    events: list[ProvenanceEvent] = []
    data = Path(path).read_bytes()
    for line in data.split(b"\n"):
        if line.strip():
            events.append(event_from_line(line))
    return events
