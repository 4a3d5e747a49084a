"""Line-delimited trace records shared by every simulator mode and analyzer.

A trace file is one JSON header object followed by one JSON array per
record, ``[tick, channel, endpoint, txn, body]``. Keys inside ``body`` are
sorted so identical runs serialize to identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterator, NamedTuple

SCHEMA = "oaelink-trace"
SCHEMA_VERSION = 1
CHANNELS = ("wire", "fsm", "observer", "auditor", "kbp")


class TraceFormatError(ValueError):
    """Raised for unparsable traces or a header the analyzer does not speak."""


class Record(NamedTuple):
    tick: int
    channel: str
    endpoint: str  # "A", "B", or "-" for link-level records
    txn: int | None
    body: dict


def _dump(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class Trace:
    def __init__(self, header: dict | None = None, records: list[Record] | None = None):
        self.header = {"schema": SCHEMA, "version": SCHEMA_VERSION}
        if header:
            self.header.update(header)
        self.records: list[Record] = records if records is not None else []

    def add(self, tick: int, channel: str, endpoint: str, txn: int | None, **body) -> Record:
        if self.records and tick < self.records[-1].tick:
            raise ValueError(f"trace tick went backwards: {tick} < {self.records[-1].tick}")
        rec = Record(tick, channel, endpoint, txn, body)
        self.records.append(rec)
        return rec

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[Record]:
        return iter(self.records)

    def channel(self, name: str) -> list[Record]:
        return [r for r in self.records if r.channel == name]

    @property
    def end_tick(self) -> int:
        return self.header.get("end_tick", self.records[-1].tick if self.records else 0)

    def dumps(self) -> str:
        lines = [_dump(self.header)]
        lines.extend(_dump([r.tick, r.channel, r.endpoint, r.txn, r.body]) for r in self.records)
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Trace":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise TraceFormatError("empty trace")
        try:
            header = json.loads(lines[0])
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"bad header: {exc}") from None
        if not isinstance(header, dict) or header.get("schema") != SCHEMA:
            raise TraceFormatError("missing oaelink-trace header")
        trace = cls(header)
        for n, line in enumerate(lines[1:], start=2):
            try:
                tick, channel, endpoint, txn, body = json.loads(line)
            except (json.JSONDecodeError, ValueError, TypeError) as exc:
                raise TraceFormatError(f"line {n}: {exc}") from None
            if channel not in CHANNELS:
                raise TraceFormatError(f"line {n}: unknown channel {channel!r}")
            trace.records.append(Record(tick, channel, endpoint, txn, body))
        return trace

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def read(cls, path: str | Path) -> "Trace":
        return cls.loads(Path(path).read_text())


def require_version(trace: Trace) -> None:
    version = trace.header.get("version")
    if version != SCHEMA_VERSION:
        raise TraceFormatError(
            f"trace schema version {version!r} not supported (expected {SCHEMA_VERSION})"
        )
