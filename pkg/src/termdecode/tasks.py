"""Sentence tasks and JSON Lines I/O."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from termdecode.acceptor import ConstraintSpec


class RecordError(ValueError):
    """A JSONL record that cannot be used; carries its line number and id."""

    def __init__(self, message: str, line: int, record_id: str | None = None, parse: bool = False):
        where = f"line {line}" + (f" (record {record_id})" if record_id is not None else "")
        super().__init__(f"{where}: {message}")
        self.line = line
        self.record_id = record_id
        self.parse = parse


@dataclass(frozen=True)
class SentenceTask:
    id: str
    source: tuple[str, ...]
    constraints: tuple[ConstraintSpec, ...] = ()
    reference: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        for c in self.constraints:
            if c.span is not None:
                c.span.check(len(self.source))

    def to_json(self) -> dict:
        out = {"id": self.id, "source": list(self.source), "constraints": [c.to_json() for c in self.constraints]}
        if self.reference is not None:
            out["reference"] = list(self.reference)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> SentenceTask:
        ref = obj.get("reference")
        return cls(
            str(obj["id"]),
            tuple(obj["source"]),
            tuple(ConstraintSpec.from_json(c) for c in obj.get("constraints", [])),
            tuple(ref) if ref is not None else None,
        )

    def with_constraints(self, constraints) -> SentenceTask:
        return SentenceTask(self.id, self.source, tuple(constraints), self.reference)


def iter_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield ``(line number, record)``; malformed JSON raises a parse :class:`RecordError`."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(f"malformed JSON: {exc.msg}", lineno, parse=True) from None
            if not isinstance(record, dict):
                raise RecordError("record is not a JSON object", lineno, parse=True)
            yield lineno, record


def read_tasks(path: str | Path) -> list[SentenceTask]:
    tasks = []
    for lineno, record in iter_jsonl(path):
        try:
            tasks.append(SentenceTask.from_json(record))
        except (KeyError, TypeError) as exc:
            raise RecordError(f"missing or bad field {exc}", lineno, record.get("id"), parse=True) from None
        except ValueError as exc:
            raise RecordError(str(exc), lineno, record.get("id")) from None
    return tasks


def write_jsonl(path: str | Path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, ensure_ascii=False) + "\n")
