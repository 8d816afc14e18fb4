"""JSONL file handling and run manifests.

All batch interfaces are JSONL: append-friendly, streamable, and easy to
diff. Schema problems surface as :class:`JsonlError` with the offending
line number so a bad annotation file points at its own defect.
"""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator, TextIO, TypeVar

from . import __version__

T = TypeVar("T")


class JsonlError(ValueError):
    """A line that is not valid JSON or does not match the expected schema."""

    def __init__(self, path: str, line_no: int, message: str):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = path
        self.line_no = line_no


class JoinError(ValueError):
    """Predictions and annotations share no sample ids."""


def iter_jsonl(path: str | Path, parse: Callable[[dict], T]) -> Iterator[T]:
    """Yield one parsed record per non-blank line, with line-numbered errors."""
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as e:
                raise JsonlError(str(path), line_no, f"invalid JSON: {e.msg}") from None
            try:
                yield parse(doc)
            except ValueError as e:
                raise JsonlError(str(path), line_no, str(e)) from None


def read_jsonl(path: str | Path, parse: Callable[[dict], T]) -> list[T]:
    return list(iter_jsonl(path, parse))


def write_jsonl(path: str | Path, docs: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc in docs:
            f.write(json.dumps(doc, ensure_ascii=False) + "\n")


def dump_jsonl_line(doc: dict, out: TextIO = sys.stdout) -> None:
    out.write(json.dumps(doc, ensure_ascii=False) + "\n")
    out.flush()


@dataclass(frozen=True)
class RunManifest:
    """Provenance record emitted next to every command's outputs."""

    command: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    config: dict
    seed: int | None
    version: str = __version__

    def to_dict(self) -> dict:
        config_digest = hashlib.sha256(
            json.dumps(self.config, sort_keys=True).encode("utf-8")).hexdigest()
        return {
            "command": self.command,
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "config": self.config,
            "config_digest": config_digest,
            "seed": self.seed,
            "version": self.version,
        }

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
