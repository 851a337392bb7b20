"""Generation records and their JSON-lines persistence.

One record per oracle evaluation the engine performed, in order. The log is
the single source of truth for metrics: every field a report needs (scores,
provenance, cycle, whether the call was charged or served from cache, and
the vocabulary size at the time) lives on the record, so a report can be
recomputed from the file alone, byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator, TextIO

from geam.errors import ConfigError
from geam.oracles import OracleResult

PROVENANCES = ("sac", "ga", "prefill")


@dataclass(frozen=True)
class GenerationRecord:
    ordinal: int       # 1-based, strictly increasing across the run
    cycle: int         # generation cycle index; prefill is cycle 0
    provenance: str    # one of PROVENANCES
    smiles: str
    canonical: str
    y: float
    components: tuple[tuple[str, float, float], ...]  # (name, raw, normalized)
    charged: bool
    vocab_size: int

    def component_raw(self, name: str) -> float:
        for n, raw, _ in self.components:
            if n == name:
                return raw
        raise KeyError(name)

    def to_json(self) -> str:
        doc = {
            "ordinal": self.ordinal,
            "cycle": self.cycle,
            "provenance": self.provenance,
            "smiles": self.smiles,
            "canonical": self.canonical,
            "y": self.y,
            "components": {
                name: {"raw": raw, "value": value}
                for name, raw, value in self.components
            },
            "charged": self.charged,
            "vocab_size": self.vocab_size,
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "GenerationRecord":
        doc = json.loads(line)
        if doc["provenance"] not in PROVENANCES:
            raise ConfigError(f"unknown provenance {doc['provenance']!r}")
        components = tuple(
            (name, float(part["raw"]), float(part["value"]))
            for name, part in sorted(doc["components"].items())
        )
        return cls(
            ordinal=int(doc["ordinal"]),
            cycle=int(doc["cycle"]),
            provenance=doc["provenance"],
            smiles=doc["smiles"],
            canonical=doc["canonical"],
            y=float(doc["y"]),
            components=components,
            charged=bool(doc["charged"]),
            vocab_size=int(doc["vocab_size"]),
        )


def record_from_result(
    result: OracleResult,
    smiles: str,
    ordinal: int,
    cycle: int,
    provenance: str,
    vocab_size: int,
) -> GenerationRecord:
    if provenance not in PROVENANCES:
        raise ConfigError(f"unknown provenance {provenance!r}")
    return GenerationRecord(
        ordinal=ordinal,
        cycle=cycle,
        provenance=provenance,
        smiles=smiles,
        canonical=result.smiles,
        y=result.y,
        components=result.components,
        charged=result.charged,
        vocab_size=vocab_size,
    )


class RecordWriter:
    """Incremental JSONL writer; one line per record, flushed immediately."""

    def __init__(self, stream: TextIO):
        self.stream = stream
        self.count = 0

    def write(self, record: GenerationRecord) -> None:
        self.stream.write(record.to_json() + "\n")
        self.stream.flush()
        self.count += 1


def write_records(path: str, records: Iterable[GenerationRecord]) -> None:
    with open(path, "w") as fh:
        writer = RecordWriter(fh)
        for record in records:
            writer.write(record)


def read_records(path: str) -> list[GenerationRecord]:
    return list(iter_records(path))


def iter_records(path: str) -> Iterator[GenerationRecord]:
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield GenerationRecord.from_json(line)
