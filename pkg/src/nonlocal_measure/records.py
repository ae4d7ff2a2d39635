"""Classical records kept by each party, and the outcome of a protocol run."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator

from .qsim import Site
from .teleport import BellOutcome


class TranscriptError(ValueError):
    """Transcripts that cannot be merged (gaps, wrong party, address mismatch)."""


@dataclass(frozen=True)
class Record:
    """One classical fact written down by a party during a round.

    kind is ``"bell"`` (outcomes of a teleportation to ``dest`` through the
    channel at ``address``), ``"z"`` (final spin-z bits of the system found
    in the channel at ``address``) or ``"spin"`` (a single spin measurement
    in ``basis``).
    """

    party: Site
    round: int
    kind: str
    address: tuple = ()
    outcomes: tuple[BellOutcome, ...] = ()
    bits: tuple[int, ...] = ()
    dest: Site | None = None
    basis: str | None = None


class Transcript:
    """Append-only list of one party's records."""

    def __init__(self, party: Site):
        self.party = Site(party)
        self._records: list[Record] = []

    def __repr__(self) -> str:
        return f"Transcript({self.party.value}, {len(self._records)} records)"

    def __iter__(self) -> Iterator[Record]:
        return iter(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def add(self, record: Record) -> Record:
        if record.party != self.party:
            raise TranscriptError(f"{record.party.value} record added to {self.party.value}'s transcript")
        if record.round < 1:
            raise TranscriptError(f"round tags start at 1, got {record.round}")
        self._records.append(record)
        return record

    def records(self, kind: str | None = None, round: int | None = None) -> list[Record]:
        return [
            r for r in self._records
            if (kind is None or r.kind == kind) and (round is None or r.round == round)
        ]

    @property
    def rounds(self) -> list[int]:
        return sorted({r.round for r in self._records})


class Status(str, Enum):
    DECODED = "decoded"
    EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class MeasurementResult:
    status: Status
    rounds_used: int
    epr_pairs_consumed: int
    eigenvalue: float | None = None
    eigenstate_label: int | None = None  # eigenbasis column, 0-based

    @property
    def decoded(self) -> bool:
        return self.status is Status.DECODED


@dataclass(frozen=True)
class ProtocolConfig:
    max_rounds: int = 50
    seed: int = 0
    resource_accounting: str = "analytic"  # or "simulated-active-path"

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if self.resource_accounting not in ("analytic", "simulated-active-path"):
            raise ValueError(f"unknown resource accounting {self.resource_accounting!r}")

