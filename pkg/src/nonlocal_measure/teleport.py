"""Bell measurements, single-use teleportation channels and Pauli frames.

Teleportation here means only the sender's Bell measurement against a
shared singlet.  Nothing is sent: the receiver's qubit holds the input up
to the Pauli ``pauli_of(outcome)``, with the table

    PsiMinus -> I   PsiPlus -> Z   PhiMinus -> X   PhiPlus -> Y

Outcome digits follow the same order (PsiMinus=0 ... PhiPlus=3).  A list
of outcomes is encoded most-significant digit first, plus one, so the
all-singlet list is index 1.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Iterator, Sequence

import numpy as np

from .qsim import (
    PAULI_X,
    PAULI_Y,
    PAULI_Z,
    LocalityError,
    QuantumRegister,
    QubitId,
    SimulationError,
    Site,
)


class BellOutcome(IntEnum):
    PSI_MINUS = 0
    PSI_PLUS = 1
    PHI_MINUS = 2
    PHI_PLUS = 3


# columns in BellOutcome order; |0> is spin up along z
BELL_BASIS = np.array(
    [
        [0, 0, 1, 1],
        [1, 1, 0, 0],
        [-1, 1, 0, 0],
        [0, 0, -1, 1],
    ],
    dtype=complex,
) / np.sqrt(2)


class PauliOp(IntEnum):
    """Phase-free Pauli; the value packs (x, z) bits as x + 2z."""

    I = 0
    X = 1
    Z = 2
    Y = 3

    @property
    def flips_z(self) -> bool:
        return bool(self.value & 1)

    @property
    def flips_x(self) -> bool:
        return bool(self.value & 2)

    def __mul__(self, other: "PauliOp") -> "PauliOp":
        return PauliOp(self.value ^ other.value)

    @property
    def matrix(self) -> np.ndarray:
        return _PAULI_MATRICES[self]


_PAULI_MATRICES = {
    PauliOp.I: np.eye(2, dtype=complex),
    PauliOp.X: PAULI_X,
    PauliOp.Y: PAULI_Y,
    PauliOp.Z: PAULI_Z,
}

_OUTCOME_PAULI = {
    BellOutcome.PSI_MINUS: PauliOp.I,
    BellOutcome.PSI_PLUS: PauliOp.Z,
    BellOutcome.PHI_MINUS: PauliOp.X,
    BellOutcome.PHI_PLUS: PauliOp.Y,
}


def pauli_of(outcome: BellOutcome) -> PauliOp:
    return _OUTCOME_PAULI[BellOutcome(outcome)]


@dataclass(frozen=True)
class PauliFrame:
    """A phase-free Pauli string, one operator per tracked qubit."""

    ops: tuple[PauliOp, ...]

    def __post_init__(self):
        object.__setattr__(self, "ops", tuple(PauliOp(p) for p in self.ops))

    @classmethod
    def identity(cls, n: int) -> "PauliFrame":
        return cls((PauliOp.I,) * n)

    @classmethod
    def from_label(cls, label: str) -> "PauliFrame":
        return cls(tuple(PauliOp[c] for c in label))

    @classmethod
    def from_outcomes(cls, outcomes: Iterable[BellOutcome]) -> "PauliFrame":
        return cls(tuple(pauli_of(o) for o in outcomes))

    def __len__(self) -> int:
        return len(self.ops)

    def __str__(self) -> str:
        return "".join(p.name for p in self.ops)

    def __add__(self, other: "PauliFrame") -> "PauliFrame":
        """Concatenate (tensor product) two frames."""
        return PauliFrame(self.ops + other.ops)

    @property
    def x_bits(self) -> tuple[int, ...]:
        """Which computational-basis bits this frame flips."""
        return tuple(int(p.flips_z) for p in self.ops)

    @property
    def is_identity(self) -> bool:
        return all(p is PauliOp.I for p in self.ops)

    def matrix(self) -> np.ndarray:
        return _frame_matrix(self.ops)


@functools.lru_cache(maxsize=4096)
def _frame_matrix(ops: tuple[PauliOp, ...]) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for p in ops:
        out = np.kron(out, p.matrix)
    out.setflags(write=False)
    return out


def compose_frames(f1: PauliFrame, f2: PauliFrame) -> PauliFrame:
    if len(f1) != len(f2):
        raise ValueError(f"frame lengths differ: {len(f1)} vs {len(f2)}")
    return PauliFrame(tuple(a * b for a, b in zip(f1.ops, f2.ops)))


def apply_frame(reg: QuantumRegister, frame: PauliFrame, targets: Sequence[QubitId]) -> None:
    if len(frame) != len(targets):
        raise ValueError(f"frame of length {len(frame)} for {len(targets)} targets")
    QuantumRegister._check_local(targets, oracle_mode=False)
    for p, q in zip(frame.ops, targets):
        if p is not PauliOp.I:
            reg.apply(p.matrix, [q])


def outcome_index(outcomes: Sequence[BellOutcome]) -> int:
    if not outcomes:
        raise ValueError("cannot index an empty outcome list")
    idx = 0
    for o in outcomes:
        idx = idx * 4 + int(BellOutcome(o))
    return idx + 1


def outcomes_from_index(index: int, length: int) -> tuple[BellOutcome, ...]:
    if length < 1 or not 1 <= index <= 4 ** length:
        raise ValueError(f"index {index} out of range for {length} outcomes")
    idx = index - 1
    digits = []
    for _ in range(length):
        idx, d = divmod(idx, 4)
        digits.append(BellOutcome(d))
    return tuple(reversed(digits))


def bell_probabilities(reg: QuantumRegister, q1: QubitId, q2: QubitId) -> dict[BellOutcome, float]:
    probs = reg.probabilities([q1, q2], BELL_BASIS)
    return {o: float(probs[o]) for o in BellOutcome}


def bell_measure(reg: QuantumRegister, q1: QubitId, q2: QubitId, rng,
                 force: BellOutcome | None = None) -> BellOutcome:
    """Bell-basis measurement of two co-located qubits; both are consumed."""
    if q1.site != q2.site:
        raise LocalityError(f"Bell measurement across sites: {q1!r}, {q2!r}")
    return BellOutcome(reg.measure([q1, q2], BELL_BASIS, rng, force=force))


class ChannelReuseError(SimulationError):
    pass


@dataclass(eq=False)
class TeleportChannel:
    """Singlet pairs shared between a sender and a receiver site."""

    sender: Site
    receiver: Site
    local: tuple[QubitId, ...]
    remote: tuple[QubitId, ...]
    used: bool = field(default=False)

    @property
    def capacity(self) -> int:
        return len(self.local)


def open_channel(reg: QuantumRegister, sender: Site, receiver: Site, capacity: int) -> TeleportChannel:
    pairs = [reg.allocate_epr_pair(sender, receiver) for _ in range(capacity)]
    return TeleportChannel(
        sender, receiver, tuple(p[0] for p in pairs), tuple(p[1] for p in pairs)
    )


def teleport_system(reg: QuantumRegister, system: Sequence[QubitId], channel: TeleportChannel,
                    rng, force: Sequence[BellOutcome] | None = None) -> list[BellOutcome]:
    """Bell-measure each system qubit against one local half of ``channel``.

    Afterwards ``channel.remote[i]`` carries system qubit ``i`` distorted by
    ``pauli_of(outcomes[i])``.
    """
    if channel.used:
        raise ChannelReuseError("teleportation channel already used")
    if len(system) != channel.capacity:
        raise ValueError(f"system of {len(system)} qubits for channel of capacity {channel.capacity}")
    bad = [q for q in system if q.site != channel.sender]
    if bad:
        raise LocalityError(f"system qubits {bad} are not at the sender site {channel.sender.value}")
    if force is not None and len(force) != len(system):
        raise ValueError("forced outcome list does not match the system size")
    channel.used = True
    return [
        bell_measure(reg, q, half, rng, force=None if force is None else force[i])
        for i, (q, half) in enumerate(zip(system, channel.local))
    ]


@dataclass(frozen=True)
class ChannelAddress:
    """Position (n, m1, m2, ...) in the cluster tree of the two-party protocol.

    The empty path addresses the two first-round channels; a path of
    length j - 1 addresses a round-j cluster.
    """

    path: tuple[int, ...] = ()

    def validate(self, n_outcomes: int, m_outcomes: int) -> None:
        for i, entry in enumerate(self.path):
            hi = n_outcomes if i == 0 else m_outcomes
            if not 1 <= entry <= hi:
                raise ValueError(f"address entry {entry} at depth {i} outside 1..{hi}")

    def child(self, index: int) -> "ChannelAddress":
        return ChannelAddress(self.path + (index,))

    @property
    def round(self) -> int:
        return len(self.path) + 1


def enumerate_addresses(n_outcomes: int, m_outcomes: int, length: int,
                        live_only: bool = True) -> Iterator[ChannelAddress]:
    """All addresses of a given length; ``live_only`` drops paths through a 1.

    A path entry 1 means that teleportation was undistorted and the
    measurement ended there, so no cluster hangs below it.
    """
    if length == 0:
        yield ChannelAddress()
        return
    lo = 2 if live_only else 1
    for head in range(lo, n_outcomes + 1):
        yield from _extend((head,), m_outcomes, length - 1, lo)


def _extend(prefix, m_outcomes, remaining, lo):
    if remaining == 0:
        yield ChannelAddress(prefix)
        return
    for e in range(lo, m_outcomes + 1):
        yield from _extend(prefix + (e,), m_outcomes, remaining - 1, lo)
