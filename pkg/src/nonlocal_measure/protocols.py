"""Verification measurements of nonlocal variables built from teleportation.

Three protocols are simulated:

* the product-basis example (two spins, one Bell measurement by Bob, a
  z-or-x spin measurement by Alice);
* the universal two-party protocol with its cluster tree of channels;
* the three-party relay A -> B -> C -> A.

Only the channel path actually carrying the system is simulated.  Alice's
teleportations in the other clusters act on fresh singlets and are
accounted for in ``analysis.resource_count``; ``inactive_clusters`` makes
the two-party runner simulate some of them explicitly for comparison.

Alice's correction rule: she undoes every transformation she knows from
her own records and from the channel address, assumes only the most
recent teleportation towards her was undistorted, and then applies the
inverse eigenbasis.  With W the known transformation of the input, the
round-r unitary is ``V^dagger W^dagger`` and

    W_1 = I,   W_{j+1} = A_j (V^dagger W_j^dagger) D_j W_j

where D_j is the distortion learned from the address entry of round j and
A_j is Alice's own round-j teleportation frame.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .qsim import (
    ATOL,
    UP_X,
    UP_Z,
    DOWN_X,
    DOWN_Z,
    X_BASIS,
    Z_BASIS,
    LocalityError,
    NormalizationError,
    QuantumRegister,
    QubitId,
    Site,
    bits_to_index,
    draw_outcome,
)
from .records import (
    MeasurementResult,
    ProtocolConfig,
    Record,
    Status,
    Transcript,
    TranscriptError,
)
from .teleport import (
    BellOutcome,
    PauliFrame,
    PauliOp,
    TeleportChannel,
    compose_frames,
    open_channel,
    outcome_index,
    outcomes_from_index,
    pauli_of,
    teleport_system,
)
from .variables import NonlocalVariable, eq1_variable

A, B, C = Site.A, Site.B, Site.C


def _as_state(state, dim: int) -> np.ndarray:
    state = np.asarray(state, dtype=complex).reshape(-1)
    if state.size != dim:
        raise ValueError(f"state of length {state.size}, expected {dim}")
    nrm = np.vdot(state, state).real
    if abs(nrm - 1) > ATOL:
        raise NormalizationError(f"input state has squared norm {nrm!r}")
    return state


# -- product-basis example ---------------------------------------------------

@dataclass
class ProductBasisRun:
    transcripts: dict[Site, Transcript]
    label: int  # 1..4, index of the eigenstate in eq1_variable
    post_state: np.ndarray  # collapsed state of Alice's spin (x) the teleported spin


def decode_product_basis(bob_outcome: BellOutcome, alice_z_bit: int, alice_cond_bit: int) -> int:
    """Eigenstate label (1..4) from Bob's Bell outcome and Alice's two bits.

    Alice's z bit picks {1, 2} (up) or {3, 4} (down).  The conditional bit
    is undone for Bob's distortion: X and Y flip the z line, Z and Y flip
    the x line.
    """
    p = pauli_of(bob_outcome)
    if alice_z_bit == 0:
        return 1 + (alice_cond_bit ^ int(p.flips_z))
    return 3 + (alice_cond_bit ^ int(p.flips_x))


def product_basis_protocol_on(reg: QuantumRegister, alice_qubit: QubitId, bob_qubit: QubitId,
                              channel: TeleportChannel | None, rng,
                              force: BellOutcome | None = None) -> ProductBasisRun:
    """Run the product-basis measurement on qubits already in ``reg``.

    ``channel`` is a prepared B -> A singlet channel of capacity one.
    """
    if channel is None:
        raise ValueError("the product-basis protocol needs a prepared B -> A channel")
    alice, bob = Transcript(A), Transcript(B)
    (o,) = teleport_system(reg, [bob_qubit], channel, rng, force=None if force is None else [force])
    bob.add(Record(B, 1, "bell", (), (o,), dest=A))

    a = reg.measure_z(alice_qubit, rng)
    alice.add(Record(A, 1, "spin", ("own",), bits=(a,), basis="z"))
    basis = "z" if a == 0 else "x"
    c = reg.measure([channel.remote[0]], Z_BASIS if basis == "z" else X_BASIS, rng)
    alice.add(Record(A, 1, "spin", ("teleported",), bits=(c,), basis=basis))

    own = (UP_Z, DOWN_Z)[a]
    carrier = (UP_Z, DOWN_Z)[c] if basis == "z" else (UP_X, DOWN_X)[c]
    return ProductBasisRun({A: alice, B: bob}, decode_product_basis(o, a, c), np.kron(own, carrier))


def run_product_basis_protocol(state, rng, force: BellOutcome | None = None) -> ProductBasisRun:
    """Prepare ``state`` on a spin at A and a spin at B, then run the example."""
    state = _as_state(state, 4)
    reg = QuantumRegister()
    qa, qb = reg.allocate_state([A, B], state)
    channel = open_channel(reg, B, A, 1)
    return product_basis_protocol_on(reg, qa, qb, channel, rng, force=force)


# -- Alice's corrections -----------------------------------------------------

def _nearest_unitary(m: np.ndarray) -> np.ndarray:
    # W enters its own update twice, so unchecked rounding doubles every round
    u, _, vh = np.linalg.svd(m)
    return u @ vh


def _correction(w: np.ndarray, vdag: np.ndarray) -> np.ndarray:
    return _nearest_unitary(vdag @ w.conj().T)


def _advance(w: np.ndarray, vdag: np.ndarray, distortion: np.ndarray, alice_frame: np.ndarray) -> np.ndarray:
    return alice_frame @ _correction(w, vdag) @ distortion @ w


def correction_from_frames(eigenbasis: np.ndarray, distortions: Sequence[PauliFrame],
                           alice_frames: Sequence[PauliFrame]) -> np.ndarray:
    """Alice's unitary after the given known distortions and her own frames."""
    if len(distortions) != len(alice_frames):
        raise ValueError(
            f"inconsistent history: {len(distortions)} address entries, {len(alice_frames)} Alice records"
        )
    vdag = np.asarray(eigenbasis).conj().T
    w = np.eye(vdag.shape[0], dtype=complex)
    for d, a in zip(distortions, alice_frames):
        w = _advance(w, vdag, d.matrix(), a.matrix())
    return _correction(w, vdag)


def _two_party_sizes(variable: NonlocalVariable) -> tuple[int, int]:
    if set(variable.partition) != {A, B}:
        raise ValueError(f"two-party protocol needs a variable over sites A and B, got {variable.partition}")
    return variable.partition[A], variable.partition[B]


def _two_party_distortion(k_a: int, k_b: int, depth: int, entry: int) -> PauliFrame:
    if depth == 0:
        return PauliFrame.identity(k_a) + PauliFrame.from_outcomes(outcomes_from_index(entry, k_b))
    return PauliFrame.from_outcomes(outcomes_from_index(entry, k_a + k_b))


def alice_round_correction(variable: NonlocalVariable, round_number: int, address: Sequence[int],
                           alice_history: Sequence[Sequence[BellOutcome]]) -> np.ndarray:
    """The unitary Alice applies in the cluster at ``address`` in a given round.

    ``address`` is (n, m1, ...) of length ``round_number - 1``; entry j is
    known to Alice because it selects the channel the system arrives in.
    ``alice_history[j]`` are her own Bell outcomes from round j + 1 on this
    path.  Acts on her K_A system qubits followed by the K_B teleported ones.
    """
    if round_number < 1:
        raise ValueError(f"round_number must be >= 1, got {round_number}")
    if len(address) != round_number - 1 or len(alice_history) != round_number - 1:
        raise ValueError(
            f"inconsistent history for round {round_number}: address of length {len(address)}, "
            f"{len(alice_history)} Alice records"
        )
    k_a, k_b = _two_party_sizes(variable)
    distortions = [_two_party_distortion(k_a, k_b, j, e) for j, e in enumerate(address)]
    frames = [PauliFrame.from_outcomes(h) for h in alice_history]
    return correction_from_frames(variable.eigenbasis, distortions, frames)


class _AliceKnowledge:
    """Incremental form of ``correction_from_frames`` along one channel path."""

    def __init__(self, eigenbasis: np.ndarray):
        self.vdag = np.asarray(eigenbasis).conj().T
        self.w = np.eye(self.vdag.shape[0], dtype=complex)

    def correction(self) -> np.ndarray:
        return _correction(self.w, self.vdag)

    def advance(self, distortion: PauliFrame, alice_frame: PauliFrame) -> None:
        self.w = _advance(self.w, self.vdag, distortion.matrix(), alice_frame.matrix())


# -- classical merge ---------------------------------------------------------

def _flip(bits: Sequence[int], *frames: PauliFrame) -> tuple[int, ...]:
    out = list(bits)
    for f in frames:
        if len(f) != len(out):
            raise TranscriptError("Pauli frame and measured bits differ in length")
        out = [b ^ x for b, x in zip(out, f.x_bits)]
    return tuple(out)


def _contiguous(rounds: Sequence[int], last: int, who: str) -> None:
    if list(rounds)[:last] != list(range(1, last + 1)):
        raise TranscriptError(f"{who}'s transcript has round tags {list(rounds)}, expected 1..{last} without gaps")


def _single(records: list[Record], what: str) -> Record:
    if len(records) != 1:
        raise TranscriptError(f"expected exactly one {what}, found {len(records)}")
    return records[0]


def _decode_product_basis(transcripts: Mapping[Site, Transcript]) -> int:
    bob = _single(transcripts[B].records("bell"), "Bell record from Bob")
    spins = {r.address: r for r in transcripts[A].records("spin")}
    try:
        own, tele = spins[("own",)], spins[("teleported",)]
    except KeyError:
        raise TranscriptError("Alice's transcript lacks one of her two spin records") from None
    if own.round != bob.round or tele.round != bob.round:
        raise TranscriptError("round tags of Alice and Bob disagree")
    expected_basis = "z" if own.bits[0] == 0 else "x"
    if own.basis != "z" or tele.basis != expected_basis:
        raise TranscriptError("Alice's measurement bases do not follow the protocol")
    return decode_product_basis(bob.outcomes[0], own.bits[0], tele.bits[0]) - 1


def _decode_two_party(alice: Transcript, bob: Transcript) -> int:
    final = _single(bob.records("z"), "final z record from Bob")
    last = final.round
    bells = bob.records("bell")
    _contiguous([r.round for r in bells], last, "Bob")
    if len(bells) != last:
        raise TranscriptError("Bob's transcript continues after his final measurement")
    path: tuple[int, ...] = ()
    for rec in bells:
        if rec.address != path:
            raise TranscriptError(f"Bob's round {rec.round} used channel {rec.address}, expected {path}")
        path += (outcome_index(rec.outcomes),)
    if path[-1] != 1:
        raise TranscriptError("Bob measured after a distorted teleportation")
    if final.address != path[:-1]:
        raise TranscriptError(f"final measurement at channel {final.address}, expected {path[:-1]}")
    _contiguous(alice.rounds, last, "Alice")
    here = [r for r in alice.records("bell", round=last) if r.address == final.address]
    alice_rec = _single(here, f"Alice record for channel {final.address} in round {last}")
    return bits_to_index(_flip(final.bits, PauliFrame.from_outcomes(alice_rec.outcomes)))


def _decode_three_party(alice: Transcript, bob: Transcript, carol: Transcript) -> int:
    final = _single(carol.records("z"), "final z record from Carol")
    last = final.round
    beta = [outcome_index(_single(bob.records("bell", round=1), "first Bell record from Bob").outcomes)]
    gamma = [outcome_index(_single(carol.records("bell", round=1), "first Bell record from Carol").outcomes)]
    bob_relays = bob.records("relay")
    carol_relays = carol.records("relay")
    _contiguous([r.round for r in bob_relays], last, "Bob")
    if len(carol_relays) != last - 1:
        raise TranscriptError(f"Carol relayed {len(carol_relays)} times before measuring in round {last}")
    _contiguous([r.round for r in carol_relays], last - 1, "Carol")
    addr: tuple = ()
    for j in range(1, last + 1):
        relay = bob_relays[j - 1]
        if relay.address != (addr, beta[-1]):
            raise TranscriptError(f"Bob's round {j} relay used channel {relay.address}")
        if j < last:
            addr += ((beta[-1], gamma[-1]),)
            if carol_relays[j - 1].address != addr:
                raise TranscriptError(f"Carol's round {j} relay used channel {carol_relays[j - 1].address}")
            gamma.append(outcome_index(carol_relays[j - 1].outcomes))
            beta.append(outcome_index(relay.outcomes))
    if (beta[-1], gamma[-1]) != (1, 1) or final.address != addr:
        raise TranscriptError("Carol measured in a channel that does not follow from the records")
    _contiguous(alice.rounds, last, "Alice")
    here = [r for r in alice.records("bell", round=last) if r.address == addr]
    alice_rec = _single(here, f"Alice record for channel {addr} in round {last}")
    return bits_to_index(_flip(
        final.bits,
        PauliFrame.from_outcomes(alice_rec.outcomes),
        PauliFrame.from_outcomes(bob_relays[last - 1].outcomes),
    ))


def decode_column(transcripts: Mapping[Site, Transcript]) -> int:
    """Eigenbasis column (0-based) fixed by the parties' classical records alone."""
    for site, t in transcripts.items():
        if Site(site) != t.party:
            raise TranscriptError(f"transcript of {t.party.value} filed under {Site(site).value}")
    if A not in transcripts or B not in transcripts:
        raise TranscriptError("merge needs transcripts from Alice and Bob")
    if C in transcripts:
        return _decode_three_party(transcripts[A], transcripts[B], transcripts[C])
    if transcripts[A].records("spin"):
        return _decode_product_basis(transcripts)
    return _decode_two_party(transcripts[A], transcripts[B])


def merge_records(transcripts: Mapping[Site, Transcript], variable: NonlocalVariable) -> float:
    """Combine the classical records into the measured eigenvalue."""
    col = decode_column(transcripts)
    if not 0 <= col < variable.dim:
        raise TranscriptError(f"decoded column {col} outside the eigenbasis of dimension {variable.dim}")
    return variable.eigenvalues[col]


# -- universal two-party protocol ----------------------------------------------

def _pairs(config: ProtocolConfig, simulated: int, k_a: int, k_b: int, rounds: int) -> int:
    if config.resource_accounting == "analytic":
        from .analysis import resource_count

        return resource_count(k_b, parties=2, rounds=rounds, k_alice=k_a).epr_pairs_total
    return simulated


def run_universal_two_party(variable: NonlocalVariable, state, config: ProtocolConfig, rng=None, *,
                            forced: Sequence[int] | None = None, inactive_clusters: int = 0,
                            aux_rng=None) -> tuple[MeasurementResult, dict[Site, Transcript]]:
    """Measure ``variable`` on ``state`` (A qubits first, then B).

    ``forced[r-1]`` fixes the outcome index of Bob's round-r teleportation
    (a testing hook).  ``inactive_clusters`` simulates that many round-2
    clusters that do not carry the system; their randomness comes from
    ``aux_rng`` so the active path is unaffected.
    """
    k_a, k_b = _two_party_sizes(variable)
    n_sys = k_a + k_b
    state = _as_state(state, variable.dim)
    if rng is None:
        rng = np.random.default_rng(config.seed)

    reg = QuantumRegister()
    qubits = reg.allocate_state(variable.sites, state)
    alice_sys, at_bob = qubits[:k_a], qubits[k_a:]
    alice, bob = Transcript(A), Transcript(B)
    transcripts = {A: alice, B: bob}
    knowledge = _AliceKnowledge(variable.eigenbasis)
    address: tuple[int, ...] = ()
    simulated = 0

    for r in range(1, config.max_rounds + 1):
        # Bob: Bell measurements only, nothing is sent
        chan = open_channel(reg, B, A, len(at_bob))
        simulated += chan.capacity
        force = None
        if forced is not None and r <= len(forced):
            force = outcomes_from_index(forced[r - 1], len(at_bob))
        outs = teleport_system(reg, at_bob, chan, rng, force=force)
        bob.add(Record(B, r, "bell", address, tuple(outs), dest=A))
        s = outcome_index(outs)

        # Alice: she knows the address from the channel the system sits in
        held = (list(alice_sys) if r == 1 else []) + list(chan.remote)
        reg.apply(knowledge.correction(), held)
        back = open_channel(reg, A, B, n_sys)
        simulated += back.capacity
        a_outs = teleport_system(reg, held, back, rng)
        alice.add(Record(A, r, "bell", address, tuple(a_outs), dest=B))
        at_bob = list(back.remote)

        if r == 2 and inactive_clusters:
            simulated += _simulate_inactive(reg, variable, alice, address[0], inactive_clusters,
                                            aux_rng if aux_rng is not None else rng)

        if s == 1:
            bits = tuple(reg.measure_z(q, rng) for q in at_bob)
            bob.add(Record(B, r, "z", address, bits=bits))
            col = decode_column(transcripts)
            result = MeasurementResult(
                Status.DECODED, r, _pairs(config, simulated, k_a, k_b, r),
                variable.eigenvalues[col], col,
            )
            return result, transcripts

        knowledge.advance(_two_party_distortion(k_a, k_b, r - 1, s), PauliFrame.from_outcomes(a_outs))
        address += (s,)

    R = config.max_rounds
    return MeasurementResult(Status.EXHAUSTED, R, _pairs(config, simulated, k_a, k_b, R)), transcripts


def _simulate_inactive(reg: QuantumRegister, variable: NonlocalVariable, alice: Transcript,
                       active: int, count: int, rng) -> int:
    """Alice's round-2 work on clusters Bob did not use; returns pairs consumed."""
    k_a, k_b = _two_party_sizes(variable)
    n_sys = k_a + k_b
    first = alice.records("bell", round=1)[0].outcomes
    clusters = [c for c in range(2, 4 ** k_b + 1) if c != active][:count]
    for c in clusters:
        idle = open_channel(reg, B, A, n_sys)
        reg.apply(alice_round_correction(variable, 2, (c,), [first]), idle.remote)
        back = open_channel(reg, A, B, n_sys)
        outs = teleport_system(reg, list(idle.remote), back, rng)
        alice.add(Record(A, 2, "bell", (c,), tuple(outs), dest=B))
        # Bob never touches these halves; he discards them
        for q in idle.local + back.remote:
            reg.measure_z(q, rng)
    return 2 * n_sys * len(clusters)


# -- three-party relay -------------------------------------------------------

def run_three_party(variable: NonlocalVariable, state, config: ProtocolConfig, rng=None, *,
                    forced: Sequence[tuple[int, int]] | None = None
                    ) -> tuple[MeasurementResult, dict[Site, Transcript]]:
    """Measure a variable over A, B and C by the relay A -> B -> C -> A.

    Round r: Alice corrects and teleports to Bob; Bob relays to Carol in the
    channel selected by his latest outcome; Carol measures in z if both her
    and Bob's latest outcomes were undistorted, otherwise relays back to
    Alice in the channel selected by the pair of outcomes.
    ``forced[r-1] = (beta, gamma)`` fixes the outcome indices of Bob's and
    Carol's teleportations whose distortion Alice assumes absent in round r.
    Resource counts are always those of the simulated path.
    """
    if set(variable.partition) != {A, B, C}:
        raise ValueError(f"three-party protocol needs a variable over A, B and C, got {variable.partition}")
    k_a, k_b, k_c = (variable.partition[s] for s in (A, B, C))
    n_sys = k_a + k_b + k_c
    state = _as_state(state, variable.dim)
    if rng is None:
        rng = np.random.default_rng(config.seed)

    def forced_for(r: int, who: int, size: int):
        if forced is None or r > len(forced):
            return None
        return outcomes_from_index(forced[r - 1][who], size)

    reg = QuantumRegister()
    qubits = reg.allocate_state(variable.sites, state)
    a_sys, b_sys, c_sys = qubits[:k_a], qubits[k_a:k_a + k_b], qubits[k_a + k_b:]
    alice, bob, carol = Transcript(A), Transcript(B), Transcript(C)
    transcripts = {A: alice, B: bob, C: carol}
    simulated = 0

    chan_b = open_channel(reg, B, A, k_b)
    beta_outs = teleport_system(reg, b_sys, chan_b, rng, force=forced_for(1, 0, k_b))
    bob.add(Record(B, 1, "bell", (), tuple(beta_outs), dest=A))
    chan_c = open_channel(reg, C, A, k_c)
    gamma_outs = teleport_system(reg, c_sys, chan_c, rng, force=forced_for(1, 1, k_c))
    carol.add(Record(C, 1, "bell", (), tuple(gamma_outs), dest=A))
    simulated += k_b + k_c
    held = list(a_sys) + list(chan_b.remote) + list(chan_c.remote)
    distortion = (PauliFrame.identity(k_a) + PauliFrame.from_outcomes(beta_outs)
                  + PauliFrame.from_outcomes(gamma_outs))
    beta, gamma = outcome_index(beta_outs), outcome_index(gamma_outs)

    knowledge = _AliceKnowledge(variable.eigenbasis)
    addr: tuple = ()
    for r in range(1, config.max_rounds + 1):
        reg.apply(knowledge.correction(), held)
        to_bob = open_channel(reg, A, B, n_sys)
        alpha_outs = teleport_system(reg, held, to_bob, rng)
        alice.add(Record(A, r, "bell", addr, tuple(alpha_outs), dest=B))

        to_carol = open_channel(reg, B, C, n_sys)
        relay_outs = teleport_system(reg, list(to_bob.remote), to_carol, rng,
                                     force=forced_for(r + 1, 0, n_sys))
        bob.add(Record(B, r, "relay", (addr, beta), tuple(relay_outs), dest=C))
        simulated += 2 * n_sys

        if (beta, gamma) == (1, 1):
            bits = tuple(reg.measure_z(q, rng) for q in to_carol.remote)
            carol.add(Record(C, r, "z", addr, bits=bits))
            col = decode_column(transcripts)
            return MeasurementResult(Status.DECODED, r, simulated, variable.eigenvalues[col], col), transcripts
        if r == config.max_rounds:
            break

        addr += ((beta, gamma),)
        to_alice = open_channel(reg, C, A, n_sys)
        back_outs = teleport_system(reg, list(to_carol.remote), to_alice, rng,
                                    force=forced_for(r + 1, 1, n_sys))
        carol.add(Record(C, r, "relay", addr, tuple(back_outs), dest=A))
        simulated += n_sys
        held = list(to_alice.remote)

        knowledge.advance(distortion, PauliFrame.from_outcomes(alpha_outs))
        distortion = compose_frames(PauliFrame.from_outcomes(relay_outs), PauliFrame.from_outcomes(back_outs))
        beta, gamma = outcome_index(relay_outs), outcome_index(back_outs)

    return MeasurementResult(Status.EXHAUSTED, config.max_rounds, simulated), transcripts


# -- ideal von Neumann measurement (nonphysical foil) ---------------------------

def project_onto_eigenspace(variable: NonlocalVariable, reg: QuantumRegister, qubits: Sequence[QubitId],
                            rng, oracle_mode: bool = True) -> float:
    """Born-sample an eigenvalue and project ``qubits`` onto its eigenspace in place."""
    if len(qubits) != variable.n_qubits:
        raise ValueError(f"{len(qubits)} qubits for a variable on {variable.n_qubits}")
    if not oracle_mode and len({q.site for q in qubits}) > 1:
        raise LocalityError("an instantaneous projection onto a nonlocal eigenspace needs oracle_mode")
    values = variable.distinct_eigenvalues
    projectors = [variable.projector(v) for v in values]
    probs = np.array([reg.expectation(qubits, p).real for p in projectors])
    k = draw_outcome(rng, np.clip(probs, 0, None))
    reg.project(qubits, projectors[k], oracle_mode=oracle_mode)
    return values[k]


def ideal_projective_measurement(variable: NonlocalVariable, state, rng,
                                 oracle_mode: bool = True) -> tuple[float, np.ndarray]:
    """Von Neumann measurement: eigenvalue plus the post-measurement state."""
    state = _as_state(state, variable.dim)
    reg = QuantumRegister()
    qubits = reg.allocate_state(variable.sites, state)
    value = project_onto_eigenspace(variable, reg, qubits, rng, oracle_mode=oracle_mode)
    return value, reg.statevector(qubits)


__all__ = [
    "ProductBasisRun",
    "alice_round_correction",
    "correction_from_frames",
    "decode_column",
    "decode_product_basis",
    "eq1_variable",
    "ideal_projective_measurement",
    "merge_records",
    "product_basis_protocol_on",
    "project_onto_eigenspace",
    "run_product_basis_protocol",
    "run_three_party",
    "run_universal_two_party",
]
