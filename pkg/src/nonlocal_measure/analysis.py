"""Oracles and statistics for the protocols.

Seed splitting rule: trial ``i`` of a run seeded with ``seed`` draws from
``numpy.random.default_rng(SeedSequence(seed, spawn_key=(i,)))``.  Any
auxiliary stream for the same trial uses ``spawn_key=(i, 1)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Mapping

import numpy as np
from scipy import stats

from .protocols import (
    alice_round_correction,
    product_basis_protocol_on,
    project_onto_eigenspace,
)
from .qsim import PAULI_X, QuantumRegister, Site
from .records import MeasurementResult
from .teleport import enumerate_addresses, open_channel, teleport_system
from .variables import NonlocalVariable, eq1_variable

A, B = Site.A, Site.B

_ZERO = 1e-14


# -- distributions -----------------------------------------------------------

@dataclass(frozen=True)
class Distribution:
    """Probabilities keyed by eigenvalue."""

    probs: Mapping[float, float]

    def __getitem__(self, key: float) -> float:
        return self.probs.get(key, 0.0)

    def total(self) -> float:
        return float(sum(self.probs.values()))

    def tvd(self, other: "Distribution") -> float:
        keys = set(self.probs) | set(other.probs)
        return 0.5 * sum(abs(self[k] - other[k]) for k in keys)

    @classmethod
    def from_samples(cls, samples: Iterable[float]) -> "Distribution":
        counts: dict[float, int] = {}
        for s in samples:
            counts[s] = counts.get(s, 0) + 1
        n = sum(counts.values())
        if n == 0:
            raise ValueError("no samples")
        return cls({k: c / n for k, c in sorted(counts.items())})


def born_distribution(variable: NonlocalVariable, state) -> Distribution:
    state = np.asarray(state, dtype=complex).reshape(-1)
    if state.size != variable.dim:
        raise ValueError(f"state of length {state.size} for a variable of dimension {variable.dim}")
    amps = np.abs(variable.eigenbasis.conj().T @ state) ** 2
    out: dict[float, float] = {}
    for value, p in zip(variable.eigenvalues, amps):
        out[value] = out.get(value, 0.0) + float(p)
    return Distribution(dict(sorted(out.items())))


# -- seeded trials -----------------------------------------------------------

def trial_rng(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    key = (index,) if stream == 0 else (index, stream)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def run_trials(runner: Callable[[np.random.Generator], MeasurementResult], seed: int, trials: int
               ) -> list[MeasurementResult]:
    return [runner(trial_rng(seed, i)) for i in range(trials)]


def run_until_decoded(runner: Callable[[np.random.Generator], MeasurementResult], seed: int,
                      decoded: int, max_trials: int | None = None) -> list[MeasurementResult]:
    """Run seeded trials until ``decoded`` of them terminate with a result."""
    out = []
    n_decoded = 0
    i = 0
    while n_decoded < decoded:
        if max_trials is not None and i >= max_trials:
            raise RuntimeError(f"only {n_decoded} of {max_trials} trials decoded")
        res = runner(trial_rng(seed, i))
        out.append(res)
        n_decoded += res.decoded
        i += 1
    return out


def decoded_distribution(results: Iterable[MeasurementResult]) -> Distribution:
    return Distribution.from_samples(r.eigenvalue for r in results if r.decoded)


# -- exact branch enumeration ----------------------------------------------------

class _Script:
    """Outcome source replaying a fixed prefix of choices, then the first live option."""

    def __init__(self, prefix: tuple[int, ...]):
        self.prefix = prefix
        self.choices: list[int] = []
        self.options: list[list[int]] = []
        self.probability = 1.0

    def choose(self, probs) -> int:
        probs = np.asarray(probs, dtype=float)
        probs = probs / probs.sum()
        live = [i for i, p in enumerate(probs) if p > _ZERO]
        depth = len(self.choices)
        k = self.prefix[depth] if depth < len(self.prefix) else live[0]
        self.choices.append(k)
        self.options.append(live)
        self.probability *= probs[k]
        return k


def enumerate_branches(run: Callable[[object], object]) -> Iterator[tuple[float, object]]:
    """Yield (probability, value) for every outcome branch of ``run``.

    ``run`` receives an outcome source in place of a random generator and
    is re-executed once per branch.
    """
    stack: list[tuple[int, ...]] = [()]
    while stack:
        prefix = stack.pop()
        script = _Script(prefix)
        value = run(script)
        yield script.probability, value
        for depth in range(len(prefix), len(script.choices)):
            for alt in script.options[depth]:
                if alt != script.choices[depth]:
                    stack.append(tuple(script.choices[:depth]) + (alt,))


# -- no-signaling ------------------------------------------------------------------

BobView = Callable[[np.ndarray | None, object], tuple[tuple, np.ndarray]]


def bob_average(runner: BobView, alice_pre_operation: np.ndarray | None) -> dict[tuple, np.ndarray]:
    """Bob's state right after the protocol's local operations, averaged over branches.

    Returns one block per value of Bob's classical record, weighted by its
    probability: the block-diagonal density matrix of everything at B.
    """
    blocks: dict[tuple, np.ndarray] = {}
    for p, (key, rho) in enumerate_branches(lambda src: runner(alice_pre_operation, src)):
        blocks[key] = blocks.get(key, 0) + p * rho
    return blocks


def no_signaling_audit(runner: BobView, alice_pre_operation: np.ndarray) -> float:
    """Largest entry change in Bob's averaged state caused by Alice's local operation."""
    with_op = bob_average(runner, alice_pre_operation)
    without = bob_average(runner, None)
    dev = 0.0
    for key in set(with_op) | set(without):
        a = with_op.get(key)
        b = without.get(key)
        if a is None:
            a = np.zeros_like(b)
        if b is None:
            b = np.zeros_like(a)
        dev = max(dev, float(np.max(np.abs(a - b))))
    return dev


def _bob_state(reg: QuantumRegister) -> np.ndarray:
    return reg.reduced_density(reg.qubits_at(B))


def product_basis_view(state) -> BobView:
    def run(pre_op, source):
        reg = QuantumRegister()
        qa, qb = reg.allocate_state([A, B], state)
        channel = open_channel(reg, B, A, 1)
        if pre_op is not None:
            reg.apply(pre_op, [qa])
        rec = product_basis_protocol_on(reg, qa, qb, channel, source)
        key = tuple(r.outcomes for r in rec.transcripts[B])
        return key, _bob_state(reg)

    return run


def universal_round1_view(variable: NonlocalVariable, state) -> BobView:
    """Both first-round teleportations of the two-party protocol, nothing after."""
    k_a = variable.partition[A]

    def run(pre_op, source):
        reg = QuantumRegister()
        qubits = reg.allocate_state(variable.sites, state)
        alice_sys, bob_sys = qubits[:k_a], qubits[k_a:]
        if pre_op is not None:
            reg.apply(pre_op, alice_sys)
        chan = open_channel(reg, B, A, len(bob_sys))
        outs = teleport_system(reg, bob_sys, chan, source)
        held = list(alice_sys) + list(chan.remote)
        reg.apply(alice_round_correction(variable, 1, (), []), held)
        back = open_channel(reg, A, B, len(held))
        teleport_system(reg, held, back, source)
        return tuple(outs), _bob_state(reg)

    return run


def von_neumann_view(variable: NonlocalVariable, state) -> BobView:
    """Instantaneous ideal projection (oracle mode); Bob then holds his qubits."""

    def run(pre_op, source):
        reg = QuantumRegister()
        qubits = reg.allocate_state(variable.sites, state)
        if pre_op is not None:
            reg.apply(pre_op, [q for q in qubits if q.site == A])
        project_onto_eigenspace(variable, reg, qubits, source, oracle_mode=True)
        return (), _bob_state(reg)

    return run


def _psi1() -> np.ndarray:
    return eq1_variable().column(0)


def signaling_demo_von_neumann() -> tuple[float, float]:
    """Bob's probability of spin down after an ideal measurement, with and without Alice's flip.

    Returns ``(p_flip, p_noflip)`` computed exactly from branch-averaged
    reduced densities, starting from |up_z up_z>.
    """
    view = von_neumann_view(eq1_variable(), _psi1())
    p_flip = bob_average(view, PAULI_X)[()][1, 1].real
    p_noflip = bob_average(view, None)[()][1, 1].real
    return float(p_flip), float(p_noflip)


def signaling_demo_monte_carlo(trials: int, seed: int) -> tuple[float, float]:
    """Sampled version of ``signaling_demo_von_neumann``."""
    variable = eq1_variable()
    downs = {True: 0, False: 0}
    for flip in (True, False):
        for i in range(trials):
            rng = trial_rng(seed, i, stream=int(flip))
            reg = QuantumRegister()
            qa, qb = reg.allocate_state([A, B], _psi1())
            if flip:
                reg.apply(PAULI_X, [qa])
            project_onto_eigenspace(variable, reg, [qa, qb], rng, oracle_mode=True)
            downs[flip] += reg.measure_z(qb, rng)
    return downs[True] / trials, downs[False] / trials


# -- termination -----------------------------------------------------------------

@dataclass(frozen=True)
class TerminationLaw:
    """Round at which Bob's teleportation is first undistorted."""

    n_outcomes: int  # N = 4^K
    m_outcomes: int  # M = 4^(2K)

    @classmethod
    def for_k(cls, K: int, k_alice: int | None = None) -> "TerminationLaw":
        if K < 1:
            raise ValueError(f"K must be >= 1, got {K}")
        k_alice = K if k_alice is None else k_alice
        return cls(4 ** K, 4 ** (K + k_alice))

    def per_round(self, r: int) -> float:
        if r < 1:
            raise ValueError(f"round must be >= 1, got {r}")
        n, m = self.n_outcomes, self.m_outcomes
        if r == 1:
            return 1 / n
        return (1 - 1 / n) * (1 - 1 / m) ** (r - 2) / m

    def cumulative(self, r: int) -> float:
        if r < 1:
            raise ValueError(f"round must be >= 1, got {r}")
        return 1 - (1 - 1 / self.n_outcomes) * (1 - 1 / self.m_outcomes) ** (r - 1)


def termination_law(K: int, r: int) -> float:
    """Probability that the two-party protocol has finished by round ``r``."""
    if K < 1 or r < 1:
        raise ValueError(f"K and r must be positive, got K={K}, r={r}")
    return TerminationLaw.for_k(K).cumulative(r)


@dataclass
class TerminationStats:
    law: TerminationLaw
    trials: int
    max_rounds: int
    counts: dict[int, int]  # round -> decoded runs ending there
    exhausted: int
    chi2: float
    dof: int
    p_value: float
    bins: list[tuple[str, int, float]] = field(default_factory=list)  # label, observed, expected

    def frequency(self, r: int) -> float:
        return self.counts.get(r, 0) / self.trials

    def cumulative_frequency(self, r: int) -> float:
        return sum(self.counts.get(j, 0) for j in range(1, r + 1)) / self.trials


def empirical_termination(runner: Callable[[np.random.Generator], MeasurementResult], trials: int,
                          seed: int, law: TerminationLaw | None = None) -> TerminationStats:
    """Seeded Monte Carlo of the termination round with a chi-square fit to ``law``.

    Bins with expected count below 5 are pooled with their neighbours; runs
    that hit ``max_rounds`` form the last bin.
    """
    if trials < 1000:
        raise ValueError(f"need at least 1000 trials, got {trials}")
    law = TerminationLaw.for_k(1) if law is None else law
    results = run_trials(runner, seed, trials)
    max_rounds = max(r.rounds_used for r in results)
    counts: dict[int, int] = {}
    exhausted = 0
    for res in results:
        if res.decoded:
            counts[res.rounds_used] = counts.get(res.rounds_used, 0) + 1
        else:
            exhausted += 1

    cells = [(str(r), counts.get(r, 0), trials * law.per_round(r)) for r in range(1, max_rounds + 1)]
    cells.append(("exhausted", exhausted, trials * (1 - law.cumulative(max_rounds))))
    bins: list[tuple[str, int, float]] = []
    cur: list = []
    for cell in cells:
        cur.append(cell)
        if sum(c[2] for c in cur) >= 5:
            bins.append(_pool(cur))
            cur = []
    if cur:
        if bins:
            bins[-1] = _pool([bins[-1]] + cur)
        else:
            bins.append(_pool(cur))
    obs = np.array([b[1] for b in bins], dtype=float)
    exp = np.array([b[2] for b in bins], dtype=float)
    if len(bins) > 1:
        chi2, p = stats.chisquare(obs, exp * obs.sum() / exp.sum())
    else:
        chi2, p = 0.0, 1.0
    return TerminationStats(law, trials, max_rounds, dict(sorted(counts.items())), exhausted,
                            float(chi2), len(bins) - 1, float(p), bins)


def _pool(cells):
    labels = [c[0] for c in cells]
    label = labels[0] if len(labels) == 1 else f"{labels[0]}..{labels[-1]}"
    return label, sum(c[1] for c in cells), sum(c[2] for c in cells)


# -- resources ---------------------------------------------------------------------

@dataclass(frozen=True)
class ResourceBudget:
    rounds: int
    epr_pairs_total: int
    channels_per_round: tuple[int, ...]
    clusters_per_round: tuple[int, ...]
    pairs_per_round: tuple[int, ...]


def resource_count(K: int, parties: int = 2, rounds: int = 1, k_alice: int | None = None) -> ResourceBudget:
    """EPR pairs Alice and Bob must share to run ``rounds`` rounds.

    Round 1 has one B -> A channel of K pairs and one A -> B channel of 2K.
    Round j >= 2 has (N-1)(M-1)^(j-2) clusters, each with a B -> A and an
    A -> B channel of 2K pairs.  Alice teleports in every cluster, so all
    of them count.
    """
    if parties != 2:
        raise ValueError("resource counts are defined for the two-party protocol only")
    if rounds < 1 or K < 1:
        raise ValueError(f"K and rounds must be positive, got K={K}, rounds={rounds}")
    k_alice = K if k_alice is None else k_alice
    n, m = 4 ** K, 4 ** (K + k_alice)
    size = K + k_alice
    clusters = [1] + [(n - 1) * (m - 1) ** (j - 2) for j in range(2, rounds + 1)]
    pairs = [K + size] + [c * 2 * size for c in clusters[1:]]
    return ResourceBudget(
        rounds=rounds,
        epr_pairs_total=sum(pairs),
        channels_per_round=tuple(2 * c for c in clusters),
        clusters_per_round=tuple(clusters),
        pairs_per_round=tuple(pairs),
    )


def enumerated_clusters(K: int, rounds: int) -> list[int]:
    """Cluster counts per round obtained by listing live channel addresses."""
    n, m = 4 ** K, 4 ** (2 * K)
    return [sum(1 for _ in enumerate_addresses(n, m, j - 1)) for j in range(1, rounds + 1)]
