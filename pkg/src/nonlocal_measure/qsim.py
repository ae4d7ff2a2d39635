"""Pure-state simulator for qubits tagged with the site that holds them.

Tensor convention (used by every vector that enters or leaves this module):
the amplitude vector is the C-ordered flattening of a tensor with one axis
per live qubit, in the order of ``QuantumRegister.order``.  The first qubit
is the most significant bit of the flat index, so the amplitude of
``|b0 b1 ... b(n-1)>`` sits at index ``int("b0b1...", 2)``.  A multi-qubit
unitary or basis acting on ``targets`` uses the same convention over the
listed targets.

Measured qubits are projected out and removed from the register, so the
amplitude vector always has length ``2 ** n_qubits``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

ATOL = 1e-10
MAX_QUBITS = 20

Z_BASIS = np.eye(2, dtype=complex)
X_BASIS = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)

UP_Z = np.array([1, 0], dtype=complex)
DOWN_Z = np.array([0, 1], dtype=complex)
UP_X = X_BASIS[:, 0].copy()
DOWN_X = X_BASIS[:, 1].copy()

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)
HADAMARD = X_BASIS


class SimulationError(Exception):
    """Base class for register misuse."""


class LocalityError(SimulationError):
    """An operation touched qubits held at more than one site."""


class DeadQubitError(SimulationError):
    """A handle refers to a qubit that was measured or never allocated here."""


class NormalizationError(SimulationError, ValueError):
    pass


class NotUnitaryError(SimulationError, ValueError):
    pass


class Site(str, Enum):
    A = "A"
    B = "B"
    C = "C"


@dataclass(frozen=True)
class QubitId:
    id: int
    site: Site

    def __repr__(self) -> str:
        return f"q{self.id}@{self.site.value}"


def check_unitary(matrix: np.ndarray, atol: float = ATOL) -> float:
    """Raise NotUnitaryError unless ``matrix`` is unitary; return the deviation."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise NotUnitaryError(f"matrix of shape {matrix.shape} is not square")
    dev = float(np.max(np.abs(matrix @ matrix.conj().T - np.eye(matrix.shape[0]))))
    if dev > atol:
        raise NotUnitaryError(
            f"matrix is not unitary: max |U U^dagger - I| = {dev:.3e} exceeds tolerance {atol:.0e}"
        )
    return dev


@dataclass(frozen=True, eq=False)
class UnitarySpec:
    """A unitary matrix bound to an ordered list of target qubits."""

    matrix: np.ndarray
    targets: tuple[QubitId, ...]

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=complex)
        object.__setattr__(self, "matrix", matrix)
        object.__setattr__(self, "targets", tuple(self.targets))
        if matrix.shape != (2 ** len(self.targets),) * 2:
            raise ValueError(
                f"matrix shape {matrix.shape} does not match {len(self.targets)} targets"
            )
        check_unitary(matrix)


def draw_outcome(rng, probs: np.ndarray) -> int:
    """Pick an index with the given probabilities.

    ``rng`` is a ``numpy.random.Generator`` or any object with a
    ``choose(probs) -> int`` method (used for exact branch enumeration).
    """
    if hasattr(rng, "choose"):
        return int(rng.choose(probs))
    cum = np.cumsum(probs)
    idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
    return min(idx, len(probs) - 1)


def fidelity(state: np.ndarray, reference: np.ndarray) -> float:
    """|<reference|state>|^2, or <reference|rho|reference> for a density matrix."""
    state = np.asarray(state, dtype=complex)
    reference = np.asarray(reference, dtype=complex).reshape(-1)
    if state.ndim == 2:
        if state.shape != (reference.size, reference.size):
            raise ValueError(f"dimension mismatch: {state.shape} vs {reference.size}")
        return float(np.real(reference.conj() @ state @ reference))
    state = state.reshape(-1)
    if state.size != reference.size:
        raise ValueError(f"dimension mismatch: {state.size} vs {reference.size}")
    return float(abs(np.vdot(reference, state)) ** 2)


class QuantumRegister:
    """Amplitudes over a dynamic set of site-tagged qubits.

    Not thread safe; one register per trial.
    """

    def __init__(self, max_qubits: int = MAX_QUBITS):
        self.max_qubits = max_qubits
        self._psi = np.ones(1, dtype=complex)
        self._order: list[QubitId] = []
        self._next_id = 0

    def __repr__(self) -> str:
        return f"QuantumRegister({self._order})"

    @property
    def order(self) -> tuple[QubitId, ...]:
        return tuple(self._order)

    @property
    def n_qubits(self) -> int:
        return len(self._order)

    @property
    def amplitudes(self) -> np.ndarray:
        return self._psi.copy()

    def norm(self) -> float:
        return float(np.real(np.vdot(self._psi, self._psi)))

    def is_live(self, q: QubitId) -> bool:
        return q in self._order

    def qubits_at(self, site: Site) -> list[QubitId]:
        return [q for q in self._order if q.site == site]

    # -- allocation -------------------------------------------------------

    def allocate_state(self, sites: Sequence[Site], state) -> list[QubitId]:
        """Append qubits at ``sites`` jointly prepared in ``state``."""
        state = np.asarray(state, dtype=complex).reshape(-1)
        if state.size != 2 ** len(sites):
            raise ValueError(f"state of length {state.size} does not fit {len(sites)} qubits")
        nrm = np.vdot(state, state).real
        if abs(nrm - 1.0) > ATOL:
            raise NormalizationError(f"input state has squared norm {nrm!r}, expected 1")
        if self.n_qubits + len(sites) > self.max_qubits:
            raise SimulationError(f"register limited to {self.max_qubits} live qubits")
        new = []
        for site in sites:
            new.append(QubitId(self._next_id, Site(site)))
            self._next_id += 1
        self._psi = np.kron(self._psi, state)
        self._order.extend(new)
        return new

    def allocate_qubit(self, site: Site, state) -> QubitId:
        (q,) = self.allocate_state([site], state)
        return q

    def allocate_epr_pair(self, site_x: Site, site_y: Site) -> tuple[QubitId, QubitId]:
        """Two qubits in the singlet (|01> - |10>)/sqrt2, first at ``site_x``."""
        singlet = np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)
        qx, qy = self.allocate_state([site_x, site_y], singlet)
        return qx, qy

    # -- helpers ----------------------------------------------------------

    def _axes(self, targets: Sequence[QubitId]) -> list[int]:
        if len(set(targets)) != len(targets):
            raise ValueError(f"repeated target in {list(targets)}")
        axes = []
        for q in targets:
            try:
                axes.append(self._order.index(q))
            except ValueError:
                raise DeadQubitError(f"{q!r} is not live in this register") from None
        return axes

    @staticmethod
    def _check_local(targets: Sequence[QubitId], oracle_mode: bool) -> None:
        sites = {q.site for q in targets}
        if len(sites) > 1 and not oracle_mode:
            raise LocalityError(
                f"operation spans sites {sorted(s.value for s in sites)}; "
                "only oracle_mode may act nonlocally"
            )

    def _front(self, axes: list[int]) -> np.ndarray:
        n = self.n_qubits
        t = self._psi.reshape((2,) * n) if n else self._psi
        t = np.moveaxis(t, axes, list(range(len(axes))))
        return t.reshape(2 ** len(axes), -1)

    def _restore(self, front: np.ndarray, axes: list[int]) -> None:
        n = self.n_qubits
        t = front.reshape((2,) * n)
        t = np.moveaxis(t, list(range(len(axes))), axes)
        self._psi = np.ascontiguousarray(t).reshape(-1)

    # -- operations -------------------------------------------------------

    def apply_unitary(self, spec: UnitarySpec, oracle_mode: bool = False) -> None:
        axes = self._axes(spec.targets)
        self._check_local(spec.targets, oracle_mode)
        self._restore(spec.matrix @ self._front(axes), axes)

    def apply(self, matrix, targets: Sequence[QubitId], oracle_mode: bool = False) -> None:
        self.apply_unitary(UnitarySpec(matrix, tuple(targets)), oracle_mode=oracle_mode)

    def probabilities(self, targets: Sequence[QubitId], basis=None) -> np.ndarray:
        """Born probabilities of a projective measurement of ``targets`` in ``basis``.

        ``basis`` holds the measurement vectors as columns; default is the
        computational basis.  The register is not modified.
        """
        coeffs = self._coefficients(targets, basis)
        return np.sum(np.abs(coeffs) ** 2, axis=1)

    def _coefficients(self, targets, basis):
        axes = self._axes(targets)
        front = self._front(axes)
        if basis is None:
            return front
        basis = np.asarray(basis, dtype=complex)
        if basis.shape != (front.shape[0],) * 2:
            raise ValueError(f"basis shape {basis.shape} does not match {len(targets)} targets")
        return basis.conj().T @ front

    def measure(self, targets: Sequence[QubitId], basis, rng, force: int | None = None,
                oracle_mode: bool = False) -> int:
        """Measure ``targets`` in ``basis`` and remove them from the register.

        Returns the index of the basis column observed.  ``force`` selects an
        outcome instead of sampling it; it must have nonzero probability.
        """
        targets = list(targets)
        self._check_local(targets, oracle_mode)
        if basis is not None:
            check_unitary(basis)
        coeffs = self._coefficients(targets, basis)
        probs = np.sum(np.abs(coeffs) ** 2, axis=1)
        if force is None:
            k = draw_outcome(rng, probs)
        else:
            k = int(force)
            if probs[k] < ATOL:
                raise ValueError(f"forced outcome {k} has probability {probs[k]:.3e}")
        remaining = coeffs[k] / np.sqrt(probs[k])
        for q in targets:
            self._order.remove(q)
        self._psi = np.ascontiguousarray(remaining).reshape(-1)
        return k

    def measure_z(self, q: QubitId, rng, force: int | None = None) -> int:
        return self.measure([q], None, rng, force=force)

    def project(self, targets: Sequence[QubitId], projector, oracle_mode: bool = False) -> float:
        """Apply a projector to ``targets`` and renormalize, keeping the qubits.

        Returns the probability of the projection.
        """
        axes = self._axes(targets)
        self._check_local(targets, oracle_mode)
        out = np.asarray(projector, dtype=complex) @ self._front(axes)
        p = float(np.sum(np.abs(out) ** 2))
        if p < ATOL:
            raise ValueError(f"projection has probability {p:.3e}")
        self._restore(out / np.sqrt(p), axes)
        return p

    def expectation(self, targets: Sequence[QubitId], operator) -> complex:
        front = self._front(self._axes(targets))
        return complex(np.vdot(front, np.asarray(operator, dtype=complex) @ front))

    def reduced_density(self, qubits: Sequence[QubitId]) -> np.ndarray:
        """Partial trace over every live qubit not in ``qubits`` (kept in the given order)."""
        front = self._front(self._axes(qubits))
        return front @ front.conj().T

    def statevector(self, order: Sequence[QubitId] | None = None) -> np.ndarray:
        """Amplitudes with qubits permuted into ``order`` (which must list every live qubit)."""
        if order is None:
            return self._psi.copy()
        if set(order) != set(self._order) or len(order) != len(self._order):
            raise ValueError("order must be a permutation of the live qubits")
        return self._front(self._axes(order)).reshape(-1).copy()


def basis_states(n: int):
    """Iterate bit tuples of n qubits in flat-index order."""
    return itertools.product((0, 1), repeat=n)


def bits_to_index(bits: Sequence[int]) -> int:
    idx = 0
    for b in bits:
        idx = (idx << 1) | int(b)
    return idx


def index_to_bits(index: int, n: int) -> tuple[int, ...]:
    return tuple((index >> (n - 1 - i)) & 1 for i in range(n))
