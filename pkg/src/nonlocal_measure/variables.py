"""Nonlocal variables: an eigenbasis split across sites plus eigenvalues.

The eigenbasis columns are eigenstates written in the register tensor
convention over the variable's qubits, ordered site by site (all A
qubits, then B, then C).  See ``docs/variable_format.md`` for the text
format read and written by ``loads``/``dumps``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .qsim import ATOL, DOWN_X, DOWN_Z, UP_X, UP_Z, Site, check_unitary
from .teleport import BELL_BASIS

FORMAT_HEADER = "nonlocal-variable 1"


class VariableFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class NonlocalVariable:
    partition: Mapping[Site, int]
    eigenbasis: np.ndarray
    eigenvalues: tuple[float, ...]
    name: str = ""

    def __post_init__(self):
        part = {Site(s): int(n) for s, n in self.partition.items()}
        if any(n < 1 for n in part.values()):
            raise ValueError(f"every site needs at least one qubit: {part}")
        part = {s: part[s] for s in Site if s in part}
        basis = np.array(self.eigenbasis, dtype=complex)
        dim = 2 ** sum(part.values())
        if basis.shape != (dim, dim):
            raise ValueError(f"eigenbasis shape {basis.shape}, expected {(dim, dim)} for partition {part}")
        check_unitary(basis, ATOL)
        values = tuple(float(v) for v in self.eigenvalues)
        if len(values) != dim:
            raise ValueError(f"{len(values)} eigenvalues for {dim} eigenstates")
        basis.setflags(write=False)
        object.__setattr__(self, "partition", part)
        object.__setattr__(self, "eigenbasis", basis)
        object.__setattr__(self, "eigenvalues", values)

    @property
    def n_qubits(self) -> int:
        return sum(self.partition.values())

    @property
    def dim(self) -> int:
        return 2 ** self.n_qubits

    @property
    def sites(self) -> list[Site]:
        """Site of each qubit, in tensor order."""
        return [s for s, n in self.partition.items() for _ in range(n)]

    def column(self, index: int) -> np.ndarray:
        return self.eigenbasis[:, index].copy()

    @property
    def distinct_eigenvalues(self) -> list[float]:
        return sorted(set(self.eigenvalues))

    def projector(self, eigenvalue: float) -> np.ndarray:
        cols = [i for i, v in enumerate(self.eigenvalues) if v == eigenvalue]
        if not cols:
            raise KeyError(eigenvalue)
        vecs = self.eigenbasis[:, cols]
        return vecs @ vecs.conj().T


def eq1_variable() -> NonlocalVariable:
    """The product eigenbasis |uz uz>, |uz dz>, |dz ux>, |dz dx>, eigenvalues 1..4."""
    cols = [
        np.kron(UP_Z, UP_Z),
        np.kron(UP_Z, DOWN_Z),
        np.kron(DOWN_Z, UP_X),
        np.kron(DOWN_Z, DOWN_X),
    ]
    return NonlocalVariable({Site.A: 1, Site.B: 1}, np.column_stack(cols), (1, 2, 3, 4), "eq1")


def bell_basis_variable() -> NonlocalVariable:
    """Bell operator: columns Psi-, Psi+, Phi-, Phi+ with eigenvalues 1..4."""
    return NonlocalVariable({Site.A: 1, Site.B: 1}, BELL_BASIS, (1, 2, 3, 4), "bell-basis")


def ghz_basis_variable() -> NonlocalVariable:
    """Three qubits at A, B, C; column 2j (2j+1) is (|x> +(-) |not x>)/sqrt2 for x = 0bj."""
    cols = []
    for j in range(4):
        x, xbar = j, 7 - j
        for sign in (1, -1):
            v = np.zeros(8, dtype=complex)
            v[x], v[xbar] = 1, sign
            cols.append(v / np.sqrt(2))
    return NonlocalVariable(
        {Site.A: 1, Site.B: 1, Site.C: 1}, np.column_stack(cols), tuple(range(1, 9)), "ghz-basis"
    )


def computational_variable(k_a: int = 1, k_b: int = 1) -> NonlocalVariable:
    dim = 2 ** (k_a + k_b)
    return NonlocalVariable(
        {Site.A: k_a, Site.B: k_b}, np.eye(dim), tuple(range(1, dim + 1)), "computational"
    )


def random_variable(partition: Mapping[Site, int], seed: int) -> NonlocalVariable:
    """Haar-random eigenbasis with eigenvalues 1..dim."""
    from scipy.stats import unitary_group

    dim = 2 ** sum(partition.values())
    basis = unitary_group.rvs(dim, random_state=np.random.default_rng(seed))
    return NonlocalVariable(partition, basis, tuple(range(1, dim + 1)), f"random-{seed}")


BUILTINS = {
    "eq1": eq1_variable,
    "bell-basis": bell_basis_variable,
    "ghz-basis": ghz_basis_variable,
}


def builtin(name: str) -> NonlocalVariable:
    try:
        return BUILTINS[name]()
    except KeyError:
        raise KeyError(f"unknown built-in variable {name!r}; choose from {sorted(BUILTINS)}") from None


# -- text format -------------------------------------------------------------

_ENTRY = re.compile(r"\(\s*([^,()\s]+)\s*,\s*([^,()\s]+)\s*\)")


def dumps(variable: NonlocalVariable) -> str:
    lines = [FORMAT_HEADER]
    if variable.name:
        lines.append(f"name {variable.name}")
    lines.append("partition " + " ".join(f"{s.value}={n}" for s, n in variable.partition.items()))
    lines.append("eigenvalues " + " ".join(repr(v) for v in variable.eigenvalues))
    lines.append(f"eigenbasis {variable.dim}")
    for row in variable.eigenbasis:
        lines.append(" ".join(f"({float(z.real)!r},{float(z.imag)!r})" for z in row))
    return "\n".join(lines) + "\n"


def loads(text: str) -> NonlocalVariable:
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line)
    if not lines or lines[0] != FORMAT_HEADER:
        raise VariableFormatError(f"first line must be {FORMAT_HEADER!r}")
    name = ""
    partition: dict[Site, int] = {}
    eigenvalues = None
    rows = None
    i = 1
    while i < len(lines):
        key, _, rest = lines[i].partition(" ")
        if key == "name":
            name = rest.strip()
        elif key == "partition":
            for item in rest.split():
                site, eq, count = item.partition("=")
                try:
                    partition[Site(site)] = int(count)
                except ValueError:
                    raise VariableFormatError(f"bad partition entry {item!r}") from None
        elif key == "eigenvalues":
            try:
                eigenvalues = [float(v) for v in rest.split()]
            except ValueError as exc:
                raise VariableFormatError(f"bad eigenvalue: {exc}") from None
        elif key == "eigenbasis":
            try:
                dim = int(rest)
            except ValueError:
                raise VariableFormatError(f"bad eigenbasis dimension {rest!r}") from None
            body = lines[i + 1:i + 1 + dim]
            if len(body) != dim:
                raise VariableFormatError(f"expected {dim} eigenbasis rows, found {len(body)}")
            rows = [_parse_row(r, dim) for r in body]
            i += dim
        else:
            raise VariableFormatError(f"unknown key {key!r}")
        i += 1
    if not partition or eigenvalues is None or rows is None:
        raise VariableFormatError("partition, eigenvalues and eigenbasis are all required")
    # check_unitary inside the constructor reports the deviation and tolerance
    try:
        return NonlocalVariable(partition, np.array(rows), tuple(eigenvalues), name)
    except ValueError as exc:
        if type(exc) is ValueError:
            raise VariableFormatError(str(exc)) from None
        raise


def _parse_row(line: str, dim: int) -> list[complex]:
    entries = _ENTRY.findall(line)
    if len(entries) != dim or _ENTRY.sub("", line).strip():
        raise VariableFormatError(f"eigenbasis row must hold {dim} (re,im) pairs: {line!r}")
    try:
        return [complex(float(re_), float(im)) for re_, im in entries]
    except ValueError:
        raise VariableFormatError(f"non-numeric entry in row {line!r}") from None


def load(path) -> NonlocalVariable:
    return loads(Path(path).read_text())


def dump(variable: NonlocalVariable, path) -> None:
    Path(path).write_text(dumps(variable))
