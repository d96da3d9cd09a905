"""Native Hamiltonian sets and target operators for open 1D qubit chains.

Sites are 0-based throughout: site 0 is the chain end carrying the
reflection-breaking field ``H_break``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pauli import OperatorSum, PauliString, to_dense

CHANNELS = ("X", "Z", "break", "int")
KINDS = ("ising", "heisenberg", "xxz")


@dataclass(frozen=True)
class ModelSpec:
    L: int
    kind: str = "ising"
    delta: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown interaction kind {self.kind!r}; expected one of {KINDS}")
        if self.L < 2:
            raise ValueError("model needs L >= 2")
        if not math.isfinite(self.delta):
            raise ValueError("anisotropy must be finite")

    @classmethod
    def parse(cls, selector: str, L: int) -> "ModelSpec":
        """Parse a CLI selector: ``ising``, ``heisenberg`` or ``xxz:DELTA``."""
        s = selector.strip().lower()
        if s.startswith("xxz"):
            _, _, d = s.partition(":")
            return cls(L, "xxz", float(d) if d else 1.5)
        return cls(L, s)

    @property
    def label(self) -> str:
        return f"xxz:{self.delta:g}" if self.kind == "xxz" else self.kind


@dataclass(frozen=True)
class NativeSet:
    """Ordered native Hamiltonians ``(H_X, H_Z, H_break, H_int)``."""

    spec: ModelSpec | None
    names: tuple[str, ...]
    operators: tuple[OperatorSum, ...]

    def __len__(self):
        return len(self.operators)

    def __iter__(self):
        return iter(self.operators)

    def __getitem__(self, i):
        return self.operators[i]

    @property
    def n_qubits(self) -> int:
        return self.operators[0].n

    def dense(self) -> list[np.ndarray]:
        return [to_dense(h) for h in self.operators]

    @classmethod
    def custom(cls, operators, names=None) -> "NativeSet":
        ops = tuple(operators)
        if not ops:
            raise ValueError("native set must be nonempty")
        n = ops[0].n
        if any(op.n != n for op in ops):
            raise ValueError("native Hamiltonians act on different qubit counts")
        names = tuple(names) if names is not None else tuple(f"H{i}" for i in range(len(ops)))
        return cls(None, names, ops)


def _single_sum(L: int, axis: str) -> OperatorSum:
    return OperatorSum(L, {PauliString.single(L, i, axis): 1.0 for i in range(L)})


def _bond(L: int, i: int, j: int, axis: str) -> PauliString:
    a, b = PauliString.single(L, i, axis), PauliString.single(L, j, axis)
    return PauliString(a.x | b.x, a.z | b.z, L)


def xxz_chain(L: int, delta: float) -> OperatorSum:
    terms = {}
    for i in range(L - 1):
        terms[_bond(L, i, i + 1, "X")] = 1.0
        terms[_bond(L, i, i + 1, "Y")] = 1.0
        terms[_bond(L, i, i + 1, "Z")] = delta
    return OperatorSum(L, terms)


def ising_chain(L: int) -> OperatorSum:
    return OperatorSum(L, {_bond(L, i, i + 1, "Z"): 1.0 for i in range(L - 1)})


def heisenberg_chain(L: int) -> OperatorSum:
    return xxz_chain(L, 1.0)


def interaction(spec: ModelSpec) -> OperatorSum:
    if spec.kind == "ising":
        return ising_chain(spec.L)
    if spec.kind == "heisenberg":
        return heisenberg_chain(spec.L)
    return xxz_chain(spec.L, spec.delta)


def build_native_set(spec: ModelSpec) -> NativeSet:
    L = spec.L
    ops = (
        _single_sum(L, "X"),
        _single_sum(L, "Z"),
        OperatorSum.from_pauli(PauliString.single(L, 0, "X")),
        interaction(spec),
    )
    return NativeSet(spec, CHANNELS, ops)


def single_pauli(L: int, axis: str, site: int) -> OperatorSum:
    return OperatorSum.from_pauli(PauliString.single(L, site, axis))


def zz_pair(L: int, i: int, j: int) -> OperatorSum:
    if not (0 <= i < L and 0 <= j < L):
        raise IndexError(f"sites ({i}, {j}) out of range for L={L}")
    if i >= j:
        raise ValueError(f"ZZ pair needs i < j, got ({i}, {j})")
    return OperatorSum.from_pauli(_bond(L, i, j, "Z"))


_SINGLE_RE = re.compile(r"^([XYZ])(\d+)$")
_PAIR_RE = re.compile(r"^Z(\d+)Z(\d+)$")


def build_target(name: str, spec: ModelSpec) -> OperatorSum:
    """Resolve a target id at the model's chain length.

    Accepted ids: ``X3`` / ``Y0`` / ``Z2`` (single Pauli, 0-based site),
    ``Z1Z4`` (ZZ pair, i < j), ``xxz`` or ``xxz:DELTA`` (default 1.5),
    ``ising``, ``heisenberg``, ``file:PATH`` (Pauli text format), or a bare
    Pauli label of length L such as ``IXZY``.
    """
    L = spec.L
    raw = name.strip()
    low = raw.lower()
    if low.startswith("file:"):
        op = OperatorSum.from_text(Path(raw[5:]).read_text())
        if op.n != L:
            raise ValueError(f"target file has {op.n} qubits, model has {L}")
        return op
    if low == "ising":
        return ising_chain(L)
    if low == "heisenberg":
        return heisenberg_chain(L)
    if low.startswith("xxz"):
        _, _, d = low.partition(":")
        return xxz_chain(L, float(d) if d else 1.5)
    up = raw.upper()
    if m := _PAIR_RE.match(up):
        return zz_pair(L, int(m[1]), int(m[2]))
    if m := _SINGLE_RE.match(up):
        return single_pauli(L, m[1], int(m[2]))
    if len(up) == L and set(up) <= set("IXYZ"):
        return OperatorSum.from_label(up)
    raise ValueError(f"unrecognised target id {name!r}")


def enumerate_lowweight_set(spec: ModelSpec) -> list[tuple[str, OperatorSum]]:
    """All single-site Paulis (site-major, X<Y<Z) followed by ZZ pairs ``i<j``."""
    L = spec.L
    out = [(f"{a}{i}", single_pauli(L, a, i)) for i in range(L) for a in "XYZ"]
    out += [(f"Z{i}Z{j}", zz_pair(L, i, j)) for i in range(L) for j in range(i + 1, L)]
    return out


def reflect(op: OperatorSum) -> OperatorSum:
    """Mirror a chain operator, mapping site ``i`` to ``L - 1 - i``."""
    L = op.n

    def rev(m: int) -> int:
        return sum(((m >> i) & 1) << (L - 1 - i) for i in range(L))

    return OperatorSum(L, {(rev(x), rev(z)): c for (x, z), c in op.raw_terms().items()})
