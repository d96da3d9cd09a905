"""Real-coefficient Pauli-sum algebra for Hermitian qubit operators.

A Pauli word on ``n`` qubits is stored as two ``n``-bit masks ``(x, z)``;
bit ``i`` of each mask refers to site ``i`` (0-based, site 0 is the leftmost
letter of a label such as ``"XIZ"``).  The word is ``i^{|x & z|} X^x Z^z``, so
``Y = i X Z`` on every site where both bits are set.

The flat Pauli index used for dense coefficient vectors is ``(x << n) | z``,
which orders words lexicographically on ``(x, z)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

PRUNE_TOL = 1e-12
MAX_DENSE_QUBITS = 8

_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_LETTER = {v: k for k, v in _LETTER_BITS.items()}
_PHASES = (1 + 0j, 1j, -1 + 0j, -1j)


def _popcount(v: int) -> int:
    return v.bit_count()


@dataclass(frozen=True, order=True)
class PauliString:
    """A tensor-product word over ``{I, X, Y, Z}``.

    Ordering is lexicographic on ``(x, z)``; equality and hashing are by
    letter content (and length).
    """

    x: int
    z: int
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("PauliString needs at least one qubit")
        full = (1 << self.n) - 1
        if self.x & ~full or self.z & ~full or self.x < 0 or self.z < 0:
            raise ValueError(f"masks do not fit in {self.n} qubits")

    @classmethod
    def from_label(cls, label: str) -> "PauliString":
        x = z = 0
        for i, ch in enumerate(label.upper()):
            try:
                bx, bz = _LETTER_BITS[ch]
            except KeyError:
                raise ValueError(f"bad Pauli letter {ch!r} in {label!r}") from None
            x |= bx << i
            z |= bz << i
        return cls(x, z, len(label))

    @classmethod
    def identity(cls, n: int) -> "PauliString":
        return cls(0, 0, n)

    @classmethod
    def single(cls, n: int, site: int, axis: str) -> "PauliString":
        if not 0 <= site < n:
            raise IndexError(f"site {site} out of range for {n} qubits")
        bx, bz = _LETTER_BITS[axis.upper()]
        return cls(bx << site, bz << site, n)

    @classmethod
    def from_index(cls, index: int, n: int) -> "PauliString":
        return cls(index >> n, index & ((1 << n) - 1), n)

    @property
    def index(self) -> int:
        return (self.x << self.n) | self.z

    @property
    def label(self) -> str:
        return "".join(
            _BITS_LETTER[((self.x >> i) & 1, (self.z >> i) & 1)] for i in range(self.n)
        )

    @property
    def weight(self) -> int:
        """Number of non-identity letters."""
        return _popcount(self.x | self.z)

    def commutes_with(self, other: "PauliString") -> bool:
        _check_len(self.n, other.n)
        return (_popcount(self.x & other.z) + _popcount(self.z & other.x)) % 2 == 0

    def __str__(self) -> str:
        return self.label


def _check_len(a: int, b: int) -> None:
    if a != b:
        raise ValueError(f"length mismatch: {a} vs {b} qubits")


def _phase_exponent(x1: int, z1: int, x2: int, z2: int) -> int:
    # P1 P2 = i^e P3 with P = i^{|x&z|} X^x Z^z and Z^z1 X^x2 = (-1)^{|z1&x2|} X^x2 Z^z1
    x3, z3 = x1 ^ x2, z1 ^ z2
    e = _popcount(x1 & z1) + _popcount(x2 & z2) - _popcount(x3 & z3) + 2 * _popcount(z1 & x2)
    return e % 4


def ps_multiply(p: PauliString, q: PauliString) -> tuple[complex, PauliString]:
    """Multiply two Pauli words.

    Returns ``(phase, r)`` with ``p @ q == phase * r`` as matrices and
    ``phase`` one of ``1, -1, 1j, -1j``.
    """
    _check_len(p.n, q.n)
    e = _phase_exponent(p.x, p.z, q.x, q.z)
    return _PHASES[e], PauliString(p.x ^ q.x, p.z ^ q.z, p.n)


class OperatorSum:
    """Real linear combination of Pauli words on ``n`` qubits.

    Coefficients with magnitude at or below ``PRUNE_TOL`` are dropped on
    construction.  Instances are treated as immutable.

    Parameters
    ----------
    n : int
        Number of qubits.
    terms : mapping, optional
        ``{PauliString or label or (x, z): coefficient}``.
    """

    __slots__ = ("n", "_terms")

    def __init__(self, n: int, terms: Mapping | Iterable | None = None, *, prune_tol: float = PRUNE_TOL):
        if n < 1:
            raise ValueError("OperatorSum needs at least one qubit")
        self.n = int(n)
        acc: dict[tuple[int, int], float] = {}
        items = terms.items() if isinstance(terms, Mapping) else (terms or ())
        for key, c in items:
            xz = self._key(key)
            c = float(c)
            if not math.isfinite(c):
                raise ValueError(f"non-finite coefficient {c} for {key}")
            acc[xz] = acc.get(xz, 0.0) + c
        self._terms = {k: v for k, v in acc.items() if abs(v) > prune_tol}

    def _key(self, key) -> tuple[int, int]:
        if isinstance(key, PauliString):
            _check_len(self.n, key.n)
            return key.x, key.z
        if isinstance(key, str):
            if len(key) != self.n:
                raise ValueError(f"label {key!r} has length {len(key)}, expected {self.n}")
            p = PauliString.from_label(key)
            return p.x, p.z
        x, z = key
        return int(x), int(z)

    # -- constructors ---------------------------------------------------
    @classmethod
    def zero(cls, n: int) -> "OperatorSum":
        return cls(n)

    @classmethod
    def from_pauli(cls, p: PauliString, coeff: float = 1.0) -> "OperatorSum":
        return cls(p.n, {(p.x, p.z): coeff})

    @classmethod
    def from_label(cls, label: str, coeff: float = 1.0) -> "OperatorSum":
        return cls.from_pauli(PauliString.from_label(label), coeff)

    @classmethod
    def _from_raw(cls, n: int, terms: dict[tuple[int, int], float]) -> "OperatorSum":
        obj = cls.__new__(cls)
        obj.n = n
        obj._terms = terms
        return obj

    @classmethod
    def from_vector(cls, vec: np.ndarray, n: int, prune_tol: float = PRUNE_TOL) -> "OperatorSum":
        """Build from a dense length-``4**n`` coefficient vector over the flat Pauli index."""
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (4**n,):
            raise ValueError(f"expected vector of length {4**n}, got {vec.shape}")
        nz = np.flatnonzero(np.abs(vec) > prune_tol)
        mask = (1 << n) - 1
        return cls._from_raw(n, {(int(i) >> n, int(i) & mask): float(vec[i]) for i in nz})

    # -- views ----------------------------------------------------------
    @property
    def terms(self) -> Mapping[PauliString, float]:
        return MappingProxyType(
            {PauliString(x, z, self.n): c for (x, z), c in sorted(self._terms.items())}
        )

    def raw_terms(self) -> Mapping[tuple[int, int], float]:
        return MappingProxyType(self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self):
        for (x, z), c in sorted(self._terms.items()):
            yield PauliString(x, z, self.n), c

    def coeff(self, p: PauliString | str) -> float:
        return self._terms.get(self._key(p), 0.0)

    @property
    def is_zero(self) -> bool:
        return not self._terms

    def norm(self) -> float:
        """Hilbert-Schmidt norm, ``sqrt(sum c_P**2)``."""
        return math.sqrt(sum(c * c for c in self._terms.values()))

    def to_vector(self) -> np.ndarray:
        vec = np.zeros(4**self.n)
        for (x, z), c in self._terms.items():
            vec[(x << self.n) | z] = c
        return vec

    # -- arithmetic -----------------------------------------------------
    def _combine(self, other: "OperatorSum", sign: float) -> "OperatorSum":
        if not isinstance(other, OperatorSum):
            return NotImplemented
        _check_len(self.n, other.n)
        acc = dict(self._terms)
        for k, c in other._terms.items():
            acc[k] = acc.get(k, 0.0) + sign * c
        return OperatorSum._from_raw(self.n, {k: v for k, v in acc.items() if abs(v) > PRUNE_TOL})

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __mul__(self, scalar):
        if isinstance(scalar, OperatorSum):
            return NotImplemented
        s = float(scalar)
        return OperatorSum._from_raw(
            self.n, {k: v * s for k, v in self._terms.items() if abs(v * s) > PRUNE_TOL}
        )

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def __neg__(self):
        return self * -1.0

    def __eq__(self, other) -> bool:
        if not isinstance(other, OperatorSum):
            return NotImplemented
        return self.n == other.n and self._terms == other._terms

    def __hash__(self):
        return hash((self.n, frozenset(self._terms.items())))

    def allclose(self, other: "OperatorSum", atol: float = 1e-10) -> bool:
        _check_len(self.n, other.n)
        keys = set(self._terms) | set(other._terms)
        return all(abs(self._terms.get(k, 0.0) - other._terms.get(k, 0.0)) <= atol for k in keys)

    def __repr__(self) -> str:
        if not self._terms:
            return f"OperatorSum(n={self.n}, 0)"
        body = " + ".join(f"{c:.6g}*{p.label}" for p, c in list(self)[:8])
        more = "" if len(self) <= 8 else f" + ... ({len(self)} terms)"
        return f"OperatorSum(n={self.n}, {body}{more})"

    # -- text format ----------------------------------------------------
    def to_text(self) -> str:
        return "".join(f"{c!r} {p.label}\n" for p, c in self)

    @classmethod
    def from_text(cls, text: str) -> "OperatorSum":
        """Parse lines of ``<coeff> <letters>``; blank lines and ``#`` comments are skipped."""
        terms: list[tuple[str, float]] = []
        n = None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected '<coeff> <letters>', got {raw!r}")
            coeff, letters = float(parts[0]), parts[1]
            if n is None:
                n = len(letters)
            elif len(letters) != n:
                raise ValueError(f"line {lineno}: length {len(letters)} differs from {n}")
            terms.append((letters, coeff))
        if n is None:
            raise ValueError("no terms found")
        return cls(n, terms)


def bracket(a: OperatorSum, b: OperatorSum, prune_tol: float = PRUNE_TOL) -> OperatorSum:
    """Hermiticity-preserving commutator ``i (AB - BA)``.

    Two Pauli words either commute (contributing nothing) or anticommute, in
    which case ``i[P, Q] = 2i * phase(P, Q) * PQ`` is a real multiple of a
    single word.
    """
    _check_len(a.n, b.n)
    acc: dict[tuple[int, int], float] = {}
    for (x1, z1), c1 in a._terms.items():
        for (x2, z2), c2 in b._terms.items():
            if (_popcount(x1 & z2) + _popcount(z1 & x2)) & 1 == 0:
                continue
            # phase is +-i here; 2i * i = -2, 2i * (-i) = +2
            sign = -2.0 if _phase_exponent(x1, z1, x2, z2) == 1 else 2.0
            key = (x1 ^ x2, z1 ^ z2)
            acc[key] = acc.get(key, 0.0) + sign * c1 * c2
    return OperatorSum._from_raw(a.n, {k: v for k, v in acc.items() if abs(v) > prune_tol})


def hs_inner(a: OperatorSum, b: OperatorSum) -> float:
    """Hilbert-Schmidt inner product ``tr(A^dag B) / 2**n``."""
    _check_len(a.n, b.n)
    if len(a._terms) > len(b._terms):
        a, b = b, a
    return float(sum(c * b._terms.get(k, 0.0) for k, c in a._terms.items()))


def s_min(a: OperatorSum, coeff_tol: float = 1e-10) -> int:
    """Smallest Pauli weight among terms with ``|c_P| > coeff_tol``."""
    weights = [_popcount(x | z) for (x, z), c in a._terms.items() if abs(c) > coeff_tol]
    if not weights:
        raise ValueError("zero operator has no size")
    return min(weights)


def strip_identity(a: OperatorSum) -> tuple[OperatorSum, float]:
    """Split ``a`` into its traceless part and the identity coefficient."""
    c0 = a._terms.get((0, 0), 0.0)
    rest = {k: v for k, v in a._terms.items() if k != (0, 0)}
    return OperatorSum._from_raw(a.n, rest), c0


# -- dense matrices ------------------------------------------------------

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _reverse_bits(v: int, n: int) -> int:
    return int(format(v, f"0{n}b")[::-1], 2) if n else 0


def pauli_dense(p: PauliString) -> np.ndarray:
    """Dense matrix of one word, site 0 as the leftmost Kronecker factor."""
    n = p.n
    dim = 1 << n
    # site i is bit (n - 1 - i) of the computational-basis index
    x, z = _reverse_bits(p.x, n), _reverse_bits(p.z, n)
    cols = np.arange(dim)
    rows = cols ^ x
    signs = 1 - 2 * (np.bitwise_count(cols & z) & 1).astype(float)
    out = np.zeros((dim, dim), dtype=complex)
    out[rows, cols] = _PHASES[_popcount(p.x & p.z) % 4] * signs
    return out


def to_dense(a: OperatorSum, max_qubits: int = MAX_DENSE_QUBITS) -> np.ndarray:
    """Dense ``2**n x 2**n`` matrix of ``sum_P c_P P``."""
    if a.n > max_qubits:
        raise ValueError(f"{a.n} qubits exceeds dense limit of {max_qubits}")
    dim = 1 << a.n
    out = np.zeros((dim, dim), dtype=complex)
    cols = np.arange(dim)
    for (x, z), c in a._terms.items():
        xr, zr = _reverse_bits(x, a.n), _reverse_bits(z, a.n)
        signs = 1 - 2 * (np.bitwise_count(cols & zr) & 1).astype(float)
        out[cols ^ xr, cols] += c * _PHASES[_popcount(x & z) % 4] * signs
    return out


def from_dense(m: np.ndarray, tol: float = PRUNE_TOL) -> OperatorSum:
    """Pauli decomposition ``c_P = tr(P m) / D`` of a Hermitian matrix (brute force)."""
    dim = m.shape[0]
    n = dim.bit_length() - 1
    if m.shape != (dim, dim) or 1 << n != dim:
        raise ValueError("matrix dimension must be a power of two")
    terms = {}
    for idx in range(4**n):
        p = PauliString.from_index(idx, n)
        c = np.trace(pauli_dense(p) @ m) / dim
        if abs(c.imag) > 1e-9:
            raise ValueError("matrix is not Hermitian")
        terms[(p.x, p.z)] = c.real
    return OperatorSum(n, terms, prune_tol=tol)


# -- vectorised superoperators --------------------------------------------

def pauli_weights(n: int) -> np.ndarray:
    """Weight of every word, indexed by the flat Pauli index."""
    idx = np.arange(4**n, dtype=np.int64)
    mask = (1 << n) - 1
    return np.bitwise_count((idx >> n) | (idx & mask)).astype(np.int64)


def liouvillian(h: OperatorSum):
    """Sparse matrix of ``v -> i[h, v]`` acting on flat coefficient vectors."""
    from scipy import sparse

    n = h.n
    dim = 4**n
    idx = np.arange(dim, dtype=np.int64)
    mask = (1 << n) - 1
    xb, zb = idx >> n, idx & mask
    rows, cols, vals = [], [], []
    for (xa, za), c in h._terms.items():
        anti = (np.bitwise_count(xa & zb) + np.bitwise_count(za & xb)) & 1
        sel = np.flatnonzero(anti)
        x3, z3 = xa ^ xb[sel], za ^ zb[sel]
        e = (
            _popcount(xa & za)
            + np.bitwise_count(xb[sel] & zb[sel]).astype(np.int64)
            - np.bitwise_count(x3 & z3).astype(np.int64)
            + 2 * np.bitwise_count(za & xb[sel]).astype(np.int64)
        ) % 4
        rows.append((x3 << n) | z3)
        cols.append(sel)
        vals.append(np.where(e == 1, -2.0, 2.0) * c)
    if not rows:
        return sparse.csr_matrix((dim, dim))
    return sparse.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(dim, dim)
    )
