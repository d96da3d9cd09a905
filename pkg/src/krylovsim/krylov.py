"""Block Krylov basis generated by a set of native Hamiltonians.

Vectors live in the real coefficient space over the flat Pauli index (see
:mod:`krylovsim.pauli`), where the Hilbert-Schmidt inner product is the
Euclidean dot product.  Each block ``Omega_J`` is stored as an
``(n_J, 4**L)`` float array whose rows are orthonormal.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .models import NativeSet
from .pauli import OperatorSum, liouvillian, pauli_weights, strip_identity

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10
ORTHO_TOL = 1e-8
CONTAINMENT_TOL = 1e-8
MAX_DEPTH = 256
BASIS_FORMAT = "krylovsim-basis/1"
MODULUS = 1048573  # largest prime below 2**20


class TruncatedBasisError(RuntimeError):
    pass


class NotContainedError(ValueError):
    def __init__(self, msg: str, residual: float):
        super().__init__(msg)
        self.residual = residual


def _as_matrix(ops, n: int) -> np.ndarray:
    if not ops:
        return np.zeros((0, 4**n))
    return np.stack([op.to_vector() for op in ops])


def _project_out(cand: np.ndarray, prev: np.ndarray | None) -> np.ndarray:
    if prev is not None and prev.shape[0]:
        for _ in range(2):
            cand -= (cand @ prev.T) @ prev
    return cand


def _restrict_support(rows: np.ndarray, cand: np.ndarray, prev: np.ndarray | None) -> np.ndarray:
    """Zero rounding dust outside the Pauli support of the inputs (keeps vectors exactly traceless)."""
    support = np.any(cand != 0, axis=0)
    if prev is not None and prev.shape[0]:
        support |= np.any(prev != 0, axis=0)
    rows[:, ~support] = 0.0
    return rows


def _qr_rows(rows: np.ndarray) -> np.ndarray:
    """In-order Gram-Schmidt of independent rows, via Householder QR."""
    q, r = np.linalg.qr(rows.T)
    return (q * np.sign(np.diag(r))).T


def orthonormalize_rows(cand: np.ndarray, prev: np.ndarray | None, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Gram-Schmidt ``cand`` rows against ``prev`` rows and each other.

    Projections against ``prev`` are applied twice (classical Gram-Schmidt
    with one full re-orthogonalization pass).  The numerical rank ``r`` of the
    projected candidates is read off their singular values and all further
    work happens in coordinates of that ``r``-dimensional range, so rounding
    noise cannot leak into later blocks.

    Candidates are then accepted in order; one is dropped when its residual
    norm falls below ``rank_tol`` times its original norm, or below
    ``rank_tol`` times the largest candidate norm in the batch (rounding dust
    from brackets that vanish exactly).  The output equals in-order
    Gram-Schmidt of the accepted candidates, evaluated with a Householder QR.
    """
    cand = np.array(cand, dtype=float, copy=True)
    if cand.ndim != 2:
        raise ValueError("candidates must be a 2-D array")
    width = cand.shape[1]
    norms0 = np.linalg.norm(cand, axis=1)
    if not norms0.size or norms0.max() == 0.0:
        return np.zeros((0, width))
    floor = rank_tol * norms0.max()
    cand = _project_out(cand, prev)
    _, sv, vt = np.linalg.svd(cand, full_matrices=False)
    rank = int(np.count_nonzero(sv > floor))
    if rank == 0:
        return np.zeros((0, width))
    span = vt[:rank]
    coords = cand @ span.T

    acc = np.empty((rank, rank))
    chosen = []
    for i in range(coords.shape[0]):
        if len(chosen) == rank:
            break
        if norms0[i] == 0.0:
            continue
        k = len(chosen)
        y = coords[i]
        for _ in range(2):
            y = y - acc[:k].T @ (acc[:k] @ y)
        r = np.linalg.norm(y)
        if r <= rank_tol * norms0[i] or r <= floor:
            continue
        acc[k] = y / r
        chosen.append(coords[i])
    rows = np.array(chosen).reshape(-1, rank)
    if rows.shape[0] < rank:
        # near-dependent candidates fell under the threshold; complete from the range
        logger.debug("completing %d of %d directions from the singular basis", rank - rows.shape[0], rank)
        rows = np.vstack([rows, np.eye(rank)])
    return _restrict_support(_qr_rows(rows)[:rank] @ span, cand, prev)


def _block_from_selection(cand: np.ndarray, prev: np.ndarray | None, chosen: list[int]) -> tuple[np.ndarray, float, float]:
    """Orthonormal block spanned by the exactly-independent candidates ``chosen``.

    Returns the block plus the smallest kept and largest discarded singular
    values of the projected candidates (the numerical gap).
    """
    cand = _project_out(np.array(cand, dtype=float, copy=True), prev)
    r = len(chosen)
    _, sv, vt = np.linalg.svd(cand, full_matrices=False)
    kept = float(sv[r - 1]) if r else float("inf")
    dropped = float(sv[r]) if r < sv.size else 0.0
    if r == 0:
        return np.zeros((0, cand.shape[1])), kept, dropped
    span = vt[:r]
    return _restrict_support(_qr_rows(cand[chosen] @ span.T) @ span, cand, prev), kept, dropped


class ModularSpan:
    """Exact in-order rank tracking of integer vectors over GF(p).

    Rows are kept in reduced row-echelon form.  All arithmetic runs in
    float64 on integers below ``p < 2**20`` so that BLAS products of up to
    8192 terms stay exact.
    """

    def __init__(self, length: int, p: int = MODULUS):
        self.p = p
        self.rows = np.zeros((0, length))
        self.pivots = np.zeros(0, dtype=np.int64)

    @property
    def rank(self) -> int:
        return self.rows.shape[0]

    def _inv(self, a: float) -> int:
        return pow(int(a), self.p - 2, self.p)

    def extend(self, cand: np.ndarray) -> list[int]:
        """Add candidates in order; return indices of the independent ones."""
        p = self.p
        c = np.mod(np.asarray(cand, dtype=float), p)
        if self.rank:
            c = np.mod(c - np.mod(c[:, self.pivots] @ self.rows, p), p)
        new = np.zeros((min(c.shape[0], c.shape[1] - self.rank), c.shape[1]))
        piv: list[int] = []
        chosen: list[int] = []
        for i in range(c.shape[0]):
            v = c[i]
            m = len(piv)
            if m:
                v = np.mod(v - np.mod(v[piv] @ new[:m], p), p)
            nz = np.flatnonzero(v)
            if nz.size == 0:
                continue
            j = int(nz[0])
            v = np.mod(v * self._inv(v[j]), p)
            if m:
                new[:m] = np.mod(new[:m] - np.mod(np.outer(new[:m, j], v), p), p)
            new[m] = v
            piv.append(j)
            chosen.append(i)
        if piv:
            new = new[: len(piv)]
            if self.rank:
                self.rows = np.mod(self.rows - np.mod(self.rows[:, piv] @ new, p), p)
            self.rows = np.vstack([self.rows, new])
            self.pivots = np.concatenate([self.pivots, np.asarray(piv, dtype=np.int64)])
        return chosen


def integer_scale(ops, max_denominator: int = 64) -> int | None:
    """Smallest positive integer making every coefficient integral, if one exists."""
    from fractions import Fraction

    scale = 1
    for op in ops:
        for c in op.raw_terms().values():
            f = Fraction(c).limit_denominator(max_denominator)
            if abs(float(f) - c) > 1e-12 * max(1.0, abs(c)):
                return None
            scale = scale * f.denominator // math.gcd(scale, f.denominator)
    return scale


def orthonormalize_against(candidates, previous, rank_tol: float = RANK_TOL) -> list[OperatorSum]:
    """OperatorSum front end to :func:`orthonormalize_rows`."""
    ops = list(candidates) + list(previous)
    if not ops:
        return []
    n = ops[0].n
    if any(op.n != n for op in ops):
        raise ValueError("length mismatch among operators")
    prev = _as_matrix(list(previous), n)
    rows = orthonormalize_rows(_as_matrix(list(candidates), n), prev, rank_tol)
    return [OperatorSum.from_vector(r, n) for r in rows]


@dataclass
class BlockKrylovBasis:
    blocks: list[np.ndarray]
    n_qubits: int
    natives: NativeSet
    ortho_tol: float = ORTHO_TOL
    rank_tol: float = RANK_TOL
    truncated: bool = False
    model: str = "custom"
    rank_method: str = "float"
    gaps: list[tuple[float, float]] = field(default_factory=list)
    _stacked: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def M(self) -> int:
        return len(self.blocks)

    @property
    def dims(self) -> list[int]:
        return [b.shape[0] for b in self.blocks]

    @property
    def dimension(self) -> int:
        return sum(self.dims)

    @property
    def stacked(self) -> np.ndarray:
        if self._stacked is None:
            self._stacked = np.vstack(self.blocks)
        return self._stacked

    @property
    def block_of_row(self) -> np.ndarray:
        return np.repeat(np.arange(self.M), self.dims)

    def vector(self, J: int, m: int) -> OperatorSum:
        return OperatorSum.from_vector(self.blocks[J][m], self.n_qubits)

    def block(self, J: int) -> list[OperatorSum]:
        return [OperatorSum.from_vector(r, self.n_qubits) for r in self.blocks[J]]

    def gram_deviation(self) -> float:
        """Largest entrywise deviation of the full Gram matrix from identity."""
        q = self.stacked
        return float(np.max(np.abs(q @ q.T - np.eye(q.shape[0]))))

    def projector(self, upto: int | None = None) -> np.ndarray:
        """Orthogonal projector onto ``span(Omega_0 .. Omega_upto)``."""
        q = np.vstack(self.blocks[: (self.M if upto is None else upto + 1)])
        return q.T @ q


def build_basis(
    natives: NativeSet,
    ortho_tol: float = ORTHO_TOL,
    rank_tol: float = RANK_TOL,
    max_depth: int = MAX_DEPTH,
    rank_method: str = "auto",
) -> BlockKrylovBasis:
    """Build ``Omega_0, Omega_1, ...`` until closure or ``max_depth`` blocks.

    ``Omega_0`` is the orthonormalized native set.  Candidates for the next
    block are ``i[H_a, v]`` for natives ``a`` (outer) and vectors ``v`` of the
    newest block (inner), orthonormalized against all earlier blocks.

    Parameters
    ----------
    rank_method : {"auto", "exact", "float"}
        How a candidate is judged independent.  ``"exact"`` decides by
        elimination over GF(p) on integer images of the candidates, which
        needs rational native coefficients; ``"float"`` thresholds residual
        norms at ``rank_tol``; ``"auto"`` uses exact when possible.  Float
        decisions drift deep into large bases (noise grows by roughly
        ``|ad| / gap`` per block), so exact is the default.
    """
    if len(natives) == 0:
        raise ValueError("native set must be nonempty")
    if rank_method not in ("auto", "exact", "float"):
        raise ValueError(f"unknown rank_method {rank_method!r}")
    n = natives.n_qubits
    ads = [liouvillian(h) for h in natives]
    raw = _as_matrix(list(natives), n)

    scale = integer_scale(natives) if rank_method != "float" else None
    if rank_method == "exact" and scale is None:
        raise ValueError("exact ranks need rational native coefficients")
    exact = scale is not None

    gaps: list[tuple[float, float]] = []
    if exact:
        tracker = ModularSpan(4**n)
        int_ads = [liouvillian(h * scale) for h in natives]
        gens = np.rint(raw * scale)
        chosen = tracker.extend(gens)
        first, kept, dropped = _block_from_selection(raw, None, chosen)
        gens = np.mod(gens[chosen], tracker.p)
        gaps.append((kept, dropped))
    else:
        first = orthonormalize_rows(raw, None, rank_tol)
    if first.shape[0] == 0:
        raise ValueError("native set spans the zero operator only")

    blocks = [first]
    prev = first
    truncated = False
    while True:
        if len(blocks) >= max_depth:
            truncated = True
            break
        newest = blocks[-1]
        cand = np.vstack([(ad @ newest.T).T for ad in ads])
        if exact:
            int_cand = np.mod(np.vstack([(ad @ gens.T).T for ad in int_ads]), tracker.p)
            chosen = tracker.extend(int_cand)
            nxt, kept, dropped = _block_from_selection(cand, prev, chosen)
            gens = int_cand[chosen]
            if chosen:
                gaps.append((kept, dropped))
        else:
            nxt = orthonormalize_rows(cand, prev, rank_tol)
        logger.debug("block %d: %d candidates -> %d vectors", len(blocks), cand.shape[0], nxt.shape[0])
        if nxt.shape[0] == 0:
            break
        blocks.append(nxt)
        prev = np.vstack([prev, nxt])
    model = natives.spec.label if natives.spec is not None else "custom"
    basis = BlockKrylovBasis(
        blocks, n, natives, ortho_tol, rank_tol, truncated, model,
        "exact" if exact else "float", gaps,
    )
    basis._stacked = prev
    if truncated:
        logger.warning("basis truncated at max_depth=%d", max_depth)
    return basis


def universality_check(basis: BlockKrylovBasis) -> tuple[bool, int]:
    if basis.truncated:
        raise TruncatedBasisError("basis is truncated; increase max_depth")
    dim = basis.dimension
    return dim == 4**basis.n_qubits - 1, dim


@dataclass(frozen=True)
class ComplexityProfile:
    P: np.ndarray
    K: float
    R: np.ndarray
    out_of_span: float
    identity_coeff: float = 0.0

    @classmethod
    def from_weights(cls, P, out_of_span: float = 0.0, identity_coeff: float = 0.0) -> "ComplexityProfile":
        P = np.asarray(P, dtype=float)
        K = float(np.sum(P * 2.0 ** np.arange(len(P))))
        tail = np.concatenate([np.cumsum(P[::-1])[::-1][1:], [0.0]])
        return cls(P, K, tail + out_of_span, float(out_of_span), float(identity_coeff))


def _target_vector(basis: BlockKrylovBasis, target: OperatorSum) -> tuple[np.ndarray, float]:
    if target.n != basis.n_qubits:
        raise ValueError(f"target has {target.n} qubits, basis has {basis.n_qubits}")
    traceless, c0 = strip_identity(target)
    norm = traceless.norm()
    if norm == 0.0:
        raise ValueError("target has zero traceless part")
    return traceless.to_vector() / norm, c0


def complexity_profile(basis: BlockKrylovBasis, target: OperatorSum) -> ComplexityProfile:
    """Block weights ``P_J``, complexity ``K = sum P_J 2^J`` and residuals ``R_J``.

    The identity component of ``target`` is removed before normalization and
    reported as ``identity_coeff``.
    """
    vec, c0 = _target_vector(basis, target)
    ov = basis.stacked @ vec
    P = np.bincount(basis.block_of_row, weights=ov * ov, minlength=basis.M)
    out = 1.0 - float(P.sum())
    if out < -1e-9:
        raise ArithmeticError(f"block weights exceed one by {-out:.3g}")
    return ComplexityProfile.from_weights(P, max(out, 0.0), c0)


def layer_circuit_complexity(J: int) -> int:
    """Worst-case native evolution count ``3 * 2**J - 2`` for depth ``J``."""
    if J < 0:
        raise ValueError("depth must be non-negative")
    if J > 60:
        raise OverflowError("layer complexity exceeds 64-bit range for J > 60")
    return 3 * 2**J - 2


def access_depth(
    basis: BlockKrylovBasis,
    target: OperatorSum,
    containment_tol: float = CONTAINMENT_TOL,
    mode: str = "containment",
) -> int:
    """Minimum block index needed to reach ``target``.

    ``mode="containment"`` returns the smallest ``J`` whose cumulative span
    leaves a normalized residual with norm squared ``<= containment_tol``;
    ``mode="overlap"`` returns the first ``J`` with ``P_J > containment_tol``.
    """
    prof = complexity_profile(basis, target)
    if mode == "containment":
        resid = 1.0 - np.cumsum(prof.P)
        hits = np.flatnonzero(resid <= containment_tol)
        if hits.size == 0:
            raise NotContainedError(
                f"target not contained in basis (final residual {resid[-1]:.3g})", float(resid[-1])
            )
        return int(hits[0])
    if mode == "overlap":
        hits = np.flatnonzero(prof.P > containment_tol)
        if hits.size == 0:
            raise NotContainedError("target has no overlap with any block", 1.0)
        return int(hits[0])
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class SMinMap:
    values: list[np.ndarray]
    frontier: dict[int, int]

    def __getitem__(self, key: tuple[int, int]) -> int:
        J, m = key
        return int(self.values[J][m])

    def rows(self):
        for J, vals in enumerate(self.values):
            for m, s in enumerate(vals):
                yield J, m, int(s)


def s_min_map(basis: BlockKrylovBasis, coeff_tol: float = 1e-10) -> SMinMap:
    """Minimum Pauli weight of every basis vector plus the per-size frontier.

    ``frontier[s]`` is the smallest ``J`` at which some vector has ``S_min = s``.
    """
    w = pauli_weights(basis.n_qubits)
    big = basis.n_qubits + 1
    values = []
    for blk in basis.blocks:
        masked = np.where(np.abs(blk) > coeff_tol, w[None, :], big)
        values.append(masked.min(axis=1))
    frontier: dict[int, int] = {}
    for J, vals in enumerate(values):
        for s in np.unique(vals):
            frontier.setdefault(int(s), J)
    return SMinMap(values, dict(sorted(frontier.items())))


def sample_from_block(basis: BlockKrylovBasis, J: int, seed: int) -> OperatorSum:
    """Isotropic unit-norm random combination of the vectors of ``Omega_J``."""
    if not 0 <= J < basis.M:
        raise IndexError(f"block {J} out of range (M={basis.M})")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(basis.dims[J])
    g /= np.linalg.norm(g)
    return OperatorSum.from_vector(g @ basis.blocks[J], basis.n_qubits)


# -- persistence ------------------------------------------------------------

def save_basis(basis: BlockKrylovBasis, directory: str | Path) -> Path:
    """Write ``meta.json`` plus one raw ``<f8`` file per block.

    ``singular_gaps[J]`` records the smallest kept and largest discarded
    singular value met while forming block ``J`` (exact rank mode only).
    ``block_JJJ.f64`` holds ``n_J`` rows of ``4**L`` little-endian float64
    coefficients over the flat Pauli index, row-major.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for J, blk in enumerate(basis.blocks):
        name = f"block_{J:03d}.f64"
        (d / name).write_bytes(np.ascontiguousarray(blk, dtype="<f8").tobytes())
        files.append(name)
    meta = {
        "format": BASIS_FORMAT,
        "L": basis.n_qubits,
        "model": basis.model,
        "natives": [[name, op.to_text()] for name, op in zip(basis.natives.names, basis.natives)],
        "ortho_tol": basis.ortho_tol,
        "rank_tol": basis.rank_tol,
        "M": basis.M,
        "n_J": basis.dims,
        "dimension": basis.dimension,
        "truncated": basis.truncated,
        "rank_method": basis.rank_method,
        "singular_gaps": [[k, d] for k, d in basis.gaps],
        "block_files": files,
        "index": "row = vector; column = (xmask << L) | zmask; site i is bit i",
    }
    (d / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return d


def load_basis(directory: str | Path) -> BlockKrylovBasis:
    d = Path(directory)
    meta = json.loads((d / "meta.json").read_text())
    if meta.get("format") != BASIS_FORMAT:
        raise ValueError(f"unsupported basis format {meta.get('format')!r}")
    L = meta["L"]
    blocks = []
    for name, nJ in zip(meta["block_files"], meta["n_J"]):
        arr = np.frombuffer((d / name).read_bytes(), dtype="<f8").astype(float)
        blocks.append(arr.reshape(nJ, 4**L))
    names = tuple(name for name, _ in meta["natives"])
    ops = tuple(OperatorSum.from_text(text) for _, text in meta["natives"])
    from .models import ModelSpec

    spec = None
    if meta["model"] != "custom":
        spec = ModelSpec.parse(meta["model"], L)
    natives = NativeSet(spec, names, ops)
    return BlockKrylovBasis(
        blocks, L, natives, meta["ortho_tol"], meta["rank_tol"], meta["truncated"], meta["model"],
        meta.get("rank_method", "float"), [tuple(g) for g in meta.get("singular_gaps", [])],
    )
