"""Acceptance checks, shared by ``krylovsim verify`` and the test suite.

Each check returns a :class:`CheckResult`; :func:`run_checks` prints one
line per check and returns the process exit code.
"""
from __future__ import annotations

import json
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import grape, krylov
from .experiments import DEFAULTS, cmd_layer_sweep, cmd_pauli_sweep, merge_config
from .models import ModelSpec, build_native_set, build_target, heisenberg_chain
from .pauli import OperatorSum, PauliString, bracket, hs_inner, to_dense


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    skipped: bool = False

    def line(self) -> str:
        status = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        return f"{status}  [{self.number:2d}] {self.name:24s} {self.seconds:8.1f}s  {self.detail}"


@dataclass
class Context:
    quick: bool = False
    jobs: int = 1
    out: Path | None = None


def random_operator(n: int, rng, terms: int | None = None) -> OperatorSum:
    """Random real combination of Pauli words (identity allowed)."""
    size = 4**n
    k = size if terms is None else min(terms, size)
    idx = rng.choice(size, size=k, replace=False)
    vec = np.zeros(size)
    vec[idx] = rng.standard_normal(k)
    return OperatorSum.from_vector(vec, n)


# -- individual checks ---------------------------------------------------------

def check_algebra_oracle(ctx: Context):
    rng = np.random.default_rng(1)
    worst_b = worst_h = 0.0
    for _ in range(200):
        a = random_operator(3, rng, int(rng.integers(1, 20)))
        b = random_operator(3, rng, int(rng.integers(1, 20)))
        da, db = to_dense(a), to_dense(b)
        dense = 1j * (da @ db - db @ da)
        worst_b = max(worst_b, float(np.max(np.abs(to_dense(bracket(a, b)) - dense))))
        ref = np.trace(da.conj().T @ db).real / 8
        worst_h = max(worst_h, abs(hs_inner(a, b) - ref))
    ok = worst_b < 1e-10 and worst_h < 1e-10
    return ok, f"max bracket err {worst_b:.2e}, max inner err {worst_h:.2e}"


def _bases(L: int):
    return {kind: krylov.build_basis(build_native_set(ModelSpec(L, kind))) for kind in ("ising", "heisenberg")}


_BASIS_CACHE: dict[int, dict] = {}


def _cached_bases(L: int):
    if L not in _BASIS_CACHE:
        _BASIS_CACHE[L] = _bases(L)
    return _BASIS_CACHE[L]


def check_universality(ctx: Context):
    parts, ok = [], True
    for L in (3,) if ctx.quick else (3, 4):
        for kind, b in _cached_bases(L).items():
            good = (not b.truncated) and b.dimension == 4**L - 1
            ok &= good
            parts.append(f"L={L} {kind} dim={b.dimension}")
    return ok, "; ".join(parts)


def check_depth_ordering(ctx: Context):
    parts, ok = [], True
    for L in (3,) if ctx.quick else (3, 4):
        bs = _cached_bases(L)
        mi, mh = bs["ising"].M, bs["heisenberg"].M
        ok &= mh > mi
        parts.append(f"L={L} M_heis={mh} M_ising={mi}")
    return ok, "; ".join(parts)


def check_layer_complexity(ctx: Context):
    C = krylov.layer_circuit_complexity
    vals = [C(J) for J in range(5)]
    ok = vals == [1, 4, 10, 22, 46]
    ok &= all(C(J + 1) == 2 * C(J) + 2 for J in range(11))
    # constructive count: group commutator of a depth-J segment with one native step
    seg = grape.ControlPulse(np.array([[1.0, 0.0]]), 0.1)
    native = grape.ControlPulse(np.array([[0.0, 1.0]]), 0.1)
    counts = [seg.n]
    for _ in range(11):
        seg = grape.nested_commutator_pulse(seg, native)
        counts.append(seg.n)
    ok &= all(isinstance(c, int) for c in counts)
    ok &= counts == [C(J) for J in range(12)]
    return ok, f"C_0..4={vals}, constructive counts={counts[:6]}..."


def check_complexity_normalization(ctx: Context):
    rng = np.random.default_rng(5)
    bs = _cached_bases(3)
    b = bs["ising"]
    worst = 0.0
    for _ in range(100):
        prof = krylov.complexity_profile(b, random_operator(3, rng))
        worst = max(worst, abs(prof.P.sum() + prof.out_of_span - 1.0))
    hx = build_native_set(ModelSpec(3, "ising"))[0]
    kx = krylov.complexity_profile(b, hx).K
    worst_k = 0.0
    for basis in bs.values():
        for J in range(basis.M):
            for m in range(basis.dims[J]):
                k = krylov.complexity_profile(basis, basis.vector(J, m)).K
                worst_k = max(worst_k, abs(k - 2.0**J) / 2.0**J)
    ok = worst <= 1e-9 and abs(kx - 1) < 1e-10 and worst_k < 1e-9
    return ok, f"max |sum-1|={worst:.1e}, K(H_X)-1={kx - 1:.1e}, max rel K(Omega_J,m) err={worst_k:.1e}"


def check_u1_symmetry(ctx: Context):
    bad = []
    for L in range(2, 7):
        sx = OperatorSum(L, {PauliString.single(L, i, "X"): 1.0 for i in range(L)})
        c = bracket(heisenberg_chain(L), sx, prune_tol=0.0)
        if c.raw_terms():
            bad.append(L)
    return not bad, "bracket vanishes exactly for L=2..6" if not bad else f"nonzero at L={bad}"


def gradient_error(pulse, natives_dense, target, h=1e-6) -> float:
    """Largest relative deviation of the exact gradient from central differences.

    Entries are compared relative to ``max(|fd|, 1e-3)`` so that vanishing
    components are judged on an absolute scale.
    """
    _, g = grape.loss_and_gradient(pulse, natives_dense, target)
    u = pulse.amplitudes
    fd = np.empty_like(u)
    for k in range(u.shape[0]):
        for a in range(u.shape[1]):
            up, um = u.copy(), u.copy()
            up[k, a] += h
            um[k, a] -= h
            lp = grape.loss_and_gradient(grape.ControlPulse(up, pulse.dt), natives_dense, target)[0]
            lm = grape.loss_and_gradient(grape.ControlPulse(um, pulse.dt), natives_dense, target)[0]
            fd[k, a] = (lp - lm) / (2 * h)
    return float(np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-3)))


def check_gradient(ctx: Context):
    rng = np.random.default_rng(7)
    ns = build_native_set(ModelSpec(2, "ising")).dense()
    worst = 0.0
    for i in range(50):
        u = rng.normal(scale=2.0, size=(5, 4))
        u[i % 5] = 0.0  # zero Hamiltonian: fully degenerate step
        target = grape.propagate(grape.ControlPulse(rng.normal(size=(4, 4)), 0.2), ns)
        worst = max(worst, gradient_error(grape.ControlPulse(u, 0.1), ns, target))
    return worst < 1e-6, f"max relative error {worst:.2e} over 50 instances"


def _slope(ns_, errs) -> float:
    return float(np.polyfit(np.log(ns_), np.log(errs), 1)[0])


def product_formula_errors(steps=(8, 16, 32, 64, 128, 256), dt=0.1):
    """Trotter and group-commutator errors on the L=2 Ising channels ``H_X``, ``H_int``."""
    natives = build_native_set(ModelSpec(2, "ising"))
    ns = natives.dense()
    h1, h2 = ns[0], ns[3]
    exact_t = grape.target_unitary(-(h1 + h2), 1.0)  # exp(i (H1 + H2))
    # exp(-[H1, H2]) = exp(i K) with Hermitian K = i [H1, H2]
    exact_c = grape.target_unitary(-1j * (h1 @ h2 - h2 @ h1), 1.0)
    et, ec = [], []
    for n in steps:
        ut = grape.propagate(grape.trotter_pulse(1.0, 1.0, "X", "int", n, dt), ns)
        uc = grape.propagate(grape.commutator_pulse("X", "int", n, dt), ns)
        et.append(np.linalg.norm(ut - exact_t, 2))
        ec.append(np.linalg.norm(uc - exact_c, 2))
    return list(steps), et, ec


def check_product_formulas(ctx: Context):
    steps, et, ec = product_formula_errors()
    st, sc = _slope(steps, et), _slope(steps, ec)
    ratios = [et[i] / et[i + 1] for i in range(3)]
    ok = abs(st + 1) <= 0.3 and abs(sc + 0.5) <= 0.3 and all(1.8 <= r <= 2.2 for r in ratios)
    return ok, f"trotter slope {st:.3f}, commutator slope {sc:.3f}, trotter ratios {np.round(ratios, 3).tolist()}"


def check_grape_sanity(ctx: Context):
    ns = build_native_set(ModelSpec(2, "ising")).dense()
    target = grape.target_unitary(ns[0], 0.5)
    cfg = grape.GrapeConfig(iterations=500)
    res = grape.optimize(grape.random_pulse(1, 4, 0.1, 1e-2, 0), target, cfg, ns)
    ok1 = res.loss < 1e-8
    # warm-start monotonicity on a depth-1 target at L=3
    spec = ModelSpec(3, "ising")
    nat = build_native_set(spec)
    t3 = grape.target_unitary(to_dense(build_target("Y0", spec)), 0.5)
    curve = grape.warm_start_sweep(t3, [1, 2, 4, 8, 16], grape.GrapeConfig(iterations=60), nat.dense())
    rises = max(b - a for a, b in zip(curve.losses, curve.losses[1:]))
    ok2 = rises <= 1e-9
    return ok1 and ok2, f"n=1 loss {res.loss:.1e}; largest warm-start increase {rises:.1e}"


def check_trend(ctx: Context):
    if ctx.quick:
        return None
    out = ctx.out or Path(tempfile.mkdtemp(prefix="krylovsim-verify-"))
    cfg = merge_config(DEFAULTS, {"L": 4, "model": "ising", "jobs": ctx.jobs})
    lines = []
    cmd_layer_sweep(cfg, out, echo=lines.append)
    cmd_pauli_sweep(cfg, out, echo=lines.append)
    lay = json.loads((out / "layer-sweep" / "manifest.json").read_text())["summary"]
    pau = json.loads((out / "pauli-sweep" / "manifest.json").read_text())["summary"]
    gamma = (lay["fit"] or {}).get("gamma")
    rho, frac = pau["spearman_rho"], pau["uncensored_fraction"]
    ok = gamma is not None and gamma > 0 and rho > 0.3 and frac >= 0.8
    g = "none" if gamma is None else f"{gamma:.3f}"
    return ok, f"gamma={g}, spearman rho={rho:.3f}, uncensored {frac:.0%} (outputs in {out})"


def check_residual_contract(ctx: Context):
    worst_tail = 0.0
    mono = True
    Ls = (3,) if ctx.quick else (3, 4)
    rng = np.random.default_rng(11)
    for L in Ls:
        for kind, b in _cached_bases(L).items():
            spec = ModelSpec(L, kind)
            ops = [build_target("xxz:1.5", spec), build_target("xxz:1", spec)]
            ops += [random_operator(L, rng) for _ in range(5)]
            for op in ops:
                prof = krylov.complexity_profile(b, op)
                mono &= bool(np.all(np.diff(prof.R) <= 1e-12))
                worst_tail = max(worst_tail, abs(prof.R[-1] - prof.out_of_span))
    p0 = []
    for L in Ls:
        spec = ModelSpec(L, "heisenberg")
        prof = krylov.complexity_profile(_cached_bases(L)["heisenberg"], build_target("xxz:1", spec))
        p0.append(prof.P[0])
    ok = mono and worst_tail <= 1e-9 and all(abs(p - 1) <= 1e-9 for p in p0)
    return ok, f"monotone={mono}, max |R_last - out|={worst_tail:.1e}, P_0(xxz:1 on heisenberg)={[round(float(p), 12) for p in p0]}"


CHECKS: list[tuple[int, str, Callable]] = [
    (1, "algebra-oracle", check_algebra_oracle),
    (2, "universality", check_universality),
    (3, "depth-ordering", check_depth_ordering),
    (4, "closed-form-CJ", check_layer_complexity),
    (5, "complexity-normalization", check_complexity_normalization),
    (6, "u1-symmetry", check_u1_symmetry),
    (7, "gradient", check_gradient),
    (8, "product-formulas", check_product_formulas),
    (9, "grape-sanity", check_grape_sanity),
    (10, "trend-reproduction", check_trend),
    (11, "residual-contract", check_residual_contract),
]


def run_check(number: int, ctx: Context | None = None) -> CheckResult:
    ctx = ctx or Context()
    num, name, fn = next(c for c in CHECKS if c[0] == number)
    t = time.perf_counter()
    try:
        res = fn(ctx)
    except Exception as exc:  # a crashing check is a failing check
        return CheckResult(num, name, False, f"raised {type(exc).__name__}: {exc}", time.perf_counter() - t)
    dt = time.perf_counter() - t
    if res is None:
        return CheckResult(num, name, True, "skipped (--quick)", dt, skipped=True)
    ok, detail = res
    return CheckResult(num, name, bool(ok), detail, dt)


def run_checks(quick: bool = False, names=None, jobs: int = 1, out: Path | None = None, echo=print) -> int:
    """Run the checks, print a table, return 0 when all pass and 1 otherwise."""
    known = {name for _, name, _ in CHECKS}
    if names:
        unknown = set(names) - known
        if unknown:
            raise ValueError(f"unknown checks: {sorted(unknown)}")
    ctx = Context(quick=quick, jobs=jobs, out=None if out is None else Path(out) / "verify")
    results = [run_check(num, ctx) for num, name, _ in CHECKS if not names or name in names]
    for r in results:
        echo(r.line())
    failed = [r.name for r in results if not r.passed]
    echo(f"{len(results) - len(failed)}/{len(results)} checks passed" + (f"; failed: {', '.join(failed)}" if failed else ""))
    return 1 if failed else 0
