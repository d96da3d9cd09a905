import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from krylovsim.acceptance import gradient_error, product_formula_errors
from krylovsim.grape import (
    ControlPulse,
    GrapeConfig,
    GrapeResult,
    NonFiniteLossError,
    SynthesisCurve,
    commutator_pulse,
    fidelity,
    loss_and_gradient,
    nested_commutator_pulse,
    optimize,
    propagate,
    random_pulse,
    read_pulse,
    step_hamiltonian,
    target_unitary,
    trotter_pulse,
    warm_start_sweep,
    write_pulse,
)
from krylovsim.krylov import layer_circuit_complexity
from krylovsim.models import ModelSpec, build_native_set
from krylovsim.pauli import OperatorSum, to_dense

X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]])
Z = np.diag([1.0 + 0j, -1.0])


def natives(L=2, kind="ising"):
    return build_native_set(ModelSpec(L, kind)).dense()


def unitary_error(u):
    return np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))


# -- pulses ---------------------------------------------------------------------

def test_pulse_validation():
    with pytest.raises(ValueError):
        ControlPulse(np.zeros((1, 4)), 0.0)
    with pytest.raises(ValueError):
        ControlPulse(np.array([[np.inf]]), 0.1)
    with pytest.raises(ValueError):
        ControlPulse(np.zeros((0, 2)), 0.1)
    p = ControlPulse(np.ones((3, 4)), 0.1)
    assert p.n == 3 and p.duration == pytest.approx(0.3)
    assert p.extended(5).n == 5 and np.all(p.extended(5).amplitudes[3:] == 0)
    with pytest.raises(ValueError):
        p.extended(2)


def test_config_validation():
    with pytest.raises(ValueError):
        GrapeConfig(threshold=1.5)
    with pytest.raises(ValueError):
        GrapeConfig(tau=0)
    with pytest.raises(ValueError):
        GrapeConfig(iterations=-1)
    assert GrapeConfig().digest() == GrapeConfig().digest()
    assert GrapeConfig(seed=1).digest() != GrapeConfig().digest()


def test_step_hamiltonian():
    ns = natives()
    assert np.array_equal(step_hamiltonian([1, 0, 0, 0], ns), ns[0])
    assert not np.any(step_hamiltonian([0, 0, 0, 0], ns))
    h = step_hamiltonian([0.3, -1.2, 0.7, 2.0], ns)
    assert np.max(np.abs(h - h.conj().T)) < 1e-12
    with pytest.raises(ValueError):
        step_hamiltonian([1, 2], ns)


# -- propagation / fidelity ---------------------------------------------------------

def test_propagate_examples():
    dt = 0.1
    u = propagate(ControlPulse([[np.pi / (2 * dt)]], dt), [X])
    assert np.max(np.abs(u + 1j * X)) < 1e-10
    assert np.allclose(propagate(ControlPulse.zeros(4, 4, dt), natives()), np.eye(4))


def test_propagate_order():
    # step 0 acts first: U = exp(-i Z a) exp(-i X b)
    dt = 1.0
    u = propagate(ControlPulse([[0.4, 0.0], [0.0, 0.9]], dt), [X, Z])
    ref = target_unitary(Z, 0.9) @ target_unitary(X, 0.4)
    assert np.allclose(u, ref, atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_propagate_unitary(seed, L):
    rng = np.random.default_rng(seed)
    p = ControlPulse(rng.normal(scale=5, size=(6, 4)), 0.1)
    assert unitary_error(propagate(p, natives(L))) < 1e-10


def test_fidelity_examples():
    rng = np.random.default_rng(0)
    u = propagate(ControlPulse(rng.normal(size=(5, 4)), 0.3), natives(3))
    assert fidelity(u, u) == pytest.approx(1, abs=1e-14)
    assert fidelity(np.eye(2), np.exp(0.7j) * np.eye(2)) == pytest.approx(1)
    assert fidelity(np.eye(2), X) == 0.0
    with pytest.raises(ValueError):
        fidelity(np.eye(2), np.eye(4))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0, 6.3))
def test_fidelity_invariances(seed, phi):
    rng = np.random.default_rng(seed)
    ns = natives(2)
    u, v, w = (propagate(ControlPulse(rng.normal(size=(3, 4)), 0.3), ns) for _ in range(3))
    f = fidelity(u, v)
    assert 0 <= f <= 1
    assert abs(fidelity(np.exp(1j * phi) * u, v) - f) < 1e-12
    assert abs(fidelity(w @ u, w @ v) - f) < 1e-12


# -- gradient -------------------------------------------------------------------------

def test_gradient_at_exact_solution():
    ns = natives()
    p = ControlPulse(np.random.default_rng(2).normal(size=(5, 4)), 0.1)
    loss, g = loss_and_gradient(p, ns, propagate(p, ns))
    assert loss < 1e-12 and np.linalg.norm(g) < 1e-6


@pytest.mark.parametrize("seed", range(10))
def test_gradient_finite_differences(seed):
    rng = np.random.default_rng(seed)
    ns = natives(2, "heisenberg")
    u = rng.normal(scale=2, size=(5, 4))
    u[seed % 5] = 0.0
    target = propagate(ControlPulse(rng.normal(size=(3, 4)), 0.2), ns)
    assert gradient_error(ControlPulse(u, 0.1), ns, target) < 1e-6


def test_gradient_degenerate_step():
    # repeated eigenvalues in every step: H = u * (X0 + X1) has a doubly degenerate 0
    ns = natives()
    u = np.zeros((3, 4))
    u[:, 0] = [1.0, 0.0, -2.0]
    target = propagate(ControlPulse(np.random.default_rng(3).normal(size=(2, 4)), 0.3), ns)
    assert gradient_error(ControlPulse(u, 0.1), ns, target) < 1e-6


# -- optimizer --------------------------------------------------------------------------

def test_optimize_single_channel_target():
    ns = natives()
    target = target_unitary(ns[0], 0.5)
    res = optimize(random_pulse(1, 4, 0.1, 1e-2, 0), target, GrapeConfig(iterations=500), ns)
    assert res.loss < 1e-8 and res.converged
    assert res.pulse.amplitudes[0, 0] == pytest.approx(5.0, abs=1e-3)


def test_optimize_zero_budget_and_best_kept():
    ns = natives()
    target = target_unitary(ns[3], 0.5)
    init = random_pulse(2, 4, 0.1, 1e-2, 1)
    res = optimize(init, target, GrapeConfig(iterations=0), ns)
    assert np.array_equal(res.pulse.amplitudes, init.amplitudes)
    assert res.loss == loss_and_gradient(init, ns, target)[0]
    res = optimize(init, target, GrapeConfig(iterations=40, learning_rate=0.5), ns)
    assert res.loss == min(res.history)
    assert res.loss == pytest.approx(loss_and_gradient(res.pulse, ns, target)[0])


def test_optimize_deterministic_and_clamped():
    ns = natives()
    target = target_unitary(ns[0] + ns[3], 0.5)
    cfg = GrapeConfig(iterations=30, u_max=2.0)
    a = optimize(random_pulse(3, 4, 0.1, 1e-2, 5), target, cfg, ns)
    b = optimize(random_pulse(3, 4, 0.1, 1e-2, 5), target, cfg, ns)
    assert np.array_equal(a.history, b.history)
    assert np.all(np.abs(a.pulse.amplitudes) <= 2.0)


def test_optimize_rejects_nonfinite():
    ns = [np.array([[np.nan, 0], [0, 0]])]
    with pytest.raises((NonFiniteLossError, np.linalg.LinAlgError)):
        optimize(ControlPulse([[1.0]], 0.1), np.eye(2), GrapeConfig(iterations=2), ns)


def test_result_json():
    ns = natives()
    res = optimize(random_pulse(1, 4, 0.1, 1e-2, 0), target_unitary(ns[0], 0.5), GrapeConfig(iterations=3), ns)
    blob = json.loads(json.dumps(res.to_json()))
    assert len(blob["history"]) == 4 and blob["loss"] == res.loss


# -- warm start ---------------------------------------------------------------------------

def test_warm_start_trivial_target():
    ns = natives()
    target = target_unitary(ns[0], 0.5)
    curve = warm_start_sweep(target, [1, 2, 4], GrapeConfig(iterations=300), ns)
    assert curve.n_c == 1


def test_warm_start_monotone():
    ns = natives(3)
    op = to_dense(OperatorSum.from_label("IYI"))
    curve = warm_start_sweep(target_unitary(op, 0.5), [1, 2, 4, 8], GrapeConfig(iterations=40, restarts=2), ns)
    assert all(b <= a + 1e-9 for a, b in zip(curve.losses, curve.losses[1:]))
    assert curve.steps == [1, 2, 4, 8]


def test_warm_start_schedule_validation():
    with pytest.raises(ValueError):
        warm_start_sweep(np.eye(4), [2, 2], GrapeConfig(), natives())
    with pytest.raises(ValueError):
        warm_start_sweep(np.eye(4), [], GrapeConfig(), natives())


def test_curve_threshold_scan():
    c = SynthesisCurve(steps=[10, 20], losses=[0.1, 5e-4], threshold=1e-3)
    assert c.n_c == 20
    assert SynthesisCurve(steps=[10], losses=[0.1]).n_c is None


# -- product formulas -----------------------------------------------------------------------

def test_trotter_pulse_layout():
    p = trotter_pulse(0.3, 0.7, "X", "int", 2, 0.1)
    assert p.n == 4
    assert np.allclose(p.amplitudes[0], [0, 0, 0, -0.7 / 0.2])
    assert np.allclose(p.amplitudes[1], [-0.3 / 0.2, 0, 0, 0])
    with pytest.raises(ValueError):
        trotter_pulse(1, 1, "X", "X", 1, 0.1)
    with pytest.raises(ValueError):
        trotter_pulse(1, 1, "X", "Z", 0, 0.1)


def test_trotter_identity_and_commuting_pair():
    ns = natives()
    for n in (1, 3):
        u = propagate(trotter_pulse(0.0, 0.0, "X", "int", n, 0.1), ns)
        assert np.allclose(u, np.eye(4))
    u = propagate(trotter_pulse(0.8, -0.5, "X", "break", 1, 0.1), ns)
    exact = target_unitary(-(0.8 * ns[0] - 0.5 * ns[2]), 1.0)
    assert 1 - fidelity(u, exact) < 1e-10


def test_product_formula_scaling():
    steps, et, ec = product_formula_errors()
    st_ = np.polyfit(np.log(steps), np.log(et), 1)[0]
    sc = np.polyfit(np.log(steps), np.log(ec), 1)[0]
    assert abs(st_ + 1) <= 0.3 and abs(sc + 0.5) <= 0.3
    for i in range(3):
        assert 1.8 <= et[i] / et[i + 1] <= 2.2


def test_commutator_pulse_examples():
    # commuting pair -> identity
    ns = natives()
    for n in (1, 4):
        assert np.allclose(propagate(commutator_pulse("X", "break", n, 0.1), ns), np.eye(4), atol=1e-12)
    # L=1, H1 = Z, H2 = X: target exp(-[Z, X]) = exp(-2iY)
    exact = target_unitary(2 * Y, 1.0)
    errs = [np.linalg.norm(propagate(commutator_pulse(0, 1, n, 0.1, channels=2), [Z, X]) - exact, 2) for n in (4, 16, 64, 256)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    # n=1 is the bare group commutator e^{iZ} e^{iX} e^{-iZ} e^{-iX}
    bare = target_unitary(-Z, 1) @ target_unitary(-X, 1) @ target_unitary(Z, 1) @ target_unitary(X, 1)
    assert np.allclose(propagate(commutator_pulse(0, 1, 1, 0.1, channels=2), [Z, X]), bare, atol=1e-12)


def test_nested_commutator_step_count():
    seg = ControlPulse([[1.0, 0.0]], 0.1)
    native = ControlPulse([[0.0, 1.0]], 0.1)
    for J in range(11):
        assert seg.n == layer_circuit_complexity(J)
        seg = nested_commutator_pulse(seg, native)
        assert seg.n == 2 * layer_circuit_complexity(J) + 2


def test_inverse_pulse():
    ns = natives()
    p = random_pulse(4, 4, 0.1, 3.0, 9)
    assert np.allclose(propagate(p.then(p.inverse()), ns), np.eye(4), atol=1e-12)


# -- pulse files ------------------------------------------------------------------------------

def test_pulse_file_roundtrip(tmp_path):
    p = random_pulse(5, 4, 0.1, 1.0, 2)
    f = write_pulse(p, tmp_path / "p.csv", {"model": "ising", "seed": 2, "config_hash": GrapeConfig().digest()})
    assert f.read_text().splitlines()[0] == "step,u_X,u_Z,u_break,u_int"
    side = json.loads((tmp_path / "p.json").read_text())
    assert side["dt"] == 0.1 and side["model"] == "ising"
    q = read_pulse(f)
    assert np.array_equal(q.amplitudes, p.amplitudes) and q.dt == p.dt
