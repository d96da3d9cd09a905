import pytest

from krylovsim.models import (
    CHANNELS,
    ModelSpec,
    NativeSet,
    build_native_set,
    build_target,
    enumerate_lowweight_set,
    heisenberg_chain,
    ising_chain,
    reflect,
    xxz_chain,
)
from krylovsim.pauli import OperatorSum, PauliString, bracket, hs_inner


def test_spec_validation_and_parse():
    with pytest.raises(ValueError):
        ModelSpec(1)
    with pytest.raises(ValueError):
        ModelSpec(3, "kitaev")
    with pytest.raises(ValueError):
        ModelSpec(3, "xxz", float("inf"))
    assert ModelSpec.parse("xxz:2.5", 4) == ModelSpec(4, "xxz", 2.5)
    assert ModelSpec.parse("xxz", 4).delta == 1.5
    assert ModelSpec.parse("Heisenberg", 3).kind == "heisenberg"
    assert ModelSpec(3, "xxz", 1.5).label == "xxz:1.5"


def test_native_set_structure():
    ns = build_native_set(ModelSpec(3, "ising"))
    assert ns.names == CHANNELS
    hx, hz, hb, hint = ns
    assert hx == OperatorSum(3, {"XII": 1, "IXI": 1, "IIX": 1})
    assert hz == OperatorSum(3, {"ZII": 1, "IZI": 1, "IIZ": 1})
    assert hb == OperatorSum.from_label("XII")
    assert hint == OperatorSum(3, {"ZZI": 1, "IZZ": 1})
    assert len(hint) == 2


def test_heisenberg_L2():
    h = build_native_set(ModelSpec(2, "heisenberg"))[3]
    assert h == OperatorSum(2, {"XX": 1, "YY": 1, "ZZ": 1})


@pytest.mark.parametrize("kind", ["ising", "heisenberg", "xxz"])
@pytest.mark.parametrize("L", [2, 3, 6])
def test_natives_traceless_and_break_norm(kind, L):
    ns = build_native_set(ModelSpec(L, kind))
    for h in ns:
        assert h.coeff(PauliString.identity(L)) == 0.0
    assert hs_inner(ns[2], ns[2]) == 1.0


@pytest.mark.parametrize("L", range(2, 7))
def test_heisenberg_u1(L):
    sx = build_native_set(ModelSpec(L))[0]
    assert bracket(heisenberg_chain(L), sx, prune_tol=0.0).is_zero


def test_xxz_delta_one_is_heisenberg():
    assert xxz_chain(4, 1.0) == heisenberg_chain(4)


def test_reflection():
    for L in (3, 4, 5):
        assert reflect(ising_chain(L)) == ising_chain(L)
        assert reflect(heisenberg_chain(L)) == heisenberg_chain(L)
        hb = build_native_set(ModelSpec(L))[2]
        assert reflect(hb) != hb
        assert reflect(hb) == OperatorSum.from_pauli(PauliString.single(L, L - 1, "X"))


def test_targets():
    z = build_target("Z1Z4", ModelSpec(6))
    assert z == OperatorSum.from_label("IZIIZI")
    assert next(iter(z))[0].weight == 2
    xxz = build_target("xxz:1.5", ModelSpec(3))
    assert xxz == OperatorSum(3, {"XXI": 1, "YYI": 1, "ZZI": 1.5, "IXX": 1, "IYY": 1, "IZZ": 1.5})
    assert build_target("xxz", ModelSpec(3)) == xxz
    assert build_target("Y2", ModelSpec(3)) == OperatorSum.from_label("IIY")
    assert build_target("ising", ModelSpec(3)) == ising_chain(3)
    assert build_target("heisenberg", ModelSpec(3)) == heisenberg_chain(3)
    assert build_target("XYZ", ModelSpec(3)) == OperatorSum.from_label("XYZ")


def test_target_errors():
    with pytest.raises(IndexError):
        build_target("X5", ModelSpec(3))
    with pytest.raises(ValueError):
        build_target("Z2Z1", ModelSpec(3))
    with pytest.raises(IndexError):
        build_target("Z0Z3", ModelSpec(3))
    with pytest.raises(ValueError):
        build_target("nonsense", ModelSpec(3))


def test_target_from_file(tmp_path):
    f = tmp_path / "h.txt"
    f.write_text("0.5 XZI\n-1 IYY\n")
    assert build_target(f"file:{f}", ModelSpec(3)) == OperatorSum(3, {"XZI": 0.5, "IYY": -1})
    with pytest.raises(ValueError):
        build_target(f"file:{f}", ModelSpec(4))


@pytest.mark.parametrize("L,count", [(3, 12), (4, 18), (6, 33)])
def test_lowweight_set(L, count):
    s = enumerate_lowweight_set(ModelSpec(L))
    assert len(s) == count
    assert s[0] == ("X0", OperatorSum.from_pauli(PauliString.single(L, 0, "X")))
    assert [n for n, _ in s[:4]] == ["X0", "Y0", "Z0", "X1"]
    assert s[3 * L][0] == "Z0Z1"
    assert all(next(iter(op))[0].weight <= 2 for _, op in s)


def test_custom_native_set():
    ns = NativeSet.custom([OperatorSum.from_label("X"), OperatorSum.from_label("Z")])
    assert ns.n_qubits == 1 and ns.names == ("H0", "H1")
    with pytest.raises(ValueError):
        NativeSet.custom([OperatorSum.from_label("X"), OperatorSum.from_label("ZZ")])
    with pytest.raises(ValueError):
        NativeSet.custom([])
