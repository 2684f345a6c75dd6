import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bell as oracle_bell
from oracles import joint_distribution, ket
from qkalab.quantum import (
    Basis,
    NormDriftError,
    PolarizationState,
    QubitRegister,
    apply_cnot,
    bell_pair,
    decode,
    measure,
    prepare,
    prepare_state,
    random_states,
    with_ancilla,
)

R = 1 / math.sqrt(2)


def amps(reg):
    return np.array(reg.amplitudes)


def test_prepare_amplitudes():
    assert np.allclose(amps(prepare(0, Basis.Z)), [1, 0])
    assert np.allclose(amps(prepare(1, Basis.Z)), [0, 1])
    assert np.allclose(amps(prepare(0, Basis.X)), [R, R])
    assert np.allclose(amps(prepare(1, Basis.X)), [R, -R])


def test_prepare_rejects_bad_bit():
    with pytest.raises(ValueError):
        prepare(2, Basis.Z)


def test_register_rejects_unnormalised_and_wrong_size():
    with pytest.raises(ValueError):
        QubitRegister([1, 1])
    with pytest.raises(ValueError):
        QubitRegister([1, 0, 0])


def test_bell_pair_amplitudes():
    assert np.allclose(amps(bell_pair()), [R, 0, 0, R])


@pytest.mark.parametrize("basis", [Basis.Z, Basis.X])
def test_bell_halves_agree_in_same_basis(basis):
    rng = random.Random(1)
    for _ in range(2000):
        reg = bell_pair()
        a = measure(reg, 0, basis, rng).bit
        b = measure(reg, 1, basis, rng).bit
        assert a == b


def test_cnot_examples():
    reg = QubitRegister([1, 0, 0, 0])
    assert np.allclose(amps(apply_cnot(reg, 0, 1)), [1, 0, 0, 0])
    reg = with_ancilla(prepare(0, Basis.X))
    assert np.allclose(amps(reg), [R, 0, R, 0])
    assert np.allclose(amps(apply_cnot(reg, 0, 1)), [R, 0, 0, R])
    reg = with_ancilla(prepare(1, Basis.Z))
    assert np.allclose(amps(reg), [0, 0, 1, 0])
    assert np.allclose(amps(apply_cnot(reg, 0, 1)), [0, 0, 0, 1])


def test_cnot_reversed_control():
    reg = QubitRegister([0, 1, 0, 0])
    assert np.allclose(amps(apply_cnot(reg, 1, 0)), [0, 0, 0, 1])


def test_cnot_argument_errors():
    with pytest.raises(ValueError):
        apply_cnot(prepare(0, Basis.Z), 0, 1)
    with pytest.raises(ValueError):
        apply_cnot(bell_pair(), 1, 1)
    with pytest.raises(IndexError):
        apply_cnot(bell_pair(), 0, 2)


def test_eigenstate_measurement_is_deterministic():
    rng = random.Random(0)
    for state in PolarizationState:
        for _ in range(50):
            out = measure(prepare_state(state), 0, state.basis, rng)
            assert out.bit == state.bit
            assert out.basis_used is state.basis


def test_conjugate_basis_frequency():
    rng = random.Random(2)
    trials = 100_000
    ones = sum(measure(prepare(0, Basis.X), 0, Basis.Z, rng).bit for _ in range(trials))
    assert abs(ones / trials - 0.5) <= 0.01


def test_entangled_x_measurement_is_balanced():
    rng = random.Random(3)
    trials = 20_000
    ones = sum(measure(bell_pair(), 0, Basis.X, rng).bit for _ in range(trials))
    expected = joint_distribution(oracle_bell(), [(0, "X")])[(1,)]
    assert expected == pytest.approx(0.5)
    assert abs(ones / trials - expected) <= 3 * math.sqrt(0.25 / trials)


def test_collapse_zeroes_amplitudes_exactly():
    rng = random.Random(4)
    reg = bell_pair()
    bit = measure(reg, 0, Basis.Z, rng).bit
    probs = reg.probabilities()
    assert probs == [1.0, 0.0, 0.0, 0.0] if bit == 0 else probs == [0.0, 0.0, 0.0, 1.0]
    reg = prepare(0, Basis.X)
    bit = measure(reg, 0, Basis.Z, rng).bit
    assert reg.amplitudes[1 - bit] == 0j


def test_collapse_in_x_leaves_x_eigenstate():
    rng = random.Random(5)
    reg = prepare(0, Basis.Z)
    bit = measure(reg, 0, Basis.X, rng).bit
    assert np.allclose(amps(reg), ket(bit, "X"))
    for _ in range(20):
        assert measure(reg, 0, Basis.X, rng).bit == bit


def test_norm_drift_is_reported():
    reg = QubitRegister._raw([1.0 + 0j, 0.01 + 0j])
    with pytest.raises(NormDriftError):
        measure(reg, 0, Basis.Z, random.Random(0))


def test_decode_examples():
    rng = random.Random(6)
    assert decode(measure(prepare(0, Basis.Z), 0, Basis.Z, rng)) == 0
    assert decode(measure(prepare(1, Basis.X), 0, Basis.X, rng)) == 1
    assert decode(measure(prepare(1, Basis.Z), 0, Basis.Z, rng)) == 1


def test_state_symbols_round_trip():
    for state in PolarizationState:
        assert PolarizationState.from_symbol(state.symbol) is state
        assert PolarizationState.of(state.bit, state.basis) is state


def test_random_states_are_uniform():
    counts = {s: 0 for s in PolarizationState}
    for s in random_states(40_000, random.Random(7)):
        counts[s] += 1
    for c in counts.values():
        assert abs(c / 40_000 - 0.25) < 0.01


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(-1, 1, allow_nan=False), min_size=8, max_size=8),
    st.integers(0, 1),
    st.sampled_from([Basis.Z, Basis.X]),
    st.integers(0, 2 ** 32),
)
def test_measurement_keeps_register_normalised(raw, qubit, basis, seed):
    vec = np.array(raw[:4]) + 1j * np.array(raw[4:])
    norm = np.linalg.norm(vec)
    if norm < 1e-3:
        return
    reg = QubitRegister(vec / norm)
    measure(reg, qubit, basis, random.Random(seed))
    assert abs(reg.norm() - 1.0) < 1e-9
    measure(reg, 1 - qubit, Basis.Z, random.Random(seed + 1))
    assert abs(reg.norm() - 1.0) < 1e-9
