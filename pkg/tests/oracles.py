"""Brute-force amplitude arithmetic, written without the package's simulator.

Dense numpy matrices and projectors; slow but obviously correct.
"""

import itertools

import numpy as np

H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
I2 = np.eye(2, dtype=complex)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def ket(bit, basis):
    v = np.zeros(2, dtype=complex)
    v[bit] = 1
    return H @ v if basis == "X" else v


def bell():
    return np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)


def projector(bit, basis):
    k = ket(bit, basis)
    return np.outer(k, k.conj())


def lift(op, qubit, nqubits):
    ops = [op if q == qubit else I2 for q in range(nqubits)]
    out = ops[0]
    for o in ops[1:]:
        out = np.kron(out, o)
    return out


def joint_distribution(state, measurements):
    """P(outcomes) for sequential measurements ``[(qubit, basis), ...]`` on ``state``."""
    nq = int(np.log2(len(state)))
    dist = {}
    for bits in itertools.product((0, 1), repeat=len(measurements)):
        psi = state.copy()
        for (q, basis), b in zip(measurements, bits):
            psi = lift(projector(b, basis), q, nq) @ psi
        dist[bits] = float(np.vdot(psi, psi).real)
    return dist


def intercept_resend_mismatch(bit, basis):
    """P(receiver's bit != prepared bit) when Eve measures in a uniform basis and resends."""
    total = 0.0
    for eve in ("Z", "X"):
        for b, p_eve in joint_distribution(ket(bit, basis), [(0, eve)]).items():
            resent = ket(b[0], eve)
            p_wrong = joint_distribution(resent, [(0, basis)])[(1 - bit,)]
            total += 0.5 * p_eve * p_wrong
    return total


def cnot_tapped(bit, basis):
    """Two-qubit state after Eve's CNOT with the particle as control and |0> ancilla."""
    return CNOT @ np.kron(ket(bit, basis), ket(0, "Z"))
