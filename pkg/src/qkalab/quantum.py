"""
Two-qubit state-vector simulator.

Holds single particles, Bell pairs and the one-ancilla registers produced by
a CNOT tap. Qubit 0 is the most significant bit of the amplitude index, so a
two-qubit amplitude list is ordered ``|00>, |01>, |10>, |11>``.

All randomness comes from the ``rng`` argument of :func:`measure`; any object
with a ``random()`` method returning floats in ``[0, 1)`` will do
(``random.Random`` is what the rest of the package passes in).
"""

from __future__ import annotations

import enum
import math
from typing import NamedTuple

SQRT_HALF = 1.0 / math.sqrt(2.0)

NORM_TOLERANCE = 1e-9
NORM_DRIFT_LIMIT = 1e-6


class NormDriftError(RuntimeError):
    """Register norm moved further from 1 than floating-point error explains."""


class Basis(enum.Enum):
    Z = "Z"
    X = "X"

    def __init__(self, code: str):
        self.code = code

    @property
    def conjugate(self) -> "Basis":
        return Basis.X if self is Basis.Z else Basis.Z


class PolarizationState(enum.Enum):
    """The four BB84 states, valued by ``(bit, basis)``."""

    KET0 = (0, Basis.Z)
    KET1 = (1, Basis.Z)
    KET_PLUS = (0, Basis.X)
    KET_MINUS = (1, Basis.X)

    def __init__(self, bit: int, basis: Basis):
        # plain attributes: enum property access is slow in the Monte-Carlo loops
        self.bit = bit
        self.basis = basis

    @property
    def symbol(self) -> str:
        return _SYMBOLS[self]

    @classmethod
    def of(cls, bit: int, basis: Basis) -> "PolarizationState":
        return _STATE_OF[(bit, basis)]

    @classmethod
    def from_symbol(cls, symbol: str) -> "PolarizationState":
        return _FROM_SYMBOL[symbol]


_STATE_OF = {s.value: s for s in PolarizationState}
_SYMBOLS = {
    PolarizationState.KET0: "0",
    PolarizationState.KET1: "1",
    PolarizationState.KET_PLUS: "+",
    PolarizationState.KET_MINUS: "-",
}
_FROM_SYMBOL = {v: k for k, v in _SYMBOLS.items()}
STATES = tuple(PolarizationState)
BASIS_BY_NAME = {b.value: b for b in Basis}


def random_states(count: int, rng) -> list[PolarizationState]:
    """``count`` states drawn uniformly from the four BB84 states."""
    word = rng.getrandbits(2 * count) if count else 0
    return [STATES[(word >> (2 * i)) & 3] for i in range(count)]


def encodes_bit(state: PolarizationState) -> int:
    return state.bit


def basis_of(state: PolarizationState) -> Basis:
    return state.basis


# module-level aliases keep attribute lookups out of the hot paths
_Z, _X = Basis.Z, Basis.X
_DRIFT_LOW, _DRIFT_HIGH = 1.0 - NORM_DRIFT_LIMIT, 1.0 + NORM_DRIFT_LIMIT
_new_register = object.__new__
_Z_AMPS = ((1.0 + 0j, 0j), (0j, 1.0 + 0j))
_X_AMPS = ((SQRT_HALF + 0j, SQRT_HALF + 0j), (SQRT_HALF + 0j, -SQRT_HALF + 0j))


class QubitRegister:
    """State vector over one or two qubits.

    Plain mutable value; ``measure`` and ``apply_cnot`` work in place and
    also return the register for chaining.
    """

    __slots__ = ("num_qubits", "amplitudes")

    def __init__(self, amplitudes):
        amps = [complex(a) for a in amplitudes]
        if len(amps) == 2:
            self.num_qubits = 1
        elif len(amps) == 4:
            self.num_qubits = 2
        else:
            raise ValueError(f"register holds 1 or 2 qubits, got {len(amps)} amplitudes")
        norm = sum(a.real * a.real + a.imag * a.imag for a in amps)
        if abs(norm - 1.0) > NORM_TOLERANCE:
            raise ValueError(f"amplitudes not normalised (norm {norm!r})")
        self.amplitudes = amps

    @classmethod
    def _raw(cls, amps: list[complex]) -> "QubitRegister":
        reg = cls.__new__(cls)
        reg.num_qubits = 1 if len(amps) == 2 else 2
        reg.amplitudes = amps
        return reg

    def norm(self) -> float:
        return sum(a.real * a.real + a.imag * a.imag for a in self.amplitudes)

    def copy(self) -> "QubitRegister":
        return QubitRegister._raw(list(self.amplitudes))

    def probabilities(self) -> list[float]:
        return [a.real * a.real + a.imag * a.imag for a in self.amplitudes]

    def __repr__(self) -> str:
        amps = ", ".join(f"{a.real:+.4f}{a.imag:+.4f}j" for a in self.amplitudes)
        return f"QubitRegister([{amps}])"


class MeasurementOutcome(NamedTuple):
    bit: int
    basis_used: Basis


def prepare(bit: int, basis: Basis) -> QubitRegister:
    """Single particle in ``|0>``/``|1>`` (Z) or ``|+>``/``|->`` (X)."""
    if bit != 0 and bit != 1:
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    reg = _new_register(QubitRegister)
    reg.num_qubits = 1
    reg.amplitudes = [*(_Z_AMPS[bit] if basis is _Z else _X_AMPS[bit])]
    return reg


def prepare_state(state: PolarizationState) -> QubitRegister:
    return prepare(state.bit, state.basis)


def bell_pair() -> QubitRegister:
    """``|Phi+> = (|00> + |11>)/sqrt(2)``."""
    return QubitRegister._raw([SQRT_HALF + 0j, 0j, 0j, SQRT_HALF + 0j])


def with_ancilla(register: QubitRegister) -> QubitRegister:
    """Return ``register ⊗ |0>`` as a new two-qubit register."""
    if register.num_qubits != 1:
        raise ValueError("only a single-qubit register can take an ancilla")
    a0, a1 = register.amplitudes
    return QubitRegister._raw([a0, 0j, a1, 0j])


def _check_index(register: QubitRegister, qubit: int) -> None:
    if not 0 <= qubit < register.num_qubits:
        raise IndexError(f"qubit {qubit} out of range for {register.num_qubits}-qubit register")


def apply_cnot(register: QubitRegister, control: int, target: int) -> QubitRegister:
    """Map ``|c, t>`` to ``|c, t xor c>`` by permuting amplitudes."""
    if register.num_qubits != 2:
        raise ValueError("CNOT needs a two-qubit register")
    _check_index(register, control)
    _check_index(register, target)
    if control == target:
        raise ValueError("control and target must differ")
    amps = register.amplitudes
    if control == 0:
        amps[2], amps[3] = amps[3], amps[2]
    else:
        amps[1], amps[3] = amps[3], amps[1]
    return register


def _hadamard(amps: list[complex], num_qubits: int, qubit: int) -> None:
    mask = 1 << (num_qubits - 1 - qubit)
    for i in range(len(amps)):
        if not i & mask:
            a, b = amps[i], amps[i | mask]
            amps[i] = (a + b) * SQRT_HALF
            amps[i | mask] = (a - b) * SQRT_HALF


def _draw(p0: float, p1: float, rng) -> int:
    total = p0 + p1
    if abs(total - 1.0) > NORM_DRIFT_LIMIT:
        raise NormDriftError(f"register norm drifted to {total!r}")
    if p1 == 0.0:
        return 0
    if p0 == 0.0:
        return 1
    return 0 if rng.random() * total < p0 else 1


def measure(register: QubitRegister, qubit: int, basis: Basis, rng) -> MeasurementOutcome:
    """Projective measurement of one qubit with Born-rule sampling.

    The register collapses in place: amplitudes inconsistent with the outcome
    become exactly zero and the survivors are renormalised.
    """
    return MeasurementOutcome(measure_bit(register, qubit, basis, rng), basis)


def measure_bit(register: QubitRegister, qubit: int, basis: Basis, rng) -> int:
    """:func:`measure` without the outcome wrapper, for hot loops."""
    amps = register.amplitudes
    if register.num_qubits == 1:
        if qubit != 0:
            raise IndexError(f"qubit {qubit} out of range for 1-qubit register")
        a0, a1 = amps
        if basis is _X:
            a0, a1 = (a0 + a1) * SQRT_HALF, (a0 - a1) * SQRT_HALF
        p0 = a0.real * a0.real + a0.imag * a0.imag
        p1 = a1.real * a1.real + a1.imag * a1.imag
        total = p0 + p1
        if total > _DRIFT_HIGH or total < _DRIFT_LOW:
            raise NormDriftError(f"register norm drifted to {total!r}")
        if p1 == 0.0:
            bit = 0
        elif p0 == 0.0:
            bit = 1
        else:
            bit = 0 if rng.random() * total < p0 else 1
        if basis is _X:
            c = (a1 / math.sqrt(p1) if bit else a0 / math.sqrt(p0)) * SQRT_HALF
            register.amplitudes = [c, -c] if bit else [c, c]
        else:
            register.amplitudes = [0j, a1 / math.sqrt(p1)] if bit else [a0 / math.sqrt(p0), 0j]
        return bit

    _check_index(register, qubit)
    n = register.num_qubits
    if basis is Basis.X:
        _hadamard(amps, n, qubit)
    mask = 1 << (n - 1 - qubit)
    p0 = p1 = 0.0
    for i, a in enumerate(amps):
        p = a.real * a.real + a.imag * a.imag
        if i & mask:
            p1 += p
        else:
            p0 += p
    bit = _draw(p0, p1, rng)
    scale = 1.0 / math.sqrt(p1 if bit else p0)
    for i in range(len(amps)):
        if bool(i & mask) == bool(bit):
            amps[i] *= scale
        else:
            amps[i] = 0j
    if basis is Basis.X:
        _hadamard(amps, n, qubit)
    return bit


def decode(outcome: MeasurementOutcome) -> int:
    """``|0>``/``|+>`` read as 0, ``|1>``/``|->`` read as 1."""
    return outcome.bit
