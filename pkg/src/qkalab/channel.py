"""
Quantum and authenticated classical channels between Alice and Bob.

The quantum channel hands a list of :class:`ParticleSlot` to an optional tap
(the adversary) and delivers whatever comes back. The classical channel is
authenticated: everyone may read a message, nobody may change it. Every
transmission lands in a :class:`Transcript`, which can be written as
line-delimited JSON and linted for announcements that leak key material
before the eavesdropping check is over.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, Optional, Sequence

from .phases import (
    KEY_BEARING_KINDS,
    MalformedAnnouncementError,
    MessageKind,
    Party,
    Phase,
    ProtocolLogicError,
    ProtocolOutcome,
    outcome_to_dict,
)
from .quantum import BASIS_BY_NAME, Basis, PolarizationState, QubitRegister, measure_bit, prepare

QUANTUM_SEND = "quantum-send"
KEY_DERIVATION = "key-derivation"
PROBE = "probe"
OUTCOME = "outcome"


class Origin(enum.Enum):
    DATA = "data"
    DECOY = "decoy"


class ParticleSlot:
    """One position of a transmitted sequence.

    ``register``/``qubit`` point at the carrier; for a lone particle the
    register has one qubit, for a Bell half or a tapped particle it is shared
    with another slot. ``origin`` is sender-side bookkeeping only; receiving
    code never consults it.
    """

    __slots__ = ("register", "qubit", "origin")

    def __init__(self, register: QubitRegister, qubit: int = 0, origin: Origin = Origin.DATA):
        self.register = register
        self.qubit = qubit
        self.origin = origin

    def __repr__(self) -> str:
        return f"ParticleSlot({self.origin.value}, q{self.qubit}, {self.register!r})"


class DecoyRecord(NamedTuple):
    position: int
    prepared: PolarizationState


def interleave_decoys(data: Sequence[ParticleSlot], decoys: Sequence[PolarizationState], rng):
    """Insert freshly prepared decoys at uniformly random positions.

    Returns the interleaved list and the sender's :class:`DecoyRecord` list,
    sorted by position.
    """
    if not decoys:
        raise ValueError("at least one decoy is required")
    total = len(data) + len(decoys)
    positions = sorted(rng.sample(range(total), len(decoys)))
    is_decoy = bytearray(total)
    for p in positions:
        is_decoy[p] = 1
    data_it = iter(data)
    decoy_origin = Origin.DECOY
    decoy_it = iter([ParticleSlot(prepare(s.bit, s.basis), 0, decoy_origin) for s in decoys])
    out = [next(decoy_it) if flag else next(data_it) for flag in is_decoy]
    return out, [DecoyRecord(p, s) for p, s in zip(positions, decoys)]


def validate_positions(positions: Sequence[int], length: int) -> None:
    prev = None
    for p in positions:
        if type(p) is not int:
            raise MalformedAnnouncementError(f"non-integer decoy position in {positions!r}")
        if prev is not None and p <= prev:
            raise MalformedAnnouncementError("decoy positions must be strictly increasing")
        prev = p
    if positions and (positions[0] < 0 or positions[-1] >= length):
        raise MalformedAnnouncementError(f"decoy position outside sequence of length {length}")


def extract_decoys(interleaved: Sequence[ParticleSlot], record: Iterable):
    """Split an interleaved sequence back into (data, decoy slots).

    ``record`` may hold :class:`DecoyRecord` items or bare positions.
    """
    positions = [r.position if isinstance(r, DecoyRecord) else r for r in record]
    validate_positions(positions, len(interleaved))
    wanted = set(positions)
    data = [s for i, s in enumerate(interleaved) if i not in wanted]
    decoys = [interleaved[p] for p in positions]
    return data, decoys


class DecoyHiddenError(ProtocolLogicError):
    """Receiver tried to separate decoys before their positions were announced."""


class IncomingSequence:
    """A delivered sequence as the receiver sees it.

    Decoys stay mixed in until :meth:`reveal` is fed the sender's public
    announcement.
    """

    def __init__(self, label: str, slots: list[ParticleSlot]):
        self.label = label
        self.slots = slots
        self._positions: Optional[list[int]] = None

    def __len__(self) -> int:
        return len(self.slots)

    @property
    def revealed(self) -> bool:
        return self._positions is not None

    def reveal(self, positions: Sequence[int]) -> None:
        validate_positions(positions, len(self.slots))
        self._positions = list(positions)

    def extract(self):
        if self._positions is None:
            raise DecoyHiddenError(f"decoy positions of {self.label} not announced yet")
        return extract_decoys(self.slots, self._positions)


@dataclass(frozen=True)
class ClassicalMessage:
    sender: Party
    phase: Phase
    kind: MessageKind
    body: bytes

    @classmethod
    def of(cls, sender: Party, phase: Phase, kind: MessageKind, payload) -> "ClassicalMessage":
        return cls(sender, phase, kind, json.dumps(payload, separators=(",", ":")).encode())

    def payload(self):
        try:
            return json.loads(self.body)
        except ValueError as exc:
            raise MalformedAnnouncementError(f"undecodable {self.kind.value} body") from exc


class Event(NamedTuple):
    seq: int
    phase: Phase
    sender: str
    kind: str
    body: bytes

    def to_json(self) -> dict:
        return {
            "seq": self.seq,
            "phase": self.phase.label,
            "sender": self.sender,
            "kind": self.kind,
            "body_hex": self.body.hex(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Event":
        return cls(
            int(obj["seq"]),
            Phase.from_label(obj["phase"]),
            obj["sender"],
            obj["kind"],
            bytes.fromhex(obj["body_hex"]),
        )


class Transcript:
    """Ordered log of one protocol run.

    With ``gate_verdicts`` set, a data-bases or permutation announcement is
    refused until that many comparison verdicts have been logged.
    """

    def __init__(self, protocol: str, gate_verdicts: Optional[int] = None):
        self.protocol = protocol
        self.gate_verdicts = gate_verdicts
        self.events: list[Event] = []
        self.phase = Phase.PARTICLE_EXCHANGE
        self.verdicts = 0
        self.outcome: Optional[ProtocolOutcome] = None

    def _append(self, phase: Phase, sender: str, kind: str, body: bytes) -> Event:
        if phase < self.phase:
            raise ProtocolLogicError(
                f"{kind} in {phase.label} after transcript reached {self.phase.label}"
            )
        self.phase = phase
        event = Event(len(self.events), phase, sender, kind, body)
        self.events.append(event)
        return event

    def record_quantum(self, sender: Party, receiver: Party, label: str, length: int) -> Event:
        body = json.dumps({"to": receiver.value, "label": label, "length": length},
                          separators=(",", ":")).encode()
        return self._append(Phase.PARTICLE_EXCHANGE, sender.value, QUANTUM_SEND, body)

    def record_message(self, msg: ClassicalMessage) -> Event:
        if (self.gate_verdicts is not None and msg.kind in KEY_BEARING_KINDS
                and self.verdicts < self.gate_verdicts):
            raise ProtocolLogicError(
                f"{msg.kind.value} announced before {self.gate_verdicts} comparison verdicts"
            )
        event = self._append(msg.phase, msg.sender.value, msg.kind.value, msg.body)
        if msg.kind is MessageKind.COMPARISON_VERDICT:
            self.verdicts += 1
        return event

    def record_local(self, party: Party, kind: str, payload=None) -> Event:
        body = json.dumps(payload, separators=(",", ":")).encode() if payload is not None else b""
        return self._append(self.phase, party.value, kind, body)

    def messages(self, kind: Optional[MessageKind] = None) -> list[Event]:
        return [e for e in self.events if kind is None or e.kind == kind.value]

    def quantum_sends(self) -> list[dict]:
        return [json.loads(e.body) for e in self.events if e.kind == QUANTUM_SEND]

    def to_jsonl(self) -> str:
        lines = [json.dumps(e.to_json()) for e in self.events]
        if self.outcome is not None:
            tail = Event(len(self.events), self.phase, "sim", OUTCOME,
                         json.dumps(outcome_to_dict(self.outcome)).encode())
            lines.append(json.dumps(tail.to_json()))
        return "\n".join(lines) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_jsonl())
        return path


def read_jsonl(source) -> list[Event]:
    """Parse a transcript written by :meth:`Transcript.to_jsonl` (path or text)."""
    if isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        text = Path(source).read_text()
    else:
        text = source
    return [Event.from_json(json.loads(line)) for line in text.splitlines() if line.strip()]


TapHook = Callable[[str, list, Party, Party], list]


class Channel:
    """Both channels of one run, sharing one transcript."""

    def __init__(self, transcript: Transcript, tap: Optional[TapHook] = None):
        self.transcript = transcript
        self.tap = tap
        self.observers: list[Callable[[ClassicalMessage], None]] = []

    def quantum_send(self, sender: Party, receiver: Party, label: str,
                     sequence: list[ParticleSlot]) -> IncomingSequence:
        self.transcript.record_quantum(sender, receiver, label, len(sequence))
        delivered = sequence if self.tap is None else self.tap(label, sequence, sender, receiver)
        return IncomingSequence(label, list(delivered))

    def classical_send(self, msg: ClassicalMessage) -> ClassicalMessage:
        self.transcript.record_message(msg)
        for watch in self.observers:
            watch(msg)
        # bytes are immutable: what observers saw is what the receiver gets
        return msg

    def announce(self, sender: Party, phase: Phase, kind: MessageKind, payload):
        """Send a JSON announcement and return the receiver's decoded copy."""
        return self.classical_send(ClassicalMessage.of(sender, phase, kind, payload)).payload()


def lint_phase_gate(events: Iterable[Event], required_verdicts: int) -> list[Event]:
    """Events that expose key material before the channel check is settled.

    Flags data-bases and permutation announcements and local key-derivation
    records that precede the ``required_verdicts``-th comparison verdict.
    """
    key_kinds = {k.value for k in KEY_BEARING_KINDS} | {KEY_DERIVATION}
    seen = 0
    flagged = []
    for e in events:
        if seen >= required_verdicts:
            break
        if e.kind == MessageKind.COMPARISON_VERDICT.value:
            seen += 1
        elif e.kind in key_kinds:
            flagged.append(e)
    return flagged


def measure_slots(slots: Sequence[ParticleSlot], bases, rng) -> list[int]:
    """Measure each slot in the matching basis and decode the bits."""
    return [measure_bit(s.register, s.qubit, b, rng) for s, b in zip(slots, bases)]


def decoy_error_rate(results: Sequence[int], prepared: Sequence[PolarizationState]) -> float:
    """Fraction of reported decoy bits that disagree with the prepared states."""
    if len(results) != len(prepared):
        raise MalformedAnnouncementError(
            f"{len(results)} decoy results for {len(prepared)} decoys"
        )
    if not prepared:
        return 0.0
    wrong = sum(1 for r, s in zip(results, prepared) if r != s.bit)
    return wrong / len(prepared)


def parse_bases(values, expected: int) -> list[Basis]:
    if not isinstance(values, list) or len(values) != expected:
        raise MalformedAnnouncementError(f"expected {expected} bases")
    try:
        return [BASIS_BY_NAME[v] for v in values]
    except (KeyError, TypeError):
        raise MalformedAnnouncementError(f"bad basis name in {values!r}") from None


def parse_states(values, expected: int) -> list[PolarizationState]:
    if not isinstance(values, list) or len(values) != expected:
        raise MalformedAnnouncementError(f"expected {expected} states")
    try:
        return [PolarizationState.from_symbol(v) for v in values]
    except (KeyError, TypeError):
        raise MalformedAnnouncementError(f"bad state symbol in {values!r}") from None
