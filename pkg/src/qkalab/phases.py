"""Stages, message kinds and run outcomes shared by both protocols."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Union


class Phase(enum.IntEnum):
    PARTICLE_EXCHANGE = 1
    PUBLIC_DISCUSSION = 2
    KEY_NEGOTIATION = 3

    @property
    def label(self) -> str:
        return _PHASE_LABELS[self]

    @classmethod
    def from_label(cls, label: str) -> "Phase":
        for phase, name in _PHASE_LABELS.items():
            if name == label:
                return phase
        raise ValueError(f"unknown phase {label!r}")


_PHASE_LABELS = {
    Phase.PARTICLE_EXCHANGE: "ParticleExchange",
    Phase.PUBLIC_DISCUSSION: "PublicDiscussion",
    Phase.KEY_NEGOTIATION: "KeyNegotiation",
}


class Party(str, enum.Enum):
    ALICE = "alice"
    BOB = "bob"

    @property
    def peer(self) -> "Party":
        return Party.BOB if self is Party.ALICE else Party.ALICE


class MessageKind(str, enum.Enum):
    ACK = "ack"
    DECOY_POSITIONS = "decoy-positions"
    DECOY_BASES = "decoy-bases"
    DECOY_RESULTS = "decoy-results"
    COMPARISON_VERDICT = "comparison-verdict"
    DATA_BASES = "data-bases"
    PERMUTATION = "permutation"
    ABORT = "abort"


# Announcements that let a party start deriving key material.
KEY_BEARING_KINDS = frozenset({MessageKind.DATA_BASES, MessageKind.PERMUTATION})


class AbortReason(str, enum.Enum):
    EAVESDROPPING_DETECTED = "EavesdroppingDetected"
    MALFORMED_ANNOUNCEMENT = "MalformedAnnouncement"
    MANIPULATION_DETECTED = "ManipulationDetected"


class ProtocolLogicError(RuntimeError):
    """A protocol implementation broke its own ordering rules (a bug, not an attack)."""


class MalformedAnnouncementError(ValueError):
    """A public announcement could not be interpreted."""


@dataclass(frozen=True)
class Completed:
    keys: dict  # Party -> tuple of bits

    @property
    def agreed(self) -> bool:
        return self.keys[Party.ALICE] == self.keys[Party.BOB]


@dataclass(frozen=True)
class Aborted:
    phase: Phase
    reason: AbortReason
    reported_by: Optional[Party] = None
    accused: Optional[Party] = None
    detail: str = field(default="", compare=False)


ProtocolOutcome = Union[Completed, Aborted]


def outcome_to_dict(outcome: ProtocolOutcome) -> dict:
    if isinstance(outcome, Completed):
        return {
            "status": "completed",
            "keys": {p.value: "".join(map(str, k)) for p, k in outcome.keys.items()},
        }
    return {
        "status": "aborted",
        "phase": outcome.phase.label,
        "reason": outcome.reason.value,
        "reported_by": outcome.reported_by.value if outcome.reported_by else None,
        "accused": outcome.accused.value if outcome.accused else None,
        "detail": outcome.detail,
    }


class RunAborted(Exception):
    """Raised inside a protocol run to unwind to the driver with an outcome."""

    def __init__(self, outcome: Aborted):
        super().__init__(f"{outcome.reason.value} in {outcome.phase.label}")
        self.outcome = outcome
