"""
Huang et al.'s EPR-pair key agreement, kept faithful so it can be attacked.

Alice makes ``n`` Bell pairs, keeps one half of each and sends the other
halves to Bob with decoys mixed in. After the decoy check, Bob picks a basis
string ``C`` and both sides measure their halves in it; Bell correlations
give them the same key.

Two variants differ only in who judges the decoy check:

``ORIGINAL``
    Alice announces decoy positions and initial states, Bob measures and
    issues the verdict.
``STAR3``
    Alice announces positions and bases, Bob returns his results, Alice
    issues the verdict.

Either way Bob holds his qubits and his own choice of ``C`` before any
verdict is published, so he can read the key early. :class:`HuangBehavior`
exposes the points where a dishonest party can act on that.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

from .channel import (
    KEY_DERIVATION,
    Channel,
    DecoyRecord,
    ParticleSlot,
    Transcript,
    decoy_error_rate,
    interleave_decoys,
    measure_slots,
    parse_bases,
    parse_states,
)
from .keys import random_bits
from .phases import (
    AbortReason,
    Aborted,
    Completed,
    MalformedAnnouncementError,
    MessageKind,
    Party,
    Phase,
    ProtocolOutcome,
    RunAborted,
)
from .quantum import Basis, random_states, bell_pair

ALICE, BOB = Party.ALICE, Party.BOB
PE, PD, KN = Phase.PARTICLE_EXCHANGE, Phase.PUBLIC_DISCUSSION, Phase.KEY_NEGOTIATION


class Variant(str, enum.Enum):
    ORIGINAL = "original"
    STAR3 = "star3"


@dataclass
class HuangRunState:
    role: Party
    bell_handles: list = field(default_factory=list)
    decoy_record: list = field(default_factory=list)
    basis_string: Optional[tuple] = None
    key: Optional[tuple] = None
    phase: Phase = PE


class HuangBehavior:
    """Honest participant. Subclasses override the decision points."""

    def choose_bases(self, session: "HuangSession", n: int) -> tuple:
        return random_bits(n, session.rng)

    def on_decoys_announced(self, session: "HuangSession") -> None:
        pass

    def report_verdict(self, session: "HuangSession", honest_pass: bool) -> bool:
        return honest_pass

    def report_decoy_results(self, session: "HuangSession", results: list) -> list:
        return results


def bases_for(basis_string) -> list[Basis]:
    return [Basis.X if c else Basis.Z for c in basis_string]


def huang_measure_keys(state: HuangRunState, basis_string, rng) -> tuple:
    """Measure every local Bell half in Z (``C[i] = 0``) or X (``C[i] = 1``)."""
    if len(basis_string) != len(state.bell_handles):
        raise ValueError("basis string length differs from number of particles")
    state.basis_string = tuple(basis_string)
    return tuple(measure_slots(state.bell_handles, bases_for(basis_string), rng))


class HuangSession:
    """Everything one run touches; behaviours receive it at each hook."""

    def __init__(self, n: int, variant: Variant, rng, l: int, threshold: float,
                 alice: HuangBehavior, bob: HuangBehavior, tap=None):
        self.n = n
        self.variant = Variant(variant)
        self.rng = rng
        self.l = l
        self.threshold = threshold
        self.behaviors = {ALICE: alice, BOB: bob}
        self.transcript = Transcript(f"huang-{self.variant.value}")
        self.channel = Channel(self.transcript, tap)
        self.states = {ALICE: HuangRunState(ALICE), BOB: HuangRunState(BOB)}
        self.bob_decoys: list = []
        self.decoy_bases: list = []

    def derive_key(self, party: Party, basis_string) -> tuple:
        """Measure ``party``'s halves now and log that key material exists."""
        state = self.states[party]
        if state.key is None:
            state.key = huang_measure_keys(state, basis_string, self.rng)
            self.transcript.record_local(party, KEY_DERIVATION, {"bits": len(state.key)})
        return state.key

    def _abort(self, phase, reason, reported_by, detail=""):
        raise RunAborted(Aborted(phase, reason, reported_by=reported_by, detail=detail))

    def particle_exchange(self) -> None:
        alice, bob = self.states[ALICE], self.states[BOB]
        pairs = [bell_pair() for _ in range(self.n)]
        alice.bell_handles = [ParticleSlot(r, 0) for r in pairs]
        decoys = random_states(self.l, self.rng)
        seq, alice.decoy_record = interleave_decoys(
            [ParticleSlot(r, 1) for r in pairs], decoys, self.rng)
        self.incoming = self.channel.quantum_send(ALICE, BOB, "S_B", seq)

    def public_discussion(self) -> None:
        alice, bob = self.states[ALICE], self.states[BOB]
        ch = self.channel
        for s in (alice, bob):
            s.phase = PD
        ch.announce(BOB, PD, MessageKind.ACK, {"received": len(self.incoming)})
        record: list[DecoyRecord] = alice.decoy_record
        positions = ch.announce(ALICE, PD, MessageKind.DECOY_POSITIONS,
                                [r.position for r in record])
        try:
            self.incoming.reveal(positions)
            bob.bell_handles, self.bob_decoys = self.incoming.extract()
            if self.variant is Variant.ORIGINAL:
                announced = ch.announce(ALICE, PD, MessageKind.DECOY_BASES,
                                        [r.prepared.symbol for r in record])
                states = parse_states(announced, len(self.bob_decoys))
                self.decoy_bases = [s.basis for s in states]
            else:
                announced = ch.announce(ALICE, PD, MessageKind.DECOY_BASES,
                                        [r.prepared.basis.code for r in record])
                self.decoy_bases = parse_bases(announced, len(self.bob_decoys))
        except MalformedAnnouncementError as exc:
            self._abort(PD, AbortReason.MALFORMED_ANNOUNCEMENT, BOB, str(exc))

        self.behaviors[BOB].on_decoys_announced(self)
        results = measure_slots(self.bob_decoys, self.decoy_bases, self.rng)

        if self.variant is Variant.ORIGINAL:
            honest = decoy_error_rate(results, states) <= self.threshold
            verdict = self.behaviors[BOB].report_verdict(self, honest)
            judge = BOB
        else:
            reported = self.behaviors[BOB].report_decoy_results(self, results)
            reported = ch.announce(BOB, PD, MessageKind.DECOY_RESULTS, reported)
            try:
                rate = decoy_error_rate(reported, [r.prepared for r in record])
            except MalformedAnnouncementError as exc:
                self._abort(PD, AbortReason.MALFORMED_ANNOUNCEMENT, ALICE, str(exc))
            verdict = self.behaviors[ALICE].report_verdict(self, rate <= self.threshold)
            judge = ALICE
        passed = ch.announce(judge, PD, MessageKind.COMPARISON_VERDICT, {"pass": bool(verdict)})
        if not passed["pass"]:
            self._abort(PD, AbortReason.EAVESDROPPING_DETECTED, judge)

    def key_negotiation(self) -> Completed:
        for s in self.states.values():
            s.phase = KN
        c = self.behaviors[BOB].choose_bases(self, self.n)
        c = self.channel.announce(BOB, KN, MessageKind.DATA_BASES, list(c))
        if not (isinstance(c, list) and len(c) == self.n and all(b in (0, 1) for b in c)):
            self._abort(KN, AbortReason.MALFORMED_ANNOUNCEMENT, ALICE, "bad basis string")
        key_b = self.derive_key(BOB, c)
        key_a = self.derive_key(ALICE, c)
        return Completed({ALICE: key_a, BOB: key_b})


@dataclass
class HuangResult:
    outcome: ProtocolOutcome
    transcript: Transcript
    session: HuangSession

    def __iter__(self):
        return iter((self.outcome, self.transcript))


def huang_run(n: int, variant: Variant = Variant.ORIGINAL, alice: Optional[HuangBehavior] = None,
              bob: Optional[HuangBehavior] = None, rng=None, l: Optional[int] = None,
              threshold: float = 0.0, tap=None) -> HuangResult:
    """Run one Huang key agreement. ``l`` defaults to ``n`` decoys."""
    if n < 1:
        raise ValueError("key length n must be at least 1")
    if rng is None:
        raise ValueError("an explicit random stream is required")
    session = HuangSession(n, variant, rng, n if l is None else l, threshold,
                           alice or HuangBehavior(), bob or HuangBehavior(), tap)
    try:
        session.particle_exchange()
        session.public_discussion()
        outcome: ProtocolOutcome = session.key_negotiation()
    except RunAborted as abort:
        outcome = abort.outcome
    session.transcript.outcome = outcome
    return HuangResult(outcome, session.transcript, session)
