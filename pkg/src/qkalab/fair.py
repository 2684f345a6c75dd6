"""
Key agreement with strong fairness.

Each party commits to a private key ``K`` and its hash ``h = H(K)`` by
sending them as single particles: the hash sequence ``C`` and the key
sequence ``S'``, which is ``S`` shuffled by a secret permutation. Decoys are
mixed into both. Only after both decoy checks pass does anyone announce the
bases and the permutation needed to read the peer's key, and each side then
checks the key it read against the committed hash. The raw key is
``K_A xor K_B``, compressed by Toeplitz privacy amplification.

Particle exchange
    :func:`generate_private`, :func:`encode_and_send`
Public discussion
    :func:`public_discussion` (acks, decoy positions/bases, results, verdicts)
Key negotiation
    :func:`key_negotiation`, :func:`verify_hash`, then
    :func:`~qkalab.keys.combine_keys` and
    :func:`~qkalab.keys.privacy_amplification`
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from . import keys as K
from .channel import (
    KEY_DERIVATION,
    Channel,
    IncomingSequence,
    ParticleSlot,
    Transcript,
    decoy_error_rate,
    interleave_decoys,
    measure_slots,
    parse_bases,
)
from .phases import (
    AbortReason,
    Aborted,
    Completed,
    MalformedAnnouncementError,
    MessageKind,
    Party,
    Phase,
    ProtocolLogicError,
    ProtocolOutcome,
    RunAborted,
)
from .quantum import Basis, random_states, prepare


ALICE, BOB = Party.ALICE, Party.BOB
PE, PD, KN = Phase.PARTICLE_EXCHANGE, Phase.PUBLIC_DISCUSSION, Phase.KEY_NEGOTIATION

DEFAULT_N = 128
DEFAULT_M = 32
DEFAULT_RATIO = 0.8


@dataclass
class PrivateKeyMaterial:
    key: tuple
    hash: tuple
    key_bases: tuple
    hash_bases: tuple
    permutation: tuple
    hash_name: str = "sha256"

    @property
    def n(self) -> int:
        return len(self.key)

    @property
    def m(self) -> int:
        return len(self.hash)

    @property
    def basis_record(self) -> tuple:
        return self.hash_bases + self.key_bases


def _random_bases(count: int, rng) -> tuple:
    return tuple(Basis.X if b else Basis.Z for b in K.random_bits(count, rng))


def generate_private(n: int, m: int, rng, hash_name: str = "sha256") -> PrivateKeyMaterial:
    """Draw a private key, its hash, per-bit encoding bases and a secret order."""
    if n < 1 or m < 1:
        raise ValueError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
    key = K.random_bits(n, rng)
    return PrivateKeyMaterial(
        key=key,
        hash=K.hash_key(key, m, hash_name),
        key_bases=_random_bases(n, rng),
        hash_bases=_random_bases(m, rng),
        permutation=K.random_permutation(n, rng),
        hash_name=hash_name,
    )


def verify_hash(recovered, received_hash, m: int, hash_name: str = "sha256") -> bool:
    return K.hash_key(tuple(recovered), m, hash_name) == tuple(received_hash)


@dataclass
class FairRunState:
    role: Party
    material: PrivateKeyMaterial
    records: dict = field(default_factory=dict)  # label -> DecoyRecord list (own sends)
    incoming: dict = field(default_factory=dict)  # "C"/"S" -> IncomingSequence from peer
    peer_hash_slots: list = field(default_factory=list)
    peer_key_slots: list = field(default_factory=list)
    peer_key: Optional[tuple] = None
    peer_hash: Optional[tuple] = None
    seed_share: int = 0
    raw_key: Optional[tuple] = None
    final_key: Optional[tuple] = None
    phase: Phase = PE


class FairBehavior:
    """Honest participant; subclasses override the hooks they attack through."""

    def announce_decoy_positions(self, session: "FairSession", label: str, positions: list) -> list:
        return positions

    def after_public_discussion(self, session: "FairSession", role: Party) -> None:
        pass

    def announce_permutation(self, session: "FairSession", role: Party, permutation: tuple):
        return permutation


class FairSession:
    """Shared state of one run. Behaviours see it through their hooks."""

    def __init__(self, n: int = DEFAULT_N, m: int = DEFAULT_M, l: Optional[int] = None,
                 threshold: float = 0.0, ratio: float = DEFAULT_RATIO, rng=None,
                 alice: Optional[FairBehavior] = None, bob: Optional[FairBehavior] = None,
                 tap=None, hash_name: str = "sha256"):
        if rng is None:
            raise ValueError("an explicit random stream is required")
        if n < 1 or m < 1:
            raise ValueError(f"need n >= 1 and m >= 1, got n={n}, m={m}")
        self.n, self.m = n, m
        self.l = n if l is None else l
        if self.l < 1:
            raise ValueError("at least one decoy per sequence is required")
        self.threshold = threshold
        self.ratio = ratio
        self.rng = rng
        self.hash_name = hash_name
        self.behaviors = {ALICE: alice or FairBehavior(), BOB: bob or FairBehavior()}
        self.transcript = Transcript("fair", gate_verdicts=2)
        self.channel = Channel(self.transcript, tap)
        self.states: dict[Party, FairRunState] = {}
        self.verdicts_passed = 0

    def abort(self, phase: Phase, reason: AbortReason, reported_by: Party,
              accused: Optional[Party] = None, detail: str = ""):
        self.channel.announce(reported_by, phase, MessageKind.ABORT,
                              {"reason": reason.value, "accused": accused.value if accused else None})
        raise RunAborted(Aborted(phase, reason, reported_by, accused, detail))


def encode_and_send(session: FairSession, role: Party) -> None:
    """Encode ``h`` as ``C`` and the shuffled key as ``S'``, add decoys, send both.

    Sends ``n + m + 2l`` particles.
    """
    state = session.states[role]
    mat = state.material
    rng = session.rng
    hash_slots = [ParticleSlot(prepare(b, basis)) for b, basis in zip(mat.hash, mat.hash_bases)]
    key_slots = [ParticleSlot(prepare(b, basis)) for b, basis in zip(mat.key, mat.key_bases)]
    shuffled = K.apply_permutation(key_slots, mat.permutation)
    suffix = "A" if role is ALICE else "B"
    peer = session.states[role.peer]
    for name, data in (("C", hash_slots), ("S", shuffled)):
        decoys = random_states(session.l, rng)
        seq, record = interleave_decoys(data, decoys, rng)
        state.records[name] = record
        peer.incoming[name] = session.channel.quantum_send(role, role.peer, f"{name}_{suffix}", seq)


def _announce_decoys(session: FairSession, role: Party) -> dict:
    state = session.states[role]
    behavior = session.behaviors[role]
    positions = {name: behavior.announce_decoy_positions(session, name, [r.position for r in rec])
                 for name, rec in state.records.items()}
    bases = {name: [r.prepared.basis.code for r in rec] for name, rec in state.records.items()}
    ch = session.channel
    return (ch.announce(role, PD, MessageKind.DECOY_POSITIONS, positions),
            ch.announce(role, PD, MessageKind.DECOY_BASES, bases))


def _measure_peer_decoys(session: FairSession, role: Party, positions, bases) -> dict:
    """Receiver side: separate the peer's decoys, measure them as announced."""
    state = session.states[role]
    results = {}
    try:
        for name in ("C", "S"):
            incoming: IncomingSequence = state.incoming[name]
            incoming.reveal(positions[name])
            data, decoys = incoming.extract()
            if name == "C":
                state.peer_hash_slots = data
            else:
                state.peer_key_slots = data
            results[name] = measure_slots(decoys, parse_bases(bases[name], len(decoys)), session.rng)
    except (MalformedAnnouncementError, KeyError, TypeError) as exc:
        session.abort(PD, AbortReason.MALFORMED_ANNOUNCEMENT, role, role.peer, str(exc))
    return results


def _judge(session: FairSession, role: Party, results) -> None:
    state = session.states[role]
    try:
        prepared = [r.prepared for name in ("C", "S") for r in state.records[name]]
        reported = [b for name in ("C", "S") for b in results[name]]
        rate = decoy_error_rate(reported, prepared)
    except (MalformedAnnouncementError, KeyError, TypeError) as exc:
        session.abort(PD, AbortReason.MALFORMED_ANNOUNCEMENT, role, role.peer, str(exc))
    passed = rate <= session.threshold
    session.channel.announce(role, PD, MessageKind.COMPARISON_VERDICT,
                             {"pass": passed, "error_rate": rate})
    if not passed:
        raise RunAborted(Aborted(PD, AbortReason.EAVESDROPPING_DETECTED, role,
                                 detail=f"decoy error rate {rate:.3f}"))
    session.verdicts_passed += 1


def public_discussion(session: FairSession) -> bool:
    """Acks, decoy announcements and both verdicts. Returns True or raises RunAborted."""
    ch = session.channel
    for role in (ALICE, BOB):
        state = session.states[role]
        state.phase = PD
        state.seed_share = session.rng.getrandbits(64)
        ch.announce(role, PD, MessageKind.ACK,
                    {"received": {k: len(v) for k, v in state.incoming.items()},
                     "seed_share": state.seed_share})
    announced = {role: _announce_decoys(session, role) for role in (ALICE, BOB)}
    # Bob measures Alice's decoys first, then Alice measures Bob's
    returned = {}
    for role in (BOB, ALICE):
        positions, bases = announced[role.peer]
        results = _measure_peer_decoys(session, role, positions, bases)
        returned[role.peer] = ch.announce(role, PD, MessageKind.DECOY_RESULTS, results)
    for role in (ALICE, BOB):
        _judge(session, role, returned[role])
    for role in (ALICE, BOB):
        session.behaviors[role].after_public_discussion(session, role)
    return True


def _read_peer(session: FairSession, role: Party, bases_msg, order) -> None:
    """Measure the peer's data particles as announced and undo the shuffle."""
    state = session.states[role]
    n, m = session.n, session.m
    try:
        hash_bases = parse_bases(bases_msg["C"], m)
        key_bases = parse_bases(bases_msg["S"], n)
    except (KeyError, TypeError, MalformedAnnouncementError) as exc:
        session.abort(KN, AbortReason.MALFORMED_ANNOUNCEMENT, role, role.peer, str(exc))
    if not K.is_permutation(order, n):
        session.abort(KN, AbortReason.MALFORMED_ANNOUNCEMENT, role, role.peer,
                      "announced order is not a permutation")
    rng = session.rng
    state.peer_hash = tuple(measure_slots(state.peer_hash_slots, hash_bases, rng))
    shuffled = measure_slots(state.peer_key_slots, key_bases, rng)
    state.peer_key = tuple(K.undo_permutation(shuffled, order))
    session.transcript.record_local(role, KEY_DERIVATION, {"bits": n})


def key_negotiation(session: FairSession) -> None:
    """Alice announces bases and order first, then Bob; each reads the other's key."""
    if session.verdicts_passed < 2:
        raise ProtocolLogicError("key negotiation reached without two passing verdicts")
    ch = session.channel
    for role in (ALICE, BOB):
        state = session.states[role]
        state.phase = KN
        mat = state.material
        bases = {
            "C": [b.code for b in mat.hash_bases],
            "S": [b.code for b in K.apply_permutation(mat.key_bases, mat.permutation)],
        }
        order = session.behaviors[role].announce_permutation(session, role, mat.permutation)
        bases_msg = ch.announce(role, KN, MessageKind.DATA_BASES, bases)
        order_msg = ch.announce(role, KN, MessageKind.PERMUTATION, list(order))
        _read_peer(session, role.peer, bases_msg, order_msg)


def fair_run(n: int = DEFAULT_N, m: int = DEFAULT_M, l: Optional[int] = None,
             threshold: float = 0.0, ratio: float = DEFAULT_RATIO, rng=None,
             alice: Optional[FairBehavior] = None, bob: Optional[FairBehavior] = None,
             tap=None, hash_name: str = "sha256",
             materials: Optional[dict] = None) -> "FairResult":
    """Run the whole agreement once and return outcome, transcript and session.

    ``materials`` maps a party to a fixed :class:`PrivateKeyMaterial`; parties
    left out draw theirs from ``rng``.
    """
    session = FairSession(n, m, l, threshold, ratio, rng, alice, bob, tap, hash_name)
    materials = materials or {}
    for mat in materials.values():
        if mat.n != n or mat.m != m:
            raise ValueError("supplied key material does not match n and m")
    try:
        for role in (ALICE, BOB):
            mat = materials.get(role) or generate_private(n, m, rng, hash_name)
            session.states[role] = FairRunState(role, mat)
        for role in (ALICE, BOB):
            encode_and_send(session, role)
        public_discussion(session)
        key_negotiation(session)
        for role in (ALICE, BOB):
            state = session.states[role]
            if not verify_hash(state.peer_key, state.peer_hash, m, hash_name):
                session.abort(KN, AbortReason.MANIPULATION_DETECTED, role, role.peer,
                              "peer key does not match its committed hash")
        seed = session.states[ALICE].seed_share ^ session.states[BOB].seed_share
        for role in (ALICE, BOB):
            state = session.states[role]
            own = state.material.key
            state.raw_key = (K.combine_keys(own, state.peer_key) if role is ALICE
                             else K.combine_keys(state.peer_key, own))
            state.final_key = K.privacy_amplification(state.raw_key, ratio, seed)
        outcome: ProtocolOutcome = Completed(
            {role: session.states[role].final_key for role in (ALICE, BOB)})
    except RunAborted as abort:
        outcome = abort.outcome
    session.transcript.outcome = outcome
    return FairResult(outcome, session.transcript, session)


@dataclass
class FairResult:
    outcome: ProtocolOutcome
    transcript: Transcript
    session: FairSession

    def __iter__(self):
        return iter((self.outcome, self.transcript))
