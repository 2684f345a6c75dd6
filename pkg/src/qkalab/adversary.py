"""
Attackers: two outsider channel taps and three insider strategies.

Outsiders plug into :class:`~qkalab.channel.Channel` as taps; insiders are
behaviour objects handed to a protocol run in place of the honest party.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .channel import PROBE, Origin, ParticleSlot
from .fair import FairBehavior, FairSession
from .huang import HuangBehavior, HuangSession, Variant, huang_run
from .keys import random_bits, random_permutation
from .phases import Aborted, Completed, Party, Phase, ProtocolLogicError
from .quantum import Basis, apply_cnot, measure_bit, prepare, with_ancilla

ALL_SEQUENCES = "all"


class AdversaryKind(str, enum.Enum):
    INTERCEPT_RESEND = "intercept_resend"
    CNOT_CE = "cnot_ce"
    INSIDER_HUANG_ABORT_RETRY = "insider_huang_abort_retry"
    INSIDER_FAIR_PROBE = "insider_fair_probe"
    INSIDER_FAIR_FAKE_PERMUTATION = "insider_fair_fake_permutation"

    @classmethod
    def parse(cls, text: str) -> "AdversaryKind":
        key = text.strip().lower().replace("-", "_")
        aliases = {
            "interceptresend": cls.INTERCEPT_RESEND,
            "cnotce": cls.CNOT_CE,
            "cnot": cls.CNOT_CE,
            "insiderhuangabortretry": cls.INSIDER_HUANG_ABORT_RETRY,
            "insiderfairprobe": cls.INSIDER_FAIR_PROBE,
            "insiderfairfakepermutation": cls.INSIDER_FAIR_FAKE_PERMUTATION,
        }
        try:
            return cls(key)
        except ValueError:
            pass
        try:
            return aliases[key.replace("_", "")]
        except KeyError:
            raise ValueError(f"unknown adversary kind {text!r}") from None


@dataclass
class AdversaryConfig:
    """Which attack to mount, with its knobs.

    ``targets`` lists the sequence labels an outsider taps (``"S_A"``,
    ``"C_B"``, ... or ``"all"``); ``None`` means the default: ``S_A`` for the
    fair protocol, ``S_B`` for Huang's. ``coverage`` is the chance each slot
    of a targeted sequence is tapped.
    """

    kind: AdversaryKind
    target_bit: int = 0
    desired_value: int = 1
    max_restarts: Optional[int] = None
    coverage: float = 1.0
    targets: Optional[list] = None
    strategy: str = "uniform"

    def __post_init__(self):
        self.kind = AdversaryKind.parse(self.kind) if isinstance(self.kind, str) else self.kind
        if self.max_restarts is not None and self.max_restarts < 1:
            raise ValueError("max_restarts must be at least 1")
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError("coverage must lie in [0, 1]")
        if self.desired_value not in (0, 1):
            raise ValueError("desired_value must be 0 or 1")
        if self.target_bit < 0:
            raise ValueError("target_bit must be non-negative")
        if self.strategy not in ("uniform", "transposition"):
            raise ValueError(f"unknown fake-permutation strategy {self.strategy!r}")

    def validate_for(self, n: int) -> None:
        if self.target_bit >= n:
            raise ValueError(f"target_bit {self.target_bit} must be < n = {n}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "target_bit": self.target_bit,
            "desired_value": self.desired_value,
            "max_restarts": self.max_restarts,
            "coverage": self.coverage,
            "targets": self.targets,
            "strategy": self.strategy,
        }

    @classmethod
    def from_dict(cls, obj) -> "AdversaryConfig":
        if isinstance(obj, str):
            return cls(AdversaryKind.parse(obj))
        known = {"kind", "target_bit", "desired_value", "max_restarts", "coverage",
                 "targets", "strategy"}
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown adversary fields {sorted(extra)}")
        return cls(**obj)


class _Tap:
    def __init__(self, rng, targets=None, coverage: float = 1.0):
        self.rng = rng
        self.targets = targets
        self.coverage = coverage

    def wants(self, label: str) -> bool:
        return self.targets is None or self.targets == ALL_SEQUENCES or label in self.targets

    def _tapped(self, count: int) -> list[bool]:
        if self.coverage >= 1.0:
            return [True] * count
        return [self.rng.random() < self.coverage for _ in range(count)]


class InterceptResend(_Tap):
    """Measure every tapped slot in a random basis and forward a fresh copy.

    ``eavesdropped[label]`` keeps ``(basis, bit)`` per slot (``None`` where
    the slot was not tapped).
    """

    def __init__(self, rng, targets=None, coverage: float = 1.0):
        super().__init__(rng, targets, coverage)
        self.eavesdropped: dict[str, list] = {}

    def __call__(self, label, sequence, sender, receiver):
        if not self.wants(label):
            return sequence
        out, seen = intercept_resend_tap(sequence, self.rng, self._tapped(len(sequence)))
        self.eavesdropped[label] = seen
        return out


def intercept_resend_tap(sequence, rng, tapped=None):
    """Return (resent sequence, eavesdropped (basis, bit) list)."""
    out, seen = [], []
    bases = random_bits(len(sequence), rng)
    for i, slot in enumerate(sequence):
        if tapped is not None and not tapped[i]:
            out.append(slot)
            seen.append(None)
            continue
        basis = Basis.X if bases[i] else Basis.Z
        bit = measure_bit(slot.register, slot.qubit, basis, rng)
        out.append(ParticleSlot(prepare(bit, basis), 0, slot.origin))
        seen.append((basis, bit))
    return out, seen


class CnotCE(_Tap):
    """Entangle each tapped slot (control) with a fresh ``|0>`` ancilla (target).

    Ancilla handles are kept in ``ancillae[label]``.
    """

    def __init__(self, rng, targets=None, coverage: float = 1.0):
        super().__init__(rng, targets, coverage)
        self.ancillae: dict[str, list] = {}

    def __call__(self, label, sequence, sender, receiver):
        if not self.wants(label):
            return sequence
        out, ancillae = cnot_ce_tap(sequence, self._tapped(len(sequence)))
        self.ancillae[label] = ancillae
        return out


def cnot_ce_tap(sequence, tapped=None):
    """Return (forwarded sequence, ancilla handles)."""
    out, ancillae = [], []
    for i, slot in enumerate(sequence):
        if tapped is not None and not tapped[i]:
            out.append(slot)
            ancillae.append(None)
            continue
        if slot.register.num_qubits != 1:
            raise ValueError("the CNOT tap needs lone particles; this slot is already entangled")
        joint = apply_cnot(with_ancilla(slot.register), 0, 1)
        out.append(ParticleSlot(joint, 0, slot.origin))
        ancillae.append(ParticleSlot(joint, 1, Origin.DATA))
    return out, ancillae


def make_tap(config: AdversaryConfig, rng, protocol: str):
    """Build the outsider tap for ``config`` or return None for insiders."""
    targets = config.targets
    if targets is None:
        targets = ["S_B"] if protocol.startswith("huang") else ["S_A"]
    if config.kind is AdversaryKind.INTERCEPT_RESEND:
        return InterceptResend(rng, targets, config.coverage)
    if config.kind is AdversaryKind.CNOT_CE:
        if protocol.startswith("huang"):
            raise ValueError("the CNOT tap needs lone particles; Huang's sequence carries Bell halves")
        return CnotCE(rng, targets, config.coverage)
    return None


# --- insider against Huang -------------------------------------------------


class AbortRetryBob(HuangBehavior):
    """Bob reads the key before the verdict and sabotages runs he dislikes.

    Keeps the decoys in (ideal) quantum memory, fixes ``C`` early, measures
    his Bell halves, and inspects ``key[target_bit]``. If it is not
    ``desired_value`` he fails the check: a negative verdict in the original
    variant, flipped decoy results in the Step-3* variant.
    """

    def __init__(self, target_bit: int, desired_value: int):
        self.target_bit = target_bit
        self.desired_value = desired_value
        self.basis_string: Optional[tuple] = None
        self.sabotage = False
        self.early_key: Optional[tuple] = None

    def on_decoys_announced(self, session: HuangSession) -> None:
        self.basis_string = random_bits(session.n, session.rng)
        self.early_key = session.derive_key(Party.BOB, self.basis_string)
        self.sabotage = self.early_key[self.target_bit] != self.desired_value

    def choose_bases(self, session: HuangSession, n: int) -> tuple:
        if self.basis_string is None:
            raise ProtocolLogicError("basis string requested before the early measurement")
        return self.basis_string

    def report_verdict(self, session: HuangSession, honest_pass: bool) -> bool:
        return honest_pass and not self.sabotage

    def report_decoy_results(self, session: HuangSession, results: list) -> list:
        if self.sabotage:
            return [1 - b for b in results]
        return results


@dataclass
class AbortRetryReport:
    succeeded: bool
    runs: int
    final_key: Optional[tuple]
    alice_detections: int
    outcomes: list = field(default_factory=list, repr=False)


def insider_huang_abort_retry(n: int, rng, target_bit: int = 0, desired_value: int = 1,
                              max_restarts: Optional[int] = None,
                              variant: Variant = Variant.ORIGINAL, l: Optional[int] = None,
                              threshold: float = 0.0, keep_results: bool = False) -> AbortRetryReport:
    """Restart Huang runs until Bob gets his bit or runs out of attempts.

    ``runs`` counts every protocol run including the final one, so with a
    fair coin it is geometric with mean 2. ``alice_detections`` counts runs
    that ended with Alice accusing Bob; the protocol has no way to do that.
    """
    if not 0 <= target_bit < n:
        raise ValueError(f"target_bit {target_bit} must be in [0, {n})")
    runs = 0
    detections = 0
    outcomes = []
    while max_restarts is None or runs < max_restarts:
        runs += 1
        bob = AbortRetryBob(target_bit, desired_value)
        result = huang_run(n, variant, bob=bob, rng=rng, l=l, threshold=threshold)
        outcome = result.outcome
        if keep_results:
            outcomes.append(result)
        if isinstance(outcome, Aborted) and outcome.accused is Party.BOB:
            detections += 1
        if isinstance(outcome, Completed):
            key = outcome.keys[Party.ALICE]
            if key[target_bit] == desired_value:
                return AbortRetryReport(True, runs, key, detections, outcomes)
    return AbortRetryReport(False, runs, None, detections, outcomes)


# --- insiders against the fair protocol ------------------------------------


@dataclass
class ProbeResult:
    slot: int
    basis: Basis
    guessed_bit: int
    true_bit: int
    true_position: int
    candidate_positions: int

    @property
    def correct(self) -> bool:
        return self.guessed_bit == self.true_bit


class ProbingBob(FairBehavior):
    """After the decoy check, Bob measures one particle of Alice's ``S'``.

    He picks a slot and a basis at random. Without the permutation every one
    of the ``n`` key positions remains a candidate. ``true_bit`` and
    ``true_position`` come from Alice's side and are kept only for scoring.
    """

    def __init__(self):
        self.result: Optional[ProbeResult] = None

    def after_public_discussion(self, session: FairSession, role: Party) -> None:
        if role is not Party.BOB:
            return
        if session.transcript.phase is not Phase.PUBLIC_DISCUSSION or session.verdicts_passed < 2:
            raise ProtocolLogicError("probe needs a finished public discussion")
        self.result = insider_fair_probe(session)


def insider_fair_probe(session: FairSession, role: Party = Party.BOB) -> ProbeResult:
    """Measure one random slot of the peer's extracted ``S'`` in a random basis."""
    state = session.states[role]
    slots = state.peer_key_slots
    if not slots:
        raise ProtocolLogicError("peer key particles are not extracted yet (decoys still hidden)")
    rng = session.rng
    j = rng.randrange(len(slots))
    basis = Basis.X if rng.getrandbits(1) else Basis.Z
    bit = measure_bit(slots[j].register, slots[j].qubit, basis, rng)
    session.transcript.record_local(role, PROBE, {"slot": j, "basis": basis.code})
    peer = session.states[role.peer].material
    position = peer.permutation[j]
    return ProbeResult(j, basis, bit, peer.key[position], position, len(slots))


def probe_position_posterior(n: int, slot: int, basis: Basis, outcome: int) -> list[Fraction]:
    """Exact P(true position = i | Bob's probe view) by enumeration.

    Bob's view is (slot, basis, outcome). Enumerates every secret order in
    ``S_n`` and every state the probed particle could carry; the other
    particles do not affect the view and marginalise to 1.
    """
    weights = [Fraction(0)] * n
    for perm in itertools.permutations(range(n)):
        i = perm[slot]
        for key_bit in (0, 1):
            for enc in (Basis.Z, Basis.X):
                if enc is basis:
                    like = Fraction(1) if key_bit == outcome else Fraction(0)
                else:
                    like = Fraction(1, 2)
                weights[i] += Fraction(1, math.factorial(n)) * Fraction(1, 4) * like
    total = sum(weights)
    return [w / total for w in weights]


class FakeOrderBob(FairBehavior):
    """Bob announces a wrong permutation after reading Alice's key.

    ``uniform`` draws from ``S_n`` minus the true order; ``transposition``
    swaps two random entries of it.
    """

    def __init__(self, strategy: str = "uniform"):
        self.strategy = strategy
        self.announced: Optional[tuple] = None
        self.saw_peer_key = False

    def announce_permutation(self, session: FairSession, role: Party, permutation: tuple):
        if role is not Party.BOB:
            return permutation
        self.saw_peer_key = session.states[Party.BOB].peer_key is not None
        self.announced = insider_fair_fake_permutation(permutation, session.rng, self.strategy)
        return self.announced


def insider_fair_fake_permutation(true_order: tuple, rng, strategy: str = "uniform") -> tuple:
    """A permutation different from ``true_order`` (identity only when n == 1)."""
    n = len(true_order)
    if n == 1:
        return tuple(true_order)
    if strategy == "transposition":
        a, b = rng.sample(range(n), 2)
        fake = list(true_order)
        fake[a], fake[b] = fake[b], fake[a]
        return tuple(fake)
    while True:
        fake = random_permutation(n, rng)
        if fake != tuple(true_order):
            return fake
