import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkalab.adversary import CnotCE, InterceptResend, intercept_resend_tap
from qkalab.channel import (
    KEY_DERIVATION,
    Channel,
    ClassicalMessage,
    DecoyHiddenError,
    DecoyRecord,
    Origin,
    ParticleSlot,
    Transcript,
    decoy_error_rate,
    extract_decoys,
    interleave_decoys,
    lint_phase_gate,
    measure_slots,
    parse_bases,
    parse_states,
    read_jsonl,
)
from qkalab.phases import (
    MalformedAnnouncementError,
    MessageKind,
    Party,
    Phase,
    ProtocolLogicError,
)
from qkalab.quantum import Basis, PolarizationState, prepare, random_states

ALICE, BOB = Party.ALICE, Party.BOB
PE, PD, KN = Phase.PARTICLE_EXCHANGE, Phase.PUBLIC_DISCUSSION, Phase.KEY_NEGOTIATION


class FixedSample:
    def __init__(self, positions):
        self.positions = positions

    def sample(self, population, k):
        return list(self.positions)


def data_slots(count):
    return [ParticleSlot(prepare(i % 2, Basis.Z)) for i in range(count)]


def test_interleave_at_forced_position():
    d0, d1 = data_slots(2)
    out, record = interleave_decoys([d0, d1], [PolarizationState.KET_PLUS], FixedSample([1]))
    assert out[0] is d0 and out[2] is d1
    assert out[1].origin is Origin.DECOY
    assert out[1].register.amplitudes == prepare(0, Basis.X).amplitudes
    assert record == [DecoyRecord(1, PolarizationState.KET_PLUS)]


def test_interleave_pure_decoys():
    out, record = interleave_decoys([], [PolarizationState.KET0, PolarizationState.KET1],
                                    random.Random(0))
    assert len(out) == 2
    assert all(s.origin is Origin.DECOY for s in out)
    assert [r.position for r in record] == [0, 1]


def test_interleave_needs_a_decoy():
    with pytest.raises(ValueError):
        interleave_decoys(data_slots(3), [], random.Random(0))


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 12), st.integers(1, 12), st.integers(0, 2 ** 32))
def test_interleave_round_trip(n_data, n_decoys, seed):
    rng = random.Random(seed)
    data = data_slots(n_data)
    decoys = random_states(n_decoys, rng)
    out, record = interleave_decoys(data, decoys, rng)
    assert len(out) == n_data + n_decoys
    got_data, got_decoys = extract_decoys(out, record)
    assert got_data == data
    assert all(s.origin is Origin.DECOY for s in got_decoys)
    assert [r.prepared for r in record] == decoys


@pytest.mark.parametrize("positions", [[2, 1], [0, 9], [-1], [0.5], [1, 1]])
def test_bad_positions_are_malformed(positions):
    with pytest.raises(MalformedAnnouncementError):
        extract_decoys(data_slots(4), positions)


def test_receiver_cannot_extract_before_announcement():
    ch = Channel(Transcript("t"))
    incoming = ch.quantum_send(ALICE, BOB, "S", data_slots(3))
    with pytest.raises(DecoyHiddenError):
        incoming.extract()
    incoming.reveal([1])
    data, decoys = incoming.extract()
    assert len(data) == 2 and len(decoys) == 1


def test_quantum_send_without_tap_is_identity():
    seq = data_slots(5)
    incoming = Channel(Transcript("t")).quantum_send(ALICE, BOB, "S", seq)
    assert all(a is b for a, b in zip(incoming.slots, seq))


def test_intercept_resend_tap_resends_its_outcomes():
    tap = InterceptResend(random.Random(1))
    seq = [ParticleSlot(prepare(b, basis)) for b in (0, 1) for basis in (Basis.Z, Basis.X)] * 5
    incoming = Channel(Transcript("t"), tap).quantum_send(ALICE, BOB, "S", seq)
    for slot, original, (basis, bit) in zip(incoming.slots, seq, tap.eavesdropped["S"]):
        assert slot is not original
        assert slot.register.amplitudes == prepare(bit, basis).amplitudes


def test_intercept_resend_on_data_only_never_disturbs_decoys():
    rng = random.Random(2)
    out, record = interleave_decoys(data_slots(10), random_states(10, rng), rng)
    decoy_pos = {r.position for r in record}
    mask = [i not in decoy_pos for i in range(len(out))]
    resent, _ = intercept_resend_tap(out, rng, mask)
    _, decoys = extract_decoys(resent, record)
    results = measure_slots(decoys, [r.prepared.basis for r in record], rng)
    assert decoy_error_rate(results, [r.prepared for r in record]) == 0.0


def test_cnot_tap_shares_registers_with_ancillae():
    tap = CnotCE(random.Random(3))
    seq = data_slots(4)
    incoming = Channel(Transcript("t"), tap).quantum_send(ALICE, BOB, "S", seq)
    for slot, anc in zip(incoming.slots, tap.ancillae["S"]):
        assert slot.register is anc.register
        assert slot.register.num_qubits == 2
        assert (slot.qubit, anc.qubit) == (0, 1)


def test_phase_order_is_monotone():
    t = Transcript("t")
    ch = Channel(t)
    ch.quantum_send(ALICE, BOB, "S", data_slots(1))
    ch.announce(BOB, PD, MessageKind.ACK, {})
    with pytest.raises(ProtocolLogicError):
        ch.announce(BOB, PE, MessageKind.ACK, {})


def test_gate_refuses_key_material_before_verdicts():
    t = Transcript("fair", gate_verdicts=2)
    ch = Channel(t)
    ch.announce(ALICE, PD, MessageKind.COMPARISON_VERDICT, {"pass": True})
    with pytest.raises(ProtocolLogicError):
        ch.announce(ALICE, KN, MessageKind.PERMUTATION, [0, 1])
    ch.announce(BOB, PD, MessageKind.COMPARISON_VERDICT, {"pass": True})
    assert ch.announce(ALICE, KN, MessageKind.PERMUTATION, [0, 1]) == [0, 1]


def test_observer_reads_announcement_unchanged():
    ch = Channel(Transcript("t"))
    seen = []
    ch.observers.append(lambda msg: seen.append(msg.payload()))
    got = ch.announce(ALICE, PD, MessageKind.DECOY_BASES, ["Z", "X"])
    assert seen == [["Z", "X"]] == [got]


def test_undecodable_body_is_malformed():
    msg = ClassicalMessage(ALICE, PD, MessageKind.DECOY_BASES, b"\xff{")
    with pytest.raises(MalformedAnnouncementError):
        msg.payload()


def test_jsonl_round_trip(tmp_path):
    t = Transcript("t")
    ch = Channel(t)
    ch.quantum_send(ALICE, BOB, "S", data_slots(2))
    ch.announce(BOB, PD, MessageKind.ACK, {"received": 2})
    path = t.write(tmp_path / "t.jsonl")
    lines = [json.loads(x) for x in path.read_text().splitlines()]
    assert set(lines[0]) == {"seq", "phase", "sender", "kind", "body_hex"}
    assert read_jsonl(path) == t.events


def test_lint_flags_key_material_before_verdicts():
    t = Transcript("t")
    ch = Channel(t)
    ch.announce(BOB, PD, MessageKind.ACK, {})
    t.record_local(BOB, KEY_DERIVATION, {"bits": 4})
    ch.announce(BOB, PD, MessageKind.COMPARISON_VERDICT, {"pass": True})
    ch.announce(BOB, KN, MessageKind.DATA_BASES, [0, 1])
    flagged = lint_phase_gate(t.events, 1)
    assert [e.kind for e in flagged] == [KEY_DERIVATION]
    assert [e.kind for e in lint_phase_gate(t.events, 2)] == [KEY_DERIVATION, "data-bases"]


def test_decoy_error_rate_and_parsers():
    states = [PolarizationState.KET0, PolarizationState.KET_MINUS]
    assert decoy_error_rate([0, 1], states) == 0.0
    assert decoy_error_rate([1, 1], states) == 0.5
    with pytest.raises(MalformedAnnouncementError):
        decoy_error_rate([0], states)
    assert parse_bases(["Z", "X"], 2) == [Basis.Z, Basis.X]
    assert parse_states(["+", "1"], 2) == [PolarizationState.KET_PLUS, PolarizationState.KET1]
    for bad in (["Q", "Z"], ["Z"], "ZX"):
        with pytest.raises(MalformedAnnouncementError):
            parse_bases(bad, 2)
