import math
import random

import pytest

from oracles import bell as oracle_bell
from oracles import joint_distribution
from qkalab.adversary import AbortRetryBob, InterceptResend, insider_huang_abort_retry
from qkalab.channel import KEY_DERIVATION, ParticleSlot, lint_phase_gate
from qkalab.huang import HuangRunState, Variant, huang_measure_keys, huang_run
from qkalab.phases import AbortReason, Aborted, Completed, MessageKind, Party, Phase
from qkalab.quantum import bell_pair


def pairs_states(n):
    regs = [bell_pair() for _ in range(n)]
    alice = HuangRunState(Party.ALICE, [ParticleSlot(r, 0) for r in regs])
    bob = HuangRunState(Party.BOB, [ParticleSlot(r, 1) for r in regs])
    return alice, bob


@pytest.mark.parametrize("c", [(0, 0, 0, 0), (1, 1, 1, 1), (0, 1, 0, 1)])
def test_same_basis_string_gives_same_bits(c):
    rng = random.Random(sum(c))
    for _ in range(200):
        alice, bob = pairs_states(4)
        assert huang_measure_keys(alice, c, rng) == huang_measure_keys(bob, c, rng)


def test_oracle_agrees_bell_halves_are_correlated():
    for basis in ("Z", "X"):
        dist = joint_distribution(oracle_bell(), [(0, basis), (1, basis)])
        assert dist[(0, 1)] == pytest.approx(0) and dist[(1, 0)] == pytest.approx(0)


def test_basis_string_length_must_match():
    alice, _ = pairs_states(3)
    with pytest.raises(ValueError):
        huang_measure_keys(alice, (0, 1), random.Random(0))


@pytest.mark.parametrize("variant", list(Variant))
def test_honest_run_agrees(variant):
    result = huang_run(4, variant, rng=random.Random(9))
    outcome, transcript = result
    assert isinstance(outcome, Completed)
    assert outcome.agreed and len(outcome.keys[Party.ALICE]) == 4
    classical = {k.value for k in MessageKind}
    kinds = [e.kind for e in transcript.events if e.kind in classical]
    assert kinds[0] == MessageKind.ACK.value
    assert kinds[-1] == MessageKind.DATA_BASES.value
    verdicts = transcript.messages(MessageKind.COMPARISON_VERDICT)
    judge = Party.BOB if variant is Variant.ORIGINAL else Party.ALICE
    assert [e.sender for e in verdicts] == [judge.value]
    assert lint_phase_gate(transcript.events, 1) == []


def test_key_bit_is_unbiased():
    rng = random.Random(10)
    trials = 10_000
    ones = 0
    for _ in range(trials):
        outcome = huang_run(1, rng=rng).outcome
        ones += outcome.keys[Party.ALICE][0]
    p = joint_distribution(oracle_bell(), [(0, "Z")])[(1,)]
    assert abs(ones / trials - p) <= 0.02


def test_run_arguments_are_checked():
    with pytest.raises(ValueError):
        huang_run(0, rng=random.Random(0))
    with pytest.raises(ValueError):
        huang_run(4)


def test_intercept_resend_is_caught_at_the_expected_rate():
    rng = random.Random(11)
    trials, l = 4000, 4
    passed = 0
    for _ in range(trials):
        tap = InterceptResend(rng, ["S_B"])
        outcome = huang_run(2, rng=rng, l=l, tap=tap).outcome
        if isinstance(outcome, Aborted):
            assert outcome.reason is AbortReason.EAVESDROPPING_DETECTED
            assert outcome.phase is Phase.PUBLIC_DISCUSSION
        else:
            passed += 1
    p = 0.75 ** l
    assert abs(passed / trials - p) <= 3 * math.sqrt(p * (1 - p) / trials)


@pytest.mark.parametrize("variant", list(Variant))
def test_insider_fixes_target_bit_unseen(variant):
    rng = random.Random(12)
    for _ in range(300):
        report = insider_huang_abort_retry(4, rng, target_bit=2, desired_value=1,
                                           variant=variant, keep_results=True)
        assert report.succeeded and report.final_key[2] == 1
        assert report.alice_detections == 0
        for run in report.outcomes[:-1]:
            out = run.outcome
            assert isinstance(out, Aborted) and out.accused is None
        assert isinstance(report.outcomes[-1].outcome, Completed)


def test_insider_reads_key_before_verdict():
    bob = AbortRetryBob(0, 1)
    result = huang_run(4, bob=bob, rng=random.Random(13))
    events = result.transcript.events
    derive = next(e.seq for e in events if e.kind == KEY_DERIVATION and e.sender == "bob")
    verdict = next(e.seq for e in events if e.kind == MessageKind.COMPARISON_VERDICT.value)
    assert derive < verdict
    assert lint_phase_gate(events, 1)


def test_restart_budget_is_honoured():
    report = insider_huang_abort_retry(4, random.Random(14), max_restarts=1, desired_value=0)
    assert report.runs == 1
    assert report.succeeded == (report.final_key is not None)
