"""
Monte-Carlo harness and closed-form oracles.

A :class:`ScenarioConfig` names a protocol, its sizes and an optional
adversary; :func:`run_monte_carlo` runs ``trials`` independent executions and
aggregates them into :class:`ScenarioStats`. Trial ``t`` draws from its own
stream derived from ``(master_seed, t)``, so results do not depend on how
trials are spread over worker processes.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import math
import random
import time
import warnings
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import adversary as adv
from .adversary import AdversaryConfig, AdversaryKind
from .fair import DEFAULT_M, DEFAULT_N, DEFAULT_RATIO, fair_run
from .huang import Variant, huang_run
from .channel import lint_phase_gate
from .keys import final_length
from .phases import AbortReason, Aborted, Completed, MessageKind, Party, Phase

PROTOCOLS = ("huang", "huang-star3", "fair")

CSV_COLUMNS = ["scenario", "trials", "completions", "pass_rate", "stderr",
               "key_equal_rate", "mean_restarts", "duration_ms",
               "detection_rate", "false_accepts", "probe_correct_rate", "analytic_pass"]


class ConfigError(ValueError):
    pass


class LeakageWarning(UserWarning):
    """Privacy amplification removes less than the eavesdropper may know."""


def parse_protocol(text: str) -> str:
    key = text.strip().lower().replace("_", "-")
    aliases = {"huang": "huang", "huang-original": "huang", "original": "huang",
               "huang-star3": "huang-star3", "huangstar3": "huang-star3", "star3": "huang-star3",
               "fair": "fair", "proposed": "fair"}
    try:
        return aliases[key]
    except KeyError:
        raise ConfigError(f"unknown protocol {text!r}; choose from {PROTOCOLS}") from None


# --- closed forms ------------------------------------------------------------


def analytic_pass_probability(l: int, per_decoy_pass: float = 0.75) -> float:
    """Chance an outsider survives ``l`` checked decoys: ``(3/4)**l``."""
    if l < 0:
        raise ValueError("decoy count must be non-negative")
    return per_decoy_pass ** l


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def eavesdropper_information_per_qubit(p_correct: float = 0.75) -> float:
    """``1 - H_b(p)`` bits per intercepted qubit; about 0.1887 at p = 3/4."""
    return 1.0 - binary_entropy(p_correct)


def leakage_margin_check(ratio: float) -> str:
    """``"ok"`` when the discarded fraction covers the per-qubit leakage."""
    if not 0 < ratio <= 1:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    return "ok" if (1.0 - ratio) >= eavesdropper_information_per_qubit() else "warning"


def binomial_stderr(p: float, trials: int) -> float:
    return math.sqrt(p * (1.0 - p) / trials) if trials else 0.0


# --- configuration ------------------------------------------------------------


@dataclass
class ScenarioConfig:
    protocol: str = "fair"
    n: int = DEFAULT_N
    m: int = DEFAULT_M
    l: Optional[int] = None
    threshold: float = 0.0
    ratio: float = DEFAULT_RATIO
    adversary: Optional[AdversaryConfig] = None
    trials: int = 1
    master_seed: int = 0
    hash_name: str = "sha256"
    name: Optional[str] = None

    def __post_init__(self):
        self.protocol = parse_protocol(self.protocol)
        if isinstance(self.adversary, (dict, str)):
            try:
                self.adversary = AdversaryConfig.from_dict(self.adversary)
            except (TypeError, ValueError) as exc:
                raise ConfigError(str(exc)) from None

    @property
    def decoys(self) -> int:
        return self.n if self.l is None else self.l

    @property
    def scenario(self) -> str:
        if self.name:
            return self.name
        kind = self.adversary.kind.value if self.adversary else "honest"
        return f"{self.protocol}:{kind}:n={self.n}:l={self.decoys}"

    def validate(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.m < 1:
            raise ConfigError("m must be at least 1")
        if self.decoys < 1:
            raise ConfigError("l must be at least 1")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("threshold must lie in [0, 1]")
        if not 0.0 < self.ratio <= 1.0:
            raise ConfigError("ratio must lie in (0, 1]")
        if not 0 <= self.master_seed < 2 ** 64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        if self.hash_name == "sha256" and self.m > 256:
            raise ConfigError("sha256 gives at most 256 hash bits")
        if self.hash_name == "toy" and self.m > 64:
            raise ConfigError("the toy hash gives at most 64 bits")
        adversary = self.adversary
        if adversary is not None:
            try:
                adversary.validate_for(self.n)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
            kind = adversary.kind
            huang_only = {AdversaryKind.INSIDER_HUANG_ABORT_RETRY}
            fair_only = {AdversaryKind.INSIDER_FAIR_PROBE,
                         AdversaryKind.INSIDER_FAIR_FAKE_PERMUTATION, AdversaryKind.CNOT_CE}
            if kind in huang_only and self.protocol == "fair":
                raise ConfigError(f"{kind.value} attacks Huang's protocol, not the fair one")
            if kind in fair_only and self.protocol != "fair":
                raise ConfigError(f"{kind.value} needs the fair protocol")
        if self.protocol == "fair" and leakage_margin_check(self.ratio) == "warning":
            warnings.warn(
                f"ratio {self.ratio} keeps more than 1 - {eavesdropper_information_per_qubit():.4f} "
                "of the raw key", LeakageWarning, stacklevel=2)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["adversary"] = self.adversary.to_dict() if self.adversary else None
        return d

    @classmethod
    def from_dict(cls, obj: dict) -> "ScenarioConfig":
        fields = {f.name for f in dataclasses.fields(cls)}
        extra = set(obj) - fields
        if extra:
            raise ConfigError(f"unknown config fields {sorted(extra)}")
        return cls(**obj)


def trial_stream(master_seed: int, trial: int) -> random.Random:
    """Independent generator for trial ``trial``, derived via SeedSequence."""
    state = np.random.SeedSequence([master_seed, trial]).generate_state(4, dtype=np.uint64)
    return random.Random(int.from_bytes(state.tobytes(), "little"))


# --- one trial -------------------------------------------------------------------


def _decoy_tally(result, tap, tally: Counter) -> None:
    """Per-decoy mismatch counts on tapped sequences of a fair run."""
    session = result.session
    bodies = {e.sender: json.loads(e.body) for e in session.transcript.events
              if e.kind == MessageKind.DECOY_RESULTS.value}
    seen = getattr(tap, "eavesdropped", None) or getattr(tap, "ancillae", None) or {}
    for label, per_slot in seen.items():
        name, suffix = label.split("_")
        sender = Party.ALICE if suffix == "A" else Party.BOB
        results = bodies.get(sender.peer.value)
        if results is None or sender not in session.states:
            continue
        for rec, got in zip(session.states[sender].records[name], results[name]):
            if per_slot[rec.position] is None:
                continue
            basis = rec.prepared.basis.code
            wrong = int(got != rec.prepared.bit)
            tally["decoys_tapped"] += 1
            tally["decoy_mismatches"] += wrong
            tally[f"decoys_tapped_{basis}"] += 1
            tally[f"decoy_mismatches_{basis}"] += wrong


def _record_outcome(outcome, tally: Counter) -> None:
    if isinstance(outcome, Completed):
        tally["completions"] += 1
        tally["passes"] += 1
        tally["key_equal"] += int(outcome.agreed)
    else:
        tally[f"abort:{outcome.phase.label}/{outcome.reason.value}"] += 1
        if outcome.phase is not Phase.PUBLIC_DISCUSSION:
            tally["passes"] += 1


GATE_VERDICTS = {"fair": 2, "huang": 1, "huang-star3": 1}


def _lint(transcript, protocol: str, tally: Counter) -> None:
    tally["transcripts_linted"] += 1
    tally["transcripts_flagged"] += int(bool(lint_phase_gate(transcript.events,
                                                             GATE_VERDICTS[protocol])))


def run_trial(config: ScenarioConfig, trial: int) -> Counter:
    """Execute trial ``trial`` of ``config`` and return its counts."""
    rng = trial_stream(config.master_seed, trial)
    tally: Counter = Counter()
    adversary = config.adversary
    kind = adversary.kind if adversary else None

    if kind is AdversaryKind.INSIDER_HUANG_ABORT_RETRY:
        variant = Variant.STAR3 if config.protocol == "huang-star3" else Variant.ORIGINAL
        report = adv.insider_huang_abort_retry(
            config.n, rng, adversary.target_bit, adversary.desired_value,
            adversary.max_restarts, variant, config.decoys, config.threshold, keep_results=True)
        for result in report.outcomes:
            _lint(result.transcript, config.protocol, tally)
        tally["completions"] += int(report.succeeded)
        tally["passes"] += int(report.succeeded)
        tally["key_equal"] += int(report.succeeded)
        if not report.succeeded:
            tally[f"abort:PublicDiscussion/{AbortReason.EAVESDROPPING_DETECTED.value}"] += 1
        tally["attack_success"] += int(report.succeeded)
        tally["restarts"] += report.runs
        tally["alice_detections"] += report.alice_detections
        return tally

    tap = adv.make_tap(adversary, rng, config.protocol) if adversary else None
    if config.protocol == "fair":
        alice = bob = None
        if kind is AdversaryKind.INSIDER_FAIR_PROBE:
            bob = adv.ProbingBob()
        elif kind is AdversaryKind.INSIDER_FAIR_FAKE_PERMUTATION:
            bob = adv.FakeOrderBob(adversary.strategy)
        result = fair_run(config.n, config.m, config.decoys, config.threshold, config.ratio,
                          rng, alice, bob, tap, config.hash_name)
        _record_outcome(result.outcome, tally)
        _lint(result.transcript, config.protocol, tally)
        if tap is not None:
            _decoy_tally(result, tap, tally)
        if kind is AdversaryKind.INSIDER_FAIR_PROBE and bob.result is not None:
            tally["probe_trials"] += 1
            tally["probe_correct"] += int(bob.result.correct)
            tally[f"probe_position_{bob.result.true_position}"] += 1
        if kind is AdversaryKind.INSIDER_FAIR_FAKE_PERMUTATION and bob.announced is not None:
            states = result.session.states
            effective = states[Party.ALICE].peer_key != states[Party.BOB].material.key
            out = result.outcome
            caught = (isinstance(out, Aborted) and out.reason is AbortReason.MANIPULATION_DETECTED
                      and out.accused is Party.BOB)
            tally["manipulation_attempts"] += 1
            if effective:
                tally["effective_manipulations"] += 1
                tally["detected_manipulations"] += int(caught)
                tally["false_accepts"] += int(not caught)
            else:
                tally["ineffective_manipulations"] += 1
        return tally

    variant = Variant.STAR3 if config.protocol == "huang-star3" else Variant.ORIGINAL
    result = huang_run(config.n, variant, rng=rng, l=config.decoys,
                       threshold=config.threshold, tap=tap)
    _record_outcome(result.outcome, tally)
    _lint(result.transcript, config.protocol, tally)
    return tally


def _run_chunk(args) -> Counter:
    config, start, stop = args
    total: Counter = Counter()
    for t in range(start, stop):
        total.update(run_trial(config, t))
    return total


# --- aggregation -------------------------------------------------------------------


def _rate(num: int, den: int) -> Optional[float]:
    return num / den if den else None


@dataclass
class ScenarioStats:
    scenario: str
    trials: int
    completions: int
    abort_counts: dict
    passes: int
    pass_rate: float
    stderr: float
    key_equal: int
    key_equal_rate: float
    mean_restarts: Optional[float] = None
    attack_success_rate: Optional[float] = None
    alice_detections: Optional[int] = None
    manipulation_attempts: Optional[int] = None
    effective_manipulations: Optional[int] = None
    ineffective_manipulations: Optional[int] = None
    detected_manipulations: Optional[int] = None
    false_accepts: Optional[int] = None
    detection_rate: Optional[float] = None
    probe_trials: Optional[int] = None
    probe_correct_rate: Optional[float] = None
    probe_positions: Optional[dict] = None
    decoys_tapped: Optional[int] = None
    decoy_detection_rate: Optional[float] = None
    decoy_detection_by_basis: Optional[dict] = None
    analytic_pass: Optional[float] = None
    final_key_bits: Optional[int] = None
    transcripts_linted: int = 0
    transcripts_flagged: int = 0
    duration_ms: float = field(default=0.0, compare=False)

    def to_dict(self, timing: bool = True) -> dict:
        """``timing=False`` blanks the wall-clock field so output is reproducible."""
        d = dataclasses.asdict(self)
        if not timing:
            d["duration_ms"] = None
        return d

    def to_json(self, timing: bool = True) -> str:
        return json.dumps(self.to_dict(timing), indent=2, sort_keys=True)

    def csv_row(self, timing: bool = True) -> dict:
        d = self.to_dict(timing)
        return {c: ("" if d.get(c) is None else d[c]) for c in CSV_COLUMNS}

    def to_csv(self, timing: bool = True) -> str:
        return stats_to_csv([self], timing)


def stats_to_csv(stats: list, timing: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for s in stats:
        writer.writerow(s.csv_row(timing))
    return buf.getvalue()


def _tapped_decoys(config: ScenarioConfig) -> Optional[int]:
    adversary = config.adversary
    if adversary is None or adversary.kind not in (AdversaryKind.INTERCEPT_RESEND,
                                                   AdversaryKind.CNOT_CE):
        return None
    targets = adversary.targets
    if targets == adv.ALL_SEQUENCES:
        count = 4 if config.protocol == "fair" else 1
    elif targets is None:
        count = 1
    else:
        count = len(targets)
    return count * config.decoys


def summarize(config: ScenarioConfig, tally: Counter, duration_ms: float) -> ScenarioStats:
    trials = config.trials
    passes = tally["passes"]
    pass_rate = passes / trials
    aborts = {k.split(":", 1)[1]: v for k, v in sorted(tally.items()) if k.startswith("abort:")}
    stats = ScenarioStats(
        scenario=config.scenario,
        trials=trials,
        completions=tally["completions"],
        abort_counts=aborts,
        passes=passes,
        pass_rate=pass_rate,
        stderr=binomial_stderr(pass_rate, trials),
        key_equal=tally["key_equal"],
        key_equal_rate=tally["key_equal"] / trials,
        transcripts_linted=tally["transcripts_linted"],
        transcripts_flagged=tally["transcripts_flagged"],
        duration_ms=duration_ms,
    )
    if config.protocol == "fair":
        stats.final_key_bits = final_length(config.n, config.ratio)
    kind = config.adversary.kind if config.adversary else None
    if kind is AdversaryKind.INSIDER_HUANG_ABORT_RETRY:
        stats.mean_restarts = tally["restarts"] / trials
        stats.attack_success_rate = tally["attack_success"] / trials
        stats.alice_detections = tally["alice_detections"]
    elif kind is AdversaryKind.INSIDER_FAIR_FAKE_PERMUTATION:
        stats.manipulation_attempts = tally["manipulation_attempts"]
        stats.effective_manipulations = tally["effective_manipulations"]
        stats.ineffective_manipulations = tally["ineffective_manipulations"]
        stats.detected_manipulations = tally["detected_manipulations"]
        stats.false_accepts = tally["false_accepts"]
        stats.detection_rate = _rate(tally["detected_manipulations"],
                                     tally["effective_manipulations"])
    elif kind is AdversaryKind.INSIDER_FAIR_PROBE:
        stats.probe_trials = tally["probe_trials"]
        stats.probe_correct_rate = _rate(tally["probe_correct"], tally["probe_trials"])
        stats.probe_positions = {str(i): tally[f"probe_position_{i}"] for i in range(config.n)}
    elif kind in (AdversaryKind.INTERCEPT_RESEND, AdversaryKind.CNOT_CE):
        coverage = config.adversary.coverage
        stats.analytic_pass = analytic_pass_probability(_tapped_decoys(config), 1 - coverage / 4)
        if tally["decoys_tapped"]:
            stats.decoys_tapped = tally["decoys_tapped"]
            stats.decoy_detection_rate = tally["decoy_mismatches"] / tally["decoys_tapped"]
            stats.decoy_detection_by_basis = {
                b: _rate(tally[f"decoy_mismatches_{b}"], tally[f"decoys_tapped_{b}"])
                for b in ("Z", "X")
            }
    return stats


def run_monte_carlo(config: ScenarioConfig, workers: int = 1) -> ScenarioStats:
    """Run every trial of ``config`` and aggregate. Invalid configs fail before trial 0."""
    config.validate()
    start = time.perf_counter()
    if workers <= 1:
        tally = _run_chunk((config, 0, config.trials))
    else:
        step = math.ceil(config.trials / workers)
        chunks = [(config, s, min(s + step, config.trials))
                  for s in range(0, config.trials, step)]
        tally = Counter()
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_run_chunk, chunks):
                tally.update(part)
    duration = (time.perf_counter() - start) * 1000.0
    return summarize(config, tally, duration)


def run_sweep(config: ScenarioConfig, param: str, values, workers: int = 1) -> list:
    """One :func:`run_monte_carlo` per value of ``param``."""
    if param not in {"l", "n", "m", "threshold", "ratio"}:
        raise ConfigError(f"cannot sweep {param!r}")
    out = []
    for v in values:
        cfg = dataclasses.replace(config, **{param: v})
        if config.name:
            cfg.name = f"{config.name}:{param}={v}"
        out.append(run_monte_carlo(cfg, workers))
    return out


def analytic_table(l_values=(1, 2, 4, 8, 10, 16), ratios=(0.8, 0.9, 1.0)) -> dict:
    """Closed-form figures printed by ``qka-sim analyze``."""
    return {
        "pass_probability": [{"l": l, "pass": analytic_pass_probability(l)} for l in l_values],
        "information_per_qubit": eavesdropper_information_per_qubit(),
        "binary_entropy_3_4": binary_entropy(0.75),
        "leakage_margin": [{"ratio": r, "discarded": round(1 - r, 12),
                            "status": leakage_margin_check(r)} for r in ratios],
    }
