"""Simulator for two-party quantum key agreement and attacks on it."""

from .adversary import AdversaryConfig, AdversaryKind
from .analysis import (
    ScenarioConfig,
    ScenarioStats,
    analytic_pass_probability,
    eavesdropper_information_per_qubit,
    leakage_margin_check,
    run_monte_carlo,
    run_sweep,
)
from .channel import Transcript, lint_phase_gate, read_jsonl
from .fair import fair_run
from .huang import Variant, huang_run
from .phases import AbortReason, Aborted, Completed, Party, Phase
from .quantum import Basis, PolarizationState, QubitRegister, measure

__all__ = [
    "AbortReason", "Aborted", "AdversaryConfig", "AdversaryKind", "Basis", "Completed",
    "Party", "Phase", "PolarizationState", "QubitRegister", "ScenarioConfig", "ScenarioStats",
    "Transcript", "Variant", "analytic_pass_probability", "eavesdropper_information_per_qubit",
    "fair_run", "huang_run", "leakage_margin_check", "lint_phase_gate", "measure",
    "read_jsonl", "run_monte_carlo", "run_sweep",
]

__version__ = "0.1.0"
