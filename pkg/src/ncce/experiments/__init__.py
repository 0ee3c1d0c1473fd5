"""Estimators, Monte Carlo harness and result persistence."""

from .estimators import estimate_coherent, estimate_noncoherent
from .sweeps import (
    LadderResult,
    ScalingResult,
    SweepResult,
    find_min_measurements,
    run_trials,
    sweep_array_size,
    sweep_mcs,
    wilson_interval,
)
from .trial import TrialConfig, TrialRecord, run_trial
