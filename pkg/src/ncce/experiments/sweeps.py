"""Monte Carlo sweeps over M_CS, measurement count and array size.

Trial ``i`` of a sweep with base seed ``s`` runs with seed
``split_seed(s, i)``, so every record is a pure function of the template,
the base seed and its index.  Worker pools only change the schedule;
records are always returned sorted by trial index.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import norm

from ..errors import ConfigError
from .trial import SUCCESS_LOSS_DB, TrialConfig, TrialRecord, run_trial, split_seed

log = logging.getLogger(__name__)

WILSON_Z = float(norm.ppf(0.975))
# Losses are clipped here before averaging so a single null-steered trial
# (infinite loss) does not swamp the mean.
LOSS_CAP_DB = 60.0
EARLY_STOP_CHUNK = 50
# Multipliers on the M_CS heuristic constant tried by the optional inner search.
MCS_SEARCH_RATIOS = (1.0, 0.5, 1.5, 2.0, 3.0)


def wilson_interval(successes: int, trials: int, z: float = WILSON_Z) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials <= 0:
        return 0.0, 1.0
    p = successes / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z2 / (4 * trials * trials)) / denom
    return max(0.0, center - half), min(1.0, center + half)


def max_failures_allowed(trials: int, target_rate: float) -> int:
    """Largest failure count whose Wilson lower bound still meets ``target_rate`` (-1 if none)."""
    allowed = -1
    for failures in range(trials + 1):
        if wilson_interval(trials - failures, trials)[0] >= target_rate:
            allowed = failures
        else:
            break
    return allowed


def _run_indexed(args) -> TrialRecord:
    template, base_seed, index = args
    return run_trial(template.with_(seed=split_seed(base_seed, index)), trial_index=index)


def run_trials(
    template: TrialConfig,
    indices: Iterable[int],
    *,
    base_seed: int | None = None,
    workers: int = 1,
) -> list[TrialRecord]:
    """Run the trials with the given indices; result is sorted by index."""
    template.validate(warn=False)
    seed = template.seed if base_seed is None else base_seed
    jobs = [(template, seed, int(i)) for i in indices]
    if workers <= 1 or len(jobs) <= 1:
        records = [_run_indexed(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_indexed, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    return sorted(records, key=lambda r: r.trial_index)


@dataclass(frozen=True)
class SweepPoint:
    axis_value: float
    trials: int
    successes: int
    success_rate: float
    wilson_lo: float
    wilson_hi: float
    mean_loss_db: float
    median_loss_db: float
    mean_loss_all_paths_db: float


@dataclass
class SweepResult:
    axis: str
    points: list[SweepPoint]
    records: list[TrialRecord] = field(default_factory=list)

    @property
    def axis_values(self) -> list[float]:
        return [p.axis_value for p in self.points]

    @property
    def mean_losses(self) -> np.ndarray:
        return np.array([p.mean_loss_db for p in self.points])


def aggregate(axis_value, records: Sequence[TrialRecord], loss_db: float = SUCCESS_LOSS_DB) -> SweepPoint:
    """Summarize trial records at one sweep point."""
    n = len(records)
    losses = np.array([r.loss_strongest_db for r in records], dtype=float)
    capped = np.minimum(losses, LOSS_CAP_DB)
    all_paths = np.array(
        [min(max(r.loss_all_paths_db, default=LOSS_CAP_DB), LOSS_CAP_DB) for r in records]
    )
    successes = int(np.sum(losses <= loss_db))
    lo, hi = wilson_interval(successes, n)
    return SweepPoint(
        axis_value=axis_value,
        trials=n,
        successes=successes,
        success_rate=successes / n if n else 0.0,
        wilson_lo=lo,
        wilson_hi=hi,
        mean_loss_db=float(capped.mean()) if n else float("nan"),
        median_loss_db=float(np.median(losses)) if n else float("nan"),
        mean_loss_all_paths_db=float(all_paths.mean()) if n else float("nan"),
    )


def sweep_mcs(
    template: TrialConfig,
    mcs_values: Sequence[int],
    trials_per_point: int,
    *,
    workers: int = 1,
) -> SweepResult:
    """Beamforming loss versus M_CS at fixed M.

    Each point reuses trial indices 0..trials_per_point-1, so channels are
    shared across points (common random numbers).
    """
    for m_cs in mcs_values:
        if 2 * m_cs > template.m:
            raise ConfigError(f"m_cs={m_cs} violates 2*m_cs <= m={template.m}")
    points, records = [], []
    for m_cs in mcs_values:
        recs = run_trials(template.with_(m_cs=int(m_cs)), range(trials_per_point), workers=workers)
        points.append(aggregate(int(m_cs), recs))
        records.extend(recs)
    return SweepResult("m_cs", points, records)


def mcs_heuristic(m: int, n: int, k: int, c: float = 1.5) -> int:
    """``clamp(round(c*K*log2(N)), 2K+1, M//2)``."""
    return int(min(max(round(c * k * math.log2(n)), 2 * k + 1), m // 2))


@dataclass(frozen=True)
class LadderStep:
    m: int
    m_cs: int
    trials: int
    successes: int
    wilson_lo: float
    passed: bool


@dataclass
class LadderResult:
    """Outcome of a minimal-M search; ``m_star`` is None if the cap was hit."""

    m_star: int | None
    steps: list[LadderStep]
    records: list[TrialRecord] = field(default_factory=list)

    @property
    def m_cs_star(self) -> int | None:
        for step in self.steps:
            if step.m == self.m_star:
                return step.m_cs
        return None


def mcs_candidates(m: int, n: int, k: int, c: float = 1.5, search: bool = False) -> list[int]:
    """M_CS values tried at one ladder rung, heuristic first.

    With ``search`` the heuristic constant is also scaled by each of
    :data:`MCS_SEARCH_RATIOS`; values are clipped to ``n`` and deduplicated.
    """
    ratios = MCS_SEARCH_RATIOS if search else (1.0,)
    out: list[int] = []
    for r in ratios:
        value = min(mcs_heuristic(m, n, k, r * c), n)
        if value not in out:
            out.append(value)
    return out


def _evaluate_cfg(
    cfg: TrialConfig, trials: int, target_rate: float, loss_db: float, workers: int
) -> tuple[LadderStep, list[TrialRecord]]:
    allowed = max_failures_allowed(trials, target_rate)
    records: list[TrialRecord] = []
    failures = 0
    # chunked so early stopping never depends on the worker count
    for start in range(0, trials, EARLY_STOP_CHUNK):
        idx = range(start, min(trials, start + EARLY_STOP_CHUNK))
        chunk = run_trials(cfg, idx, workers=workers)
        records.extend(chunk)
        failures += sum(not r.succeeded(loss_db) for r in chunk)
        if failures > allowed:
            break
    successes = len(records) - failures
    lo = wilson_interval(successes, len(records))[0]
    passed = len(records) == trials and lo >= target_rate
    m_cs = cfg.m_cs if cfg.estimator == "noncoherent" else 0
    return LadderStep(cfg.m, m_cs, len(records), successes, lo, passed), records


def _evaluate_m(
    template: TrialConfig,
    m: int,
    trials: int,
    target_rate: float,
    loss_db: float,
    mcs_factor: float,
    mcs_search: bool,
    workers: int,
) -> tuple[LadderStep, list[TrialRecord]]:
    """One ladder rung; with several M_CS candidates the rung passes if any does."""
    if template.estimator != "noncoherent":
        return _evaluate_cfg(template.with_(m=m), trials, target_rate, loss_db, workers)
    best, records = None, []
    for m_cs in mcs_candidates(m, template.n_elements, template.k_paths, mcs_factor, mcs_search):
        step, recs = _evaluate_cfg(template.with_(m=m, m_cs=m_cs), trials, target_rate, loss_db, workers)
        records.extend(recs)
        if best is None or (step.passed, step.wilson_lo) > (best.passed, best.wilson_lo):
            best = step
        if step.passed:
            break
    return best, records


def find_min_measurements(
    template: TrialConfig,
    target_rate: float = 0.99,
    loss_db: float = SUCCESS_LOSS_DB,
    trials_per_point: int = 400,
    *,
    m_start: int | None = None,
    m_cap: int = 8192,
    rel_resolution: float = 1 / 16,
    mcs_factor: float = 1.5,
    mcs_search: bool = False,
    workers: int = 1,
) -> LadderResult:
    """Smallest M on a doubling-then-bisection ladder meeting the success target.

    A ladder point passes when the Wilson 95% lower bound on the rate of
    trials with loss <= ``loss_db`` reaches ``target_rate``.  Trials stop
    early (in fixed chunks) once a point can no longer pass.  Bisection
    stops when the bracket is within ``rel_resolution`` of its upper end.
    M_CS follows :func:`mcs_heuristic` at every ladder point; with
    ``mcs_search`` a few rescaled candidates are tried too and a rung passes
    if any of them does (see :func:`mcs_candidates`).
    """
    if not 0.0 <= target_rate < 1.0:
        raise ConfigError("target_rate must lie in [0, 1)")
    k = template.k_paths
    if m_start is None:
        m_start = 2 * (2 * k + 1) if template.estimator == "noncoherent" else 2 * k + 1
    steps: list[LadderStep] = []
    records: list[TrialRecord] = []
    if max_failures_allowed(trials_per_point, target_rate) < 0:
        return LadderResult(None, steps, records)

    def evaluate(m: int) -> bool:
        step, recs = _evaluate_m(
            template, m, trials_per_point, target_rate, loss_db, mcs_factor, mcs_search, workers
        )
        log.info(
            "%s N=%d K=%d M=%d M_CS=%d: %d/%d ok, wilson_lo=%.4f%s",
            template.estimator, template.n_elements, k, step.m, step.m_cs,
            step.successes, step.trials, step.wilson_lo, " PASS" if step.passed else "",
        )
        steps.append(step)
        records.extend(recs)
        return step.passed

    lo, hi = None, None
    m = m_start
    while m <= m_cap:
        if evaluate(m):
            hi = m
            break
        lo = m
        m *= 2
    if hi is None:
        return LadderResult(None, steps, records)
    while lo is not None and hi - lo > max(1, int(rel_resolution * hi)):
        mid = (lo + hi) // 2
        if evaluate(mid):
            hi = mid
        else:
            lo = mid
    return LadderResult(hi, steps, records)


@dataclass(frozen=True)
class ScalingRow:
    n: int
    k: int
    m_star: int | None
    m_cs_star: int | None
    m_star_coherent: int | None = None

    @property
    def ratio(self) -> float | None:
        if self.m_star is None or not self.m_star_coherent:
            return None
        return self.m_star / self.m_star_coherent


@dataclass
class ScalingResult:
    rows: list[ScalingRow]
    ladders: dict = field(default_factory=dict)

    def m_star(self, n: int, k: int) -> int | None:
        for row in self.rows:
            if row.n == n and row.k == k:
                return row.m_star
        raise KeyError((n, k))

    @property
    def records(self) -> list[TrialRecord]:
        out = []
        for ladder in self.ladders.values():
            out.extend(ladder.records)
        return out


def sweep_array_size(
    template: TrialConfig,
    n_values: Sequence[int],
    k_values: Sequence[int],
    trials_per_point: int = 400,
    *,
    target_rate: float = 0.99,
    loss_db: float = SUCCESS_LOSS_DB,
    compare_coherent: bool = False,
    workers: int = 1,
    **ladder_kwargs,
) -> ScalingResult:
    """Minimal M for every (N, K); optionally paired with the coherent baseline."""
    rows, ladders = [], {}
    for k in k_values:
        for n in n_values:
            cfg = template.with_(n_elements=int(n), k_paths=int(k), min_separation=None)
            nc = find_min_measurements(
                cfg, target_rate, loss_db, trials_per_point, workers=workers, **ladder_kwargs
            )
            ladders[(n, k, "noncoherent")] = nc
            m_coh = None
            if compare_coherent:
                coh = find_min_measurements(
                    cfg.with_(estimator="coherent", ensemble="quantized"),
                    target_rate, loss_db, trials_per_point, workers=workers, **ladder_kwargs,
                )
                ladders[(n, k, "coherent")] = coh
                m_coh = coh.m_star
            rows.append(ScalingRow(int(n), int(k), nc.m_star, nc.m_cs_star, m_coh))
    return ScalingResult(rows, ladders)
