"""One seeded Monte Carlo trial: draw a channel, sense it, estimate, score."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..channel import (
    TWO_PI,
    ArrayConfig,
    SparseChannel,
    array_factor,
    beamforming_loss_db,
    best_single_beam_gain,
    synthesize_channel,
    wrap_freq,
)
from ..errors import ConfigError, NcceError
from ..nomp import STOP_KNOWN_K, EstimateResult, NompOptions
from ..phase_retrieval import WfOptions
from ..sensing import (
    build_ensemble,
    build_gaussian_ensemble,
    measure_coherent,
    measure_rss,
    sample_gaussian_matrix,
    sample_quantized_matrix,
    substream,
)
from .estimators import estimate_coherent, estimate_noncoherent

AMPLITUDE_MODELS = ("unit_modulus_random_phase", "complex_gaussian")
ESTIMATORS = ("noncoherent", "coherent")
ENSEMBLES = ("quantized", "gaussian")

# Sub-stream offsets under a trial seed.
STREAM_CHANNEL = 0
STREAM_ENSEMBLE = 1
STREAM_NOISE = 2

SUCCESS_LOSS_DB = 1.0
MAX_SEPARATION_DRAWS = 10_000


def split_seed(seed: int, index: int) -> int:
    """64-bit child seed for ``(seed, index)``."""
    state = np.random.SeedSequence([int(seed), int(index)]).generate_state(1, dtype=np.uint64)
    return int(state[0])


@dataclass(frozen=True)
class TrialConfig:
    n_elements: int
    k_paths: int
    m: int
    m_cs: int
    min_separation: float | None = None
    amplitude_model: str = "unit_modulus_random_phase"
    noise_std: float = 0.0
    wf: WfOptions = field(default_factory=WfOptions)
    nomp: NompOptions = field(default_factory=NompOptions)
    seed: int = 0
    estimator: str = "noncoherent"
    ensemble: str = "quantized"

    def __post_init__(self):
        if isinstance(self.wf, dict):
            object.__setattr__(self, "wf", WfOptions(**self.wf))
        if isinstance(self.nomp, dict):
            object.__setattr__(self, "nomp", NompOptions(**self.nomp))

    @property
    def separation(self) -> float:
        if self.min_separation is None:
            return 4 * TWO_PI / self.n_elements
        return float(self.min_separation)

    def validate(self, warn: bool = True) -> "TrialConfig":
        """Raise :class:`ConfigError` on inconsistent settings; returns self.

        With ``warn`` set, also warn when m_cs leaves little room for k_paths.
        """
        if self.n_elements < 2:
            raise ConfigError("n_elements must be >= 2")
        if self.k_paths < 1:
            raise ConfigError("k_paths must be >= 1")
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}")
        if self.ensemble not in ENSEMBLES:
            raise ConfigError(f"ensemble must be one of {ENSEMBLES}")
        if self.amplitude_model not in AMPLITUDE_MODELS:
            raise ConfigError(f"amplitude_model must be one of {AMPLITUDE_MODELS}")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")
        if self.separation * self.k_paths > TWO_PI:
            raise ConfigError("min_separation too large to place k_paths paths")
        if self.estimator == "noncoherent":
            if self.m_cs < 1 or 2 * self.m_cs > self.m:
                raise ConfigError(f"need 1 <= m_cs and 2*m_cs <= m (m={self.m}, m_cs={self.m_cs})")
            if self.m_cs > self.n_elements:
                raise ConfigError("m_cs must not exceed n_elements")
            if warn and 4 * self.k_paths > self.m_cs:
                warnings.warn(
                    f"m_cs={self.m_cs} is below 4*k_paths={4 * self.k_paths}", stacklevel=2
                )
        return self

    def with_(self, **changes) -> "TrialConfig":
        return dataclasses.replace(self, **changes)

    def nomp_options(self) -> NompOptions:
        if self.nomp.stop_mode == STOP_KNOWN_K:
            return dataclasses.replace(self.nomp, k=self.k_paths)
        return self.nomp

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class TrialRecord:
    config_hash: str
    trial_index: int
    seed: int
    n: int
    k: int
    m: int
    m_cs: int
    loss_strongest_db: float
    loss_all_paths_db: tuple[float, ...]
    freq_errors: tuple[float, ...]
    stage1_converged: bool
    success_1db: bool
    wall_time: float
    mismatch_fro_rel: float = float("nan")
    error: str | None = None

    @property
    def freq_err_max(self) -> float:
        return max(self.freq_errors) if self.freq_errors else float("inf")

    def succeeded(self, loss_db: float = SUCCESS_LOSS_DB) -> bool:
        return self.loss_strongest_db <= loss_db


def draw_channel(cfg: TrialConfig, rng: np.random.Generator) -> SparseChannel:
    """Uniform frequencies with rejection until pairwise separation holds."""
    k, sep = cfg.k_paths, cfg.separation
    for _ in range(MAX_SEPARATION_DRAWS):
        freqs = wrap_freq(rng.uniform(-np.pi, np.pi, size=k))
        gaps = np.abs(wrap_freq(freqs[:, None] - freqs[None, :]))
        if k == 1 or gaps[~np.eye(k, dtype=bool)].min() >= sep:
            break
    else:
        raise ConfigError("could not place paths with the requested separation")
    if cfg.amplitude_model == "unit_modulus_random_phase":
        amps = np.exp(1j * rng.uniform(0, TWO_PI, size=k))
    else:
        amps = np.sqrt(0.5) * (rng.standard_normal(k) + 1j * rng.standard_normal(k))
    return SparseChannel.from_arrays(ArrayConfig(cfg.n_elements), amps, freqs)


def match_paths(true_freqs: np.ndarray, est_freqs: np.ndarray) -> dict[int, int]:
    """Greedy nearest-frequency matching; maps true index -> estimated index."""
    pairs = []
    for i, w in enumerate(true_freqs):
        for j, v in enumerate(est_freqs):
            pairs.append((abs(wrap_freq(v - w)), i, j))
    pairs.sort()
    used_true, used_est, match = set(), set(), {}
    for _, i, j in pairs:
        if i not in used_true and j not in used_est:
            match[i] = j
            used_true.add(i)
            used_est.add(j)
    return match


def score_estimate(channel: SparseChannel, h: np.ndarray, result: EstimateResult):
    """Return (loss_strongest_db, loss_all_paths_db, freq_errors)."""
    n = channel.array.n_elements
    if not result.paths:
        k = channel.k
        return float("inf"), (float("inf"),) * k, (float("inf"),) * k
    _, gain_opt = best_single_beam_gain(h)
    loss_strongest = beamforming_loss_db(h, result.paths[0].spatial_freq, gain_opt=gain_opt)
    est = result.freqs
    match = match_paths(channel.freqs, est)
    losses, errors = [], []
    for i, w in enumerate(channel.freqs):
        if i not in match:
            losses.append(float("inf"))
            errors.append(float("inf"))
            continue
        delta = wrap_freq(est[match[i]] - w)
        af = abs(array_factor(n, delta))
        losses.append(float("inf") if af <= 1e-12 * n else float(20 * np.log10(n / af)))
        errors.append(abs(delta))
    return float(loss_strongest), tuple(losses), tuple(errors)


def simulate(cfg: TrialConfig):
    """Draw channel and measurements and run the configured estimator.

    Returns ``(channel, h, result, mismatch_fro_rel)``.
    """
    seed = cfg.seed
    channel = draw_channel(cfg, substream(seed, STREAM_CHANNEL))
    h = synthesize_channel(channel)
    ens_seed = split_seed(seed, STREAM_ENSEMBLE)
    noise_rng = substream(seed, STREAM_NOISE)
    if cfg.estimator == "coherent":
        mat_rng = substream(ens_seed, 0)
        if cfg.ensemble == "quantized":
            a = sample_quantized_matrix(cfg.m, cfg.n_elements, mat_rng)
        else:
            # CN(0, 1) entries: same per-entry power as the unit-modulus alphabet
            a = np.sqrt(cfg.n_elements) * sample_gaussian_matrix(cfg.m, cfg.n_elements, mat_rng)
        y = measure_coherent(a, h, cfg.noise_std, noise_rng)
        return channel, h, estimate_coherent(y, a, cfg.nomp_options()), float("nan")
    build = build_ensemble if cfg.ensemble == "quantized" else build_gaussian_ensemble
    ens = build(cfg.m, cfg.m_cs, cfg.n_elements, ens_seed)
    y = measure_rss(ens.a_final, h, cfg.noise_std, noise_rng)
    result = estimate_noncoherent(y, ens, cfg.wf, cfg.nomp_options())
    return channel, h, result, ens.mismatch_fro_rel


def run_trial(cfg: TrialConfig, trial_index: int = 0) -> TrialRecord:
    """Run one trial; estimator and numerical errors become failed records."""
    cfg.validate(warn=False)
    start = time.perf_counter()
    common = dict(
        config_hash=cfg.hash(),
        trial_index=int(trial_index),
        seed=int(cfg.seed),
        n=cfg.n_elements,
        k=cfg.k_paths,
        m=cfg.m,
        m_cs=cfg.m_cs if cfg.estimator == "noncoherent" else 0,
    )
    try:
        channel, h, result, mismatch = simulate(cfg)
        loss, losses, errors = score_estimate(channel, h, result)
    except (NcceError, np.linalg.LinAlgError, FloatingPointError) as exc:
        k = cfg.k_paths
        return TrialRecord(
            **common,
            loss_strongest_db=float("inf"),
            loss_all_paths_db=(float("inf"),) * k,
            freq_errors=(float("inf"),) * k,
            stage1_converged=False,
            success_1db=False,
            wall_time=time.perf_counter() - start,
            error=f"{type(exc).__name__}: {exc}",
        )
    stage1 = result.stage1
    converged = bool(stage1.converged) if stage1 is not None else True
    return TrialRecord(
        **common,
        loss_strongest_db=loss,
        loss_all_paths_db=losses,
        freq_errors=errors,
        stage1_converged=converged,
        success_1db=loss <= SUCCESS_LOSS_DB,
        wall_time=time.perf_counter() - start,
        mismatch_fro_rel=mismatch,
    )
