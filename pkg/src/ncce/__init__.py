"""Noncoherent compressive estimation of sparse mm-wave spatial channels.

RSS-only beacon measurements taken with 2-bit phase weights are inverted in
two stages: Wirtinger Flow phase retrieval recovers a compressive
measurement vector up to a global phase, then Newtonized OMP extracts
continuous-valued path frequencies and amplitudes.
"""

from .channel import (
    ArrayConfig,
    PathComponent,
    SparseChannel,
    beamforming_loss_db,
    best_single_beam_gain,
    spatial_freq_from_angle,
    steering_vector,
    synthesize_channel,
)
from .nomp import EstimatedPath, EstimateResult, NompOptions, extract_paths
from .phase_retrieval import WfOptions, WfResult, phase_aligned_distance, wirtinger_flow
from .sensing import (
    CoherentMeasurements,
    RssMeasurements,
    SensingEnsemble,
    build_ensemble,
    measure_coherent,
    measure_rss,
)

__version__ = "0.1.0"
