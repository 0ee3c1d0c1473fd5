"""End-to-end channel estimators built from the two stages."""

from __future__ import annotations

import time
from dataclasses import replace

import numpy as np

from ..errors import InvalidInputError
from ..nomp import EstimateResult, GridDictionary, NompOptions, extract_paths
from ..phase_retrieval import WfOptions, wirtinger_flow
from ..sensing import CoherentMeasurements, RssMeasurements, SensingEnsemble


def estimate_noncoherent(
    y: RssMeasurements,
    ensemble: SensingEnsemble,
    wf: WfOptions = WfOptions(),
    nomp: NompOptions = NompOptions(),
) -> EstimateResult:
    """Phase retrieval on ``a_pr`` followed by NOMP on ``a_cs``.

    The recovered auxiliary vector carries an unknown global phase, which
    ends up in the path amplitudes only.
    """
    start = time.perf_counter()
    values = y.values if isinstance(y, RssMeasurements) else np.asarray(y, dtype=float)
    if values.size != ensemble.m:
        raise InvalidInputError(f"expected {ensemble.m} RSS values, got {values.size}")
    stage1 = wirtinger_flow(ensemble.a_pr, values, wf)
    if stage1.degenerate:
        return EstimateResult([], 1.0, stage1=stage1, elapsed=time.perf_counter() - start,
                              degenerate=True)
    result = extract_paths(stage1.estimate, ensemble.a_cs, nomp)
    return replace(result, stage1=stage1, elapsed=time.perf_counter() - start)


def estimate_coherent(
    y: CoherentMeasurements, a: np.ndarray, nomp: NompOptions = NompOptions()
) -> EstimateResult:
    """NOMP directly on complex beacon outputs with atoms ``a @ a(w)``."""
    values = y.values if isinstance(y, CoherentMeasurements) else np.asarray(y, dtype=complex)
    a = np.asarray(a, dtype=complex)
    if values.size != a.shape[0]:
        raise InvalidInputError(f"expected {a.shape[0]} measurements, got {values.size}")
    return extract_paths(values, a, nomp, dictionary=GridDictionary(a, nomp.grid_oversampling))
