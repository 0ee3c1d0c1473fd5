"""Fast invariant checks backing the ``validate`` CLI subcommand."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channel import (
    TWO_PI,
    array_factor,
    beamforming_loss_db,
    best_single_beam_gain,
    steering_matrix,
    steering_vector,
)
from .nomp import NompOptions, extract_paths
from .phase_retrieval import wf_gradient, wf_objective
from .sensing import (
    ALPHABET,
    measure_rss,
    quantize,
    row_pseudoinverse,
    sample_gaussian_matrix,
    sample_quantized_matrix,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.1f}s)"


class CheckFailed(Exception):
    pass


def _require(condition, message: str = "check failed") -> None:
    if not condition:
        raise CheckFailed(message)


def _rng(*key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([20170, *key]))


def fd_wirtinger_gradient(a_pr: np.ndarray, y: np.ndarray, z: np.ndarray, step: float = 1e-6):
    """Central differences of ``f`` over Re/Im parts, halved to match the conj(z) derivative."""
    grad = np.zeros(z.size, dtype=complex)
    for i in range(z.size):
        e = np.zeros(z.size, dtype=complex)
        e[i] = step
        d_re = (wf_objective(a_pr, y, z + e) - wf_objective(a_pr, y, z - e)) / (2 * step)
        d_im = (wf_objective(a_pr, y, z + 1j * e) - wf_objective(a_pr, y, z - 1j * e)) / (2 * step)
        grad[i] = 0.5 * (d_re + 1j * d_im)
    return grad


def check_quantizer() -> str:
    rng = _rng(1)
    a = sample_quantized_matrix(64, 64, rng)
    _require(np.all(a**4 == 1), "alphabet matrix entry outside {1, j, -1, -j}")
    x = rng.standard_normal((64, 64)) + 1j * rng.standard_normal((64, 64))
    q = quantize(x)
    _require(np.all(np.isin(q, ALPHABET)), "quantizer left the alphabet")
    _require(np.array_equal(quantize(q), q), "quantizer not idempotent")
    _require(np.array_equal(quantize(ALPHABET), ALPHABET), "alphabet not fixed by quantizer")
    return "alphabet exact, quantizer idempotent"


def check_pseudoinverse() -> str:
    worst = 0.0
    for m_cs, n in ((8, 64), (16, 256), (32, 1024)):
        for seed in range(100):
            a_cs = sample_gaussian_matrix(m_cs, n, _rng(2, m_cs, seed))
            err = np.linalg.norm(a_cs @ row_pseudoinverse(a_cs) - np.eye(m_cs))
            worst = max(worst, err)
    _require(worst < 1e-8, f"||A A^+ - I||_F = {worst:.2e}")
    return f"300 matrices, worst ||A A^+ - I||_F = {worst:.1e}"


def check_wf_gradient() -> str:
    worst = 0.0
    for seed in range(20):
        rng = _rng(3, seed)
        m_cs = int(rng.integers(1, 7))
        m = 4 * m_cs + 2
        a_pr = rng.standard_normal((m, m_cs)) + 1j * rng.standard_normal((m, m_cs))
        y = np.abs(a_pr @ (rng.standard_normal(m_cs) + 1j * rng.standard_normal(m_cs))) ** 2
        z = rng.standard_normal(m_cs) + 1j * rng.standard_normal(m_cs)
        g = wf_gradient(a_pr, y, z)
        fd = fd_wirtinger_gradient(a_pr, y, z)
        worst = max(worst, np.linalg.norm(g - fd) / np.linalg.norm(fd))
    _require(worst <= 1e-5, f"relative gradient error {worst:.2e}")
    return f"20 instances, worst relative error {worst:.1e}"


def check_nomp_monotone() -> str:
    n, m_cs = 64, 16
    for seed in range(100):
        rng = _rng(4, seed)
        a_cs = sample_gaussian_matrix(m_cs, n, rng)
        k = int(rng.integers(1, 4))
        freqs = rng.uniform(-np.pi, np.pi, k)
        amps = rng.standard_normal(k) + 1j * rng.standard_normal(k)
        y = a_cs @ (steering_matrix(n, freqs) @ amps)
        y = y + 0.05 * (rng.standard_normal(m_cs) + 1j * rng.standard_normal(m_cs))
        res = extract_paths(y, a_cs, NompOptions(stop_mode="residual_threshold", max_paths=5))
        hist = np.array(res.residual_history)
        _require(np.all(np.diff(hist) <= 1e-12), f"residual increased on trial {seed}: {hist}")
    return "100 trials, residual energy non-increasing"


def check_phase_invariance() -> str:
    rng = _rng(5)
    n, m, m_cs = 128, 48, 16
    h = steering_matrix(n, [0.4, -1.7]) @ np.array([1.0, 0.7j])
    a = sample_quantized_matrix(m, n, rng)
    rot = np.exp(1j * 2.1)
    y1, y2 = measure_rss(a, h).values, measure_rss(a, rot * h).values
    rss_err = np.max(np.abs(y1 - y2)) / np.max(y1)
    _require(rss_err < 1e-12, f"RSS changed under global phase: {rss_err:.1e}")

    a_cs = sample_gaussian_matrix(m_cs, n, rng)
    yc = a_cs @ h
    opts = NompOptions(k=2)
    r1, r2 = extract_paths(yc, a_cs, opts), extract_paths(rot * yc, a_cs, opts)
    f_err = np.max(np.abs(r1.freqs - r2.freqs))
    a_err = np.max(np.abs(rot * r1.amplitudes - r2.amplitudes))
    _require(f_err < 1e-9 and a_err < 1e-9, f"NOMP not phase invariant: {f_err:.1e}, {a_err:.1e}")
    return f"RSS exact to {rss_err:.0e}; NOMP freq diff {f_err:.0e}, amp diff {a_err:.0e}"


def check_steering_and_oracle() -> str:
    _require(np.allclose(steering_vector(4, 0.0), np.ones(4)))
    _require(np.allclose(steering_vector(2, np.pi), [-1, 1]))
    _require(abs(np.linalg.norm(steering_vector(16, 0.77)) - 4.0) < 1e-12)
    rng = _rng(6)
    n = 64
    for _ in range(20):
        w0 = rng.uniform(-np.pi, np.pi)
        h = steering_vector(n, w0)
        w, g = best_single_beam_gain(h)
        _require(abs(g - n) < 1e-6 and abs(np.angle(np.exp(1j * (w - w0)))) < 1e-6)
        _require(beamforming_loss_db(h, w) <= 1e-6)
        offset = 0.5 * TWO_PI / n
        expected = 20 * np.log10(n / abs(array_factor(n, offset)))
        _require(abs(beamforming_loss_db(h, w0 + offset) - expected) < 1e-9)
    return "steering closed forms, single-path oracle and Dirichlet loss"


CHECKS: dict[str, Callable[[], str]] = {
    "quantization alphabet": check_quantizer,
    "pseudoinverse identity": check_pseudoinverse,
    "WF gradient vs finite differences": check_wf_gradient,
    "NOMP residual monotonicity": check_nomp_monotone,
    "global-phase invariance": check_phase_invariance,
    "steering and oracle closed forms": check_steering_and_oracle,
}


def run_checks() -> list[CheckResult]:
    results = []
    for name, check in CHECKS.items():
        start = time.perf_counter()
        try:
            detail, passed = check(), True
        except CheckFailed as exc:
            detail, passed = str(exc), False
        results.append(CheckResult(name, passed, detail, time.perf_counter() - start))
    return results
