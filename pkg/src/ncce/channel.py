"""Uniform linear array geometry, sparse multipath channels and beam metrics.

Spatial frequencies live on the half-open interval [-pi, pi).  Array
elements are indexed 1..N so that the steering vector is
``a(w) = [exp(1j*1*w), ..., exp(1j*N*w)]`` and its derivative is
``1j * diag(1..N) @ a(w)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

TWO_PI = 2.0 * np.pi

# Oracle grid density (points per element) and Newton polish budget.
ORACLE_OVERSAMPLING = 32
ORACLE_NEWTON_ITERS = 20
ORACLE_POLISH_PEAKS = 4


def wrap_freq(omega):
    """Wrap spatial frequencies into [-pi, pi); +pi maps to -pi."""
    wrapped = np.mod(np.asarray(omega, dtype=float) + np.pi, TWO_PI) - np.pi
    # mod can return exactly 2*pi for tiny negative inputs
    wrapped = np.where(wrapped >= np.pi, wrapped - TWO_PI, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class ArrayConfig:
    """Uniform linear array with ``n_elements`` and spacing ``d / lambda``."""

    n_elements: int
    spacing_over_wavelength: float = 0.5

    def __post_init__(self):
        if int(self.n_elements) != self.n_elements or self.n_elements < 2:
            raise InvalidInputError(f"n_elements must be an integer >= 2, got {self.n_elements}")
        if not 0.0 < self.spacing_over_wavelength <= 1.0:
            raise InvalidInputError(
                f"spacing_over_wavelength must lie in (0, 1], got {self.spacing_over_wavelength}"
            )

    @property
    def element_index(self) -> np.ndarray:
        return np.arange(1, self.n_elements + 1, dtype=float)


@dataclass(frozen=True)
class PathComponent:
    amplitude: complex
    spatial_freq: float

    def __post_init__(self):
        object.__setattr__(self, "amplitude", complex(self.amplitude))
        object.__setattr__(self, "spatial_freq", wrap_freq(self.spatial_freq))


@dataclass(frozen=True)
class SparseChannel:
    """K-path channel ``h = sum_k alpha_k a(w_k)`` on a linear array."""

    array: ArrayConfig
    paths: tuple[PathComponent, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))

    @property
    def k(self) -> int:
        return len(self.paths)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([p.amplitude for p in self.paths], dtype=complex)

    @property
    def freqs(self) -> np.ndarray:
        return np.array([p.spatial_freq for p in self.paths], dtype=float)

    def scaled(self, scale: complex) -> "SparseChannel":
        return SparseChannel(
            self.array,
            tuple(PathComponent(scale * p.amplitude, p.spatial_freq) for p in self.paths),
        )

    @classmethod
    def from_arrays(cls, array: ArrayConfig, amplitudes, freqs) -> "SparseChannel":
        return cls(array, tuple(PathComponent(a, w) for a, w in zip(amplitudes, freqs)))


def _n_of(array) -> int:
    return array.n_elements if isinstance(array, ArrayConfig) else int(array)


def steering_vector(array: ArrayConfig | int, omega: float) -> np.ndarray:
    """Return ``a(omega)``, the length-N unit-modulus phase ramp."""
    n = np.arange(1, _n_of(array) + 1)
    return np.exp(1j * n * omega)


def steering_matrix(n_elements: int, omegas: Sequence[float]) -> np.ndarray:
    """Stack steering vectors column-wise: shape (N, len(omegas))."""
    n = np.arange(1, n_elements + 1)[:, None]
    return np.exp(1j * n * np.asarray(omegas, dtype=float)[None, :])


def spatial_freq_from_angle(theta: float, spacing_over_wavelength: float = 0.5) -> float:
    """Map a departure angle (radians from broadside) to spatial frequency."""
    if abs(theta) > np.pi / 2 + 1e-12:
        raise InvalidInputError(f"|theta| must be <= pi/2, got {theta}")
    return wrap_freq(TWO_PI * spacing_over_wavelength * np.sin(theta))


def synthesize_channel(channel: SparseChannel) -> np.ndarray:
    """Channel vector ``h = sum_k alpha_k a(w_k)``; the zero vector for K = 0."""
    n = channel.array.n_elements
    if channel.k == 0:
        return np.zeros(n, dtype=complex)
    return steering_matrix(n, channel.freqs) @ channel.amplitudes


def beam_response(h: np.ndarray, omega: float) -> complex:
    """Inner product ``a(omega)^H h``."""
    h = np.asarray(h, dtype=complex)
    return complex(np.vdot(steering_vector(h.size, omega), h))


def beam_gain_on_grid(h: np.ndarray, oversampling: int = ORACLE_OVERSAMPLING):
    """Evaluate ``|a(w)^H h|`` on the uniform grid ``w_g = -pi + 2*pi*g/L``, L = oversampling*N.

    Returns ``(grid, gains)``.  Uses a zero-padded FFT.
    """
    h = np.asarray(h, dtype=complex)
    n = h.size
    size = oversampling * n
    # a(w_g)^H h = sum_n h_n (-1)^n exp(-2j*pi*n*g/L)
    x = np.zeros(size, dtype=complex)
    idx = np.arange(1, n + 1)
    x[idx % size] = h * np.where(idx % 2 == 0, 1.0, -1.0)
    gains = np.abs(np.fft.fft(x))
    grid = -np.pi + TWO_PI * np.arange(size) / size
    return grid, gains


def _polish_peak(h: np.ndarray, omega: float, max_iter: int = ORACLE_NEWTON_ITERS):
    """Newton ascent on ``|a(w)^H h|^2`` from ``omega``; returns (omega, gain)."""
    n = np.arange(1, h.size + 1)

    def power_and_derivs(w):
        e = np.exp(-1j * n * w) * h
        p = e.sum()
        dp = (-1j * n * e).sum()
        d2p = (-(n**2) * e).sum()
        phi = abs(p) ** 2
        dphi = 2.0 * (np.conj(p) * dp).real
        d2phi = 2.0 * (abs(dp) ** 2 + (np.conj(p) * d2p).real)
        return phi, dphi, d2phi

    phi, dphi, d2phi = power_and_derivs(omega)
    for _ in range(max_iter):
        if d2phi >= 0:
            break
        step = -dphi / d2phi
        candidate = omega + step
        phi_c, dphi_c, d2phi_c = power_and_derivs(candidate)
        if phi_c < phi:
            break
        omega, phi, dphi, d2phi = candidate, phi_c, dphi_c, d2phi_c
        if abs(step) < 1e-15:
            break
    return wrap_freq(omega), float(np.sqrt(phi))


def best_single_beam_gain(h: np.ndarray) -> tuple[float, float]:
    """Best steering direction for ``h`` and the gain ``|a(w)^H h|`` it achieves.

    A dense FFT grid (32N points) locates the main candidates, then a few
    Newton steps polish each of the strongest local maxima.

    Raises:
        InvalidInputError: if ``h`` is identically zero.
    """
    h = np.asarray(h, dtype=complex)
    if not np.any(h):
        raise InvalidInputError("best_single_beam_gain needs a nonzero channel")
    grid, gains = beam_gain_on_grid(h)
    is_peak = (gains >= np.roll(gains, 1)) & (gains >= np.roll(gains, -1))
    peaks = np.flatnonzero(is_peak)
    peaks = peaks[np.argsort(gains[peaks])[::-1][:ORACLE_POLISH_PEAKS]]

    best_w, best_g = float(grid[peaks[0]]), float(gains[peaks[0]])
    for idx in peaks:
        w, g = _polish_peak(h, float(grid[idx]))
        if g > best_g:
            best_w, best_g = w, g
    return best_w, best_g


def beamforming_loss_db(h: np.ndarray, omega_hat: float, *, gain_opt: float | None = None) -> float:
    """Loss in dB of steering at ``omega_hat`` relative to the best single beam.

    Returns ``inf`` when the steered gain vanishes (relative to 1e-12 of the optimum).
    """
    if gain_opt is None:
        _, gain_opt = best_single_beam_gain(h)
    achieved = abs(beam_response(h, omega_hat))
    if achieved <= 1e-12 * gain_opt:
        return float("inf")
    return max(0.0, 20.0 * np.log10(gain_opt / achieved))


def mrt_loss_db(h: np.ndarray, omega_hat: float) -> float:
    """Loss of steering at ``omega_hat`` relative to matched-filter (MRT) gain ``sqrt(N)*||h||``."""
    h = np.asarray(h, dtype=complex)
    achieved = abs(beam_response(h, omega_hat))
    ideal = np.sqrt(h.size) * np.linalg.norm(h)
    if achieved <= 1e-12 * ideal:
        return float("inf")
    return float(20.0 * np.log10(ideal / achieved))


def array_factor(n_elements: int, delta: float) -> complex:
    """Array factor ``sum_n exp(1j*n*delta)``, n = 1..N, by direct summation."""
    n = np.arange(1, n_elements + 1)
    return complex(np.exp(1j * n * delta).sum())
