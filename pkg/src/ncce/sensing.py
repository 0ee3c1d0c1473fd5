"""Quantized beacon matrices, their virtual decomposition, and measurements.

The physical beacon matrix ``a_final`` only uses the 2-bit phase alphabet
{1, j, -1, -j}.  It is designed as ``quantize(a_pr @ a_cs)`` where ``a_cs``
is i.i.d. complex Gaussian and ``a_pr = a @ pinv(a_cs)`` for a random
alphabet matrix ``a``.  Neither factor is applied physically: ``a_pr`` feeds
phase retrieval and ``a_cs`` feeds compressive estimation, and the gap
between ``a_final`` and ``a_pr @ a_cs`` is left as measurement error.

Random streams: an ensemble seed ``s`` drives two independent generators,
``SeedSequence([s, 0])`` for the alphabet draw and ``SeedSequence([s, 1])``
for the Gaussian factor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import DegenerateMatrixError, InvalidInputError

ALPHABET = np.array([1, 1j, -1, -1j], dtype=complex)

STREAM_ALPHABET = 0
STREAM_GAUSSIAN = 1

# Gram-matrix condition number beyond which the pseudoinverse is refused.
MAX_GRAM_CONDITION = 1e12


def substream(seed: int, offset: int) -> np.random.Generator:
    """Independent generator for ``(seed, offset)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(offset)]))


def quantize(x: np.ndarray) -> np.ndarray:
    """Map each entry to the nearest of {1, j, -1, -j} by phase.

    Ties go to the smaller phase angle in [0, 2*pi); zero maps to 1.
    """
    return ALPHABET[quantize_codes(x)]


def quantize_codes(x: np.ndarray) -> np.ndarray:
    """2-bit codes 0..3 for :func:`quantize`, meaning {1, j, -1, -j}."""
    phase = np.mod(np.angle(np.asarray(x, dtype=complex)), 2.0 * np.pi)
    return (np.ceil(phase / (np.pi / 2) - 0.5).astype(np.int64) % 4).astype(np.uint8)


def codes_from_alphabet(a: np.ndarray) -> np.ndarray:
    """Exact inverse of ``ALPHABET[codes]`` for alphabet-valued matrices."""
    codes = quantize_codes(a)
    if not np.array_equal(ALPHABET[codes], a):
        raise InvalidInputError("matrix has entries outside {1, j, -1, -j}")
    return codes


def sample_quantized_matrix(m: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. uniform draw from {1, j, -1, -j}, shape (m, n)."""
    if m < 1 or n < 1:
        raise InvalidInputError(f"matrix dimensions must be positive, got ({m}, {n})")
    return ALPHABET[rng.integers(0, 4, size=(m, n))]


def sample_gaussian_matrix(m_cs: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. CN(0, 1/n) entries: real and imaginary parts each have variance 1/(2n)."""
    if m_cs < 1 or n < 1:
        raise InvalidInputError(f"matrix dimensions must be positive, got ({m_cs}, {n})")
    sigma = np.sqrt(1.0 / (2.0 * n))
    return sigma * (rng.standard_normal((m_cs, n)) + 1j * rng.standard_normal((m_cs, n)))


def row_pseudoinverse(a_cs: np.ndarray) -> np.ndarray:
    """Right pseudoinverse ``a_cs^H (a_cs a_cs^H)^{-1}`` of a wide full-row-rank matrix.

    The M_CS x M_CS Gram system is solved by Cholesky factorization.

    Raises:
        DegenerateMatrixError: if the Gram matrix has condition number above 1e12.
    """
    a_cs = np.asarray(a_cs, dtype=complex)
    m_cs, n = a_cs.shape
    if m_cs > n:
        raise InvalidInputError(f"row pseudoinverse needs m_cs <= n, got {a_cs.shape}")
    gram = a_cs @ a_cs.conj().T
    eig = np.linalg.eigvalsh(gram)
    if eig[0] <= 0 or eig[-1] / eig[0] > MAX_GRAM_CONDITION:
        raise DegenerateMatrixError("Gram matrix of a_cs is singular or ill-conditioned")
    factor = scipy.linalg.cho_factor(gram, lower=True)
    # (G^{-1} A)^H = A^H G^{-1} since G is Hermitian
    return scipy.linalg.cho_solve(factor, a_cs).conj().T


@dataclass(frozen=True, eq=False)
class SensingEnsemble:
    """Physical quantized beacons plus their virtual factorization."""

    a_final: np.ndarray
    a_cs: np.ndarray
    a_pr: np.ndarray
    mismatch_fro_rel: float
    seed: int

    def __post_init__(self):
        for arr in (self.a_final, self.a_cs, self.a_pr):
            arr.setflags(write=False)

    @property
    def m(self) -> int:
        return self.a_final.shape[0]

    @property
    def m_cs(self) -> int:
        return self.a_cs.shape[0]

    @property
    def n(self) -> int:
        return self.a_final.shape[1]

    # -- serialization: a_final as 2-bit codes, complex matrices as row-major [re, im] pairs

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "m_cs": self.m_cs,
            "n": self.n,
            "seed": int(self.seed),
            "mismatch_fro_rel": float(self.mismatch_fro_rel),
            "alphabet": ["1", "j", "-1", "-j"],
            "a_final_codes": codes_from_alphabet(self.a_final).tolist(),
            "a_cs": _complex_to_pairs(self.a_cs),
            "a_pr": _complex_to_pairs(self.a_pr),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SensingEnsemble":
        codes = np.asarray(data["a_final_codes"], dtype=np.int64)
        if codes.size and (codes.min() < 0 or codes.max() > 3):
            raise InvalidInputError("a_final codes must lie in 0..3")
        ens = cls(
            a_final=ALPHABET[codes].reshape(data["m"], data["n"]),
            a_cs=_pairs_to_complex(data["a_cs"]).reshape(data["m_cs"], data["n"]),
            a_pr=_pairs_to_complex(data["a_pr"]).reshape(data["m"], data["m_cs"]),
            mismatch_fro_rel=float(data["mismatch_fro_rel"]),
            seed=int(data["seed"]),
        )
        return ens

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "SensingEnsemble":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _complex_to_pairs(x: np.ndarray) -> list:
    return np.stack([x.real, x.imag], axis=-1).tolist()


def _pairs_to_complex(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def build_ensemble(m: int, m_cs: int, n: int, seed: int) -> SensingEnsemble:
    """Generate the quantized beacon matrix and its virtual decomposition.

    Steps: draw an alphabet matrix ``a``, draw Gaussian ``a_cs``, set
    ``a_pr = a @ pinv(a_cs)`` and ``a_final = quantize(a_pr @ a_cs)``.
    """
    if m_cs < 1 or 2 * m_cs > m:
        raise InvalidInputError(f"need 1 <= m_cs and 2*m_cs <= m, got m={m}, m_cs={m_cs}")
    if m_cs > n:
        raise InvalidInputError(f"need m_cs <= n, got m_cs={m_cs}, n={n}")
    a = sample_quantized_matrix(m, n, substream(seed, STREAM_ALPHABET))
    a_cs = sample_gaussian_matrix(m_cs, n, substream(seed, STREAM_GAUSSIAN))
    a_pr = a @ row_pseudoinverse(a_cs)
    product = a_pr @ a_cs
    a_final = quantize(product)
    mismatch = np.linalg.norm(product - a_final) / np.linalg.norm(a_final)
    return SensingEnsemble(a_final, a_cs, a_pr, float(mismatch), int(seed))


def build_gaussian_ensemble(m: int, m_cs: int, n: int, seed: int) -> SensingEnsemble:
    """Unquantized cascade baseline: Gaussian ``a_pr`` and ``a_cs`` with ``a_final = a_pr @ a_cs``.

    ``a_pr`` entries are CN(0, 1) so rows of ``a_final`` carry unit power per element.
    """
    if m_cs < 1 or 2 * m_cs > m or m_cs > n:
        raise InvalidInputError(f"invalid dimensions m={m}, m_cs={m_cs}, n={n}")
    a_pr = np.sqrt(m_cs) * sample_gaussian_matrix(m, m_cs, substream(seed, STREAM_ALPHABET))
    a_cs = sample_gaussian_matrix(m_cs, n, substream(seed, STREAM_GAUSSIAN))
    return SensingEnsemble(a_pr @ a_cs, a_cs, a_pr, 0.0, int(seed))


@dataclass(frozen=True, eq=False)
class CoherentMeasurements:
    values: np.ndarray


@dataclass(frozen=True, eq=False)
class RssMeasurements:
    values: np.ndarray
    noise_variance: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if np.any(values < 0):
            raise InvalidInputError("RSS values must be non-negative")
        object.__setattr__(self, "values", values)


def _complex_noise(size: int, noise_std: float, rng: np.random.Generator | None) -> np.ndarray:
    if noise_std == 0:
        return np.zeros(size, dtype=complex)
    if rng is None:
        raise InvalidInputError("a generator is required when noise_std > 0")
    return noise_std * np.sqrt(0.5) * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def measure_coherent(
    a: np.ndarray, h: np.ndarray, noise_std: float = 0.0, rng: np.random.Generator | None = None
) -> CoherentMeasurements:
    """Complex beacon outputs ``a @ h + noise`` with noise ~ CN(0, noise_std**2)."""
    a = np.asarray(a)
    h = np.asarray(h, dtype=complex)
    if a.shape[1] != h.size:
        raise InvalidInputError(f"matrix has {a.shape[1]} columns but h has length {h.size}")
    return CoherentMeasurements(a @ h + _complex_noise(a.shape[0], noise_std, rng))


def measure_rss(
    a_final: np.ndarray, h: np.ndarray, noise_std: float = 0.0, rng: np.random.Generator | None = None
) -> RssMeasurements:
    """Received signal strength ``|a_final @ h + noise|**2`` per beacon."""
    coherent = measure_coherent(a_final, h, noise_std, rng)
    return RssMeasurements(np.abs(coherent.values) ** 2, noise_variance=float(noise_std) ** 2)


def noise_std_for_snr(h: np.ndarray, snr_db: float) -> float:
    """Noise level giving per-beacon SNR ``||h||^2 / (N * noise_std^2)`` equal to ``snr_db``."""
    h = np.asarray(h)
    return float(np.linalg.norm(h) / np.sqrt(h.size * 10 ** (snr_db / 10)))
