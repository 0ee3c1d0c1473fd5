"""Newtonized orthogonal matching pursuit over a compressive dictionary.

Atoms are ``f(w) = a_cs @ a(w)``.  Each detection picks the grid peak of
``G(w) = |f(w)^H y_r|^2 / ||f(w)||^2``, polishes it with Newton steps on the
continuum, and then cyclically re-refines every path found so far against
the full measurement vector.  Amplitudes are least-squares fits, so
subtracting ``alpha * f(w)`` is an orthogonal projection.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.linalg

from .channel import TWO_PI, steering_matrix, steering_vector, wrap_freq
from .errors import CollisionError, InvalidInputError

STOP_KNOWN_K = "known_k"
STOP_RESIDUAL = "residual_threshold"

# Joint LS refuses Gram matrices worse conditioned than this.
MAX_LS_CONDITION = 1e10
# Paths closer than this fraction of a DFT bin (2*pi/N) are merged.
MERGE_FRACTION = 1.0 / 8.0


@dataclass(frozen=True)
class NompOptions:
    grid_oversampling: int = 4
    newton_steps_per_detection: int = 3
    cyclic_rounds: int = 3
    stop_mode: str = STOP_KNOWN_K
    k: int | None = None
    tau_rel: float = 1e-3
    max_paths: int = 8

    def __post_init__(self):
        if self.grid_oversampling < 2:
            raise InvalidInputError("grid_oversampling must be >= 2")
        if self.cyclic_rounds < 1:
            raise InvalidInputError("cyclic_rounds must be >= 1")
        if not 0.0 < self.tau_rel < 1.0:
            raise InvalidInputError("tau_rel must lie in (0, 1)")
        if self.stop_mode not in (STOP_KNOWN_K, STOP_RESIDUAL):
            raise InvalidInputError(f"unknown stop_mode {self.stop_mode!r}")
        if self.max_paths < 1:
            raise InvalidInputError("max_paths must be >= 1")


@dataclass(frozen=True)
class EstimatedPath:
    amplitude: complex
    spatial_freq: float
    detection_order: int


@dataclass(frozen=True, eq=False)
class EstimateResult:
    paths: list[EstimatedPath]
    residual_energy_rel: float
    stage1: object | None = None
    elapsed: float = 0.0
    degenerate: bool = False
    residual_history: list[float] = field(default_factory=list)

    @property
    def freqs(self) -> np.ndarray:
        return np.array([p.spatial_freq for p in self.paths], dtype=float)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([p.amplitude for p in self.paths], dtype=complex)

    @property
    def strongest(self) -> EstimatedPath | None:
        return self.paths[0] if self.paths else None


def dictionary_response(a_cs: np.ndarray, omega: float) -> np.ndarray:
    """Compressive atom ``f(omega) = a_cs @ a(omega)``."""
    return a_cs @ steering_vector(a_cs.shape[1], omega)


def dictionary_derivatives(a_cs: np.ndarray, omega: float):
    """``(f, f', f'')`` at ``omega``; ``f' = a_cs @ (1j*n*a)``, ``f'' = a_cs @ (-n**2*a)``."""
    n = np.arange(1, a_cs.shape[1] + 1)
    a = np.exp(1j * n * omega)
    stacked = np.stack([a, 1j * n * a, -(n**2) * a], axis=1)
    out = a_cs @ stacked
    return out[:, 0], out[:, 1], out[:, 2]


def grid_frequencies(n_elements: int, oversampling: int) -> np.ndarray:
    size = oversampling * n_elements
    return -np.pi + TWO_PI * np.arange(size) / size


def grid_atoms(a_cs: np.ndarray, oversampling: int) -> np.ndarray:
    """All atoms on the uniform grid, shape (M_CS, oversampling*N), by inverse FFT."""
    m_cs, n = a_cs.shape
    size = oversampling * n
    # f(-pi + 2*pi*g/L) = sum_n a_cs[:, n-1] (-1)^n exp(2j*pi*n*g/L)
    idx = np.arange(1, n + 1)
    x = np.zeros((m_cs, size), dtype=complex)
    x[:, idx] = a_cs * np.where(idx % 2 == 0, 1.0, -1.0)
    return size * np.fft.ifft(x, axis=1)


class GridDictionary:
    """Precomputed grid atoms and their energies for one ``a_cs``."""

    def __init__(self, a_cs: np.ndarray, oversampling: int = 4):
        self.a_cs = np.asarray(a_cs, dtype=complex)
        self.grid = grid_frequencies(self.a_cs.shape[1], oversampling)
        self.atoms = grid_atoms(self.a_cs, oversampling)
        self.atoms_h = self.atoms.conj().T
        self.energies = np.sum(np.abs(self.atoms) ** 2, axis=0)


def detect_on_grid(
    y_r: np.ndarray,
    a_cs: np.ndarray,
    grid: Sequence[float] | None = None,
    *,
    dictionary: GridDictionary | None = None,
):
    """Strongest grid atom in ``y_r``.

    Returns ``(omega_hat, alpha_hat, g_value)`` with the LS amplitude
    ``f^H y_r / ||f||^2``, or ``None`` when ``y_r`` is zero.  Ties go to the
    smallest frequency.  Either ``grid`` or a precomputed ``dictionary``
    must be given.
    """
    y_r = np.asarray(y_r, dtype=complex)
    if not np.any(y_r):
        return None
    if dictionary is not None:
        grid_arr, atoms_h, energies = dictionary.grid, dictionary.atoms_h, dictionary.energies
    else:
        if grid is None or len(grid) == 0:
            raise InvalidInputError("detect_on_grid needs a non-empty grid")
        grid_arr = np.sort(np.asarray(grid, dtype=float))
        atoms = a_cs @ steering_matrix(a_cs.shape[1], grid_arr)
        atoms_h = atoms.conj().T
        energies = np.sum(np.abs(atoms) ** 2, axis=0)
    corr = atoms_h @ y_r
    gains = np.abs(corr) ** 2 / energies
    idx = int(np.argmax(gains))
    return float(grid_arr[idx]), complex(corr[idx] / energies[idx]), float(gains[idx])


def gr_value(y_r: np.ndarray, a_cs: np.ndarray, omega: float) -> float:
    f = dictionary_response(a_cs, omega)
    return float(abs(np.vdot(f, y_r)) ** 2 / np.vdot(f, f).real)


def gr_derivatives(y_r: np.ndarray, a_cs: np.ndarray, omega: float):
    """``(G, G', G'', f)`` at ``omega`` for ``G = |f^H y|^2 / ||f||^2``."""
    f, df, d2f = dictionary_derivatives(a_cs, omega)
    p, dp, d2p = np.vdot(f, y_r), np.vdot(df, y_r), np.vdot(d2f, y_r)
    u = abs(p) ** 2
    du = 2.0 * (np.conj(p) * dp).real
    d2u = 2.0 * (abs(dp) ** 2 + (np.conj(p) * d2p).real)
    q = np.vdot(f, f).real
    dq = 2.0 * np.vdot(f, df).real
    d2q = 2.0 * (np.vdot(df, df).real + np.vdot(f, d2f).real)
    g = u / q
    dg = (du * q - u * dq) / q**2
    d2g = d2u / q - 2.0 * du * dq / q**2 - u * d2q / q**2 + 2.0 * u * dq**2 / q**3
    return float(g), float(dg), float(d2g), f


def refine_newton(y_r: np.ndarray, a_cs: np.ndarray, omega: float, alpha: complex):
    """One guarded Newton step on ``omega`` that maximizes ``G``.

    The step is taken only if ``G'' < 0`` and ``G`` strictly increases;
    otherwise ``omega`` is kept.  The amplitude is refit by LS at the
    returned frequency.  Returns ``(omega, alpha, accepted)``.
    """
    y_r = np.asarray(y_r, dtype=complex)
    g, dg, d2g, f = gr_derivatives(y_r, a_cs, omega)
    accepted = False
    if d2g < 0:
        candidate = wrap_freq(omega - dg / d2g)
        f_c = dictionary_response(a_cs, candidate)
        g_c = abs(np.vdot(f_c, y_r)) ** 2 / np.vdot(f_c, f_c).real
        if g_c > g:
            omega, f, accepted = candidate, f_c, True
    alpha = complex(np.vdot(f, y_r) / np.vdot(f, f).real)
    return float(omega), alpha, accepted


def _atoms(a_cs: np.ndarray, omegas) -> np.ndarray:
    return a_cs @ steering_matrix(a_cs.shape[1], omegas)


def fit_amplitudes_ls(y: np.ndarray, a_cs: np.ndarray, omegas: Sequence[float]) -> np.ndarray:
    """Joint least-squares amplitudes for atoms at ``omegas`` (normal equations).

    Raises:
        CollisionError: if the atom Gram matrix is numerically singular.
    """
    omegas = np.asarray(omegas, dtype=float)
    if omegas.size == 0:
        return np.zeros(0, dtype=complex)
    if omegas.size > a_cs.shape[0]:
        raise CollisionError(f"{omegas.size} atoms exceed {a_cs.shape[0]} measurements")
    F = _atoms(a_cs, omegas)
    gram = F.conj().T @ F
    eig = np.linalg.eigvalsh(gram)
    if eig[0] <= 0 or eig[-1] / eig[0] > MAX_LS_CONDITION:
        raise CollisionError("atoms are numerically collinear")
    rhs = F.conj().T @ np.asarray(y, dtype=complex)
    return scipy.linalg.cho_solve(scipy.linalg.cho_factor(gram, lower=True), rhs)


def residual_energy(y: np.ndarray, a_cs: np.ndarray, omegas, alphas) -> float:
    if len(omegas) == 0:
        return float(np.vdot(y, y).real)
    r = y - _atoms(a_cs, omegas) @ np.asarray(alphas, dtype=complex)
    return float(np.vdot(r, r).real)


def refine_cyclic(
    y: np.ndarray, a_cs: np.ndarray, paths: list[EstimatedPath], rounds: int
) -> list[EstimatedPath]:
    """Cyclic Newton refinement of all ``paths`` against ``y``.

    In each round every path (in detection order) gets one Newton step on
    the residual that excludes it, followed by a joint LS refit of all
    amplitudes.  A step that would raise the total residual is rolled back.
    """
    y = np.asarray(y, dtype=complex)
    if not paths:
        return []
    order = sorted(range(len(paths)), key=lambda i: paths[i].detection_order)
    omegas = np.array([p.spatial_freq for p in paths], dtype=float)
    alphas = np.array([p.amplitude for p in paths], dtype=complex)
    atoms = _atoms(a_cs, omegas)
    energy = float(np.linalg.norm(y - atoms @ alphas) ** 2)
    for _ in range(rounds):
        for i in order:
            others = np.delete(np.arange(len(paths)), i)
            y_excl = y - atoms[:, others] @ alphas[others]
            w_new, _, accepted = refine_newton(y_excl, a_cs, omegas[i], alphas[i])
            if not accepted:
                continue
            trial = omegas.copy()
            trial[i] = w_new
            trial_alphas = fit_amplitudes_ls(y, a_cs, trial)
            trial_atoms = _atoms(a_cs, trial)
            trial_energy = float(np.linalg.norm(y - trial_atoms @ trial_alphas) ** 2)
            if trial_energy <= energy:
                omegas, alphas, atoms, energy = trial, trial_alphas, trial_atoms, trial_energy
    return [
        replace(p, spatial_freq=float(w), amplitude=complex(a))
        for p, w, a in zip(paths, omegas, alphas)
    ]


def _merge_close(paths: list[EstimatedPath], min_sep: float) -> tuple[list[EstimatedPath], bool]:
    """Merge paths closer than ``min_sep``: amplitudes add, stronger frequency is kept."""
    merged = list(paths)
    changed = False
    i = 0
    while i < len(merged):
        j = i + 1
        while j < len(merged):
            if abs(wrap_freq(merged[i].spatial_freq - merged[j].spatial_freq)) < min_sep:
                a, b = merged[i], merged[j]
                keep = a if abs(a.amplitude) >= abs(b.amplitude) else b
                merged[i] = EstimatedPath(
                    a.amplitude + b.amplitude,
                    keep.spatial_freq,
                    min(a.detection_order, b.detection_order),
                )
                del merged[j]
                changed = True
            else:
                j += 1
        i += 1
    return merged, changed


def _refit(y, a_cs, paths):
    alphas = fit_amplitudes_ls(y, a_cs, [p.spatial_freq for p in paths])
    return [replace(p, amplitude=complex(a)) for p, a in zip(paths, alphas)]


def _target_paths(opts: NompOptions, m_cs: int) -> int:
    cap = min(opts.max_paths, m_cs)
    if opts.stop_mode == STOP_KNOWN_K:
        if opts.k is None or opts.k < 0:
            raise InvalidInputError("stop_mode known_k needs a non-negative k")
        return min(opts.k, cap)
    return cap


def extract_paths(
    y: np.ndarray,
    a_cs: np.ndarray,
    opts: NompOptions,
    *,
    dictionary: GridDictionary | None = None,
) -> EstimateResult:
    """Greedy NOMP loop: detect, Newton-polish, append, refine cyclically.

    Stops when the known number of paths is reached, when the residual
    energy falls below ``tau_rel`` of the input energy, or at ``max_paths``.
    Paths are returned strongest first.
    """
    start = time.perf_counter()
    y = np.asarray(y, dtype=complex)
    a_cs = np.asarray(a_cs, dtype=complex)
    if a_cs.shape[0] != y.size:
        raise InvalidInputError(f"a_cs has {a_cs.shape[0]} rows but y has length {y.size}")
    target = _target_paths(opts, a_cs.shape[0])
    y_energy = float(np.vdot(y, y).real)
    if y_energy == 0 or target == 0:
        return EstimateResult([], 1.0, elapsed=time.perf_counter() - start, degenerate=y_energy == 0)
    if dictionary is None:
        dictionary = GridDictionary(a_cs, opts.grid_oversampling)
    min_sep = MERGE_FRACTION * TWO_PI / a_cs.shape[1]

    paths: list[EstimatedPath] = []
    energy = y_energy
    history = [1.0]
    n_detections = 0
    while len(paths) < target and n_detections < 2 * target:
        if opts.stop_mode == STOP_RESIDUAL and energy / y_energy < opts.tau_rel:
            break
        if paths:
            y_r = y - _atoms(a_cs, [p.spatial_freq for p in paths]) @ np.array(
                [p.amplitude for p in paths]
            )
        else:
            y_r = y
        found = detect_on_grid(y_r, a_cs, dictionary=dictionary)
        if found is None:
            break
        omega, alpha, _ = found
        for _ in range(opts.newton_steps_per_detection):
            omega, alpha, _ = refine_newton(y_r, a_cs, omega, alpha)
        n_detections += 1

        candidate = paths + [EstimatedPath(alpha, omega, n_detections)]
        try:
            candidate, _ = _merge_close(candidate, min_sep)
            candidate = _refit(y, a_cs, candidate)
            candidate = refine_cyclic(y, a_cs, candidate, opts.cyclic_rounds)
            candidate, merged = _merge_close(candidate, min_sep)
            if merged:
                candidate = _refit(y, a_cs, candidate)
        except CollisionError:
            break
        new_energy = residual_energy(
            y, a_cs, [p.spatial_freq for p in candidate], [p.amplitude for p in candidate]
        )
        if new_energy > energy:
            break
        paths, energy = candidate, new_energy
        history.append(energy / y_energy)

    paths = sorted(paths, key=lambda p: abs(p.amplitude), reverse=True)
    return EstimateResult(
        paths,
        energy / y_energy,
        elapsed=time.perf_counter() - start,
        residual_history=history,
    )
