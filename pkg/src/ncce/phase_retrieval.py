"""Wirtinger Flow phase retrieval for ``y = |A z|**2``.

Measurements use plain row-vector products (no conjugation): the b-th
observation is ``|A[b] @ z|**2``.  The loss is

    f(z) = 1/(2M) * sum_b (|A[b] @ z|**2 - y_b)**2

and :func:`wf_gradient` returns its Wirtinger derivative with respect to
``conj(z)``.  The gradient over the stacked real coordinates (Re z, Im z)
is twice that value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .sensing import RssMeasurements

MAX_BACKTRACKS = 10


@dataclass(frozen=True)
class WfOptions:
    max_iters: int = 2500
    step_scale_max: float = 0.2
    step_warmup: float = 330.0
    grad_tol: float = 1e-8
    init_power_iters: int = 100

    def __post_init__(self):
        for name in ("max_iters", "step_scale_max", "step_warmup", "grad_tol", "init_power_iters"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"WfOptions.{name} must be positive")


@dataclass(frozen=True, eq=False)
class WfResult:
    estimate: np.ndarray
    iterations_used: int
    final_objective: float
    converged: bool
    degenerate: bool = False
    objective_trace: np.ndarray | None = None


def _values(y) -> np.ndarray:
    return y.values if isinstance(y, RssMeasurements) else np.asarray(y, dtype=float)


def wf_objective(a_pr: np.ndarray, y, z: np.ndarray) -> float:
    y = _values(y)
    resid = np.abs(a_pr @ z) ** 2 - y
    return float(resid @ resid / (2 * y.size))


def wf_gradient(a_pr: np.ndarray, y, z: np.ndarray) -> np.ndarray:
    """``(1/M) * sum_b (|r_b z|^2 - y_b) (r_b z) conj(r_b)``."""
    y = _values(y)
    az = a_pr @ z
    return a_pr.conj().T @ ((np.abs(az) ** 2 - y) * az) / y.size


def _check_dims(a_pr: np.ndarray, y: np.ndarray) -> None:
    if a_pr.shape[0] != y.size:
        raise InvalidInputError(f"a_pr has {a_pr.shape[0]} rows but y has length {y.size}")


def spectral_initialize(
    a_pr: np.ndarray, y, opts: WfOptions = WfOptions()
) -> tuple[np.ndarray, bool]:
    """Spectral starting point for Wirtinger Flow.

    Returns ``(z0, degenerate)``.  ``z0`` is the leading eigenvector of
    ``(1/M) sum_b y_b r_b^H r_b`` found by power iteration from the
    normalized all-ones vector, scaled to norm
    ``sqrt(M_CS * sum(y) / sum_b ||r_b||^2)``.  An all-zero ``y`` gives the
    zero vector and ``degenerate = True``.
    """
    a_pr = np.asarray(a_pr, dtype=complex)
    y = _values(y)
    _check_dims(a_pr, y)
    m_cs = a_pr.shape[1]
    if not np.any(y):
        return np.zeros(m_cs, dtype=complex), True

    lam = np.sqrt(m_cs * y.sum() / np.sum(np.abs(a_pr) ** 2))
    a_h = a_pr.conj().T
    v = np.ones(m_cs, dtype=complex) / np.sqrt(m_cs)
    for _ in range(opts.init_power_iters):
        w = a_h @ (y * (a_pr @ v))
        nrm = np.linalg.norm(w)
        if nrm == 0:
            break
        v = w / nrm
    return lam * v, False


def wirtinger_flow(
    a_pr: np.ndarray, y, opts: WfOptions = WfOptions(), *, z0: np.ndarray | None = None,
    keep_trace: bool = False,
) -> WfResult:
    """Recover ``z`` (up to a global phase) from ``y = |a_pr @ z|**2``.

    Gradient descent ``z <- z - mu_t/||z0||^2 * grad f(z)`` with
    ``mu_t = min(1 - exp(-t/step_warmup), step_scale_max)`` for t = 1, 2, ...
    A step that would increase ``f`` is halved up to 10 times and skipped
    (ending the run) if it still fails.  Stops after ``max_iters`` or once
    ``||grad f|| <= grad_tol * ||grad f(z0)||``.

    ``z0`` overrides the spectral initialization.
    """
    a_pr = np.asarray(a_pr, dtype=complex)
    y = _values(y)
    _check_dims(a_pr, y)
    m = y.size

    if z0 is None:
        z, degenerate = spectral_initialize(a_pr, y, opts)
        if degenerate:
            return WfResult(z, 0, wf_objective(a_pr, y, z), False, degenerate=True)
    else:
        z = np.asarray(z0, dtype=complex).copy()
    z0_norm2 = float(np.vdot(z, z).real)
    if z0_norm2 == 0:
        return WfResult(z, 0, wf_objective(a_pr, y, z), False, degenerate=True)

    a_h = a_pr.conj().T
    az = a_pr @ z
    resid = np.abs(az) ** 2 - y
    obj = resid @ resid / (2 * m)
    grad = a_h @ (resid * az) / m
    grad0 = np.linalg.norm(grad)
    trace = [obj] if keep_trace else None
    converged = grad0 == 0
    it = 0
    while it < opts.max_iters and not converged:
        it += 1
        mu = min(1.0 - np.exp(-it / opts.step_warmup), opts.step_scale_max) / z0_norm2
        accepted = False
        for _ in range(MAX_BACKTRACKS + 1):
            z_new = z - mu * grad
            az_new = a_pr @ z_new
            resid_new = np.abs(az_new) ** 2 - y
            obj_new = resid_new @ resid_new / (2 * m)
            if obj_new <= obj:
                accepted = True
                break
            mu *= 0.5
        if not accepted:
            break
        z, az, resid, obj = z_new, az_new, resid_new, obj_new
        grad = a_h @ (resid * az) / m
        if trace is not None:
            trace.append(obj)
        converged = np.linalg.norm(grad) <= opts.grad_tol * grad0

    return WfResult(
        estimate=z,
        iterations_used=it,
        final_objective=float(obj),
        converged=bool(converged),
        objective_trace=np.array(trace) if trace is not None else None,
    )


def phase_aligned_distance(z_hat: np.ndarray, z_ref: np.ndarray) -> float:
    """``min_phi ||z_hat - exp(1j*phi) z_ref||``.

    Equals ``sqrt(||z_hat||^2 + ||z_ref||^2 - 2|<z_hat, z_ref>|)``; evaluated at
    the optimal rotation to avoid cancellation near zero.
    """
    z_hat = np.asarray(z_hat, dtype=complex)
    z_ref = np.asarray(z_ref, dtype=complex)
    if z_hat.shape != z_ref.shape:
        raise InvalidInputError("phase_aligned_distance needs equal-length vectors")
    inner = np.vdot(z_ref, z_hat)
    rot = inner / abs(inner) if inner != 0 else 1.0
    return float(np.linalg.norm(z_hat - rot * z_ref))
