"""Ground states, degeneracy grouping and thermal traces."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .operators import OperatorMatrix

DENSE_THRESHOLD = 1500
RESIDUAL_TOL = 1e-9


class SolverError(RuntimeError):
    """Eigensolver did not converge within its iteration budget."""


@dataclass
class SpectralResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    degeneracy_groups: list
    sector: Optional[float] = None
    cutoff: Optional[str] = None
    method: str = "dense"

    @property
    def ground_energy(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def ground_degeneracy(self) -> int:
        return len(self.degeneracy_groups[0])


def degeneracy_groups(values: Sequence[float], gap_tol: float = 1e-6, width: Optional[float] = None) -> list[list[int]]:
    """Maximal runs of ascending ``values`` whose consecutive gaps are below ``gap_tol * width``."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return []
    if width is None:
        width = float(values[-1] - values[0])
    tol = gap_tol * max(1.0, width)
    groups = [[0]]
    for i in range(1, values.size):
        if values[i] - values[i - 1] <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def _as_matrix(H):
    return H.matrix if isinstance(H, OperatorMatrix) else H


def _dense(H) -> np.ndarray:
    return H.toarray() if sp.issparse(H) else np.asarray(H)


def lanczos_lowest(
    H, k: int, tol: float = 1e-10, max_steps: int = 400, restarts: int = 60, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Lowest ``k`` eigenpairs by restarted Lanczos with full reorthogonalization.

    One pair is locked per run and later runs are kept orthogonal to the
    locked vectors, so degenerate copies are found one after the other.
    """
    n = H.shape[0]
    rng = np.random.default_rng(seed)
    locked_vals: list[float] = []
    locked = np.zeros((n, 0), dtype=complex)
    m = min(max_steps, n)

    def deflate(v):
        for _ in range(2):
            if locked.shape[1]:
                v = v - locked @ (locked.conj().T @ v)
        return v

    for _ in range(k):
        v = deflate(rng.standard_normal(n) + 0j)
        found = False
        for _restart in range(restarts):
            V = np.zeros((n, m), dtype=complex)
            alpha, beta = [], []
            v = v / np.linalg.norm(v)
            V[:, 0] = v
            steps = 0
            for j in range(m):
                w = H @ V[:, j]
                a = np.vdot(V[:, j], w).real
                w = w - V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
                w = w - V[:, : j + 1] @ (V[:, : j + 1].conj().T @ w)
                w = deflate(w)
                alpha.append(a)
                steps = j + 1
                bnorm = np.linalg.norm(w)
                if j + 1 == m or bnorm < 1e-12:
                    break
                beta.append(bnorm)
                V[:, j + 1] = w / bnorm
            theta, S = sla.eigh_tridiagonal(np.array(alpha), np.array(beta[: steps - 1]))
            x = V[:, :steps] @ S[:, 0]
            x = deflate(x)
            x /= np.linalg.norm(x)
            lam = float(np.vdot(x, H @ x).real)
            res = np.linalg.norm(H @ x - lam * x)
            if res <= tol * max(1.0, abs(lam)):
                found = True
                break
            v = x
        if not found:
            raise SolverError(f"Lanczos did not converge: residual {res:.3e} for eigenvalue {lam:.12g}")
        locked_vals.append(lam)
        locked = np.column_stack([locked, x])
    order = np.argsort(locked_vals)
    return np.array(locked_vals)[order], locked[:, order]


def ground_states(
    H, k: int = 1, gap_tol: float = 1e-6, dense_threshold: int = DENSE_THRESHOLD, method: Optional[str] = None
) -> SpectralResult:
    """Lowest ``k`` eigenpairs of a Hermitian matrix, grouped by degeneracy."""
    basis = H.basis if isinstance(H, OperatorMatrix) else None
    A = _as_matrix(H)
    n = A.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k={k} must lie in [1, {n}]")
    method = method or ("dense" if n <= dense_threshold else "lanczos")
    if method == "dense":
        vals, vecs = np.linalg.eigh(_dense(A))
        vals, vecs = vals[:k], vecs[:, :k]
    else:
        vals, vecs = lanczos_lowest(sp.csr_matrix(A), k)
    for i in range(k):
        r = np.linalg.norm(A @ vecs[:, i] - vals[i] * vecs[:, i])
        if r > RESIDUAL_TOL * max(1.0, abs(vals[i])):
            raise SolverError(f"residual {r:.3e} exceeds tolerance for eigenvalue {vals[i]:.12g}")
    return SpectralResult(
        vals, vecs, degeneracy_groups(vals, gap_tol),
        sector=None if basis is None else basis.M,
        cutoff=None if basis is None else basis.phonons.label,
        method=method,
    )


def full_spectrum(H) -> np.ndarray:
    return np.linalg.eigvalsh(_dense(_as_matrix(H)))


# -- thermal -----------------------------------------------------------------


@dataclass
class ThermalResult:
    beta: float
    h: float
    log_Z: float
    magnetization: float
    cutoff: Optional[str] = None
    delta: Optional[float] = None  # change of magnetization vs the previous cutoff
    derivative_check: Optional[float] = None

    @property
    def Z(self) -> float:
        return float(np.exp(self.log_Z))


def _log_sum_exp(a: np.ndarray) -> float:
    m = np.max(a)
    return float(m + np.log(np.sum(np.exp(a - m))))


def full_spectrum_trace(blocks: Iterable, beta: float) -> float:
    """``log Tr exp(-beta H)`` over a sector-blocked Hamiltonian."""
    if not beta > 0:
        raise ValueError("beta must be positive")
    exps = [-beta * full_spectrum(b) for b in blocks]
    return _log_sum_exp(np.concatenate(exps))


def partition_function(blocks: Iterable, beta: float) -> float:
    return float(np.exp(full_spectrum_trace(blocks, beta)))


def magnetization(
    family: Callable[[float], Sequence[tuple[float, object]]], beta: float, h: float, step: float = 1e-4
) -> ThermalResult:
    """``M(beta, h) = Tr[2 S3 e^{-beta H}] / Z`` with a finite-difference check.

    ``family(h)`` returns ``[(M_sector, H_sector), ...]``; S3 is the scalar
    ``M_sector`` on each block. The check is the central difference of
    ``log Z`` in ``beta*h`` (``H`` rebuilt at ``h +- step/beta``).
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    blocks = family(h)
    log_w, weights_m = [], []
    for M, Hm in blocks:
        e = full_spectrum(Hm)
        log_w.append(-beta * e)
        weights_m.append(np.full(e.size, 2.0 * M))
    log_w = np.concatenate(log_w)
    mvals = np.concatenate(weights_m)
    log_Z = _log_sum_exp(log_w)
    p = np.exp(log_w - log_Z)
    mag = float(p @ mvals)
    dh = step / beta
    lz_plus = full_spectrum_trace([Hm for _, Hm in family(h + dh)], beta)
    lz_minus = full_spectrum_trace([Hm for _, Hm in family(h - dh)], beta)
    fd = (lz_plus - lz_minus) / (2 * step)
    return ThermalResult(beta, h, log_Z, mag, derivative_check=float(fd))


def sector_spectra(blocks: Iterable[tuple[float, object]]) -> list[tuple[float, np.ndarray]]:
    """Full spectrum of each ``(M, H_M)`` block."""
    return [(float(M), full_spectrum(Hm)) for M, Hm in blocks]


def magnetization_from_spectra(
    spectra: Sequence[tuple[float, np.ndarray]], beta: float, h: float, h_ref: float = 0.0, step: float = 1e-4
) -> ThermalResult:
    """Same as :func:`magnetization` from spectra computed once at field ``h_ref``.

    ``H(h) = H(h_ref) - 2 (h - h_ref) S3``, so each sector spectrum shifts by
    ``-2 (h - h_ref) M``; the check differentiates ``log Z`` of the shifted spectra.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")

    def log_weights(hh):
        return np.concatenate([-beta * (e - 2.0 * (hh - h_ref) * M) for M, e in spectra])

    mvals = np.concatenate([np.full(e.size, 2.0 * M) for M, e in spectra])
    lw = log_weights(h)
    log_Z = _log_sum_exp(lw)
    mag = float(np.exp(lw - log_Z) @ mvals)
    dh = step / beta
    fd = (_log_sum_exp(log_weights(h + dh)) - _log_sum_exp(log_weights(h - dh))) / (2 * step)
    return ThermalResult(beta, h, log_Z, mag, derivative_check=float(fd))
