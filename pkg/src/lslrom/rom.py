"""Data-driven reduced order model pieces: mass matrices from transfer data,
their Cholesky factors, orthogonalized snapshots and data-generated internal
solutions ``u_hat = u0 (U0)^{-1} U``.

Snapshot sets are handled as arrays of shape ``(count, cells)`` (one snapshot
per row), so that the row-vector-of-functions products ``u @ X`` in the
construction become ``X.T @ values``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import DataInconsistencyError
from .wave_sim import Grid, SnapshotSet, TransferSeries

__all__ = [
    "MassMatrix",
    "CholeskyFactor",
    "InternalSnapshotSet",
    "mass_from_siso",
    "mass_from_mimo",
    "gram_matrix",
    "spectral_repair",
    "cholesky_upper",
    "orthogonalized_basis",
    "internal_solutions",
    "rom_internal_solutions",
]


@dataclass(frozen=True)
class MassMatrix:
    """Gram matrix of snapshots; ``block`` is the number of sources per time level."""

    entries: np.ndarray = field(repr=False)
    source: int | None = None
    block: int = 1

    @property
    def order(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class CholeskyFactor:
    """Upper triangular ``U`` with ``M = U^T U`` and positive diagonal."""

    upper: np.ndarray = field(repr=False)
    block: int = 1

    @property
    def order(self) -> int:
        return self.upper.shape[0]


@dataclass(frozen=True)
class InternalSnapshotSet:
    """Snapshots tagged by provenance.

    ``provenance`` is one of ``"true"``, ``"background"``, ``"data"`` (data
    generated internal solutions) or ``"orthogonal"`` (orthonormalized basis).
    """

    grid: Grid
    tau: float
    values: np.ndarray = field(repr=False)
    provenance: str
    block: int = 1

    @property
    def count(self) -> int:
        return self.values.shape[0] // self.block

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, k):
        return self.values[k]

    def as_snapshots(self) -> SnapshotSet:
        return SnapshotSet(self.grid, self.tau, self.values, "cos")


def _hankel_toeplitz(samples: np.ndarray, n: int) -> np.ndarray:
    k = np.arange(n)
    return 0.5 * (samples[np.abs(k[:, None] - k[None, :])] + samples[k[:, None] + k[None, :]])


def mass_from_siso(series: TransferSeries) -> MassMatrix:
    """``M_kl = (F(|k-l| tau) + F((k+l) tau)) / 2`` from ``2n - 1`` samples."""
    samples = np.asarray(series.samples, dtype=float)
    if samples.size % 2 == 0:
        raise ValueError(
            f"a mass matrix needs an odd number (2n-1) of samples, got {samples.size}")
    n = (samples.size + 1) // 2
    return MassMatrix(_hankel_toeplitz(samples, n), source=series.source, block=1)


def mass_from_mimo(responses, atol: float = 1e-12) -> MassMatrix:
    """Block mass matrix from the full ``m x m`` response matrix series.

    ``responses`` has shape ``(2n-1, m, m)`` with ``responses[k, j, i] = F^{ji}(k tau)``.
    Rows and columns are ordered time-major: index ``k * m + i`` is source
    ``i`` at time ``k``.
    """
    F = np.asarray(responses, dtype=float)
    if F.ndim != 3 or F.shape[1] != F.shape[2]:
        raise ValueError(f"responses must have shape (2n-1, m, m), got {F.shape}")
    if F.shape[0] % 2 == 0:
        raise ValueError(
            f"a mass matrix needs an odd number (2n-1) of samples, got {F.shape[0]}")
    asym = np.max(np.abs(F - F.transpose(0, 2, 1)))
    scale = max(np.max(np.abs(F)), np.finfo(float).tiny)
    if asym > atol * scale:
        raise DataInconsistencyError(
            f"response matrix is not symmetric (max asymmetry {asym / scale:.2e} relative)")
    n = (F.shape[0] + 1) // 2
    m = F.shape[1]
    k = np.arange(n)
    blocks = 0.5 * (F[np.abs(k[:, None] - k[None, :])] + F[k[:, None] + k[None, :]])
    # blocks[k, l, a, b] -> M[k*m + a, l*m + b]
    M = blocks.transpose(0, 2, 1, 3).reshape(n * m, n * m)
    return MassMatrix(0.5 * (M + M.T), source=None, block=m)


def gram_matrix(grid: Grid, values) -> np.ndarray:
    """Explicit weighted Gram matrix ``<u_k, u_l>`` of snapshot rows."""
    values = np.asarray(values, dtype=float)
    return grid.cell_volume * (values @ values.T)


def spectral_repair(M: MassMatrix, rel_tol: float = 1e-12) -> MassMatrix:
    """Raise eigenvalues below ``rel_tol * lambda_max`` to that floor."""
    entries = 0.5 * (M.entries + M.entries.T)
    lam, vecs = np.linalg.eigh(entries)
    floor = rel_tol * max(lam[-1], 0.0)
    if floor == 0.0:
        floor = rel_tol
    if lam[0] >= floor:
        return MassMatrix(entries, M.source, M.block)
    lam = np.maximum(lam, floor)
    repaired = (vecs * lam) @ vecs.T
    return MassMatrix(0.5 * (repaired + repaired.T), M.source, M.block)


def cholesky_upper(M: MassMatrix) -> CholeskyFactor:
    """Upper Cholesky factor; raises ``DataInconsistencyError`` at a non-positive pivot."""
    entries = np.asarray(M.entries, dtype=float)
    try:
        U = scipy.linalg.cholesky(entries, lower=False)
    except np.linalg.LinAlgError as exc:
        pivot = _failing_pivot(entries)
        raise DataInconsistencyError(
            f"mass matrix is not positive definite (pivot {pivot}); "
            "data may be noisy, consider spectral_repair", pivot=pivot) from exc
    return CholeskyFactor(U, M.block)


def _failing_pivot(M: np.ndarray) -> int:
    for k in range(1, M.shape[0] + 1):
        try:
            np.linalg.cholesky(M[:k, :k])
        except np.linalg.LinAlgError:
            return k - 1
    return M.shape[0] - 1


def _values(snapshots):
    return np.asarray(snapshots.values if hasattr(snapshots, "values") else snapshots, dtype=float)


def orthogonalized_basis(snapshots, U: CholeskyFactor) -> InternalSnapshotSet:
    """``v = u U^{-1}``: sequential Gram-Schmidt of the snapshots."""
    values = _values(snapshots)
    if values.shape[0] != U.order:
        raise ValueError(f"{values.shape[0]} snapshots but factor of order {U.order}")
    # rows of V are v_k = sum_l (U^{-1})_{lk} u_l, i.e. V = U^{-T} u
    V = scipy.linalg.solve_triangular(U.upper, values, trans="T", lower=False)
    return InternalSnapshotSet(snapshots.grid, snapshots.tau, V, "orthogonal", U.block)


def internal_solutions(background_snapshots, U0: CholeskyFactor,
                       U: CholeskyFactor) -> InternalSnapshotSet:
    """Data-generated internal solutions ``u0 (U0)^{-1} U``.

    Evaluated as ``U^T (U0^{-T} u0)``; no explicit inverse is formed.
    """
    if U0.order != U.order:
        raise ValueError(f"factor orders differ: {U0.order} vs {U.order}")
    V0 = orthogonalized_basis(background_snapshots, U0)
    values = U.upper.T @ V0.values
    return InternalSnapshotSet(background_snapshots.grid, background_snapshots.tau,
                               values, "data", U.block)


def rom_internal_solutions(background_snapshots: SnapshotSet, F0: TransferSeries,
                           F: TransferSeries, repair_tol: float | None = None):
    """Per-source pipeline: mass matrices, factors and internal solutions.

    Returns ``(u_hat, U0, U)``. ``repair_tol`` switches on ``spectral_repair``
    of the measured mass matrix.
    """
    M0 = mass_from_siso(F0)
    M = mass_from_siso(F)
    if repair_tol is not None:
        M = spectral_repair(M, repair_tol)
    U0 = cholesky_upper(M0)
    U = cholesky_upper(M)
    n = U.order
    bg = SnapshotSet(background_snapshots.grid, background_snapshots.tau,
                     background_snapshots.values[:n], background_snapshots.kind)
    return internal_solutions(bg, U0, U), U0, U
