"""Time-domain Lippmann-Schwinger systems and their regularized solution.

For source ``j`` and sample ``k`` the exact identity

    F0(k tau) - F(k tau) = int_0^{k tau} < S0(k tau - t) g_j, q u(t) > dt

holds with ``S0(t) g = sin(sqrt(A0) t) / sqrt(A0) g``, the time
antiderivative of the background wavefield. Replacing the unknown ``u`` by
the background field gives the Born system, by the data-generated internal
solutions the LSL system, and by the true field the "cheated" system.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .wave_sim import Grid, TransferSeries

__all__ = [
    "KernelSystem",
    "ReflectivityImage",
    "restriction_matrix",
    "trapezoid_convolution",
    "assemble_rows",
    "rhs_vector",
    "solve_reflectivity",
    "misfit",
    "MODES",
]

MODES = ("born", "lsl", "cheated")


@dataclass(frozen=True)
class KernelSystem:
    """Rows ``(source j, sample k)`` in source-major order, columns image cells."""

    kernel: np.ndarray = field(repr=False)
    rhs: np.ndarray | None = field(repr=False)
    image_grid: Grid
    n_sources: int
    n_times: int
    mode: str = ""

    @property
    def row_index(self) -> np.ndarray:
        """``(j, k)`` pairs labelling the rows."""
        j, k = np.divmod(np.arange(self.n_sources * self.n_times), self.n_times)
        return np.stack([j, k], axis=1)

    def with_rhs(self, rhs) -> "KernelSystem":
        rhs = np.asarray(rhs, dtype=float)
        if rhs.shape != (self.kernel.shape[0],):
            raise ValueError(f"rhs has shape {rhs.shape}, system has {self.kernel.shape[0]} rows")
        return KernelSystem(self.kernel, rhs, self.image_grid, self.n_sources,
                            self.n_times, self.mode)


@dataclass(frozen=True)
class ReflectivityImage:
    image_grid: Grid
    values: np.ndarray = field(repr=False)
    mode: str = ""

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.image_grid.shape)


def restriction_matrix(forward: Grid, image: Grid) -> sp.csr_matrix:
    """Sparse map integrating a forward-grid field over each image cell.

    Entry ``(c, f)`` is the forward cell volume when fine cell ``f`` lies in
    image cell ``c``. Every forward cell count must be a multiple of the image
    cell count along the same axis.
    """
    if forward.dimension != image.dimension or not np.allclose(forward.extents, image.extents):
        raise ValueError("image grid must cover the same box as the forward grid")
    ratios = []
    for fc, ic in zip(forward.cells, image.cells):
        if fc % ic:
            raise ValueError(f"forward cells {forward.cells} do not refine image cells {image.cells}")
        ratios.append(fc // ic)
    fine = np.indices(forward.shape).reshape(forward.dimension, -1)
    coarse = tuple(fine[a] // ratios[a] for a in range(forward.dimension))
    rows = np.ravel_multi_index(coarse, image.shape)
    cols = np.arange(forward.size)
    data = np.full(forward.size, forward.cell_volume)
    return sp.csr_matrix((data, (rows, cols)), shape=(image.size, forward.size))


def trapezoid_convolution(left: np.ndarray, right: np.ndarray, tau: float) -> np.ndarray:
    """``P[k] = tau * sum''_{l=0..k} left[k-l] * right[l]`` pointwise in space.

    ``sum''`` halves the ``l = 0`` and ``l = k`` terms; ``P[0] = 0``.
    """
    n = right.shape[0]
    out = np.zeros((n,) + right.shape[1:])
    for k in range(1, n):
        terms = left[k::-1] * right[: k + 1]
        out[k] = tau * (terms.sum(axis=0) - 0.5 * (terms[0] + terms[-1]))
    return out


def assemble_rows(background, internal, image_grid: Grid, rhs=None,
                  mode: str = "") -> KernelSystem:
    """Kernel rows for every source and sample time.

    ``background`` is a sequence (one per source) of snapshot sets of the
    background antiderivative field ``S0(k tau) g_j``; ``internal`` the
    matching internal wavefields (background for Born, data generated for
    LSL, true for cheated). Only the first ``n`` entries of each background
    set are used, ``n`` being the internal set length.
    """
    if len(background) != len(internal) or not background:
        raise ValueError("need one background and one internal set per source")
    n = len(internal[0])
    tau = internal[0].tau
    forward = internal[0].grid
    for b, u in zip(background, internal):
        if len(u) != n or len(b) < n:
            raise ValueError("every source needs the same number of time samples")
        if not np.isclose(b.tau, tau) or not np.isclose(u.tau, tau):
            raise ValueError("time steps differ between sources")
    R = restriction_matrix(forward, image_grid)
    blocks = []
    for b, u in zip(background, internal):
        products = trapezoid_convolution(np.asarray(b.values[:n]), np.asarray(u.values), tau)
        blocks.append((R @ products.T).T)
    kernel = np.vstack(blocks)
    system = KernelSystem(kernel, None, image_grid, len(internal), n, mode)
    return system if rhs is None else system.with_rhs(rhs)


def rhs_vector(F0, F, n: int | None = None) -> np.ndarray:
    """Stack ``F0^{jj}(k tau) - F^{jj}(k tau)`` for ``k < n`` over sources."""
    F0, F = list(F0), list(F)
    if len(F0) != len(F):
        raise ValueError("background and measured data cover different sources")
    parts = []
    for a, b in zip(F0, F):
        if len(a) != len(b) or not np.isclose(a.tau, b.tau):
            raise ValueError("background and measured series differ in length or tau")
        m = a.order if n is None else n
        if m > len(a):
            raise ValueError(f"series of length {len(a)} has fewer than {m} samples")
        parts.append(np.asarray(a.samples[:m]) - np.asarray(b.samples[:m]))
    return np.concatenate(parts)


def _largest_singular_value(K: np.ndarray, iterations: int = 100, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(K.shape[1])
    v /= np.linalg.norm(v)
    s = 0.0
    for _ in range(iterations):
        w = K.T @ (K @ v)
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        s_new = np.sqrt(nrm)
        if abs(s_new - s) <= 1e-10 * s_new:
            return float(s_new)
        s = s_new
    return float(s)


def solve_reflectivity(system: KernelSystem, lam: float = 1e-2, nonneg: bool = False,
                       row_scaling: bool = True) -> ReflectivityImage:
    """Relative Tikhonov solution ``argmin |K q - b|^2 + (lam * s_max)^2 |q|^2``.

    All-zero rows (the ``k = 0`` rows among them) are dropped and, with
    ``row_scaling``, every remaining row of ``[K | b]`` is divided by
    ``max |K_row|``. ``s_max`` is a power-iteration estimate of the largest
    singular value of the scaled kernel. ``nonneg`` projects onto ``q >= 0``
    by solving the bound-constrained problem instead.
    """
    if lam < 0:
        raise ValueError("regularization weight must be non-negative")
    if system.rhs is None:
        raise ValueError("system has no right-hand side")
    K = np.asarray(system.kernel, dtype=float)
    b = np.asarray(system.rhs, dtype=float)
    row_max = np.max(np.abs(K), axis=1)
    keep = row_max > 0
    K, b, row_max = K[keep], b[keep], row_max[keep]
    ncols = system.kernel.shape[1]
    if K.shape[0] == 0 or not np.any(b):
        return ReflectivityImage(system.image_grid, np.zeros(ncols), system.mode)
    if row_scaling:
        K = K / row_max[:, None]
        b = b / row_max
    s_max = _largest_singular_value(K)
    mu = lam * s_max

    if nonneg:
        from scipy.optimize import lsq_linear
        Kaug = np.vstack([K, mu * np.eye(ncols)]) if mu > 0 else K
        baug = np.concatenate([b, np.zeros(ncols)]) if mu > 0 else b
        res = lsq_linear(Kaug, baug, bounds=(0.0, np.inf), method="bvls")
        return ReflectivityImage(system.image_grid, res.x, system.mode)

    Uk, s, Vt = np.linalg.svd(K, full_matrices=False)
    beta = Uk.T @ b
    if mu > 0:
        filt = s / (s**2 + mu**2)
    else:
        cutoff = max(K.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
        rank = int(np.sum(s > cutoff))
        if rank < min(K.shape):
            warnings.warn(f"kernel is rank deficient (effective rank {rank} of {min(K.shape)}); "
                          "returning the minimum-norm solution", RuntimeWarning, stacklevel=2)
        filt = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    q = Vt.T @ (filt * beta)
    return ReflectivityImage(system.image_grid, q, system.mode)


def misfit(system: KernelSystem, q) -> float:
    """Relative residual ``|K q - rhs| / |rhs|`` on the unscaled system.

    Returns ``0.0`` when both vanish and ``inf`` when only ``rhs`` does.
    """
    q = np.asarray(getattr(q, "values", q), dtype=float)
    if q.shape != (system.kernel.shape[1],):
        raise ValueError(f"image has {q.size} values, kernel has {system.kernel.shape[1]} columns")
    r = system.kernel @ q - system.rhs
    nb = np.linalg.norm(system.rhs)
    if nb == 0.0:
        return 0.0 if np.linalg.norm(r) == 0.0 else float("inf")
    return float(np.linalg.norm(r) / nb)
