"""Discrete wave problem: grids, the operator A = A0 + q, pulses, propagators
and transfer data.

Fields live on cell-centred uniform grids and are stored as flat float
arrays in C order of ``Grid.shape``. The spatial inner product is the
cell-volume weighted sum ``<u, w> = h^d * sum(u * w)``; on a uniform grid this
makes the finite-difference operator a symmetric matrix.

The background operator A0 is the Neumann finite-difference negative
Laplacian. Its eigenvectors are the DCT-II basis, so every function of A0
(the pulse, background propagation) is evaluated exactly with fast cosine
transforms. Operators with a potential fall back to a dense eigendecomposition
or to leapfrog time stepping.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft
import scipy.linalg
import scipy.sparse as sp

from .exceptions import CFLViolation, ConfigurationError, DiscretizationError

__all__ = [
    "Grid",
    "SymmetricOperator",
    "PulseSpec",
    "SnapshotSet",
    "TransferSeries",
    "build_grid",
    "assemble_operator",
    "pulse_spectrum",
    "default_tau",
    "discrete_delta",
    "source_pulse",
    "propagate_spectral",
    "propagate_leapfrog",
    "estimate_lambda_max",
    "substeps_for_cfl",
    "record_transfer",
]

# eigenvalues of A below -tol * lambda_max are rejected, the rest clipped at 0
EIG_CLIP_RTOL = 1e-10


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred grid on a box ``[0, extents[0]] x ...``."""

    extents: tuple[float, ...]
    cells: tuple[int, ...]

    @property
    def dimension(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.cells)

    @property
    def size(self) -> int:
        return int(np.prod(self.cells))

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(e / c for e, c in zip(self.extents, self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis_centers(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    def centers(self) -> np.ndarray:
        """Cell centres as an array of shape ``(size, dimension)``."""
        mesh = np.meshgrid(*[self.axis_centers(a) for a in range(self.dimension)],
                           indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def flat_index(self, index) -> int:
        """Flat position of a cell given as an int or a per-axis tuple."""
        if np.isscalar(index):
            index = int(index)
            if not 0 <= index < self.size:
                raise ConfigurationError(f"cell index {index} outside grid of {self.size} cells")
            return index
        index = tuple(int(i) for i in index)
        if len(index) != self.dimension or any(not 0 <= i < c for i, c in zip(index, self.cells)):
            raise ConfigurationError(f"cell {index} outside grid {self.shape}")
        return int(np.ravel_multi_index(index, self.shape))

    def inner(self, u, w) -> float:
        """Cell-volume weighted inner product."""
        return float(self.cell_volume * np.dot(np.ravel(u), np.ravel(w)))

    def norm(self, u) -> float:
        return float(np.sqrt(self.inner(u, u)))

    def check_field(self, values, name="field") -> np.ndarray:
        values = np.asarray(values, dtype=float).ravel()
        if values.size != self.size:
            raise ValueError(f"{name} has {values.size} values, grid has {self.size} cells")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{name} contains non-finite values")
        return values


def build_grid(extents, cells) -> Grid:
    """Build a uniform grid, validating extents and cell counts."""
    extents = tuple(float(e) for e in np.atleast_1d(extents))
    cells = tuple(int(c) for c in np.atleast_1d(cells))
    problems = []
    if len(extents) != len(cells):
        problems.append(f"{len(extents)} extents but {len(cells)} cell counts")
    if len(cells) not in (1, 2):
        problems.append(f"dimension must be 1 or 2, got {len(cells)}")
    problems += [f"extent {e} must be positive" for e in extents if not e > 0]
    problems += [f"cell count {c} must be at least 2" for c in cells if c < 2]
    if problems:
        raise ConfigurationError("; ".join(problems), problems)
    return Grid(extents, cells)


def _neumann_1d(n: int, h: float) -> sp.csr_matrix:
    main = np.full(n, 2.0)
    main[0] = main[-1] = 1.0
    off = -np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr") / h**2


def _neumann_eigenvalues_1d(n: int, h: float) -> np.ndarray:
    return 4.0 / h**2 * np.sin(np.pi * np.arange(n) / (2 * n)) ** 2


@dataclass(frozen=True, eq=False)
class SymmetricOperator:
    """Discrete ``A = -Laplacian_Neumann + q`` on ``grid``."""

    grid: Grid
    q: np.ndarray = field(repr=False)

    @property
    def is_background(self) -> bool:
        return not np.any(self.q)

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        g = self.grid
        lap = None
        for axis in range(g.dimension):
            parts = [sp.identity(c, format="csr") for c in g.cells]
            parts[axis] = _neumann_1d(g.cells[axis], g.spacing[axis])
            term = parts[0]
            for p in parts[1:]:
                term = sp.kron(term, p, format="csr")
            lap = term if lap is None else lap + term
        return (lap + sp.diags(self.q)).tocsr()

    def apply(self, u) -> np.ndarray:
        return self.matrix @ np.asarray(u, dtype=float)

    @cached_property
    def background_eigenvalues(self) -> np.ndarray:
        """Eigenvalues of A0 on the grid, shaped like the DCT coefficients."""
        g = self.grid
        lam = np.zeros(g.shape)
        for axis in range(g.dimension):
            lam1 = _neumann_eigenvalues_1d(g.cells[axis], g.spacing[axis])
            shape = [1] * g.dimension
            shape[axis] = -1
            lam = lam + lam1.reshape(shape)
        return lam

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense eigendecomposition ``A = Q diag(lam) Q^T`` with clipped eigenvalues."""
        try:
            lam, vecs = scipy.linalg.eigh(self.matrix.toarray())
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise DiscretizationError(f"eigendecomposition failed: {exc}") from exc
        return _clip_eigenvalues(lam), vecs

    def function_apply(self, func, v) -> np.ndarray:
        """Apply ``func(A)`` to ``v``; ``func`` acts elementwise on eigenvalues.

        Background operators use the DCT diagonalisation, others a dense
        eigendecomposition.
        """
        v = np.asarray(v, dtype=float)
        if self.is_background:
            shape = self.grid.shape
            coef = scipy.fft.dctn(v.reshape(shape), type=2, norm="ortho")
            out = scipy.fft.idctn(func(self.background_eigenvalues) * coef, type=2, norm="ortho")
            return out.ravel()
        lam, vecs = self.eigh
        return vecs @ (func(lam) * (vecs.T @ v))


def _clip_eigenvalues(lam: np.ndarray) -> np.ndarray:
    lam_max = max(float(np.max(lam)), 0.0)
    if np.min(lam) < -EIG_CLIP_RTOL * lam_max:
        raise DiscretizationError(
            f"operator has a negative eigenvalue {np.min(lam):.3e} (lambda_max {lam_max:.3e})")
    return np.maximum(lam, 0.0)


def assemble_operator(grid: Grid, q=None) -> SymmetricOperator:
    """Return ``A = A0 + q`` with A0 the Neumann finite-difference negative Laplacian."""
    if q is None:
        q = np.zeros(grid.size)
    q = grid.check_field(q, "potential q")
    q.setflags(write=False)
    return SymmetricOperator(grid, q)


@dataclass(frozen=True)
class PulseSpec:
    """Modulated Gaussian ``exp(-sigma^2 t^2 / 2) cos(omega0 t)`` emitted at ``source``."""

    sigma: float
    omega0: float = 0.0
    source: int | tuple = 0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigurationError(f"pulse sigma must be positive, got {self.sigma}")
        if not self.omega0 >= 0:
            raise ConfigurationError(f"pulse omega0 must be non-negative, got {self.omega0}")


def pulse_spectrum(omega, sigma: float, omega0: float = 0.0) -> np.ndarray:
    """Fourier transform of the modulated Gaussian pulse."""
    omega = np.asarray(omega, dtype=float)
    c = np.sqrt(np.pi) / (np.sqrt(2.0) * sigma)
    return c * (np.exp(-(omega - omega0) ** 2 / (2 * sigma**2))
                + np.exp(-(omega + omega0) ** 2 / (2 * sigma**2)))


def default_tau(sigma: float, omega0: float = 0.0) -> float:
    """Sampling step ``pi / (omega0 + 4 sigma)`` covering the pulse band."""
    return float(np.pi / (omega0 + 4.0 * sigma))


def discrete_delta(grid: Grid, index) -> np.ndarray:
    """Cell indicator scaled by ``1 / cell_volume``."""
    d = np.zeros(grid.size)
    d[grid.flat_index(index)] = 1.0 / grid.cell_volume
    return d


def source_pulse(background: SymmetricOperator, pulse: PulseSpec) -> np.ndarray:
    """Initial state ``g = sqrt(fhat(sqrt(A0))) delta_source``.

    For ``omega0 = 0`` this is ``(sqrt(2 pi)/sigma)^(1/2) exp(-A0 / (4 sigma^2)) delta``,
    i.e. a scaled heat kernel at time ``1 / (4 sigma^2)``.
    """
    if not background.is_background:
        raise ValueError("source pulses are built from the background operator (q must be 0)")
    delta = discrete_delta(background.grid, pulse.source)

    def weight(lam):
        return np.sqrt(pulse_spectrum(np.sqrt(np.maximum(lam, 0.0)), pulse.sigma, pulse.omega0))

    return background.function_apply(weight, delta)


@dataclass(frozen=True)
class SnapshotSet:
    """Fields ``u(k tau)`` for ``k = 0 .. count-1``, stored as rows of ``values``.

    ``kind`` is ``"cos"`` for wavefields ``cos(sqrt(A) t) g`` and ``"sin"`` for
    their time antiderivative ``sin(sqrt(A) t) / sqrt(A) g``.
    """

    grid: Grid
    tau: float
    values: np.ndarray = field(repr=False)
    kind: str = "cos"

    @property
    def count(self) -> int:
        return self.values.shape[0]

    def __len__(self):
        return self.count

    def __getitem__(self, k):
        return self.values[k]


@dataclass(frozen=True)
class TransferSeries:
    """Samples ``F(k tau) = <g_receiver, u_k>`` for one source/receiver pair."""

    source: int
    receiver: int
    tau: float
    samples: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.samples)

    @property
    def order(self) -> int:
        """Mass matrix order ``n`` supported by ``2n - 1`` samples."""
        return (len(self.samples) + 1) // 2


def _sine_factor(lam, t):
    root = np.sqrt(lam)
    small = root * abs(t) < 1e-8
    safe = np.where(small, 1.0, root)
    return np.where(small, t, np.sin(safe * t) / safe)


def propagate_spectral(operator: SymmetricOperator, g, n_steps: int, tau: float,
                       integrated: bool = False) -> SnapshotSet:
    """Exact snapshots ``cos(sqrt(A) k tau) g`` for ``k = 0 .. n_steps-1``.

    With ``integrated=True`` returns ``sin(sqrt(A) k tau) / sqrt(A) g``, the
    time antiderivative of the wavefield (zero initial state, velocity ``g``).
    """
    grid = operator.grid
    g = grid.check_field(g, "initial state")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    times = tau * np.arange(n_steps)
    if operator.is_background:
        coef = scipy.fft.dctn(g.reshape(grid.shape), type=2, norm="ortho")
        lam = operator.background_eigenvalues
        out = np.empty((n_steps, grid.size))
        for k, t in enumerate(times):
            factor = _sine_factor(lam, t) if integrated else np.cos(np.sqrt(lam) * t)
            out[k] = scipy.fft.idctn(factor * coef, type=2, norm="ortho").ravel()
    else:
        lam, vecs = operator.eigh
        coef = vecs.T @ g
        if integrated:
            factors = np.stack([_sine_factor(lam, t) for t in times])
        else:
            factors = np.cos(np.outer(times, np.sqrt(lam)))
        out = (factors * coef) @ vecs.T
    # the zero-time state is exact: g, or 0 for the antiderivative
    out[times == 0] = 0.0 if integrated else g
    return SnapshotSet(grid, float(tau), out, "sin" if integrated else "cos")


def estimate_lambda_max(operator: SymmetricOperator, iterations: int = 200,
                        seed: int = 0) -> float:
    """Power-iteration estimate of the largest eigenvalue, padded by 2 %."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(operator.grid.size)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iterations):
        w = operator.apply(v)
        lam_new = float(np.dot(v, w))
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if abs(lam_new - lam) <= 1e-6 * abs(lam_new):
            lam = lam_new
            break
        lam = lam_new
    return 1.02 * lam


def substeps_for_cfl(operator: SymmetricOperator, tau: float, cfl: float = 0.5) -> int:
    """Smallest substep count with ``dt sqrt(lambda_max) / 2 <= cfl``."""
    lam_max = estimate_lambda_max(operator)
    return max(1, int(np.ceil(abs(tau) * np.sqrt(lam_max) / (2.0 * cfl))))


def propagate_leapfrog(operator: SymmetricOperator, g, n_steps: int, tau: float,
                       substeps: int, integrated: bool = False) -> SnapshotSet:
    """Second-order leapfrog ``u+ = 2u - u- - dt^2 A u`` with ``dt = tau / substeps``.

    Records every ``substeps``-th state. The wavefield starts at rest
    (``u(-dt) = u(dt)``); with ``integrated=True`` it starts at zero with
    velocity ``g``.
    """
    grid = operator.grid
    g = grid.check_field(g, "initial state")
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")
    if substeps < 1:
        raise ValueError("substeps must be positive")
    out = np.empty((n_steps, grid.size))
    kind = "sin" if integrated else "cos"
    if n_steps == 1:
        out[0] = 0.0 if integrated else g
        return SnapshotSet(grid, float(tau), out, kind)

    dt = tau / substeps
    lam_max = estimate_lambda_max(operator)
    if dt**2 * lam_max >= 4.0:
        raise CFLViolation(
            f"dt^2 * lambda_max = {dt**2 * lam_max:.3f} >= 4; increase substeps above {substeps}")
    A = operator.matrix
    if integrated:
        prev = np.zeros(grid.size)
        cur = dt * g - dt**3 / 6.0 * (A @ g)
    else:
        prev = g.copy()
        cur = g - 0.5 * dt**2 * (A @ g)
    out[0] = prev
    step = 1
    if substeps == 1:
        out[1] = cur
        step = 2
    dt2 = dt * dt
    # cur holds the state at substep m, prev at m - 1
    m = 1
    while step < n_steps:
        nxt = 2.0 * cur - prev - dt2 * (A @ cur)
        prev, cur = cur, nxt
        m += 1
        if m % substeps == 0:
            out[step] = cur
            step += 1
    return SnapshotSet(grid, float(tau), out, kind)


def record_transfer(snapshots: SnapshotSet, receiver_pulse, source: int = 0,
                    receiver: int = 0) -> TransferSeries:
    """``F(k tau) = <g_receiver, u_k>`` for every recorded snapshot."""
    grid = snapshots.grid
    r = np.asarray(receiver_pulse, dtype=float).ravel()
    if r.size != grid.size:
        raise ValueError(f"receiver pulse has {r.size} values, snapshots have {grid.size}")
    samples = grid.cell_volume * (snapshots.values @ r)
    return TransferSeries(int(source), int(receiver), snapshots.tau, samples)
