"""Configuration-driven experiment runner, image metrics and raster export."""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .lsl_inversion import (KernelSystem, ReflectivityImage, assemble_rows, misfit,
                            restriction_matrix, rhs_vector, solve_reflectivity)
from .rom import (cholesky_upper, mass_from_siso, orthogonalized_basis,
                  rom_internal_solutions)
from .wave_sim import (Grid, PulseSpec, SnapshotSet, TransferSeries, assemble_operator,
                       build_grid, propagate_leapfrog, propagate_spectral, record_transfer,
                       source_pulse, substeps_for_cfl)

__all__ = [
    "OUTPUT_ENV",
    "MetricsReport",
    "MonostaticData",
    "true_medium",
    "region_mask",
    "radial_average",
    "radial_ratio",
    "compare_images",
    "export_raster",
    "read_raster_text",
    "run_experiment",
]

log = logging.getLogger(__name__)

#: environment variable overriding the configured output directory
OUTPUT_ENV = "LSLROM_OUTPUT_DIR"


class MonostaticData:
    """Diagonal transfer series ``F^{jj}`` keyed by source.

    Only same-source/same-receiver series exist in monostatic acquisition;
    asking for any other pair is an error.
    """

    def __init__(self, series):
        self._series = {}
        for s in series:
            if s.source != s.receiver:
                raise ValueError(f"monostatic data holds only diagonal series, got "
                                 f"receiver {s.receiver} / source {s.source}")
            self._series[s.source] = s

    def series(self, receiver: int, source: int) -> TransferSeries:
        if receiver != source:
            raise KeyError(f"off-diagonal response F^({receiver},{source}) is not measured")
        return self._series[source]

    def __len__(self):
        return len(self._series)

    def sources(self):
        return sorted(self._series)


@dataclass
class MetricsReport:
    """Per-mode inversion metrics plus internal-solution diagnostics.

    Undefined quantities (e.g. ghost ratio of an all-zero image) are stored
    as ``nan`` and written as JSON ``null``.
    """

    scenario: str
    modes: dict = field(default_factory=dict)
    internal_errors: dict = field(default_factory=dict)
    radial: dict = field(default_factory=dict)
    degenerate: bool = False

    def to_dict(self) -> dict:
        return _jsonable({
            "scenario": self.scenario,
            "degenerate": self.degenerate,
            "modes": self.modes,
            "internal_errors": self.internal_errors,
            "radial": self.radial,
        })


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def true_medium(grid: Grid, inclusions) -> np.ndarray:
    """Potential ``q`` on ``grid`` from rectangle and cos^2-bump inclusions."""
    X = grid.centers()
    q = np.zeros(grid.size)
    for inc in inclusions:
        if inc.shape == "rect":
            inside = np.ones(grid.size, dtype=bool)
            for a in range(grid.dimension):
                lo, hi = inc.bounds[2 * a], inc.bounds[2 * a + 1]
                inside &= (X[:, a] >= lo) & (X[:, a] < hi)
            q += inc.amplitude * inside
        elif inc.shape == "bump":
            r = np.linalg.norm(X - np.asarray(inc.center), axis=1) / inc.radius
            q += inc.amplitude * np.where(r < 1.0, np.cos(0.5 * np.pi * r) ** 2, 0.0)
        else:
            raise ValueError(f"unknown inclusion shape {inc.shape!r}")
    return q


def region_mask(grid: Grid, rects) -> np.ndarray:
    """Cells whose centres fall inside any rectangle ``[x0, x1(, y0, y1)]``."""
    X = grid.centers()
    mask = np.zeros(grid.size, dtype=bool)
    for r in rects:
        r = tuple(r)
        if len(r) != 2 * grid.dimension:
            raise ValueError(f"rectangle {r} does not match a {grid.dimension}D grid")
        inside = np.ones(grid.size, dtype=bool)
        for a in range(grid.dimension):
            lo, hi = r[2 * a], r[2 * a + 1]
            if lo < 0 or hi > grid.extents[a] or lo >= hi:
                raise ValueError(f"rectangle {r} is empty or outside the grid")
            inside &= (X[:, a] >= lo) & (X[:, a] < hi)
        mask |= inside
    return mask


def radial_average(field_values, grid: Grid, center, n_bins: int) -> np.ndarray:
    """Mean of the field over equal-width distance bins around ``center``.

    Bins span ``[0, r_max]`` with ``r_max`` the largest centre distance in
    the grid. Empty bins are ``nan``.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    if center.size != grid.dimension or np.any(center < 0) or np.any(
            center > np.asarray(grid.extents)):
        raise ValueError(f"center {center} outside grid")
    if n_bins < 1:
        raise ValueError("n_bins must be positive")
    values = grid.check_field(field_values)
    d = np.linalg.norm(grid.centers() - center, axis=1)
    r_max = d.max()
    if r_max == 0:
        bins = np.zeros(grid.size, dtype=int)
    else:
        bins = np.minimum((d / r_max * n_bins).astype(int), n_bins - 1)
    counts = np.bincount(bins, minlength=n_bins)
    sums = np.bincount(bins, values, minlength=n_bins)
    out = np.full(n_bins, np.nan)
    nz = counts > 0
    out[nz] = sums[nz] / counts[nz]
    return out


def radial_ratio(true_snapshots: SnapshotSet, background_snapshots: SnapshotSet, U, U0,
                 center, n_bins: int):
    """Per-step radial-average norms of ``v - v0`` and of normalized ``u - u0``.

    Returns ``(orthogonalized, raw)``: arrays over the time steps, where
    ``orthogonalized[k] = |RA(v_k - v0_k)|`` and
    ``raw[k] = |RA(u_k / |u_k| - u0_k / |u0_k|)|``.
    """
    grid = true_snapshots.grid
    n = U.order
    v = orthogonalized_basis(SnapshotSet(grid, true_snapshots.tau, true_snapshots.values[:n]), U)
    v0 = orthogonalized_basis(
        SnapshotSet(grid, background_snapshots.tau, background_snapshots.values[:n]), U0)
    ortho, raw = np.empty(n), np.empty(n)
    for k in range(n):
        u, u0 = true_snapshots[k], background_snapshots[k]
        ortho[k] = np.sqrt(np.nansum(radial_average(v[k] - v0[k], grid, center, n_bins) ** 2))
        diff = u / grid.norm(u) - u0 / grid.norm(u0)
        raw[k] = np.sqrt(np.nansum(radial_average(diff, grid, center, n_bins) ** 2))
    return ortho, raw


def compare_images(image, truth, shadow_region=None, support_region=None) -> dict:
    """Relative L2 error, correlation with the support mask and ghost ratio.

    Regions are boolean masks over the image cells. ``support_region``
    defaults to the cells where ``truth`` is non-zero. The normalized
    cross-correlation is the Pearson correlation of the image with the
    support indicator (0 for a constant image); the ghost ratio is
    ``sum_shadow a^2 / sum_support a^2`` (``nan`` when undefined).
    """
    a = np.asarray(getattr(image, "values", image), dtype=float).ravel()
    t = np.asarray(getattr(truth, "values", truth), dtype=float).ravel()
    if a.shape != t.shape:
        raise ValueError(f"image has {a.size} cells, truth has {t.size}")
    support = t != 0 if support_region is None else np.asarray(support_region, dtype=bool).ravel()
    if support.shape != a.shape:
        raise ValueError("support region does not match the image grid")
    nt = np.linalg.norm(t)
    rel = float(np.linalg.norm(a - t) / nt) if nt > 0 else float("nan")

    ac = a - a.mean()
    mc = support.astype(float) - support.mean()
    denom = np.linalg.norm(ac) * np.linalg.norm(mc)
    ncc = float(np.dot(ac, mc) / denom) if denom > 0 else 0.0

    ghost = float("nan")
    if shadow_region is not None:
        shadow = np.asarray(shadow_region, dtype=bool).ravel()
        if shadow.shape != a.shape:
            raise ValueError("shadow region does not match the image grid")
        den = float(np.sum(a[support] ** 2))
        num = float(np.sum(a[shadow] ** 2))
        if den > 0:
            ghost = num / den
    return {"rel_l2": rel, "ncc": ncc, "ghost_ratio": ghost}


def _fmt(v) -> str:
    # repr is the shortest string that round-trips and ignores locale
    return repr(float(v))


def export_raster(image, path) -> dict:
    """Write ``<path>.txt``, ``<path>.pgm`` and ``<path>.meta`` for a 2D array.

    The text file has one line per array row with space separated values at
    full precision. The PGM (P5, 8 bit) maps ``[min, max]`` linearly onto
    ``[0, 255]``; a constant image maps to all zeros. The sidecar records the
    mapping. Returns the written paths.
    """
    arr = np.asarray(image, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError("raster export needs a 1D or 2D array")
    if not np.all(np.isfinite(arr)):
        raise ValueError("raster export needs finite values")
    base = Path(path)
    if base.suffix in (".txt", ".pgm", ".meta"):
        base = base.with_suffix("")
    txt, pgm, meta = (base.with_name(base.name + ext) for ext in (".txt", ".pgm", ".meta"))

    with open(txt, "w", encoding="ascii", newline="\n") as fh:
        for row in arr:
            fh.write(" ".join(_fmt(v) for v in row) + "\n")

    lo, hi = float(arr.min()), float(arr.max())
    span = hi - lo
    if span > 0:
        pix = np.rint((arr - lo) / span * 255.0).astype(np.uint8)
    else:
        pix = np.zeros(arr.shape, dtype=np.uint8)
    h, w = arr.shape
    with open(pgm, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())

    with open(meta, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"width = {w}\nheight = {h}\n")
        fh.write(f"min = {_fmt(lo)}\nmax = {_fmt(hi)}\n")
        fh.write("mapping = pixel = round(255 * (value - min) / (max - min))\n")
        if span > 0:
            fh.write("dynamic_range = nonzero\n")
        else:
            fh.write("dynamic_range = zero (constant image written as all-zero pixels)\n")
    return {"txt": txt, "pgm": pgm, "meta": meta}


def read_raster_text(path) -> np.ndarray:
    with open(path, encoding="ascii") as fh:
        return np.array([[float(v) for v in line.split()] for line in fh if line.strip()])


@dataclass
class _SourceRun:
    index: int
    F: TransferSeries
    F0: TransferSeries
    blocks: dict
    errors_data: np.ndarray
    errors_background: np.ndarray
    radial: tuple | None


def _propagate(cfg: ExperimentConfig, op, g, steps, substeps, integrated=False):
    if cfg.propagator == "spectral":
        return propagate_spectral(op, g, steps, cfg.tau, integrated=integrated)
    return propagate_leapfrog(op, g, steps, cfg.tau, substeps, integrated=integrated)


def _rel_errors(grid, approx, true):
    out = np.empty(approx.shape[0])
    for k in range(approx.shape[0]):
        nt = grid.norm(true[k])
        out[k] = grid.norm(approx[k] - true[k]) / nt if nt > 0 else float("nan")
    return out


def _run_source(cfg, j, src, A0, A, image_grid, substeps, modes):
    grid = A0.grid
    n = cfg.n
    g = source_pulse(A0, PulseSpec(cfg.sigma, cfg.omega0, src))
    u = _propagate(cfg, A, g, 2 * n - 1, substeps)
    u0 = _propagate(cfg, A0, g, 2 * n - 1, substeps)
    F = record_transfer(u, g, j, j)
    F0 = record_transfer(u0, g, j, j)
    if cfg.noise_level > 0:
        rng = np.random.default_rng([cfg.seed, j])
        scale = cfg.noise_level * np.max(np.abs(F.samples))
        F = TransferSeries(j, j, F.tau, F.samples + scale * rng.standard_normal(len(F)))
    data = MonostaticData([F])
    repair = cfg.repair_tol
    if repair is None and cfg.noise_level > 0:
        repair = 1e-12
    u_true = SnapshotSet(grid, cfg.tau, u.values[:n])
    u_bg = SnapshotSet(grid, cfg.tau, u0.values[:n])
    u_hat, U0, U = rom_internal_solutions(u_bg, F0, data.series(j, j), repair)

    blocks = {}
    if modes:
        s0 = _propagate(cfg, A0, g, n, substeps, integrated=True)
        internal = {"born": u_bg, "lsl": u_hat.as_snapshots(), "cheated": u_true}
        for mode in modes:
            blocks[mode] = assemble_rows([s0], [internal[mode]], image_grid).kernel
    radial = None
    if cfg.radial_bins:
        center = grid.centers()[grid.flat_index(src)]
        Ut = cholesky_upper(mass_from_siso(F))
        radial = radial_ratio(u_true, u_bg, Ut, U0, center, cfg.radial_bins)
    return _SourceRun(j, F, F0, blocks,
                      _rel_errors(grid, u_hat.values, u_true.values),
                      _rel_errors(grid, u_bg.values, u_true.values), radial)


def _output_dir(cfg: ExperimentConfig, out_dir=None) -> Path:
    if out_dir is not None:
        return Path(out_dir)
    env = os.environ.get(OUTPUT_ENV)
    if env:
        return Path(env)
    return Path(cfg.output_dir)


def _write_transfer(path: Path, F: TransferSeries, F0: TransferSeries):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(f"# source {F.source} receiver {F.receiver} tau {_fmt(F.tau)}\n")
        fh.write("# k time F F0\n")
        for k, (a, b) in enumerate(zip(F.samples, F0.samples)):
            fh.write(f"{k} {_fmt(k * F.tau)} {_fmt(a)} {_fmt(b)}\n")


def run_experiment(cfg: ExperimentConfig, out_dir=None, modes=None, seed=None,
                   write: bool = True):
    """Simulate monostatic data, build per-source ROMs and invert.

    Returns ``(report, images, files)`` where ``images`` maps mode to
    ``ReflectivityImage`` and ``files`` lists the written paths. ``modes``
    and ``seed`` override the configuration.
    """
    if modes is not None:
        cfg = cfg.replace(modes=tuple(modes))
    if seed is not None:
        cfg = cfg.replace(seed=int(seed))
    grid = build_grid(cfg.extents, cfg.cells)
    image_grid = build_grid(cfg.extents, cfg.image_cells)
    q = true_medium(grid, cfg.inclusions)
    A0 = assemble_operator(grid)
    A = assemble_operator(grid, q)
    substeps = None
    if cfg.propagator == "leapfrog":
        substeps = cfg.substeps or substeps_for_cfl(A, cfg.tau, cfg.cfl)
    log.info("scenario %s: %d sources, n=%d, tau=%.4g, substeps=%s", cfg.scenario,
             len(cfg.sources), cfg.n, cfg.tau, substeps)

    def job(item):
        j, src = item
        return _run_source(cfg, j, src, A0, A, image_grid, substeps, cfg.modes)

    items = list(enumerate(cfg.sources))
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            runs = list(pool.map(job, items))
    else:
        runs = [job(it) for it in items]

    data = MonostaticData([r.F for r in runs])
    background = MonostaticData([r.F0 for r in runs])
    rhs = rhs_vector([background.series(j, j) for j in data.sources()],
                     [data.series(j, j) for j in data.sources()], cfg.n)
    q_image = (restriction_matrix(grid, image_grid) @ q) / image_grid.cell_volume
    shadow = region_mask(image_grid, cfg.shadow_regions) if cfg.shadow_regions else None
    support = region_mask(image_grid, cfg.support_regions) if cfg.support_regions else None

    report = MetricsReport(cfg.scenario, degenerate=not np.any(rhs))
    images = {}
    for mode in cfg.modes:
        system = KernelSystem(np.vstack([r.blocks[mode] for r in runs]), rhs, image_grid,
                              len(runs), cfg.n, mode)
        image = solve_reflectivity(system, cfg.lam, nonneg=cfg.nonneg)
        images[mode] = image
        stats = compare_images(image, q_image, shadow, support)
        fit = misfit(system, image) if np.any(rhs) else float("nan")
        report.modes[mode] = {"misfit": fit, "image_error": stats["rel_l2"],
                              "ncc": stats["ncc"], "ghost_ratio": stats["ghost_ratio"],
                              "degenerate": not np.any(rhs)}
    report.internal_errors = {
        "data": {str(r.index): r.errors_data for r in runs},
        "background": {str(r.index): r.errors_background for r in runs},
    }
    if cfg.radial_bins:
        start = int(cfg.radial_from * cfg.n)
        per_source = {}
        for r in runs:
            ortho, raw = r.radial
            ratio = float(np.linalg.norm(ortho[start:]) / np.linalg.norm(raw[start:]))
            per_source[str(r.index)] = {"ratio": ratio, "orthogonalized": ortho, "raw": raw}
        report.radial = {"from_step": start, "bins": cfg.radial_bins, "sources": per_source}

    files = []
    if write:
        out = _output_dir(cfg, out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for mode, image in images.items():
            arr = image.as_array()
            arr = arr.T if arr.ndim == 2 else arr[None, :]
            files += list(export_raster(arr, out / f"image_{mode}").values())
        truth = q_image.reshape(image_grid.shape)
        files += list(export_raster(truth.T if truth.ndim == 2 else truth[None, :],
                                    out / "truth").values())
        for r in runs:
            path = out / f"transfer_j{r.index}.txt"
            _write_transfer(path, r.F, r.F0)
            files.append(path)
        path = out / "metrics.json"
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        files.append(path)
    return report, images, files
