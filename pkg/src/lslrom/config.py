"""Experiment configuration: a flat TOML file with a versioned schema.

Example (2D imaging)::

    schema_version = 1
    scenario = "two_reflectors"
    extents = [150.0, 40.0]
    cells = [300, 80]
    image_cells = [150, 40]
    sigma = 0.5
    n = 56
    source_count = 9
    modes = ["born", "lsl", "cheated"]
    lam = 0.1
    propagator = "leapfrog"

    [[inclusions]]
    shape = "rect"
    bounds = [55.0, 95.0, 10.0, 12.0]
    amplitude = 0.3

Keys
----
schema_version   must be 1
scenario         free-form name
extents, cells   forward grid (1 or 2 axes)
image_cells      image grid on the same box (default: ``cells``)
sigma, omega0    pulse parameters (``omega0`` default 0)
tau              sample step (default ``pi / (omega0 + 4 sigma)``)
n                mass matrix order; ``2n - 1`` samples are recorded
sources          list of source cells (int in 1D, [ix, iy] in 2D)
source_count     alternative to ``sources``: uniform along the top edge
                 (axis-1 index 0 in 2D; cell 0 in 1D)
inclusions       array of tables: ``shape = "rect"`` with ``bounds``
                 ``[x0, x1(, y0, y1)]``, or ``shape = "bump"`` with
                 ``center`` and ``radius`` (cos^2 profile); ``amplitude``
modes            subset of born, lsl, cheated
lam, nonneg      Tikhonov weight (relative) and optional q >= 0 projection
propagator       "spectral" or "leapfrog"; ``substeps`` or ``cfl`` (0.5)
noise_level      relative Gaussian noise on measured data; ``seed``
repair_tol       mass matrix spectral repair floor (used when noise_level > 0
                 or when given explicitly)
shadow_regions   rectangles where ghost energy is measured
support_regions  rectangles of the true support (default: cells with q != 0)
radial_bins      enables the radial-average metric; ``radial_from`` is the
                 fraction of steps skipped before it is evaluated (0.5)
output_dir       default output directory
allow_inverse_crime  permit image grids as fine as the forward grid
workers          threads used for the per-source pipelines
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .exceptions import ConfigurationError

__all__ = ["Inclusion", "ExperimentConfig", "load_config", "parse_config"]

SCHEMA_VERSION = 1
MODES = ("born", "lsl", "cheated")


@dataclass(frozen=True)
class Inclusion:
    shape: str
    amplitude: float
    bounds: tuple[float, ...] = ()
    center: tuple[float, ...] = ()
    radius: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    extents: tuple[float, ...]
    cells: tuple[int, ...]
    image_cells: tuple[int, ...]
    sigma: float
    omega0: float
    tau: float
    n: int
    sources: tuple
    inclusions: tuple[Inclusion, ...]
    modes: tuple[str, ...]
    lam: float = 1e-2
    nonneg: bool = False
    propagator: str = "spectral"
    substeps: int | None = None
    cfl: float = 0.5
    noise_level: float = 0.0
    seed: int = 0
    repair_tol: float | None = None
    shadow_regions: tuple = ()
    support_regions: tuple = ()
    radial_bins: int | None = None
    radial_from: float = 0.5
    output_dir: str = "lslrom_output"
    allow_inverse_crime: bool = False
    workers: int = 1
    extra: dict = field(default_factory=dict, repr=False)

    @property
    def dimension(self) -> int:
        return len(self.cells)

    def replace(self, **changes) -> "ExperimentConfig":
        from dataclasses import replace
        return replace(self, **changes)


_KNOWN = {
    "schema_version", "scenario", "extents", "cells", "image_cells", "sigma", "omega0",
    "tau", "n", "sources", "source_count", "inclusions", "modes", "lam", "nonneg",
    "propagator", "substeps", "cfl", "noise_level", "seed", "repair_tol",
    "shadow_regions", "support_regions", "radial_bins", "radial_from", "output_dir",
    "allow_inverse_crime", "workers",
}


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: invalid TOML: {exc}") from exc
    return parse_config(raw)


def _number(raw, key, problems, default=None, positive=False, nonneg=False):
    if key not in raw:
        if default is None:
            problems.append(f"{key}: required")
        return default
    val = raw[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        problems.append(f"{key}: expected a finite number, got {val!r}")
        return default
    if positive and not val > 0:
        problems.append(f"{key}: must be positive, got {val}")
    if nonneg and not val >= 0:
        problems.append(f"{key}: must be non-negative, got {val}")
    return float(val)


def _int_list(raw, key, problems, required=True):
    if key not in raw:
        if required:
            problems.append(f"{key}: required")
        return None
    val = raw[key]
    if not isinstance(val, list) or not val or not all(
            isinstance(v, int) and not isinstance(v, bool) for v in val):
        problems.append(f"{key}: expected a non-empty list of integers, got {val!r}")
        return None
    return tuple(val)


def _rects(raw, key, dim, problems):
    val = raw.get(key, [])
    out = []
    if not isinstance(val, list):
        problems.append(f"{key}: expected a list of rectangles")
        return ()
    for i, r in enumerate(val):
        if (not isinstance(r, list) or len(r) != 2 * dim
                or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in r)):
            problems.append(f"{key}[{i}]: expected {2 * dim} numbers [x0, x1(, y0, y1)]")
            continue
        out.append(tuple(float(v) for v in r))
    return tuple(out)


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a parsed TOML mapping; every problem is reported together."""
    problems = []
    unknown = sorted(set(raw) - _KNOWN)
    problems += [f"{k}: unknown key" for k in unknown]
    if raw.get("schema_version") != SCHEMA_VERSION:
        problems.append(f"schema_version: expected {SCHEMA_VERSION}, got {raw.get('schema_version')!r}")
    scenario = raw.get("scenario")
    if not isinstance(scenario, str) or not scenario:
        problems.append("scenario: required non-empty string")

    cells = _int_list(raw, "cells", problems)
    extents = raw.get("extents")
    if (not isinstance(extents, list) or not extents
            or not all(isinstance(e, (int, float)) and not isinstance(e, bool) for e in extents)):
        problems.append(f"extents: expected a list of numbers, got {extents!r}")
        extents = None
    else:
        extents = tuple(float(e) for e in extents)
        problems += [f"extents: {e} must be positive" for e in extents if not e > 0]
    dim = len(cells) if cells else 1
    if cells:
        if dim not in (1, 2):
            problems.append(f"cells: 1 or 2 axes supported, got {dim}")
        problems += [f"cells: {c} must be at least 2" for c in cells if c < 2]
        if extents and len(extents) != dim:
            problems.append("extents and cells differ in length")
    image_cells = _int_list(raw, "image_cells", problems, required=False) or cells
    if cells and image_cells:
        if len(image_cells) != dim:
            problems.append("image_cells and cells differ in length")
        else:
            for fc, ic in zip(cells, image_cells):
                if ic < 1 or fc % ic:
                    problems.append(f"image_cells: {image_cells} must divide cells {cells}")
                    break
            else:
                if not raw.get("allow_inverse_crime", False) and any(
                        fc <= ic for fc, ic in zip(cells, image_cells)):
                    problems.append(
                        "image_cells: forward grid must be strictly finer than the image grid "
                        "(set allow_inverse_crime = true to override)")

    sigma = _number(raw, "sigma", problems, positive=True)
    omega0 = _number(raw, "omega0", problems, default=0.0, nonneg=True)
    if "tau" in raw:
        tau = _number(raw, "tau", problems, positive=True)
    elif sigma and sigma > 0:
        tau = math.pi / (omega0 + 4.0 * sigma)
    else:
        tau = None
    n = raw.get("n")
    if not isinstance(n, int) or isinstance(n, bool) or n < 2:
        problems.append(f"n: expected an integer >= 2, got {n!r}")

    sources = []
    if "sources" in raw and "source_count" in raw:
        problems.append("sources and source_count are mutually exclusive")
    if "sources" in raw:
        val = raw["sources"]
        if not isinstance(val, list) or not val:
            problems.append("sources: expected a non-empty list")
        else:
            for i, s in enumerate(val):
                idx = (s,) if isinstance(s, int) and not isinstance(s, bool) else s
                if (not isinstance(idx, (list, tuple)) or len(idx) != dim
                        or not all(isinstance(v, int) and not isinstance(v, bool) for v in idx)):
                    problems.append(f"sources[{i}]: expected {dim} integer cell indices")
                elif cells and any(not 0 <= v < c for v, c in zip(idx, cells)):
                    problems.append(f"sources[{i}]: cell {list(idx)} outside the grid")
                else:
                    sources.append(tuple(idx))
    elif "source_count" in raw:
        m = raw["source_count"]
        if not isinstance(m, int) or isinstance(m, bool) or m < 1:
            problems.append(f"source_count: expected a positive integer, got {m!r}")
        elif cells:
            if dim == 1:
                if m != 1:
                    problems.append("source_count: a 1D grid has a single boundary source")
                sources = [(0,)]
            else:
                xs = [round((i + 1) * cells[0] / (m + 1) - 0.5) for i in range(m)]
                sources = [(x, 0) for x in xs]
    else:
        problems.append("sources or source_count: required")

    inclusions = []
    inc_raw = raw.get("inclusions", [])
    if not isinstance(inc_raw, list):
        problems.append("inclusions: expected an array of tables")
        inc_raw = []
    for i, inc in enumerate(inc_raw):
        if not isinstance(inc, dict):
            problems.append(f"inclusions[{i}]: expected a table")
            continue
        bad = sorted(set(inc) - {"shape", "amplitude", "bounds", "center", "radius"})
        problems += [f"inclusions[{i}].{k}: unknown key" for k in bad]
        amp = _number(inc, "amplitude", problems, default=0.0)
        shape = inc.get("shape")
        if shape == "rect":
            b = inc.get("bounds")
            if not isinstance(b, list) or len(b) != 2 * dim:
                problems.append(f"inclusions[{i}].bounds: expected {2 * dim} numbers")
                continue
            inclusions.append(Inclusion("rect", amp, bounds=tuple(float(v) for v in b)))
        elif shape == "bump":
            c = inc.get("center")
            r = inc.get("radius")
            if not isinstance(c, list) or len(c) != dim:
                problems.append(f"inclusions[{i}].center: expected {dim} numbers")
                continue
            if not isinstance(r, (int, float)) or not r > 0:
                problems.append(f"inclusions[{i}].radius: expected a positive number")
                continue
            inclusions.append(Inclusion("bump", amp, center=tuple(float(v) for v in c),
                                        radius=float(r)))
        else:
            problems.append(f"inclusions[{i}].shape: expected 'rect' or 'bump', got {shape!r}")

    modes = raw.get("modes", list(MODES))
    if not isinstance(modes, list) or not modes or any(m not in MODES for m in modes):
        problems.append(f"modes: expected a non-empty subset of {list(MODES)}, got {modes!r}")
        modes = []
    lam = _number(raw, "lam", problems, default=1e-2, nonneg=True)
    nonneg = raw.get("nonneg", False)
    if not isinstance(nonneg, bool):
        problems.append("nonneg: expected true or false")

    propagator = raw.get("propagator", "spectral")
    if propagator not in ("spectral", "leapfrog"):
        problems.append(f"propagator: expected 'spectral' or 'leapfrog', got {propagator!r}")
    substeps = raw.get("substeps")
    if substeps is not None and (not isinstance(substeps, int) or substeps < 1):
        problems.append(f"substeps: expected a positive integer, got {substeps!r}")
    cfl = _number(raw, "cfl", problems, default=0.5, positive=True)
    noise = _number(raw, "noise_level", problems, default=0.0, nonneg=True)
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        problems.append(f"seed: expected a non-negative integer, got {seed!r}")
    repair = raw.get("repair_tol")
    if repair is not None:
        repair = _number(raw, "repair_tol", problems, positive=True)

    shadow = _rects(raw, "shadow_regions", dim, problems)
    support = _rects(raw, "support_regions", dim, problems)
    for key, rects in (("shadow_regions", shadow), ("support_regions", support)):
        for r in rects:
            if extents and any(r[2 * a] < 0 or r[2 * a + 1] > extents[a] or r[2 * a] >= r[2 * a + 1]
                               for a in range(min(dim, len(extents)))):
                problems.append(f"{key}: rectangle {list(r)} is empty or outside the domain")
    radial_bins = raw.get("radial_bins")
    if radial_bins is not None and (not isinstance(radial_bins, int) or radial_bins < 1):
        problems.append(f"radial_bins: expected a positive integer, got {radial_bins!r}")
    radial_from = _number(raw, "radial_from", problems, default=0.5, nonneg=True)
    if radial_from is not None and radial_from >= 1:
        problems.append("radial_from: must be below 1")
    output_dir = raw.get("output_dir", "lslrom_output")
    if not isinstance(output_dir, str):
        problems.append("output_dir: expected a string")
    allow = raw.get("allow_inverse_crime", False)
    if not isinstance(allow, bool):
        problems.append("allow_inverse_crime: expected true or false")
    workers = raw.get("workers", 1)
    if not isinstance(workers, int) or isinstance(workers, bool) or workers < 1:
        problems.append(f"workers: expected a positive integer, got {workers!r}")

    if problems:
        raise ConfigurationError(f"{len(problems)} configuration problem(s)", problems)
    return ExperimentConfig(
        scenario=scenario, extents=extents, cells=cells, image_cells=tuple(image_cells),
        sigma=sigma, omega0=omega0, tau=tau, n=n, sources=tuple(sources),
        inclusions=tuple(inclusions), modes=tuple(modes), lam=lam, nonneg=nonneg,
        propagator=propagator, substeps=substeps, cfl=cfl, noise_level=noise, seed=seed,
        repair_tol=repair, shadow_regions=shadow, support_regions=support,
        radial_bins=radial_bins, radial_from=radial_from, output_dir=output_dir,
        allow_inverse_crime=allow, workers=workers)
