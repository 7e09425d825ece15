import json
import math

import numpy as np
import pytest

from lslrom import fixture_path
from lslrom.cli import main
from lslrom.config import load_config, parse_config
from lslrom.exceptions import ConfigurationError
from lslrom.experiments import (OUTPUT_ENV, MonostaticData, compare_images, export_raster,
                                radial_average, read_raster_text, region_mask, run_experiment,
                                true_medium)
from lslrom.wave_sim import TransferSeries, build_grid

TINY_2D = """
schema_version = 1
scenario = "tiny"
extents = [20.0, 10.0]
cells = [40, 20]
image_cells = [20, 10]
sigma = 0.5
n = 8
source_count = 2
modes = ["born", "lsl"]
propagator = "leapfrog"
lam = 0.1
shadow_regions = [[5.0, 15.0, 6.0, 9.0]]
{extra}
"""

BUMP = """
[[inclusions]]
shape = "bump"
center = [10.0, 4.0]
radius = 1.5
amplitude = 0.3
"""


def write_cfg(tmp_path, text, name="cfg.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


# -- configuration ---------------------------------------------------------

def test_bundled_fixtures_validate():
    for name in ("internal_1d.toml", "monostatic_2d.toml", "one_scatterer_2d.toml"):
        cfg = load_config(fixture_path(name))
        # shipped fixtures never commit the inverse crime
        assert all(f > i for f, i in zip(cfg.cells, cfg.image_cells))


def test_source_count_places_sources_on_top_edge():
    cfg = load_config(fixture_path("monostatic_2d.toml"))
    assert len(cfg.sources) == 9
    assert all(s[1] == 0 for s in cfg.sources)
    xs = [s[0] for s in cfg.sources]
    assert xs == sorted(xs) and np.ptp(np.diff(xs)) <= 1


def test_config_reports_every_problem():
    raw = {"schema_version": 2, "scenario": "", "extents": [1.0], "cells": [1],
           "sigma": -1.0, "n": 1, "sources": [5], "modes": ["ghost"], "bogus": 3}
    with pytest.raises(ConfigurationError) as info:
        parse_config(raw)
    text = "\n".join(info.value.problems)
    for key in ("schema_version", "scenario", "cells", "sigma", "n:", "modes", "bogus"):
        assert key in text


def test_config_inverse_crime_guard():
    raw = {"schema_version": 1, "scenario": "x", "extents": [1.0], "cells": [10],
           "image_cells": [10], "sigma": 5.0, "n": 3, "sources": [0]}
    with pytest.raises(ConfigurationError):
        parse_config(raw)
    cfg = parse_config(dict(raw, allow_inverse_crime=True))
    assert cfg.image_cells == (10,)


def test_config_default_tau():
    raw = {"schema_version": 1, "scenario": "x", "extents": [1.0], "cells": [10],
           "image_cells": [5], "sigma": 5.0, "omega0": 2.0, "n": 3, "sources": [0]}
    assert parse_config(raw).tau == pytest.approx(math.pi / 22.0)


def test_config_source_outside_grid():
    raw = {"schema_version": 1, "scenario": "x", "extents": [1.0, 1.0], "cells": [10, 10],
           "image_cells": [5, 5], "sigma": 5.0, "n": 3, "sources": [[3, 10]]}
    with pytest.raises(ConfigurationError, match="1 configuration problem"):
        parse_config(raw)


def test_invalid_toml(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(write_cfg(tmp_path, "schema_version = = 1"))


# -- media and regions -----------------------------------------------------

def test_true_medium_rect_and_bump():
    cfg = parse_config({"schema_version": 1, "scenario": "x", "extents": [4.0, 2.0],
                        "cells": [8, 4], "image_cells": [4, 2], "sigma": 1.0, "n": 2,
                        "sources": [[0, 0]],
                        "inclusions": [{"shape": "rect", "bounds": [0.0, 1.0, 0.0, 1.0],
                                        "amplitude": 2.0},
                                       {"shape": "bump", "center": [3.0, 1.0], "radius": 0.1,
                                        "amplitude": 1.0}]})
    grid = build_grid(cfg.extents, cfg.cells)
    q = true_medium(grid, cfg.inclusions)
    assert np.sum(q == 2.0) == 4
    assert q.max() == 2.0 and q.min() == 0.0


def test_region_mask_rejects_outside():
    grid = build_grid([4.0, 2.0], [4, 2])
    assert region_mask(grid, [[0.0, 2.0, 0.0, 1.0]]).sum() == 2
    with pytest.raises(ValueError):
        region_mask(grid, [[0.0, 5.0, 0.0, 1.0]])


# -- radial averages -------------------------------------------------------

def test_radial_average_constant():
    grid = build_grid([10.0, 6.0], [20, 12])
    ra = radial_average(np.full(grid.size, 3.5), grid, [5.0, 0.0], 15)
    assert np.allclose(ra[~np.isnan(ra)], 3.5)


def test_radial_average_of_distance():
    grid = build_grid([40.0, 40.0], [200, 200])
    center = np.array([20.0, 20.0])
    d = np.linalg.norm(grid.centers() - center, axis=1)
    n_bins = 25
    ra = radial_average(d, grid, center, n_bins)
    width = d.max() / n_bins
    mids = (np.arange(n_bins) + 0.5) * width
    ok = ~np.isnan(ra)
    assert np.all(np.abs(ra[ok] - mids[ok]) <= 0.5 * width)


def test_radial_average_empty_bins_absent():
    grid = build_grid([2.0], [2])
    ra = radial_average(np.array([1.0, 2.0]), grid, [0.5], 10)
    assert np.isnan(ra).any() and not np.isnan(ra[0])


def test_radial_average_center_outside():
    grid = build_grid([2.0, 2.0], [4, 4])
    with pytest.raises(ValueError):
        radial_average(np.zeros(16), grid, [3.0, 1.0], 4)


# -- raster export ---------------------------------------------------------

def test_export_two_by_two(tmp_path):
    paths = export_raster(np.array([[0.0, 1.0], [2.0, 3.0]]), tmp_path / "img")
    assert paths["txt"].read_text() == "0.0 1.0\n2.0 3.0\n"
    data = paths["pgm"].read_bytes()
    assert data.startswith(b"P5\n2 2\n255\n")
    assert list(data[-4:]) == [0, 85, 170, 255]
    assert "dynamic_range = nonzero" in paths["meta"].read_text()


def test_export_constant_image(tmp_path):
    paths = export_raster(np.full((3, 2), 7.0), tmp_path / "flat")
    assert set(paths["pgm"].read_bytes()[-6:]) == {0}
    assert "dynamic_range = zero" in paths["meta"].read_text()


def test_export_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    arr = rng.standard_normal((5, 7)) * 10.0 ** rng.integers(-30, 30, (5, 7))
    paths = export_raster(arr, tmp_path / "rt")
    assert np.array_equal(read_raster_text(paths["txt"]), arr)


def test_export_rejects_non_finite(tmp_path):
    with pytest.raises(ValueError):
        export_raster(np.array([[np.nan]]), tmp_path / "bad")


def test_export_unwritable(tmp_path):
    with pytest.raises(OSError):
        export_raster(np.zeros((2, 2)), tmp_path / "missing" / "img")


# -- image comparison ------------------------------------------------------

def test_compare_identical():
    truth = np.zeros(20)
    truth[5:9] = 0.3
    stats = compare_images(truth, truth, shadow_region=np.arange(20) > 15)
    assert stats["rel_l2"] == 0.0
    assert stats["ncc"] == pytest.approx(1.0)
    assert stats["ghost_ratio"] == 0.0


def test_compare_zero_image():
    truth = np.zeros(20)
    truth[5:9] = 0.3
    stats = compare_images(np.zeros(20), truth, shadow_region=np.arange(20) > 15)
    assert stats["rel_l2"] == 1.0
    assert math.isnan(stats["ghost_ratio"])


def test_compare_shape_mismatch():
    with pytest.raises(ValueError):
        compare_images(np.zeros(3), np.zeros(4))


# -- monostatic discipline -------------------------------------------------

def test_monostatic_data_forbids_off_diagonal():
    s = TransferSeries(2, 2, 0.1, np.ones(3))
    data = MonostaticData([s])
    assert data.series(2, 2) is s
    with pytest.raises(KeyError):
        data.series(1, 2)
    with pytest.raises(ValueError):
        MonostaticData([TransferSeries(0, 1, 0.1, np.ones(3))])


# -- runner ----------------------------------------------------------------

def test_zero_medium_gives_zero_images(tmp_path):
    cfg = load_config(write_cfg(tmp_path, TINY_2D.format(extra="")))
    report, images, _ = run_experiment(cfg, out_dir=tmp_path / "out")
    assert report.degenerate
    for mode in ("born", "lsl"):
        assert np.all(images[mode].values == 0)
        assert report.modes[mode]["degenerate"]
    metrics = json.loads((tmp_path / "out" / "metrics.json").read_text())
    assert metrics["modes"]["born"]["misfit"] is None


def test_outputs_written(tmp_path):
    cfg = load_config(write_cfg(tmp_path, TINY_2D.format(extra=BUMP)))
    report, _, files = run_experiment(cfg, out_dir=tmp_path / "out")
    names = {p.name for p in files}
    for mode in ("born", "lsl"):
        assert {f"image_{mode}.txt", f"image_{mode}.pgm", f"image_{mode}.meta"} <= names
    assert {"transfer_j0.txt", "transfer_j1.txt", "metrics.json"} <= names
    img = read_raster_text(tmp_path / "out" / "image_lsl.txt")
    assert img.shape == (10, 20)
    rows = np.loadtxt(tmp_path / "out" / "transfer_j0.txt")
    assert rows.shape == (2 * cfg.n - 1, 4)


def test_runs_are_bitwise_deterministic(tmp_path):
    text = TINY_2D.format(extra="noise_level = 1e-4\nseed = 3\n" + BUMP)
    cfg = load_config(write_cfg(tmp_path, text))
    run_experiment(cfg, out_dir=tmp_path / "a")
    run_experiment(cfg.replace(workers=2), out_dir=tmp_path / "b")
    for name in ("image_born.txt", "image_lsl.txt", "metrics.json", "transfer_j1.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_seed_changes_noisy_data(tmp_path):
    text = TINY_2D.format(extra="noise_level = 1e-3\n" + BUMP)
    cfg = load_config(write_cfg(tmp_path, text))
    run_experiment(cfg, out_dir=tmp_path / "a", seed=1)
    run_experiment(cfg, out_dir=tmp_path / "b", seed=2)
    a = (tmp_path / "a" / "transfer_j0.txt").read_text()
    assert a != (tmp_path / "b" / "transfer_j0.txt").read_text()


# -- CLI -------------------------------------------------------------------

def test_cli_validate(tmp_path, capsys):
    assert main(["validate", str(fixture_path("monostatic_2d.toml"))]) == 0
    bad = write_cfg(tmp_path, 'schema_version = 1\nscenario = "x"\n', "bad.toml")
    assert main(["validate", str(bad)]) == 2
    assert "required" in capsys.readouterr().err


def test_cli_run_with_overrides(tmp_path, capsys):
    cfg = write_cfg(tmp_path, TINY_2D.format(extra=BUMP))
    code = main(["run", str(cfg), "--out", str(tmp_path / "o"), "--modes", "lsl",
                 "--seed", "4"])
    assert code == 0
    assert (tmp_path / "o" / "image_lsl.txt").exists()
    assert not (tmp_path / "o" / "image_born.txt").exists()


def test_cli_output_env(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path, TINY_2D.format(extra=BUMP))
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env_out"))
    assert main(["run", str(cfg), "--modes", "born"]) == 0
    assert (tmp_path / "env_out" / "metrics.json").exists()


def test_cli_numerical_failure(tmp_path):
    cfg = write_cfg(tmp_path, TINY_2D.format(extra="substeps = 1\n" + BUMP))
    assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 3


def test_cli_rejects_bad_modes(tmp_path):
    with pytest.raises(SystemExit):
        main(["run", "x.toml", "--modes", "born,foo"])
