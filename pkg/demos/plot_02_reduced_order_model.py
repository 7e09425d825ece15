"""
Internal solutions from boundary data
=====================================

The measured transfer series alone gives the Gram matrix of the unknown
snapshots. Its Cholesky factor, combined with the background factor, maps
background snapshots to data-generated approximations of the true internal
wavefield. We compare them against the true snapshots.
"""
# %%
import numpy as np

from lslrom import fixture_path, load_config, run_experiment
from lslrom.rom import cholesky_upper, gram_matrix, mass_from_siso
from lslrom.wave_sim import (PulseSpec, assemble_operator, build_grid, propagate_spectral,
                             record_transfer, source_pulse)

grid = build_grid([1.0], [101])
x = grid.centers()[:, 0]
A = assemble_operator(grid, 150.0 * (1 + np.cos(3 * np.pi * x)))
A0 = assemble_operator(grid)
g = source_pulse(A0, PulseSpec(15.0))
n, tau = 16, np.pi / 60
u = propagate_spectral(A, g, 2 * n - 1, tau)

# %%
# Mass matrix from data against the explicit Gram matrix.
M = mass_from_siso(record_transfer(u, g))
G = gram_matrix(grid, u.values[:n])
print(f"mass matrix mismatch: {np.linalg.norm(M.entries - G) / np.linalg.norm(G):.1e}")
U = cholesky_upper(M)
print(f"condition number of M: {np.linalg.cond(M.entries):.2e}")

# %%
# The bundled one-bump fixture uses a modulated pulse. Late in time the
# background snapshots have drifted far from the truth while the data
# generated ones have not.
cfg = load_config(fixture_path("internal_1d.toml"))
report, _, _ = run_experiment(cfg, modes=(), write=False)
err_hat = np.asarray(report.internal_errors["data"]["0"])
err_bg = np.asarray(report.internal_errors["background"]["0"])
for k in range(0, cfg.n, 5):
    print(f"k = {k:2d}  relL2(u_hat, u) = {err_hat[k]:.2e}   relL2(u0, u) = {err_bg[k]:.2e}")

# %%
try:
    import matplotlib.pyplot as plt
except ImportError:
    plt = None
if plt is not None:
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.semilogy(err_hat, "o-", label="data generated")
    ax.semilogy(err_bg, "s-", label="background")
    ax.set_xlabel("time step k")
    ax.set_ylabel("relative error")
    ax.legend()
    fig.savefig("internal_solutions.png", dpi=120)
