import numpy as np
import pytest

from lslrom.wave_sim import (PulseSpec, assemble_operator, build_grid, propagate_spectral,
                             record_transfer, source_pulse)


def smooth_random_q(grid, rng, amplitude=200.0, modes=6):
    """Non-negative smooth potential from a few random cosine modes."""
    x = grid.centers()[:, 0] / grid.extents[0]
    q = np.zeros(grid.size)
    for m in range(1, modes + 1):
        q += rng.standard_normal() / m * np.cos(m * np.pi * x)
    q -= q.min()
    return amplitude * q / q.max()


@pytest.fixture(scope="session")
def siso_1d():
    """1D, 101 cells, random smooth q, n = 16, spectral propagation."""
    rng = np.random.default_rng(20240611)
    grid = build_grid([1.0], [101])
    q = smooth_random_q(grid, rng)
    A0 = assemble_operator(grid)
    A = assemble_operator(grid, q)
    pulse = PulseSpec(sigma=15.0, omega0=0.0, source=0)
    g = source_pulse(A0, pulse)
    n = 16
    tau = np.pi / (4.0 * pulse.sigma)
    u = propagate_spectral(A, g, 2 * n - 1, tau)
    u0 = propagate_spectral(A0, g, 2 * n - 1, tau)
    return dict(grid=grid, q=q, A0=A0, A=A, g=g, n=n, tau=tau, u=u, u0=u0,
                F=record_transfer(u, g), F0=record_transfer(u0, g))
