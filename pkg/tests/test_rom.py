import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lslrom.exceptions import DataInconsistencyError
from lslrom.rom import (MassMatrix, cholesky_upper, gram_matrix, internal_solutions,
                        mass_from_mimo, mass_from_siso, orthogonalized_basis,
                        rom_internal_solutions, spectral_repair)
from lslrom.wave_sim import (PulseSpec, SnapshotSet, TransferSeries, assemble_operator,
                             build_grid, propagate_spectral, record_transfer, source_pulse)


def series(samples):
    return TransferSeries(0, 0, 0.1, np.asarray(samples, dtype=float))


def rel_fro(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def gram_schmidt(grid, values):
    """Sequential modified Gram-Schmidt in the weighted inner product."""
    out = []
    for u in values:
        v = u.copy()
        for _ in range(2):
            for w in out:
                v -= grid.inner(v, w) * w
        out.append(v / grid.norm(v))
    return np.array(out)


# -- mass matrices ---------------------------------------------------------

def test_mass_from_siso_hand_example():
    M = mass_from_siso(series([1.0, 0.5, 0.25]))
    assert np.allclose(M.entries, [[1.0, 0.5], [0.5, 0.625]])


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=1, max_size=15).filter(
    lambda s: len(s) % 2 == 1))
def test_mass_first_entry_and_symmetry(samples):
    M = mass_from_siso(series(samples)).entries
    assert M[0, 0] == samples[0]
    assert np.array_equal(M, M.T)


def test_mass_rejects_even_length():
    with pytest.raises(ValueError):
        mass_from_siso(series([1.0, 0.5]))


def test_mass_from_data_equals_gram(siso_1d):
    d = siso_1d
    M = mass_from_siso(d["F"]).entries
    G = gram_matrix(d["grid"], d["u"].values[: d["n"]])
    assert M.shape == (16, 16)
    assert rel_fro(M, G) < 1e-10


def _mimo_fixture(q_scale=0.0):
    rng = np.random.default_rng(11)
    grid = build_grid([1.0], [80])
    A0 = assemble_operator(grid)
    A = assemble_operator(grid, q_scale * rng.random(80))
    gs = [source_pulse(A0, PulseSpec(12.0, 0.0, s)) for s in (0, 30)]
    n, tau = 6, np.pi / 48
    snaps = [propagate_spectral(A, g, 2 * n - 1, tau) for g in gs]
    F = np.empty((2 * n - 1, 2, 2))
    for i, s in enumerate(snaps):
        for j, g in enumerate(gs):
            F[:, j, i] = record_transfer(s, g).samples
    return grid, snaps, F, n


def test_mass_from_mimo_matches_stacked_gram():
    grid, snaps, F, n = _mimo_fixture()
    M = mass_from_mimo(F)
    stacked = np.empty((2 * n, grid.size))
    stacked[0::2] = snaps[0].values[:n]
    stacked[1::2] = snaps[1].values[:n]
    assert M.block == 2
    assert rel_fro(M.entries, gram_matrix(grid, stacked)) < 1e-10


def test_mass_from_mimo_diagonal_blocks_are_siso():
    grid, snaps, F, n = _mimo_fixture(q_scale=50.0)
    M = mass_from_mimo(F).entries
    for j in range(2):
        Mj = mass_from_siso(series(F[:, j, j])).entries
        assert np.allclose(M[j::2, j::2], Mj, rtol=1e-14, atol=0)


def test_mass_from_mimo_single_block_is_siso():
    s = np.array([2.0, 0.3, -0.1, 0.05, 0.01])
    assert np.array_equal(mass_from_mimo(s[:, None, None]).entries,
                          mass_from_siso(series(s)).entries)


def test_mass_from_mimo_rejects_asymmetric():
    F = np.zeros((3, 2, 2))
    F[:, 0, 0] = F[:, 1, 1] = 1.0
    F[1, 0, 1] = 0.5
    with pytest.raises(DataInconsistencyError):
        mass_from_mimo(F)


def test_mimo_cholesky_orthonormalizes_all_sources():
    grid, snaps, F, n = _mimo_fixture(q_scale=50.0)
    M = mass_from_mimo(F)
    U = cholesky_upper(M)
    stacked = np.empty((2 * n, grid.size))
    stacked[0::2] = snaps[0].values[:n]
    stacked[1::2] = snaps[1].values[:n]
    V = orthogonalized_basis(SnapshotSet(grid, snaps[0].tau, stacked), U).values
    assert np.max(np.abs(gram_matrix(grid, V) - np.eye(2 * n))) < 1e-8


# -- spectral repair -------------------------------------------------------

def test_repair_keeps_spd_matrix():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((8, 8))
    M = B @ B.T + 8 * np.eye(8)
    out = spectral_repair(MassMatrix(M)).entries
    assert np.max(np.abs(out - M)) <= 1e-13 * np.abs(M).max()


def test_repair_clips_singular_diagonal():
    out = spectral_repair(MassMatrix(np.diag([1.0, 0.0])), rel_tol=1e-8).entries
    assert np.allclose(out, np.diag([1.0, 1e-8]), rtol=1e-12, atol=1e-20)


def test_repair_allows_cholesky_of_noisy_data(siso_1d):
    d = siso_1d
    rng = np.random.default_rng(7)
    failures = 0
    for _ in range(20):
        noisy = d["F"].samples * (1 + 1e-6 * rng.standard_normal(len(d["F"])))
        M = mass_from_siso(series(noisy))
        U = cholesky_upper(spectral_repair(M, 1e-12))
        failures += not np.all(np.diag(U.upper) > 0)
    assert failures == 0


# -- Cholesky --------------------------------------------------------------

def test_cholesky_identity():
    assert np.array_equal(cholesky_upper(MassMatrix(np.eye(4))).upper, np.eye(4))


def test_cholesky_hand_example():
    U = cholesky_upper(MassMatrix(np.array([[4.0, 2.0], [2.0, 5.0]]))).upper
    assert np.allclose(U, [[2.0, 1.0], [0.0, 2.0]])


def test_cholesky_reconstruction_random_spd():
    rng = np.random.default_rng(4)
    B = rng.standard_normal((20, 20))
    M = B @ B.T + np.eye(20)
    U = cholesky_upper(MassMatrix(M)).upper
    assert np.allclose(U, np.triu(U))
    assert np.all(np.diag(U) > 0)
    assert rel_fro(U.T @ U, M) < 1e-13


def test_cholesky_reports_pivot():
    M = np.diag([1.0, 2.0, -1.0, 4.0])
    with pytest.raises(DataInconsistencyError) as info:
        cholesky_upper(MassMatrix(M))
    assert info.value.pivot == 2


# -- orthogonalization and internal solutions ------------------------------

def test_orthonormal_basis(siso_1d):
    d = siso_1d
    n = d["n"]
    U = cholesky_upper(mass_from_siso(d["F"]))
    u = SnapshotSet(d["grid"], d["tau"], d["u"].values[:n])
    V = orthogonalized_basis(u, U).values
    assert np.max(np.abs(gram_matrix(d["grid"], V) - np.eye(n))) < 1e-8


def test_identity_factor_leaves_snapshots():
    grid = build_grid([1.0], [5])
    vals = np.arange(15.0).reshape(3, 5)
    from lslrom.rom import CholeskyFactor
    out = orthogonalized_basis(SnapshotSet(grid, 0.1, vals), CholeskyFactor(np.eye(3)))
    assert np.array_equal(out.values, vals)


def test_matches_gram_schmidt(siso_1d):
    d = siso_1d
    n = 10
    F = series(d["F"].samples[: 2 * n - 1])
    U = cholesky_upper(mass_from_siso(F))
    u = SnapshotSet(d["grid"], d["tau"], d["u"].values[:n])
    V = orthogonalized_basis(u, U).values
    W = gram_schmidt(d["grid"], u.values)
    assert np.max(np.abs(V - W)) < 1e-8 * np.abs(W).max()


def test_orthogonalized_dimension_mismatch(siso_1d):
    d = siso_1d
    U = cholesky_upper(mass_from_siso(d["F"]))
    with pytest.raises(ValueError):
        orthogonalized_basis(d["u"], U)


def test_background_fixed_point(siso_1d):
    d = siso_1d
    n = d["n"]
    u0 = SnapshotSet(d["grid"], d["tau"], d["u0"].values[:n])
    U0 = cholesky_upper(mass_from_siso(d["F0"]))
    uh = internal_solutions(u0, U0, U0)
    assert uh.provenance == "data"
    errs = [d["grid"].norm(a - b) / d["grid"].norm(b) for a, b in zip(uh.values, u0.values)]
    assert max(errs) < 1e-12


def test_first_column_identity(siso_1d):
    d = siso_1d
    uh, _, _ = rom_internal_solutions(d["u0"], d["F0"], d["F"])
    assert d["grid"].norm(uh[0] - d["u0"][0]) <= 1e-12 * d["grid"].norm(d["u0"][0])


def test_internal_solutions_order_mismatch(siso_1d):
    d = siso_1d
    U = cholesky_upper(mass_from_siso(d["F"]))
    U_small = cholesky_upper(mass_from_siso(series(d["F"].samples[:5])))
    with pytest.raises(ValueError):
        internal_solutions(d["u0"], U_small, U)


def test_internal_solutions_are_linear_in_true_factor():
    # u_hat = v0 U: scaling the data by c^2 scales U and u_hat by c
    grid = build_grid([1.0], [40])
    A0 = assemble_operator(grid)
    g = source_pulse(A0, PulseSpec(8.0))
    u0 = propagate_spectral(A0, g, 7, 0.08)
    F0 = record_transfer(u0, g)
    U0 = cholesky_upper(mass_from_siso(F0))
    U = cholesky_upper(mass_from_siso(series(4.0 * F0.samples)))
    u0n = SnapshotSet(grid, 0.08, u0.values[:4])
    assert np.allclose(internal_solutions(u0n, U0, U).values, 2.0 * u0n.values)
