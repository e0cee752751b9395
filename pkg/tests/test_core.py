import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meanfield import spectral as sp
from meanfield.core import (
    MarginalKernel, MemoryBudgetError, WaveFunction, gaussian, make_grid, make_state,
    oscillator_ground_state, product, random_nbody_state,
)
from meanfield.potentials import PotentialSpec, TrapSpec, pair_table
from meanfield.snapshot import (
    KIND_KERNEL, SnapshotError, read_manifest, read_raw, read_snapshot, write_manifest,
    write_snapshot,
)


def test_grid_1d_small():
    g = make_grid(1, 8, 4)
    assert g.h == (1.0,)
    np.testing.assert_array_equal(g.nodes(), np.arange(-4, 4))
    np.testing.assert_allclose(g.wavenumbers(), np.pi / 4 * np.arange(-4, 4))
    assert g.wavenumbers()[0] == -np.pi and g.wavenumbers()[-1] == 3 * np.pi / 4


def test_grid_3d():
    g = make_grid(3, 16, 8)
    assert g.h == (1.0, 1.0, 1.0)
    assert g.n**g.d == 4096
    assert g.cell == 1.0


@pytest.mark.parametrize("n", [7, 12, 4, 0])
def test_grid_rejects_bad_n(n):
    with pytest.raises(ValueError):
        make_grid(1, n, 4)


def test_grid_budget():
    with pytest.raises(MemoryBudgetError):
        make_grid(1, 64, 8, N=6)
    with pytest.raises(MemoryBudgetError):
        make_grid(1, 64, 8, N=2, budget=1000)


def test_product_state_n2():
    g = make_grid(1, 32, 6)
    phi = gaussian(g, 0.8)
    psi = make_state(g, 2, product(phi))
    u = phi / math.sqrt(g.cell * np.vdot(phi, phi).real)
    np.testing.assert_allclose(psi.data, np.outer(u, u), atol=1e-15)
    assert abs(psi.norm() - 1) < 1e-12


def test_product_state_n1_normalized():
    g = make_grid(2, 16, 5)
    psi = make_state(g, 1, product(3 * gaussian(g, 1.0)))
    assert abs(psi.norm() - 1) < 1e-12


def test_explicit_wrong_length_and_zero_norm():
    g = make_grid(1, 16, 4)
    with pytest.raises(ValueError):
        make_state(g, 2, np.ones(17))
    with pytest.raises(ValueError):
        make_state(g, 1, product(np.zeros(16)))


def test_wavefunction_rejects_nonfinite():
    g = make_grid(1, 8, 4)
    data = np.ones(8, dtype=complex)
    data[2] = np.nan
    with pytest.raises(FloatingPointError):
        WaveFunction(g, 1, data)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 3]))
def test_parseval(seed, d):
    g = make_grid(d, 8, 3)
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((8,) * d) + 1j * rng.standard_normal((8,) * d)
    lhs = g.cell * np.vdot(a, a).real
    ah = sp.fftn(a)
    rhs = g.cell * np.vdot(ah, ah).real / a.size
    assert abs(lhs - rhs) <= 1e-12 * lhs


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_unit_multiplier_is_identity(seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((16, 16)) + 1j * rng.standard_normal((16, 16))
    out = sp.apply_multiplier(a, np.ones((16, 16)))
    assert np.max(np.abs(out - a)) <= 1e-13 * np.max(np.abs(a))


def test_spectral_derivative_of_gaussian():
    g = make_grid(1, 64, 10)
    x = g.nodes()
    f = np.exp(-x**2 / 2)
    np.testing.assert_allclose(sp.derivative(f, g, 0).real, -x * f, atol=1e-12)
    np.testing.assert_allclose(sp.laplacian(f, g).real, (x**2 - 1) * f, atol=1e-11)


def test_potential_integral_invariant():
    for d in (1, 2):
        g = make_grid(d, 64, 6)
        for N in (1, 8, 64):
            pot = PotentialSpec("gaussian", 1.3, 0.7, 0.25, N, d)
            table = pair_table(g, pot)
            # row through the origin node, summed over the second particle
            row = table.reshape(g.n**d, g.n**d)[g.n**d // 2 + (g.n // 2 if d == 2 else 0)]
            assert np.all(table >= 0)
            assert abs(g.cell * row.sum() - pot.b0) < 1e-8 * pot.b0


def test_bump_profile_integral():
    pot = PotentialSpec("bump", 1.0, 1.0, 0.25, 1, 1)
    g = make_grid(1, 512, 4)
    vals = pot.profile_r2(g.nodes() ** 2)
    assert abs(g.cell * vals.sum() - pot.b0) < 1e-6


def test_potential_spec_validation():
    with pytest.raises(ValueError):
        PotentialSpec("square")
    with pytest.raises(ValueError):
        PotentialSpec(beta=0.3)
    with pytest.raises(ValueError):
        PotentialSpec(A=-1)


def test_trap_spec():
    t = TrapSpec.isotropic(2.0, 3)
    assert t.d == 3 and t.is_isotropic
    with pytest.raises(ValueError):
        TrapSpec((1.0, -1.0))


@pytest.mark.parametrize("dtype", [np.complex128, np.complex64])
def test_snapshot_roundtrip(tmp_path, dtype):
    g = make_grid(1, 16, 4, N=2)
    psi = make_state(g, 2, random_nbody_state(g, 2, np.random.default_rng(3)))
    p = write_snapshot(tmp_path / "s.mfs", psi, dtype)
    back = read_snapshot(p)
    np.testing.assert_array_equal(back.data, psi.data.astype(dtype).astype(complex))
    assert back.N == 2 and back.grid == g and back.frame == "lab"
    raw = read_raw(p)
    assert raw.dtype == np.dtype(dtype)
    np.testing.assert_array_equal(raw, psi.data.astype(dtype).ravel())


def test_snapshot_header_layout(tmp_path):
    g = make_grid(1, 8, 4)
    psi = make_state(g, 1, product(gaussian(g)))
    raw = write_snapshot(tmp_path / "s.mfs", psi).read_bytes()
    assert raw[:4] == b"MFLD"
    assert len(raw) == 4 + 4 + 4 + 4 + 8 + 1 + 8 * 16


def test_snapshot_errors(tmp_path):
    g = make_grid(1, 8, 4)
    K = MarginalKernel(g, 1, np.eye(8))
    p = write_snapshot(tmp_path / "k.mfs", K)
    raw = p.read_bytes()
    bad = tmp_path / "bad.mfs"
    bad.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(SnapshotError, match="magic"):
        read_snapshot(bad)
    with pytest.raises(SnapshotError, match="order"):
        read_snapshot(p, expect_kind=KIND_KERNEL, expect_count=2)
    bad.write_bytes(raw[:-3])
    with pytest.raises(SnapshotError, match="payload"):
        read_snapshot(bad)
    bad.write_bytes(raw[:10])
    with pytest.raises(SnapshotError, match="truncated"):
        read_snapshot(bad)


def test_snapshot_rejects_anisotropic(tmp_path):
    g = make_grid(2, 8, (4, 5))
    psi = make_state(g, 1, product(gaussian(g)))
    with pytest.raises(SnapshotError):
        write_snapshot(tmp_path / "a.mfs", psi)


def test_manifest_roundtrip(tmp_path):
    g = make_grid(1, 8, 4)
    psi = make_state(g, 1, product(oscillator_ground_state(g, 1.0)))
    write_snapshot(tmp_path / "a.mfs", psi)
    m = write_manifest(tmp_path / "m.json", [("a.mfs", 0.25)])
    entries = read_manifest(m)
    assert entries == [(tmp_path / "a.mfs", 0.25)]
