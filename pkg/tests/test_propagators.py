import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meanfield.core import (
    MarginalKernel, coherent_state, gaussian, make_grid, make_state, oscillator_ground_state,
    product, product_projector, random_smooth_state,
)
from meanfield.potentials import PotentialSpec, TrapSpec
from meanfield.propagators import (
    Hamiltonian, SolverConfig, energy_expectation, evolve_free_kernel, evolve_nbody,
    free_evolve_function, lens_coupling, mass, nls_energy, solve_nls,
)


def free_gaussian(x, w, t):
    """Exact free solution from exp(-x²/(2w²))."""
    z = 1 + 1j * t / w**2
    return z**-0.5 * np.exp(-x**2 / (2 * w**2 * z))


def _unit(phi, grid):
    return phi / math.sqrt(grid.cell * np.vdot(phi, phi).real)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(dt=0)
    with pytest.raises(ValueError):
        SolverConfig(scheme="yoshida")
    cfg = SolverConfig(dt=0.1, t_end=1.0, stride=5)
    assert cfg.steps == 10 and [m for m in range(11) if cfg.emit_at(m)] == [0, 5, 10]


def test_oscillator_ground_state_is_stationary():
    g = make_grid(1, 64, 8)
    psi = make_state(g, 1, product(oscillator_ground_state(g, 1.0)))
    H = Hamiltonian(TrapSpec.isotropic(1.0, 1))
    traj = evolve_nbody(psi, H, SolverConfig(1e-2, 2.0, 50))
    dens0 = np.abs(psi.data) ** 2
    for s in traj:
        assert np.max(np.abs(np.abs(s.data) ** 2 - dens0)) < 1e-4
        assert abs(s.norm() - 1) < 1e-12


def test_free_gaussian_spreading():
    g = make_grid(1, 256, 20)
    x = g.nodes()
    psi = make_state(g, 1, product(free_gaussian(x, 1.0, 0.0)))
    H = Hamiltonian(TrapSpec.isotropic(0.0, 1))
    end = evolve_nbody(psi, H, SolverConfig(1e-2, 1.0))[-1]
    exact = _unit(free_gaussian(x, 1.0, 1.0), g)
    assert np.max(np.abs(end.data - exact)) < 1e-10
    width2 = 2 * g.cell * np.sum(x**2 * np.abs(end.data) ** 2)
    assert abs(width2 - (1 + 1.0**2)) < 1e-10


def test_strang_order_against_coherent_state():
    g = make_grid(1, 128, 10)
    H = Hamiltonian(TrapSpec.isotropic(1.0, 1))
    psi = make_state(g, 1, product(coherent_state(g, 1.0, 1.0, 0.5, 0.0)))
    exact = np.abs(_unit(coherent_state(g, 1.0, 1.0, 0.5, 1.0), g)) ** 2
    errs = []
    for dt in (0.02, 0.01):
        end = evolve_nbody(psi, H, SolverConfig(dt, 1.0))[-1]
        errs.append(np.max(np.abs(np.abs(end.data) ** 2 - exact)))
    assert 3.2 <= errs[0] / errs[1] <= 4.8


def test_noninteracting_pair_stays_product():
    g = make_grid(1, 32, 6, N=2)
    phi = random_smooth_state(g, np.random.default_rng(1))
    psi = make_state(g, 2, product(phi))
    H = Hamiltonian(TrapSpec.isotropic(1.0, 1), PotentialSpec("gaussian", 0.0, 1.0, 0.25, 2, 1))
    end = evolve_nbody(psi, H, SolverConfig(1e-2, 0.5))[-1]
    one = evolve_nbody(make_state(g, 1, product(phi)), Hamiltonian(H.trap), SolverConfig(1e-2, 0.5))[-1]
    assert np.max(np.abs(end.data - np.multiply.outer(one.data, one.data))) < 1e-10


def test_interacting_norm_preserved():
    g = make_grid(1, 32, 6, N=2)
    psi = make_state(g, 2, product(gaussian(g, 1.0, 0.5)))
    H = Hamiltonian(TrapSpec.isotropic(1.0, 1), PotentialSpec("gaussian", 2.0, 1.0, 0.25, 2, 1))
    for s in evolve_nbody(psi, H, SolverConfig(1e-2, 1.0, 20)):
        assert abs(s.norm() - 1) < 1e-10


def test_free_kernel_identity_and_projector():
    g = make_grid(1, 64, 10)
    phi = _unit(gaussian(g, 1.0, 0.5, 1.0), g)
    K = MarginalKernel(g, 1, product_projector(phi, 1), "lens")
    assert np.array_equal(evolve_free_kernel(K, 0.0).data, K.data)
    tau = 0.7
    out = evolve_free_kernel(K, tau)
    phit = free_evolve_function(phi, g, tau)
    np.testing.assert_allclose(out.data, product_projector(phit, 1), atol=1e-13)
    assert abs(out.trace() - 1) < 1e-10


def test_free_kernel_matches_gaussian_oracle():
    g = make_grid(1, 128, 16)
    x = g.nodes()
    K = MarginalKernel(g, 1, product_projector(_unit(free_gaussian(x, 1.0, 0.0), g), 1), "lens")
    out = evolve_free_kernel(K, 0.5)
    exact = product_projector(_unit(free_gaussian(x, 1.0, 0.5), g), 1)
    assert np.max(np.abs(out.data - exact)) < 1e-12


@settings(max_examples=10, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.integers(0, 2**31))
def test_free_kernel_group_law(t1, t2, seed):
    g = make_grid(1, 16, 5)
    rng = np.random.default_rng(seed)
    K = MarginalKernel(g, 2, rng.standard_normal((16,) * 4) + 1j * rng.standard_normal((16,) * 4), "lens")
    a = evolve_free_kernel(evolve_free_kernel(K, t1), t2)
    b = evolve_free_kernel(K, t1 + t2)
    assert np.max(np.abs(a.data - b.data)) <= 1e-12 * np.max(np.abs(K.data))


def test_nls_linear_oscillator_stationary():
    g = make_grid(1, 64, 8)
    phi0 = _unit(oscillator_ground_state(g, 1.0), g)
    traj = solve_nls(phi0, g, TrapSpec.isotropic(1.0, 1), 0.0, SolverConfig(1e-2, 1.0, 25))
    for _, phi in traj:
        assert np.max(np.abs(np.abs(phi) ** 2 - np.abs(phi0) ** 2)) < 1e-4


def test_nls_mass_and_energy():
    g = make_grid(1, 128, 10)
    trap = TrapSpec.isotropic(1.0, 1)
    phi0 = _unit(oscillator_ground_state(g, 2.0), g)
    traj = solve_nls(phi0, g, trap, 1.5, SolverConfig(1e-3, 1.0, 100))
    e0 = nls_energy(phi0, g, trap, 1.5)
    for _, phi in traj:
        assert abs(mass(phi, g) - 1) < 1e-10
        assert abs(nls_energy(phi, g, trap, 1.5) - e0) < 1e-6


def test_lens_coupling_arithmetic():
    assert abs(lens_coupling(1.0, 2.0, 1.0, d=3) - math.sqrt(5)) < 1e-15
    assert lens_coupling(0.7, 2.0, 1.0, d=2) == 0.7
    assert lens_coupling(1.0, 0.0, 3.0) == 1.0


def test_energy_ground_state():
    for d, n in ((1, 64), (2, 64)):
        g = make_grid(d, n, 8)
        for omega in (0.5, 1.0, 2.0):
            psi = make_state(g, 1, product(oscillator_ground_state(g, omega)))
            E = energy_expectation(psi, Hamiltonian(TrapSpec.isotropic(omega, d)))
            assert abs(E - d * omega / 2) < 1e-10


def test_energy_gaussian_moments():
    g = make_grid(1, 128, 12)
    w, p, omega = 0.8, 1.3, 1.5
    psi = make_state(g, 1, product(gaussian(g, w, 0.0, p)))
    E = energy_expectation(psi, Hamiltonian(TrapSpec.isotropic(omega, 1)))
    exact = 0.5 * (1 / (2 * w**2) + p**2) + 0.5 * omega**2 * w**2 / 2
    assert abs(E - exact) < 1e-10


@settings(max_examples=10, deadline=None)
@given(st.floats(0, 2 * math.pi))
def test_energy_gauge_invariance(theta):
    g = make_grid(1, 32, 6, N=2)
    data = make_state(g, 2, product(gaussian(g, 1.0, 0.3, 0.5))).data
    H = Hamiltonian(TrapSpec.isotropic(1.0, 1), PotentialSpec("gaussian", 1.0, 1.0, 0.25, 2, 1))
    a = energy_expectation(make_state(g, 2, data), H)
    b = energy_expectation(make_state(g, 2, np.exp(1j * theta) * data), H)
    assert abs(a - b) < 1e-12 * abs(a)


class _NaNHamiltonian(Hamiltonian):
    def potential(self, grid, N):
        V = super().potential(grid, N).copy()
        V.flat[0] = np.nan
        return V


def test_nan_aborts():
    g = make_grid(1, 16, 4)
    psi = make_state(g, 1, product(gaussian(g)))
    with pytest.raises(FloatingPointError, match="non-finite"):
        evolve_nbody(psi, _NaNHamiltonian(TrapSpec.isotropic(1.0, 1)), SolverConfig(0.1, 0.2))
    with pytest.raises(ValueError):
        TrapSpec((float("inf"),))
