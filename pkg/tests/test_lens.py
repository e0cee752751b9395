import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meanfield.core import (
    MarginalKernel, WaveFunction, coherent_state, gaussian, make_grid, make_state,
    oscillator_ground_state, product, product_projector, random_nbody_state, random_smooth_state,
)
from meanfield.estimates import energy_comparison_ratio
from meanfield.lens import (
    FocalTimeError, LensFrame, conjugation_residual, lens_function, lens_kernel,
    momentum_identity_check, momentum_terms,
)
from meanfield.marginals import eigenvalues, trace_norm


def _unit(phi, grid):
    return phi / math.sqrt(grid.cell * np.vdot(phi, phi).real)


def test_lens_identity_at_t0():
    g = make_grid(1, 32, 6, N=2)
    psi = make_state(g, 2, random_nbody_state(g, 2, np.random.default_rng(0)))
    u = lens_function(psi, 1.0)
    assert u.frame == "lens" and u.time == 0.0 and u.grid == g
    np.testing.assert_array_equal(u.data, psi.data)
    K = MarginalKernel(g, 1, np.eye(32))
    np.testing.assert_array_equal(lens_kernel(K, 1.0).data, K.data)


def test_lens_arithmetic_quarter_period():
    fr = LensFrame((1.0,), math.pi / 4)
    assert abs(fr.lens_time() - 1.0) < 1e-15
    assert abs(fr.scale[0] - math.sqrt(2)) < 1e-15
    for d, N in ((1, 1), (1, 2), (3, 1)):
        g = make_grid(d, 8, 4, N=N)
        psi = WaveFunction(g, N, np.ones((8,) * (d * N)), "lab", math.pi / 4)
        u = lens_function(psi, 1.0)
        # at the origin node the chirp vanishes, leaving the amplitude
        origin = (4,) * (d * N)
        assert abs(u.data[origin] - 2 ** (-d * N / 4)) < 1e-14
        np.testing.assert_allclose(u.grid.L, np.array(g.L) * math.sqrt(2))


def test_amplitude_convention():
    # M_N^{-1} multiplies by (cos ωt)^{dN/2}; M_N divides by it
    g = make_grid(2, 8, 4)
    psi = WaveFunction(g, 1, np.ones((8, 8)), "lab", math.pi / 3)
    u = lens_function(psi, 1.0)
    assert abs(u.data[4, 4] - 0.5) < 1e-14


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([0.5, 1.0, 2.0]), st.floats(-1.2, 1.2))
def test_lens_unitary_and_invertible(seed, w, s):
    g = make_grid(1, 32, 6, N=2)
    psi = WaveFunction(g, 2, random_nbody_state(g, 2, np.random.default_rng(seed)), "lab", s / w)
    u = lens_function(psi, w)
    assert abs(u.norm() - psi.norm()) < 1e-12
    back = lens_function(u, w, direction="to_lab")
    assert abs(back.time - psi.time) < 1e-14
    assert np.max(np.abs(back.data - psi.data)) < 1e-12


def test_anisotropic_lens_unitary():
    g = make_grid(2, 16, (5, 6))
    psi = WaveFunction(g, 1, random_smooth_state(g, np.random.default_rng(2)), "lab", 0.4)
    u = lens_function(psi, (1.0, 2.0))
    assert abs(u.norm() - psi.norm()) < 1e-12
    np.testing.assert_allclose(u.grid.L, [5 / math.cos(0.4), 6 / math.cos(0.8)])
    back = lens_function(u, (1.0, 2.0), 0.4, "to_lab")
    assert np.max(np.abs(back.data - psi.data)) < 1e-12


def test_focal_time_rejected():
    with pytest.raises(FocalTimeError):
        LensFrame((1.0,), math.pi / 2)
    g = make_grid(1, 8, 4)
    psi = WaveFunction(g, 1, np.ones(8), "lab", 1.0)
    with pytest.raises(FocalTimeError):
        lens_function(psi, 2.0)


def test_frame_mismatch_rejected():
    g = make_grid(1, 8, 4)
    u = WaveFunction(g, 1, np.ones(8), "lens", 0.1)
    with pytest.raises(ValueError):
        lens_function(u, 1.0)


def test_kernel_of_projector():
    g = make_grid(1, 32, 6)
    phi = _unit(gaussian(g, 0.9, 0.3, 0.7), g)
    t, w = 0.6, 1.3
    K = MarginalKernel(g, 2, product_projector(phi, 2), "lab", t)
    TK = lens_kernel(K, w)
    u = lens_function(WaveFunction(g, 1, phi, "lab", t), w)
    assert TK.grid == u.grid
    assert np.max(np.abs(TK.data - product_projector(u.data, 2))) < 1e-13
    back = lens_kernel(TK, w, direction="to_lab")
    assert np.max(np.abs(back.data - K.data)) < 1e-13


def test_kernel_eigenvalues_and_hs_norm_preserved():
    rng = np.random.default_rng(5)
    g = make_grid(1, 16, 5, N=2)
    data = 0
    for _ in range(3):
        f = random_nbody_state(g, 2, rng)
        data = data + rng.normal() * np.multiply.outer(f, f.conj())
    K = MarginalKernel(g, 2, data, "lab", 0.7)
    TK = lens_kernel(K, 1.5)
    assert np.max(np.abs(eigenvalues(TK) - eigenvalues(K))) < 1e-10
    assert abs(trace_norm(TK) - trace_norm(K)) < 1e-10
    assert abs(TK.hs_norm() - K.hs_norm()) < 1e-12 * K.hs_norm()
    M = TK.matrix
    assert np.max(np.abs(M - M.conj().T)) < 1e-12 * np.max(np.abs(M))


def _coherent_kernels(grid, w, t, dt):
    out = []
    for s in (t - dt, t, t + dt):
        c = _unit(coherent_state(grid, w, 0.5, 0.25, s), grid)
        out.append(MarginalKernel(grid, 1, product_projector(c, 1), "lab", s))
    return out


def test_conjugation_residual_coherent_state():
    g = make_grid(1, 64, 8)
    r1 = conjugation_residual(_coherent_kernels(g, 1.0, 0.4, 2e-3), 1.0)
    r2 = conjugation_residual(_coherent_kernels(g, 1.0, 0.4, 1e-3), 1.0)
    assert r2 <= 1e-6
    assert 3.2 <= r1 / r2 <= 4.8


def test_conjugation_residual_at_origin():
    g = make_grid(1, 64, 8)
    assert conjugation_residual(_coherent_kernels(g, 1.0, 0.0, 1e-3), 1.0) <= 1e-6


def test_conjugation_residual_needs_three():
    g = make_grid(1, 16, 4)
    with pytest.raises(ValueError):
        conjugation_residual(_coherent_kernels(g, 1.0, 0.1, 1e-3)[:2], 1.0)


def test_momentum_identity_t0():
    g = make_grid(1, 128, 8)
    f = random_smooth_state(g, np.random.default_rng(3))
    lhs, rhs = momentum_identity_check(WaveFunction(g, 1, f, "lab", 0.0), 1.0)
    g2 = momentum_terms(f, g, g.cell)[0]
    assert abs(lhs - g2) < 1e-12 * g2 and abs(rhs - g2) < 1e-12 * g2


def test_momentum_identity_gaussian():
    g = make_grid(1, 128, 10)
    f = gaussian(g, 0.9, 0.5, 1.1)
    lhs, rhs = momentum_identity_check(WaveFunction(g, 1, f, "lab", 0.3), 1.0)
    assert abs(lhs - rhs) <= 1e-10 * rhs


def test_momentum_identity_two_particles():
    g = make_grid(1, 64, 8, N=2)
    psi = WaveFunction(g, 2, random_nbody_state(g, 2, np.random.default_rng(4)), "lab", 0.5)
    for j in (0, 1):
        lhs, rhs = momentum_identity_check(psi, 1.0, j)
        assert abs(lhs - rhs) <= 1e-10 * rhs


def test_cross_term_vanishes_for_real_odd():
    g = make_grid(1, 64, 8)
    x = g.nodes()
    f = x * np.exp(-x**2 / 2)
    assert abs(momentum_terms(f.astype(complex), g, g.cell)[2]) < 1e-14


def test_linear_flow_lens_is_free_flow_of_lens():
    from meanfield.potentials import TrapSpec
    from meanfield.propagators import Hamiltonian, SolverConfig, evolve_nbody, free_evolve_function

    g = make_grid(1, 64, 8)
    build = lambda grid: gaussian(grid, 0.8, 0.4, 0.6)
    psi0 = make_state(g, 1, product(build(g)))
    errs = []
    for dt in (2e-3, 1e-3):
        end = evolve_nbody(psi0, Hamiltonian(TrapSpec.isotropic(1.0, 1)), SolverConfig(dt, 0.5))[-1]
        u = lens_function(end, 1.0)
        u0 = make_state(u.grid, 1, product(build(u.grid)), frame="lens")
        ref = free_evolve_function(u0.data, u.grid, u.time)
        errs.append(math.sqrt(u.grid.cell * np.sum(np.abs(u.data - ref) ** 2)))
    assert errs[1] <= 5 * 1e-3**2 * 0.5
    assert 3.2 <= errs[0] / errs[1] <= 4.8


def test_energy_form_bound_with_unit_shift():
    # ⟨f,(1+P²)f⟩ ≤ C⟨f,(−Δ+ω²|x|²+1)f⟩ with C ≤ 2+2ω² over 100 random states
    g = make_grid(1, 128, 10)
    rng = np.random.default_rng(11)
    for i in range(100):
        f = random_smooth_state(g, rng)
        w = (0.5, 1.0, 2.0)[i % 3]
        t = rng.uniform(-1.2, 1.2) / w
        assert energy_comparison_ratio(f, g, w, t, shift=1.0) <= 2 + 2 * w * w


def test_energy_form_ground_state_time_independent():
    g = make_grid(1, 128, 10)
    f = oscillator_ground_state(g, 1.0)
    r = [energy_comparison_ratio(f, g, 1.0, t) for t in (0.0, 0.3, 1.0)]
    assert max(r) - min(r) < 1e-12
