import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from meanfield.core import (
    MarginalKernel, WaveFunction, gaussian, make_grid, make_state, product, product_projector,
    random_nbody_state, random_smooth_state,
)
from meanfield.marginals import (
    CollapseSpec, NotPSDError, ProductKernel, ResolutionWarning, apply_R, collapse,
    collapse_from_state, eigenvalues, h1_bound_from_trace, partial_trace, spacetime_norm,
    trace, trace_distance_to_product, trace_norm, trace_out_last, write_series_csv,
)
from meanfield.potentials import PotentialSpec, pair_table


def _unit(phi, grid):
    return phi / math.sqrt(grid.cell * np.vdot(phi, phi).real)


def _orthonormal_pair(grid):
    x = grid.nodes()
    a = _unit(np.exp(-x**2 / 2).astype(complex), grid)
    b = _unit((x * np.exp(-x**2 / 2)).astype(complex), grid)
    return a, b


def test_partial_trace_of_product():
    g = make_grid(1, 32, 6, N=2)
    phi = _unit(gaussian(g, 0.9, 0.2, 0.4), g)
    psi = make_state(g, 2, product(phi))
    K = partial_trace(psi, 1)
    np.testing.assert_allclose(K.data, np.outer(phi, phi.conj()), atol=1e-14)
    ev = eigenvalues(K)
    assert abs(ev[-1] - 1) < 1e-12 and np.max(np.abs(ev[:-1])) < 1e-12
    assert abs(trace(K) - 1) < 1e-12


def test_partial_trace_superposition():
    g = make_grid(1, 32, 6, N=2)
    a, b = _orthonormal_pair(g)
    data = (np.multiply.outer(a, b) + np.multiply.outer(b, a)) / math.sqrt(2)
    K = partial_trace(WaveFunction(g, 2, data), 1)
    ev = eigenvalues(K)
    np.testing.assert_allclose(ev[-2:], [0.5, 0.5], atol=1e-12)
    assert np.max(np.abs(ev[:-2])) < 1e-12
    assert abs(trace_norm(K) - 1) < 1e-12
    # brute-force from the definition
    brute = g.cell * np.einsum("xz,yz->xy", data, data.conj())
    np.testing.assert_allclose(K.data, brute, atol=1e-14)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_partial_trace_properties(seed):
    g = make_grid(1, 8, 3, N=3)
    psi = make_state(g, 3, random_nbody_state(g, 3, np.random.default_rng(seed)))
    K2 = partial_trace(psi, 2)
    K1 = partial_trace(psi, 1)
    assert np.max(np.abs(trace_out_last(K2).data - K1.data)) < 1e-12
    assert abs(trace(K2) - 1) < 1e-10 and abs(trace(K1) - 1) < 1e-10
    assert eigenvalues(K2)[0] >= -1e-10
    M = K2.matrix
    assert np.max(np.abs(M - M.conj().T)) < 1e-12


def test_trace_norm_toy_and_projector():
    g = make_grid(1, 8, 4)
    data = np.zeros((8, 8))
    data[0, 0], data[1, 1] = 0.5, -0.5
    assert abs(trace_norm(MarginalKernel(g, 1, data)) - 1) < 1e-14
    e = np.zeros(8)
    e[3] = 1
    assert abs(trace_norm(MarginalKernel(g, 1, np.outer(e, e))) - 1) < 1e-14


def test_trace_norm_rejects_nonhermitian():
    g = make_grid(1, 8, 4)
    data = np.zeros((8, 8))
    data[0, 1] = 1.0
    with pytest.raises(ValueError):
        trace_norm(MarginalKernel(g, 1, data))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.floats(-3, 3))
def test_trace_norm_is_a_norm(seed, c):
    rng = np.random.default_rng(seed)
    g = make_grid(1, 8, 4)

    def herm():
        A = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
        return MarginalKernel(g, 1, A + A.conj().T)

    A, B = herm(), herm()
    assert trace_norm(A.replace(data=A.data + B.data)) <= trace_norm(A) + trace_norm(B) + 1e-12
    assert abs(trace_norm(A.replace(data=c * A.data)) - abs(c) * trace_norm(A)) < 1e-10 * (1 + trace_norm(A))


@pytest.mark.parametrize("method", ["dense", "rank_one"])
def test_trace_distance_examples(method):
    g = make_grid(1, 32, 6)
    a, b = _orthonormal_pair(g)
    P = lambda f: MarginalKernel(g, 1, np.outer(f, f.conj()))
    assert trace_distance_to_product(P(a), a, method) < 1e-10
    assert abs(trace_distance_to_product(P(b), a, method) - 2) < 1e-10
    mixed = MarginalKernel(g, 1, 0.5 * np.outer(a, a.conj()) + 0.5 * np.outer(b, b.conj()))
    assert abs(trace_distance_to_product(mixed, a, method) - 1) < 1e-10


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**31))
def test_trace_distance_methods_agree(seed):
    g = make_grid(1, 8, 3, N=3)
    rng = np.random.default_rng(seed)
    psi = make_state(g, 3, random_nbody_state(g, 3, rng))
    K = partial_trace(psi, 2)
    phi = _unit(random_smooth_state(g, rng), g)
    d1 = trace_distance_to_product(K, phi, "dense")
    d2 = trace_distance_to_product(K, phi, "rank_one")
    assert abs(d1 - d2) < 1e-10
    assert 0 <= d1 <= 2


def test_trace_distance_requires_normalized():
    g = make_grid(1, 8, 4)
    with pytest.raises(ValueError):
        trace_distance_to_product(MarginalKernel(g, 1, np.eye(8)), np.ones(8), "dense")


def test_exact_collapse_of_projector():
    g = make_grid(1, 16, 4)
    phi = _unit(gaussian(g, 0.9, 0.3, 0.5), g)
    K = MarginalKernel(g, 2, product_projector(phi, 2), "lens")
    b1 = collapse(K, CollapseSpec(1, "exact", 1))
    expected = np.outer(np.abs(phi) ** 2 * phi, phi.conj())
    assert np.max(np.abs(b1.data - expected)) < 1e-14
    # the factorized closed form agrees with the dense contraction
    fast = collapse(ProductKernel(g, phi, 2), CollapseSpec(1, "exact", 1))
    assert np.max(np.abs(fast.data - expected)) < 1e-14


def test_collapse_difference_antihermitian():
    rng = np.random.default_rng(0)
    g = make_grid(1, 8, 4, N=2)
    f = random_nbody_state(g, 2, rng)
    h = random_nbody_state(g, 2, rng)
    K = MarginalKernel(g, 2, np.multiply.outer(f, f.conj()) + np.multiply.outer(h, h.conj()))
    b1 = collapse(K, CollapseSpec(1, "exact", 1)).matrix
    b2 = collapse(K, CollapseSpec(1, "exact", 2)).matrix
    assert np.max(np.abs(b2 - b1.conj().T)) < 1e-14
    diff = collapse(K, CollapseSpec(1)).matrix
    assert np.max(np.abs(diff + diff.conj().T)) < 1e-14
    # R preserves the symmetry
    Rd = apply_R(collapse(K, CollapseSpec(1))).matrix
    assert np.max(np.abs(Rd + Rd.conj().T)) < 1e-12 * np.max(np.abs(Rd))


def test_approx_kernel_integral_is_b0():
    g = make_grid(1, 256, 16)
    x0 = g.n // 2
    for N in (1, 8, 64):
        for gt in (1.0, 0.6):
            pot = PotentialSpec("gaussian", 1.0, 1.0, 0.25, N, 1)
            W = pair_table(g, pot, gt)
            assert abs(g.cell * W[x0].sum() - pot.b0) < 1e-10


def test_approx_collapse_approaches_exact():
    g = make_grid(1, 64, 8)
    phi = _unit(gaussian(g, 1.0, 0.2, 0.5), g)
    K = MarginalKernel(g, 2, product_projector(phi, 2), "lens")
    exact = collapse(K, CollapseSpec(1, "exact"))
    errs = []
    for N in (4, 8, 16):
        pot = PotentialSpec("gaussian", 1.0, 1.0, 0.25, N, 1)
        approx = collapse(K, CollapseSpec(1, "approx", "difference", pot))
        errs.append(np.linalg.norm(approx.data - pot.b0 * exact.data))
    assert errs[0] > errs[1] > errs[2]


@pytest.mark.filterwarnings("ignore::meanfield.marginals.ResolutionWarning")
def test_approx_collapse_paths_agree():
    g = make_grid(1, 16, 6, N=3)
    pot = PotentialSpec("gaussian", 1.0, 1.0, 0.25, 3, 1)
    psi = make_state(g, 3, random_nbody_state(g, 3, np.random.default_rng(7)))
    spec = CollapseSpec(1, "approx", "difference", pot, 0.8)
    a = collapse(partial_trace(psi, 2), spec)
    b = collapse_from_state(psi, 1, spec)
    assert np.max(np.abs(a.data - b.data)) < 1e-12
    phi = _unit(random_smooth_state(g, np.random.default_rng(8)), g)
    c = collapse(ProductKernel(g, phi, 2), spec)
    d = collapse(MarginalKernel(g, 2, product_projector(phi, 2)), spec)
    assert np.max(np.abs(c.data - d.data)) < 1e-12


def test_resolution_warning():
    g = make_grid(1, 16, 8)
    pot = PotentialSpec("gaussian", 1.0, 0.5, 2 / 7, 64, 1)
    K = MarginalKernel(g, 2, np.zeros((16,) * 4))
    with pytest.warns(ResolutionWarning):
        collapse(K, CollapseSpec(1, "approx", 1, pot))


def test_collapse_spec_validation():
    with pytest.raises(ValueError):
        CollapseSpec(0)
    with pytest.raises(ValueError):
        CollapseSpec(1, "approx")
    with pytest.raises(ValueError):
        CollapseSpec(1, "approx", 1, PotentialSpec(), g=0.0)
    g = make_grid(1, 8, 4)
    with pytest.raises(ValueError):
        collapse(MarginalKernel(g, 2, np.zeros((8,) * 4)), CollapseSpec(2))


def test_apply_R_cases():
    g = make_grid(1, 32, 2 * math.pi)
    K = MarginalKernel(g, 1, np.ones((32, 32)))
    assert np.max(np.abs(apply_R(K).data)) < 1e-13
    x = g.nodes()
    xi0 = 3.0
    e = np.exp(1j * xi0 * x)
    W = MarginalKernel(g, 1, np.outer(e, e.conj()))
    np.testing.assert_allclose(apply_R(W).data, xi0**2 * W.data, atol=1e-12)
    np.testing.assert_allclose(apply_R(W, "one_plus").data, (1 + xi0**2) * W.data, atol=1e-12)


def test_apply_R_gaussian_oracle():
    g = make_grid(1, 64, 8)
    x = g.nodes()
    phi = np.exp(-x**2 / 2)
    K = MarginalKernel(g, 1, np.outer(phi, phi))
    # on the periodic box |∇|φ is the Fourier series with coefficients |ξ_j| φ̂(ξ_j) / (2L)
    xi = g.wavenumbers()
    coeff = np.abs(xi) * math.sqrt(2 * math.pi) * np.exp(-xi**2 / 2) / (2 * g.L[0])
    # the Nyquist mode contributes cos(ξx), matching the symmetric real multiplier
    basis = np.exp(1j * np.outer(x, xi))
    basis[:, 0] = np.cos(xi[0] * x)
    vals = (basis @ coeff).real
    R = apply_R(K).data
    assert np.max(np.abs(R - np.outer(vals, vals))) < 1e-12


def test_h1_bound_cases():
    g = make_grid(1, 32, 6)
    a, b = _orthonormal_pair(g)
    lhs, rhs = h1_bound_from_trace(MarginalKernel(g, 1, np.outer(a, a.conj())))
    assert abs(lhs - rhs) < 1e-10 * rhs
    lhs, rhs = h1_bound_from_trace(MarginalKernel(g, 1, 0.5 * np.outer(a, a.conj()) + 0.5 * np.outer(b, b.conj())))
    assert lhs < rhs * (1 - 1e-3)
    with pytest.raises(NotPSDError):
        h1_bound_from_trace(MarginalKernel(g, 1, np.outer(a, a.conj()) - np.outer(b, b.conj())))


def test_h1_bound_random_psd():
    rng = np.random.default_rng(1)
    g = make_grid(1, 16, 5, N=2)
    for _ in range(20):
        psi = make_state(g, 2, random_nbody_state(g, 2, rng))
        lhs, rhs = h1_bound_from_trace(partial_trace(psi, 1))
        assert lhs <= rhs + 1e-8


@pytest.mark.filterwarnings("ignore::meanfield.marginals.ResolutionWarning")
def test_spacetime_trivial_cases(tmp_path):
    g = make_grid(1, 32, 6)
    pot = PotentialSpec("gaussian", 1.0, 1.0, 2 / 7, 16, 1)
    zero = MarginalKernel(g, 2, np.zeros((32,) * 4), "lens")
    taus = np.linspace(0, 1, 11)
    res = spacetime_norm([(t, zero) for t in taus], 1, pot, 0.0)
    assert res.value == 0.0
    phi = _unit(gaussian(g, 1.0, 0.3, 0.5), g)
    P = ProductKernel(g, phi, 2)
    res = spacetime_norm([(t, P) for t in taus], 1, pot, 0.0)
    single = res.series[0][1]
    assert abs(res.value - 1.0 * single) < 1e-12 * single
    assert abs(res.dtau - 0.1) < 1e-15
    write_series_csv(tmp_path / "s.csv", res.series)
    lines = (tmp_path / "s.csv").read_bytes().split(b"\r\n")
    assert lines[0] == b"tau,norm" and len(lines) == 13
    with pytest.raises(ValueError):
        spacetime_norm([], 1, pot, 0.0)
    with pytest.raises(ValueError):
        spacetime_norm([(0.0, P), (0.1, P), (0.3, P)], 1, pot, 0.0)
