"""The fourteen acceptance checks, shared by the test gate and the CLI."""
from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import estimates as est
from .core import (MarginalKernel, WaveFunction, gaussian, make_grid, make_state, oscillator_ground_state,
                   product, random_nbody_state, random_smooth_state)
from .experiments import ExperimentConfig, Table, run_convergence_study
from .hierarchy import (HierarchyFamily, bbgky_residual, brute_force_maps, duhamel_parts,
                        enumerate_collapse_maps, factorized_residual)
from .lens import lens_function, lens_kernel, momentum_identity_check
from .marginals import ProductKernel, ResolutionWarning, eigenvalues, partial_trace, spacetime_norm
from .potentials import PotentialSpec, TrapSpec, exponent_grad_lp, exponent_hess_l2, exponent_sup
from .propagators import (Hamiltonian, SolverConfig, evolve_nbody, free_evolve_function,
                          lens_nls_coupling, mass, nls_energy, solve_nls)


@dataclass
class CheckResult:
    criterion: int
    name: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    elapsed: float = 0.0
    tables: list = field(default_factory=list)

    def line(self) -> str:
        parts = []
        for k, v in self.metrics.items():
            parts.append(f"{k}={v:.4g}" if isinstance(v, float) else f"{k}={v}")
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.criterion:2d} {self.name} ({self.elapsed:.1f}s): " + ", ".join(parts)


def _unit(phi: np.ndarray, cell: float) -> np.ndarray:
    return phi / math.sqrt(cell * float(np.vdot(phi, phi).real))


def _ratio(a: float, b: float) -> float:
    return a / b if b > 0 else math.inf


# ----------------------------------------------------------------- lens


def check_lens_unitarity(seed: int = 0) -> CheckResult:
    """Norm preservation and round trip of the lens map on random states."""
    rng = np.random.default_rng(seed)
    worst_norm = worst_inv = 0.0
    cases = [(1, 64, 8.0, 2), (3, 16, 6.0, 1)]
    for d, n, L, N in cases:
        grid = make_grid(d, n, L, N=N)
        for w in (0.5, 1.0, 2.0):
            for s in (-1.2, 0.5, 1.2):
                t = s / w
                psi = WaveFunction(grid, N, random_nbody_state(grid, N, rng), "lab", t)
                u = lens_function(psi, (w,) * d)
                back = lens_function(u, (w,) * d, t, "to_lab")
                worst_norm = max(worst_norm, abs(u.norm() - psi.norm()))
                worst_inv = max(worst_inv, float(np.max(np.abs(back.data - psi.data))))
    ok = worst_norm <= 1e-12 and worst_inv <= 1e-12
    return CheckResult(1, "lens unitarity and inversion", ok,
                       {"max_norm_defect": worst_norm, "max_roundtrip_error": worst_inv})


def _random_hermitian_kernel(grid, k: int, rng) -> MarginalKernel:
    data = 0
    for _ in range(3):
        f = random_nbody_state(grid, k, rng)
        data = data + rng.normal() * np.multiply.outer(f, f.conj())
    return MarginalKernel(grid, k, data, "lab", 0.0)


def check_trace_preservation(seed: int = 0, samples: int = 20) -> CheckResult:
    """Eigenvalues of a kernel are unchanged by the kernel lens map."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k, n in ((1, 32), (2, 16)):
        grid = make_grid(1, n, 6.0, N=k)
        for i in range(samples):
            K = _random_hermitian_kernel(grid, k, rng)
            w = (0.5, 1.0, 2.0)[i % 3]
            t = rng.uniform(-1.2, 1.2) / w
            K = K.replace(time=t)
            TK = lens_kernel(K, (w,))
            worst = max(worst, float(np.max(np.abs(eigenvalues(TK) - eigenvalues(K)))))
    return CheckResult(2, "trace-norm preservation", worst <= 1e-10, {"max_eigenvalue_shift": worst})


def conjugation_error(dt: float, t: float = 0.5, omega: float = 1.0, n: int = 64, L: float = 8.0) -> float:
    """‖lens image of the trapped free flow − free flow of the initial datum‖ for N=2, d=1."""
    grid = make_grid(1, n, L, N=2)
    builder = lambda g: gaussian(g, 0.8, 0.4, 0.6)
    psi0 = make_state(grid, 2, product(builder(grid)))
    H = Hamiltonian(TrapSpec.isotropic(omega, 1))
    psi_t = evolve_nbody(psi0, H, SolverConfig(dt=dt, t_end=t))[-1]
    u = lens_function(psi_t, (omega,))
    y = u.grid
    u0 = make_state(y, 2, product(builder(y)), frame="lens")
    ref = free_evolve_function(u0.data, y, u.time)
    return math.sqrt(y.cell**2 * float(np.sum(np.abs(u.data - ref) ** 2)))


def check_conjugation(t: float = 0.5) -> CheckResult:
    e1, e2 = conjugation_error(2e-3, t), conjugation_error(1e-3, t)
    bound = 5 * (1e-3) ** 2 * t
    ratio = _ratio(e1, e2)
    ok = e2 <= bound and 3.2 <= ratio <= 4.8
    return CheckResult(3, "trapped/free conjugation", ok,
                       {"error_dt1e-3": e2, "bound": bound, "halving_ratio": ratio})


def check_momentum_identity(seed: int = 0, samples: int = 50) -> CheckResult:
    rng = np.random.default_rng(seed)
    grid = make_grid(1, 256, 10.0)
    worst = 0.0
    for i in range(samples):
        f = random_smooth_state(grid, rng)
        w = (0.5, 1.0, 2.0)[i % 3]
        # |ωt| ≤ 1.2: closer to the focal time the lens image outgrows the grid
        for s in (-1.2, -0.4, 0.3, 0.8, 1.2):
            t = s / w
            lhs, rhs = momentum_identity_check(WaveFunction(grid, 1, f, "lab", t), w)
            worst = max(worst, abs(lhs - rhs) / abs(rhs))
    return CheckResult(4, "momentum identity", worst <= 1e-10, {"max_rel_error": worst})


# ------------------------------------------------------------ residuals


def _phi_unit(grid):
    return _unit(gaussian(grid, 1.0, 0.3, 0.5), grid.cell)


def factorized_residuals(k: int, dts=(1e-3, 5e-4), omega: float = 1.0, b0: float = 1.0,
                         T: float = 0.2) -> list[float]:
    grid = make_grid(1, 64, 8.0, N=k + 1)
    out = []
    for dt in dts:
        tr = solve_nls(_phi_unit(grid), grid, None, lens_nls_coupling(b0, omega, 1),
                       SolverConfig(dt=dt, t_end=T, stride=1))
        out.append(factorized_residual(grid, tr, k, len(tr) // 2, b0, omega, "lens"))
    return out


def check_gp_residual() -> CheckResult:
    m, ok = {}, True
    for k in (1, 2):
        r1, r2 = factorized_residuals(k)
        ratio = r1 / r2
        m[f"k{k}_residual"] = r1
        m[f"k{k}_ratio"] = ratio
        ok &= r1 <= 1e-4 and abs(ratio / 4 - 1) <= 0.2
    return CheckResult(5, "factorized GP residual", ok, m)


def _window_states(psi, H, dt: float, t_mid: float):
    """Three states at t_mid − dt, t_mid, t_mid + dt without storing the whole run."""
    first = evolve_nbody(psi, H, SolverConfig(dt=dt, t_end=t_mid - dt))[-1]
    return evolve_nbody(first, H, SolverConfig(dt=dt, t_end=2 * dt, stride=1))


def bbgky_residuals(levels=((16, 4e-3), (32, 2e-3), (64, 1e-3)), N: int = 3, k: int = 1,
                    omega: float = 1.0, t_mid: float = 0.05) -> list[float]:
    pot = PotentialSpec("gaussian", 1.0, 1.0, Fraction(1, 4), N, 1)
    H = Hamiltonian(TrapSpec.isotropic(omega, 1), pot)
    out = []
    for n, dt in levels:
        grid = make_grid(1, n, 8.0, N=N)
        psi = make_state(grid, N, product(gaussian(grid, 1.0, 0.3, 0.5)))
        fam = HierarchyFamily.from_states(_window_states(psi, H, dt, t_mid))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ResolutionWarning)
            out.append(bbgky_residual(fam, k, 1, N, omega, pot))
    return out


def check_bbgky_residual() -> CheckResult:
    m, ok = {}, True
    for k in (1, 2):
        rs = bbgky_residuals(k=k)
        order = math.log2(rs[-2] / rs[-1])
        m[f"k{k}_residual_finest"] = rs[-1]
        m[f"k{k}_observed_order"] = order
        ok &= all(a > b for a, b in zip(rs, rs[1:])) and order >= 1.8
    return CheckResult(6, "BBGKY residual", ok, m)


def duhamel_errors(dts=(2e-3, 1e-3), level: int = 2, N: int = 3) -> list:
    n, L, tau2 = (32, 8.0, 0.1) if level == 2 else (8, 4.0, 0.05)
    grid = make_grid(1, n, L, N=N)
    pot = PotentialSpec("gaussian", 1.0, 1.0, Fraction(1, 4), N, 1)
    u0 = make_state(grid, N, product(gaussian(grid, 1.0, 0.3, 0.4)), frame="lens")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        return [duhamel_parts(u0, pot, 1.0, tau2, dt, level) for dt in dts]


def check_duhamel() -> CheckResult:
    p1, p2 = duhamel_errors(level=2)
    q1, q2 = duhamel_errors(level=3, N=4)
    r2, r3 = p1.error / p2.error, q1.error / q2.error
    ok = p2.error <= 1e-4 and 3.2 <= r2 <= 4.8 and q2.error <= 1e-4 and 3.2 <= r3 <= 4.8
    return CheckResult(7, "Duhamel decomposition", ok,
                       {"level2_error": p2.error, "level2_ratio": r2, "level3_error": q2.error,
                        "level3_ratio": r3})


def check_collapse_maps() -> CheckResult:
    counts = [len(enumerate_collapse_maps(j, "bbgky")) for j in range(3, 7)]
    brute = [len(brute_force_maps(j, "bbgky")) for j in range(3, 7)]
    listed = [sum(1 for _ in enumerate_collapse_maps(j, "bbgky")) for j in range(3, 7)]
    ok = counts == [2, 6, 24, 120] and brute == counts and listed == counts
    return CheckResult(8, "collapse-map counts", ok, {"counts": tuple(counts), "brute_force": tuple(brute)})


def check_conservation() -> CheckResult:
    grid = make_grid(1, 64, 8.0)
    trap = TrapSpec.isotropic(1.0, 1)
    b0 = 1.0
    tr = solve_nls(_phi_unit(grid), grid, trap, b0, SolverConfig(dt=1e-3, t_end=1.0, stride=50))
    ms = [mass(p, grid) for _, p in tr]
    es = [nls_energy(p, grid, trap, b0) for _, p in tr]
    T = tr[-1][0]
    mass_drift = max(abs(x - ms[0]) for x in ms) / T
    energy_drift = max(abs(x - es[0]) for x in es) / T
    N = 3
    g3 = make_grid(1, 32, 8.0, N=N)
    pot = PotentialSpec("gaussian", 1.0, 1.0, Fraction(1, 4), N, 1)
    psi = make_state(g3, N, product(gaussian(g3, 1.0, 0.3, 0.5)))
    states = evolve_nbody(psi, Hamiltonian(trap, pot), SolverConfig(dt=1e-3, t_end=0.5, stride=100))
    trace_dev = 0.0
    for k in (1, 2):
        trs = [partial_trace(s, k).trace().real for s in states]
        trace_dev = max(trace_dev, max(abs(x - trs[0]) for x in trs))
    ok = mass_drift <= 1e-10 and energy_drift <= 1e-6 and trace_dev <= 1e-10
    return CheckResult(9, "conservation", ok, {"mass_drift_per_time": mass_drift,
                                               "energy_drift_per_time": energy_drift,
                                               "marginal_trace_deviation": trace_dev})


# ------------------------------------------------------------ estimates


def check_potential_scaling() -> CheckResult:
    pot = PotentialSpec("gaussian", 1.0, 1.0, Fraction(2, 7), 1, 3)
    Ns = (1, 2, 4, 8, 16, 32, 64, 128)
    worst_slope = 0.0
    devs = []
    point = math.nan
    for tau in (0.0, 0.5):
        rep = est.potential_scaling_report(pot, tau=tau, omega=1.0, Ns=Ns)
        devs.append(rep["max_rel_dev"])
        rows = rep["rows"]
        series = [([r.sup for r in rows], exponent_sup(3, pot.beta)),
                  ([r.hess for r in rows], exponent_hess_l2(3, pot.beta))]
        series += [([r.grad[p] for r in rows], exponent_grad_lp(3, pot.beta, p)) for p in (2, 3, 6)]
        for vals, ex in series:
            slope = est.loglog_slope(Ns, vals)
            err = abs(slope - float(ex)) / max(abs(float(ex)), 1e-2)
            worst_slope = max(worst_slope, err)
        if tau == 0.0:
            point = rows[-1].sup / rows[0].sup
    symbolic = (est.grad_exponent_eps_form(6, pot.beta) == exponent_grad_lp(3, pot.beta, 6)
                and est.hess_exponent_eps_form(pot.beta) == exponent_hess_l2(3, pot.beta))
    ok = worst_slope <= 0.01 and max(devs) <= 0.01 and abs(point - 0.5) <= 1e-12 and symbolic
    return CheckResult(10, "potential scaling", ok, {"max_slope_rel_error": worst_slope,
                                                     "max_norm_rel_dev": max(devs),
                                                     "sup_ratio_N128": point, "symbolic_forms_agree": symbolic})


def check_surface_integrals(seed: int = 0) -> CheckResult:
    m, ok = {}, True
    tables = []
    for part in (1, 2):
        placements = est.random_placements(np.random.default_rng(seed + part), 10, max_gap=0.0)
        rep = est.surface_integral_check(placements, part=part, seed=seed)
        m[f"part{part}_constant"] = rep.constant
        m[f"part{part}_spread"] = rep.spread
        m[f"part{part}_refinement"] = rep.refinement_delta
        ok &= rep.spread <= 0.25 and rep.refinement_delta < 0.05 and math.isfinite(rep.constant)
        tables.append(Table(f"surface_part{part}", ["placement", "xi_norm", "normalized_value"], rep.rows))
    return CheckResult(11, "surface-integral bound", ok, m, tables=tables)


def check_collapsing_probe() -> CheckResult:
    pot = PotentialSpec("gaussian", 1.0, 1.0, Fraction(2, 7), 8, 3)
    sigmas = np.linspace(0.5, 4.0, 20)
    rep = est.collapsing_ratio_probe(pot, sigmas, Ns=(8, 16, 32, 64), T=1.0)
    per_N = {}
    for r in rep["rows"]:
        per_N[r["N"]] = max(per_N.get(r["N"], 0.0), r["ratio"])
    limit = per_N.pop(None)
    homog = 0.0
    for s in (0.5, 1.7, 4.0):
        for w in (0.0, 1.0, 2.0):
            p = pot.with_N(32)
            a = est.collapsing_ratio(s, p, w, 1.0)
            b = est.collapsing_ratio(s, p.with_amplitude(2 * p.A), w, 1.0)
            homog = max(homog, abs(a / b - 1))
    bounded = all(v <= limit * (1 + 1e-9) for v in per_N.values())
    ok = bounded and homog <= 1e-10
    rows = [(r["N"], r["omega"], r["sigma"], r["ratio"]) for r in rep["rows"]]
    return CheckResult(12, "collapsing ratio probe", ok,
                       {"max_ratio_finite_N": max(per_N.values()), "delta_limit_constant": limit,
                        "homogeneity_defect": homog},
                       tables=[Table("collapsing_probe", ["N", "omega", "sigma", "ratio"], rows)])


# ------------------------------------------------------- space-time norm


def spacetime_values(Ns=(16, 32, 64), omega: float = 1.0, T: float = 1.0) -> dict:
    """∫₀^T‖R B̃ u^{(2)}‖ for factorized lens-frame data from the lens NLS."""
    grid = make_grid(1, 256, 10.0)
    base = PotentialSpec("gaussian", 1.0, 1.0, Fraction(2, 7), 1, 1)
    tr = solve_nls(_phi_unit(grid), grid, None, lens_nls_coupling(base.b0, omega, 1),
                   SolverConfig(dt=1e-3, t_end=T, stride=10))
    out = {}
    for N in Ns:
        traj = [(t, ProductKernel(grid, p, 2, "lens", t)) for t, p in tr]
        out[N] = spacetime_norm(traj, 1, base.with_N(N), omega).value
    return out


def check_spacetime_norm() -> CheckResult:
    vals = spacetime_values()
    spread = max(vals.values()) / min(vals.values())
    m = {f"N{N}": v for N, v in vals.items()}
    m["max_over_min"] = spread
    return CheckResult(13, "space-time norm uniformity", spread < 2.0, m)


def check_convergence(cfg: ExperimentConfig | None = None) -> CheckResult:
    cfg = cfg or ExperimentConfig()
    rep = run_convergence_study(cfg)
    rows = rep.tables[0].rows
    t_end = max(r[1] for r in rows)
    ok = True
    m = {}
    for k in cfg.k_list:
        series = sorted((N, d) for N, t, kk, d in rows if kk == k and t == t_end)
        for N, d in series:
            m[f"k{k}_N{N}"] = d
        ok &= all(b <= a * (1 + cfg.slack) for (_, a), (_, b) in zip(series, series[1:]))
    return CheckResult(14, "convergence trend", ok, m, tables=rep.tables)


CHECKS = {
    1: check_lens_unitarity,
    2: check_trace_preservation,
    3: check_conjugation,
    4: check_momentum_identity,
    5: check_gp_residual,
    6: check_bbgky_residual,
    7: check_duhamel,
    8: check_collapse_maps,
    9: check_conservation,
    10: check_potential_scaling,
    11: check_surface_integrals,
    12: check_collapsing_probe,
    13: check_spacetime_norm,
    14: check_convergence,
}


# --------------------------------------------------- supplementary probes


def check_interaction_bound(seed: int = 0) -> CheckResult:
    """Random-ensemble interaction ratios in d=1 and d=3, the V_N sweep and the Gaussian oracle."""
    m, ok = {}, True
    cases = [(1, 32, 8.0, 0.7, 1.0), (3, 8, 6.0, 2.0, 2.0)]
    for d, n, L, width, scale in cases:
        grid = make_grid(d, n, L, N=2)
        pot = PotentialSpec("gaussian", 1.0, width, Fraction(1, 4), 1, d)
        rep = est.interaction_bound_check(pot, grid, 50, seed, refine_samples=10 if d == 1 else 5,
                                          state_scale=scale)
        m[f"d{d}_max_ratio"] = rep.max_ratio
        m[f"d{d}_refinement"] = rep.extra["refinement_delta"]
        ok &= math.isfinite(rep.max_ratio) and rep.extra["refinement_delta"] < 0.05
    grid = make_grid(1, 64, 8.0, N=2)
    sweep = [est.interaction_bound_check(PotentialSpec("gaussian", 1.0, 1.0, Fraction(1, 4), N, 1), grid,
                                         50, seed, refine_samples=0).max_ratio for N in (1, 4, 16, 64, 256)]
    m["VN_sweep_max"] = max(sweep)
    ok &= max(sweep) / min(sweep) < 2.0
    grid = make_grid(1, 64, 10.0, N=2)
    s, A, w = 0.9, 1.3, 0.7
    phi = _unit(np.exp(-grid.r2() / (2 * s * s)).astype(complex), grid.cell)
    f = np.multiply.outer(phi, phi)
    pot = PotentialSpec("gaussian", A, w, Fraction(1, 4), 1, 1)
    lhs, rhs = est.gaussian_pair_oracle(A, w, s, 1)
    gl = est.pair_expectation(f, grid, pot)
    gr = pot.b0 * est.sobolev_two_body_norm2(f, grid)
    m["oracle_defect"] = max(abs(gl - lhs), abs(gr - rhs))
    ok &= m["oracle_defect"] <= 1e-6
    return CheckResult(0, "interaction bound", ok, m)


def check_energy_comparison(seed: int = 0) -> CheckResult:
    """Ratio ⟨f,(1+P²)f⟩/⟨f,(−Δ+ω²x²)f⟩ against the derived margin 2 + 1/(dω)."""
    grid = make_grid(1, 256, 12.0)
    omegas, times = (0.5, 1.0, 2.0), (0.0, 0.2, 0.5)
    rep = est.energy_comparison_check(grid, omegas, times, samples=20, seed=seed)
    ok = all(r["max_ratio"] <= r["derived_bound"] for r in rep["rows"])
    stated = all(r["max_ratio"] <= r["stated_margin"] for r in rep["rows"] if r["omega"] >= 1.0)
    osc = max(abs(est.energy_comparison_ratio(oscillator_ground_state(grid, w), grid, w, 0.3)
                  - est.oscillator_energy_ratio(w, 1)) for w in omegas)
    ok &= stated and osc <= 1e-10
    return CheckResult(0, "energy comparison", ok,
                       {"max_ratio": max(r["max_ratio"] for r in rep["rows"]), "oscillator_defect": osc})


def check_esy_rayleigh(seed: int = 0) -> CheckResult:
    grid = make_grid(1, 32, 8.0, N=2)
    pot = PotentialSpec("gaussian", 1.0, 1.0, Fraction(1, 4), 2, 1)
    rep = est.esy_rayleigh(grid, pot, 1.0, samples=10, seed=seed)
    return CheckResult(0, "energy lower bound (k=1, N=2)", rep["min_ratio"] > 0, {"min_ratio": rep["min_ratio"]})


SUPPLEMENTARY = {
    "interaction_bound": check_interaction_bound,
    "energy_comparison": check_energy_comparison,
    "esy_rayleigh": check_esy_rayleigh,
}


def run_check(criterion, **kwargs) -> CheckResult:
    """Run a numbered criterion or a supplementary probe by name."""
    t0 = time.perf_counter()
    fn = CHECKS[criterion] if isinstance(criterion, int) else SUPPLEMENTARY[criterion]
    res = fn(**kwargs)
    res.elapsed = time.perf_counter() - t0
    return res
