"""Hierarchy residuals, the Duhamel split of the lens-frame BBGKY flow, and collapse maps."""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import spectral as sp
from .core import Grid, MarginalKernel, WaveFunction
from .marginals import CollapseSpec, ProductKernel, collapse, collapse_from_state, partial_trace
from .potentials import PotentialSpec, embed_one, embed_pair, pair_table
from .propagators import SolverConfig, free_kernel_symbol, g_of_tau, iterate_nbody_lens

# ------------------------------------------------------------- families


@dataclass
class HierarchyFamily:
    """Kernels u^{(1)}..u^{(K)} along a time grid, produced from one of three sources.

    source "factorized": `phis[i]` is the one-particle function at times[i];
    source "nbody": `states[i]` is the N-body state at times[i];
    source "kernels": `kernels[k][i]` are given dense kernels.
    """

    grid: Grid
    times: list[float]
    frame: str
    source: str
    max_order: int
    phis: list | None = None
    states: list | None = None
    kernels: dict | None = None

    def __post_init__(self):
        if self.source not in ("factorized", "nbody", "kernels"):
            raise ValueError(f"unknown source {self.source!r}")
        if self.frame not in ("lab", "lens"):
            raise ValueError(f"unknown frame {self.frame!r}")
        if self.source == "kernels":
            orders = sorted(self.kernels)
            if orders != list(range(1, len(orders) + 1)):
                raise ValueError("kernel orders must be consecutive from 1")
            for k in orders:
                if any(K.frame != self.frame or K.grid != self.grid for K in self.kernels[k]):
                    raise ValueError("kernels must share the family's grid and frame")

    @classmethod
    def factorized(cls, grid: Grid, trajectory, frame: str = "lens", max_order: int = 8):
        times = [float(t) for t, _ in trajectory]
        return cls(grid, times, frame, "factorized", max_order, phis=[p for _, p in trajectory])

    @classmethod
    def from_states(cls, states: Sequence[WaveFunction]):
        s0 = states[0]
        return cls(s0.grid, [s.time for s in states], s0.frame, "nbody", s0.N, states=list(states))

    @classmethod
    def from_kernels(cls, kernels: dict):
        first = kernels[1][0]
        return cls(first.grid, [K.time for K in kernels[1]], first.frame, "kernels",
                   max(kernels), kernels=kernels)

    def has(self, k: int) -> bool:
        return 1 <= k <= self.max_order

    def kernel(self, k: int, i: int) -> MarginalKernel:
        if not self.has(k):
            raise ValueError(f"family has no order {k}")
        if self.source == "factorized":
            return ProductKernel(self.grid, self.phis[i], k, self.frame, self.times[i]).dense()
        if self.source == "nbody":
            return partial_trace(self.states[i], k)
        return self.kernels[k][i]

    def collapsed(self, k: int, i: int, spec: CollapseSpec) -> MarginalKernel:
        """spec applied to the order-(k+1) member at times[i] (an order-k kernel)."""
        if not self.has(k + 1):
            raise ValueError(f"family has no order {k + 1}")
        if self.source == "factorized":
            return collapse(ProductKernel(self.grid, self.phis[i], k + 1, self.frame, self.times[i]), spec)
        if self.source == "nbody" and spec.variant == "approx":
            return collapse_from_state(self.states[i], k, spec)
        return collapse(self.kernel(k + 1, i), spec)


# ------------------------------------------------------------ stencils


def time_derivative(values: Sequence[np.ndarray], times: Sequence[float], i: int, stencil: int = 3):
    """Finite-difference d/dt at times[i] on a uniform grid: centered, one-sided at ends."""
    n = len(values)
    dt = times[1] - times[0]
    if stencil == 3:
        if n < 3:
            raise ValueError("trajectory too short for the 3-point stencil")
        if 0 < i < n - 1:
            return (values[i + 1] - values[i - 1]) / (2 * dt)
        if i == 0:
            return (-3 * values[0] + 4 * values[1] - values[2]) / (2 * dt)
        return (3 * values[-1] - 4 * values[-2] + values[-3]) / (2 * dt)
    if stencil == 5:
        if not 2 <= i <= n - 3:
            raise ValueError("5-point stencil needs two neighbours on each side")
        return (values[i - 2] - 8 * values[i - 1] + 8 * values[i + 1] - values[i + 2]) / (12 * dt)
    raise ValueError("stencil must be 3 or 5")


def _window(i: int, n: int, stencil: int) -> list[int]:
    if stencil == 5:
        return list(range(i - 2, i + 3))
    if 0 < i < n - 1:
        return [i - 1, i, i + 1]
    return [0, 1, 2] if i == 0 else [n - 3, n - 2, n - 1]


def _l2(a: np.ndarray, grid: Grid, k: int) -> float:
    return math.sqrt(grid.cell ** (2 * k) * float(np.vdot(a, a).real))


def _free_operator(u: np.ndarray, grid: Grid, k: int) -> np.ndarray:
    """(½Δ_y − ½Δ_y') u."""
    D = grid.d * k
    sym = -0.5 * (sp.xi_squared(grid, 2 * D, range(D)) - sp.xi_squared(grid, 2 * D, range(D, 2 * D)))
    return sp.apply_multiplier(u, sym)


def _one_body(grid: Grid, k: int, v: np.ndarray) -> np.ndarray:
    """Σ_{j≤k} v(y_j) − Σ_{j≤k} v(y'_j) on an order-k kernel tensor."""
    rows = sum(embed_one(v, grid.d, 2 * k, j) for j in range(k))
    cols = sum(embed_one(v, grid.d, 2 * k, j) for j in range(k, 2 * k))
    return rows - cols


def _pair_sum(grid: Grid, k: int, pot: PotentialSpec, g: float) -> np.ndarray:
    """Σ_{i<j≤k} [Ṽ(y_i − y_j) − Ṽ(y'_i − y'_j)] on an order-k kernel tensor."""
    out = np.zeros((1,) * (2 * grid.d * k))
    if k < 2:
        return out
    table = pair_table(grid, pot, g)
    for i, j in itertools.combinations(range(k), 2):
        out = out + embed_pair(table, grid.d, 2 * k, i, j) - embed_pair(table, grid.d, 2 * k, k + i, k + j)
    return out


# ----------------------------------------------------------- residuals


def gp_residual(family: HierarchyFamily, k: int, i: int, b0: float, omega: float = 0.0,
                stencil: int = 3) -> float:
    """‖LHS − RHS‖ of the Gross-Pitaevskii hierarchy at times[i].

    lens frame: (i∂_τ + ½Δ_y − ½Δ_y')u^{(k)} = b0 g(τ)^{2-d} Σ_j B_{j,k+1} u^{(k+1)};
    lab frame:  (i∂_t − H_k + H'_k)γ^{(k)} = b0 Σ_j B_{j,k+1} γ^{(k+1)}, H = -½Δ + ½ω²|x|².
    """
    if not family.has(k + 1):
        raise ValueError(f"missing order {k + 1}")
    grid = family.grid
    idx = _window(i, len(family.times), stencil)
    vals = {m: family.kernel(k, m).data for m in idx}
    seq = [vals[m] for m in idx]
    ts = [family.times[m] for m in idx]
    local = idx.index(i)
    dt_u = time_derivative(seq, ts, local, stencil)
    u = vals[i]
    lhs = 1j * dt_u + _free_operator(u, grid, k)
    tau = family.times[i]
    if family.frame == "lens":
        coupling = b0 * g_of_tau(omega, tau) ** (2 - grid.d)
    else:
        lhs = lhs - _one_body(grid, k, 0.5 * omega**2 * grid.r2()) * u
        coupling = b0
    rhs = 0
    if coupling != 0.0:
        for j in range(1, k + 1):
            rhs = rhs + family.collapsed(k, i, CollapseSpec(j, "exact")).data
        rhs = coupling * rhs
    return _l2(lhs - rhs, grid, k)


def bbgky_residual(family: HierarchyFamily, k: int, i: int, N: int, omega: float = 0.0,
                   potential: PotentialSpec | None = None, stencil: int = 3) -> float:
    """‖LHS − RHS‖ of the BBGKY hierarchy at times[i] for marginals of an N-body flow.

    lab frame: i∂_tγ − H_kγ + H'_kγ = (1/N)Σ_{i<j≤k}(V_N(x_i−x_j) − V_N(x'_i−x'_j))γ
               + ((N−k)/N) Σ_j B̃_{j,k+1} γ^{(k+1)} (with g = 1);
    lens frame: same with the trap removed, Ṽ_{N,τ} in place of V_N and the
               coupling g(τ)^{2-d} in front of the right side.
    """
    if not family.has(k + 1):
        raise ValueError(f"missing order {k + 1}")
    grid = family.grid
    idx = _window(i, len(family.times), stencil)
    seq = [family.kernel(k, m).data for m in idx]
    ts = [family.times[m] for m in idx]
    u = seq[idx.index(i)]
    lhs = 1j * time_derivative(seq, ts, idx.index(i), stencil) + _free_operator(u, grid, k)
    t = family.times[i]
    if family.frame == "lab":
        lhs = lhs - _one_body(grid, k, 0.5 * omega**2 * grid.r2()) * u
        g, c = 1.0, 1.0
    else:
        g = g_of_tau(omega, t)
        c = g ** (2 - grid.d)
    rhs = 0
    if potential is not None:
        rhs = _pair_sum(grid, k, potential, g) * u / N
        coll = 0
        for j in range(1, k + 1):
            coll = coll + family.collapsed(k, i, CollapseSpec(j, "approx", "difference", potential, g)).data
        rhs = c * (rhs + (N - k) / N * coll)
    return _l2(lhs - rhs, grid, k)


def factorized_residual(grid: Grid, trajectory, k: int, i: int, b0: float, omega: float = 0.0,
                        frame: str = "lens", stencil: int = 3) -> float:
    """GP residual of ⊗φφ̄ built from an NLS trajectory [(τ, φ)]."""
    fam = HierarchyFamily.factorized(grid, trajectory, frame, max_order=k + 1)
    return gp_residual(fam, k, i, b0, omega, stencil)


# --------------------------------------------------------- Duhamel split


@dataclass
class DuhamelParts:
    free: MarginalKernel
    potential: MarginalKernel
    interaction: MarginalKernel
    target: MarginalKernel
    error: float
    dtau: float
    level: int

    def total(self) -> np.ndarray:
        return self.free.data + self.potential.data + self.interaction.data


class _Integral:
    """Trapezoid accumulator for ∫₀^s U(s−r) F(r) dr along a uniform grid.

    The running sum is kept in Fourier space, where U is diagonal; after
    push(F_m) at s_m = mΔτ, value() returns the trapezoid sum in position space.
    """

    def __init__(self, grid: Grid, k: int, dtau: float):
        self.grid, self.k, self.dtau = grid, k, dtau
        self.step = free_kernel_symbol(grid, k, dtau)
        self.Z = None   # Σ_{r ≤ m} Δτ U(s_m − r) F̂_r
        self.F0 = None
        self.last = None
        self.m = 0

    def push(self, F: np.ndarray) -> None:
        Fh = sp.fftn(F)
        if self.Z is None:
            self.Z = self.dtau * Fh
            self.F0 = Fh
        else:
            self.Z = self.step * self.Z + self.dtau * Fh
            self.m += 1
        self.last = Fh

    def value(self) -> np.ndarray:
        if self.Z is None:
            raise ValueError("empty integral")
        G = free_kernel_symbol(self.grid, self.k, self.m * self.dtau) * self.F0
        return sp.ifftn(self.Z - 0.5 * self.dtau * (G + self.last))


def duhamel_parts(u0: WaveFunction, potential: PotentialSpec | None, omega: float, tau2: float,
                  dtau: float = 1e-3, level: int = 2) -> DuhamelParts:
    """Split u^{(2)}(τ₂) of the lens-frame N-body flow into Free + Potential + Interaction.

    The N-body flow is run with step Δτ from the lens-frame datum u0; all
    time integrals use the trapezoid rule on the same grid. Level 2 expands
    u^{(2)} once; level 3 expands the u^{(3)} inside the interaction term once more.
    """
    if level not in (2, 3):
        raise ValueError("coupling level must be 2 or 3 (cost guard)")
    if u0.frame != "lens":
        raise ValueError("duhamel_parts expects a lens-frame datum")
    N, grid = u0.N, u0.grid
    if N < level:
        raise ValueError("need N >= coupling level")
    steps = int(round(tau2 / dtau))
    cfg = SolverConfig(dt=dtau, t_end=tau2, stride=1)
    h = cfg.step if steps else dtau

    free2 = MarginalKernel(grid, 2, partial_trace(u0, 2).data, "lens", 0.0)
    if steps == 0:
        z = np.zeros_like(free2.data)
        zero = free2.replace(data=z)
        return DuhamelParts(free2, zero, zero, free2, 0.0, dtau, level)

    pot_int = _Integral(grid, 2, h)
    int_int = _Integral(grid, 2, h)
    if level == 3:
        u0_3 = partial_trace(u0, 3).data
        free3_int = _Integral(grid, 2, h)   # outer integral of B̃ U(s) u0^{(3)}
        ypot_inner = _Integral(grid, 3, h)  # inner ∫ U(s−r) c Ṽ^{(3)} u^{(3)}
        yint_inner = _Integral(grid, 3, h)  # inner ∫ U(s−r) c Σ B̃ u^{(4)}
        pot3_int = _Integral(grid, 2, h)
        int3_int = _Integral(grid, 2, h)
        flow3 = free_kernel_symbol(grid, 3, h)
        free3 = u0_3
    last = None
    for m, state in enumerate(iterate_nbody_lens(u0, potential, omega, cfg)):
        s = state.time
        g = g_of_tau(omega, s)
        c = g ** (2 - grid.d)
        u2 = partial_trace(state, 2).data
        if potential is not None:
            fpot = c * _pair_sum(grid, 2, potential, g) * u2 / N
            fint = 0
            for j in (1, 2):
                fint = fint + collapse_from_state(state, 2, CollapseSpec(j, "approx", "difference", potential, g)).data
            fint = c * fint
        else:
            fpot = np.zeros_like(u2)
            fint = np.zeros_like(u2)
        pot_int.push(fpot)
        if level == 2:
            int_int.push(fint)
        else:
            if m > 0:
                free3 = sp.ifftn(flow3 * sp.fftn(free3))
            u3 = partial_trace(state, 3).data
            if potential is not None:
                f3pot = c * _pair_sum(grid, 3, potential, g) * u3 / N
                if N > 3:
                    f3int = 0
                    for j in (1, 2, 3):
                        f3int = f3int + collapse_from_state(
                            state, 3, CollapseSpec(j, "approx", "difference", potential, g)).data
                    f3int = c * f3int
                else:
                    f3int = np.zeros_like(u3)
            else:
                f3pot = np.zeros_like(u3)
                f3int = np.zeros_like(u3)
            ypot_inner.push(f3pot)
            yint_inner.push(f3int)
            ypot = -1j * ypot_inner.value()
            yint = -1j * yint_inner.value()

            def bsum(a3):
                K3 = MarginalKernel(grid, 3, a3, "lens", s)
                out = 0
                for j in (1, 2):
                    out = out + collapse(K3, CollapseSpec(j, "approx", "difference", potential, g)).data
                return c * out

            if potential is not None:
                free3_int.push(bsum(free3))
                pot3_int.push(bsum(ypot))
                int3_int.push(bsum(yint))
            else:
                zero2 = np.zeros_like(u2)
                free3_int.push(zero2)
                pot3_int.push(zero2)
                int3_int.push(zero2)
        last = state
    target = partial_trace(last, 2)
    fr = MarginalKernel(grid, 2, sp.apply_multiplier(free2.data, free_kernel_symbol(grid, 2, last.time)),
                        "lens", last.time)
    pot = -1j * pot_int.value()
    if level == 2:
        inter = -1j * (N - 2) / N * int_int.value()
    else:
        fr = fr.replace(data=fr.data - 1j * (N - 2) / N * free3_int.value())
        pot = pot - 1j * (N - 2) / N * pot3_int.value()
        inter = -1j * (N - 2) / N * (N - 3) / N * int3_int.value()
    potk = MarginalKernel(grid, 2, pot, "lens", last.time)
    intk = MarginalKernel(grid, 2, inter, "lens", last.time)
    err = _l2(target.data - fr.data - potk.data - intk.data, grid, 2)
    return DuhamelParts(fr, potk, intk, target, err, h, level)


# -------------------------------------------------------- collapse maps


@dataclass(frozen=True)
class CollapseMap:
    """μ on {start, …, n+1}; form "bbgky" (start 3, μ(3)=2) or "gp" (start 2, μ(2)=1)."""

    n: int
    form: str
    values: tuple[int, ...]

    @property
    def start(self) -> int:
        return 3 if self.form == "bbgky" else 2

    def __call__(self, l: int) -> int:
        return self.values[l - self.start]

    def valid(self) -> bool:
        lo = 2 if self.form == "bbgky" else 1
        if self.values[0] != lo:
            return False
        return all(lo <= v < l for l, v in zip(range(self.start, self.n + 2), self.values))


MAX_DEPTH = 12


def collapse_map_count(n: int, form: str) -> int:
    """∏ of the choice counts: (n−1)! for the BBGKY form, n! for the GP form."""
    if form == "bbgky":
        return math.prod(l - 2 for l in range(4, n + 2))
    if form == "gp":
        return math.prod(j - 1 for j in range(3, n + 2))
    raise ValueError(f"unknown form {form!r}")


@dataclass(frozen=True)
class CollapseMaps:
    n: int
    form: str

    @property
    def count(self) -> int:
        return collapse_map_count(self.n, self.form)

    def __len__(self) -> int:
        return self.count

    def __iter__(self) -> Iterator[CollapseMap]:
        lo = 2 if self.form == "bbgky" else 1
        start = 3 if self.form == "bbgky" else 2
        ranges = [range(lo, l) for l in range(start + 1, self.n + 2)]
        for rest in itertools.product(*ranges):
            yield CollapseMap(self.n, self.form, (lo,) + rest)


def enumerate_collapse_maps(n: int, form: str = "bbgky") -> CollapseMaps:
    """All maps μ with μ(first) forced and μ(l) < l, in lexicographic order (lazy)."""
    if form not in ("bbgky", "gp"):
        raise ValueError(f"unknown form {form!r}")
    if n > MAX_DEPTH:
        raise ValueError(f"depth {n} exceeds {MAX_DEPTH}")
    if n < (3 if form == "bbgky" else 1):
        raise ValueError("depth too small for this form")
    return CollapseMaps(n, form)


def brute_force_maps(n: int, form: str) -> list[tuple[int, ...]]:
    """Exhaustive filter over all functions into {1..n}; cross-check for the lazy enumeration."""
    start = 3 if form == "bbgky" else 2
    lo = 2 if form == "bbgky" else 1
    dom = list(range(start, n + 2))
    out = []
    for vals in itertools.product(range(1, n + 1), repeat=len(dom)):
        if vals[0] != lo:
            continue
        if all(lo <= v < l for l, v in zip(dom, vals)):
            out.append(vals)
    return out


# -------------------------------------------------------------- report


@dataclass
class ResidualReport:
    rows: list = field(default_factory=list)

    def add(self, kind: str, k: int, tau: float, level: int, residual: float, **extra) -> None:
        self.rows.append({"kind": kind, "k": k, "tau": tau, "refinement": level,
                          "residual": residual, **extra})

    def write(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps({"residuals": self.rows}, indent=2, sort_keys=True))
        return path
