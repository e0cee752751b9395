"""Split-step propagation: trapped N-body flow, free kernel flow and cubic NLS."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from . import spectral as sp
from .core import Grid, MarginalKernel, WaveFunction, boundary_mass, check_budget
from .potentials import PotentialSpec, TrapSpec, interaction_array, trap_array

BOUNDARY_ALARM = 1e-8


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1e-3
    t_end: float = 1.0
    stride: int = 0  # emit every `stride` steps; 0 emits only the endpoints
    scheme: str = "strang"

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be nonnegative")
        if self.scheme != "strang":
            raise ValueError("only Strang splitting is supported")

    @property
    def steps(self) -> int:
        return max(1, int(round(self.t_end / self.dt))) if self.t_end > 0 else 0

    @property
    def step(self) -> float:
        """Effective step, t_end / steps."""
        return self.t_end / self.steps if self.steps else self.dt

    def emit_at(self, m: int) -> bool:
        return m == self.steps or (self.stride > 0 and m % self.stride == 0)


@dataclass(frozen=True)
class Hamiltonian:
    trap: TrapSpec
    interaction: PotentialSpec | None = None

    def potential(self, grid: Grid, N: int) -> np.ndarray:
        V = trap_array(grid, self.trap, N)
        if self.interaction is not None and N > 1:
            V = V + interaction_array(grid, self.interaction, N)
        return V


def _check_finite(a: np.ndarray, t: float) -> None:
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"non-finite values at t={t:.6g}; aborting")


def _split_step(data: np.ndarray, grid: Grid, cfg: SolverConfig, t0: float,
                potential_phase: Callable[[float], np.ndarray],
                axes=None) -> Iterator[tuple[float, np.ndarray]]:
    """Strang splitting with the interior half kinetic steps merged.

    potential_phase(t_mid) returns exp(-i dt V(t_mid)) (or an array-valued
    function of the current position-space data through a closure).
    """
    ndim = data.ndim
    axes = list(range(ndim)) if axes is None else axes
    dt = cfg.step
    k2 = sp.xi_squared(grid, ndim, axes)
    half = np.exp(-0.25j * dt * k2)
    full = half * half
    yield t0, data
    if cfg.steps == 0:
        return
    a = sp.fftn(data, axes) * half
    for m in range(1, cfg.steps + 1):
        tm = t0 + (m - 0.5) * dt
        x = sp.ifftn(a, axes, overwrite=True)
        x *= potential_phase(tm, x)
        a = sp.fftn(x, axes, overwrite=True)
        if cfg.emit_at(m):
            out = sp.ifftn(a * half, axes, overwrite=True)
            _check_finite(out, t0 + m * dt)
            yield t0 + m * dt, out
        a *= full if m < cfg.steps else 1.0


def iterate_nbody(psi: WaveFunction, H: Hamiltonian, cfg: SolverConfig) -> Iterator[WaveFunction]:
    if psi.frame != "lab":
        raise ValueError("evolve_nbody expects a lab-frame state")
    grid, N = psi.grid, psi.N
    check_budget(3 * grid.n ** (grid.d * N))
    vphase = np.exp(-1j * cfg.step * H.potential(grid, N))
    for t, data in _split_step(psi.data, grid, cfg, psi.time, lambda tm, x: vphase):
        yield WaveFunction(grid, N, data, "lab", t)


def evolve_nbody(psi: WaveFunction, H: Hamiltonian, cfg: SolverConfig,
                 observe: Callable[[WaveFunction], object] | None = None) -> list:
    """Trajectory of the trapped N-body flow (or observe(state) at each emitted time)."""
    out = []
    for state in iterate_nbody(psi, H, cfg):
        out.append(state if observe is None else observe(state))
    return out


def lens_coupling(b0: float, omega: float, tau: float, d: int = 3) -> float:
    """Lens-frame coupling b0 g(τ)^{2-d}, g = (1+ω²τ²)^{-1/2}; equals b0/g in d=3."""
    g = 1.0 / math.sqrt(1.0 + (omega * tau) ** 2)
    return b0 * g ** (2 - d)


def g_of_tau(omega: float, tau: float) -> float:
    return 1.0 / math.sqrt(1.0 + (omega * tau) ** 2)


def lens_interaction(grid: Grid, pot: PotentialSpec, N: int, omega: float, tau: float) -> np.ndarray:
    """g^{2-d} (1/N) Σ_{i<j} Ṽ_{N,τ}(y_i - y_j)."""
    g = g_of_tau(omega, tau)
    return g ** (2 - grid.d) * interaction_array(grid, pot, N, g)


def iterate_nbody_lens(u: WaveFunction, pot: PotentialSpec | None, omega: float,
                       cfg: SolverConfig) -> Iterator[WaveFunction]:
    """Lens-frame N-body flow in τ: free kinetic part plus the τ-dependent pair potential."""
    if u.frame != "lens":
        raise ValueError("expected a lens-frame state")
    grid, N = u.grid, u.N
    dt = cfg.step
    if pot is None or N < 2:
        phase = lambda tm, x: 1.0
    else:
        phase = lambda tm, x: np.exp(-1j * dt * lens_interaction(grid, pot, N, omega, tm))
    for t, data in _split_step(u.data, grid, cfg, u.time, phase):
        yield WaveFunction(grid, N, data, "lens", t)


def free_kernel_symbol(grid: Grid, k: int, tau: float) -> np.ndarray:
    D = grid.d * k
    rows = sp.xi_squared(grid, 2 * D, range(D))
    cols = sp.xi_squared(grid, 2 * D, range(D, 2 * D))
    return np.exp(-0.5j * tau * (rows - cols))


def evolve_free_kernel(u: MarginalKernel, tau: float) -> MarginalKernel:
    """U^{(k)}(τ) = e^{iτΔ_y/2} e^{-iτΔ_y'/2} applied exactly in Fourier space."""
    if tau == 0:
        return u.replace(time=u.time)
    data = sp.apply_multiplier(u.data, free_kernel_symbol(u.grid, u.k, tau))
    return u.replace(data=data, time=u.time + tau)


def free_evolve_function(phi: np.ndarray, grid: Grid, tau: float, axes=None) -> np.ndarray:
    """e^{iτΔ/2} applied to a function on the grid."""
    axes = list(range(phi.ndim)) if axes is None else axes
    return sp.apply_multiplier(phi, np.exp(-0.5j * tau * sp.xi_squared(grid, phi.ndim, axes)), axes)


def iterate_nls(phi0: np.ndarray, grid: Grid, trap: TrapSpec | None,
                coupling: float | Callable[[float], float], cfg: SolverConfig,
                t0: float = 0.0) -> Iterator[tuple[float, np.ndarray]]:
    """Strang splitting for i∂φ = -½Δφ + V_trap φ + c(t)|φ|²φ."""
    phi0 = np.asarray(phi0, dtype=complex).reshape((grid.n,) * grid.d)
    c = coupling if callable(coupling) else (lambda t, _c=float(coupling): _c)
    vt = np.zeros((1,) * grid.d) if trap is None else trap.potential(grid)
    dt = cfg.step

    def phase(tm, x):
        return np.exp(-1j * dt * (vt + c(tm) * (x.real**2 + x.imag**2)))

    yield from _split_step(phi0, grid, cfg, t0, phase)


def solve_nls(phi0: np.ndarray, grid: Grid, trap: TrapSpec | None,
              coupling: float | Callable[[float], float], cfg: SolverConfig,
              t0: float = 0.0) -> list[tuple[float, np.ndarray]]:
    """Trajectory [(t, φ(t))] of the cubic NLS; the trap is omitted for lens-frame runs."""
    return list(iterate_nls(phi0, grid, trap, coupling, cfg, t0))


def lens_nls_coupling(b0: float, omega: float, d: int) -> Callable[[float], float]:
    return lambda tau: lens_coupling(b0, omega, tau, d)


def apply_hamiltonian(data: np.ndarray, grid: Grid, V: np.ndarray) -> np.ndarray:
    return -0.5 * sp.laplacian(data, grid) + V * data


def energy_expectation(psi: WaveFunction, H: Hamiltonian) -> float:
    """⟨ψ, H ψ⟩ with a spectral kinetic term and pointwise potentials."""
    if psi.frame != "lab":
        raise ValueError("energy is defined for lab-frame states")
    w = psi.weight
    kin = 0.5 * sp.grad_norm2(psi.data, psi.grid, w)
    pot = w * float(np.sum(H.potential(psi.grid, psi.N) * np.abs(psi.data) ** 2))
    return kin + pot


def nls_energy(phi: np.ndarray, grid: Grid, trap: TrapSpec | None, b0: float) -> float:
    """∫ ½|∇φ|² + V_trap|φ|² + (b0/2)|φ|⁴."""
    w = grid.cell
    dens = np.abs(phi) ** 2
    e = 0.5 * sp.grad_norm2(phi, grid, w) + 0.5 * b0 * w * float(np.sum(dens**2))
    if trap is not None:
        e += w * float(np.sum(trap.potential(grid) * dens))
    return e


def mass(phi: np.ndarray, grid: Grid, particles: int = 1) -> float:
    return grid.cell**particles * float(np.vdot(phi, phi).real)


def boundary_alarm(data: np.ndarray, grid: Grid) -> bool:
    return boundary_mass(data, grid) > BOUNDARY_ALARM
