"""Grids, N-particle wave functions and marginal kernels.

Arrays are stored as full tensors: a wave function of N particles in d
dimensions has shape ``(n,) * (d * N)`` with axes ordered (particle 1 axes,
..., particle N axes); a kernel of order k has shape ``(n,) * (2 * d * k)``
with the d*k "row" axes (y_k) first and the d*k "column" axes (y'_k) after.
Row-major flattening of these tensors gives the layout used by snapshots.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FRAMES = ("lab", "lens")

# default cap on a single complex128 allocation
MEMORY_BUDGET = 4 * 2**30


class MemoryBudgetError(MemoryError):
    pass


def check_budget(num_elements: int, itemsize: int = 16, budget: int | None = None) -> None:
    cap = MEMORY_BUDGET if budget is None else budget
    nbytes = int(num_elements) * itemsize
    if nbytes > cap:
        raise MemoryBudgetError(
            f"allocation of {nbytes / 2**30:.2f} GiB exceeds budget {cap / 2**30:.2f} GiB"
        )


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [-L_a, L_a) per axis with n points."""

    d: int
    n: int
    L: tuple[float, ...]

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if not _is_pow2(self.n):
            raise ValueError(f"n must be a power of two, got {self.n}")
        if len(self.L) != self.d or any(not (x > 0 and math.isfinite(x)) for x in self.L):
            raise ValueError(f"invalid half-lengths {self.L}")

    @property
    def h(self) -> tuple[float, ...]:
        return tuple(2.0 * x / self.n for x in self.L)

    @property
    def cell(self) -> float:
        """Quadrature weight of one node (product of the per-axis spacings)."""
        return float(np.prod(self.h))

    @property
    def isotropic(self) -> bool:
        return all(x == self.L[0] for x in self.L)

    def nodes(self, axis: int = 0) -> np.ndarray:
        return -self.L[axis] + self.h[axis] * np.arange(self.n)

    def wavenumbers(self, axis: int = 0) -> np.ndarray:
        """Wavenumbers (pi/L) j, j in [-n/2, n/2), in natural order."""
        return (np.pi / self.L[axis]) * np.arange(-self.n // 2, self.n // 2)

    def fft_wavenumbers(self, axis: int = 0) -> np.ndarray:
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.h[axis])

    def scaled(self, factors) -> "Grid":
        f = np.broadcast_to(np.asarray(factors, dtype=float), (self.d,))
        return Grid(self.d, self.n, tuple(float(x * s) for x, s in zip(self.L, f)))

    def mesh(self) -> list[np.ndarray]:
        """Per-axis coordinate arrays broadcastable over a single particle."""
        out = []
        for a in range(self.d):
            shape = [1] * self.d
            shape[a] = self.n
            out.append(self.nodes(a).reshape(shape))
        return out

    def r2(self) -> np.ndarray:
        """|x|^2 on the one-particle grid."""
        return sum(x**2 for x in self.mesh())


def make_grid(d: int, n: int, L, N: int = 1, budget: int | None = None) -> Grid:
    if not _is_pow2(int(n)) or n < 8:
        raise ValueError(f"n must be a power of two >= 8, got {n}")
    Ls = tuple(float(x) for x in np.broadcast_to(np.asarray(L, dtype=float), (d,)))
    grid = Grid(int(d), int(n), Ls)
    check_budget(n ** (d * N), budget=budget)
    return grid


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class WaveFunction:
    """N-particle state; the data array is taken over and made read-only."""

    grid: Grid
    N: int
    data: np.ndarray
    frame: str = "lab"
    time: float = 0.0

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise ValueError(f"unknown frame {self.frame!r}")
        shape = (self.grid.n,) * (self.grid.d * self.N)
        data = np.asarray(self.data, dtype=complex)
        if data.size != math.prod(shape):
            raise ValueError(f"data has {data.size} entries, expected {math.prod(shape)}")
        data = data.reshape(shape)
        if not np.all(np.isfinite(data)):
            raise FloatingPointError("wave function has non-finite entries")
        object.__setattr__(self, "data", _frozen(data))

    @property
    def weight(self) -> float:
        return self.grid.cell**self.N

    def norm(self) -> float:
        return math.sqrt(self.weight * float(np.vdot(self.data, self.data).real))

    def inner(self, other: "WaveFunction") -> complex:
        return self.weight * complex(np.vdot(self.data, other.data))

    def replace(self, data=None, grid=None, frame=None, time=None) -> "WaveFunction":
        return WaveFunction(
            self.grid if grid is None else grid,
            self.N,
            self.data if data is None else data,
            self.frame if frame is None else frame,
            self.time if time is None else time,
        )


@dataclass(frozen=True, eq=False)
class MarginalKernel:
    grid: Grid
    k: int
    data: np.ndarray
    frame: str = "lab"
    time: float = 0.0

    def __post_init__(self):
        if self.frame not in FRAMES:
            raise ValueError(f"unknown frame {self.frame!r}")
        shape = (self.grid.n,) * (2 * self.grid.d * self.k)
        data = np.asarray(self.data, dtype=complex)
        if data.size != math.prod(shape):
            raise ValueError(f"kernel has {data.size} entries, expected {math.prod(shape)}")
        object.__setattr__(self, "data", _frozen(data.reshape(shape)))

    @property
    def rows(self) -> int:
        return self.grid.n ** (self.grid.d * self.k)

    @property
    def weight(self) -> float:
        return self.grid.cell**self.k

    @property
    def matrix(self) -> np.ndarray:
        return self.data.reshape(self.rows, self.rows)

    def weighted_matrix(self) -> np.ndarray:
        """Matrix of the integral operator: kernel times the quadrature weight."""
        return self.weight * self.matrix

    def trace(self) -> complex:
        return self.weight * complex(np.trace(self.matrix))

    def hs_norm(self) -> float:
        """L^2 norm of the kernel over (y_k, y'_k)."""
        return math.sqrt(self.weight**2 * float(np.vdot(self.data, self.data).real))

    def replace(self, data=None, grid=None, frame=None, time=None) -> "MarginalKernel":
        return MarginalKernel(
            self.grid if grid is None else grid,
            self.k,
            self.data if data is None else data,
            self.frame if frame is None else frame,
            self.time if time is None else time,
        )


# ---------------------------------------------------------------- builders


@dataclass(frozen=True)
class product:
    """Builder for the factorized datum phi0^{(x) N}."""

    phi0: np.ndarray


def tensor_power(phi: np.ndarray, N: int) -> np.ndarray:
    out = np.asarray(phi, dtype=complex)
    for _ in range(N - 1):
        out = np.multiply.outer(out, phi)
    return out


def make_state(grid: Grid, N: int, builder, frame: str = "lab", time: float = 0.0,
               budget: int | None = None) -> WaveFunction:
    check_budget(grid.n ** (grid.d * N), budget=budget)
    if isinstance(builder, product):
        phi = np.asarray(builder.phi0, dtype=complex)
        if phi.size != grid.n**grid.d:
            raise ValueError("one-particle array does not match the grid")
        phi = phi.reshape((grid.n,) * grid.d)
        nrm = math.sqrt(grid.cell * float(np.vdot(phi, phi).real))
        if nrm == 0.0:
            raise ValueError("zero-norm one-particle state")
        data = tensor_power(phi / nrm, N)
    else:
        data = np.asarray(builder, dtype=complex)
        if data.size != grid.n ** (grid.d * N):
            raise ValueError(
                f"explicit array has {data.size} entries, expected {grid.n ** (grid.d * N)}"
            )
        nrm = math.sqrt(grid.cell**N * float(np.vdot(data, data).real))
        if nrm == 0.0:
            raise ValueError("zero-norm state")
        data = data / nrm
    return WaveFunction(grid, N, data, frame, time)


def product_projector(phi: np.ndarray, k: int) -> np.ndarray:
    """Kernel prod_j phi(y_j) conj(phi(y'_j)) as a tensor."""
    v = tensor_power(phi, k)
    return np.multiply.outer(v, v.conj())


# ----------------------------------------------------- one-particle states


def gaussian(grid: Grid, width=1.0, center=0.0, momentum=0.0) -> np.ndarray:
    """exp(-|x-c|^2 / (2 w^2) + i p.x), unnormalized; width/center/momentum per axis."""
    w = np.broadcast_to(np.asarray(width, dtype=float), (grid.d,))
    c = np.broadcast_to(np.asarray(center, dtype=float), (grid.d,))
    p = np.broadcast_to(np.asarray(momentum, dtype=float), (grid.d,))
    out = np.ones((grid.n,) * grid.d, dtype=complex)
    for a, x in enumerate(grid.mesh()):
        out = out * np.exp(-((x - c[a]) ** 2) / (2 * w[a] ** 2) + 1j * p[a] * x)
    return out


def oscillator_ground_state(grid: Grid, omega) -> np.ndarray:
    """prod_a (omega_a/pi)^{1/4} exp(-omega_a x_a^2/2): ground state of -Δ/2 + ω²x²/2."""
    om = np.broadcast_to(np.asarray(omega, dtype=float), (grid.d,))
    out = np.ones((grid.n,) * grid.d, dtype=complex)
    for a, x in enumerate(grid.mesh()):
        out = out * (om[a] / np.pi) ** 0.25 * np.exp(-om[a] * x**2 / 2)
    return out


def coherent_state(grid: Grid, omega: float, q0, p0, t: float) -> np.ndarray:
    """Oscillator coherent state at time t (up to a global phase)."""
    q0 = np.broadcast_to(np.asarray(q0, dtype=float), (grid.d,))
    p0 = np.broadcast_to(np.asarray(p0, dtype=float), (grid.d,))
    q = q0 * np.cos(omega * t) + p0 / omega * np.sin(omega * t)
    p = -q0 * omega * np.sin(omega * t) + p0 * np.cos(omega * t)
    out = np.ones((grid.n,) * grid.d, dtype=complex)
    for a, x in enumerate(grid.mesh()):
        out = out * (omega / np.pi) ** 0.25 * np.exp(-omega * (x - q[a]) ** 2 / 2 + 1j * p[a] * x)
    return out


def random_smooth_state(grid: Grid, rng: np.random.Generator, bumps: int = 3,
                        spread: float = 1.0, scale: float = 1.0) -> np.ndarray:
    """Normalized superposition of a few random Gaussian wave packets of width ~`scale`."""
    out = np.zeros((grid.n,) * grid.d, dtype=complex)
    for _ in range(bumps):
        c = rng.uniform(-spread, spread, grid.d) * scale
        w = rng.uniform(0.7, 1.2, grid.d) * scale
        p = rng.uniform(-1.5, 1.5, grid.d) / scale
        amp = rng.normal() + 1j * rng.normal()
        out += amp * gaussian(grid, w, c, p)
    return out / math.sqrt(grid.cell * float(np.vdot(out, out).real))


def random_nbody_state(grid: Grid, N: int, rng: np.random.Generator, terms: int = 2,
                       scale: float = 1.0) -> np.ndarray:
    """Normalized sum of a few random product states (not symmetrized)."""
    out = 0
    for _ in range(terms):
        t = random_smooth_state(grid, rng, scale=scale)
        for _ in range(N - 1):
            t = np.multiply.outer(t, random_smooth_state(grid, rng, scale=scale))
        out = out + (rng.normal() + 1j * rng.normal()) * t
    return out / math.sqrt(grid.cell**N * float(np.vdot(out, out).real))


def boundary_mass(data: np.ndarray, grid: Grid, fraction: float = 0.1) -> float:
    """Mass in the outer `fraction` of the box along any axis."""
    m = max(1, int(round(fraction * grid.n)))
    mask1 = np.zeros(grid.n, dtype=bool)
    mask1[:m] = True
    mask1[-m:] = True
    dens = np.abs(data) ** 2
    inside = dens
    for ax in range(dens.ndim):
        sl = [slice(None)] * dens.ndim
        sl[ax] = ~mask1
        inside = inside[tuple(sl)]
    total = float(dens.sum())
    cell = grid.cell ** (dens.ndim // grid.d)
    return cell * (total - float(inside.sum()))
