"""Interaction profiles, mean-field scaling and trap potentials."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np
from scipy.integrate import quad

from .core import Grid

PROFILES = ("gaussian", "bump")


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return 2 * math.pi ** (d / 2) / math.gamma(d / 2)


@dataclass(frozen=True)
class PotentialSpec:
    """V(x) = A exp(-|x|^2/(2 width^2)) or the compact bump A exp(-1/(1-|x|^2/width^2))."""

    profile: str = "gaussian"
    A: float = 1.0
    width: float = 1.0
    beta: float | Fraction = Fraction(1, 4)
    N: int = 1
    d: int = 1

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}")
        if not self.A >= 0 or not self.width > 0:
            raise ValueError("amplitude must be >= 0 and width > 0")
        if not 0 < float(self.beta) <= 2 / 7 + 1e-15:
            raise ValueError(f"beta must lie in (0, 2/7], got {self.beta}")
        if self.N < 1:
            raise ValueError("N must be >= 1")

    @property
    def b0(self) -> float:
        if self.profile == "gaussian":
            return self.A * (2 * math.pi * self.width**2) ** (self.d / 2)
        r0 = self.width
        val, _ = quad(lambda r: math.exp(-1.0 / (1.0 - (r / r0) ** 2)) * r ** (self.d - 1),
                      0.0, r0, epsabs=0, epsrel=1e-13, limit=200)
        return self.A * sphere_area(self.d) * val

    @property
    def scale(self) -> float:
        """N^beta: inverse length scale of V_N."""
        return float(self.N) ** float(self.beta)

    def with_N(self, N: int) -> "PotentialSpec":
        return PotentialSpec(self.profile, self.A, self.width, self.beta, N, self.d)

    def with_amplitude(self, A: float) -> "PotentialSpec":
        return PotentialSpec(self.profile, A, self.width, self.beta, self.N, self.d)

    def profile_r2(self, r2) -> np.ndarray:
        """V as a function of |x|^2."""
        r2 = np.asarray(r2, dtype=float)
        if self.profile == "gaussian":
            return self.A * np.exp(-r2 / (2 * self.width**2))
        u = r2 / self.width**2
        out = np.zeros_like(u)
        inside = u < 1
        out[inside] = self.A * np.exp(-1.0 / (1.0 - u[inside]))
        return out

    def scaled_r2(self, r2, g: float = 1.0) -> np.ndarray:
        """Ṽ_{N,τ} as a function of |y|^2: N^{dβ} g^d V(g N^β y); g=1 gives V_N."""
        s = g * self.scale
        return s**self.d * self.profile_r2(np.asarray(r2) * s**2)

    def support_radius(self, g: float = 1.0) -> float:
        """Radius carrying essentially all of Ṽ_{N,τ} (5 widths for the Gaussian)."""
        w = 5 * self.width if self.profile == "gaussian" else self.width
        return w / (g * self.scale)


@dataclass(frozen=True)
class TrapSpec:
    omega: tuple[float, ...]

    def __post_init__(self):
        om = tuple(float(w) for w in np.atleast_1d(self.omega))
        if any(not (math.isfinite(w) and w >= 0) for w in om):
            raise ValueError(f"trap frequencies must be finite and >= 0, got {om}")
        object.__setattr__(self, "omega", om)

    @classmethod
    def isotropic(cls, omega: float, d: int) -> "TrapSpec":
        return cls((float(omega),) * d)

    @property
    def d(self) -> int:
        return len(self.omega)

    @property
    def is_isotropic(self) -> bool:
        return all(w == self.omega[0] for w in self.omega)

    def potential(self, grid: Grid) -> np.ndarray:
        """½ Σ_a ω_a² x_a² on the one-particle grid."""
        if grid.d != self.d:
            raise ValueError("trap dimension does not match grid")
        return sum(0.5 * w**2 * x**2 for w, x in zip(self.omega, grid.mesh()))


def pair_table(grid: Grid, pot: PotentialSpec, g: float = 1.0) -> np.ndarray:
    """Ṽ_{N,τ}(x - x') over two one-particle grids, shape (n,)*2d."""
    D = grid.d
    r2 = np.zeros((1,) * (2 * D))
    for a in range(D):
        x = grid.nodes(a)
        diff2 = (x[:, None] - x[None, :]) ** 2
        shape = [1] * (2 * D)
        shape[a] = grid.n
        shape[D + a] = grid.n
        r2 = r2 + diff2.reshape(shape)
    return pot.scaled_r2(r2, g)


def embed_pair(table: np.ndarray, d: int, N: int, i: int, j: int) -> np.ndarray:
    """View of a pair table broadcastable over an N-particle tensor at particles i<j."""
    n = table.shape[0]
    shape = [1] * (d * N)
    for a in range(d):
        shape[i * d + a] = n
        shape[j * d + a] = n
    # table axes are (particle i axes, particle j axes); i<j keeps that order
    return table.reshape(shape)


def embed_one(v: np.ndarray, d: int, N: int, j: int) -> np.ndarray:
    shape = [1] * (d * N)
    for a in range(d):
        shape[j * d + a] = v.shape[a]
    return v.reshape(shape)


def interaction_array(grid: Grid, pot: PotentialSpec, N: int, g: float = 1.0) -> np.ndarray:
    """(1/N) Σ_{i<j} Ṽ_{N,τ}(x_i - x_j) on the full N-particle grid."""
    out = np.zeros((grid.n,) * (grid.d * N))
    if N < 2:
        return out
    table = pair_table(grid, pot, g) / N
    for i, j in combinations(range(N), 2):
        out += embed_pair(table, grid.d, N, i, j)
    return out


def trap_array(grid: Grid, trap: TrapSpec, N: int) -> np.ndarray:
    v1 = trap.potential(grid)
    out = np.zeros((grid.n,) * (grid.d * N))
    for j in range(N):
        out += embed_one(v1, grid.d, N, j)
    return out


def exponent_sup(d: int, beta) -> Fraction:
    """Exponent of N in ‖Ṽ_N/N‖_∞."""
    return d * Fraction(beta) - 1


def exponent_grad_lp(d: int, beta, p) -> Fraction:
    """Exponent of N in ‖∇Ṽ_N/N‖_{L^p}."""
    b = Fraction(beta)
    return (d + 1) * b - 1 - d * b / Fraction(p)


def exponent_hess_l2(d: int, beta) -> Fraction:
    """Exponent of N in ‖∇²Ṽ_N/N‖_{L^2}."""
    b = Fraction(beta)
    return (d + 2) * b - 1 - d * b / 2
