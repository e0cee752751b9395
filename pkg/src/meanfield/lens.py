"""The lens transform between the trapped lab frame (t, x) and the free frame (τ, y).

Every transform lands on a companion grid: the y-grid is the x-grid scaled by
1/cos(ωt) per axis, so the map is a pointwise amplitude and phase
multiplication and stays exactly unitary on the discrete level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import spectral as sp
from .core import Grid, MarginalKernel, WaveFunction
from .potentials import embed_one


class FocalTimeError(ValueError):
    pass


@dataclass(frozen=True)
class LensFrame:
    omega: tuple[float, ...]
    t: float

    def __post_init__(self):
        om = tuple(float(w) for w in np.atleast_1d(self.omega))
        object.__setattr__(self, "omega", om)
        for w in om:
            if w < 0 or not math.isfinite(w):
                raise ValueError(f"invalid frequency {w}")
            if abs(w * self.t) >= math.pi / 2:
                raise FocalTimeError(f"|ω t| = {abs(w * self.t):.6g} reaches the focal time π/2")

    @classmethod
    def from_tau(cls, omega, tau: float) -> "LensFrame":
        om = np.atleast_1d(np.asarray(omega, dtype=float))
        if not np.all(om == om[0]):
            raise ValueError("lens time fixes t only for an isotropic trap")
        w = float(om[0])
        t = math.atan(w * tau) / w if w > 0 else float(tau)
        return cls(tuple(om), t)

    @property
    def d(self) -> int:
        return len(self.omega)

    @property
    def cos(self) -> np.ndarray:
        return np.cos(np.asarray(self.omega) * self.t)

    @property
    def tau(self) -> np.ndarray:
        om = np.asarray(self.omega)
        out = np.full(om.shape, float(self.t))
        pos = om > 0
        out[pos] = np.tan(om[pos] * self.t) / om[pos]
        return out

    @property
    def scale(self) -> np.ndarray:
        return 1.0 / self.cos

    @property
    def g(self) -> np.ndarray:
        return self.cos

    @property
    def chirp(self) -> np.ndarray:
        """ω tan(ωt) per axis: coefficient of |x|²/2 in the lab-side phase."""
        om = np.asarray(self.omega)
        return om * np.tan(om * self.t)

    def lens_time(self) -> float:
        return float(self.tau[0])


def _frame_for(obj, omega, t) -> LensFrame:
    om = np.broadcast_to(np.asarray(omega, dtype=float), (obj.grid.d,))
    return LensFrame(tuple(om), t)


def _axis_phase(grid: Grid, ndim: int, coeffs: np.ndarray, signs) -> np.ndarray:
    """exp(i Σ_axes sign * coeff_a * x_a² / 2) over a tensor of rank ndim."""
    total = np.zeros((1,) * ndim)
    for ax in range(ndim):
        a = ax % grid.d
        x2 = grid.nodes(a) ** 2
        total = total + sp.axis_symbol(grid, ndim, ax, signs[ax] * coeffs[a] * x2 / 2)
    return np.exp(1j * total)


def lens_function(obj: WaveFunction, omega, t: float | None = None, direction: str = "to_lens") -> WaveFunction:
    """M_N^{-1} (lab → lens, direction "to_lens") or M_N (lens → lab, "to_lab").

    `t` is the lab time; it defaults to the object's own lab time (to_lens)
    or to the lab time matching its lens time (to_lab, isotropic traps).
    """
    if direction == "to_lens":
        if obj.frame != "lab":
            raise ValueError("to_lens expects a lab-frame state")
        fr = _frame_for(obj, omega, obj.time if t is None else t)
        x_grid = obj.grid
        c = fr.cos
        amp = float(np.prod(c)) ** (obj.N / 2)
        phase = _axis_phase(x_grid, obj.data.ndim, fr.chirp, [1] * obj.data.ndim)
        return WaveFunction(x_grid.scaled(fr.scale), obj.N, amp * phase * obj.data, "lens", fr.lens_time())
    if direction == "to_lab":
        if obj.frame != "lens":
            raise ValueError("to_lab expects a lens-frame state")
        fr = LensFrame.from_tau(omega, obj.time) if t is None else _frame_for(obj, omega, t)
        x_grid = obj.grid.scaled(fr.cos)
        amp = float(np.prod(fr.cos)) ** (-obj.N / 2)
        phase = _axis_phase(x_grid, obj.data.ndim, fr.chirp, [-1] * obj.data.ndim)
        return WaveFunction(x_grid, obj.N, amp * phase * obj.data, "lab", fr.t)
    raise ValueError(f"unknown direction {direction!r}")


def lens_kernel(K: MarginalKernel, omega, t: float | None = None, direction: str = "to_lens") -> MarginalKernel:
    """T_k^{-1} ("to_lens") or T_k ("to_lab") for kernels, on companion grids."""
    ndim = K.data.ndim
    half = ndim // 2
    signs = [1] * half + [-1] * half
    if direction == "to_lens":
        if K.frame != "lab":
            raise ValueError("to_lens expects a lab-frame kernel")
        fr = _frame_for(K, omega, K.time if t is None else t)
        amp = float(np.prod(fr.cos)) ** K.k
        phase = _axis_phase(K.grid, ndim, fr.chirp, signs)
        return MarginalKernel(K.grid.scaled(fr.scale), K.k, amp * phase * K.data, "lens", fr.lens_time())
    if direction == "to_lab":
        if K.frame != "lens":
            raise ValueError("to_lab expects a lens-frame kernel")
        fr = LensFrame.from_tau(omega, K.time) if t is None else _frame_for(K, omega, t)
        x_grid = K.grid.scaled(fr.cos)
        amp = float(np.prod(fr.cos)) ** (-K.k)
        phase = _axis_phase(x_grid, ndim, fr.chirp, [-s for s in signs])
        return MarginalKernel(x_grid, K.k, amp * phase * K.data, "lab", fr.t)
    raise ValueError(f"unknown direction {direction!r}")


@dataclass(frozen=True)
class LensFactor:
    """h^{(k)}(τ, y; y') kept as (phase coefficient, power of 1+ω²τ²) until applied."""

    omega: float
    tau: float
    k: int
    extra_power: int = 0  # additional (1+ω²τ²)^{-extra_power}

    def apply(self, data: np.ndarray, y_grid: Grid) -> np.ndarray:
        q = 1.0 + (self.omega * self.tau) ** 2
        coeff = self.omega**2 * self.tau / q
        ndim = data.ndim
        half = ndim // 2
        signs = [1] * half + [-1] * half
        phase = _axis_phase(y_grid, ndim, np.full(y_grid.d, coeff), signs)
        amp = math.exp(-(y_grid.d * self.k / 2 + self.extra_power) * math.log(q))
        return amp * phase * data


def _nonuniform_derivative(ts, fs):
    """Second-order derivative at the middle node of three (possibly uneven) nodes."""
    t0, t1, t2 = ts
    a, b = t1 - t0, t2 - t1
    w0 = -b / (a * (a + b))
    w1 = (b - a) / (a * b)
    w2 = a / (b * (a + b))
    return w0 * fs[0] + w1 * fs[1] + w2 * fs[2]


def conjugation_residual(kernels, omega: float, V1: np.ndarray | None = None) -> float:
    """L² norm of LHS − RHS in the kernel conjugation identity at the middle time.

    kernels: three lab-frame kernels at t−Δt, t, t+Δt on one grid.
    LHS = (i∂_τ + ½Δ_y − ½Δ_y') T_k^{-1}γ on the companion y-grid, with the
    off-time kernels spectrally interpolated to x = y cos(ωt_m);
    RHS = h^{(k)}/(1+ω²τ²) · (i∂_t − H_k + H'_k)γ, H = -½Δ + ½ω²|x|² (+ V1).
    """
    if len(kernels) < 3:
        raise ValueError("need three kernels for the centered stencil")
    if len(kernels) > 3:
        mid = len(kernels) // 2
        kernels = kernels[mid - 1: mid + 2]
    km, k0, kp = kernels
    grid, k = k0.grid, k0.k
    if any(K.grid != grid or K.frame != "lab" for K in kernels):
        raise ValueError("kernels must share one lab-frame grid")
    w = float(omega)
    ts = [K.time for K in kernels]
    t = ts[1]
    fr = LensFrame((w,) * grid.d, t)
    c = float(fr.cos[0])
    y_grid = grid.scaled(1.0 / c)
    ndim = k0.data.ndim

    lifted, taus = [], []
    for K in kernels:
        fm = LensFrame((w,) * grid.d, K.time)
        cm = float(fm.cos[0])
        data = K.data
        if K is not k0:
            for a in range(grid.d):
                E = sp.trig_interp_matrix(grid, a, grid.nodes(a) * cm / c)
                for ax in range(a, ndim, grid.d):
                    data = sp.apply_axis_matrix(data, E, ax)
        tau_m = fm.lens_time()
        taus.append(tau_m)
        lifted.append(LensFactor(w, tau_m, k).apply(data, y_grid))
    u = lifted[1]
    dtau_u = _nonuniform_derivative(taus, lifted)
    D = grid.d * k
    lap_rows = sp.laplacian(u, y_grid, range(D))
    lap_cols = sp.laplacian(u, y_grid, range(D, 2 * D))
    lhs = 1j * dtau_u + 0.5 * lap_rows - 0.5 * lap_cols

    g0 = k0.data
    dt_g = (kp.data - km.data) / (ts[2] - ts[0]) if abs((ts[2] - ts[1]) - (ts[1] - ts[0])) < 1e-14 \
        else _nonuniform_derivative(ts, [km.data, k0.data, kp.data])
    pot = _one_body_sum(grid, w, k, V1)
    hg = -0.5 * sp.laplacian(g0, grid, range(D)) + pot[0] * g0
    gh = -0.5 * sp.laplacian(g0, grid, range(D, 2 * D)) + pot[1] * g0
    lab = 1j * dt_g - hg + gh
    rhs = LensFactor(w, fr.lens_time(), k, extra_power=1).apply(lab, y_grid)
    diff = lhs - rhs
    return math.sqrt(y_grid.cell ** (2 * k) * float(np.vdot(diff, diff).real))


def _one_body_sum(grid: Grid, omega: float, k: int, V1):
    """Σ_j v(x_j) over the row axes and over the column axes of an order-k kernel."""
    v = 0.5 * omega**2 * grid.r2()
    if V1 is not None:
        v = v + V1
    rows = sum(embed_one(v, grid.d, 2 * k, j) for j in range(k))
    cols = sum(embed_one(v, grid.d, 2 * k, j) for j in range(k, 2 * k))
    return rows, cols


def momentum_terms(data: np.ndarray, grid: Grid, weight: float, j: int = 0):
    """(‖∇_j f‖², ‖x_j f‖², Im⟨∇_j f, x_j f⟩) for particle j of an array on the grid."""
    d = grid.d
    g2 = x2 = cross = 0.0
    for a in range(d):
        ax = j * d + a
        df = sp.derivative(data, grid, ax)
        xf = sp.axis_symbol(grid, data.ndim, ax, grid.nodes(a)) * data
        g2 += weight * float(np.vdot(df, df).real)
        x2 += weight * float(np.vdot(xf, xf).real)
        cross += weight * float(np.vdot(df, xf).imag)
    return g2, x2, cross


def momentum_identity_check(psi: WaveFunction, omega: float, j: int = 0) -> tuple[float, float]:
    """(⟨u, -Δ_{y_j} u⟩, ⟨ψ, P_{x_j}(t)² ψ⟩) with u the lens transform of ψ at time psi.time.

    P(t) = i∇ cos ωt − ωx sin ωt; the right side is ‖Pψ‖² evaluated directly.
    """
    if psi.frame != "lab":
        raise ValueError("expected a lab-frame state")
    fr = _frame_for(psi, omega, psi.time)
    u = lens_function(psi, omega)
    D = psi.grid.d
    lhs = momentum_terms(u.data, u.grid, u.weight, j)[0]
    rhs = 0.0
    for a in range(D):
        ax = j * D + a
        c, s, w = float(fr.cos[a]), math.sin(fr.omega[a] * fr.t), fr.omega[a]
        dpsi = sp.derivative(psi.data, psi.grid, ax)
        x = sp.axis_symbol(psi.grid, psi.data.ndim, ax, psi.grid.nodes(a))
        p = 1j * c * dpsi - w * s * x * psi.data
        rhs += psi.weight * float(np.vdot(p, p).real)
    return lhs, rhs
