"""Partial traces, trace norms, collapsing operators and derivative weights."""
from __future__ import annotations

import csv
import math
import string
import warnings
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse.linalg import eigsh

from . import spectral as sp
from .core import Grid, MarginalKernel, WaveFunction, check_budget, product_projector
from .potentials import PotentialSpec, embed_pair, pair_table

MAX_ROWS = 4096
HERMITIAN_TOL = 1e-10


class ResolutionWarning(UserWarning):
    pass


class NotPSDError(ValueError):
    pass


# ---------------------------------------------------------------- traces


def pair_trace(a: np.ndarray, b: np.ndarray, grid: Grid, k: int, N: int) -> np.ndarray:
    """h^{d(N-k)} Σ_rest a(y, rest) conj(b(y', rest)) as an order-k kernel tensor."""
    rows = grid.n ** (grid.d * k)
    A = np.reshape(a, (rows, -1))
    B = np.reshape(b, (rows, -1))
    out = grid.cell ** (N - k) * (A @ B.conj().T)
    return out.reshape((grid.n,) * (2 * grid.d * k))


def partial_trace(psi: WaveFunction, k: int) -> MarginalKernel:
    if not 1 <= k <= psi.N:
        raise ValueError(f"order k={k} outside [1, {psi.N}]")
    check_budget(psi.grid.n ** (2 * psi.grid.d * k))
    data = pair_trace(psi.data, psi.data, psi.grid, k, psi.N)
    return MarginalKernel(psi.grid, k, data, psi.frame, psi.time)


def trace_out_last(K: MarginalKernel) -> MarginalKernel:
    """Contract the last particle of an order-(k+1) kernel."""
    if K.k < 2:
        raise ValueError("need order >= 2")
    g, k = K.grid, K.k - 1
    r, m = g.n ** (g.d * k), g.n ** g.d
    T = K.data.reshape(r, m, r, m)
    data = g.cell * np.einsum("azbz->ab", T)
    return MarginalKernel(g, k, data.reshape((g.n,) * (2 * g.d * k)), K.frame, K.time)


def trace(K: MarginalKernel) -> complex:
    return K.trace()


def hermitian_defect(K: MarginalKernel) -> float:
    M = K.matrix
    scale = max(np.abs(M).max(), 1e-300)
    return float(np.abs(M - M.conj().T).max() / scale)


def eigenvalues(K: MarginalKernel, check: bool = True) -> np.ndarray:
    """Eigenvalues of the weighted matrix h^{dk} K (ascending)."""
    if K.rows > MAX_ROWS:
        raise ValueError(f"kernel has {K.rows} rows; cap is {MAX_ROWS}")
    if check and hermitian_defect(K) > HERMITIAN_TOL:
        raise ValueError(f"kernel is not Hermitian (defect {hermitian_defect(K):.3g})")
    M = K.weighted_matrix()
    return np.linalg.eigvalsh(0.5 * (M + M.conj().T))


def trace_norm(K: MarginalKernel) -> float:
    return float(np.sum(np.abs(eigenvalues(K))))


def trace_distance_to_product(K: MarginalKernel, phi: np.ndarray, method: str = "auto") -> float:
    """Tr|K − |φ^{⊗k}⟩⟨φ^{⊗k}||.

    method "dense" diagonalizes the difference. method "rank_one" assumes K is
    positive semidefinite: subtracting a rank-one projector then leaves at most
    one negative eigenvalue λ, so the trace norm is Tr K − 1 + 2|λ|, with λ
    found by Lanczos. "auto" uses rank_one above 1024 rows.
    """
    phi = np.asarray(phi, dtype=complex).reshape((K.grid.n,) * K.grid.d)
    nrm = K.grid.cell * float(np.vdot(phi, phi).real)
    if abs(nrm - 1.0) > 1e-8:
        raise ValueError(f"reference state is not normalized (‖φ‖² = {nrm:.12g})")
    if method not in ("auto", "dense", "rank_one"):
        raise ValueError(f"unknown method {method!r}")
    # check K itself: relative to a near-zero difference the defect is rounding noise
    if hermitian_defect(K) > HERMITIAN_TOL:
        raise ValueError(f"kernel is not Hermitian (defect {hermitian_defect(K):.3g})")
    diff = K.replace(data=K.data - product_projector(phi, K.k))
    if method == "dense" or (method == "auto" and K.rows <= 1024):
        dist = float(np.sum(np.abs(eigenvalues(diff, check=False))))
    else:
        M = diff.weighted_matrix()
        M = 0.5 * (M + M.conj().T)
        scale = float(np.max(np.abs(M)))
        lam = 0.0
        if scale > 0:
            # fixed start vector keeps the result reproducible
            v0 = np.random.default_rng(0).standard_normal(M.shape[0]).astype(complex)
            lam = scale * eigsh(M / scale, k=1, which="SA", v0=v0, return_eigenvectors=False, tol=1e-14)[0]
        dist = float(np.trace(M).real) + 2 * max(-float(lam), 0.0)
    tr = K.trace()
    if abs(tr.imag) < 1e-8 and abs(tr.real - 1) < 1e-8:
        assert dist <= 2 + 1e-8, dist
    return dist


# ------------------------------------------------------------- collapses


@dataclass(frozen=True)
class CollapseSpec:
    """Collapse of order k+1 onto particle j (1-based).

    variant "exact" uses the delta contraction; "approx" smears it with
    Ṽ_{N,τ} = N^{dβ} g^d V(g N^β ·). part: 1, 2 or "difference".
    """

    j: int
    variant: str = "exact"
    part: int | str = "difference"
    potential: PotentialSpec | None = None
    g: float = 1.0

    def __post_init__(self):
        if self.j < 1:
            raise ValueError("j is 1-based")
        if self.variant not in ("exact", "approx"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.part not in (1, 2, "difference"):
            raise ValueError(f"unknown part {self.part!r}")
        if self.variant == "approx":
            if self.potential is None:
                raise ValueError("approximate collapse needs a potential")
            if not self.g > 0:
                raise ValueError("g(τ) must be positive")

    def table(self, grid: Grid) -> np.ndarray:
        """Ṽ_{N,τ}(y - z) as an (n^d, n^d) matrix."""
        check_resolution(grid, self.potential, self.g)
        m = grid.n**grid.d
        return pair_table(grid, self.potential, self.g).reshape(m, m)


def check_resolution(grid: Grid, pot: PotentialSpec, g: float = 1.0) -> bool:
    diameter = 2 * pot.width / (g * pot.scale)
    ok = diameter / min(grid.h) >= 4
    if not ok:
        warnings.warn(
            f"scaled potential spans {diameter / min(grid.h):.2f} cells (< 4); collapse is under-resolved",
            ResolutionWarning, stacklevel=3)
    return ok


@dataclass(frozen=True)
class ProductKernel:
    """⊗_{j≤k} φ(y_j) conj φ(y'_j), kept factorized."""

    grid: Grid
    phi: np.ndarray
    k: int
    frame: str = "lens"
    time: float = 0.0

    def dense(self) -> MarginalKernel:
        return MarginalKernel(self.grid, self.k, product_projector(self.phi, self.k), self.frame, self.time)


def _letters(count: int, skip: str = "") -> list[str]:
    pool = [c for c in string.ascii_letters if c not in skip]
    return pool[:count]


def _diag_last(K: MarginalKernel, j: int, prime: bool) -> np.ndarray:
    """γ(y_k, w; y'_k, w) with w = y_j (prime=False) or y'_j (prime=True), as an order-k tensor."""
    g, k1 = K.grid, K.k
    k = k1 - 1
    d = g.d
    lab = _letters(2 * d * k1)
    rows = lab[: d * k1]
    cols = lab[d * k1:]
    src = rows[(j - 1) * d: j * d] if not prime else cols[(j - 1) * d: j * d]
    sub_in = list(rows)
    sub_in[d * k: d * k1] = src
    sub_cols = list(cols)
    sub_cols[d * k: d * k1] = src
    out = rows[: d * k] + cols[: d * k]
    spec = "".join(sub_in) + "".join(sub_cols) + "->" + "".join(out)
    return np.einsum(spec, K.data)


def _smeared_diag(K: MarginalKernel) -> np.ndarray:
    """D(y_k, z; y'_k) = γ(y_k, z; y'_k, z) with z kept, shape (r, m, r)."""
    g = K.grid
    r, m = g.n ** (g.d * (K.k - 1)), g.n**g.d
    T = K.data.reshape(r, m, r, m)
    return np.einsum("azbz->azb", T)


def _collapse_approx(K: MarginalKernel, spec: CollapseSpec, part: int) -> np.ndarray:
    g = K.grid
    k = K.k - 1
    r, m = g.n ** (g.d * k), g.n**g.d
    D = _smeared_diag(K)
    W = spec.table(g)  # W[y_j, z]
    shape_k = (g.n,) * (g.d * k)
    # split the row (or column) index into (before j, y_j, after j)
    pre, post = g.n ** (g.d * (spec.j - 1)), g.n ** (g.d * (k - spec.j))
    if part == 1:
        Dv = D.reshape(pre, m, post, m, r)
        out = g.cell * np.einsum("pyqzb,yz->pyqb", Dv, W)
    else:
        Dv = D.reshape(r, m, pre, m, post)
        out = g.cell * np.einsum("azpyq,yz->apyq", Dv, W)
    return out.reshape(shape_k + shape_k)


def collapse(K, spec: CollapseSpec) -> MarginalKernel:
    """B_{j,k+1} (exact) or B̃_{N,j,k+1,τ} (approximate) of an order-(k+1) kernel."""
    if isinstance(K, ProductKernel):
        return collapse_product(K, spec)
    k = K.k - 1
    if k < 1:
        raise ValueError("collapse needs an input of order >= 2")
    if spec.j > k:
        raise ValueError(f"j={spec.j} exceeds k={k}")
    parts = [1, 2] if spec.part == "difference" else [spec.part]
    out = 0
    for p in parts:
        if spec.variant == "exact":
            val = _diag_last(K, spec.j, prime=(p == 2))
        else:
            val = _collapse_approx(K, spec, p)
        out = out + (val if p == 1 else (-val if spec.part == "difference" else val))
    return MarginalKernel(K.grid, k, out, K.frame, K.time)


def collapse_product(P: ProductKernel, spec: CollapseSpec) -> MarginalKernel:
    """Closed-form collapse of ⊗φφ̄ of order k+1 onto particle j; no order-(k+1) array is built."""
    g, k = P.grid, P.k - 1
    if k < 1 or spec.j > k:
        raise ValueError("need order >= 2 and j <= k")
    phi = np.asarray(P.phi, dtype=complex).reshape((g.n,) * g.d)
    dens = np.abs(phi) ** 2
    if spec.variant == "exact":
        field = dens
    else:
        field = (g.cell * (spec.table(g) @ dens.ravel())).reshape(dens.shape)
    # B¹: (field·φ)(y_j) conj φ(y'_j); B²: φ(y_j) conj(field·φ)(y'_j); other slots carry φφ̄
    rows_other = [phi] * k
    cols_other = [phi] * k
    terms = []
    parts = [1, 2] if spec.part == "difference" else [spec.part]
    for p in parts:
        r = list(rows_other)
        c = list(cols_other)
        if p == 1:
            r[spec.j - 1] = field * phi
        else:
            c[spec.j - 1] = field * phi
        t = r[0]
        for f in r[1:]:
            t = np.multiply.outer(t, f)
        s = c[0]
        for f in c[1:]:
            s = np.multiply.outer(s, f)
        term = np.multiply.outer(t, s.conj())
        sign = -1 if (p == 2 and spec.part == "difference") else 1
        terms.append(sign * term)
    return MarginalKernel(g, k, sum(terms), P.frame, P.time)


def collapse_from_state(psi: WaveFunction, k: int, spec: CollapseSpec) -> MarginalKernel:
    """B̃_{N,j,k+1,τ} γ^{(k+1)} for γ the marginal of ψ, via pair traces (approximate variant)."""
    if spec.variant != "approx":
        raise ValueError("state-based collapse supports the approximate variant")
    if not 1 <= spec.j <= k < psi.N:
        raise ValueError("need 1 <= j <= k < N")
    Wpsi = apply_pair(psi.data, psi.grid, psi.N, spec.j - 1, k, spec)
    out = 0
    if spec.part in (1, "difference"):
        out = out + pair_trace(Wpsi, psi.data, psi.grid, k, psi.N)
    if spec.part in (2, "difference"):
        t2 = pair_trace(psi.data, Wpsi, psi.grid, k, psi.N)
        out = out - t2 if spec.part == "difference" else out + t2
    return MarginalKernel(psi.grid, k, out, psi.frame, psi.time)


def apply_pair(data: np.ndarray, grid: Grid, N: int, i: int, j: int, spec: CollapseSpec) -> np.ndarray:
    """Multiply an N-particle array by Ṽ_{N,τ}(y_i - y_j) (0-based particles)."""
    check_resolution(grid, spec.potential, spec.g)
    table = pair_table(grid, spec.potential, spec.g)
    a, b = (i, j) if i < j else (j, i)
    return embed_pair(table, grid.d, N, a, b) * data


# ------------------------------------------------------------ weights R


def _abs_xi(grid: Grid, ndim: int, particle: int) -> np.ndarray:
    return np.sqrt(sp.xi_squared(grid, ndim, range(particle * grid.d, (particle + 1) * grid.d)))


def r_symbol(grid: Grid, k: int, mode: str = "abs_grad") -> np.ndarray:
    ndim = 2 * grid.d * k
    out = np.ones((1,) * ndim)
    for p in range(2 * k):
        a = _abs_xi(grid, ndim, p)
        if mode == "abs_grad":
            out = out * a
        elif mode == "one_plus":
            out = out * np.sqrt(1.0 + a**2)
        else:
            raise ValueError(f"unknown mode {mode!r}")
    return out


def apply_R(K: MarginalKernel, mode: str = "abs_grad") -> MarginalKernel:
    """∏|∇_{y_j}||∇_{y'_j}| ("abs_grad") or ∏(1-Δ_{y_j})^{1/2}(1-Δ_{y'_j})^{1/2} ("one_plus")."""
    data = sp.apply_multiplier(K.data, r_symbol(K.grid, K.k, mode))
    return K.replace(data=data)


def h1_bound_from_trace(u: MarginalKernel, psd_tol: float = 1e-10) -> tuple[float, float]:
    """(∫|∏(1-Δ)^{1/2}(1-Δ')^{1/2} u|², (Tr ∏(1-Δ_j) u)²)."""
    ev = eigenvalues(u)
    if ev[0] < -psd_tol * max(1.0, abs(ev[-1])):
        raise NotPSDError(f"kernel has eigenvalue {ev[0]:.3g}")
    lhs = apply_R(u, "one_plus").hs_norm() ** 2
    D = u.grid.d * u.k
    ndim = 2 * D
    sym = np.ones((1,) * ndim)
    for p in range(u.k):
        sym = sym * (1.0 + sp.xi_squared(u.grid, ndim, range(p * u.grid.d, (p + 1) * u.grid.d)))
    rows_applied = sp.apply_multiplier(u.data, sym, range(D))
    tr = u.weight * np.trace(rows_applied.reshape(u.rows, u.rows))
    rhs2 = float(tr.real) ** 2
    assert lhs <= rhs2 + 1e-8 + 1e-10 * rhs2, (lhs, rhs2)
    return lhs, rhs2


# ------------------------------------------------------- space-time norm


@dataclass(frozen=True)
class SpacetimeNorm:
    value: float
    dtau: float
    series: list  # [(τ, ‖R B̃ u‖)]


def trapezoid(values: Sequence[float], dtau: float) -> float:
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    return float(dtau * (v.sum() - 0.5 * (v[0] + v[-1])))


def spacetime_norm(trajectory: Iterable, j: int, potential: PotentialSpec, omega: float,
                   T: float | None = None, mode: str = "abs_grad") -> SpacetimeNorm:
    """∫₀^T ‖R^{(k)} B̃_{N,j,k+1,τ} u^{(k+1)}(τ)‖_{L²} dτ by the trapezoid rule.

    trajectory: (τ, kernel) pairs on a uniform τ-grid; kernels are MarginalKernel
    or ProductKernel of order k+1.
    """
    taus, norms = [], []
    for tau, u in trajectory:
        if T is not None and tau > T + 1e-12:
            break
        g = 1.0 / math.sqrt(1.0 + (omega * tau) ** 2)
        spec = CollapseSpec(j, "approx", "difference", potential, g)
        b = collapse(u, spec)
        taus.append(float(tau))
        norms.append(apply_R(b, mode).hs_norm())
    if not taus:
        raise ValueError("empty trajectory")
    if len(taus) == 1:
        return SpacetimeNorm(0.0, 0.0, list(zip(taus, norms)))
    steps = np.diff(taus)
    if np.ptp(steps) > 1e-9 * max(1.0, abs(steps.mean())):
        raise ValueError("trajectory must be sampled on a uniform τ-grid")
    dtau = float(steps.mean())
    return SpacetimeNorm(trapezoid(norms, dtau), dtau, list(zip(taus, norms)))


def write_series_csv(path, series, header=("tau", "norm")) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in series:
            w.writerow([format(float(x), ".17g") for x in row])
