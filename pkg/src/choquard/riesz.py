"""Radial Riesz potential I_alpha * f and the nonlocal energy B(u).

For radial f the convolution reduces to

    (I_alpha * f)(r) = int_0^inf K(r, s) f(s) s^{N-1} ds,
    K(r, s) = Cbar |S^{N-2}| int_0^pi (r^2 + s^2 - 2 r s cos t)^{-(N-alpha)/2} sin^{N-2} t dt.

K is homogeneous of degree -(N-alpha), so K(r, s) = Cbar |S^{N-2}|
max(r, s)^{-(N-alpha)} Phi(min/max).  On a log-uniform grid min/max only takes
the M values exp(-k h), hence only M angular integrals are needed.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import integrate as spi
from scipy.special import beta as beta_fn

from .constants import riesz_normalization, sphere_area
from .errors import DataError, DomainError, GridMismatchError, UnsupportedParameterError
from .radial import RadialField, RadialGrid

__all__ = [
    "KernelMatrix",
    "angular_profile",
    "build_kernel",
    "apply_riesz",
    "choquard_energy",
    "newton_oracle",
    "save_kernel",
    "load_kernel",
]

ANGULAR_EPSABS = 1e-10


def _angular_integral(rho: float, lam: float, N: int) -> float:
    """Phi(rho) = int_0^pi (1 + rho^2 - 2 rho cos t)^{-lam/2} sin^{N-2} t dt, 0 <= rho <= 1."""
    if rho == 1.0:
        # (2 sin(t/2))^{-lam} sin^{N-2} t integrates to a Beta function
        alpha = N - lam
        return 2.0 ** (alpha - 2.0) * beta_fn((alpha - 1.0) / 2.0, (N - 1.0) / 2.0)
    if rho == 0.0:
        return beta_fn(0.5, (N - 1.0) / 2.0)

    gap2 = (1.0 - rho) ** 2

    def f(t):
        s = math.sin(0.5 * t)
        return (gap2 + 4.0 * rho * s * s) ** (-0.5 * lam) * math.sin(t) ** (N - 2)

    # near-singular scale: the integrand changes shape where 4 rho sin^2(t/2) ~ (1-rho)^2
    delta = (1.0 - rho) / math.sqrt(rho)
    pts = [d for d in (delta, 4 * delta, 16 * delta, 64 * delta) if d < math.pi]
    with warnings.catch_warnings():
        warnings.simplefilter("error", spi.IntegrationWarning)
        try:
            val, _ = spi.quad(
                f, 0.0, math.pi, points=pts or None, epsabs=ANGULAR_EPSABS, epsrel=1e-13, limit=400
            )
        except spi.IntegrationWarning:
            val = _angular_split(f, pts)
    return val


def _angular_split(f, pts) -> float:
    edges = [0.0, *pts, math.pi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", spi.IntegrationWarning)
            v, _ = spi.quad(f, a, b, epsabs=ANGULAR_EPSABS / len(edges), epsrel=1e-13, limit=800)
        total += v
    return total


def angular_profile(grid: RadialGrid, alpha: float) -> np.ndarray:
    """Phi(exp(-k h)) for k = 0 .. M-1."""
    lam = grid.N - alpha
    k = np.arange(grid.M)
    rho = np.exp(-k * grid.h)
    rho[0] = 1.0
    return np.array([_angular_integral(float(r), lam, grid.N) for r in rho])


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Dense sphere-averaged Riesz kernel on a grid (entries include Cbar)."""

    grid: RadialGrid
    alpha: float
    entries: np.ndarray

    def __post_init__(self):
        if self.entries.shape != (self.grid.M, self.grid.M):
            raise DataError("kernel entries have the wrong shape for the grid")
        self.entries.setflags(write=False)


def _check_alpha(N: int, alpha: float) -> None:
    if not 0.0 < alpha < N:
        raise DomainError(f"alpha must lie in (0, N={N}), got {alpha}")
    if alpha <= 1.0:
        raise UnsupportedParameterError(
            f"alpha={alpha} <= 1: the sphere-averaged kernel is not integrable on the "
            "diagonal; only 1 < alpha < N is supported"
        )


def build_kernel(grid: RadialGrid, alpha: float) -> KernelMatrix:
    """Tabulate K(r_i, r_j) by adaptive angular quadrature."""
    N = grid.N
    _check_alpha(N, alpha)
    phi = angular_profile(grid, alpha)
    pref = riesz_normalization(N, alpha) * sphere_area(N - 1)
    idx = np.arange(grid.M)
    gap = np.abs(idx[:, None] - idx[None, :])
    rmax = np.maximum(grid.nodes[:, None], grid.nodes[None, :])
    entries = pref * phi[gap] * rmax ** (-(N - alpha))
    return KernelMatrix(grid=grid, alpha=float(alpha), entries=entries)


def _check_grid(K: KernelMatrix, f: RadialField) -> None:
    if not K.grid.matches(f.grid):
        raise GridMismatchError("field and kernel live on different grids")


def apply_riesz(K: KernelMatrix, f: RadialField) -> RadialField:
    """(I_alpha * f)(r_i) = sum_j K(r_i, s_j) f(s_j) w_j."""
    _check_grid(K, f)
    return f.with_values(K.entries @ (K.grid.weights * f.values))


def choquard_energy(K: KernelMatrix, u: RadialField, p: float) -> float:
    """B(u) = int (I_alpha * |u|^p) |u|^p dx."""
    if p < 1.0:
        raise DomainError(f"p must be >= 1, got {p}")
    _check_grid(K, u)
    with np.errstate(over="raise", invalid="raise"):
        try:
            up = np.abs(u.values) ** p
            pot = K.entries @ (K.grid.weights * up)
            val = K.grid.sphere_area * float(np.dot(K.grid.weights, pot * up))
        except FloatingPointError as exc:
            raise DataError(f"overflow evaluating B(u): {exc}") from None
    if not math.isfinite(val):
        raise DataError("B(u) is not finite")
    return val


def newton_oracle(u: RadialField) -> RadialField:
    """I_2 * u from Newton's theorem, via prefix sums (independent of the kernel table).

    (I_2 * u)(r) = Cbar |S^{N-1}| [ r^{2-N} int_0^r u s^{N-1} ds + int_r^inf u s ds ]
    """
    g = u.grid
    N = g.N
    pref = riesz_normalization(N, 2.0) * g.sphere_area
    wu = g.weights * u.values
    inner = np.cumsum(wu)
    outer_terms = wu * g.nodes ** (2.0 - N)
    # int_{s > r_i}: reverse cumulative sum excluding the node itself
    outer = np.concatenate((np.cumsum(outer_terms[::-1])[::-1][1:], [0.0]))
    return u.with_values(pref * (g.nodes ** (2.0 - N) * inner + outer))


_HEADER = struct.Struct("<qdqdd")


def save_kernel(K: KernelMatrix, path) -> None:
    """Binary cache: header (N, alpha, M, r_min, r_max) little-endian, then M*M doubles row-major."""
    g = K.grid
    with Path(path).open("wb") as fh:
        fh.write(_HEADER.pack(g.N, K.alpha, g.M, g.r_min, g.r_max))
        fh.write(np.ascontiguousarray(K.entries, dtype="<f8").tobytes())


def load_kernel(path, grid: RadialGrid, alpha: float) -> KernelMatrix:
    path = Path(path)
    with path.open("rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise DataError(f"{path}: truncated kernel header")
        N, a, M, rmin, rmax = _HEADER.unpack(head)
        if (N, a, M, rmin, rmax) != (grid.N, float(alpha), grid.M, grid.r_min, grid.r_max):
            raise GridMismatchError(
                f"{path}: cached kernel (N={N}, alpha={a}, M={M}, [{rmin}, {rmax}]) "
                "does not match the active grid"
            )
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != M * M:
        raise DataError(f"{path}: expected {M * M} entries, found {data.size}")
    return KernelMatrix(grid=grid, alpha=float(alpha), entries=data.reshape(M, M).astype(float))
