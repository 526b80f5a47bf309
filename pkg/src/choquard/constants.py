"""Closed-form constants: Riesz normalization, HLS sharp constant, C0, the
Sobolev constant S and the two critical energy thresholds.

All quantities are Gamma-function products evaluated in double precision.
"""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass

from .errors import ConfigError, ConsistencyError, DomainError

__all__ = [
    "ProblemParams",
    "ConstantsReport",
    "gamma_fn",
    "riesz_normalization",
    "hls_sharp_constant",
    "choquard_constant",
    "sobolev_constant",
    "sobolev_constant_closed_form",
    "nehari_level_bound",
    "constraint_level_bound",
    "sphere_area",
    "constants_report",
]


@dataclass(frozen=True)
class ProblemParams:
    """Parameters (N, alpha, q) of the critical Choquard problem.

    The Choquard exponent ``p = (N + alpha) / (N - 2)`` is derived and cannot
    be set by the caller.
    """

    N: int
    alpha: float
    q: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 3:
            raise ConfigError(f"N must be an integer >= 3, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "q", float(self.q))
        if not 0.0 < self.alpha < self.N:
            raise ConfigError(f"alpha must lie in (0, N={self.N}), got {self.alpha}")
        if not 2.0 < self.q < self.critical_sobolev:
            raise ConfigError(
                f"q must lie in (2, 2N/(N-2)={self.critical_sobolev:g}), got {self.q}"
            )

    @property
    def p(self) -> float:
        return (self.N + self.alpha) / (self.N - 2)

    @property
    def critical_sobolev(self) -> float:
        return 2.0 * self.N / (self.N - 2)

    @property
    def in_existence_regime(self) -> bool:
        if self.N >= 5:
            return 2.0 < self.q < self.critical_sobolev
        if self.N == 4:
            return 3.0 < self.q < 4.0
        return False

    def require_regime(self) -> None:
        """Raise ConfigError unless N >= 5, 2 < q < 2*, or N = 4, 3 < q < 4."""
        if not self.in_existence_regime:
            raise ConfigError(
                f"(N={self.N}, q={self.q:g}) is outside the existence regime: "
                "need N >= 5 with 2 < q < 2N/(N-2), or N = 4 with 3 < q < 4"
            )


@dataclass(frozen=True)
class ConstantsReport:
    rieszNorm: float
    hlsSharp: float
    choquardC0: float
    sobolevS: float
    neharilevelBound: float
    constraintLevelBound: float

    def to_dict(self) -> dict:
        return asdict(self)


def gamma_fn(x: float) -> float:
    """Gamma function for x > 0 (libm ``tgamma``, ~1e-15 relative)."""
    x = float(x)
    if not x > 0.0 or not math.isfinite(x):
        raise DomainError(f"gamma_fn requires x > 0, got {x}")
    return math.gamma(x)


def sphere_area(N: int) -> float:
    """|S^{N-1}| = 2 pi^{N/2} / Gamma(N/2)."""
    return 2.0 * math.pi ** (N / 2) / gamma_fn(N / 2)


def _check_open(name: str, value: float, N: int) -> None:
    if not 0.0 < value < N:
        raise DomainError(f"{name} must lie in (0, N={N}), got {value}")


def riesz_normalization(N: int, alpha: float) -> float:
    """The constant in front of |x|^{-(N-alpha)} in the Riesz potential."""
    _check_open("alpha", alpha, N)
    return gamma_fn((N - alpha) / 2) / (
        gamma_fn(alpha / 2) * math.pi ** (N / 2) * 2.0**alpha
    )


def hls_sharp_constant(N: int, lam: float) -> float:
    """Sharp HLS constant C(N, lambda) for the diagonal exponents s = r = 2N/(2N - lambda)."""
    _check_open("lambda", lam, N)
    return (
        math.pi ** (lam / 2)
        * gamma_fn((N - lam) / 2)
        / gamma_fn((2 * N - lam) / 2)
        * (gamma_fn(N / 2) / gamma_fn(N)) ** (-(N - lam) / N)
    )


def choquard_constant(N: int, alpha: float) -> float:
    """C0 with B(u) <= C0 ||u||_{2*}^{2p}; equals hls_sharp_constant(N, N-alpha) * riesz_normalization(N, alpha)."""
    _check_open("alpha", alpha, N)
    return (
        (4.0 * math.pi) ** (-alpha / 2)
        * gamma_fn((N - alpha) / 2)
        / gamma_fn((N + alpha) / 2)
        * (gamma_fn(N / 2) / gamma_fn(N)) ** (-alpha / N)
    )


def sobolev_constant_closed_form(N: int) -> float:
    if int(N) != N or N < 3:
        raise DomainError(f"Sobolev constant needs integer N >= 3, got {N}")
    return math.pi * N * (N - 2) * (gamma_fn(N / 2) / gamma_fn(N)) ** (2.0 / N)


@functools.lru_cache(maxsize=None)
def sobolev_constant(N: int, rtol: float = 1e-4) -> float:
    """Best Sobolev constant S, closed form verified by quadrature.

    ||grad U||_2^2 of the instanton is computed on a wide reference grid and
    compared with S^{N/2}; a mismatch above ``rtol`` raises ConsistencyError.
    """
    S = sobolev_constant_closed_form(N)
    # local imports: radial/bubbles depend on this module
    from .bubbles import instanton
    from .radial import dirichlet_energy, make_grid

    grid = make_grid(N, 1e-6, 1e8, 4096)
    quad = dirichlet_energy(instanton(grid))
    ref = S ** (N / 2)
    if abs(quad - ref) > rtol * ref:
        raise ConsistencyError(
            f"Sobolev constant cross-check failed for N={N}: "
            f"quadrature {quad!r} vs closed form {ref!r}"
        )
    return S


def nehari_level_bound(params: ProblemParams) -> float:
    """((p-1)/(2p)) C0^{-1/(p-1)} S^{p/(p-1)}."""
    p = params.p
    C0 = choquard_constant(params.N, params.alpha)
    S = sobolev_constant(params.N)
    return (p - 1) / (2 * p) * C0 ** (-1.0 / (p - 1)) * S ** (p / (p - 1))


def constraint_level_bound(params: ProblemParams) -> float:
    """(1/2) S (2p/C0)^{1/p}."""
    p = params.p
    C0 = choquard_constant(params.N, params.alpha)
    S = sobolev_constant(params.N)
    return 0.5 * S * (2 * p / C0) ** (1.0 / p)


def constants_report(params: ProblemParams) -> ConstantsReport:
    N, alpha = params.N, params.alpha
    return ConstantsReport(
        rieszNorm=riesz_normalization(N, alpha),
        hlsSharp=hls_sharp_constant(N, N - alpha),
        choquardC0=choquard_constant(N, alpha),
        sobolevS=sobolev_constant(N),
        neharilevelBound=nehari_level_bound(params),
        constraintLevelBound=constraint_level_bound(params),
    )
