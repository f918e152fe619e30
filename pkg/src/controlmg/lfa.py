"""Local Fourier analysis of Braess-Sarazin relaxation for the control system.

Symbols are evaluated for Fourier modes ``exp(i theta . x / h)``.  All
functions accept scalar frequencies or broadcastable arrays of them and
return stacked matrices of shape ``(..., n, n)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import eigenvalues

HALF_PI = 0.5 * math.pi
# two-harmonic shifts in multiples of pi, fixed order for the 12x12 symbol
HARMONIC_SHIFTS = ((0, 0), (1, 0), (0, 1), (1, 1))
# where the extrema of the high-frequency symbol ratios sit
EXTREMAL_HIGH = ((math.pi, math.pi), (HALF_PI, HALF_PI), (0.0, HALF_PI), (math.pi, 0.0),
                 (HALF_PI, 0.0), (0.0, math.pi))


class SingularFrequencyError(ValueError):
    """A symbol inverse was requested where the symbol vanishes."""


@dataclass(frozen=True)
class Frequency:
    theta1: float
    theta2: float

    def canonical(self) -> "Frequency":
        return Frequency(canonical_angle(self.theta1), canonical_angle(self.theta2))

    @property
    def is_low(self) -> bool:
        f = self.canonical()
        return -HALF_PI <= f.theta1 < HALF_PI and -HALF_PI <= f.theta2 < HALF_PI

    def as_tuple(self) -> tuple[float, float]:
        return (self.theta1, self.theta2)


def canonical_angle(t):
    """Reduce an angle into ``[-pi/2, 3pi/2)``."""
    return np.mod(np.asarray(t, dtype=float) + HALF_PI, 2.0 * math.pi) - HALF_PI


def is_low(t1, t2):
    t1, t2 = canonical_angle(t1), canonical_angle(t2)
    return (t1 < HALF_PI) & (t2 < HALF_PI)


def harmonics(theta: Frequency) -> list[Frequency]:
    if not theta.is_low:
        raise ValueError(f"{theta} is not a low frequency")
    t = theta.canonical()
    return [Frequency(float(canonical_angle(t.theta1 + s1 * math.pi)),
                      float(canonical_angle(t.theta2 + s2 * math.pi)))
            for s1, s2 in HARMONIC_SHIFTS]


def symbols_1d(theta, h: float):
    """Symbols ``(K1, M1)`` of the 1D Q1 stiffness and mass stencils."""
    if h <= 0:
        raise ValueError("h must be positive")
    c = np.cos(theta)
    return 2.0 / h * (1.0 - c), h / 3.0 * (2.0 + c)


@dataclass(frozen=True)
class ScalarSymbols:
    a: np.ndarray      # mass matrix M
    b: np.ndarray      # Q1 stiffness K
    a_fd: np.ndarray   # five-point Laplacian
    a_D: float         # diag(M)

    @property
    def a_hat(self) -> np.ndarray:
        """Inverse of the five-point symbol."""
        a_fd = np.asarray(self.a_fd)
        if np.any(np.abs(a_fd) <= 1e-14 * np.max(np.abs(a_fd), initial=1.0)):
            raise SingularFrequencyError("five-point symbol vanishes at theta = (0, 0)")
        return 1.0 / a_fd


def symbols_2d(theta1, theta2, h: float) -> ScalarSymbols:
    if h <= 0:
        raise ValueError("h must be positive")
    c1, c2 = np.cos(theta1), np.cos(theta2)
    b = 2.0 / 3.0 * (4.0 - c1 - c2 - 2.0 * c1 * c2)
    a = h * h / 9.0 * (4.0 + 2.0 * c1 + 2.0 * c2 + c1 * c2)
    a_fd = (4.0 - 2.0 * c1 - 2.0 * c2) / (h * h)
    return ScalarSymbols(a=a, b=b, a_fd=a_fd, a_D=4.0 * h * h / 9.0)


def _mat3(e11, e13, e22, e23, e31, e32, shape) -> np.ndarray:
    out = np.zeros(shape + (3, 3))
    out[..., 0, 0] = e11
    out[..., 0, 2] = e13
    out[..., 1, 1] = e22
    out[..., 1, 2] = e23
    out[..., 2, 0] = e31
    out[..., 2, 1] = e32
    return out


def symbol_saddle(theta1, theta2, beta: float, h: float) -> np.ndarray:
    s = symbols_2d(theta1, theta2, h)
    shape = np.broadcast(np.asarray(theta1), np.asarray(theta2)).shape
    return _mat3(2 * beta * s.a, -s.a, s.a, s.b, -s.a, s.b, shape)


def symbol_Kf(theta1, theta2, beta: float, h: float, alpha: float = 1.0) -> np.ndarray:
    """Stiffness-based preconditioner: ``diag(M)`` blocks replaced by ``alpha / A_fd``."""
    s = symbols_2d(theta1, theta2, h)
    a_hat = s.a_hat
    shape = np.broadcast(np.asarray(theta1), np.asarray(theta2)).shape
    return _mat3(alpha * 2 * beta * a_hat, -s.a, alpha * a_hat, s.b, -s.a, s.b, shape)


def symbol_KD(theta1, theta2, beta: float, h: float, alpha: float = 1.0) -> np.ndarray:
    s = symbols_2d(theta1, theta2, h)
    shape = np.broadcast(np.asarray(theta1), np.asarray(theta2)).shape
    return _mat3(alpha * 2 * beta * s.a_D, -s.a, alpha * s.a_D, s.b, -s.a, s.b, shape)


def symbol_preconditioner(theta1, theta2, variant: str, beta: float, h: float,
                          alpha: float = 1.0) -> np.ndarray:
    if variant == "stiffness":
        return symbol_Kf(theta1, theta2, beta, h, alpha)
    if variant == "diag":
        return symbol_KD(theta1, theta2, beta, h, alpha)
    raise ValueError(f"unknown variant {variant!r}")


def smoother_symbol(theta1, theta2, omega: float, variant: str, beta: float, h: float,
                    alpha: float = 1.0) -> np.ndarray:
    """``S = I - omega K^{-1} L``."""
    L = symbol_saddle(theta1, theta2, beta, h)
    Kp = symbol_preconditioner(theta1, theta2, variant, beta, h, alpha)
    return np.eye(3) - omega * np.linalg.solve(Kp, L)


def high_lattice(density: int, extremal: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Evenly spaced points of ``[-pi/2, 3pi/2)^2`` outside the low square."""
    t = -HALF_PI + 2.0 * math.pi * np.arange(density) / density
    T1, T2 = np.meshgrid(t, t, indexing="ij")
    keep = ~is_low(T1, T2)
    t1, t2 = T1[keep], T2[keep]
    if extremal:
        ex = np.array(EXTREMAL_HIGH)
        t1, t2 = np.concatenate([t1, ex[:, 0]]), np.concatenate([t2, ex[:, 1]])
    return t1, t2


def low_lattice(n_samples: int = 32, tau: float = math.pi / 64) -> tuple[np.ndarray, np.ndarray]:
    """``n_samples^2`` points evenly filling ``[-pi/2 + tau, pi/2 - tau]^2``."""
    if n_samples < 2 or tau <= 0:
        raise ValueError("need n_samples >= 2 and tau > 0")
    t = np.linspace(-HALF_PI + tau, HALF_PI - tau, n_samples)
    T1, T2 = np.meshgrid(t, t, indexing="ij")
    return T1.ravel(), T2.ravel()


def relaxation_eigenvalues(variant: str, beta: float = 1.0, h: float = 1.0,
                           grid_density: int = 64, alpha: float = 1.0) -> np.ndarray:
    """Eigenvalues of ``K^{-1} L`` over the sampled high frequencies, shape ``(N, 3)``."""
    t1, t2 = high_lattice(grid_density)
    L = symbol_saddle(t1, t2, beta, h)
    Kp = symbol_preconditioner(t1, t2, variant, beta, h, alpha)
    return eigenvalues(np.linalg.solve(Kp, L))


def smoothing_factor(omega: float, variant: str = "stiffness", beta: float = 1.0, h: float = 1.0,
                     grid_density: int = 64) -> float:
    if grid_density < 32:
        raise ValueError("grid_density must be at least 32")
    t1, t2 = high_lattice(grid_density)
    S = smoother_symbol(t1, t2, omega, variant, beta, h)
    return float(np.abs(eigenvalues(S)).max())


def _golden_min(f, lo: float, hi: float, width: float) -> float:
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > width:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def optimal_smoothing(variant: str = "stiffness", beta: float = 1.0, h: float = 1.0,
                      grid_density: int = 64, width: float = 1e-10) -> tuple[float, float]:
    """Minimize the smoothing factor over ``omega in (0, 2]``.

    The smoother eigenvalues are ``1 - omega * lam`` for the eigenvalues
    ``lam`` of ``K^{-1} L``, so these are computed once and the resulting
    convex envelope is minimized by golden section.
    """
    lam = relaxation_eigenvalues(variant, beta, h, grid_density).ravel()

    def mu(w):
        return float(np.abs(1.0 - w * lam).max())

    w = _golden_min(mu, 0.0, 2.0, width)
    return w, mu(w)


def closed_form_omega(variant: str = "stiffness", beta: float = 1.0, h: float = 1.0,
                      grid_density: int = 64) -> float:
    """``2 / (lam_min + lam_max)`` from the extreme real eigenvalues."""
    lam = relaxation_eigenvalues(variant, beta, h, grid_density).real
    return 2.0 / (lam.min() + lam.max())


def ratio_range(grid_density: int = 1024) -> tuple[float, float]:
    """Range of ``a / a_hat = M A_fd`` over high frequencies (h-independent)."""
    if grid_density < 64:
        raise ValueError("grid_density must be at least 64")
    t1, t2 = high_lattice(grid_density)
    s = symbols_2d(t1, t2, 1.0)
    r = s.a * s.a_fd
    return float(r.min()), float(r.max())


@dataclass(frozen=True)
class TwoGridConfig:
    nu1: int = 1
    nu2: int = 0
    beta: float = 1e-2
    h: float = 1.0 / 64
    n_samples: int = 32
    tau: float = math.pi / 64
    omega: float = 0.75
    alpha: float = 1.0
    relaxation: str = "stiffness"

    def __post_init__(self):
        if self.n_samples < 2:
            raise ValueError("n_samples must be at least 2")
        if self.tau <= 0:
            raise ValueError("tau must be positive (theta = 0 is singular)")

    @classmethod
    def from_nu(cls, nu: int, **kw) -> "TwoGridConfig":
        return cls(nu1=(nu + 1) // 2, nu2=nu // 2, **kw)


def prolongation_symbol(theta1, theta2) -> np.ndarray:
    """Bilinear interpolation weight per harmonic, shape ``(..., 4)``."""
    t1, t2 = np.asarray(theta1, dtype=float), np.asarray(theta2, dtype=float)
    out = []
    for s1, s2 in HARMONIC_SHIFTS:
        out.append(0.25 * (1 + np.cos(t1 + s1 * math.pi)) * (1 + np.cos(t2 + s2 * math.pi)))
    return np.stack(out, axis=-1)


def _block_diag4(blocks: list[np.ndarray]) -> np.ndarray:
    shape = blocks[0].shape[:-2]
    out = np.zeros(shape + (12, 12), dtype=np.result_type(*blocks))
    for k, B in enumerate(blocks):
        out[..., 3 * k:3 * k + 3, 3 * k:3 * k + 3] = B
    return out


def coarse_correction_symbol(theta1, theta2, beta: float, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(I - P L2h^{-1} R L, L)`` as 12x12 symbols over the harmonics."""
    t1, t2 = np.asarray(theta1, dtype=float), np.asarray(theta2, dtype=float)
    Ls = [symbol_saddle(t1 + s1 * math.pi, t2 + s2 * math.pi, beta, h) for s1, s2 in HARMONIC_SHIFTS]
    L = _block_diag4(Ls)
    p = prolongation_symbol(t1, t2)
    P = np.zeros(p.shape[:-1] + (12, 3))
    for k in range(4):
        P[..., 3 * k:3 * k + 3, :] = p[..., k, None, None] * np.eye(3)
    R = np.conj(np.swapaxes(P, -1, -2))
    L2h = R @ L @ P
    det = np.linalg.det(L2h)
    if np.any(np.abs(det) <= 1e-300) or not np.all(np.isfinite(det)):
        raise SingularFrequencyError("coarse-grid symbol is singular")
    T = np.eye(12) - P @ np.linalg.solve(L2h, R @ L)
    return T, L


def two_grid_symbol(theta1, theta2, cfg: TwoGridConfig) -> np.ndarray:
    """Two-grid error propagation ``S^nu2 (I - P L2h^{-1} R L) S^nu1`` as 12x12 symbols."""
    t1, t2 = np.asarray(theta1, dtype=float), np.asarray(theta2, dtype=float)
    if np.any(~is_low(t1, t2)):
        raise ValueError("two-grid symbol needs low frequencies")
    T, _ = coarse_correction_symbol(t1, t2, cfg.beta, cfg.h)
    S = _block_diag4([smoother_symbol(t1 + s1 * math.pi, t2 + s2 * math.pi, cfg.omega,
                                      cfg.relaxation, cfg.beta, cfg.h, cfg.alpha)
                      for s1, s2 in HARMONIC_SHIFTS])
    E = T
    for _ in range(cfg.nu1):
        E = E @ S
    for _ in range(cfg.nu2):
        E = S @ E
    return E


def two_grid_factor(cfg: TwoGridConfig) -> float:
    t1, t2 = low_lattice(cfg.n_samples, cfg.tau)
    E = two_grid_symbol(t1, t2, cfg)
    return float(np.abs(eigenvalues(E)).max())
