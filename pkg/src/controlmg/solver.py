"""Braess-Sarazin relaxation and multigrid cycles for the control saddle-point system.

The relaxation preconditioner is

    K = [[alpha C, B^T], [B, 0]],   A = blockdiag(2 beta M, M),   B = [-M, K],

applied through the two-stage Schur complement solve.  ``C^{-1}`` is either
``blockdiag(A_fd / (2 beta), A_fd)`` (stiffness variant, no inversion needed)
or the inverse of ``blockdiag(2 beta diag(M), diag(M))`` (diagonal variant).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .discretization import (Hierarchy, Level, ProblemData, SaddleSystem, build_hierarchy,
                             corner_problem, galerkin_coarsen, homogeneous_problem)
from .linalg import SparseMatrix

log = logging.getLogger(__name__)

VARIANTS = ("stiffness", "diag")
SCHUR_MODES = ("exact", "inner_mg")


@dataclass(frozen=True)
class BsrConfig:
    alpha_B: float = 1.0
    omega_B: float = 0.75
    variant: str = "stiffness"
    schur_mode: str = "exact"
    schur_tol: float = 1e-12
    n_cycles: int = 3
    nu_pre: int = 2
    nu_post: int = 2
    omega_J: float = 0.8

    def __post_init__(self):
        if self.alpha_B <= 0 or self.omega_B <= 0:
            raise ValueError("alpha_B and omega_B must be positive")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.schur_mode not in SCHUR_MODES:
            raise ValueError(f"schur_mode must be one of {SCHUR_MODES}")

    @classmethod
    def exact(cls, variant: str = "stiffness", omega_B: float | None = None) -> "BsrConfig":
        if omega_B is None:
            omega_B = 0.75 if variant == "stiffness" else 8.0 / 7.0
        return cls(alpha_B=1.0, omega_B=omega_B, variant=variant)

    @classmethod
    def inexact(cls, alpha_B: float = 1.5, n_cycles: int = 3, omega_J: float = 0.8) -> "BsrConfig":
        """Inner V(2,2) Jacobi multigrid on the Schur complement, ``omega_B = 3/4 alpha_B``."""
        return cls(alpha_B=alpha_B, omega_B=0.75 * alpha_B, schur_mode="inner_mg",
                   n_cycles=n_cycles, omega_J=omega_J)


@dataclass(frozen=True)
class CycleConfig:
    nu1: int = 1
    nu2: int = 0
    gamma: int = 2
    max_levels: int | None = None

    def __post_init__(self):
        if self.nu1 < 0 or self.nu2 < 0 or self.nu1 + self.nu2 < 1:
            raise ValueError("need nu1, nu2 >= 0 and nu1 + nu2 >= 1")
        if self.gamma not in (1, 2):
            raise ValueError("gamma must be 1 (V) or 2 (W)")

    @classmethod
    def from_nu(cls, nu: int, gamma: int = 2) -> "CycleConfig":
        """Split ``nu`` total sweeps as ``ceil(nu/2)`` pre and ``floor(nu/2)`` post."""
        return cls(nu1=(nu + 1) // 2, nu2=nu // 2, gamma=gamma)


@dataclass
class ConvergenceReport:
    residual_norms: np.ndarray
    rho_hat: float
    iterations_to_tol: int | None = None
    diverged: bool = False
    converged: bool = True
    rho_tail: float | None = None  # geometric mean of the last per-cycle ratios


def schur_matrix(system: SaddleSystem, variant: str = "stiffness") -> SparseMatrix:
    """``B C^{-1} B^T``: ``(M A_fd M^T)/(2 beta) + K A_fd K^T`` for the stiffness variant."""
    M, K, beta = system.M, system.K, system.beta
    Mt, Kt = linalg.transpose(M), linalg.transpose(K)
    if variant == "stiffness":
        Cinv = system.A_fd
    elif variant == "diag":
        Cinv = linalg.as_csr(_diag_matrix(1.0 / M.diagonal()))
    else:
        raise ValueError(f"unknown variant {variant!r}")
    S1 = linalg.spgemm(linalg.spgemm(M, Cinv), Mt)
    S2 = linalg.spgemm(linalg.spgemm(K, Cinv), Kt)
    S = linalg.add_scaled(S1, S2, 1.0 / (2.0 * beta), 1.0)
    # products round asymmetrically; symmetrize to the last bit
    return linalg.add_scaled(S, linalg.transpose(S), 0.5, 0.5)


def _diag_matrix(d: np.ndarray):
    import scipy.sparse as sp
    return sp.diags(d)


def apply_Cinv(system: SaddleSystem, xf: np.ndarray, xu: np.ndarray, variant: str):
    if variant == "stiffness":
        return system.A_fd @ xf / (2.0 * system.beta), system.A_fd @ xu
    d = system.M.diagonal()
    return xf / (2.0 * system.beta * d), xu / d


class SchurMultigrid:
    """Galerkin V-cycle hierarchy with weighted Jacobi smoothing for a Schur matrix."""

    def __init__(self, S: SparseMatrix, prolongations: list[SparseMatrix]):
        self.ops = [S]
        self.P = list(prolongations)
        for P in self.P:
            self.ops.append(galerkin_coarsen(self.ops[-1], P, linalg.transpose(P)))
        self.dinv = [1.0 / A.diagonal() for A in self.ops]
        self.coarse = linalg.Factorization(self.ops[-1])

    def vcycle(self, k: int, x: np.ndarray, b: np.ndarray, nu_pre: int, nu_post: int,
               omega: float) -> np.ndarray:
        A = self.ops[k]
        if k == len(self.ops) - 1:
            return self.coarse.solve(b)
        for _ in range(nu_pre):
            x = x + omega * self.dinv[k] * (b - A @ x)
        P = self.P[k]
        ec = self.vcycle(k + 1, np.zeros(P.shape[1]), P.T @ (b - A @ x), nu_pre, nu_post, omega)
        x = x + P @ ec
        for _ in range(nu_post):
            x = x + omega * self.dinv[k] * (b - A @ x)
        return x


@dataclass
class LevelSolver:
    """Per-level relaxation data: Schur matrix and its solver."""

    level: Level
    S: SparseMatrix | None = None
    exact: linalg.SpdSolver | None = None
    inner: SchurMultigrid | None = None
    coarse: linalg.Factorization | None = None


class MultigridSolver:
    """W/V-cycle multigrid with Braess-Sarazin relaxation on a level hierarchy."""

    def __init__(self, hierarchy: Hierarchy, bsr: BsrConfig | None = None,
                 schur_method: str = "direct"):
        self.hierarchy = hierarchy
        self.bsr = bsr or BsrConfig.exact()
        self.levels: list[LevelSolver] = []
        levels = hierarchy.levels
        for k, lev in enumerate(levels):
            ls = LevelSolver(lev)
            if k == len(levels) - 1:
                ls.coarse = linalg.Factorization(lev.system.L)
            self.levels.append(ls)
        self._schur_method = schur_method

    def _schur(self, k: int) -> LevelSolver:
        # built lazily: coarse levels are cheap, the finest dominates setup
        ls = self.levels[k]
        if ls.S is None:
            ls.S = schur_matrix(ls.level.system, self.bsr.variant)
            if self.bsr.schur_mode == "exact":
                ls.exact = linalg.SpdSolver(ls.S, self.bsr.schur_tol, self._schur_method)
            else:
                Ps = [lv.level.P for lv in self.levels[k:-1]]
                ls.inner = SchurMultigrid(ls.S, Ps)
        return ls

    def inner_schur_solve(self, k: int, rhs_y: np.ndarray) -> np.ndarray:
        ls = self._schur(k)
        cfg = self.bsr
        if ls.inner is None:
            raise ValueError("inner_schur_solve needs schur_mode='inner_mg'")
        x = np.zeros_like(rhs_y)
        if not np.any(rhs_y):
            return x
        for _ in range(cfg.n_cycles):
            x = ls.inner.vcycle(0, x, rhs_y, cfg.nu_pre, cfg.nu_post, cfg.omega_J)
        return x

    def schur_solve(self, k: int, rhs_y: np.ndarray) -> np.ndarray:
        ls = self._schur(k)
        if ls.exact is not None:
            return ls.exact.solve(rhs_y)
        return self.inner_schur_solve(k, rhs_y)

    def preconditioner_solve(self, k: int, r: np.ndarray) -> np.ndarray:
        """``delta = K^{-1} r`` by the two-stage Schur procedure."""
        system = self.levels[k].level.system
        cfg = self.bsr
        M, K = system.M, system.K
        r_f, r_u, r_y = system.split(r)
        cf, cu = apply_Cinv(system, r_f, r_u, cfg.variant)
        rhs_y = -(M @ cf) + K @ cu - cfg.alpha_B * r_y
        dy = self.schur_solve(k, rhs_y)
        # B^T dy = (-M^T dy, K^T dy); M and K are symmetric
        dxf, dxu = apply_Cinv(system, r_f + M @ dy, r_u - K @ dy, cfg.variant)
        return np.concatenate([dxf / cfg.alpha_B, dxu / cfg.alpha_B, dy])

    def relax(self, k: int, z: np.ndarray, rhs: np.ndarray) -> np.ndarray:
        L = self.levels[k].level.system.L
        return z + self.bsr.omega_B * self.preconditioner_solve(k, rhs - L @ z)

    def cycle(self, z: np.ndarray, rhs: np.ndarray, cycle: CycleConfig, k: int = 0) -> np.ndarray:
        levels = self.levels
        last = len(levels) - 1 if cycle.max_levels is None else min(len(levels), cycle.max_levels) - 1
        if k == last:
            if levels[k].coarse is None:
                levels[k].coarse = linalg.Factorization(levels[k].level.system.L)
            return levels[k].coarse.solve(rhs)
        system = levels[k].level.system
        for _ in range(cycle.nu1):
            z = self.relax(k, z, rhs)
        P = levels[k].level.P
        r = rhs - system.L @ z
        n = system.n
        rc = np.concatenate([P.T @ r[i * n:(i + 1) * n] for i in range(3)])
        ec = np.zeros_like(rc)
        visits = 1 if k + 1 == last else cycle.gamma
        for _ in range(visits):
            ec = self.cycle(ec, rc, cycle, k + 1)
        nc = P.shape[1]
        z = z + np.concatenate([P @ ec[i * nc:(i + 1) * nc] for i in range(3)])
        for _ in range(cycle.nu2):
            z = self.relax(k, z, rhs)
        return z

    def measure_rho(self, cycle: CycleConfig, n_cycles: int = 100, seed: int = 0,
                    tail: int = 50) -> ConvergenceReport:
        """Residual contraction ``(||d_n|| / ||d_0||)^(1/n)`` on the homogeneous problem.

        Starts from a seeded uniform ``[-1, 1]`` guess.  The iterate is
        renormalized after every cycle (the iteration is linear with exact
        solution zero) and log-norms are accumulated, so long runs of fast
        cycles cannot underflow.
        """
        L = self.hierarchy.finest.system.L
        rng = np.random.default_rng(seed)
        z = rng.uniform(-1.0, 1.0, L.shape[0])
        rhs = np.zeros_like(z)
        d = np.linalg.norm(L @ z)
        log_norms = [math.log(d)]
        for _ in range(n_cycles):
            z = self.cycle(z / d, rhs, cycle)
            d = np.linalg.norm(L @ z)
            if d == 0.0:
                log_norms.append(-np.inf)
                break
            log_norms.append(log_norms[-1] + math.log(d))
        log_norms = np.array(log_norms)
        n = len(log_norms) - 1
        rho_hat = float(np.exp((log_norms[-1] - log_norms[0]) / n))
        ratios = np.diff(log_norms)
        rho_tail = float(np.exp(ratios[-tail:].mean()))
        diverged = n >= 10 and bool(np.all(ratios[-10:] > 0.0))
        return ConvergenceReport(residual_norms=np.exp(log_norms), rho_hat=rho_hat,
                                 diverged=diverged, converged=not diverged, rho_tail=rho_tail)

    def solve_to_tol(self, rhs: np.ndarray, cycle: CycleConfig, tol: float = 1e-10,
                     max_iter: int = 200, initial: str | np.ndarray = "random",
                     seed: int = 0) -> tuple[np.ndarray, ConvergenceReport]:
        """Cycle until ``||d_n|| / ||d_0|| < tol``.

        ``initial`` is ``"random"`` (seeded uniform ``[0, 1)``), ``"zero"`` or
        an explicit vector.  Returns the iterate and a report.
        """
        L = self.hierarchy.finest.system.L
        z = initial_guess(initial, rhs.size, seed)
        norms = [np.linalg.norm(rhs - L @ z)]
        if norms[0] == 0.0:
            return z, ConvergenceReport(np.array(norms), rho_hat=0.0, iterations_to_tol=0)
        it = None
        for n in range(1, max_iter + 1):
            z = self.cycle(z, rhs, cycle)
            norms.append(np.linalg.norm(rhs - L @ z))
            if norms[-1] / norms[0] < tol:
                it = n
                break
        norms = np.array(norms)
        rho = float((norms[-1] / norms[0]) ** (1.0 / (len(norms) - 1)))
        if it is None:
            log.warning("no convergence to %.1e within %d cycles", tol, max_iter)
        return z, ConvergenceReport(norms, rho_hat=rho, iterations_to_tol=it,
                                    converged=it is not None, diverged=bool(norms[-1] > norms[0]))


def initial_guess(initial: str | np.ndarray, size: int, seed: int = 0) -> np.ndarray:
    if isinstance(initial, str):
        if initial == "zero":
            return np.zeros(size)
        if initial == "random":
            return np.random.default_rng(seed).uniform(0.0, 1.0, size)
        raise ValueError(f"unknown initial guess {initial!r}")
    z = np.array(initial, dtype=float)
    if z.shape != (size,):
        raise ValueError("initial guess has the wrong size")
    return z


def bsr_relax(solver: MultigridSolver, k: int, z: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return solver.relax(k, z, rhs)


def mg_cycle(solver: MultigridSolver, z: np.ndarray, rhs: np.ndarray, cycle: CycleConfig) -> np.ndarray:
    return solver.cycle(z, rhs, cycle)


def measure_rho(n_fine: int, beta: float, cycle: CycleConfig, bsr: BsrConfig,
                n_cycles: int = 100, seed: int = 0) -> ConvergenceReport:
    solver = MultigridSolver(build_hierarchy(n_fine, beta), bsr)
    return solver.measure_rho(cycle, n_cycles=n_cycles, seed=seed)


def solve_to_tol(n_fine: int, beta: float, problem: ProblemData | None, cycle: CycleConfig,
                 bsr: BsrConfig, tol: float = 1e-10, max_iter: int = 200,
                 initial: str | np.ndarray = "random", seed: int = 0) -> ConvergenceReport:
    hierarchy = build_hierarchy(n_fine, beta)
    grid = hierarchy.finest.grid
    if problem is None:
        problem = corner_problem(grid, beta)
    solver = MultigridSolver(hierarchy, bsr)
    return solver.solve_to_tol(problem.rhs, cycle, tol=tol, max_iter=max_iter,
                               initial=initial, seed=seed)[1]


__all__ = [
    "BsrConfig", "CycleConfig", "ConvergenceReport", "MultigridSolver", "SchurMultigrid",
    "schur_matrix", "bsr_relax", "mg_cycle", "measure_rho", "solve_to_tol",
    "homogeneous_problem", "corner_problem",
]
