"""Q1 / five-point operators of the distributed control problem on the unit square.

Unknowns live on interior nodes of a uniform ``n x n`` cell grid, ordered
lexicographically with x running fastest.  Dirichlet nodes are eliminated;
boundary data only enters through :func:`assemble_rhs`.  The saddle-point
unknown is stacked as ``(f, u, tau)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import linalg
from .linalg import SparseMatrix

COARSEST_CELLS = 4


@dataclass(frozen=True)
class UniformGrid:
    n_cells: int

    def __post_init__(self):
        n = self.n_cells
        if n < COARSEST_CELLS or n & (n - 1):
            raise ValueError(f"n_cells must be a power of two >= {COARSEST_CELLS}, got {n}")

    @property
    def h(self) -> float:
        return 1.0 / self.n_cells

    @property
    def n_interior(self) -> int:
        return (self.n_cells - 1) ** 2

    def coarsen(self) -> "UniformGrid":
        return UniformGrid(self.n_cells // 2)

    def nodes(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinates of all ``(n+1)^2`` nodes, shaped ``(n+1, n+1)`` as ``[y, x]``."""
        t = np.linspace(0.0, 1.0, self.n_cells + 1)
        X, Y = np.meshgrid(t, t)
        return X, Y

    def interior_mask(self) -> np.ndarray:
        m = np.zeros((self.n_cells + 1,) * 2, dtype=bool)
        m[1:-1, 1:-1] = True
        return m


@dataclass(frozen=True)
class Stencil:
    """Constant-coefficient stencil ``scale * weights`` centred on the middle entry."""

    weights: np.ndarray
    scale: float = 1.0

    @property
    def values(self) -> np.ndarray:
        return self.scale * np.asarray(self.weights, dtype=float)


def stencil_stiffness_1d(h: float) -> Stencil:
    if h <= 0:
        raise ValueError("h must be positive")
    return Stencil(np.array([-1.0, 2.0, -1.0]), 1.0 / h)


def stencil_mass_1d(h: float) -> Stencil:
    if h <= 0:
        raise ValueError("h must be positive")
    return Stencil(np.array([1.0, 4.0, 1.0]), h / 6.0)


def stencil_stiffness_2d() -> Stencil:
    return Stencil(np.array([[-1.0, -1.0, -1.0], [-1.0, 8.0, -1.0], [-1.0, -1.0, -1.0]]), 1.0 / 3.0)


def stencil_mass_2d(h: float) -> Stencil:
    return Stencil(np.array([[1.0, 4.0, 1.0], [4.0, 16.0, 4.0], [1.0, 4.0, 1.0]]), h * h / 36.0)


def stencil_fd_laplacian(h: float) -> Stencil:
    return Stencil(np.array([[0.0, -1.0, 0.0], [-1.0, 4.0, -1.0], [0.0, -1.0, 0.0]]), 1.0 / (h * h))


def _toeplitz_1d(st: Stencil, m: int) -> SparseMatrix:
    w = st.values
    return linalg.as_csr(sp.diags([w[0], w[1], w[2]], [-1, 0, 1], shape=(m, m)))


def stiffness_1d(grid: UniformGrid) -> SparseMatrix:
    return _toeplitz_1d(stencil_stiffness_1d(grid.h), grid.n_cells - 1)


def mass_1d(grid: UniformGrid) -> SparseMatrix:
    return _toeplitz_1d(stencil_mass_1d(grid.h), grid.n_cells - 1)


def assemble_stiffness_2d(grid: UniformGrid) -> SparseMatrix:
    K1, M1 = stiffness_1d(grid), mass_1d(grid)
    return linalg.add_scaled(linalg.kron(K1, M1), linalg.kron(M1, K1), 1.0, 1.0)


def assemble_mass_2d(grid: UniformGrid) -> SparseMatrix:
    M1 = mass_1d(grid)
    return linalg.kron(M1, M1)


def assemble_fd_laplacian(grid: UniformGrid) -> SparseMatrix:
    m = grid.n_cells - 1
    T = _toeplitz_1d(Stencil(np.array([-1.0, 2.0, -1.0]), 1.0 / grid.h ** 2), m)
    I = linalg.identity(m)
    return linalg.add_scaled(linalg.kron(I, T), linalg.kron(T, I), 1.0, 1.0)


def apply_stencil_full(st: Stencil, n_cells: int) -> SparseMatrix:
    """Un-eliminated operator on all ``(n+1)^2`` nodes from a 3x3 stencil.

    Taps that fall outside the closed square are dropped.  Rows of interior
    nodes coincide with the assembled FE operators; used for boundary lifts.
    """
    N = n_cells + 1
    w = st.values
    if w.ndim == 1:
        raise ValueError("expected a 2D stencil")
    rows, cols, vals = [], [], []
    jj, ii = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            c = w[dy + 1, dx + 1]
            if c == 0.0:
                continue
            tj, ti = jj + dy, ii + dx
            ok = (tj >= 0) & (tj < N) & (ti >= 0) & (ti < N)
            rows.append((jj * N + ii)[ok])
            cols.append((tj * N + ti)[ok])
            vals.append(np.full(ok.sum(), c))
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(N * N, N * N))
    return linalg.as_csr(A)


@dataclass
class SaddleSystem:
    """Blocks of the optimality system and the assembled operator

        L = [[2 beta M, 0, -M^T], [0, M, K^T], [-M, K, 0]].
    """

    M: SparseMatrix
    K: SparseMatrix
    A_fd: SparseMatrix
    beta: float
    L: SparseMatrix = field(default=None)

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.L is None:
            self.L = saddle_operator(self.M, self.K, self.beta)

    @property
    def n(self) -> int:
        return self.M.shape[0]

    def split(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = self.n
        return z[:n], z[n:2 * n], z[2 * n:]


def saddle_operator(M: SparseMatrix, K: SparseMatrix, beta: float) -> SparseMatrix:
    Mt, Kt = linalg.transpose(M), linalg.transpose(K)
    return linalg.block([[2.0 * beta * M, None, -Mt],
                         [None, M, Kt],
                         [-M, K, None]])


def assemble_saddle(grid: UniformGrid, beta: float) -> SaddleSystem:
    return SaddleSystem(M=assemble_mass_2d(grid), K=assemble_stiffness_2d(grid),
                        A_fd=assemble_fd_laplacian(grid), beta=beta)


Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class ProblemData:
    """Desired state and Dirichlet data of a control problem, with its load vector."""

    u_hat: Field
    g: Field
    rhs: np.ndarray = None


def _nodal(fun: Field | float | None, grid: UniformGrid) -> np.ndarray:
    X, Y = grid.nodes()
    if fun is None:
        return np.zeros_like(X)
    if np.isscalar(fun):
        return np.full_like(X, float(fun))
    return np.broadcast_to(np.asarray(fun(X, Y), dtype=float), X.shape).copy()


def assemble_rhs(grid: UniformGrid, beta: float, u_hat: Field | float | None,
                 g: Field | float | None) -> np.ndarray:
    """Right-hand side ``b = (b_f, b_u, b_tau)`` for desired state ``u_hat`` and
    Dirichlet data ``g`` (both sampled at the nodes).

    ``b_f = 0``; ``b_u = M_ii uh_i + M_ib (uh_b - g_b)``; ``b_tau = -K_ib g_b``.
    """
    del beta  # the control block carries no data term
    uh = _nodal(u_hat, grid).ravel()
    gb = _nodal(g, grid).ravel()
    interior = grid.interior_mask().ravel()
    bnd = ~interior
    Mf = apply_stencil_full(stencil_mass_2d(grid.h), grid.n_cells)[interior]
    Kf = apply_stencil_full(stencil_stiffness_2d(), grid.n_cells)[interior]
    b_u = Mf[:, interior] @ uh[interior] + Mf[:, bnd] @ (uh[bnd] - gb[bnd])
    b_tau = -(Kf[:, bnd] @ gb[bnd])
    return np.concatenate([np.zeros(grid.n_interior), b_u, b_tau])


def desired_state_corner(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """``(2x-1)^2 (2y-1)^2`` on the lower-left quarter of the square, zero elsewhere."""
    inside = (x <= 0.5) & (y <= 0.5)
    return np.where(inside, (2 * x - 1) ** 2 * (2 * y - 1) ** 2, 0.0)


def corner_problem(grid: UniformGrid, beta: float) -> ProblemData:
    """Control problem whose state equals the desired state on the boundary."""
    rhs = assemble_rhs(grid, beta, desired_state_corner, desired_state_corner)
    return ProblemData(desired_state_corner, desired_state_corner, rhs)


def homogeneous_problem(grid: UniformGrid, beta: float) -> ProblemData:
    return ProblemData(None, None, np.zeros(3 * grid.n_interior))


def prolongation_1d(coarse: UniformGrid, fine: UniformGrid) -> SparseMatrix:
    if fine.n_cells != 2 * coarse.n_cells:
        raise ValueError("fine grid must have twice the cells of the coarse grid")
    mc, mf = coarse.n_cells - 1, fine.n_cells - 1
    rows, cols, vals = [], [], []
    for k in range(mc):
        i = 2 * k + 1  # fine index of coarse node k
        rows += [i - 1, i, i + 1]
        cols += [k, k, k]
        vals += [0.5, 1.0, 0.5]
    return linalg.as_csr(sp.coo_matrix((vals, (rows, cols)), shape=(mf, mc)))


def prolongation(coarse: UniformGrid, fine: UniformGrid) -> SparseMatrix:
    """Scalar bilinear interpolation, fine interior x coarse interior."""
    P1 = prolongation_1d(coarse, fine)
    return linalg.kron(P1, P1)


def block_prolongation(P: SparseMatrix, n_fields: int = 3) -> SparseMatrix:
    return linalg.kron(linalg.identity(n_fields), P)


def restriction(P: SparseMatrix) -> SparseMatrix:
    return linalg.transpose(P)


def galerkin_coarsen(L: SparseMatrix, P: SparseMatrix, R: SparseMatrix) -> SparseMatrix:
    if R.shape[1] != L.shape[0] or L.shape[1] != P.shape[0]:
        raise ValueError("galerkin_coarsen: nonconforming shapes")
    return linalg.spgemm(linalg.spgemm(R, L), P)


@dataclass
class Level:
    grid: UniformGrid
    system: SaddleSystem
    P: SparseMatrix | None = None  # scalar prolongation from the next coarser level
    R: SparseMatrix | None = None


@dataclass
class Hierarchy:
    """Grid levels from finest (index 0) to the 4x4 coarsest mesh."""

    levels: list[Level]
    beta: float

    def __len__(self) -> int:
        return len(self.levels)

    @property
    def finest(self) -> Level:
        return self.levels[0]


def build_hierarchy(n_fine: int, beta: float) -> Hierarchy:
    """Galerkin-coarsened saddle operators with a rediscretized ``A_fd`` per level."""
    if n_fine < 2 * COARSEST_CELLS or n_fine & (n_fine - 1):
        raise ValueError(f"n_fine must be a power of two >= {2 * COARSEST_CELLS}, got {n_fine}")
    grid = UniformGrid(n_fine)
    levels = [Level(grid, assemble_saddle(grid, beta))]
    while grid.n_cells > COARSEST_CELLS:
        coarse = grid.coarsen()
        P = prolongation(coarse, grid)
        R = restriction(P)
        fine_sys = levels[-1].system
        levels[-1].P, levels[-1].R = P, R
        L_c = galerkin_coarsen(fine_sys.L, block_prolongation(P), block_prolongation(R))
        M_c = galerkin_coarsen(fine_sys.M, P, R)
        K_c = galerkin_coarsen(fine_sys.K, P, R)
        levels.append(Level(coarse, SaddleSystem(M=M_c, K=K_c, A_fd=assemble_fd_laplacian(coarse),
                                                 beta=beta, L=L_c)))
        grid = coarse
    return Hierarchy(levels, beta)


def write_matrix_market(A: SparseMatrix, path) -> None:
    import scipy.io
    scipy.io.mmwrite(str(path), A)
