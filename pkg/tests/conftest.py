import numpy as np
import pytest
import scipy.sparse as sp

from controlmg.discretization import UniformGrid, build_hierarchy


def q1_element_assembly(n_cells: int):
    """Full (n+1)^2 Q1 stiffness and mass by an element loop with 2x2 Gauss quadrature."""
    h = 1.0 / n_cells
    N = n_cells + 1
    g = np.array([-1.0, 1.0]) / np.sqrt(3.0)
    qp = 0.5 * (g + 1.0)  # reference [0,1] points, weights 1/2 each
    corners = [(0, 0), (1, 0), (0, 1), (1, 1)]

    def phi(k, s, t):
        cx, cy = corners[k]
        return (s if cx else 1 - s) * (t if cy else 1 - t)

    def dphi(k, s, t):
        cx, cy = corners[k]
        ds = (1 if cx else -1) * (t if cy else 1 - t)
        dt = (s if cx else 1 - s) * (1 if cy else -1)
        return np.array([ds, dt]) / h

    Ke = np.zeros((4, 4))
    Me = np.zeros((4, 4))
    for s in qp:
        for t in qp:
            w = 0.25 * h * h
            for a in range(4):
                for b in range(4):
                    Ke[a, b] += w * dphi(a, s, t) @ dphi(b, s, t)
                    Me[a, b] += w * phi(a, s, t) * phi(b, s, t)
    K = np.zeros((N * N, N * N))
    M = np.zeros((N * N, N * N))
    for ey in range(n_cells):
        for ex in range(n_cells):
            idx = [(ey + cy) * N + ex + cx for cx, cy in corners]
            K[np.ix_(idx, idx)] += Ke
            M[np.ix_(idx, idx)] += Me
    return K, M


def interior_index(n_cells: int) -> np.ndarray:
    N = n_cells + 1
    m = np.zeros((N, N), dtype=bool)
    m[1:-1, 1:-1] = True
    return m.ravel()


def dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A)


@pytest.fixture(scope="session")
def hier8():
    return build_hierarchy(8, 1e-2)


@pytest.fixture(scope="session")
def hier16():
    return build_hierarchy(16, 1e-2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def grid8():
    return UniformGrid(8)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else "")
        lines[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
