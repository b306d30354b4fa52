"""Finite-difference space discretizations.

Assembles the discrete elliptic systems

    A_h0 U + C_h g = P_h f + D_h df

for second-order central differences in 1D (Dirichlet/Dirichlet and
Dirichlet/Neumann) and the fourth-order compact 9-point scheme on the unit
square (Dirichlet on all sides, held in mass/stiffness form).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .phi import LinearOperator

__all__ = [
    "BoundaryNode",
    "Grid1D",
    "Grid2D",
    "SemidiscreteOperators",
    "assemble_1d_dirichlet",
    "assemble_1d_dirichlet_neumann",
    "assemble_2d_ninepoint",
    "elliptic_projection",
]

# fourth-order one-sided first-derivative stencil (boundary value + 4
# interior values at spacing h)
ONE_SIDED_4 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0]) / 12.0


@dataclass
class BoundaryNode:
    """One node of the boundary-data vector consumed by C_h and D_h.

    `unknown_index` is set when the node's value is itself an unknown of
    the scheme (the Neumann endpoint).  `grad_plan` maps a coordinate axis
    to either ('data', side) when the derivative runs along a side and can
    be read off the boundary data, or ('stencil', sign, idx) for a one-sided
    difference into the interior built from the node value and the unknowns
    `idx`; sign converts the inward difference to the true d/d(axis).
    """

    coord: tuple
    kind: str                       # 'dirichlet' | 'neumann'
    side: str
    unknown_index: int | None = None
    grad_plan: dict = field(default_factory=dict)
    is_corner: bool = False


@dataclass
class Grid1D:
    n_unknown: int
    h: float
    xs: np.ndarray
    bc: tuple                       # ('dirichlet', 'dirichlet'|'neumann')
    boundary: list


@dataclass
class Grid2D:
    n: int                          # interior nodes per direction
    h: float
    xs: np.ndarray                  # unknown x coords, lexicographic by (y, x)
    ys: np.ndarray
    boundary: list


@dataclass
class SemidiscreteOperators:
    A: LinearOperator
    C_h: object                     # boundary-data vector -> grid vector
    D_h: object | None              # source-boundary vector -> grid vector
    P_h: object                     # continuous function -> grid vector
    grid: object
    # assembly internals used for elliptic solves
    L: sp.spmatrix = None
    B: sp.spmatrix | None = None
    C_s: sp.spmatrix = None
    B_b: sp.spmatrix | None = None
    _lu_L: object = None

    def solve_stiffness(self, rhs):
        if self._lu_L is None:
            self._lu_L = spla.splu(self.L.tocsc())
        return self._lu_L.solve(rhs)


def _one_sided_plan(sign, idx):
    return ("stencil", sign, np.asarray(idx, dtype=int))


def assemble_1d_dirichlet(n):
    """tridiag(1,-2,1)/h^2 on n interior nodes of [0,1], h = 1/(n+1)."""
    if n < 2:
        raise ValueError("need at least 2 interior nodes")
    h = 1.0 / (n + 1)
    xs = h * np.arange(1, n + 1)
    L = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n, n), format="lil")
    L /= h * h
    L = L.tocsr()
    C_s = sp.lil_matrix((n, 2))
    C_s[0, 0] = 1.0 / h**2
    C_s[n - 1, 1] = 1.0 / h**2
    C_s = C_s.tocsr()

    left = BoundaryNode((0.0,), "dirichlet", "left",
                        grad_plan={"x": _one_sided_plan(+1.0, range(4))})
    right = BoundaryNode((1.0,), "dirichlet", "right",
                         grad_plan={"x": _one_sided_plan(-1.0,
                                                         range(n - 1, n - 5, -1))})
    grid = Grid1D(n, h, xs, ("dirichlet", "dirichlet"), [left, right])
    A = LinearOperator.from_matrix(L)
    return SemidiscreteOperators(
        A=A, C_h=lambda g: C_s @ np.asarray(g, dtype=float), D_h=None,
        P_h=lambda f: np.asarray(f(xs), dtype=float),
        grid=grid, L=L, C_s=C_s)


def assemble_1d_dirichlet_neumann(n):
    """Dirichlet at x=0, centered Neumann at x=1; the endpoint is unknown.

    The (n+1) x (n+1) matrix ends in the row (..., 2, -2)/h^2 and the lift
    is C_h(g0, g1) = (g0/h^2, 0, ..., 2 g1/h).
    """
    if n < 2:
        raise ValueError("need at least 2 interior nodes")
    h = 1.0 / (n + 1)
    m = n + 1
    xs = h * np.arange(1, m + 1)          # last node sits at x = 1
    L = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(m, m), format="lil")
    L[m - 1, m - 2] = 2.0
    L /= h * h
    L = L.tocsr()
    C_s = sp.lil_matrix((m, 2))
    C_s[0, 0] = 1.0 / h**2
    C_s[m - 1, 1] = 2.0 / h
    C_s = C_s.tocsr()

    left = BoundaryNode((0.0,), "dirichlet", "left",
                        grad_plan={"x": _one_sided_plan(+1.0, range(4))})
    right = BoundaryNode((1.0,), "neumann", "right", unknown_index=m - 1)
    grid = Grid1D(m, h, xs, ("dirichlet", "neumann"), [left, right])
    A = LinearOperator.from_matrix(L)
    return SemidiscreteOperators(
        A=A, C_h=lambda g: C_s @ np.asarray(g, dtype=float), D_h=None,
        P_h=lambda f: np.asarray(f(xs), dtype=float),
        grid=grid, L=L, C_s=C_s)


def _boundary_nodes_2d(n, h):
    """All boundary nodes of the closed grid, lexicographic by (y, x)."""
    nodes = []
    closed = range(0, n + 2)
    for j in closed:
        for i in closed:
            if not (i in (0, n + 1) or j in (0, n + 1)):
                continue
            x, y = i * h, j * h
            on_x0, on_x1 = i == 0, i == n + 1
            on_y0, on_y1 = j == 0, j == n + 1
            corner = (on_x0 or on_x1) and (on_y0 or on_y1)
            if on_x0:
                side = "x0"
            elif on_x1:
                side = "x1"
            elif on_y0:
                side = "y0"
            else:
                side = "y1"
            plan = {}

            def flat(ii, jj):
                return (jj - 1) * n + (ii - 1)

            # derivative along a side comes from the data; across it from a
            # one-sided stencil over the 4 nearest interior unknowns
            if corner:
                plan["x"] = ("data", side)
                plan["y"] = ("data", side)
            elif on_x0:
                plan["y"] = ("data", side)
                plan["x"] = _one_sided_plan(+1.0, [flat(i + d, j)
                                                   for d in range(1, 5)])
            elif on_x1:
                plan["y"] = ("data", side)
                plan["x"] = _one_sided_plan(-1.0, [flat(i - d, j)
                                                   for d in range(1, 5)])
            elif on_y0:
                plan["x"] = ("data", side)
                plan["y"] = _one_sided_plan(+1.0, [flat(i, j + d)
                                                   for d in range(1, 5)])
            else:
                plan["x"] = ("data", side)
                plan["y"] = _one_sided_plan(-1.0, [flat(i, j - d)
                                                   for d in range(1, 5)])
            nodes.append(BoundaryNode((x, y), "dirichlet", side,
                                      grad_plan=plan, is_corner=corner))
    return nodes


def assemble_2d_ninepoint(n):
    """Fourth-order compact 9-point scheme on the unit square.

    Stencil (times 1/h^2): center -10/3, edge neighbors 2/3, corner
    neighbors 1/6; right-hand side weighted by I + (h^2/12) * five-point
    Laplacian, whose boundary couplings form D_h.  The operator is kept as
    the pair (mass, stiffness) with apply = mass_solve o stiffness.
    """
    if n < 3:
        raise ValueError("need at least 3 interior nodes per direction")
    h = 1.0 / (n + 1)
    N = n * n
    bnodes = _boundary_nodes_2d(n, h)
    bindex = {}
    for p, node in enumerate(bnodes):
        i = round(node.coord[0] / h)
        j = round(node.coord[1] / h)
        bindex[(i, j)] = p
    nb = len(bnodes)

    L = sp.lil_matrix((N, N))
    C_s = sp.lil_matrix((N, nb))
    B = sp.lil_matrix((N, N))
    B_b = sp.lil_matrix((N, nb))

    edge_w = 2.0 / 3.0 / h**2
    corner_w = 1.0 / 6.0 / h**2
    center_w = -10.0 / 3.0 / h**2

    def flat(i, j):
        return (j - 1) * n + (i - 1)

    for j in range(1, n + 1):
        for i in range(1, n + 1):
            row = flat(i, j)
            L[row, row] += center_w
            B[row, row] += 8.0 / 12.0
            for di, dj, w in ((1, 0, edge_w), (-1, 0, edge_w),
                              (0, 1, edge_w), (0, -1, edge_w),
                              (1, 1, corner_w), (1, -1, corner_w),
                              (-1, 1, corner_w), (-1, -1, corner_w)):
                ii, jj = i + di, j + dj
                if 1 <= ii <= n and 1 <= jj <= n:
                    L[row, flat(ii, jj)] += w
                else:
                    C_s[row, bindex[(ii, jj)]] += w
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = i + di, j + dj
                if 1 <= ii <= n and 1 <= jj <= n:
                    B[row, flat(ii, jj)] += 1.0 / 12.0
                else:
                    B_b[row, bindex[(ii, jj)]] += 1.0 / 12.0

    L = L.tocsr()
    B = B.tocsr()
    C_s = C_s.tocsr()
    B_b = B_b.tocsr()
    lu_B = spla.splu(B.tocsc())

    def factory(gamma):
        lu = spla.splu((B - gamma * L).tocsc())
        return lambda b: lu.solve(B @ b)

    A = LinearOperator(N, lambda v: lu_B.solve(L @ v),
                       mass_solve=lu_B.solve,
                       shifted_solver_factory=factory)

    ii = np.arange(1, n + 1)
    X, Y = np.meshgrid(ii * h, ii * h)   # row-major in y
    xs, ys = X.ravel(), Y.ravel()
    grid = Grid2D(n, h, xs, ys, bnodes)
    return SemidiscreteOperators(
        A=A,
        C_h=lambda g: lu_B.solve(C_s @ np.asarray(g, dtype=float)),
        D_h=lambda w: lu_B.solve(B_b @ np.asarray(w, dtype=float)),
        P_h=lambda f: np.asarray(f(xs, ys), dtype=float),
        grid=grid, L=L, B=B, C_s=C_s, B_b=B_b)


def elliptic_projection(ops, f, g, df=None):
    """Solve A_h0 U + C_h g = P_h f + D_h df for the grid vector U.

    `f` is a function of the node coordinates; `g` (and `df` when the
    scheme carries a D_h) are boundary-data vectors.
    """
    rhs = ops.B @ ops.P_h(f) if ops.B is not None else ops.P_h(f)
    rhs = rhs - ops.C_s @ np.asarray(g, dtype=float)
    if ops.B_b is not None and df is not None:
        rhs = rhs + ops.B_b @ np.asarray(df, dtype=float)
    return ops.solve_stiffness(rhs)


def one_sided_derivative(boundary_value, U, node, axis, h):
    """Fourth-order one-sided first derivative at a boundary node."""
    plan = node.grad_plan[axis]
    if plan[0] != "stencil":
        raise ValueError(f"node has no stencil for axis {axis}")
    _, sign, idx = plan
    vals = np.concatenate([[boundary_value], U[idx]])
    return sign * (ONE_SIDED_4 @ vals) / h
