"""EERK method tableaux in the (lambda, mu, c) decomposition.

A method is stored through the coefficients of

    a_ij(z) = sum_l lambda[i,j,l] phi_l(c_i z),
    b_i(z)  = sum_l mu[i,l] phi_l(z),

with all phi arguments tied to the stage's own node (methods whose a_ij use
foreign nodes cannot be expressed here and are rejected by construction).
Coefficients are kept as exact rationals so the order and simplifying
condition checks report true zero residuals for the shipped methods.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "EERKTableau",
    "ConditionReport",
    "builtin_tableau",
    "check_order_conditions",
    "check_simplifying",
    "theorem1_verify",
    "dump_tableau",
    "load_tableau",
    "TheoremPreconditionError",
]

RESIDUAL_TOL = 1e-13


class TheoremPreconditionError(ValueError):
    """The s <= q hypothesis of the column-sum theorem does not hold."""


def _as_fraction(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(x).limit_denominator(10**12)


@dataclass(frozen=True)
class EERKTableau:
    """Explicit exponential RK tableau.

    lam maps (i, j, l) -> coefficient with 1 <= j < i <= s, 1 <= l <= s;
    mu maps (i, l) -> coefficient.  Entries for l beyond s are identically
    zero by convention and must not be supplied.
    """

    name: str
    s: int
    c: tuple
    lam: tuple        # sorted tuple of ((i, j, l), Fraction)
    mu: tuple         # sorted tuple of ((i, l), Fraction)
    classical_order: int

    @classmethod
    def create(cls, name, s, c, lam, mu, classical_order):
        c = tuple(_as_fraction(x) for x in c)
        if len(c) != s:
            raise ValueError(f"expected {s} nodes, got {len(c)}")
        lam_items = {}
        for (i, j, l), v in dict(lam).items():
            if not (1 <= j < i <= s):
                raise ValueError(
                    f"lambda[{i},{j},{l}]: explicit methods need 1 <= j < i <= s")
            if not (1 <= l <= s):
                raise ValueError(f"lambda[{i},{j},{l}]: phi index out of range")
            v = _as_fraction(v)
            if v != 0:
                lam_items[(i, j, l)] = v
        mu_items = {}
        for (i, l), v in dict(mu).items():
            if not (1 <= i <= s and 1 <= l <= s):
                raise ValueError(f"mu[{i},{l}] out of range")
            v = _as_fraction(v)
            if v != 0:
                mu_items[(i, l)] = v
        tab = cls(name=name, s=s, c=c,
                  lam=tuple(sorted(lam_items.items())),
                  mu=tuple(sorted(mu_items.items())),
                  classical_order=int(classical_order))
        # node consistency sum_{j,l} lambda[i,j,l]/l! = c_i must hold exactly
        for i in range(1, s + 1):
            total = sum(v / math.factorial(l)
                        for (ii, j, l), v in tab.lam if ii == i)
            if total != c[i - 1]:
                raise ValueError(
                    f"stage {i}: sum_(j,l) lambda/l! = {total} != c_{i} = {c[i-1]}")
        return tab

    # -- float views ------------------------------------------------------

    @property
    def c_array(self):
        return np.array([float(x) for x in self.c])

    def lam_get(self, i, j, l):
        return dict(self.lam).get((i, j, l), Fraction(0))

    def mu_get(self, i, l):
        if l > self.s:
            return Fraction(0)
        return dict(self.mu).get((i, l), Fraction(0))

    def lam_array(self):
        """Dense s x s x s float tensor, indices (i, j, l) one-based."""
        out = np.zeros((self.s + 1, self.s + 1, self.s + 1))
        for (i, j, l), v in self.lam:
            out[i, j, l] = float(v)
        return out

    def mu_array(self):
        out = np.zeros((self.s + 1, self.s + 1))
        for (i, l), v in self.mu:
            out[i, l] = float(v)
        return out


@dataclass
class ConditionReport:
    """Residuals of tableau conditions; a condition holds iff its residual
    is at most RESIDUAL_TOL."""

    conditions: dict = field(default_factory=dict)

    def add(self, key, residual):
        residual = abs(float(residual))
        self.conditions[key] = (residual <= RESIDUAL_TOL, residual)

    def ok(self, key):
        return self.conditions[key][0]

    def residual(self, key):
        return self.conditions[key][1]

    def all_ok(self):
        return all(ok for ok, _ in self.conditions.values())


# -- builtin methods -------------------------------------------------------

def builtin_tableau(name):
    """One of the bundled methods: 'rk2', 'rk2b' or 'krogstad'."""
    half = Fraction(1, 2)
    if name == "rk2":
        return EERKTableau.create(
            "rk2", 2, (0, half),
            lam={(2, 1, 1): half},
            mu={(2, 1): 1},
            classical_order=2)
    if name == "rk2b":
        return EERKTableau.create(
            "rk2b", 2, (0, half),
            lam={(2, 1, 1): half},
            mu={(1, 1): 1, (1, 2): -2, (2, 2): 2},
            classical_order=2)
    if name == "krogstad":
        return EERKTableau.create(
            "krogstad", 4, (0, half, half, 1),
            lam={(2, 1, 1): half,
                 (3, 1, 1): half, (3, 1, 2): -1, (3, 2, 2): 1,
                 (4, 1, 1): 1, (4, 1, 2): -2, (4, 3, 2): 2},
            mu={(1, 1): 1, (1, 2): -3, (1, 3): 4,
                (2, 2): 2, (2, 3): -4,
                (3, 2): 2, (3, 3): -4,
                (4, 2): -1, (4, 3): 4},
            classical_order=4)
    raise ValueError(f"unknown tableau '{name}'; choose rk2, rk2b or krogstad")


# -- condition checks ------------------------------------------------------

def _mu_column_sums(tab):
    sums = [Fraction(0)] * (tab.s + 1)
    for (i, l), v in tab.mu:
        sums[l] += v
    return sums  # index l, entry sum_i mu[i,l]


def check_order_conditions(tab, q):
    """Residuals of sum_{i,l} mu[i,l]/(l+r-1)! = 1/r! for r = 1..q."""
    if not 1 <= q <= 4:
        raise ValueError("q must be between 1 and 4")
    rep = ConditionReport()
    for r in range(1, q + 1):
        total = sum(v / math.factorial(l + r - 1) for (i, l), v in tab.mu)
        rep.add(f"order[{r}]", float(total - Fraction(1, math.factorial(r))))
    return rep


def check_simplifying(tab):
    """Residuals of the update and stage weight-sum conditions.

    Update: sum_i mu[i,1] = 1 and sum_i mu[i,l] = 0 for l >= 2.
    Stages: sum_j lambda[i,j,1] = c_i and sum_j lambda[i,j,l] = 0, l >= 2.
    """
    rep = ConditionReport()
    mu_cols = _mu_column_sums(tab)
    rep.add("mu[1]", float(mu_cols[1] - 1))
    for l in range(2, tab.s + 1):
        rep.add(f"mu[{l}]", float(mu_cols[l]))
    lam_sums = {}
    for (i, j, l), v in tab.lam:
        lam_sums[(i, l)] = lam_sums.get((i, l), Fraction(0)) + v
    for i in range(1, tab.s + 1):
        r1 = lam_sums.get((i, 1), Fraction(0)) - tab.c[i - 1]
        rep.add(f"lambda[{i},1]", float(r1))
        for l in range(2, tab.s + 1):
            rep.add(f"lambda[{i},{l}]", float(lam_sums.get((i, l), Fraction(0))))
    return rep


def check_nodes(tab):
    """Residual of sum_{j,l} lambda[i,j,l]/l! = c_i per stage."""
    rep = ConditionReport()
    for i in range(1, tab.s + 1):
        total = sum(v / math.factorial(l) for (ii, j, l), v in tab.lam if ii == i)
        rep.add(f"nodes[{i}]", float(total - tab.c[i - 1]))
    return rep


def _solve_fraction_system(M, rhs):
    """Exact Gaussian elimination over Fractions."""
    n = len(rhs)
    A = [row[:] + [rhs[i]] for i, row in enumerate(M)]
    for col in range(n):
        piv = next(r for r in range(col, n) if A[r][col] != 0)
        A[col], A[piv] = A[piv], A[col]
        pv = A[col][col]
        A[col] = [x / pv for x in A[col]]
        for r in range(n):
            if r != col and A[r][col] != 0:
                f = A[r][col]
                A[r] = [x - f * y for x, y in zip(A[r], A[col])]
    return [A[r][n] for r in range(n)]


def theorem1_verify(tab):
    """Check that classical order forces unit/zero mu column sums.

    Forms the s x s system with entries 1/(l+r-1)! in the unknown column
    sums and right side 1/r!, solves it exactly, and confirms both that the
    solution is the first canonical vector and that the tableau's actual
    column sums agree.
    """
    s, q = tab.s, tab.classical_order
    if not (s <= q <= 4):
        raise TheoremPreconditionError(
            f"theorem needs s <= q <= 4, got s={s}, q={q}")
    M = [[Fraction(1, math.factorial(l + r - 1)) for l in range(1, s + 1)]
         for r in range(1, s + 1)]
    rhs = [Fraction(1, math.factorial(r)) for r in range(1, s + 1)]
    sol = _solve_fraction_system(M, rhs)
    canonical = [Fraction(1)] + [Fraction(0)] * (s - 1)
    if any(abs(float(a - b)) > 1e-12 for a, b in zip(sol, canonical)):
        return False
    mu_cols = _mu_column_sums(tab)
    return all(abs(float(mu_cols[l] - canonical[l - 1])) <= 1e-12
               for l in range(1, s + 1))


# -- plain text serialization ---------------------------------------------

def dump_tableau(tab, path):
    """Write name, s, q and the sparse coefficient triplets in decimal.

    Nodes are not stored; they are recovered from the consistency identity
    c_i = sum_(j,l) lambda[i,j,l]/l! on load.
    """
    lines = [f"name {tab.name}", f"s {tab.s}", f"q {tab.classical_order}"]
    for (i, j, l), v in tab.lam:
        lines.append(f"lambda {i} {j} {l} {float(v)!r}")
    for (i, l), v in tab.mu:
        lines.append(f"mu {i} {l} {float(v)!r}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_tableau(path):
    name, s, q = None, None, None
    lam, mu = {}, {}
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            parts = raw.split()
            if not parts:
                continue
            kind = parts[0]
            if kind == "name":
                name = parts[1]
            elif kind == "s":
                s = int(parts[1])
            elif kind == "q":
                q = int(parts[1])
            elif kind == "lambda":
                i, j, l = map(int, parts[1:4])
                lam[(i, j, l)] = Fraction(parts[4]).limit_denominator(10**12)
            elif kind == "mu":
                i, l = map(int, parts[1:3])
                mu[(i, l)] = Fraction(parts[3]).limit_denominator(10**12)
            else:
                raise ValueError(f"unrecognized line in tableau file: {raw!r}")
    if None in (name, s, q):
        raise ValueError("tableau file missing name/s/q header")
    c = []
    for i in range(1, s + 1):
        c.append(sum((v / math.factorial(l) for (ii, j, l), v in lam.items()
                      if ii == i), Fraction(0)))
    return EERKTableau.create(name, s, c, lam, mu, q)
