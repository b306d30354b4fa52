"""Phi-function kernels for exponential integrators.

Evaluates phi_l for scalars and dense matrices, and computes the linear
combinations

    w = sum_{l=0..q}  tau**l * phi_l(tau*A) @ v_l

for large operators, which is the single primitive every time stepper needs.
The operator path appends a small nilpotent block carrying the v_l to A and
marches the resulting linear ODE with an Arnoldi projection per substep.
Operators that expose a shifted solve use a shift-and-invert Krylov basis,
whose dimension stays small independently of ||tau*A||; apply-only
operators fall back to a polynomial basis with time substepping.  The dense
path (augmented matrix exponential) is the oracle the Krylov results are
tested against.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

__all__ = [
    "phi_scalar",
    "phi_dense",
    "phi_combination",
    "arnoldi",
    "LinearOperator",
    "KrylovBasis",
    "KrylovConvergenceError",
]

# Switch between the short Taylor series and the exp-based recurrence.
# Below this the recurrence loses ~1/|z| digits to cancellation.
_TAYLOR_SWITCH = 0.5

# Shift for the shift-and-invert basis, as a fraction of the substep.
_SAI_GAMMA_FRACTION = 0.1

# Target ||dt * A|| per substep for the polynomial fallback basis
# (converges like exp(-m^2 / ||dt*A||), so ~250 keeps m near 80).
_RHO_BUDGET = 250.0

_HAPPY_BREAKDOWN = 1e-14


class KrylovConvergenceError(RuntimeError):
    """Raised when the Arnoldi residual test cannot be met within m_max."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


def phi_scalar(l, z):
    """phi_l(z) for a real scalar z; phi_0 is exp.

    Uses the recurrence phi_{l+1}(z) = (phi_l(z) - 1/l!)/z away from the
    origin and a truncated Taylor series sum_j z**j/(j+l)! near it.
    """
    if l < 0 or l != int(l):
        raise ValueError(f"phi index must be a nonnegative integer, got {l}")
    l = int(l)
    z = float(z)
    if not math.isfinite(z):
        raise ValueError(f"argument must be finite, got {z}")
    if l == 0 or abs(z) > _TAYLOR_SWITCH:
        try:
            val = math.exp(z)
        except OverflowError:
            raise OverflowError(f"phi_{l}({z}) out of double range") from None
        for m in range(l):
            val = (val - 1.0 / math.factorial(m)) / z
        return val
    # Taylor branch: series in z starting from 1/l!
    term = 1.0 / math.factorial(l)
    total = term
    j = 0
    while True:
        j += 1
        term *= z / (j + l)
        total += term
        if abs(term) <= 1e-18 * abs(total) or j > 60:
            return total


def phi_dense(l_max, M):
    """All of [phi_0(M), ..., phi_l_max(M)] for a dense square matrix.

    Pads M with a chain of identity blocks over a nilpotent shift; one call
    to the scaling-and-squaring Pade exponential then yields every phi_l in
    the top block row.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if l_max < 0:
        raise ValueError("l_max must be >= 0")
    n = M.shape[0]
    if l_max == 0:
        return [scipy.linalg.expm(M)]
    nb = l_max + 1
    C = np.zeros((n * nb, n * nb))
    C[:n, :n] = M
    eye = np.eye(n)
    for b in range(l_max):
        C[b * n:(b + 1) * n, (b + 1) * n:(b + 2) * n] = eye
    E = scipy.linalg.expm(C)
    return [E[:n, j * n:(j + 1) * n].copy() for j in range(nb)]


class LinearOperator:
    """A matrix-free linear map on grid vectors.

    `apply` must be linear.  When the operator is held in factored mass form
    A = B^{-1} L, `mass_solve` solves B w = r.  `shifted_solver_factory`,
    when available, maps a shift gamma to a solver for (I - gamma*A) x = b
    and unlocks the fast shift-and-invert Krylov path.
    """

    def __init__(self, dimension, apply, mass_solve=None, norm_hint=None,
                 shifted_solver_factory=None):
        self.dimension = int(dimension)
        self.apply = apply
        self.mass_solve = mass_solve
        self.shifted_solver_factory = shifted_solver_factory
        self._norm_est = float(norm_hint) if norm_hint is not None else None
        self._shift_cache = {}

    @classmethod
    def from_matrix(cls, M, mass_solve=None):
        if scipy.sparse.issparse(M):
            M = M.tocsr()
            eye = scipy.sparse.identity(M.shape[0], format="csr")

            def factory(gamma):
                lu = scipy.sparse.linalg.splu((eye - gamma * M).tocsc())
                return lu.solve
        else:
            M = np.asarray(M, dtype=float)
            eye = np.eye(M.shape[0])

            def factory(gamma):
                lu = scipy.linalg.lu_factor(eye - gamma * M)
                return lambda b: scipy.linalg.lu_solve(lu, b)
        op = cls(M.shape[0], lambda v: M @ v, mass_solve=mass_solve,
                 shifted_solver_factory=factory)
        op.matrix = M
        return op

    def shifted_solve(self, gamma):
        """Cached solver for (I - gamma*A), or None if unavailable."""
        if self.shifted_solver_factory is None:
            return None
        key = float(gamma)
        if key not in self._shift_cache:
            self._shift_cache[key] = self.shifted_solver_factory(key)
        return self._shift_cache[key]

    def norm_estimate(self):
        """Cached power-iteration estimate of the dominant |eigenvalue|."""
        if self._norm_est is None:
            rng = np.random.default_rng(1234)
            v = rng.standard_normal(self.dimension)
            v /= np.linalg.norm(v)
            lam = 1.0
            for _ in range(30):
                w = self.apply(v)
                nw = np.linalg.norm(w)
                if nw == 0.0:
                    lam = 0.0
                    break
                lam = nw
                v = w / nw
            self._norm_est = 1.1 * lam + 1e-30
        return self._norm_est


@dataclass
class KrylovBasis:
    """Arnoldi factorization A V_m = V_m H_m + h_{m+1,m} v_next e_m^T."""

    m: int
    V: np.ndarray          # dimension x m, orthonormal columns
    H: np.ndarray          # (m+1) x m upper Hessenberg
    breakdown: bool
    v_next: np.ndarray | None


def _orthogonalize(V, j, w):
    # classical Gram-Schmidt with a second pass; as orthogonal as modified
    # GS with reorthogonalization and vectorizes over the basis
    h = V[:, :j + 1].T @ w
    w = w - V[:, :j + 1] @ h
    h2 = V[:, :j + 1].T @ w
    w = w - V[:, :j + 1] @ h2
    return w, h + h2


def arnoldi(A, v, m, breakdown_tol=None):
    """Arnoldi process with one reorthogonalization pass.

    Terminates early on happy breakdown (subdiagonal entry below
    1e-14 times a norm estimate of A).
    """
    v = np.asarray(v, dtype=float)
    n = A.dimension
    if v.shape != (n,):
        raise ValueError(f"start vector has shape {v.shape}, expected ({n},)")
    beta = np.linalg.norm(v)
    if beta == 0.0:
        raise ValueError("Arnoldi start vector is zero")
    if not 1 <= m <= n:
        raise ValueError(f"need 1 <= m <= dimension, got m={m}, n={n}")
    if breakdown_tol is None:
        breakdown_tol = _HAPPY_BREAKDOWN * max(A.norm_estimate(), 1.0)

    V = np.zeros((n, m + 1))
    H = np.zeros((m + 1, m))
    V[:, 0] = v / beta
    for j in range(m):
        w = A.apply(V[:, j])
        w, h = _orthogonalize(V, j, w)
        H[:j + 1, j] = h
        hn = np.linalg.norm(w)
        H[j + 1, j] = hn
        if hn <= breakdown_tol:
            return KrylovBasis(j + 1, V[:, :j + 1], H[:j + 2, :j + 1],
                               True, None)
        V[:, j + 1] = w / hn
    return KrylovBasis(m, V[:, :m], H, False, V[:, m])


def _expm_with_phi1_column(Hs):
    """exp(Hs) @ e1 together with phi_1(Hs) @ e1, via one small expm."""
    m = Hs.shape[0]
    aug = np.zeros((m + 1, m + 1))
    aug[:m, :m] = Hs
    aug[0, m] = 1.0
    E = scipy.linalg.expm(aug)
    return E[:m, 0], E[:m, m]


def _check_points(m_max, first=6):
    pts = []
    j = first
    while j < m_max:
        pts.append(j)
        j = int(math.ceil(j * 1.45))
    pts.append(m_max)
    return set(pts)


class _SubstepFailed(Exception):
    def __init__(self, residual):
        self.residual = residual


def _poly_substep(apply_aug, y0, dt, tol_abs, m_max, breakdown_tol, stats):
    """Krylov advance y -> exp(dt*Aug) y with a polynomial basis."""
    n_aug = y0.shape[0]
    beta = np.linalg.norm(y0)
    if beta == 0.0:
        return y0
    m_cap = min(m_max, n_aug)
    checks = _check_points(m_cap)
    V = np.zeros((n_aug, m_cap + 1))
    H = np.zeros((m_cap + 1, m_cap))
    V[:, 0] = y0 / beta
    last_res = np.inf
    j = 0
    while j < m_cap:
        w = apply_aug(V[:, j])
        if stats is not None:
            stats["matvecs"] = stats.get("matvecs", 0) + 1
            stats["krylov_iters"] = stats.get("krylov_iters", 0) + 1
        w, h = _orthogonalize(V, j, w)
        H[:j + 1, j] = h
        hn = np.linalg.norm(w)
        H[j + 1, j] = hn
        j += 1
        happy = hn <= breakdown_tol
        if happy or j in checks:
            u, phicol = _expm_with_phi1_column(dt * H[:j, :j])
            ynorm = beta * np.linalg.norm(u)
            res = beta * hn * abs(dt) * abs(phicol[j - 1])
            last_res = res
            if happy or res <= max(tol_abs * max(ynorm, 1e-300), 1e-300):
                return beta * (V[:, :j] @ u)
        if not happy:
            V[:, j] = w / hn
    raise _SubstepFailed(last_res)


def _sai_substep(apply_shifted, gamma, y0, dt, tol_abs, m_max, stats):
    """Krylov advance with a shift-and-invert basis K = (I - gamma*Aug)^-1.

    The projected generator is recovered as S = (I - H^-1)/gamma; the
    stopping test integrates the defect carried by the last Hessenberg
    entry over the substep.
    """
    n_aug = y0.shape[0]
    beta = np.linalg.norm(y0)
    if beta == 0.0:
        return y0
    m_cap = min(m_max, n_aug)
    checks = _check_points(m_cap, first=4)
    V = np.zeros((n_aug, m_cap + 1))
    H = np.zeros((m_cap + 1, m_cap))
    V[:, 0] = y0 / beta
    last_res = np.inf
    j = 0
    while j < m_cap:
        w = apply_shifted(V[:, j])
        if stats is not None:
            stats["matvecs"] = stats.get("matvecs", 0) + 1
            stats["krylov_iters"] = stats.get("krylov_iters", 0) + 1
        w, h = _orthogonalize(V, j, w)
        H[:j + 1, j] = h
        hn = np.linalg.norm(w)
        H[j + 1, j] = hn
        j += 1
        happy = hn <= 1e-14
        if happy or j in checks:
            Hj = H[:j, :j]
            try:
                Hinv = scipy.linalg.inv(Hj)
            except scipy.linalg.LinAlgError:
                raise _SubstepFailed(np.inf) from None
            S = (np.eye(j) - Hinv) / gamma
            u, _ = _expm_with_phi1_column(dt * S)
            if happy:
                return beta * (V[:, :j] @ u)
            # generalized residual carried by the last Hessenberg entry
            res = beta * hn * abs(Hinv[j - 1, :] @ u)
            last_res = res
            ynorm = beta * np.linalg.norm(u)
            if res <= max(tol_abs * max(ynorm, 1e-300), 1e-300):
                return beta * (V[:, :j] @ u)
        if not happy:
            V[:, j] = w / hn
    raise _SubstepFailed(last_res)


def _taylor_shifted(vs, q, t_el):
    """Inhomogeneity vectors recentered at elapsed time t_el."""
    vt = []
    for l in range(1, q + 1):
        acc = vs[l].copy()
        fac = 1.0
        for jj in range(l + 1, q + 1):
            fac *= t_el / (jj - l)
            acc += fac * vs[jj]
        vt.append(acc)
    return np.column_stack(list(reversed(vt)))  # columns v_q .. v_1


def phi_combination(A, tau, V, tol=1e-10, m_max=100, stats=None):
    """w = sum_l tau**l phi_l(tau*A) v_l to relative tolerance tol.

    V is the sequence [v_0, ..., v_q].  A substep that fails the residual
    test within m_max Krylov dimensions is halved a few times before the
    failure is reported with the attained residual.
    """
    if tau <= 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    if m_max < 2:
        raise ValueError("m_max must be at least 2")
    n = A.dimension
    vs = [np.asarray(v, dtype=float) for v in V]
    if not vs:
        raise ValueError("need at least v_0")
    for v in vs:
        if v.shape != (n,):
            raise ValueError("all v_l must share the operator dimension")
    q = len(vs) - 1
    if all(not np.any(v) for v in vs):
        return np.zeros(n)
    tol = max(float(tol), 1e-14)

    use_sai = A.shifted_solver_factory is not None
    if use_sai:
        n_sub = 1
    else:
        norm_a = A.norm_estimate()
        n_sub = max(1, int(math.ceil(tau * norm_a / _RHO_BUDGET)))
    breakdown_tol = _HAPPY_BREAKDOWN * max(A.norm_estimate(), 1.0) \
        if not use_sai else None

    w = vs[0].copy()
    t_el = 0.0
    dt = tau / n_sub
    fails = 0
    while t_el < tau * (1.0 - 1e-14):
        dt_cur = min(dt, tau - t_el)
        Vp = _taylor_shifted(vs, q, t_el) if q else None
        y0 = w if q == 0 else np.concatenate([w, np.zeros(q - 1), [1.0]])
        tol_abs = tol * (dt_cur / tau)
        try:
            if use_sai:
                gamma = _SAI_GAMMA_FRACTION * dt_cur
                solve = A.shifted_solve(gamma)
                if q == 0:
                    apply_shifted = solve
                else:
                    def apply_shifted(y):
                        # (I - gamma*J)^-1 on the nilpotent tail, exactly
                        c = y[n:].copy()
                        t = c
                        for _ in range(q - 1):
                            t = gamma * np.append(t[1:], 0.0)
                            c = c + t
                        top = solve(y[:n] + gamma * (Vp @ c))
                        return np.concatenate([top, c])
                ynew = _sai_substep(apply_shifted, gamma, y0, dt_cur,
                                    tol_abs, m_max, stats)
            else:
                if q == 0:
                    apply_aug = A.apply
                else:
                    def apply_aug(y):
                        top = A.apply(y[:n]) + Vp @ y[n:]
                        bot = np.append(y[n + 1:], 0.0)
                        return np.concatenate([top, bot])
                ynew = _poly_substep(apply_aug, y0, dt_cur, tol_abs, m_max,
                                     breakdown_tol, stats)
        except _SubstepFailed as exc:
            fails += 1
            dt = dt_cur / 2.0
            if fails > 8:
                raise KrylovConvergenceError(
                    f"phi combination did not converge within m_max={m_max} "
                    f"Krylov dimensions (attained residual {exc.residual:.3e})",
                    residual=exc.residual) from None
            continue
        w = ynew[:n]
        t_el += dt_cur
        if stats is not None:
            stats["substeps"] = stats.get("substeps", 0) + 1
    return w
