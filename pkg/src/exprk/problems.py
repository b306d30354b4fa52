"""Manufactured reaction-diffusion test problems.

Each problem carries the exact solution with the time/space derivatives the
trace providers need, the source term with its derivatives, and the
reaction term with partial derivatives through second order.  The combined
nonlinearity N(x,t,u) = f(x,t,u) + h(x,t) is what enters the integration
formulas; closures for the composite boundary fields A N, A Ndot and A^2 N
are supplied analytically per problem.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ReactionTerm",
    "ManufacturedProblem",
    "problem_1d",
    "problem_2d",
    "homogeneous_1d",
    "homogeneous_2d",
    "steady_linear_1d",
]


@dataclass
class ReactionTerm:
    """Pointwise reaction f and its partial derivatives.

    Evaluators take (x, t, u) with x the node coordinates ((n,) in 1D,
    a pair of arrays in 2D); explicit space dependence is not modelled
    (the source term carries it), which the trace assembly relies on.
    """

    f: object
    f_t: object
    f_u: object
    f_tt: object
    f_tu: object
    f_uu: object


def _quadratic_reaction():
    return ReactionTerm(
        f=lambda x, t, u: u * u,
        f_t=lambda x, t, u: 0.0 * u,
        f_u=lambda x, t, u: 2.0 * u,
        f_tt=lambda x, t, u: 0.0 * u,
        f_tu=lambda x, t, u: 0.0 * u,
        f_uu=lambda x, t, u: 2.0 + 0.0 * u,
    )


def _zero_reaction():
    zero = lambda x, t, u: 0.0 * u
    return ReactionTerm(f=zero, f_t=zero, f_u=zero, f_tt=zero, f_tu=zero,
                        f_uu=zero)


@dataclass
class ManufacturedProblem:
    """A problem with known exact solution on [0,1]^dim x [0,T].

    Solution closures take (x, t) in 1D and (x, y, t) in 2D.  The h_*
    gradient closures (h_x, ...) are only populated in 1D, where a Neumann
    side may need them; lap_h / lap_h_t are filled in both dimensions.
    The A-field closures return values of A applied to the combined
    nonlinearity (and its first time derivative / A^2), with *_x variants
    giving the space derivative needed for normal traces.
    """

    name: str
    dim: int
    T: float
    bc: tuple
    reaction: ReactionTerm
    # exact solution and derivatives
    u: object
    u_t: object
    u_tt: object
    u_ttt: object
    u_lap: object
    u_x: object
    u_xt: object
    u_xtt: object
    u_xttt: object
    u_y: object = None
    u_yt: object = None
    u_ytt: object = None
    # source term and derivatives
    h: object = None
    h_t: object = None
    h_tt: object = None
    lap_h: object = None
    lap_h_t: object = None
    h_x: object = None
    h_tx: object = None
    h_ttx: object = None
    h_xxx: object = None
    # composite boundary fields
    AN: object = None
    AN_x: object = None
    ANdot: object = None
    ANdot_x: object = None
    A2N: object = None
    A2N_x: object = None
    _validated: bool = field(default=False, repr=False)

    # combined nonlinearity helpers ------------------------------------

    def N(self, coords, t, u):
        return self.reaction.f(coords, t, u) + self._h_at(coords, t)

    def _h_at(self, coords, t):
        if self.dim == 1:
            return self.h(coords, t)
        return self.h(coords[0], coords[1], t)

    def ev(self, fn, coord, t):
        """Evaluate a closure at one boundary coordinate tuple."""
        if self.dim == 1:
            return fn(coord[0], t)
        return fn(coord[0], coord[1], t)

    def validate(self, rng=None, n_samples=60):
        """PDE residual, reaction-derivative and composite-field checks."""
        if self._validated:
            return
        rng = rng or np.random.default_rng(20240901)
        xs = rng.uniform(0.05, 0.95, n_samples)
        ts = rng.uniform(0.0, self.T, n_samples)
        if self.dim == 1:
            coords = xs
            args = (xs, ts)
        else:
            ys = rng.uniform(0.05, 0.95, n_samples)
            coords = (xs, ys)
            args = (xs, ys, ts)
        uu = self.u(*args)
        res = (self.u_t(*args) - self.u_lap(*args)
               - self.reaction.f(coords, ts, uu) - self.h(*args))
        if np.abs(res).max() > 1e-10:
            raise ValueError(f"{self.name}: PDE residual {np.abs(res).max():.2e}")
        # reaction derivatives against centered differences
        r = self.reaction
        d = 1e-5
        pairs = [
            (r.f_t, lambda x, t, u: (r.f(x, t + d, u) - r.f(x, t - d, u)) / (2 * d)),
            (r.f_u, lambda x, t, u: (r.f(x, t, u + d) - r.f(x, t, u - d)) / (2 * d)),
            (r.f_tt, lambda x, t, u: (r.f_t(x, t + d, u) - r.f_t(x, t - d, u)) / (2 * d)),
            (r.f_tu, lambda x, t, u: (r.f_t(x, t, u + d) - r.f_t(x, t, u - d)) / (2 * d)),
            (r.f_uu, lambda x, t, u: (r.f_u(x, t, u + d) - r.f_u(x, t, u - d)) / (2 * d)),
        ]
        for exact_fn, fd_fn in pairs:
            a = np.asarray(exact_fn(coords, ts, uu), dtype=float)
            b = np.asarray(fd_fn(coords, ts, uu), dtype=float)
            scale = max(1.0, np.abs(a).max())
            if np.abs(a - b).max() > 1e-6 * scale:
                raise ValueError(f"{self.name}: reaction derivative mismatch")
        self._check_composites(rng)
        self._validated = True

    def _check_composites(self, rng, n_samples=20):
        """A-field closures against space differences of N along the axis."""
        if self.AN is None:
            return
        d = 1e-4
        xs = rng.uniform(0.1, 0.9, n_samples)
        ts = rng.uniform(0.0, self.T, n_samples)

        if self.dim == 1:
            def n_of_x(x, t):
                return self.N(x, t, self.u(x, t))
            fd = (n_of_x(xs + d, ts) - 2 * n_of_x(xs, ts)
                  + n_of_x(xs - d, ts)) / d**2
            ref = self.AN(xs, ts)
        else:
            ys = rng.uniform(0.1, 0.9, n_samples)

            def n_at(x, y, t):
                return self.N((x, y), t, self.u(x, y, t))
            fd = ((n_at(xs + d, ys, ts) + n_at(xs - d, ys, ts)
                   + n_at(xs, ys + d, ts) + n_at(xs, ys - d, ts)
                   - 4 * n_at(xs, ys, ts)) / d**2)
            ref = self.AN(xs, ys, ts)
        if np.abs(fd - ref).max() > 1e-5 * max(1.0, np.abs(ref).max()):
            raise ValueError(f"{self.name}: AN closure mismatch "
                             f"{np.abs(fd - ref).max():.2e}")


def problem_1d(bc="dd"):
    """u_t = u_xx + u^2 + h on [0,1] with exact solution cos(x+t).

    bc 'dd' puts Dirichlet data on both ends; 'dn' keeps Dirichlet at x=0
    and prescribes u_x(1,t) at the right end.
    """
    if bc not in ("dd", "dn"):
        raise ValueError("bc must be 'dd' or 'dn'")
    cos, sin = np.cos, np.sin

    def h(x, t):
        s = x + t
        return -sin(s) + cos(s) - cos(s) ** 2

    # h and N depend on x+t only, so every derivative is a function of s
    def hp(s):
        return -cos(s) - sin(s) + sin(2 * s)

    def hpp(s):
        return sin(s) - cos(s) + 2 * cos(2 * s)

    def hppp(s):
        return cos(s) + sin(s) - 4 * sin(2 * s)

    return ManufacturedProblem(
        name=f"heat1d-{bc}", dim=1, T=1.0,
        bc=("dirichlet", "dirichlet" if bc == "dd" else "neumann"),
        reaction=_quadratic_reaction(),
        u=lambda x, t: cos(x + t),
        u_t=lambda x, t: -sin(x + t),
        u_tt=lambda x, t: -cos(x + t),
        u_ttt=lambda x, t: sin(x + t),
        u_lap=lambda x, t: -cos(x + t),
        u_x=lambda x, t: -sin(x + t),
        u_xt=lambda x, t: -cos(x + t),
        u_xtt=lambda x, t: sin(x + t),
        u_xttt=lambda x, t: cos(x + t),
        h=h,
        h_t=lambda x, t: hp(x + t),
        h_tt=lambda x, t: hpp(x + t),
        lap_h=lambda x, t: hpp(x + t),
        lap_h_t=lambda x, t: hppp(x + t),
        h_x=lambda x, t: hp(x + t),
        h_tx=lambda x, t: hpp(x + t),
        h_ttx=lambda x, t: hppp(x + t),
        h_xxx=lambda x, t: hppp(x + t),
        # N = u^2 + h = cos(s) - sin(s); A N = -N, A Ndot = -Ndot, A^2 N = N
        AN=lambda x, t: sin(x + t) - cos(x + t),
        AN_x=lambda x, t: cos(x + t) + sin(x + t),
        ANdot=lambda x, t: sin(x + t) + cos(x + t),
        ANdot_x=lambda x, t: cos(x + t) - sin(x + t),
        A2N=lambda x, t: cos(x + t) - sin(x + t),
        A2N_x=lambda x, t: -sin(x + t) - cos(x + t),
    )


def problem_2d():
    """u_t = u_xx + u_yy + u^2 + h on the unit square, u = cos(t+x+y)."""
    cos, sin = np.cos, np.sin

    def h(x, y, t):
        s = t + x + y
        return -sin(s) + 2 * cos(s) - cos(s) ** 2

    def hp(s):
        return -cos(s) - 2 * sin(s) + sin(2 * s)

    def hpp(s):
        return sin(s) - 2 * cos(s) + 2 * cos(2 * s)

    def hppp(s):
        return cos(s) + 2 * sin(s) - 4 * sin(2 * s)

    # N = u^2 + h = -sin(s) + 2 cos(s); lap N = -2N, lap Ndot = -2 Ndot
    def N_of(s):
        return -sin(s) + 2 * cos(s)

    def Ndot_of(s):
        return -cos(s) - 2 * sin(s)

    return ManufacturedProblem(
        name="heat2d", dim=2, T=1.0,
        bc=("dirichlet",) * 4,
        reaction=_quadratic_reaction(),
        u=lambda x, y, t: cos(t + x + y),
        u_t=lambda x, y, t: -sin(t + x + y),
        u_tt=lambda x, y, t: -cos(t + x + y),
        u_ttt=lambda x, y, t: sin(t + x + y),
        u_lap=lambda x, y, t: -2 * cos(t + x + y),
        u_x=lambda x, y, t: -sin(t + x + y),
        u_xt=lambda x, y, t: -cos(t + x + y),
        u_xtt=lambda x, y, t: sin(t + x + y),
        u_xttt=lambda x, y, t: cos(t + x + y),
        u_y=lambda x, y, t: -sin(t + x + y),
        u_yt=lambda x, y, t: -cos(t + x + y),
        u_ytt=lambda x, y, t: sin(t + x + y),
        h=h,
        h_t=lambda x, y, t: hp(t + x + y),
        h_tt=lambda x, y, t: hpp(t + x + y),
        lap_h=lambda x, y, t: 2 * hpp(t + x + y),
        lap_h_t=lambda x, y, t: 2 * hppp(t + x + y),
        AN=lambda x, y, t: -2 * N_of(t + x + y),
        ANdot=lambda x, y, t: -2 * Ndot_of(t + x + y),
        A2N=lambda x, y, t: 4 * N_of(t + x + y),
    )


def _zero_fn_1d(x, t):
    return 0.0 * np.asarray(x, dtype=float)


def _zero_fn_2d(x, y, t):
    return 0.0 * np.asarray(x, dtype=float)


def homogeneous_1d(bc="dd"):
    """u == 0 with quadratic reaction and no source; all traces vanish."""
    z = _zero_fn_1d
    return ManufacturedProblem(
        name=f"zero1d-{bc}", dim=1, T=1.0,
        bc=("dirichlet", "dirichlet" if bc == "dd" else "neumann"),
        reaction=_quadratic_reaction(),
        u=z, u_t=z, u_tt=z, u_ttt=z, u_lap=z,
        u_x=z, u_xt=z, u_xtt=z, u_xttt=z,
        h=z, h_t=z, h_tt=z, lap_h=z, lap_h_t=z,
        h_x=z, h_tx=z, h_ttx=z, h_xxx=z,
        AN=z, AN_x=z, ANdot=z, ANdot_x=z, A2N=z, A2N_x=z,
    )


def homogeneous_2d():
    z = _zero_fn_2d
    return ManufacturedProblem(
        name="zero2d", dim=2, T=1.0, bc=("dirichlet",) * 4,
        reaction=_quadratic_reaction(),
        u=z, u_t=z, u_tt=z, u_ttt=z, u_lap=z,
        u_x=z, u_xt=z, u_xtt=z, u_xttt=z, u_y=z, u_yt=z, u_ytt=z,
        h=z, h_t=z, h_tt=z, lap_h=z, lap_h_t=z,
        AN=z, ANdot=z, A2N=z,
    )


def steady_linear_1d():
    """Steady state u = 1 + x of the pure heat equation (f = 0, h = 0).

    Boundary data is constant in time, so a single corrected step must
    reproduce exp(kA) U + k phi_1(kA) C_h g exactly.
    """
    z = _zero_fn_1d
    return ManufacturedProblem(
        name="steady1d", dim=1, T=1.0, bc=("dirichlet", "dirichlet"),
        reaction=_zero_reaction(),
        u=lambda x, t: 1.0 + x + 0.0 * np.asarray(t),
        u_t=z, u_tt=z, u_ttt=z, u_lap=z,
        u_x=lambda x, t: 1.0 + 0.0 * np.asarray(x), u_xt=z, u_xtt=z, u_xttt=z,
        h=z, h_t=z, h_tt=z, lap_h=z, lap_h_t=z,
        h_x=z, h_tx=z, h_ttx=z, h_xxx=z,
        AN=z, AN_x=z, ANdot=z, ANdot_x=z, A2N=z, A2N_x=z,
    )
