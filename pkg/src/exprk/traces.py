"""Boundary trace providers for the corrected time steppers.

Every quantity the correction formulas need at the boundary is collected in
a `BoundaryTraces` snapshot.  Fields are stored *after* applying the
boundary operator of each node (plain value on a Dirichlet side, the
outward space derivative on a Neumann side), so all composites appearing in
the stepping formulas become linear combinations of fields:

    Au    = du - f
    Ndot  = ft + fu_du
    A^2 u = ddu - Ndot - af          (second-derivative identity)
    A^3 u = dddu_defect - afdot - a2f

Nonlinear products (f_u * udot and friends) are therefore kept as fields of
their own.  The exact provider evaluates everything analytically from the
manufactured solution; the numeric provider uses only boundary data, the
grid solution near the boundary (one-sided fourth-order differences), and
BDF differentiation in time, mirroring what an application without an exact
solution could do.  Third-order reaction derivatives are outside the
`ReactionTerm` interface and are taken as zero in the Neumann chain rules
(exact for the shipped quadratic reaction).
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass

import numpy as np

from .spacedisc import one_sided_derivative

__all__ = [
    "BoundaryTraces",
    "TraceHistory",
    "InsufficientHistoryError",
    "CflWarning",
    "bdf_time_derivative",
    "ExactTraceProvider",
    "NumericTraceProvider",
    "exact_traces",
]


class InsufficientHistoryError(ValueError):
    """History ring buffer is shallower than the requested stencil."""


class CflWarning(UserWarning):
    """Stepsize/meshsize ratio in the diagnostic range for space stencils."""


# diagnostic threshold for k/h**gamma with gamma = 1 (first space
# derivatives); composite terms differentiate deeper and carry larger gamma
DEFAULT_CFL_LIMIT = 100.0


@dataclass
class BoundaryTraces:
    """Boundary-operator projections of the corrected-formula quantities.

    Unavailable entries (e.g. a2f in data-only mode) are NaN; the steppers
    only touch them when the tableau scalar in front is nonzero.
    """

    t: float
    u: np.ndarray
    du: np.ndarray
    ddu: np.ndarray
    dddu: np.ndarray
    f: np.ndarray
    ft: np.ndarray
    fu: np.ndarray
    fu_du: np.ndarray
    ftt: np.ndarray
    ftu_du: np.ndarray
    fuu_dudu: np.ndarray
    fu_ddu: np.ndarray
    af: np.ndarray
    afdot: np.ndarray
    a2f: np.ndarray
    fu_af: np.ndarray
    fu_fdot: np.ndarray

    @property
    def fdot(self):
        """Trace of d/dt f(t, u(t)) = f_t + f_u udot."""
        return self.ft + self.fu_du

    @property
    def au(self):
        """Trace of A u = udot - f."""
        return self.du - self.f

    @property
    def ddu_defect(self):
        """Trace of uddot - f_t - f_u udot."""
        return self.ddu - self.fdot

    @property
    def dddu_defect(self):
        """Trace of udddot - f_tt - 2 f_tu udot - f_uu[udot,udot] - f_u uddot."""
        return (self.dddu - self.ftt - 2.0 * self.ftu_du
                - self.fuu_dudu - self.fu_ddu)

    @property
    def a2u(self):
        """Trace of A^2 u via the second-derivative identity."""
        return self.ddu_defect - self.af

    @property
    def a3u(self):
        return self.dddu_defect - self.afdot - self.a2f


class TraceHistory:
    """Uniformly spaced ring buffer of boundary-node value arrays."""

    def __init__(self, depth=8):
        self._buf = deque(maxlen=depth)

    def push(self, t, values):
        self._buf.append((float(t), np.asarray(values, dtype=float)))

    def __len__(self):
        return len(self._buf)

    @property
    def latest_t(self):
        return self._buf[-1][0] if self._buf else None

    def newest_first(self, count):
        if len(self._buf) < count:
            raise InsufficientHistoryError(
                f"need {count} history levels, have {len(self._buf)}")
        items = list(self._buf)[-count:][::-1]
        ts = np.array([t for t, _ in items])
        ks = -np.diff(ts)
        if ks.size and (abs(ks - ks[0]) > 1e-9 * max(abs(ks[0]), 1e-30)).any():
            raise ValueError("history is not uniformly spaced")
        k = ks[0] if ks.size else None
        return k, [v for _, v in items]


_BDF_STENCILS = {
    "1st-deriv-2BDF": (1, np.array([3.0, -4.0, 1.0]) / 2.0),
    "1st-deriv-4BDF": (1, np.array([25.0, -48.0, 36.0, -16.0, 3.0]) / 12.0),
    "2nd-deriv-4point": (2, np.array([2.0, -5.0, 4.0, -1.0])),
}


def bdf_time_derivative(hist, kind):
    """Backward-difference time derivative of the newest history level.

    kind selects among the second-order 2-step BDF, the fourth-order 4-step
    BDF (both first derivatives) and a four-point second-derivative stencil
    of order two.
    """
    if kind not in _BDF_STENCILS:
        raise ValueError(f"unknown BDF kind {kind!r}")
    order, w = _BDF_STENCILS[kind]
    k, vals = hist.newest_first(len(w))
    acc = w[0] * vals[0]
    for c, v in zip(w[1:], vals[1:]):
        acc = acc + c * v
    return acc / k**order


# -- exact provider ---------------------------------------------------------


class ExactTraceProvider:
    """Analytic boundary traces of a manufactured problem."""

    def __init__(self, problem, ops):
        self.problem = problem
        self.ops = ops
        self.nodes = ops.grid.boundary

    def record(self, t, U):
        pass

    def traces(self, t):
        p = self.problem
        n_b = len(self.nodes)
        out = {k: np.zeros(n_b) for k in
               ("u", "du", "ddu", "dddu", "f", "ft", "fu", "fu_du", "ftt",
                "ftu_du", "fuu_dudu", "fu_ddu", "af", "afdot", "a2f",
                "fu_af", "fu_fdot")}
        for idx, node in enumerate(self.nodes):
            b = node.coord
            uval = p.ev(p.u, b, t)
            r = p.reaction
            coords = b[0] if p.dim == 1 else (b[0], b[1])
            fu_v = r.f_u(coords, t, uval)
            fuu_v = r.f_uu(coords, t, uval)
            ftu_v = r.f_tu(coords, t, uval)
            if node.kind == "dirichlet":
                du = p.ev(p.u_t, b, t)
                ddu = p.ev(p.u_tt, b, t)
                out["u"][idx] = uval
                out["du"][idx] = du
                out["ddu"][idx] = ddu
                out["dddu"][idx] = p.ev(p.u_ttt, b, t)
                fval = r.f(coords, t, uval) + p.ev(p.h, b, t)
                ftval = r.f_t(coords, t, uval) + p.ev(p.h_t, b, t)
                out["f"][idx] = fval
                out["ft"][idx] = ftval
                out["fu"][idx] = fu_v
                out["fu_du"][idx] = fu_v * du
                out["ftt"][idx] = r.f_tt(coords, t, uval) + p.ev(p.h_tt, b, t)
                out["ftu_du"][idx] = ftu_v * du
                out["fuu_dudu"][idx] = fuu_v * du * du
                out["fu_ddu"][idx] = fu_v * ddu
                af = p.ev(p.AN, b, t)
                out["af"][idx] = af
                out["afdot"][idx] = p.ev(p.ANdot, b, t)
                out["a2f"][idx] = p.ev(p.A2N, b, t)
                out["fu_af"][idx] = fu_v * af
                out["fu_fdot"][idx] = fu_v * (ftval + fu_v * du)
            else:
                # Neumann: the boundary operator is the space derivative
                du_v = p.ev(p.u_t, b, t)
                ddu_v = p.ev(p.u_tt, b, t)
                ux = p.ev(p.u_x, b, t)
                uxt = p.ev(p.u_xt, b, t)
                uxtt = p.ev(p.u_xtt, b, t)
                nval = r.f(coords, t, uval) + p.ev(p.h, b, t)
                ntval = r.f_t(coords, t, uval) + p.ev(p.h_t, b, t)
                ndot = ntval + fu_v * du_v
                out["u"][idx] = ux
                out["du"][idx] = uxt
                out["ddu"][idx] = uxtt
                out["dddu"][idx] = p.ev(p.u_xttt, b, t)
                ffield = p.ev(p.h_x, b, t) + fu_v * ux
                ftfield = p.ev(p.h_tx, b, t) + ftu_v * ux
                fudu = fuu_v * ux * du_v + fu_v * uxt
                out["f"][idx] = ffield
                out["ft"][idx] = ftfield
                out["fu"][idx] = fuu_v * ux
                out["fu_du"][idx] = fudu
                out["ftt"][idx] = p.ev(p.h_ttx, b, t)
                out["ftu_du"][idx] = ftu_v * uxt
                out["fuu_dudu"][idx] = 2.0 * fuu_v * du_v * uxt
                out["fu_ddu"][idx] = fuu_v * ux * ddu_v + fu_v * uxtt
                an_val = p.ev(p.AN, b, t)
                an_x = p.ev(p.AN_x, b, t)
                out["af"][idx] = an_x
                out["afdot"][idx] = p.ev(p.ANdot_x, b, t)
                out["a2f"][idx] = p.ev(p.A2N_x, b, t)
                out["fu_af"][idx] = fuu_v * ux * an_val + fu_v * an_x
                out["fu_fdot"][idx] = (fuu_v * ux * ndot
                                       + fu_v * (ftfield + fudu))
        return BoundaryTraces(t=t, **out)

    # -- extras for the unsimplified oracle (Dirichlet boundaries only) ----

    def _require_dirichlet(self):
        if any(nd.kind != "dirichlet" for nd in self.nodes):
            raise ValueError("oracle traces support Dirichlet boundaries only")

    def value_bundle(self, t):
        """Plain boundary values feeding the uncollapsed formulas."""
        self._require_dirichlet()
        p = self.problem
        tr = self.traces(t)
        an = tr.af
        ndot = tr.fdot
        a2u = tr.ddu - ndot - an
        nttot = tr.ftt + 2 * tr.ftu_du + tr.fuu_dudu + tr.fu_ddu
        a3u = tr.dddu - nttot - tr.afdot - tr.a2f
        return {
            "u": tr.u, "du": tr.du, "ddu": tr.ddu, "dddu": tr.dddu,
            "f": tr.f, "ft": tr.ft, "fu": tr.fu,
            "au": tr.du - tr.f, "a2u": a2u, "a3u": a3u,
            "af": an, "afdot": tr.afdot, "a2f": tr.a2f,
        }

    def eval_N(self, t, state):
        """Combined nonlinearity at the boundary nodes for given values."""
        self._require_dirichlet()
        p = self.problem
        out = np.zeros(len(self.nodes))
        for idx, node in enumerate(self.nodes):
            b = node.coord
            coords = b[0] if p.dim == 1 else (b[0], b[1])
            out[idx] = p.reaction.f(coords, t, state[idx]) + p.ev(p.h, b, t)
        return out

    def f_shift(self, t, delta):
        """Trace of f(t + delta, u(t) + delta * udot(t))."""
        self._require_dirichlet()
        p = self.problem
        out = np.zeros(len(self.nodes))
        for idx, node in enumerate(self.nodes):
            b = node.coord
            coords = b[0] if p.dim == 1 else (b[0], b[1])
            w = p.ev(p.u, b, t) + delta * p.ev(p.u_t, b, t)
            out[idx] = (p.reaction.f(coords, t + delta, w)
                        + p.ev(p.h, b, t + delta))
        return out

    def af_shift(self, t, delta):
        """Trace of A applied to x -> f(t + delta, u(x,t) + delta udot(x,t)).

        Chain rule with the PDE identities lap u = udot - N and
        lap udot = uddot - Ndot.
        """
        self._require_dirichlet()
        p = self.problem
        r = self.problem.reaction
        out = np.zeros(len(self.nodes))
        for idx, node in enumerate(self.nodes):
            b = node.coord
            coords = b[0] if p.dim == 1 else (b[0], b[1])
            uval = p.ev(p.u, b, t)
            du = p.ev(p.u_t, b, t)
            ddu = p.ev(p.u_tt, b, t)
            nval = r.f(coords, t, uval) + p.ev(p.h, b, t)
            ntval = r.f_t(coords, t, uval) + p.ev(p.h_t, b, t)
            ndot = ntval + r.f_u(coords, t, uval) * du
            w = uval + delta * du
            grad2 = (p.ev(p.u_x, b, t) + delta * p.ev(p.u_xt, b, t)) ** 2
            if p.dim == 2:
                grad2 += (p.ev(p.u_y, b, t) + delta * p.ev(p.u_yt, b, t)) ** 2
            lap_w = (du - nval) + delta * (ddu - ndot)
            tp = t + delta
            if p.dim == 1:
                lap_h = p.lap_h(b[0], tp)
            else:
                lap_h = p.lap_h(b[0], b[1], tp)
            out[idx] = (lap_h + r.f_uu(coords, tp, w) * grad2
                        + r.f_u(coords, tp, w) * lap_w)
        return out


def exact_traces(problem, ops, t):
    """One-shot analytic traces at time t."""
    return ExactTraceProvider(problem, ops).traces(t)


# -- data-only provider -----------------------------------------------------


class NumericTraceProvider:
    """Boundary traces from data, the grid solution, and BDF in time.

    Pure time derivatives of the boundary data stay analytic (the data
    functions are known); everything else not expressible in data comes
    from the recorded per-step history: boundary values that are unknowns
    of the scheme, and one-sided fourth-order space differences whose
    histories feed BDF differentiation.  The first steps use a second-order
    Taylor expansion around t = 0.
    """

    def __init__(self, problem, ops, bdf_kind="1st-deriv-2BDF", level=2,
                 cfl_limit=DEFAULT_CFL_LIMIT, history_depth=8):
        if bdf_kind not in ("1st-deriv-2BDF", "1st-deriv-4BDF"):
            raise ValueError("bdf_kind must be a first-derivative stencil")
        self.problem = problem
        self.ops = ops
        self.nodes = ops.grid.boundary
        self.bdf_kind = bdf_kind
        self.level = level
        self.cfl_limit = cfl_limit
        self._warned = False
        self.hist_value = TraceHistory(history_depth)
        self.hist_grad = {ax: TraceHistory(history_depth)
                          for ax in ("x", "y")}
        self._needs_grad = level >= 3 and any(
            any(plan[0] == "stencil" for plan in nd.grad_plan.values())
            for nd in self.nodes)

    def _node_boundary_value(self, node, t, U):
        if node.unknown_index is not None:
            return U[node.unknown_index]
        return self.problem.ev(self.problem.u, node.coord, t)

    def record(self, t, U):
        """Store the boundary quantities of the accepted level t."""
        vals = np.full(len(self.nodes), np.nan)
        for idx, node in enumerate(self.nodes):
            if node.unknown_index is not None:
                vals[idx] = U[node.unknown_index]
        self.hist_value.push(t, vals)
        if self._needs_grad:
            h = self.ops.grid.h
            for ax in ("x", "y"):
                g = np.full(len(self.nodes), np.nan)
                for idx, node in enumerate(self.nodes):
                    plan = node.grad_plan.get(ax)
                    if plan is not None and plan[0] == "stencil":
                        bv = self._node_boundary_value(node, t, U)
                        g[idx] = one_sided_derivative(bv, U, node, ax, h)
                self.hist_grad[ax].push(t, g)

    def _bdf_or_taylor(self, hist, kind, t, f0, f1):
        """BDF of the newest level, or the t=0 Taylor bootstrap."""
        try:
            return bdf_time_derivative(hist, kind)
        except InsufficientHistoryError:
            base = np.array([self.problem.ev(f0, nd.coord, 0.0)
                             for nd in self.nodes])
            slope = np.array([self.problem.ev(f1, nd.coord, 0.0)
                              for nd in self.nodes])
            return base + t * slope

    def _check_cfl(self):
        if self._warned or not self._needs_grad or len(self.hist_value) < 2:
            return
        k, _ = self.hist_value.newest_first(2)
        ratio = k / self.ops.grid.h
        if ratio > self.cfl_limit:
            warnings.warn(
                f"k/h = {ratio:.3g} exceeds the diagnostic limit "
                f"{self.cfl_limit:.3g} for one-sided space differentiation "
                f"(gamma = 1); proceeding", CflWarning, stacklevel=3)
        self._warned = True

    def traces(self, t):
        p = self.problem
        r = p.reaction
        if self.hist_value.latest_t is None or \
                abs(self.hist_value.latest_t - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(
                f"history must be recorded at t={t} before traces are taken")
        self._check_cfl()
        n_b = len(self.nodes)
        out = {key: np.full(n_b, np.nan) for key in
               ("u", "du", "ddu", "dddu", "f", "ft", "fu", "fu_du", "ftt",
                "ftu_du", "fuu_dudu", "fu_ddu", "af", "afdot", "a2f",
                "fu_af", "fu_fdot")}

        du_val = self._bdf_or_taylor(self.hist_value, self.bdf_kind, t,
                                     p.u_t, p.u_tt)
        if self.level >= 3:
            ddu_val = self._bdf_or_taylor(self.hist_value,
                                          "2nd-deriv-4point", t,
                                          p.u_tt, p.u_ttt)
            if self._needs_grad:
                dgrad = {}
                for ax, (g0, g1) in (("x", (p.u_xt, p.u_xtt)),
                                     ("y", (p.u_yt, p.u_ytt))):
                    if g0 is None:
                        continue
                    dgrad[ax] = self._bdf_or_taylor(self.hist_grad[ax],
                                                    self.bdf_kind, t, g0, g1)

        grad_latest = {ax: (self.hist_grad[ax]._buf[-1][1]
                            if len(self.hist_grad[ax]) else None)
                       for ax in ("x", "y")}

        for idx, node in enumerate(self.nodes):
            b = node.coord
            coords = b[0] if p.dim == 1 else (b[0], b[1])
            if node.kind == "dirichlet":
                uval = p.ev(p.u, b, t)          # Dirichlet datum
                du = p.ev(p.u_t, b, t)
                ddu = p.ev(p.u_tt, b, t)
                fu_v = r.f_u(coords, t, uval)
                fuu_v = r.f_uu(coords, t, uval)
                ftu_v = r.f_tu(coords, t, uval)
                fval = r.f(coords, t, uval) + p.ev(p.h, b, t)
                ftval = r.f_t(coords, t, uval) + p.ev(p.h_t, b, t)
                out["u"][idx] = uval
                out["du"][idx] = du
                out["ddu"][idx] = ddu
                out["dddu"][idx] = p.ev(p.u_ttt, b, t)
                out["f"][idx] = fval
                out["ft"][idx] = ftval
                out["fu"][idx] = fu_v
                out["fu_du"][idx] = fu_v * du
                out["ftt"][idx] = r.f_tt(coords, t, uval) + p.ev(p.h_tt, b, t)
                out["ftu_du"][idx] = ftu_v * du
                out["fuu_dudu"][idx] = fuu_v * du * du
                out["fu_ddu"][idx] = fu_v * ddu
                if self.level >= 3:
                    grad = {}
                    dgrad_node = {}
                    for ax, plan in node.grad_plan.items():
                        if plan[0] == "data":
                            gfn = p.u_x if ax == "x" else p.u_y
                            gtfn = p.u_xt if ax == "x" else p.u_yt
                            grad[ax] = p.ev(gfn, b, t)
                            dgrad_node[ax] = p.ev(gtfn, b, t)
                        else:
                            grad[ax] = grad_latest[ax][idx]
                            dgrad_node[ax] = dgrad[ax][idx]
                    grad2 = sum(v * v for v in grad.values())
                    cross = sum(grad[ax] * dgrad_node[ax] for ax in grad)
                    if p.dim == 1:
                        lap_h = p.lap_h(b[0], t)
                        lap_h_t = p.lap_h_t(b[0], t)
                    else:
                        lap_h = p.lap_h(b[0], b[1], t)
                        lap_h_t = p.lap_h_t(b[0], b[1], t)
                    lap_u = du - fval
                    ndot = ftval + fu_v * du
                    af = lap_h + fuu_v * grad2 + fu_v * lap_u
                    afdot = (lap_h_t + ftu_v * lap_u
                             + fuu_v * (lap_u * du + 2.0 * cross)
                             + fu_v * (ddu - ndot))
                    out["af"][idx] = af
                    out["afdot"][idx] = afdot
                    out["fu_af"][idx] = fu_v * af
                out["fu_fdot"][idx] = fu_v * (ftval + fu_v * du)
            else:
                # Neumann node: value from the grid, time derivatives by BDF
                u_b = self.hist_value._buf[-1][1][idx]
                du_b = du_val[idx]
                ux = p.ev(p.u_x, b, t)          # the Neumann datum
                uxt = p.ev(p.u_xt, b, t)
                uxtt = p.ev(p.u_xtt, b, t)
                fu_v = r.f_u(coords, t, u_b)
                fuu_v = r.f_uu(coords, t, u_b)
                ftu_v = r.f_tu(coords, t, u_b)
                nval = r.f(coords, t, u_b) + p.ev(p.h, b, t)
                ntval = r.f_t(coords, t, u_b) + p.ev(p.h_t, b, t)
                out["u"][idx] = ux
                out["du"][idx] = uxt
                out["ddu"][idx] = uxtt
                out["dddu"][idx] = p.ev(p.u_xttt, b, t)
                ffield = p.ev(p.h_x, b, t) + fu_v * ux
                ftfield = p.ev(p.h_tx, b, t) + ftu_v * ux
                fudu = fuu_v * ux * du_b + fu_v * uxt
                out["f"][idx] = ffield
                out["ft"][idx] = ftfield
                out["fu"][idx] = fuu_v * ux
                out["fu_du"][idx] = fudu
                out["ftt"][idx] = p.ev(p.h_ttx, b, t)
                out["ftu_du"][idx] = ftu_v * uxt
                out["fuu_dudu"][idx] = 2.0 * fuu_v * du_b * uxt
                out["fu_fdot"][idx] = (fuu_v * ux * (ntval + fu_v * du_b)
                                       + fu_v * (ftfield + fudu))
                if self.level >= 3:
                    ddu_b = ddu_val[idx]
                    out["fu_ddu"][idx] = fuu_v * ux * ddu_b + fu_v * uxtt
                    an_val = (p.lap_h(b[0], t) + fuu_v * ux * ux
                              + fu_v * (du_b - nval))
                    af = (p.ev(p.h_xxx, b, t)
                          + 3.0 * fuu_v * ux * (du_b - nval)
                          + fu_v * (uxt - p.ev(p.h_x, b, t) - fu_v * ux))
                    out["af"][idx] = af
                    out["fu_af"][idx] = fuu_v * ux * an_val + fu_v * af
                    # afdot would need third space derivatives of h_t;
                    # left NaN, the steppers reject a nonzero use of it
        return BoundaryTraces(t=t, **out)
