"""Limit profiles: the continuum (car length -> 0) and local (horizon -> 0) laws.

Two independent oracles for the convergence theorems:

* Q solves the stationary integral equation of the nonlocal conservation law,
  Q(x) * A(x; V, Q) = fbar, where A is the kernel-weighted average of the
  speed over [x, x+h].
* U solves the local delay differential equation obtained when the averaging
  horizon shrinks to zero: the same marching structure as the nonlocal
  profile solver, but the average velocity collapses to the pointwise law.

Both live on uniform grids; for Q the horizon must be a whole number of grid
steps so that every averaging window is a union of grid cells.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AnchorError,
    BlowUpError,
    GridMismatchError,
    NoProfileError,
    NonConvergenceError,
    StepSizeError,
    ValidationError,
)
from .model import (
    ModelParams,
    RoadCondition,
    Subcase,
    SubcaseReport,
    Verdict,
    asymptotic_roots,
)
from .profiles import TAIL_TOL, build_profile, make_grid
from .tables import ResultTable

Q_RESIDUAL_FACTOR = 1e-9
Q_MAX_SWEEPS = 10_000
Q_THETA = 0.5
_GAUSS_A = 0.5 - 0.5 / np.sqrt(3.0)
_GAUSS_B = 0.5 + 0.5 / np.sqrt(3.0)


def _cells_per_window(h, dz):
    m = int(round(h / dz))
    if abs(m * dz - h) > 1e-9 * h or m < 1:
        raise GridMismatchError(
            f"grid step {dz} must divide the averaging horizon {h}"
        )
    return m


@dataclass
class _QuadPlan:
    """Precomputed per-cell Gauss nodes of the kernel, shared by all windows."""

    m: int
    wa: np.ndarray
    wb: np.ndarray
    half_dz: float

    @classmethod
    def build(cls, kernel, dz):
        m = _cells_per_window(kernel.h, dz)
        k = np.arange(m)
        wa = kernel(dz * (k + _GAUSS_A))
        wb = kernel(dz * (k + _GAUSS_B))
        return cls(m=m, wa=np.asarray(wa, dtype=float),
                   wb=np.asarray(wb, dtype=float), half_dz=0.5 * dz)


def averaging_A(x_eval, g, params: ModelParams) -> float:
    """Kernel-weighted average of speed-limit times speed-law over [x, x+h].

    g is a grid function (callable, with .x / .values / asymptote fields);
    quadrature is composite 2-point Gauss on sub-intervals cut at the grid
    nodes and at the speed-limit jump.
    """
    h = params.kernel.h
    kernel = params.kernel
    phi = params.law.phi
    road = params.road
    end = x_eval + h
    cuts = [x_eval, end]
    inside = g.x[(g.x > x_eval) & (g.x < end)]
    cuts.extend(inside.tolist())
    if x_eval < 0.0 < end:
        cuts.append(0.0)
    cuts = np.unique(np.asarray(cuts, dtype=float))
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        width = b - a
        if width <= 0:
            continue
        for frac in (_GAUSS_A, _GAUSS_B):
            y = a + frac * width
            total += 0.5 * width * road(y) * phi(g(y)) * kernel(y - x_eval)
    return total


def _averaging_sweep(vals_ext, V_ext, plan: _QuadPlan, phi):
    """A at every grid node, given node values extended m cells to the right."""
    ga = vals_ext[:-1] * (1.0 - _GAUSS_A) + vals_ext[1:] * _GAUSS_A
    gb = vals_ext[:-1] * (1.0 - _GAUSS_B) + vals_ext[1:] * _GAUSS_B
    ca = V_ext * phi(ga)
    cb = V_ext * phi(gb)
    # correlation: A_j = half_dz * sum_k (ca[j+k] wa[k] + cb[j+k] wb[k])
    out = np.convolve(ca, plan.wa[::-1], mode="valid") \
        + np.convolve(cb, plan.wb[::-1], mode="valid")
    return plan.half_dz * out


def _extend_right(x, vals, rho_plus, m, dz):
    """Node values plus m ghost cells at the right asymptote, with cell speeds."""
    vals_ext = np.concatenate([vals, np.full(m, rho_plus)])
    x_cells = np.concatenate([x, x[-1] + dz * np.arange(1, m + 1)])[:-1]
    return vals_ext, x_cells


@dataclass
class LimitProfileQ:
    """Continuum stationary profile: grid function with solver diagnostics."""

    x: np.ndarray
    values: np.ndarray
    rho_minus: float
    rho_plus: float
    params: ModelParams
    fbar: float
    dz: float
    anchor: float
    subcase: Subcase = None
    residual_history: list = field(default_factory=list)
    iterations: int = 0

    def __call__(self, xq):
        scalar = np.ndim(xq) == 0
        out = np.interp(np.asarray(xq, dtype=float), self.x, self.values,
                        left=self.rho_minus, right=self.rho_plus)
        return float(out) if scalar else out

    def residual(self):
        """Per-node |Q * A - fbar|."""
        plan = _QuadPlan.build(self.params.kernel, self.dz)
        vals_ext, x_cells = _extend_right(self.x, self.values, self.rho_plus,
                                          plan.m, self.dz)
        V_ext = self.params.road(x_cells)
        A = _averaging_sweep(vals_ext, V_ext, plan, self.params.law.phi)
        return np.abs(self.values * A - self.fbar)


@dataclass
class LimitProfileU:
    """Local-model stationary profile (the horizon -> 0 limit)."""

    x: np.ndarray
    values: np.ndarray
    rho_minus: float
    rho_plus: float
    params: ModelParams
    fbar: float
    dz: float
    anchor: float
    subcase: Subcase = None
    tail_gap_left: float = float("nan")

    def __call__(self, xq):
        scalar = np.ndim(xq) == 0
        out = np.interp(np.asarray(xq, dtype=float), self.x, self.values,
                        left=self.rho_minus, right=self.rho_plus)
        return float(out) if scalar else out


# ---------------------------------------------------------------------------
# uniform-road Q backbone (nodewise backward solve)
# ---------------------------------------------------------------------------

_Q_BACKBONE_CACHE = {}
_Q_SEED_OFFSET = 1e-11   # relative to the root gap; keeps the seed residual tiny


def _q_backbone(V, fbar, params: ModelParams, dz):
    """Discrete connecting orbit of q*A = fbar on a uniform road.

    Solved node by node going left: each window only looks right, so with the
    right tail known the nodal equation is scalar.  Seeded a hair below the
    attracting asymptote; the backward continuation walks down the orbit.
    """
    key = (V, fbar, params.kernel, params.law.kind, dz)
    if key in _Q_BACKBONE_CACHE:
        return _Q_BACKBONE_CACHE[key]
    law = params.law
    phi = law.phi
    rho_low, rho_high = asymptotic_roots(fbar, V, law)
    eps = _Q_SEED_OFFSET * (rho_high - rho_low)
    plan = _QuadPlan.build(params.kernel, dz)
    m = plan.m
    h = params.kernel.h
    n_left = int(round(300.0 * h / dz))
    n_seed = m + 1
    x = (np.arange(-n_left, n_seed + m + 1)) * dz
    vals = np.full(len(x), rho_high)
    j_seed = n_left
    vals[j_seed:j_seed + n_seed] = rho_high - eps

    wa, wb = plan.wa, plan.wb
    wa0, wb0 = wa[0], wb[0]
    a0, b0 = _GAUSS_A, _GAUSS_B
    stop_below = rho_low + 1e-9
    # per-cell Gauss-point speeds, maintained incrementally as nodes fill in
    ca = phi(vals[:-1] * (1.0 - a0) + vals[1:] * a0)
    cb = phi(vals[:-1] * (1.0 - b0) + vals[1:] * b0)
    half = plan.half_dz
    lowest = 0
    for j in range(j_seed - 1, -1, -1):
        fixed = float(np.dot(ca[j + 1:j + m], wa[1:])
                      + np.dot(cb[j + 1:j + m], wb[1:]))
        v1 = vals[j + 1]

        def G(q):
            first = phi(q * (1.0 - a0) + v1 * a0) * wa0 \
                + phi(q * (1.0 - b0) + v1 * b0) * wb0
            return q * half * V * (first + fixed) - fbar

        q = _continuation_root(G, v1, rho_low, rho_high)
        vals[j] = q
        ca[j] = phi(q * (1.0 - a0) + v1 * a0)
        cb[j] = phi(q * (1.0 - b0) + v1 * b0)
        if q <= stop_below:
            lowest = j
            break
    backbone = (x[lowest:j_seed + n_seed].copy(),
                vals[lowest:j_seed + n_seed].copy(), rho_low, rho_high, j_seed)
    _Q_BACKBONE_CACHE[key] = backbone
    return backbone


def _continuation_root(G, guess, lo_limit, hi_limit):
    """Root of G nearest the previous node value, by expanding-bracket bisection."""
    delta = 1e-6
    lo = hi = guess
    glo = ghi = G(guess)
    if glo == 0.0:
        return guess
    for _ in range(80):
        lo = max(lo_limit * 0.5, guess - delta)
        hi = min(hi_limit + 0.5 * (1.0 - hi_limit), guess + delta)
        glo, ghi = G(lo), G(hi)
        if glo * ghi <= 0.0:
            break
        delta *= 2.0
    else:
        raise BlowUpError("nodal equation lost its bracket during continuation")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = G(mid)
        if gm == 0.0 or hi - lo < 1e-14:
            return mid
        if glo * gm < 0.0:
            hi = mid
        else:
            lo, glo = mid, gm
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# full Q solve
# ---------------------------------------------------------------------------

def solve_Q(report: SubcaseReport, anchor_value=None, X_min=None, X_max=None,
            dz=0.0002, warm_start=None) -> LimitProfileQ:
    """Continuum stationary profile through the given anchor.

    The x >= 0 branch is pinned first: constant at the right asymptote, or a
    horizontally shifted uniform-road orbit through the anchor (shifts are
    snapped to whole grid steps so the shifted branch still satisfies the
    discrete equation; the achieved anchor is recorded).  The x < 0 values
    then relax by damped fixed-point iteration.
    """
    if report.verdict == Verdict.NONE:
        raise NoProfileError(
            f"subcase {report.subcase.value} admits no stationary wave profile"
        )
    params = report.params
    h = params.kernel.h
    if X_min is None:
        X_min = -40.0 * h
    if X_max is None:
        X_max = 40.0 * h
    rho_minus, rho_plus = report.rho_minus, report.rho_plus
    fbar = report.fbar
    if anchor_value is None:
        anchor_value = rho_plus
    x = make_grid(X_min, X_max, dz)
    j_zero = int(np.searchsorted(x, 0.0))
    plan = _QuadPlan.build(params.kernel, dz)
    phi = params.law.phi

    if abs(anchor_value - rho_plus) <= 1e-9:
        branch = np.full(len(x) - j_zero, rho_plus)
        achieved = rho_plus
    else:
        low_root, _ = asymptotic_roots(fbar, params.road.V_plus, params.law)
        if not low_root < anchor_value <= rho_plus:
            raise AnchorError(
                f"anchor {anchor_value} outside the admissible range "
                f"({low_root}, {rho_plus}]"
            )
        bx, bv, _, b_high, _ = _q_backbone(params.road.V_plus, fbar, params, dz)
        j_anchor = int(np.argmin(np.abs(bv - anchor_value)))
        achieved = float(bv[j_anchor])
        # whole-grid-step shift: node k of the branch is backbone node
        # j_anchor + k, constant rho_plus beyond the backbone
        idx = j_anchor + np.arange(len(x) - j_zero)
        branch = np.where(idx < len(bv), bv[np.minimum(idx, len(bv) - 1)],
                          rho_plus)

    vals = np.empty(len(x))
    vals[j_zero:] = branch
    if warm_start is not None:
        vals[:j_zero] = np.asarray([warm_start(xi) for xi in x[:j_zero]])
    else:
        # exponential ramp from the left asymptote up to the anchor
        vals[:j_zero] = rho_minus + (achieved - rho_minus) * np.exp(x[:j_zero] / h)

    tol = Q_RESIDUAL_FACTOR * fbar
    history = []
    n_it = 0
    for n_it in range(1, Q_MAX_SWEEPS + 1):
        vals_ext, x_cells = _extend_right(x, vals, rho_plus, plan.m, dz)
        V_ext = params.road(x_cells)
        A = _averaging_sweep(vals_ext, V_ext, plan, phi)
        res = float(np.max(np.abs(vals * A - fbar)))
        history.append(res)
        if res < tol:
            break
        target = fbar / A[:j_zero]
        vals[:j_zero] = (1.0 - Q_THETA) * vals[:j_zero] + Q_THETA * target
        if not np.all((vals[:j_zero] > 0.0) & (vals[:j_zero] < 1.0)):
            raise BlowUpError("continuum profile iterate left (0, 1)")
    else:
        raise NonConvergenceError(
            f"fixed-point residual {history[-1]:.3e} above {tol:.3e} "
            f"after {Q_MAX_SWEEPS} sweeps",
            residual_history=history,
        )
    if abs(vals[0] - rho_minus) > TAIL_TOL:
        warnings.warn(
            f"left tail gap {abs(vals[0] - rho_minus):.3e} exceeds {TAIL_TOL}",
            stacklevel=2,
        )
    return LimitProfileQ(x=x, values=vals, rho_minus=rho_minus,
                         rho_plus=rho_plus, params=params, fbar=fbar, dz=dz,
                         anchor=achieved, subcase=report.subcase,
                         residual_history=history, iterations=n_it)


# ---------------------------------------------------------------------------
# local-model profile U
# ---------------------------------------------------------------------------

def _u_slope_factory(params: ModelParams):
    ell = params.ell
    road = params.road
    phi = params.law.phi

    def slope(xs, us, peval):
        if not 0.0 < us < 1.0:
            raise BlowUpError(f"local profile left (0, 1) at x={xs}")
        x_lead = xs + ell / us
        u_lead = peval(x_lead)
        v_here = road(xs) * phi(us)
        if v_here <= 0.0:
            raise BlowUpError(f"speed vanished at x={xs}")
        v_lead = road(x_lead) * phi(u_lead)
        return us * us / (ell * v_here) * (v_here - v_lead)

    return slope


def _march_backward_local(x, vals, j_start, params, right_ext, stop_below=None):
    """RK4 backward marching for the local delay equation."""
    dz = x[1] - x[0]
    if dz >= params.ell:
        raise StepSizeError("grid step must be smaller than the car length")
    slope = _u_slope_factory(params)
    x0 = x[0]
    inv_dz = 1.0 / dz
    x_hi = x[-1]
    n = len(x)

    def peval(xq):
        if xq >= x_hi:
            return right_ext
        t = (xq - x0) * inv_dz
        j = int(t)
        return vals[j] + (vals[j + 1] - vals[j]) * (t - j)

    for j in range(j_start, 0, -1):
        xs, us = x[j], vals[j]
        k1 = slope(xs, us, peval)
        k2 = slope(xs - 0.5 * dz, us - 0.5 * dz * k1, peval)
        k3 = slope(xs - 0.5 * dz, us - 0.5 * dz * k2, peval)
        k4 = slope(xs - dz, us - dz * k3, peval)
        nxt = us - (dz / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not 0.0 < nxt < 1.0:
            raise BlowUpError(f"local profile left (0, 1) at x={x[j - 1]}")
        vals[j - 1] = nxt
        if stop_below is not None and nxt <= stop_below:
            return j - 1
    return 0


_U_BACKBONE_CACHE = {}


def _u_backbone(V, fbar, params: ModelParams, dz):
    """Uniform-road connecting orbit of the local delay equation."""
    key = (V, fbar, params.ell, params.law.kind, dz)
    if key in _U_BACKBONE_CACHE:
        return _U_BACKBONE_CACHE[key]
    rho_low, rho_high = asymptotic_roots(fbar, V, params.law)
    # small offset: a coarse seed leaves derivative kinks echoing down the
    # backbone at delay intervals
    eps = 1e-7 * (rho_high - rho_low)
    uni = ModelParams(ell=params.ell, kernel=params.kernel,
                      road=RoadCondition(V, V), law=params.law)
    # single-cell seed: leader lookups poke into the constant rho_high
    # extension, which kicks the backward flow off the constant equilibrium
    X_left = -400.0 * params.ell
    x = make_grid(X_left, dz, dz)
    j_zero = len(x) - 2
    vals = np.full(len(x), np.nan)
    vals[j_zero:] = rho_high - eps
    lowest = _march_backward_local(x, vals, j_zero, uni, right_ext=rho_high,
                                   stop_below=rho_low + 1e-9)
    backbone = (x[lowest:j_zero + 1].copy(), vals[lowest:j_zero + 1].copy(),
                rho_low, rho_high)
    _U_BACKBONE_CACHE[key] = backbone
    return backbone


def solve_U(report: SubcaseReport, anchor_value=None, X_min=None, X_max=None,
            dz=0.0002) -> LimitProfileU:
    """Local-model stationary profile through the given anchor."""
    if report.verdict == Verdict.NONE:
        raise NoProfileError(
            f"subcase {report.subcase.value} admits no stationary wave profile"
        )
    params = report.params
    h = params.kernel.h
    if X_min is None:
        X_min = -40.0 * h
    if X_max is None:
        X_max = 40.0 * h
    rho_minus, rho_plus = report.rho_minus, report.rho_plus
    fbar = report.fbar
    if anchor_value is None:
        anchor_value = rho_plus
    x = make_grid(X_min, X_max, dz)
    j_zero = int(np.searchsorted(x, 0.0))
    if abs(anchor_value - rho_plus) <= 1e-9:
        seed = np.full(len(x) - j_zero, rho_plus)
        achieved = rho_plus
    else:
        low_root, _ = asymptotic_roots(fbar, params.road.V_plus, params.law)
        if not low_root < anchor_value <= rho_plus:
            raise AnchorError(
                f"anchor {anchor_value} outside the admissible range "
                f"({low_root}, {rho_plus}]"
            )
        bx, bv, b_low, b_high = _u_backbone(params.road.V_plus, fbar, params, dz)
        if anchor_value <= bv[0] or anchor_value >= bv[-1]:
            raise AnchorError(
                f"anchor {anchor_value} outside the resolved backbone range"
            )
        j = int(np.searchsorted(bv, anchor_value)) - 1
        j = max(0, min(j, len(bv) - 2))
        t = (anchor_value - bv[j]) / (bv[j + 1] - bv[j])
        x_a = bx[j] + t * (bx[j + 1] - bx[j])
        seed = np.interp(x[j_zero:] + x_a, bx, bv, left=b_low, right=b_high)
        achieved = anchor_value
    vals = np.full(len(x), np.nan)
    vals[j_zero:] = seed
    _march_backward_local(x, vals, j_zero, params, right_ext=rho_plus)
    gap = abs(vals[0] - rho_minus)
    if gap > TAIL_TOL:
        warnings.warn(
            f"left tail gap {gap:.3e} exceeds {TAIL_TOL}", stacklevel=2
        )
    return LimitProfileU(x=x, values=vals, rho_minus=rho_minus,
                         rho_plus=rho_plus, params=params, fbar=fbar, dz=dz,
                         anchor=achieved, subcase=report.subcase,
                         tail_gap_left=gap)


# ---------------------------------------------------------------------------
# convergence studies
# ---------------------------------------------------------------------------

def _sup_error(f, g, window, n=4001):
    xs = np.linspace(-window, window, n)
    return float(np.max(np.abs(f(xs) - g(xs))))


def convergence_study_micro_macro(report: SubcaseReport, anchor_value,
                                  ell_sequence=(0.05, 0.025, 0.0125, 0.00625),
                                  X_min=None, X_max=None, dz=0.0002,
                                  dz_profile=None) -> ResultTable:
    """Sup-error of the particle profiles against Q as the car length shrinks."""
    if any(b >= a for a, b in zip(ell_sequence, ell_sequence[1:])):
        raise ValidationError("the car-length sequence must be strictly decreasing")
    params = report.params
    h = params.kernel.h
    if X_min is None:
        X_min = -20.0 * h
    if X_max is None:
        X_max = 20.0 * h
    if dz_profile is None:
        dz_profile = dz
    Q = solve_Q(report, anchor_value, X_min=X_min, X_max=X_max, dz=dz)
    anchor = Q.anchor
    window = 10.0 * h
    table = ResultTable(columns=("parameter", "sup_error", "residual",
                                 "iterations"))
    for ell in ell_sequence:
        rep = SubcaseReport(
            subcase=report.subcase, rho_minus=report.rho_minus,
            rho_plus=report.rho_plus, fbar=report.fbar,
            V_minus=report.V_minus, V_plus=report.V_plus,
            verdict=report.verdict, stability=report.stability,
            crit=report.crit, params=params.with_ell(ell),
        )
        P = build_profile(rep, anchor, X_min=X_min, X_max=X_max, dz=dz_profile)
        table.add_row(parameter=ell, sup_error=_sup_error(P, Q, window),
                      residual=P.tail_gap_left, iterations=Q.iterations)
    return table


def convergence_study_nonlocal_local(report: SubcaseReport, anchor_value,
                                     h_sequence=(0.5, 0.25, 0.125),
                                     X_min=None, X_max=None,
                                     dz=0.0002) -> ResultTable:
    """Sup-error of the nonlocal profiles against U as the horizon shrinks."""
    if any(b >= a for a, b in zip(h_sequence, h_sequence[1:])):
        raise ValidationError("the horizon sequence must be strictly decreasing")
    params = report.params
    h_max = max(h_sequence)
    if X_min is None:
        X_min = -20.0 * h_max
    if X_max is None:
        X_max = 20.0 * h_max
    U = solve_U(report, anchor_value, X_min=X_min, X_max=X_max, dz=dz)
    anchor = U.anchor
    window = 10.0 * h_max
    table = ResultTable(columns=("parameter", "sup_error", "residual",
                                 "iterations"))
    for h in h_sequence:
        rep = SubcaseReport(
            subcase=report.subcase, rho_minus=report.rho_minus,
            rho_plus=report.rho_plus, fbar=report.fbar,
            V_minus=report.V_minus, V_plus=report.V_plus,
            verdict=report.verdict, stability=report.stability,
            crit=report.crit, params=params.with_horizon(h),
        )
        P = build_profile(rep, anchor, X_min=X_min, X_max=X_max, dz=dz)
        table.add_row(parameter=h, sup_error=_sup_error(P, U, window),
                      residual=P.tail_gap_left, iterations=0)
    return table
