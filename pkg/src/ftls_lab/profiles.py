"""Stationary wave profiles by backward method of steps.

A profile P is the standing transition layer across the speed-limit jump: the
discrete density of a car sitting at x equals P(x) for all time.  P solves a
delay integro-differential equation whose delay looks *forward* (each car
watches its leaders), so the equation is integrated *backward* in x: every
right-hand-side evaluation only needs values at arguments at least one car
length ahead of the current node, which are already known.

The same marching core builds the uniform-road building block W (no jump,
single speed limit), which seeds the infinite families of the attracting
subcases.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    AnchorError,
    BlowUpError,
    CoverageError,
    DomainError,
    NoProfileError,
    StepSizeError,
    ValidationError,
)
from .model import (
    ModelParams,
    RoadCondition,
    Subcase,
    SubcaseReport,
    Verdict,
    _bisect,
    asymptotic_roots,
)

TAIL_TOL = 1e-4
DEFAULT_DZ = 0.0002
# W seed sits this fraction of the root gap below rho_high; a large offset
# leaves O(offset) derivative kinks echoing down the backbone at delay
# intervals, so it is kept far below the discretization error
SEED_OFFSET_FACTOR = 1e-7


def make_grid(X_min, X_max, dz):
    """Uniform grid containing 0 as a node."""
    if dz <= 0 or X_min >= 0 or X_max <= 0:
        raise ValidationError("grid must straddle 0 with a positive step")
    n_left = int(round(-X_min / dz))
    n_right = int(round(X_max / dz))
    return np.arange(-n_left, n_right + 1) * dz


@dataclass
class Profile:
    """Grid function P on [X_min, X_max] with asymptotic tags."""

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
    tail_gap_right: float = float("nan")

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if len(self.x) != len(self.values):
            raise ValidationError("grid and values must have equal length")

    def __call__(self, xq):
        """Linear interpolation; constant extrapolation by the asymptotes."""
        scalar = np.ndim(xq) == 0
        out = np.interp(np.asarray(xq, dtype=float), self.x, self.values,
                        left=self.rho_minus, right=self.rho_plus)
        return float(out) if scalar else out

    def to_dict(self):
        return {
            "rho_minus": self.rho_minus,
            "rho_plus": self.rho_plus,
            "fbar": self.fbar,
            "dz": self.dz,
            "anchor": self.anchor,
            "subcase": self.subcase.value if self.subcase is not None else None,
            "tail_gap_left": self.tail_gap_left,
            "tail_gap_right": self.tail_gap_right,
        }


@dataclass
class CarChain:
    """Forward car positions sampled from a profile, starting at the anchor."""

    anchor: float
    nodes: np.ndarray    # strictly increasing, gaps >= ell
    values: np.ndarray   # profile value at each node


def leader(P: Profile, x) -> float:
    """Position of the car ahead of a car sitting at x."""
    p = P(x)
    if p <= 0.0:
        raise DomainError(f"profile value must be positive at {x}")
    return x + P.params.ell / p


def sample_chain(P: Profile, x) -> CarChain:
    """Build the forward chain from x until it covers x + ell/P(x) + h."""
    ell = P.params.ell
    h = P.params.kernel.h
    nodes = [float(x)]
    values = [P(x)]
    target = x + ell / values[0] + h
    while nodes[-1] < target:
        nxt = nodes[-1] + ell / values[-1]
        nodes.append(nxt)
        values.append(P(nxt))
    return CarChain(anchor=float(x), nodes=np.array(nodes),
                    values=np.array(values))


def _vstar_chain(nodes, values, w_start, params: ModelParams) -> float:
    """Average velocity over [w_start, w_start+h] against the chain step density.

    Exact piecewise quadrature: the kernel antiderivative is evaluated at the
    chain nodes and at the speed-limit jump.
    """
    h = params.kernel.h
    Vm, Vp = params.road.V_minus, params.road.V_plus
    cumulative = params.kernel.cumulative
    phi = params.law.phi
    end = w_start + h
    n = len(nodes)
    # first cell whose right edge is beyond w_start
    k = int(np.searchsorted(nodes, w_start, side="right")) - 1
    if k < 0:
        k = 0
    total = 0.0
    lo = w_start
    while lo < end - 1e-15:
        if k + 1 >= n:
            raise CoverageError(
                f"chain ends at {nodes[-1]} but the window reaches {end}"
            )
        hi = min(nodes[k + 1], end)
        if hi > lo:
            c = min(max(0.0, lo), hi)
            mass = Vm * (cumulative(c - w_start) - cumulative(lo - w_start)) \
                + Vp * (cumulative(hi - w_start) - cumulative(c - w_start))
            total += phi(values[k]) * mass
        lo = hi
        k += 1
    return total


def profile_v_star(P: Profile, x_eval, chain: CarChain) -> float:
    """Average velocity seen from x_eval through the chain's step density."""
    return _vstar_chain(chain.nodes, chain.values, x_eval, P.params)


def profile_rhs(P: Profile, x) -> float:
    """Slope of the profile equation at x."""
    chain = sample_chain(P, x)
    v1 = _vstar_chain(chain.nodes, chain.values, x, P.params)
    v2 = _vstar_chain(chain.nodes, chain.values, chain.nodes[1], P.params)
    p = chain.values[0]
    return p * p / (P.params.ell * v1) * (v1 - v2)


# ---------------------------------------------------------------------------
# backward marching core
# ---------------------------------------------------------------------------

def _slope(xs, ps, peval, params: ModelParams) -> float:
    """Profile-equation slope with the first chain value forced to ps."""
    ell = params.ell
    h = params.kernel.h
    if not 0.0 < ps < 1.0:
        raise BlowUpError(f"profile left (0, 1) at x={xs}: value {ps}")
    nodes = [xs]
    values = [ps]
    target = xs + ell / ps + h
    zk, pk = xs, ps
    while zk < target:
        zk = zk + ell / pk
        pk = peval(zk)
        if not 0.0 < pk < 1.0:
            raise BlowUpError(f"chain value {pk} outside (0, 1) at {zk}")
        nodes.append(zk)
        values.append(pk)
    v1 = _vstar_chain(nodes, values, xs, params)
    v2 = _vstar_chain(nodes, values, nodes[1], params)
    if v1 <= 0.0:
        raise BlowUpError(f"average velocity vanished at x={xs}")
    return ps * ps / (ell * v1) * (v1 - v2)


def _march_backward(x, vals, j_start, params: ModelParams, right_ext,
                    stop_below=None):
    """Fill vals[j] for j < j_start by RK4 in decreasing x.

    vals[j_start:] must already hold the seed.  Chain lookups during the
    stages always point at arguments at least one car length to the right of
    the current node, which are already computed (requires dz < ell).

    Returns the lowest index filled (useful with stop_below early exit).
    """
    dz = x[1] - x[0]
    if dz >= params.ell:
        raise StepSizeError("grid step must be smaller than the car length")
    x0 = x[0]
    n = len(x)
    inv_dz = 1.0 / dz
    x_hi = x[-1]

    def peval(xq):
        if xq >= x_hi:
            return right_ext
        t = (xq - x0) * inv_dz
        j = int(t)
        return vals[j] + (vals[j + 1] - vals[j]) * (t - j)

    for j in range(j_start, 0, -1):
        xs = x[j]
        ps = vals[j]
        k1 = _slope(xs, ps, peval, params)
        k2 = _slope(xs - 0.5 * dz, ps - 0.5 * dz * k1, peval, params)
        k3 = _slope(xs - 0.5 * dz, ps - 0.5 * dz * k2, peval, params)
        k4 = _slope(xs - dz, ps - dz * k3, peval, params)
        nxt = ps - (dz / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not 0.0 < nxt < 1.0:
            raise BlowUpError(f"profile left (0, 1) at x={x[j - 1]}: value {nxt}")
        vals[j - 1] = nxt
        if stop_below is not None and nxt <= stop_below:
            return j - 1
    return 0


def solve_backward(x, seed_vals, j_zero, params: ModelParams, rho_minus,
                   rho_plus) -> tuple:
    """March the seeded grid from x[j_zero] down to x[0]; returns (vals, gap)."""
    vals = np.full(len(x), np.nan)
    vals[j_zero:] = seed_vals
    _march_backward(x, vals, j_zero, params, right_ext=rho_plus)
    gap = abs(vals[0] - rho_minus)
    if gap > TAIL_TOL:
        warnings.warn(
            f"left tail gap {gap:.3e} exceeds {TAIL_TOL}; "
            "consider a larger domain",
            stacklevel=2,
        )
    return vals, gap


# ---------------------------------------------------------------------------
# uniform-road building block W
# ---------------------------------------------------------------------------

_W_CACHE = {}


def _uniform_backbone(V, fbar, params: ModelParams, dz):
    """Monotone connecting profile on a uniform road at speed limit V.

    Seeded just below the attracting right asymptote and integrated backward;
    the backward flow contracts onto the connecting orbit.  Returned on its
    own grid, unshifted; the usable (marched) part is x <= 0.
    """
    key = (V, fbar, params.ell, params.kernel, params.law.kind, dz)
    if key in _W_CACHE:
        return _W_CACHE[key]
    law = params.law
    rho_low, rho_high = asymptotic_roots(fbar, V, law)
    if rho_high - rho_low < 1e-10:
        raise DomainError("flux level leaves no room for a connecting profile")
    h = params.kernel.h
    ell = params.ell
    eps = SEED_OFFSET_FACTOR * (rho_high - rho_low)
    uni = ModelParams(ell=ell, kernel=params.kernel,
                      road=RoadCondition(V, V), law=law)
    # the stored seed is a single cell just below the attracting asymptote;
    # averaging windows poke beyond it into the constant rho_high extension,
    # which is what kicks the backward flow off the constant equilibrium
    X_left = -120.0 * h   # generous; early exit once the left tail settles
    x = make_grid(X_left, dz, dz)
    j_zero = len(x) - 2
    vals = np.full(len(x), np.nan)
    vals[j_zero:] = rho_high - eps
    lowest = _march_backward(x, vals, j_zero, uni, right_ext=rho_high,
                             stop_below=rho_low + 1e-9)
    backbone = (x[lowest:j_zero + 1].copy(), vals[lowest:j_zero + 1].copy(),
                rho_low, rho_high)
    _W_CACHE[key] = backbone
    return backbone


def uniform_profile_W(V, fbar, params: ModelParams, anchor_value,
                      X_min=None, X_max=None, dz=DEFAULT_DZ) -> Profile:
    """Uniform-road monotone profile shifted so that P(0) = anchor_value."""
    h = params.kernel.h
    if X_min is None:
        X_min = -40.0 * h
    if X_max is None:
        X_max = 40.0 * h
    bx, bv, rho_low, rho_high = _uniform_backbone(V, fbar, params, dz)
    if not rho_low < anchor_value < rho_high:
        raise AnchorError(
            f"anchor {anchor_value} must lie strictly between the roots "
            f"({rho_low}, {rho_high})"
        )
    x_a = _locate_on_backbone(bx, bv, anchor_value)
    x = make_grid(X_min, X_max, dz)
    vals = np.interp(x + x_a, bx, bv, left=rho_low, right=rho_high)
    prof = Profile(x=x, values=vals, rho_minus=rho_low, rho_plus=rho_high,
                   params=ModelParams(ell=params.ell, kernel=params.kernel,
                                      road=RoadCondition(V, V),
                                      law=params.law),
                   fbar=fbar, dz=dz, anchor=anchor_value,
                   subcase=Subcase.UNIFORM_WAVE,
                   tail_gap_left=abs(vals[0] - rho_low),
                   tail_gap_right=abs(vals[-1] - rho_high))
    return prof


def _locate_on_backbone(bx, bv, target):
    """x where the monotone increasing backbone equals target."""
    if target <= bv[0] or target >= bv[-1]:
        raise AnchorError(
            f"anchor {target} outside the resolved backbone range "
            f"[{bv[0]:.6f}, {bv[-1]:.6f}]"
        )
    j = int(np.searchsorted(bv, target)) - 1
    j = max(0, min(j, len(bv) - 2))
    t = (target - bv[j]) / (bv[j + 1] - bv[j])
    return bx[j] + t * (bx[j + 1] - bx[j])


# ---------------------------------------------------------------------------
# full profile construction
# ---------------------------------------------------------------------------

_INFINITE = (Subcase.S1B, Subcase.S2B, Subcase.UNIFORM_WAVE)
_UNIQUE = (Subcase.S1A, Subcase.S2A, Subcase.UNIFORM_CONSTANT)


def build_profile(report: SubcaseReport, anchor_value=None,
                  X_min=None, X_max=None, dz=DEFAULT_DZ) -> Profile:
    """Seed on x >= 0 and march backward across the jump.

    Unique subcases must be anchored at the right asymptote.  Attracting
    subcases accept any anchor between the lower root of the right-side flux
    and the right asymptote; each anchor selects one member of the family.
    """
    if report.verdict == Verdict.NONE:
        raise NoProfileError(
            f"subcase {report.subcase.value} admits no stationary wave profile "
            f"(verdict {report.verdict.value})"
        )
    params = report.params
    if params is None:
        raise ValidationError("classification report carries no model parameters")
    h = params.kernel.h
    if X_min is None:
        X_min = -40.0 * h
    if X_max is None:
        X_max = 40.0 * h
    rho_minus, rho_plus = report.rho_minus, report.rho_plus
    fbar = report.fbar
    if anchor_value is None:
        anchor_value = rho_plus

    if report.subcase in _UNIQUE:
        if abs(anchor_value - rho_plus) > 1e-9:
            raise AnchorError(
                f"subcase {report.subcase.value} has a unique profile, "
                f"anchored at the right asymptote {rho_plus}"
            )
        anchor_value = rho_plus
        constant_seed = True
    elif report.subcase in _INFINITE:
        low_root, _ = asymptotic_roots(fbar, params.road.V_plus, params.law)
        if not low_root < anchor_value <= rho_plus + 1e-12:
            raise AnchorError(
                f"anchor {anchor_value} outside the admissible range "
                f"({low_root}, {rho_plus}]"
            )
        constant_seed = anchor_value >= rho_plus - 1e-9
    else:
        raise NoProfileError(
            f"subcase {report.subcase.value} is not handled by the profile solver"
        )

    x = make_grid(X_min, X_max, dz)
    j_zero = int(np.searchsorted(x, 0.0))
    if constant_seed:
        seed = np.full(len(x) - j_zero, rho_plus)
        anchor_value = rho_plus
    else:
        W = uniform_profile_W(params.road.V_plus, fbar, params, anchor_value,
                              X_min=X_min, X_max=X_max, dz=dz)
        seed = W.values[j_zero:].copy()
    vals, gap_left = solve_backward(x, seed, j_zero, params, rho_minus, rho_plus)
    return Profile(x=x, values=vals, rho_minus=rho_minus, rho_plus=rho_plus,
                   params=params, fbar=fbar, dz=dz, anchor=anchor_value,
                   subcase=report.subcase,
                   tail_gap_left=gap_left,
                   tail_gap_right=abs(vals[-1] - rho_plus))


def z_flat(P: Profile) -> float:
    """The position whose leader sits exactly at the left edge -h of the jump window."""
    ell = P.params.ell
    h = P.params.kernel.h
    p_min = min(float(np.min(P.values)), P.rho_minus, P.rho_plus)

    def g(z):
        return z + ell / P(z) + h

    lo = -h - ell / (0.5 * p_min)
    hi = -h - 0.5 * ell
    return _bisect(g, lo, hi)


def equation_residual(P: Profile, stride=1) -> float:
    """Max over interior nodes of |centered-difference slope - equation slope|.

    The node at the speed jump is skipped: the profile derivative genuinely
    jumps there, so a centered difference across it measures the kink, not
    the solution quality.
    """
    worst = 0.0
    vals = P.values
    for j in range(1, len(P.x) - 1, stride):
        if abs(P.x[j]) < 0.5 * P.dz:
            continue
        deriv = (vals[j + 1] - vals[j - 1]) / (2.0 * P.dz)
        worst = max(worst, abs(deriv - profile_rhs(P, P.x[j])))
    return worst
