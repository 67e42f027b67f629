"""Quantitative checks: periodicity, ordering, stability, attraction basins.

Every check is a pure function from immutable inputs to numbers, so that the
same code serves both the test suite and the command-line reports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, GridMismatchError
from .model import Subcase, asymptotic_roots, classify
from .profiles import Profile, build_profile, leader, profile_v_star, sample_chain
from .simulate import ParticleState, Trajectory

_GAUSS_A = 0.5 - 0.5 / np.sqrt(3.0)
_GAUSS_B = 0.5 + 0.5 / np.sqrt(3.0)


def period_check(P: Profile, x_samples, subintervals=64) -> float:
    """Max relative deviation of the car-passage period from ell/fbar.

    The time a car needs to advance one headway is the integral of the
    reciprocal average velocity from x to its leader; on a stationary profile
    this must equal ell/fbar regardless of x.
    """
    ell = P.params.ell
    expected = ell / P.fbar
    worst = 0.0
    for x in np.atleast_1d(x_samples):
        x = float(x)
        x_lead = leader(P, x)
        edges = np.linspace(x, x_lead, subintervals + 1)
        total = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            for frac in (_GAUSS_A, _GAUSS_B):
                z = a + frac * (b - a)
                chain = sample_chain(P, z)
                total += 0.5 * (b - a) / profile_v_star(P, z, chain)
        worst = max(worst, abs(total / expected - 1.0))
    return worst


def ordering_check(P1: Profile, P2: Profile, dead_band=1e-12) -> bool:
    """True iff the two profiles never cross (constant sign of the difference)."""
    if len(P1.x) != len(P2.x) or not np.allclose(P1.x, P2.x, atol=1e-12):
        raise GridMismatchError("profiles live on different grids")
    diff = P1.values - P2.values
    above = np.any(diff > dead_band)
    below = np.any(diff < -dead_band)
    return not (above and below)


@dataclass
class StabilityTrace:
    """Distance to a profile and right-side oscillation along a trajectory."""

    times: np.ndarray
    distances: np.ndarray      # sup_i |P(z_i) - rho_i| inside the metric window
    oscillations: np.ndarray   # max rho - min rho over cars with 0 < z <= 10h
    anchor: float = float("nan")

    def d0(self):
        return float(self.distances[0])

    def d_final(self):
        return float(self.distances[-1])

    def oscillation_persists(self, factor=0.5) -> bool:
        peak = float(np.max(self.oscillations))
        return float(self.oscillations[-1]) > factor * peak


def stability_trace(traj: Trajectory, P: Profile, window=None) -> StabilityTrace:
    """Measure the approach of a trajectory to a candidate profile."""
    h = traj.params.kernel.h
    if window is None:
        window = 10.0 * h
    times, dists, oscs = [], [], []
    for t, z, rho in zip(traj.times, traj.positions, traj.densities):
        inside = np.abs(z) <= window
        if not inside.any():
            continue
        dists.append(float(np.max(np.abs(P(z[inside]) - rho[inside]))))
        # oscillation travels rightward, so measure over all of x > 0 up to
        # the truncation boundary layer
        right = (z > 0.0) & (z <= z[-1] - 5.0 * h)
        if right.any():
            oscs.append(float(rho[right].max() - rho[right].min()))
        else:
            oscs.append(0.0)
        times.append(t)
    return StabilityTrace(times=np.array(times), distances=np.array(dists),
                          oscillations=np.array(oscs), anchor=P.anchor)


def closest_profile(state: ParticleState, profiles, window=None):
    """The family member sup-closest to the state inside the metric window."""
    h = state.params.kernel.h
    if window is None:
        window = 10.0 * h
    z = state.z
    rho = state.densities()
    inside = np.abs(z) <= window
    best = None
    best_d = np.inf
    for P in profiles:
        d = float(np.max(np.abs(P(z[inside]) - rho[inside])))
        if d < best_d:
            best, best_d = P, d
    return best, best_d


def best_fit_profile(state: ParticleState, report, anchors,
                     X_min=None, X_max=None, dz=0.0005, window=None):
    """Scan a family of anchors for the profile closest to the state.

    Empirical selection: the theory promises attraction to *some* family
    member but gives no formula for which one.  Returns (profile, distance).
    """
    family = [build_profile(report, a, X_min=X_min, X_max=X_max, dz=dz)
              for a in anchors]
    return closest_profile(state, family, window=window)


@dataclass
class RegionD:
    """The attraction band between the lowest and highest family profiles."""

    lower: Profile   # anchored at the lower right-side flux root
    upper: Profile   # anchored at the right asymptote

    def __post_init__(self):
        if np.any(self.lower.values > self.upper.values):
            raise DomainError("envelopes must be ordered")
        # strict separation is only checkable where the tails have not yet
        # collapsed onto the common asymptote at double precision
        h = self.lower.params.kernel.h
        core = np.abs(self.lower.x) <= 10.0 * h
        if np.any(self.lower.values[core] >= self.upper.values[core]):
            raise DomainError("envelopes must be strictly ordered near the jump")


def region_D(report, upper_anchor=None, X_min=None, X_max=None,
             dz=0.0005) -> RegionD:
    """Build both envelopes of the attraction band for a 1B/2B subcase.

    For a downward speed jump the upper envelope is anchored at the right
    asymptote.  For an upward jump that extreme family member need not exist
    (high anchors can blow up before reaching the left asymptote), so callers
    must pick an admissible upper anchor themselves.
    """
    if report.subcase not in (Subcase.S1B, Subcase.S2B):
        raise DomainError(
            f"the attraction band is defined for the attracting subcases, "
            f"not {report.subcase.value}"
        )
    if upper_anchor is None:
        upper_anchor = report.rho_plus
    params = report.params
    low_root, _ = asymptotic_roots(report.fbar, params.road.V_plus, params.law)
    # lower envelope: the unique profile of the companion subcase that ends
    # exactly at the lower flux root on the right
    rep_low = classify(params, report.rho_minus, low_root)
    lower = build_profile(rep_low, low_root, X_min=X_min, X_max=X_max, dz=dz)
    upper = build_profile(report, upper_anchor, X_min=X_min, X_max=X_max,
                          dz=dz)
    return RegionD(lower=lower, upper=upper)


def region_D_membership(D: RegionD, state: ParticleState, tol=0.0):
    """Boolean per car: strictly above the lower envelope, at most the upper."""
    z = state.z
    rho = state.densities()
    return (rho > D.lower(z) - tol) & (rho <= D.upper(z) + tol)


def follower(P: Profile, z_leader, tol=1e-12) -> float:
    """The unique x with leader(P, x) = z_leader, by bisection."""
    ell = P.params.ell
    p_min = min(float(np.min(P.values)), P.rho_minus, P.rho_plus)
    lo = z_leader - ell / (0.5 * p_min)
    hi = z_leader - 0.5 * ell

    def g(x):
        return leader(P, x) - z_leader

    glo, ghi = g(lo), g(hi)
    if glo > 0 or ghi < 0:
        raise DomainError("follower bracket failed; profile values degenerate")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if gm == 0.0 or hi - lo < tol:
            return mid
        if gm > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def generate_distribution(P: Profile, z0, N_forward, N_backward) -> ParticleState:
    """Car positions whose discrete densities sample the profile exactly."""
    ell = P.params.ell
    fwd = [float(z0)]
    for _ in range(N_forward):
        fwd.append(leader(P, fwd[-1]))
    bwd = []
    z = float(z0)
    for _ in range(N_backward):
        z = follower(P, z)
        bwd.append(z)
    z_all = np.array(bwd[::-1] + fwd)
    return ParticleState(t=0.0, z=z_all, params=P.params,
                         rho_right=P.rho_plus, i_min=-N_backward)


def exponential_tail_fit(P: Profile, side="right", gap_window=(1e-9, 0.02)):
    """Log-linear fit of the tail gap; returns (slope, r_squared).

    Fits only nodes whose gap to the asymptote lies inside gap_window: large
    gaps belong to the transition layer, tiny ones are discretization noise.
    """
    lo, hi = gap_window
    if side == "right":
        mask = P.x > 0.0
        gap = np.abs(P.values[mask] - P.rho_plus)
    else:
        mask = P.x < 0.0
        gap = np.abs(P.values[mask] - P.rho_minus)
    xs = P.x[mask]
    keep = (gap > lo) & (gap < hi)
    xs, gap = xs[keep], gap[keep]
    if len(xs) < 10:
        raise DomainError("tail too flat for a meaningful exponential fit")
    logg = np.log(gap)
    slope, intercept = np.polyfit(xs, logg, 1)
    fitted = slope * xs + intercept
    ss_res = float(np.sum((logg - fitted) ** 2))
    ss_tot = float(np.sum((logg - logg.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    if side == "right":
        slope = -slope   # decay rate is positive when the gap shrinks outward
    return float(slope), float(r2)
