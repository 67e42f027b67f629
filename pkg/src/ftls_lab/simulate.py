"""Time integration of the truncated follow-the-leaders particle system.

The road carries finitely many tracked cars.  Ahead of the last car the
density is extended by a constant ghost chain at the right asymptotic value,
so every tracked car has a fully covered averaging window; behind the first
car nothing is needed because the dynamics only look forward.

Two right-hand sides are available: the main model averages the *speed law*
over the window ahead, the alternative model averages the *density* first and
then applies the speed law.  The alternative model can push discrete
densities above 1 (cars crashing); such events are recorded and integration
continues.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DomainError,
    StepSizeError,
    ValidationError,
    WindowTooSmallError,
)
from .model import Kernel, ModelParams

CFL_SAFETY = 0.2
DEFAULT_DT_FACTOR = 0.1


def kernel_cumulative(kernel: Kernel, s):
    """Vectorized exact antiderivative of the kernel weight, clipped to [0, h]."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, kernel.h)
    if kernel.kind == "linear":
        return s * (2.0 / kernel.h) - s * s / kernel.h**2
    nodes = np.asarray(kernel.nodes)
    vals = np.asarray(kernel.values)
    seg_mass = 0.5 * (vals[:-1] + vals[1:]) * np.diff(nodes)
    cum_at_nodes = np.concatenate([[0.0], np.cumsum(seg_mass)])
    idx = np.clip(np.searchsorted(nodes, s, side="right") - 1, 0, len(nodes) - 2)
    a, b = nodes[idx], nodes[idx + 1]
    va, vb = vals[idx], vals[idx + 1]
    t = s - a
    vh = va + (vb - va) * t / (b - a)
    return cum_at_nodes[idx] + 0.5 * (va + vh) * t


@dataclass
class StepDensity:
    """Right-open piecewise-constant density built from car positions."""

    breaks: np.ndarray   # car positions, strictly increasing
    values: np.ndarray   # one value per car; values[i] holds on [breaks[i], breaks[i+1])
    right_value: float   # constant extension beyond the last car

    def __call__(self, x):
        scalar = np.ndim(x) == 0
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.breaks, x, side="right") - 1
        out = np.where(
            idx >= len(self.breaks) - 1,
            self.right_value,
            self.values[np.clip(idx, 0, len(self.values) - 1)],
        )
        out = np.where(idx < 0, self.values[0], out)
        return float(out) if scalar else out


@dataclass
class ParticleState:
    """Ordered car positions on a truncated index window."""

    t: float
    z: np.ndarray
    params: ModelParams
    rho_right: float          # ghost-chain density ahead of the last car
    i_min: int = 0

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        if np.any(np.diff(self.z) <= 0):
            raise ValidationError("car positions must be strictly increasing")
        if not 0.0 < self.rho_right <= 1.0:
            raise ValidationError("ghost density must lie in (0, 1]")

    @property
    def i_max(self):
        return self.i_min + len(self.z) - 1

    def densities(self):
        """Discrete density of every tracked car (last one sees the ghost chain)."""
        ell = self.params.ell
        return np.concatenate([ell / np.diff(self.z), [self.rho_right]])

    def copy_with(self, t, z):
        new = object.__new__(ParticleState)
        new.t = t
        new.z = z
        new.params = self.params
        new.rho_right = self.rho_right
        new.i_min = self.i_min
        return new


def discrete_density(state: ParticleState, i: int) -> float:
    """Car length over headway for car i."""
    if not state.i_min <= i <= state.i_max:
        raise DomainError(f"car index {i} outside window [{state.i_min}, {state.i_max}]")
    k = i - state.i_min
    if k == len(state.z) - 1:
        return state.rho_right
    return state.params.ell / (state.z[k + 1] - state.z[k])


def piecewise_density(state: ParticleState) -> StepDensity:
    """The step-function density generated by the current car positions."""
    return StepDensity(breaks=state.z, values=state.densities(),
                       right_value=state.rho_right)


def average_velocity(x, rho_step: StepDensity, params: ModelParams) -> float:
    """Kernel-weighted average of speed-limit times speed-law over [x, x+h].

    The integrand is piecewise polynomial between car positions and the
    speed-limit jump at 0, so each piece is integrated exactly through the
    kernel antiderivative.
    """
    h = params.kernel.h
    Vm, Vp = params.road.V_minus, params.road.V_plus
    cumulative = params.kernel.cumulative
    phi = params.law.phi
    end = x + h
    breaks = rho_step.breaks
    k = int(np.searchsorted(breaks, x, side="right")) - 1
    total = 0.0
    lo = x
    n = len(breaks)
    while lo < end:
        hi = breaks[k + 1] if 0 <= k + 1 < n else np.inf
        hi = min(hi, end)
        if k < 0:
            val = rho_step.values[0]
        elif k >= n - 1:
            val = rho_step.right_value
        else:
            val = rho_step.values[k]
        c = min(max(0.0, lo), hi)
        mass = Vm * (cumulative(c - x) - cumulative(lo - x)) + \
            Vp * (cumulative(hi - x) - cumulative(c - x))
        total += phi(val) * mass
        lo = hi
        k += 1
    return total


def _padded_cells(state: ParticleState):
    """Positions extended by the ghost chain, with per-cell densities."""
    params = state.params
    h = params.kernel.h
    gap_r = params.ell / state.rho_right
    z = state.z
    n_ghost = int(np.ceil(h / gap_r)) + 2
    zpad = np.concatenate([z, z[-1] + gap_r * np.arange(1, n_ghost + 1)])
    # widest window measured in cells, then make sure the pad is long enough
    ends = z + h
    j_end = np.searchsorted(zpad, ends, side="left")
    k_max = int((j_end - np.arange(len(z))).max())
    if len(zpad) < len(z) + k_max + 1:
        extra = len(z) + k_max + 1 - len(zpad)
        zpad = np.concatenate([zpad, zpad[-1] + gap_r * np.arange(1, extra + 1)])
    rho = params.ell / np.diff(zpad)
    return zpad, rho, k_max


def _window_masses(state, weighted_by_speed_limit):
    """Per-car sum over window cells of kernel mass times phi(cell density).

    With speed-limit weighting this is the main-model average velocity; without
    it (and phi replaced by identity) it is the averaged density of the
    alternative model.  Returns the accumulated array.
    """
    params = state.params
    h = params.kernel.h
    Vm, Vp = params.road.V_minus, params.road.V_plus
    kernel = params.kernel
    z = state.z
    zpad, rho, k_max = _padded_cells(state)
    if weighted_by_speed_limit:
        cell_val = params.law.phi(rho)
    else:
        cell_val = rho
    n = len(z)
    end = z + h
    acc = np.zeros(n)
    for k in range(k_max):
        a = zpad[k:k + n]
        b = zpad[k + 1:k + 1 + n]
        lo = np.maximum(a, z)
        hi = np.minimum(b, end)
        live = hi > lo
        if not live.any():
            break
        lo = np.where(live, lo, z)
        hi = np.where(live, hi, z)
        if weighted_by_speed_limit:
            c = np.minimum(np.maximum(lo, 0.0), hi)
            mass = Vm * (kernel_cumulative(kernel, c - z) - kernel_cumulative(kernel, lo - z)) \
                + Vp * (kernel_cumulative(kernel, hi - z) - kernel_cumulative(kernel, c - z))
        else:
            mass = kernel_cumulative(kernel, hi - z) - kernel_cumulative(kernel, lo - z)
        acc += np.where(live, cell_val[k:k + n] * mass, 0.0)
    return acc


def rhs_main(state: ParticleState) -> np.ndarray:
    """Speed of every tracked car under the main (speed-averaging) model."""
    return _window_masses(state, weighted_by_speed_limit=True)


def rhs_alternative(state: ParticleState) -> np.ndarray:
    """Speed under the alternative (density-averaging) model."""
    rho_star = _window_masses(state, weighted_by_speed_limit=False)
    V = state.params.road(state.z)
    return V * state.params.law.phi(rho_star)


@dataclass
class Trajectory:
    """Sampled snapshots of one integration run."""

    times: list = field(default_factory=list)
    positions: list = field(default_factory=list)
    densities: list = field(default_factory=list)
    crashes: list = field(default_factory=list)   # (t, car index, density)
    params: ModelParams = None
    i_min: int = 0
    rho_right: float = None

    def append(self, state: ParticleState):
        self.times.append(state.t)
        self.positions.append(state.z.copy())
        self.densities.append(state.densities())

    def state_at(self, k) -> ParticleState:
        return ParticleState(t=self.times[k], z=self.positions[k].copy(),
                             params=self.params, rho_right=self.rho_right,
                             i_min=self.i_min)

    def final_state(self) -> ParticleState:
        return self.state_at(len(self.times) - 1)

    def max_density(self):
        return max(float(r.max()) for r in self.densities)


def default_dt(params: ModelParams) -> float:
    return DEFAULT_DT_FACTOR * params.ell / params.road.V_max


def integrate(state: ParticleState, model="main", dt=None, t_final=1.0,
              sample_times=None, band_start=None) -> Trajectory:
    """Classical RK4 integration with fixed step.

    Snapshots are stored at the step boundaries closest to ``sample_times``
    and at every step once ``band_start`` is passed.  For the alternative
    model a density above 1 after a step is logged as a crash event and the
    run continues.
    """
    params = state.params
    if dt is None:
        dt = default_dt(params)
    bound = CFL_SAFETY * params.ell / params.road.V_max
    if dt > bound * (1.0 + 1e-12):
        raise StepSizeError(
            f"dt={dt} exceeds the car-length safety bound {bound}"
        )
    rhs = rhs_main if model == "main" else rhs_alternative
    if model not in ("main", "alternative"):
        raise ValidationError(f"unknown model {model!r}")

    n_steps = max(1, int(round((t_final - state.t) / dt)))
    dt = (t_final - state.t) / n_steps
    traj = Trajectory(params=params, i_min=state.i_min, rho_right=state.rho_right)
    sample_times = sorted(sample_times) if sample_times is not None else []
    next_sample = 0

    def want_snapshot(t):
        nonlocal next_sample
        take = False
        while next_sample < len(sample_times) and sample_times[next_sample] <= t + 0.5 * dt:
            next_sample += 1
            take = True
        if band_start is not None and t >= band_start - 1e-12:
            take = True
        return take

    if want_snapshot(state.t) or not sample_times:
        traj.append(state)

    z = state.z.copy()
    t = state.t
    cur = state.copy_with(t, z)
    for _ in range(n_steps):
        k1 = rhs(cur)
        k2 = rhs(cur.copy_with(t + 0.5 * dt, z + 0.5 * dt * k1))
        k3 = rhs(cur.copy_with(t + 0.5 * dt, z + 0.5 * dt * k2))
        k4 = rhs(cur.copy_with(t + dt, z + dt * k3))
        z = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += dt
        if not np.all(np.isfinite(z)):
            raise ValidationError(f"non-finite positions at t={t}; integration aborted")
        cur = cur.copy_with(t, z)
        rho = cur.densities()
        if model == "alternative":
            over = np.nonzero(rho > 1.0)[0]
            for k in over:
                traj.crashes.append((t, int(k) + state.i_min, float(rho[k])))
        if want_snapshot(t):
            traj.append(cur)
    if traj.times and traj.times[-1] < t:
        traj.append(cur)
    return traj


def riemann_init(params: ModelParams, rho_minus, rho_plus, c0=0.0,
                 N_left=None, N_right=None) -> ParticleState:
    """Riemann-like initial placement: uniform spacing on each side of c0."""
    for name, r in (("rho_minus", rho_minus), ("rho_plus", rho_plus)):
        if not 0.0 < r <= 1.0:
            raise DomainError(f"{name} must lie in (0, 1], got {r}")
    h = params.kernel.h
    ell = params.ell
    if N_left is None:
        N_left = int(np.ceil(20.0 * h / ell))
    if N_right is None:
        N_right = int(np.ceil(20.0 * h / ell))
    min_span = 5.0 * h
    if N_right * ell / rho_plus < min_span or N_left * ell / rho_minus < min_span:
        raise WindowTooSmallError(
            f"window must span at least {min_span} on each side of the jump"
        )
    i = np.arange(-N_left, N_right)
    z = np.where(i >= 0, i * ell / rho_plus, i * ell / rho_minus) + c0
    return ParticleState(t=0.0, z=z, params=params, rho_right=rho_plus,
                         i_min=-N_left)
